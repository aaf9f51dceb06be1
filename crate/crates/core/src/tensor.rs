//! Dense third-order tensors viewed as stacks of frontal slices.
//!
//! A [`Tensor3`] of dims `(m, n, p)` holds `p` frontal slices of size `m x n`.
//! Storage is slice-major: the slice index varies slowest, then the column,
//! then the row. Every frontal slice is therefore a contiguous column-major
//! block that maps directly onto an [`nalgebra::DMatrix`], and the whole
//! buffer read as an `(m*n) x p` column-major matrix has one vectorized slice
//! per column. The mode-3 product is a single GEMM against that view.

use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::{ComplexField, DMatrix, DMatrixView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{McurError, Result};
use crate::linalg::{self, Tolerance};
use crate::transforms::TransformMatrix;

pub use nalgebra::Complex;

/// Complex double precision scalar.
pub type Complex64 = Complex<f64>;

/// Tag stored in serialized tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Real64,
    Complex128,
}

/// Scalars a [`Tensor3`] may hold: `f64` and [`Complex64`].
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const KIND: ScalarKind;
}

impl Scalar for f64 {
    const KIND: ScalarKind = ScalarKind::Real64;
}

impl Scalar for Complex64 {
    const KIND: ScalarKind = ScalarKind::Complex128;
}

/// Dense `m x n x p` tensor. Immutable once built.
#[derive(Clone, PartialEq)]
pub struct Tensor3<T> {
    rows: usize,
    cols: usize,
    slices: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor3<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor3")
            .field("dims", &(self.rows, self.cols, self.slices))
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor3<T> {
    pub fn new(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let (m, n, p) = dims;
        if data.len() != m * n * p {
            return Err(McurError::dims(format!(
                "data length {} does not match dims ({m}, {n}, {p})",
                data.len()
            )));
        }
        Ok(Tensor3 {
            rows: m,
            cols: n,
            slices: p,
            data,
        })
    }

    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        Tensor3 {
            rows: m,
            cols: n,
            slices: p,
            data: vec![T::zero(); m * n * p],
        }
    }

    /// Builds a tensor entrywise from `f(i, j, k)`.
    pub fn from_fn(m: usize, n: usize, p: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(m * n * p);
        for k in 0..p {
            for j in 0..n {
                for i in 0..m {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 {
            rows: m,
            cols: n,
            slices: p,
            data,
        }
    }

    /// Stacks equally sized matrices as frontal slices.
    pub fn from_slices(slices: &[DMatrix<T>]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(McurError::dims("cannot stack an empty slice list"));
        };
        let (m, n) = first.shape();
        let mut data = Vec::with_capacity(m * n * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (m, n) {
                return Err(McurError::dims(format!(
                    "slice {k} has shape {:?}, expected ({m}, {n})",
                    s.shape()
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Tensor3 {
            rows: m,
            cols: n,
            slices: slices.len(),
            data,
        })
    }

    /// Repeats a single matrix `p` times along the third mode.
    pub fn broadcast(slice: &DMatrix<T>, p: usize) -> Self {
        let mut data = Vec::with_capacity(slice.len() * p);
        for _ in 0..p {
            data.extend_from_slice(slice.as_slice());
        }
        Tensor3 {
            rows: slice.nrows(),
            cols: slice.ncols(),
            slices: p,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.slices)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[k * self.rows * self.cols + j * self.rows + i]
    }

    fn slice_len(&self) -> usize {
        self.rows * self.cols
    }

    fn slice_data(&self, k: usize) -> &[T] {
        let len = self.slice_len();
        &self.data[k * len..(k + 1) * len]
    }

    /// Borrowed view of frontal slice `k`. Panics when `k >= p`.
    pub fn slice_view(&self, k: usize) -> DMatrixView<'_, T> {
        DMatrixView::from_slice(self.slice_data(k), self.rows, self.cols)
    }

    /// Frontal slice `k` as an owned `m x n` matrix.
    pub fn slice_frontal(&self, k: usize) -> Result<DMatrix<T>> {
        if k >= self.slices {
            return Err(McurError::Index {
                index: k,
                bound: self.slices,
            });
        }
        Ok(self.slice_view(k).into_owned())
    }

    pub fn frontal_slices(&self) -> Vec<DMatrix<T>> {
        (0..self.slices).map(|k| self.slice_view(k).into_owned()).collect()
    }

    /// Lateral slices `A(:, J, :)`.
    pub fn slice_lateral(&self, cols: &IndexSet) -> Result<Self> {
        check_bound("column", cols, self.cols)?;
        Ok(Self::from_fn(self.rows, cols.len(), self.slices, |i, j, k| {
            self.get(i, cols[j], k)
        }))
    }

    /// Horizontal slices `A(I, :, :)`.
    pub fn slice_horizontal(&self, rows: &IndexSet) -> Result<Self> {
        check_bound("row", rows, self.rows)?;
        Ok(Self::from_fn(rows.len(), self.cols, self.slices, |i, j, k| {
            self.get(rows[i], j, k)
        }))
    }

    /// Intersection `A(I, J, :)`.
    pub fn subtensor(&self, rows: &IndexSet, cols: &IndexSet) -> Result<Self> {
        check_bound("row", rows, self.rows)?;
        check_bound("column", cols, self.cols)?;
        Ok(Self::from_fn(rows.len(), cols.len(), self.slices, |i, j, k| {
            self.get(rows[i], cols[j], k)
        }))
    }

    /// `A x_3 M`: applies the `q x p` matrix `M` to every tube.
    pub fn mode3_product(&self, mat: &DMatrix<T>) -> Result<Self> {
        if mat.ncols() != self.slices {
            return Err(McurError::dims(format!(
                "mode-3 product needs {} matrix columns, got {}x{}",
                self.slices,
                mat.nrows(),
                mat.ncols()
            )));
        }
        let q = mat.nrows();
        if self.data.is_empty() {
            return Ok(Self::zeros(self.rows, self.cols, q));
        }
        let unfolded = DMatrixView::from_slice(&self.data, self.slice_len(), self.slices);
        let out = unfolded * mat.transpose();
        Ok(Tensor3 {
            rows: self.rows,
            cols: self.cols,
            slices: q,
            data: Vec::from(out.data),
        })
    }

    /// Slice-by-slice matrix product `A △ B`.
    pub fn facewise_product(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows || self.slices != other.slices {
            return Err(McurError::dims(format!(
                "facewise product of {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let products: Vec<DMatrix<T>> = (0..self.slices)
            .into_par_iter()
            .map(|k| self.slice_view(k) * other.slice_view(k))
            .collect();
        let mut data = Vec::with_capacity(self.rows * other.cols * self.slices);
        for prod in products {
            data.extend(prod.data.as_vec().iter().copied());
        }
        Ok(Tensor3 {
            rows: self.rows,
            cols: other.cols,
            slices: self.slices,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor3<U> {
        Tensor3 {
            rows: self.rows,
            cols: self.cols,
            slices: self.slices,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|x| x * alpha)
    }

    /// Mode-1 unfolding `[A(1) | A(2) | ... | A(p)]`, size `m x (n p)`.
    pub fn unfold_mode1(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(self.rows, self.cols * self.slices, &self.data)
    }

    /// Mode-3 unfolding: row `k` is slice `k` vectorized column-major, size `p x (m n)`.
    pub fn unfold_mode3(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(self.slice_len(), self.slices, &self.data).transpose()
    }

    /// Inverse of [`Tensor3::unfold_mode3`].
    pub fn fold_mode3(mat: &DMatrix<T>, m: usize, n: usize) -> Result<Self> {
        if mat.ncols() != m * n {
            return Err(McurError::dims(format!(
                "cannot fold a {}x{} matrix into slices of {m}x{n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let t = mat.transpose();
        Ok(Tensor3 {
            rows: m,
            cols: n,
            slices: mat.nrows(),
            data: Vec::from(t.data),
        })
    }

    /// Maximum entrywise modulus of `self - other` divided by the largest modulus in `other`.
    pub fn max_rel_deviation(&self, other: &Self) -> f64 {
        assert_eq!(self.dims(), other.dims(), "tensor dims differ");
        let scale = other.max_abs().max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).modulus())
            .fold(0.0, f64::max)
            / scale
    }

    /// `||self - other||_F / ||other||_F`, or the absolute norm if `other` is zero.
    pub fn rel_frobenius_error(&self, other: &Self) -> f64 {
        let diff = (self - other).frobenius_norm();
        let base = other.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }
}

impl Tensor3<f64> {
    pub fn to_complex(&self) -> Tensor3<Complex64> {
        self.map(|x| Complex64::new(x, 0.0))
    }
}

impl Tensor3<Complex64> {
    pub fn real_part(&self) -> Tensor3<f64> {
        self.map(|z| z.re)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

fn check_bound(what: &str, set: &IndexSet, dim: usize) -> Result<()> {
    if set.bound() != dim {
        return Err(McurError::dims(format!(
            "{what} index set has bound {}, tensor dimension is {dim}",
            set.bound()
        )));
    }
    Ok(())
}

impl<T: Scalar> Add for &Tensor3<T> {
    type Output = Tensor3<T>;

    /// Panics on shape mismatch.
    fn add(self, rhs: Self) -> Tensor3<T> {
        assert_eq!(self.dims(), rhs.dims(), "tensor dims differ");
        Tensor3 {
            rows: self.rows,
            cols: self.cols,
            slices: self.slices,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Tensor3<T> {
    type Output = Tensor3<T>;

    /// Panics on shape mismatch.
    fn sub(self, rhs: Self) -> Tensor3<T> {
        assert_eq!(self.dims(), rhs.dims(), "tensor dims differ");
        Tensor3 {
            rows: self.rows,
            cols: self.cols,
            slices: self.slices,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}

/// Sorted, duplicate-free, non-empty set of 0-based indices below `bound`.
/// Serializes as the plain index list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
    bound: usize,
}

impl Serialize for IndexSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices.serialize(s)
    }
}

impl IndexSet {
    /// Sorts `indices`; rejects empty input, duplicates and entries `>= bound`.
    pub fn new(mut indices: Vec<usize>, bound: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(McurError::config("index set must be non-empty"));
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(McurError::config(format!("duplicate index {}", w[0])));
        }
        if let Some(&last) = indices.last() {
            if last >= bound {
                return Err(McurError::Index { index: last, bound });
            }
        }
        Ok(IndexSet { indices, bound })
    }

    /// `{0, 1, ..., bound - 1}`.
    pub fn full(bound: usize) -> Result<Self> {
        Self::new((0..bound).collect(), bound)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }
}

impl std::ops::Index<usize> for IndexSet {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.indices[i]
    }
}

/// Per-slice numerical ranks in the transformed domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Multirank(pub Vec<usize>);

impl Multirank {
    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `max_k ||(A x_3 M)^(k)||_2`.
pub fn spectral_norm_m<T: Scalar>(t: &Tensor3<T>, transform: &TransformMatrix<T>) -> Result<f64> {
    let hat = t.mode3_product(transform.matrix())?;
    Ok(hat_spectral_norm(&hat))
}

/// Largest slice spectral norm of a tensor already in the transformed domain.
pub fn hat_spectral_norm<T: Scalar>(hat: &Tensor3<T>) -> f64 {
    (0..hat.dims().2)
        .into_par_iter()
        .map(|k| linalg::spectral_norm(&hat.slice_view(k).into_owned()))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Numerical ranks of the frontal slices of `A x_3 M`.
pub fn multirank_m<T: Scalar>(
    t: &Tensor3<T>,
    transform: &TransformMatrix<T>,
    tol: Tolerance,
) -> Result<Multirank> {
    let hat = t.mode3_product(transform.matrix())?;
    Ok(hat_multirank(&hat, tol))
}

/// Numerical ranks of the frontal slices of a transformed-domain tensor.
///
/// The cut-off is shared by all slices: `tol` is evaluated against the
/// largest singular value over the whole tensor, so a slice holding only
/// rounding noise counts as rank zero. The default tolerance scales with
/// `max(m, n, q)`, covering the rounding added by the mode-3 transform.
pub fn hat_multirank<T: Scalar>(hat: &Tensor3<T>, tol: Tolerance) -> Multirank {
    let (m, n, q) = hat.dims();
    let spectra: Vec<Vec<f64>> = (0..q)
        .into_par_iter()
        .map(|k| linalg::singular_values(&hat.slice_view(k).into_owned()))
        .collect();
    let top = spectra
        .iter()
        .filter_map(|s| s.first().copied())
        .fold(0.0, f64::max);
    if top == 0.0 {
        return Multirank(vec![0; q]);
    }
    let thr = tol.threshold(top, m.max(q), n);
    Multirank(
        spectra
            .iter()
            .map(|s| s.iter().filter(|&&v| v > thr).count())
            .collect(),
    )
}

/// Shared singular-value cut-off for the slices of a transformed-domain tensor.
pub fn hat_threshold<T: Scalar>(hat: &Tensor3<T>, tol: Tolerance) -> f64 {
    let (m, n, q) = hat.dims();
    tol.threshold(hat_spectral_norm(hat), m.max(q), n)
}
