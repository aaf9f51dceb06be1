//! Matrix kernels used slice by slice in the transformed domain: numerical
//! rank, SVD pseudoinverse, matrix CUR, and the column-pivoted QR that drives
//! index selection.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{McurError, Result};
use crate::tensor::{IndexSet, Scalar};

/// Cut-off below which singular values count as zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Tolerance {
    /// `max(rows, cols) * sigma_max * f64::EPSILON`.
    #[default]
    Default,
    /// Fixed absolute threshold.
    Absolute(f64),
    /// Threshold `factor * sigma_max`.
    Relative(f64),
}

impl Tolerance {
    pub fn threshold(self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match self {
            Tolerance::Default => rows.max(cols) as f64 * sigma_max * f64::EPSILON,
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(f) => f * sigma_max,
        }
    }
}

/// Singular values in non-increasing order.
pub fn singular_values<T: Scalar>(a: &DMatrix<T>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn spectral_norm<T: Scalar>(a: &DMatrix<T>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn numerical_rank<T: Scalar>(a: &DMatrix<T>, tol: Tolerance) -> usize {
    let sv = singular_values(a);
    let Some(&top) = sv.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    let thr = tol.threshold(top, a.nrows(), a.ncols());
    sv.iter().filter(|&&s| s > thr).count()
}

/// Moore-Penrose pseudoinverse through the SVD; singular values at or below
/// the tolerance are dropped. The zero matrix maps to the zero matrix.
pub fn pseudoinverse<T: Scalar>(a: &DMatrix<T>, tol: Tolerance) -> DMatrix<T> {
    let thr = tol.threshold(spectral_norm(a), a.nrows(), a.ncols());
    pseudoinverse_above(a, thr)
}

/// Pseudoinverse keeping only singular values strictly above `thr`.
pub fn pseudoinverse_above<T: Scalar>(a: &DMatrix<T>, thr: f64) -> DMatrix<T> {
    let (m, n) = a.shape();
    if a.is_empty() {
        return DMatrix::zeros(n, m);
    }
    let svd = SVD::new(a.clone(), true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return DMatrix::zeros(n, m);
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut v_scaled = v_t.adjoint();
    for (c, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > thr { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(c).scale_mut(inv);
    }
    v_scaled * u.adjoint()
}

/// Rows `I` and columns `J` of a matrix.
pub fn submatrix<T: Scalar>(a: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// One matrix CUR factorization `A ~ C U^+ R`.
#[derive(Clone, Debug)]
pub struct MatrixCurSlice<T: Scalar> {
    pub c_hat: DMatrix<T>,
    pub u_hat_pinv: DMatrix<T>,
    pub r_hat: DMatrix<T>,
    pub rank_u: usize,
}

impl<T: Scalar> MatrixCurSlice<T> {
    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.c_hat * (&self.u_hat_pinv * &self.r_hat)
    }

    /// `A - C U^+ R`, computed on request.
    pub fn residual(&self, a: &DMatrix<T>) -> DMatrix<T> {
        a - self.reconstruct()
    }
}

pub fn cur_slice<T: Scalar>(
    a: &DMatrix<T>,
    rows: &IndexSet,
    cols: &IndexSet,
    tol: Tolerance,
) -> Result<MatrixCurSlice<T>> {
    if rows.bound() != a.nrows() || cols.bound() != a.ncols() {
        return Err(McurError::dims(format!(
            "index bounds ({}, {}) do not match a {}x{} matrix",
            rows.bound(),
            cols.bound(),
            a.nrows(),
            a.ncols()
        )));
    }
    let all_rows: Vec<usize> = (0..a.nrows()).collect();
    let all_cols: Vec<usize> = (0..a.ncols()).collect();
    let c_hat = submatrix(a, &all_rows, cols.as_slice());
    let r_hat = submatrix(a, rows.as_slice(), &all_cols);
    let u_hat = submatrix(a, rows.as_slice(), cols.as_slice());
    Ok(MatrixCurSlice {
        u_hat_pinv: pseudoinverse(&u_hat, tol),
        rank_u: numerical_rank(&u_hat, tol),
        c_hat,
        r_hat,
    })
}

/// First `k` pivots of a column-pivoted QR of `w`.
///
/// Pivot rule: largest remaining column norm, lowest index on exact ties.
/// Columns are orthogonalized against the chosen pivots with modified
/// Gram-Schmidt plus one reorthogonalization pass.
pub fn pivoted_qr_pivots<T: Scalar>(w: &DMatrix<T>, k: usize) -> Vec<usize> {
    let ncols = w.ncols();
    let k = k.min(ncols);
    let mut work = w.clone();
    let mut basis: Vec<nalgebra::DVector<T>> = Vec::with_capacity(k);
    let mut chosen = vec![false; ncols];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..ncols).filter(|&j| !chosen[j]) {
            let norm = work.column(j).norm_squared();
            if best.is_none_or(|(_, b)| norm > b) {
                best = Some((j, norm));
            }
        }
        let Some((piv, norm_sq)) = best else { break };
        chosen[piv] = true;
        pivots.push(piv);
        if norm_sq == 0.0 {
            continue;
        }
        let mut q = work.column(piv).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&q);
                q.axpy(-proj, b, T::one());
            }
        }
        let qn = q.norm();
        if qn == 0.0 {
            continue;
        }
        q.unscale_mut(qn);
        for j in (0..ncols).filter(|&j| !chosen[j]) {
            let mut col = work.column_mut(j);
            let proj = q.dotc(&col);
            col.axpy(-proj, &q, T::one());
        }
        basis.push(q);
    }
    pivots
}

/// Top `r` eigenvectors of a Hermitian positive semidefinite matrix, ordered
/// by decreasing eigenvalue (ties broken by eigensolver order).
pub fn dominant_eigenvectors<T: Scalar>(gram: DMatrix<T>, r: usize) -> DMatrix<T> {
    let dim = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let r = r.min(dim);
    DMatrix::from_fn(dim, r, |i, c| eig.eigenvectors[(i, order[c])])
}

/// Largest entry by modulus is made real and positive in every column.
pub fn normalize_column_phases<T: Scalar>(vecs: &mut DMatrix<T>) {
    for mut col in vecs.column_iter_mut() {
        let mut best = 0;
        let mut best_mod = -1.0;
        for (i, v) in col.iter().enumerate() {
            let m = v.modulus();
            if m > best_mod {
                best_mod = m;
                best = i;
            }
        }
        if best_mod > 0.0 {
            let lead = col[best];
            let phase = lead.conjugate().unscale(lead.modulus());
            col *= phase;
        }
    }
}
