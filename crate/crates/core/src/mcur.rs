//! The `*_M`-product and the tensor CUR decomposition built on it.
//!
//! All slice-level work happens in the transformed ("hat") domain
//! `A x_3 M`, where each frontal slice gets an ordinary matrix CUR
//! factorization. How the factors are carried back depends on the regime:
//!
//! * invertible / surjective: `U^+ = Û^+ x_3 M^+` and the approximation is
//!   `C *_M U^+ *_M R`;
//! * injective: the product is not associative, so `U^+` stays in the hat
//!   domain and the approximation is `(Ĉ △ Û^+ △ R̂) x_3 M^+`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{McurError, Result};
use crate::linalg::{self, Tolerance};
use crate::tensor::{hat_multirank, hat_threshold, IndexSet, Multirank, Scalar, Tensor3};
use crate::transforms::{Regime, TransformMatrix, TransformSpec};

/// `A *_M B = ((A x_3 M) △ (B x_3 M)) x_3 M^+`.
pub fn m_product<T: Scalar>(
    a: &Tensor3<T>,
    b: &Tensor3<T>,
    transform: &TransformMatrix<T>,
) -> Result<Tensor3<T>> {
    let p = transform.spec().p;
    if a.dims().2 != p || b.dims().2 != p {
        return Err(McurError::dims(format!(
            "m-product operands have {} and {} slices, transform expects {p}",
            a.dims().2,
            b.dims().2
        )));
    }
    let a_hat = a.mode3_product(transform.matrix())?;
    let b_hat = b.mode3_product(transform.matrix())?;
    a_hat
        .facewise_product(&b_hat)?
        .mode3_product(transform.pinv())
}

/// Factors of a `*_M`-CUR decomposition.
#[derive(Clone, Debug)]
pub struct CurFactors<T: Scalar> {
    pub rows: IndexSet,
    pub cols: IndexSet,
    /// `A(:, J, :)`.
    pub c: Tensor3<T>,
    /// `Û^+ x_3 M^+` (p slices), or `Û^+` itself (q slices) when injective.
    pub u_pinv: Tensor3<T>,
    /// `A(I, :, :)`.
    pub r: Tensor3<T>,
    pub spec: TransformSpec,
    pub multirank_a: Multirank,
    pub multirank_u: Multirank,
}

/// Stacked slice pseudoinverses of `Û = A(I, J, :) x_3 M`, all truncated
/// at the cut-off shared across slices.
fn hat_core_pinv<T: Scalar>(u_hat: &Tensor3<T>) -> Result<Tensor3<T>> {
    let q = u_hat.dims().2;
    let thr = hat_threshold(u_hat, Tolerance::Default);
    let slices: Vec<DMatrix<T>> = (0..q)
        .into_par_iter()
        .map(|k| linalg::pseudoinverse_above(&u_hat.slice_view(k).into_owned(), thr))
        .collect();
    Tensor3::from_slices(&slices)
}

pub fn mcur_decompose<T: Scalar>(
    a: &Tensor3<T>,
    transform: &TransformMatrix<T>,
    rows: &IndexSet,
    cols: &IndexSet,
) -> Result<CurFactors<T>> {
    check_slices(a, transform)?;
    let c = a.slice_lateral(cols)?;
    let r = a.slice_horizontal(rows)?;
    let u = a.subtensor(rows, cols)?;

    let a_hat = a.mode3_product(transform.matrix())?;
    let u_hat = u.mode3_product(transform.matrix())?;
    let u_hat_pinv = hat_core_pinv(&u_hat)?;
    let u_pinv = match transform.regime() {
        Regime::Injective => u_hat_pinv,
        Regime::Invertible | Regime::Surjective => u_hat_pinv.mode3_product(transform.pinv())?,
    };
    Ok(CurFactors {
        rows: rows.clone(),
        cols: cols.clone(),
        c,
        u_pinv,
        r,
        spec: *transform.spec(),
        multirank_a: hat_multirank(&a_hat, Tolerance::Default),
        multirank_u: hat_multirank(&u_hat, Tolerance::Default),
    })
}

pub fn mcur_reconstruct<T: Scalar>(
    factors: &CurFactors<T>,
    transform: &TransformMatrix<T>,
) -> Result<Tensor3<T>> {
    if factors.spec != *transform.spec() {
        return Err(McurError::config(format!(
            "factors were built for {:?}, not {:?}",
            factors.spec,
            transform.spec()
        )));
    }
    let spec = transform.spec();
    let expected_core_slices = match spec.regime {
        Regime::Injective => spec.q,
        _ => spec.p,
    };
    if factors.u_pinv.dims().2 != expected_core_slices {
        return Err(McurError::dims(format!(
            "U^+ has {} slices, the {:?} regime needs {expected_core_slices}",
            factors.u_pinv.dims().2,
            spec.regime
        )));
    }
    match spec.regime {
        Regime::Invertible | Regime::Surjective => {
            let cu = m_product(&factors.c, &factors.u_pinv, transform)?;
            m_product(&cu, &factors.r, transform)
        }
        Regime::Injective => {
            let c_hat = factors.c.mode3_product(transform.matrix())?;
            let r_hat = factors.r.mode3_product(transform.matrix())?;
            c_hat
                .facewise_product(&factors.u_pinv)?
                .facewise_product(&r_hat)?
                .mode3_product(transform.pinv())
        }
    }
}

/// Hat-domain CUR approximation `(Ĉ △ Û^+ △ R̂) x_3 M^+` in one pass.
///
/// Equal to [`mcur_reconstruct`] of [`mcur_decompose`] in every regime
/// (for invertible and surjective maps because `M M^+ = I`), without
/// materializing factors or computing multiranks.
pub fn cur_approximation<T: Scalar>(
    a: &Tensor3<T>,
    transform: &TransformMatrix<T>,
    rows: &IndexSet,
    cols: &IndexSet,
) -> Result<Tensor3<T>> {
    check_slices(a, transform)?;
    let a_hat = a.mode3_product(transform.matrix())?;
    let c_hat = a_hat.slice_lateral(cols)?;
    let r_hat = a_hat.slice_horizontal(rows)?;
    let core = hat_core_pinv(&c_hat.slice_horizontal(rows)?)?;
    c_hat
        .facewise_product(&core)?
        .facewise_product(&r_hat)?
        .mode3_product(transform.pinv())
}

fn check_slices<T: Scalar>(a: &Tensor3<T>, transform: &TransformMatrix<T>) -> Result<()> {
    if a.dims().2 != transform.spec().p {
        return Err(McurError::dims(format!(
            "tensor has {} frontal slices, transform expects {}",
            a.dims().2,
            transform.spec().p
        )));
    }
    Ok(())
}

/// Q-DEIM row and column selection on the transformed tensor.
///
/// Rows: top-`r` left singular vectors of the mode-1 unfolding
/// `[Â(1) | ... | Â(q)]`; columns: top-`r` right singular vectors of the
/// vertical stack `[Â(1); ...; Â(q)]`. Each `dim x r` block is transposed and
/// fed to column-pivoted QR; the first `r` pivots are the indices. The
/// singular vectors come from the eigendecomposition of the small Gram
/// matrices `sum_k Â(k) Â(k)^H` and `sum_k Â(k)^H Â(k)`.
pub fn qdeim_select<T: Scalar>(
    a: &Tensor3<T>,
    transform: &TransformMatrix<T>,
    r: usize,
) -> Result<(IndexSet, IndexSet)> {
    check_slices(a, transform)?;
    let (m, n, _) = a.dims();
    if r == 0 || r > m.min(n) {
        return Err(McurError::config(format!(
            "rank {r} must lie in 1..={}",
            m.min(n)
        )));
    }
    let a_hat = a.mode3_product(transform.matrix())?;

    let mode1 = a_hat.unfold_mode1();
    let row_gram = &mode1 * mode1.adjoint();
    let col_gram = column_gram(&a_hat);

    let left = linalg::dominant_eigenvectors(row_gram, r);
    let right = linalg::dominant_eigenvectors(col_gram, r);
    let rows = linalg::pivoted_qr_pivots(&left.transpose(), r);
    let cols = linalg::pivoted_qr_pivots(&right.transpose(), r);
    Ok((IndexSet::new(rows, m)?, IndexSet::new(cols, n)?))
}

/// `sum_k Â(k)^H Â(k)`, accumulated in slice order.
fn column_gram<T: Scalar>(hat: &Tensor3<T>) -> DMatrix<T> {
    let (_, n, q) = hat.dims();
    let parts: Vec<DMatrix<T>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let s = hat.slice_view(k);
            s.adjoint() * s
        })
        .collect();
    parts.into_iter().fold(DMatrix::zeros(n, n), |acc, g| acc + g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub multirank_a: Multirank,
    pub multirank_u: Multirank,
    pub rank_condition_met: bool,
    /// `||A - C *_M U^+ *_M R||_F / ||A||_F` (0 for the zero tensor).
    pub relative_error: f64,
    /// Hat slices whose core block is exactly rank zero.
    pub degenerate_slices: Vec<usize>,
}

pub fn verify_exactness<T: Scalar>(
    a: &Tensor3<T>,
    factors: &CurFactors<T>,
    transform: &TransformMatrix<T>,
) -> Result<ExactnessReport> {
    let recon = mcur_reconstruct(factors, transform)?;
    let relative_error = if a.is_zero() {
        recon.frobenius_norm()
    } else {
        recon.rel_frobenius_error(a)
    };
    let degenerate_slices = factors
        .multirank_u
        .0
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == 0)
        .map(|(k, _)| k)
        .collect();
    Ok(ExactnessReport {
        rank_condition_met: factors.multirank_a == factors.multirank_u,
        multirank_a: factors.multirank_a.clone(),
        multirank_u: factors.multirank_u.clone(),
        relative_error,
        degenerate_slices,
    })
}
