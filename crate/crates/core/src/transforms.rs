//! Construction of the tube transform `M` (`q x p`) and its pseudoinverse.
//!
//! Base matrices are orthonormal DCT-II, orthonormal DST-I, the unitary DFT,
//! the identity, or the data-dependent `U3` basis. The surjective regime keeps
//! the first `q` rows of the base matrix; the injective regime stacks the base
//! matrix on a seeded Gaussian block.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{McurError, Result};
use crate::linalg::{self, Tolerance};
use crate::tensor::{Complex64, Scalar, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dct,
    Dst,
    Dft,
    Identity,
    U3,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Identity,
        Family::Dct,
        Family::Dst,
        Family::Dft,
        Family::U3,
    ];

    pub fn is_complex(self) -> bool {
        matches!(self, Family::Dft)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Dct => "dct",
            Family::Dst => "dst",
            Family::Dft => "dft",
            Family::Identity => "identity",
            Family::U3 => "u3",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = McurError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(Family::Dct),
            "dst" => Ok(Family::Dst),
            "dft" => Ok(Family::Dft),
            "identity" | "id" => Ok(Family::Identity),
            "u3" => Ok(Family::U3),
            other => Err(McurError::config(format!("unknown transform family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Invertible,
    Surjective,
    Injective,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Invertible, Regime::Surjective, Regime::Injective];
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Invertible => "inv",
            Regime::Surjective => "surj",
            Regime::Injective => "inj",
        };
        f.write_str(s)
    }
}

impl FromStr for Regime {
    type Err = McurError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inv" | "invertible" => Ok(Regime::Invertible),
            "surj" | "surjective" => Ok(Regime::Surjective),
            "inj" | "injective" => Ok(Regime::Injective),
            other => Err(McurError::config(format!("unknown regime `{other}`"))),
        }
    }
}

/// Which map to build: family, regime and shape `q x p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub family: Family,
    pub regime: Regime,
    /// Source tube length.
    pub p: usize,
    /// Target tube length.
    pub q: usize,
    /// Seed of the Gaussian extension block (injective regime only).
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(family: Family, regime: Regime, p: usize, q: usize, seed: u64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(McurError::config("transform dimensions must be positive"));
        }
        let ok = match regime {
            Regime::Invertible => q == p,
            Regime::Surjective => q < p,
            Regime::Injective => q > p,
        };
        if !ok {
            return Err(McurError::config(format!(
                "q = {q} is not valid for the {regime:?} regime with p = {p}"
            )));
        }
        Ok(TransformSpec {
            family,
            regime,
            p,
            q,
            seed,
        })
    }

    pub fn invertible(family: Family, p: usize) -> Result<Self> {
        Self::new(family, Regime::Invertible, p, p, 0)
    }
}

/// A materialized map `M` with its regime pseudoinverse.
#[derive(Clone, Debug)]
pub struct TransformMatrix<T: Scalar> {
    spec: TransformSpec,
    matrix: DMatrix<T>,
    pinv: DMatrix<T>,
}

impl<T: Scalar> TransformMatrix<T> {
    /// Wraps an explicit `q x p` matrix, checking full rank and computing the
    /// pseudoinverse dictated by the regime.
    pub fn from_matrix(spec: TransformSpec, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.shape() != (spec.q, spec.p) {
            return Err(McurError::dims(format!(
                "transform matrix is {:?}, spec says ({}, {})",
                matrix.shape(),
                spec.q,
                spec.p
            )));
        }
        let rank = linalg::numerical_rank(&matrix, Tolerance::Default);
        if rank != spec.q.min(spec.p) {
            return Err(McurError::config(format!(
                "transform matrix is rank deficient (rank {rank}, need {})",
                spec.q.min(spec.p)
            )));
        }
        let pinv = match spec.regime {
            Regime::Invertible => matrix
                .clone()
                .try_inverse()
                .ok_or_else(|| McurError::config("transform matrix is singular"))?,
            Regime::Surjective => {
                // M^H (M M^H)^-1
                let gram = &matrix * matrix.adjoint();
                let chol = Cholesky::new(gram)
                    .ok_or_else(|| McurError::config("M M^H is not positive definite"))?;
                chol.solve(&matrix).adjoint()
            }
            Regime::Injective => {
                // (M^H M)^-1 M^H
                let gram = matrix.adjoint() * &matrix;
                let chol = Cholesky::new(gram)
                    .ok_or_else(|| McurError::config("M^H M is not positive definite"))?;
                chol.solve(&matrix.adjoint())
            }
        };
        Ok(TransformMatrix { spec, matrix, pinv })
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn pinv(&self) -> &DMatrix<T> {
        &self.pinv
    }

    pub fn regime(&self) -> Regime {
        self.spec.regime
    }

    /// Largest entry of the relevant one-sided identity residual
    /// (`M M^+ - I` and/or `M^+ M - I`).
    pub fn pinv_identity_error(&self) -> f64 {
        let right = || max_identity_dev(&(&self.matrix * &self.pinv));
        let left = || max_identity_dev(&(&self.pinv * &self.matrix));
        match self.spec.regime {
            Regime::Invertible => right().max(left()),
            Regime::Surjective => right(),
            Regime::Injective => left(),
        }
    }

    /// Largest entry of `M M^H - I` (rows) or `M^H M - I` (columns),
    /// whichever Gram matrix is the smaller one.
    pub fn orthonormality_error(&self) -> f64 {
        if self.spec.q <= self.spec.p {
            max_identity_dev(&(&self.matrix * self.matrix.adjoint()))
        } else {
            max_identity_dev(&(self.matrix.adjoint() * &self.matrix))
        }
    }
}

impl TransformMatrix<f64> {
    pub fn to_complex(&self) -> TransformMatrix<Complex64> {
        TransformMatrix {
            spec: self.spec,
            matrix: self.matrix.map(|x| Complex64::new(x, 0.0)),
            pinv: self.pinv.map(|x| Complex64::new(x, 0.0)),
        }
    }
}

fn max_identity_dev<T: Scalar>(a: &DMatrix<T>) -> f64 {
    let mut dev: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let target = if i == j { T::one() } else { T::zero() };
            dev = dev.max((a[(i, j)] - target).modulus());
        }
    }
    dev
}

/// A transform over whichever scalar field its family needs.
#[derive(Clone, Debug)]
pub enum Transform {
    Real(TransformMatrix<f64>),
    Complex(TransformMatrix<Complex64>),
}

impl Transform {
    pub fn spec(&self) -> &TransformSpec {
        match self {
            Transform::Real(t) => t.spec(),
            Transform::Complex(t) => t.spec(),
        }
    }

    pub fn pinv_identity_error(&self) -> f64 {
        match self {
            Transform::Real(t) => t.pinv_identity_error(),
            Transform::Complex(t) => t.pinv_identity_error(),
        }
    }

    pub fn orthonormality_error(&self) -> f64 {
        match self {
            Transform::Real(t) => t.orthonormality_error(),
            Transform::Complex(t) => t.orthonormality_error(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Transform::Real(t) => linalg::numerical_rank(t.matrix(), Tolerance::Default),
            Transform::Complex(t) => linalg::numerical_rank(t.matrix(), Tolerance::Default),
        }
    }

    /// Promotes real transforms; complex ones are cloned.
    pub fn to_complex(&self) -> TransformMatrix<Complex64> {
        match self {
            Transform::Real(t) => t.to_complex(),
            Transform::Complex(t) => t.clone(),
        }
    }
}

/// Builds `M` for `spec`. `data` is required for the `u3` family.
pub fn build_transform(spec: &TransformSpec, data: Option<&Tensor3<f64>>) -> Result<Transform> {
    let spec = TransformSpec::new(spec.family, spec.regime, spec.p, spec.q, spec.seed)?;
    let p = spec.p;
    match spec.family {
        Family::Dft => {
            let base = dft_matrix(p);
            let full = shape_for_regime(&spec, base, Complex64::from)?;
            Ok(Transform::Complex(TransformMatrix::from_matrix(spec, full)?))
        }
        family => {
            let base = match family {
                Family::Dct => dct2_matrix(p),
                Family::Dst => dst1_matrix(p),
                Family::Identity => DMatrix::identity(p, p),
                Family::U3 => {
                    let t = data.ok_or_else(|| {
                        McurError::config("the u3 transform needs the data tensor")
                    })?;
                    if t.dims().2 != p {
                        return Err(McurError::config(format!(
                            "u3 data has {} frontal slices, spec says p = {p}",
                            t.dims().2
                        )));
                    }
                    u3_from_data(t)?
                }
                Family::Dft => unreachable!(),
            };
            let full = shape_for_regime(&spec, base, |x| x)?;
            Ok(Transform::Real(TransformMatrix::from_matrix(spec, full)?))
        }
    }
}

fn shape_for_regime<T: Scalar>(
    spec: &TransformSpec,
    base: DMatrix<T>,
    lift: impl Fn(f64) -> T,
) -> Result<DMatrix<T>> {
    let (p, q) = (spec.p, spec.q);
    Ok(match spec.regime {
        Regime::Invertible => base,
        Regime::Surjective => base.rows(0, q).into_owned(),
        Regime::Injective => {
            let block = gaussian_block(q - p, p, spec.seed);
            let mut out = DMatrix::zeros(q, p);
            out.rows_mut(0, p).copy_from(&base);
            for i in 0..q - p {
                for j in 0..p {
                    out[(p + i, j)] = lift(block[(i, j)]);
                }
            }
            out
        }
    })
}

/// Seeded standard-normal block scaled by `1/sqrt(p)` so its rows have
/// roughly unit norm, like the orthonormal rows above it.
fn gaussian_block(rows: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (p as f64).sqrt();
    DMatrix::from_fn(rows, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

/// Orthonormal DCT-II: `c_k cos(pi (2j+1) k / 2p)`.
pub fn dct2_matrix(p: usize) -> DMatrix<f64> {
    let pf = p as f64;
    DMatrix::from_fn(p, p, |k, j| {
        let c = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
        c * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * pf)).cos()
    })
}

/// Orthonormal DST-I: `sqrt(2/(p+1)) sin(pi (k+1)(j+1) / (p+1))`.
pub fn dst1_matrix(p: usize) -> DMatrix<f64> {
    let denom = (p + 1) as f64;
    let c = (2.0 / denom).sqrt();
    DMatrix::from_fn(p, p, |k, j| c * (PI * ((k + 1) * (j + 1)) as f64 / denom).sin())
}

/// Unitary DFT: `exp(-2 pi i k j / p) / sqrt(p)`.
pub fn dft_matrix(p: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (p as f64).sqrt();
    DMatrix::from_fn(p, p, |k, j| {
        // reduce k*j mod p first so large p keeps full phase accuracy
        let phase = -2.0 * PI * ((k * j) % p) as f64 / p as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Transposed left singular basis of the mode-3 unfolding, ordered by
/// decreasing singular value; each basis vector has its largest-magnitude
/// entry made positive.
///
/// The `p x mn` unfolding is first reduced to a `p x p` factor `R^T` by a QR
/// factorization of its transpose (or zero-padded when `mn < p`), whose SVD
/// has the same left singular vectors and always yields a complete basis.
pub fn u3_from_data(t: &Tensor3<f64>) -> Result<DMatrix<f64>> {
    if t.is_zero() {
        return Err(McurError::config("u3 transform of an all-zero tensor is undefined"));
    }
    let unfolded = t.unfold_mode3();
    let (p, width) = unfolded.shape();
    let square = if width >= p {
        unfolded.transpose().qr().r().transpose()
    } else {
        let mut padded = DMatrix::zeros(p, p);
        padded.columns_mut(0, width).copy_from(&unfolded);
        padded
    };
    let svd = square.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut basis = DMatrix::from_fn(p, p, |i, c| u[(i, order[c])]);
    linalg::normalize_column_phases(&mut basis);
    Ok(basis.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};

    fn real(t: Transform) -> TransformMatrix<f64> {
        match t {
            Transform::Real(t) => t,
            Transform::Complex(_) => panic!("expected real transform"),
        }
    }

    #[test]
    fn spec_regime_validation() {
        assert!(TransformSpec::new(Family::Dct, Regime::Invertible, 4, 3, 0).is_err());
        assert!(TransformSpec::new(Family::Dct, Regime::Surjective, 4, 4, 0).is_err());
        assert!(TransformSpec::new(Family::Dct, Regime::Injective, 4, 4, 0).is_err());
        assert!(TransformSpec::new(Family::Dct, Regime::Injective, 0, 4, 0).is_err());
        assert!(TransformSpec::new(Family::Dct, Regime::Surjective, 4, 2, 0).is_ok());
    }

    #[test]
    fn identity_transform() {
        let t = real(build_transform(&TransformSpec::invertible(Family::Identity, 4).unwrap(), None).unwrap());
        assert_eq!(t.matrix(), &DMatrix::identity(4, 4));
        assert_eq!(t.pinv(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn dct_two_point() {
        let t = real(build_transform(&TransformSpec::invertible(Family::Dct, 2).unwrap(), None).unwrap());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = dmatrix![h, h; h, -h];
        assert!((t.matrix() - expected).amax() < 1e-15);
        let gram = t.matrix().transpose() * t.matrix();
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn dft_is_unitary() {
        let Transform::Complex(t) =
            build_transform(&TransformSpec::invertible(Family::Dft, 4).unwrap(), None).unwrap()
        else {
            panic!("dft must be complex");
        };
        let gram = t.matrix().adjoint() * t.matrix();
        assert!((gram - DMatrix::identity(4, 4)).camax() < 1e-12);
        assert!((t.pinv() - t.matrix().adjoint()).camax() < 1e-12);
    }

    #[test]
    fn fixed_families_are_orthonormal_in_every_size() {
        for p in 1..=17 {
            for fam in [Family::Dct, Family::Dst, Family::Dft, Family::Identity] {
                let t = build_transform(&TransformSpec::invertible(fam, p).unwrap(), None).unwrap();
                assert!(t.orthonormality_error() < 1e-10, "{fam} p={p}");
                assert!(t.pinv_identity_error() < 1e-10, "{fam} p={p}");
            }
        }
    }

    #[test]
    fn every_regime_satisfies_its_pinv_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Tensor3::from_fn(3, 2, 6, |_, _, _| rng.random_range(-1.0..1.0));
        for fam in Family::ALL {
            for (regime, q) in [(Regime::Invertible, 6), (Regime::Surjective, 3), (Regime::Injective, 12)] {
                let spec = TransformSpec::new(fam, regime, 6, q, 9).unwrap();
                let t = build_transform(&spec, Some(&data)).unwrap();
                assert!(t.pinv_identity_error() < 1e-10, "{fam} {regime}");
                assert_eq!(t.rank(), 6.min(q));
            }
        }
    }

    #[test]
    fn surjective_projector_is_idempotent() {
        let spec = TransformSpec::new(Family::Dst, Regime::Surjective, 7, 3, 0).unwrap();
        let t = real(build_transform(&spec, None).unwrap());
        let proj = t.pinv() * t.matrix();
        assert!((&proj * &proj - &proj).amax() < 1e-10);
        let full = dst1_matrix(7);
        assert_eq!(t.matrix(), &full.rows(0, 3).into_owned());
    }

    #[test]
    fn injective_block_is_seeded() {
        let spec = TransformSpec::new(Family::Dct, Regime::Injective, 4, 8, 5).unwrap();
        let a = real(build_transform(&spec, None).unwrap());
        let b = real(build_transform(&spec, None).unwrap());
        assert_eq!(a.matrix(), b.matrix());
        let other = TransformSpec { seed: 6, ..spec };
        let c = real(build_transform(&other, None).unwrap());
        assert_ne!(a.matrix(), c.matrix());
        assert_eq!(a.matrix().rows(0, 4).into_owned(), dct2_matrix(4));
    }

    #[test]
    fn u3_requires_data() {
        let spec = TransformSpec::invertible(Family::U3, 3).unwrap();
        assert!(matches!(build_transform(&spec, None), Err(McurError::Config(_))));
        let wrong = Tensor3::from_fn(2, 2, 4, |i, _, _| i as f64);
        assert!(build_transform(&spec, Some(&wrong)).is_err());
    }

    #[test]
    fn u3_of_zero_is_rejected() {
        assert!(u3_from_data(&Tensor3::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn u3_single_slice() {
        let t = Tensor3::from_fn(2, 3, 1, |i, j, _| (i + j) as f64 - 1.0);
        let m = u3_from_data(&t).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert!((m[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn u3_identical_slices_lead_with_constant_direction() {
        let slice = DMatrix::from_fn(3, 3, |i, j| (1 + i * 3 + j) as f64);
        let t = Tensor3::broadcast(&slice, 5);
        let m = u3_from_data(&t).unwrap();
        let c = 1.0 / 5f64.sqrt();
        for j in 0..5 {
            assert!((m[(0, j)] - c).abs() < 1e-10);
        }
        assert!((&m * m.transpose() - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn u3_random_is_orthogonal_and_sign_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = Tensor3::from_fn(4, 3, 6, |_, _, _| rng.random_range(-1.0..1.0));
        let m = u3_from_data(&t).unwrap();
        assert!((m.transpose() * &m - DMatrix::identity(6, 6)).amax() < 1e-10);
        for row in m.row_iter() {
            let lead = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn u3_matches_svd_left_vectors() {
        // oracle: singular vectors of the unfolding from nalgebra's SVD
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tensor3::from_fn(5, 4, 4, |_, _, _| rng.random_range(-1.0..1.0));
        let m = u3_from_data(&t).unwrap();
        let svd = t.unfold_mode3().svd(true, false);
        let u = svd.u.unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        for (row, &c) in order.iter().enumerate() {
            let dot: f64 = (0..4).map(|i| m[(row, i)] * u[(i, c)]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("DCT".parse::<Family>().unwrap(), Family::Dct);
        assert_eq!("surj".parse::<Regime>().unwrap(), Regime::Surjective);
        assert!("wavelet".parse::<Family>().is_err());
    }
}
