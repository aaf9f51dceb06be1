//! Independent reference implementations shared by the integration tests.
//! Everything here is written with explicit loops so it does not reuse the
//! library's GEMM-based kernels.

#![allow(dead_code)]

use mcur::{Complex64, Family, Regime, Scalar, Tensor3, TransformSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_real(m: usize, n: usize, p: usize, rng: &mut ChaCha8Rng) -> Tensor3<f64> {
    Tensor3::from_fn(m, n, p, |_, _, _| rng.random_range(-1.0..1.0))
}

/// `A(:, :, k) = U S_k V^T`: every frontal slice, under any `M`, has rank
/// at most `r` in the transformed domain.
pub fn tucker(m: usize, n: usize, p: usize, r: usize, rng: &mut ChaCha8Rng) -> Tensor3<f64> {
    let u = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
    let v = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    let slices: Vec<DMatrix<f64>> = (0..p)
        .map(|_| {
            let s = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
            &u * s * v.transpose()
        })
        .collect();
    Tensor3::from_slices(&slices).unwrap()
}

/// `(A x_3 M)(i, j, k) = sum_l M(k, l) A(i, j, l)`.
pub fn mode3_oracle<T: Scalar>(a: &Tensor3<T>, mat: &DMatrix<T>) -> Tensor3<T> {
    let (m, n, p) = a.dims();
    assert_eq!(mat.ncols(), p);
    Tensor3::from_fn(m, n, mat.nrows(), |i, j, k| {
        let mut acc = T::zero();
        for l in 0..p {
            acc += mat[(k, l)] * a.get(i, j, l);
        }
        acc
    })
}

pub fn facewise_oracle<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>) -> Tensor3<T> {
    let (m, inner, p) = a.dims();
    let (inner_b, n, pb) = b.dims();
    assert_eq!((inner, p), (inner_b, pb));
    Tensor3::from_fn(m, n, p, |i, j, k| {
        let mut acc = T::zero();
        for l in 0..inner {
            acc += a.get(i, l, k) * b.get(l, j, k);
        }
        acc
    })
}

/// Pseudoinverse through nalgebra's own SVD routine.
pub fn pinv_oracle<T: Scalar>(mat: &DMatrix<T>) -> DMatrix<T> {
    let top = mat.clone().singular_values().max();
    mat.clone().pseudo_inverse(1e-12 * top.max(f64::MIN_POSITIVE)).unwrap()
}

pub fn m_product_oracle<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>, mat: &DMatrix<T>) -> Tensor3<T> {
    let prod = facewise_oracle(&mode3_oracle(a, mat), &mode3_oracle(b, mat));
    mode3_oracle(&prod, &pinv_oracle(mat))
}

/// Tube-wise circular convolution: `C(:,:,k) = sum_l A(:,:,l) B(:,:,(k-l) mod p)`.
pub fn circular_convolution(a: &Tensor3<f64>, b: &Tensor3<f64>) -> Tensor3<f64> {
    let (m, inner, p) = a.dims();
    let (_, n, _) = b.dims();
    Tensor3::from_fn(m, n, p, |i, j, k| {
        let mut acc = 0.0;
        for l in 0..p {
            let kb = (k + p - l) % p;
            for t in 0..inner {
                acc += a.get(i, t, l) * b.get(t, j, kb);
            }
        }
        acc
    })
}

pub fn max_abs<T: Scalar>(t: &Tensor3<T>) -> f64 {
    t.data().iter().map(|v| v.modulus()).fold(0.0, f64::max)
}

/// `max |a - b| / max |b|`.
pub fn rel_max_dev<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x - *y).modulus())
        .fold(0.0, f64::max);
    diff / max_abs(b).max(f64::MIN_POSITIVE)
}

pub fn rel_fro<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x - *y).modulus_squared())
        .sum();
    let den: f64 = b.data().iter().map(|y| y.modulus_squared()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

pub fn complex(t: &Tensor3<f64>) -> Tensor3<Complex64> {
    t.map(|v| Complex64::new(v, 0.0))
}

/// Every (family, regime) pair with `q = ceil(p / 2)` for surjective maps
/// and `q = 2p` for injective ones.
pub fn all_specs(p: usize, seed: u64) -> Vec<TransformSpec> {
    let mut out = Vec::new();
    for family in Family::ALL {
        for (regime, q) in [
            (Regime::Invertible, p),
            (Regime::Surjective, p.div_ceil(2)),
            (Regime::Injective, 2 * p),
        ] {
            if regime == Regime::Surjective && q >= p {
                continue;
            }
            out.push(TransformSpec::new(family, regime, p, q, seed).unwrap());
        }
    }
    out
}
