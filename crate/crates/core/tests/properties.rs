mod common;

use common::*;
use mcur::io::{decode_mct, decode_pgm, encode_mct, encode_pgm, AnyTensor};
use mcur::metrics::{evaluate, EvalOptions};
use mcur::separation::hard_threshold;
use mcur::{
    build_transform, hat_multirank, m_product, mcur_decompose, mcur_reconstruct, qdeim_select, verify_exactness,
    Complex64, Family, Regime, Scalar, Tensor3, Tolerance, Transform, TransformMatrix, TransformSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

fn regime() -> impl Strategy<Value = Regime> {
    prop::sample::select(Regime::ALL.to_vec())
}

/// A spec for tube length `p`; surjective falls back to invertible when `p = 1`.
fn spec_for(family: Family, regime: Regime, p: usize, seed: u64) -> TransformSpec {
    let q = match regime {
        Regime::Invertible => p,
        Regime::Surjective if p == 1 => return TransformSpec::invertible(family, p).unwrap(),
        Regime::Surjective => p.div_ceil(2).min(p - 1),
        Regime::Injective => 2 * p,
    };
    TransformSpec::new(family, regime, p, q, seed).unwrap()
}

fn tensor(m: usize, n: usize, p: usize, seed: u64) -> Tensor3<f64> {
    random_real(m, n, p, &mut rng(seed))
}

fn product_matches_oracle<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>, tm: &TransformMatrix<T>) -> f64 {
    let got = m_product(a, b, tm).unwrap();
    let want = m_product_oracle(a, b, tm.matrix());
    rel_max_dev(&got, &want)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn m_product_agrees_with_loop_oracle(
        fam in family(), reg in regime(),
        m in 1usize..5, k in 1usize..4, n in 1usize..5, p in 1usize..7, seed in any::<u64>(),
    ) {
        let a = tensor(m, k, p, seed);
        let b = tensor(k, n, p, seed ^ 1);
        let spec = spec_for(fam, reg, p, seed);
        let dev = match build_transform(&spec, Some(&a)) {
            Ok(Transform::Real(tm)) => product_matches_oracle(&a, &b, &tm),
            Ok(Transform::Complex(tm)) => product_matches_oracle(&complex(&a), &complex(&b), &tm),
            Err(_) => return Ok(()),
        };
        prop_assert!(dev <= 1e-11, "{spec:?}: {dev:e}");
    }

    #[test]
    fn mode3_product_is_linear(
        fam in family(), m in 1usize..5, n in 1usize..5, p in 1usize..7,
        alpha in -3.0f64..3.0, seed in any::<u64>(),
    ) {
        let a = tensor(m, n, p, seed);
        let b = tensor(m, n, p, seed ^ 7);
        let tm = build_transform(&TransformSpec::invertible(fam, p).unwrap(), Some(&a)).unwrap().to_complex();
        let (a, b) = (complex(&a), complex(&b));
        let lhs = (&a.scale(Complex64::new(alpha, 0.0)) + &b).mode3_product(tm.matrix()).unwrap();
        let rhs = &a.mode3_product(tm.matrix()).unwrap().scale(Complex64::new(alpha, 0.0))
            + &b.mode3_product(tm.matrix()).unwrap();
        prop_assert!(rel_max_dev(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn pinv_undoes_transform_for_full_column_rank(
        fam in family(), inj in any::<bool>(), m in 1usize..5, n in 1usize..5, p in 1usize..7, seed in any::<u64>(),
    ) {
        let a = tensor(m, n, p, seed);
        let spec = spec_for(fam, if inj { Regime::Injective } else { Regime::Invertible }, p, seed);
        let tm = build_transform(&spec, Some(&a)).unwrap().to_complex();
        let back = complex(&a).mode3_product(tm.matrix()).unwrap().mode3_product(tm.pinv()).unwrap();
        prop_assert!(rel_max_dev(&back, &complex(&a)) <= 1e-12);
    }

    #[test]
    fn facewise_product_is_associative(
        m in 1usize..5, k in 1usize..5, l in 1usize..5, n in 1usize..5, p in 1usize..5, seed in any::<u64>(),
    ) {
        let a = tensor(m, k, p, seed);
        let b = tensor(k, l, p, seed ^ 2);
        let c = tensor(l, n, p, seed ^ 3);
        let left = a.facewise_product(&b).unwrap().facewise_product(&c).unwrap();
        let right = a.facewise_product(&b.facewise_product(&c).unwrap()).unwrap();
        prop_assert!(rel_max_dev(&left, &right) <= 1e-12);
        prop_assert!(rel_max_dev(&left, &facewise_oracle(&facewise_oracle(&a, &b), &c)) <= 1e-12);
    }

    #[test]
    fn m_product_is_associative_unless_injective(
        fam in family(), surj in any::<bool>(), m in 1usize..4, k in 1usize..4, n in 1usize..4,
        p in 2usize..7, seed in any::<u64>(),
    ) {
        let a = tensor(m, k, p, seed);
        let b = tensor(k, k, p, seed ^ 4);
        let c = tensor(k, n, p, seed ^ 5);
        let spec = spec_for(fam, if surj { Regime::Surjective } else { Regime::Invertible }, p, seed);
        let tm = build_transform(&spec, Some(&a)).unwrap().to_complex();
        let (a, b, c) = (complex(&a), complex(&b), complex(&c));
        let left = m_product(&m_product(&a, &b, &tm).unwrap(), &c, &tm).unwrap();
        let right = m_product(&a, &m_product(&b, &c, &tm).unwrap(), &tm).unwrap();
        prop_assert!(rel_max_dev(&left, &right) <= 1e-10);
    }

    #[test]
    fn frobenius_norm_sums_slices(m in 1usize..6, n in 1usize..6, p in 1usize..6, seed in any::<u64>()) {
        let a = tensor(m, n, p, seed);
        let by_slice: f64 = a.frontal_slices().iter().map(|s| s.norm_squared()).sum();
        prop_assert!((a.frobenius_norm().powi(2) - by_slice).abs() <= 1e-12 * by_slice.max(1.0));
    }

    #[test]
    fn product_of_thin_factors_has_bounded_multirank(
        fam in family(), surj in any::<bool>(), m in 3usize..7, n in 3usize..7, p in 2usize..7,
        r in 1usize..3, seed in any::<u64>(),
    ) {
        let x = tensor(m, r, p, seed);
        let y = tensor(r, n, p, seed ^ 6);
        let spec = spec_for(fam, if surj { Regime::Surjective } else { Regime::Invertible }, p, seed);
        let tm = build_transform(&spec, Some(&x)).unwrap().to_complex();
        let a = m_product(&complex(&x), &complex(&y), &tm).unwrap();
        let ranks = hat_multirank(&a.mode3_product(tm.matrix()).unwrap(), Tolerance::Default);
        prop_assert!(ranks.max() <= r, "{ranks:?}");
    }

    #[test]
    fn qdeim_indices_are_valid(
        fam in family(), m in 1usize..8, n in 1usize..8, p in 1usize..6, seed in any::<u64>(), frac in 0.0f64..1.0,
    ) {
        let a = tensor(m, n, p, seed);
        let r = 1 + ((m.min(n) - 1) as f64 * frac) as usize;
        let tm = build_transform(&TransformSpec::invertible(fam, p).unwrap(), Some(&a)).unwrap().to_complex();
        let (rows, cols) = qdeim_select(&complex(&a), &tm, r).unwrap();
        prop_assert_eq!(rows.len(), r);
        prop_assert_eq!(cols.len(), r);
        prop_assert!(rows.as_slice().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(cols.as_slice().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*rows.as_slice().last().unwrap() < m && *cols.as_slice().last().unwrap() < n);
    }

    #[test]
    fn surjective_reconstruction_is_a_projection(
        fam in prop::sample::select(vec![Family::Dct, Family::Dst, Family::Identity]),
        m in 3usize..8, n in 3usize..8, p in 2usize..8, r in 1usize..3, seed in any::<u64>(),
    ) {
        let a = tucker(m, n, p, r, &mut rng(seed));
        let spec = spec_for(fam, Regime::Surjective, p, seed);
        let Transform::Real(tm) = build_transform(&spec, None).unwrap() else { unreachable!() };
        let (rows, cols) = qdeim_select(&a, &tm, r).unwrap();
        let f = mcur_decompose(&a, &tm, &rows, &cols).unwrap();
        prop_assume!(verify_exactness(&a, &f, &tm).unwrap().rank_condition_met);
        let projector = tm.pinv() * tm.matrix();
        let want = mode3_oracle(&a, &projector);
        let got = mcur_reconstruct(&f, &tm).unwrap();
        prop_assert!(rel_fro(&got, &want) <= 1e-9, "{}", rel_fro(&got, &want));
    }

    #[test]
    fn hard_threshold_is_idempotent(m in 1usize..5, n in 1usize..5, p in 1usize..5, z in 0.0f64..1.2, seed in any::<u64>()) {
        let a = tensor(m, n, p, seed);
        let once = hard_threshold(&a, z);
        prop_assert_eq!(hard_threshold(&once, z), once.clone());
        prop_assert!(hard_threshold(&a, 1.0).is_zero());
        prop_assert_eq!(hard_threshold(&a, 0.0), a);
    }

    #[test]
    fn mct_round_trip_is_bit_exact(
        m in 0usize..4, n in 0usize..4, p in 0usize..4,
        bits in prop::collection::vec(any::<u64>(), 128),
    ) {
        let re = Tensor3::from_fn(m, n, p, |i, j, k| f64::from_bits(bits[i + 4 * j + 16 * k]));
        let bytes = encode_mct(&re);
        let AnyTensor::Real(back) = decode_mct(&bytes).unwrap() else { panic!("kind changed") };
        prop_assert_eq!(encode_mct(&back), bytes);
        let z = Tensor3::from_fn(m, n, p, |i, j, k| {
            Complex64::new(f64::from_bits(bits[i + 4 * j + 16 * k]), f64::from_bits(bits[64 + i + 4 * j + 16 * k]))
        });
        let bytes = encode_mct(&z);
        let AnyTensor::Complex(back) = decode_mct(&bytes).unwrap() else { panic!("kind changed") };
        prop_assert_eq!(encode_mct(&back), bytes);
    }

    #[test]
    fn pgm_round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, pixels in prop::collection::vec(any::<u8>(), 64)) {
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend_from_slice(&pixels[..w * h]);
        let (again, clamped) = encode_pgm(&decode_pgm(&bytes).unwrap());
        prop_assert_eq!(again, bytes);
        prop_assert_eq!(clamped, 0);
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(m in 1usize..6, n in 1usize..6, p in 1usize..4, seed in any::<u64>()) {
        let a = tensor(m, n, p, seed).map(|v| v.abs());
        let b = tensor(m, n, p, seed ^ 9).map(|v| v.abs());
        let ab = evaluate(&a, &b, EvalOptions::default()).unwrap();
        let ba = evaluate(&b, &a, EvalOptions::default()).unwrap();
        prop_assert_eq!(&ab, &ba);
        for f in &ab.per_frame {
            prop_assert!(f.age >= 0.0 && (0.0..=1.0).contains(&f.peps));
        }
    }
}

#[test]
fn orthonormal_families_have_conjugate_transpose_inverse() {
    let data = tensor(3, 3, 9, 1);
    for fam in Family::ALL {
        let tm = build_transform(&TransformSpec::invertible(fam, 9).unwrap(), Some(&data))
            .unwrap()
            .to_complex();
        let gap: DMatrix<Complex64> = tm.pinv() - tm.matrix().adjoint();
        assert!(gap.camax() <= 1e-10, "{fam}");
    }
}
