use authsim_core::specfun::{gauss_q, gauss_q_inv, inc_gamma_lower_reg, inc_gamma_upper_reg, marcum_q, marcum_q_inv_b};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn marcum_monotone(m in 1u32..40, a in 0.0f64..20.0, b in 0.0f64..30.0, db in 1e-3f64..3.0, da in 1e-3f64..3.0) {
        let q = marcum_q(m, a, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(marcum_q(m, a, b + db).unwrap() <= q + 1e-14);
        prop_assert!(marcum_q(m, a + da, b).unwrap() >= q - 1e-14);
        prop_assert!(marcum_q(m + 1, a, b).unwrap() >= q - 1e-14);
    }

    #[test]
    fn marcum_inverse_round_trip(m in 1u32..40, a in 0.0f64..10.0, q in 1e-6f64..(1.0 - 1e-6)) {
        let b = marcum_q_inv_b(m, a, q).unwrap();
        let back = marcum_q(m, a, b).unwrap();
        prop_assert!((back - q).abs() <= 1e-9 * q.max(1e-3), "q {q} back {back}");
    }

    #[test]
    fn central_marcum_is_gamma(m in 1u32..60, x in 0.0f64..200.0) {
        let g = inc_gamma_upper_reg(m, x).unwrap();
        let q = marcum_q(m, 0.0, (2.0 * x).sqrt()).unwrap();
        prop_assert!((g - q).abs() <= 1e-12);
        prop_assert!((g + inc_gamma_lower_reg(m, x).unwrap() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn gauss_symmetry_and_inverse(x in -30.0f64..30.0, p in 1e-300f64..1.0) {
        prop_assert!((gauss_q(x) + gauss_q(-x) - 1.0).abs() <= 1e-15);
        let y = gauss_q_inv(p).unwrap();
        prop_assert!((gauss_q(y) - p).abs() <= 1e-9 * p);
    }
}

#[test]
fn domain_errors() {
    assert!(marcum_q(0, 1.0, 1.0).is_err());
    assert!(marcum_q(1, -1.0, 1.0).is_err());
    assert!(inc_gamma_upper_reg(1, -1.0).is_err());
    assert!(gauss_q_inv(0.0).is_err());
    assert!(gauss_q_inv(1.0).is_err());
    assert!(gauss_q_inv(f64::NAN).is_err());
}
