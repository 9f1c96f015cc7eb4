mod common;

use authsim_core::kalman::{GaussianBelief, UpdateForm};
use authsim_core::linalg::{hermitian_eigenvalues, rel_diff, CMat, CVec};
use authsim_core::statespace::StateSpaceModel;
use common::{random_complex, random_model, random_psd, rng};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn min_eig(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

fn random_y(m: usize, r: &mut impl Rng) -> CVec {
    CVec::from_fn(m, |_, _| Complex64::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn posterior_below_prior(seed in any::<u64>(), n in 1usize..7, m in 1usize..5, dt in 0.0f64..2.0) {
        let mut r = rng(seed);
        let model = random_model(n, m, 2, &mut r);
        let b = GaussianBelief::prior(&model);
        let (b, _) = b.update(&model, 0, &random_y(m, &mut r), 0.0, UpdateForm::Standard).unwrap();
        let prior = b.predict(&model, dt).unwrap();
        let (post, _) = prior.update(&model, 1, &random_y(m, &mut r), dt, UpdateForm::Joseph).unwrap();
        let scale = prior.cov.norm();
        prop_assert!(min_eig(&(&prior.cov - &post.cov)) >= -1e-10 * scale);
        prop_assert!(min_eig(&post.cov) >= -1e-10 * scale);
    }

    #[test]
    fn estimate_and_mean_covariances_sum_to_stationary(
        seed in any::<u64>(),
        n in 1usize..6,
        m in 1usize..4,
        steps in proptest::collection::vec(0.0f64..1.5, 1..8),
    ) {
        let mut r = rng(seed);
        let model = random_model(n, m, 3, &mut r);
        let x = model.stationary_covariance().clone();
        let mut b = GaussianBelief::prior(&model);
        let mut t = 0.0;
        for (i, dt) in steps.iter().enumerate() {
            t += dt;
            let form = if i % 2 == 0 { UpdateForm::Standard } else { UpdateForm::Joseph };
            b = b.update(&model, i % 3, &random_y(m, &mut r), t, form).unwrap().0;
            prop_assert!(rel_diff(&(&b.cov + &b.mean_cov), &x) <= 1e-9);
            let p = b.predict(&model, t + 0.3).unwrap();
            prop_assert!(rel_diff(&(&p.cov + &p.mean_cov), &x) <= 1e-9);
        }
    }

    #[test]
    fn joint_update_equals_sequential(seed in any::<u64>(), n in 1usize..6, m1 in 1usize..4, m2 in 1usize..4) {
        let mut r = rng(seed);
        let base = random_model(n, 1, 1, &mut r);
        let c1 = random_complex(m1, n, &mut r);
        let c2 = random_complex(m2, n, &mut r);
        let n1 = random_psd(m1, 0.2, &mut r);
        let n2 = random_psd(m2, 0.2, &mut r);
        let (y1, y2) = (random_y(m1, &mut r), random_y(m2, &mut r));
        let b = GaussianBelief::prior(&base);

        let (s1, _) = b.update_with(&c1, &n1, &y1, 0.0, UpdateForm::Standard).unwrap();
        let (s2, _) = s1.update_with(&c2, &n2, &y2, 0.0, UpdateForm::Standard).unwrap();

        let mut c = CMat::zeros(m1 + m2, n);
        c.rows_mut(0, m1).copy_from(&c1);
        c.rows_mut(m1, m2).copy_from(&c2);
        let mut noise = CMat::zeros(m1 + m2, m1 + m2);
        noise.view_mut((0, 0), (m1, m1)).copy_from(&n1);
        noise.view_mut((m1, m1), (m2, m2)).copy_from(&n2);
        let y = CVec::from_iterator(m1 + m2, y1.iter().chain(y2.iter()).copied());
        let (joint, _) = b.update_with(&c, &noise, &y, 0.0, UpdateForm::Standard).unwrap();

        prop_assert!(rel_diff(&joint.cov, &s2.cov) <= 1e-9);
        prop_assert!((&joint.mean - &s2.mean).norm() <= 1e-9 * (1.0 + joint.mean.norm()));
    }
}

#[test]
fn steady_state_filter_innovations_are_white() {
    // Scalar model observed at unit steps: normalized innovations have unit variance.
    let model = random_model(2, 1, 1, &mut rng(99));
    let mut r = rng(100);
    let prop = model.propagator(1.0).unwrap();
    let mut x = model.sample_stationary(0.0, &mut r).unwrap();
    let mut b = GaussianBelief::prior(&model);
    let mut sum = 0.0;
    let n = 20_000;
    for i in 0..n {
        if i > 0 {
            x = prop.step(&x, &mut r);
        }
        let y = model.sample_output(0, &x, &mut r).unwrap();
        let (post, inn) = b.update(&model, 0, &y, x.t, UpdateForm::Standard).unwrap();
        sum += inn.e[0].norm_sqr() / inn.cov_e[(0, 0)].re;
        b = post;
    }
    let mean = sum / n as f64;
    assert!((mean - 1.0).abs() < 0.05, "normalized innovation power {mean}");
}

#[test]
fn rejects_bad_input() {
    let model: StateSpaceModel = random_model(3, 2, 1, &mut rng(1));
    let b = GaussianBelief::prior(&model);
    let (b, _) = b.update(&model, 0, &CVec::zeros(2), 1.0, UpdateForm::Standard).unwrap();
    assert!(b.update(&model, 0, &CVec::zeros(2), 0.5, UpdateForm::Standard).is_err());
    assert!(b.update(&model, 5, &CVec::zeros(2), 2.0, UpdateForm::Standard).is_err());
    assert!(b.update(&model, 0, &CVec::zeros(3), 2.0, UpdateForm::Standard).is_err());
}
