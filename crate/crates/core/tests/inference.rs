use std::sync::Arc;

use mcrkit::estimators::PredictionModel;
use mcrkit::inference::{
    bootstrap_mcr_ci, minimize_linear, percentile, rashomon_phi_ci, sample_rashomon, BootstrapConfig, ClassSpec,
    Descriptor, PhiMethod, SamplingConfig,
};
use mcrkit::theory_bounds::TheoryConstants;
use mcrkit::{Dataset, EllipsoidConstraint, Error, LinearClass, SolvableClass, SwitchEstimator};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_linear(n: usize, seed: u64, x1_weight: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|i| x1_weight * x1[i] + 2.0 * x2[i] + 0.5 * rng.random_range(-1.0..1.0)).collect();
    Dataset::new(y, x1, 1, x2, 1).unwrap()
}

fn linear_spec() -> ClassSpec {
    ClassSpec::Linear { intercept: true, constraint: None, estimator: SwitchEstimator::Switch }
}

fn ols(data: &Dataset) -> Box<dyn PredictionModel> {
    let class = LinearClass::unconstrained(data, true).unwrap();
    let m = class.minimize_combination(1.0, 0.0).unwrap();
    class.prediction_model(&m.params)
}

#[test]
fn percentile_interpolates() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 100.0), 4.0);
    assert!((percentile(&v, 50.0) - 2.5).abs() < 1e-15);
}

#[test]
fn bootstrap_is_deterministic() {
    let data = noisy_linear(60, 1, 1.0);
    let reference = ols(&data);
    let cfg = BootstrapConfig::new(2, 0.05, 99);
    let a = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &cfg).unwrap();
    let b = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &cfg).unwrap();
    assert_eq!(a, b);
    let other = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &BootstrapConfig::new(2, 0.05, 100)).unwrap();
    assert_ne!(a, other);
}

#[test]
fn bootstrap_covers_one_when_x1_is_noise() {
    let data = noisy_linear(120, 2, 0.0);
    let reference = ols(&data);
    let cfg = BootstrapConfig::new(40, 0.5, 3);
    let ci = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &cfg).unwrap();
    assert!(ci.lower <= 1.0 && 1.0 <= ci.upper, "{ci:?}");
    assert!(ci.excluded.is_empty());
}

#[test]
fn bootstrap_widens_with_epsilon() {
    let data = noisy_linear(80, 4, 1.0);
    let reference = ols(&data);
    let narrow = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &BootstrapConfig::new(20, 0.02, 5)).unwrap();
    let wide = bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &BootstrapConfig::new(20, 0.2, 5)).unwrap();
    assert!(wide.lower <= narrow.lower + 1e-9 && wide.upper >= narrow.upper - 1e-9);
}

#[test]
fn bootstrap_config_and_exclusion_errors() {
    let data = noisy_linear(40, 6, 1.0);
    let reference = ols(&data);
    let mut cfg = BootstrapConfig::new(10, 0.0, 1);
    cfg.lower_pct = 99.0;
    assert!(matches!(
        bootstrap_mcr_ci(&linear_spec(), &data, reference.as_ref(), &cfg),
        Err(Error::InvalidArgument(_))
    ));
    // A tiny ridge ball cannot reach the least-squares loss.
    let tiny = ClassSpec::Linear {
        intercept: false,
        constraint: Some(EllipsoidConstraint::identity(2, 1e-6)),
        estimator: SwitchEstimator::Switch,
    };
    let cfg = BootstrapConfig::new(10, 0.0, 1);
    assert!(matches!(
        bootstrap_mcr_ci(&tiny, &data, reference.as_ref(), &cfg),
        Err(Error::TooManyInfeasibleReplicates { infeasible: 10, total: 10 })
    ));
}

fn tc(delta: f64, n: usize) -> TheoryConstants {
    TheoryConstants::from_individual_bound(1.0, 0.1, n, delta)
}

#[test]
fn linear_descriptor_matches_lagrange_closed_form() {
    let data = noisy_linear(50, 7, 1.0);
    let class = LinearClass::unconstrained(&data, true).unwrap();
    let erm = class.minimize_combination(1.0, 0.0).unwrap();
    let phi = Descriptor::linear_prediction(&class, &[0.7], &[-0.3]);
    let t = tc(0.2, 50);
    let ci = rashomon_phi_ci(&class, erm.e_orig, &phi, &t, false, None).unwrap();
    assert_eq!(ci.method, PhiMethod::Exact);

    // min/max of a'x subject to (x - x*)' H (x - x*) <= slack.
    let h = &class.original_objective().q_matrix;
    let a = DVector::from_vec(vec![0.7, -0.3, 1.0]);
    let hinv_a = h.clone().cholesky().unwrap().solve(&a);
    let center = a.dot(&DVector::from_column_slice(&erm.params));
    let half = ((ci.threshold - erm.e_orig) * a.dot(&hinv_a)).sqrt();
    assert!((ci.lower - (center - half)).abs() < 1e-7 * (1.0 + half), "{} vs {}", ci.lower, center - half);
    assert!((ci.upper - (center + half)).abs() < 1e-7 * (1.0 + half));

    // Sampled members stay inside the exact interval and approach it.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let members = sample_rashomon(&class, ci.threshold, 3000, &mut rng).unwrap();
    let vals: Vec<f64> = members.iter().map(|p| phi.evaluate(&class, p)).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo >= ci.lower - 1e-9 && hi <= ci.upper + 1e-9);
    assert!(hi - lo > 0.5 * (ci.upper - ci.lower));
}

#[test]
fn ridge_descriptor_is_bracketed_by_sampling() {
    let data = noisy_linear(50, 9, 1.0);
    let class = LinearClass::ridge(&data, false, EllipsoidConstraint::identity(2, 1.0)).unwrap();
    let erm = class.minimize_combination(1.0, 0.0).unwrap();
    let threshold = erm.e_orig + 0.3;
    let a = DVector::from_vec(vec![1.0, 0.4]);
    let lo = minimize_linear(&class, &a, threshold).unwrap();
    let hi = -minimize_linear(&class, &(-&a), threshold).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for p in sample_rashomon(&class, threshold, 2000, &mut rng).unwrap() {
        assert!(class.losses(&p).0 <= threshold);
        assert!(class.is_feasible(&p, 1e-12));
        let v = a.dot(&DVector::from_column_slice(&p));
        assert!(v >= lo - 1e-8 && v <= hi + 1e-8);
    }
    // Brute force over a fine polar grid of the feasible region.
    let mut best = f64::INFINITY;
    for i in 0..400 {
        for j in 0..=200 {
            let ang = i as f64 / 400.0 * std::f64::consts::TAU;
            let rad = j as f64 / 200.0;
            let p = [rad * ang.cos(), rad * ang.sin()];
            if class.losses(&p).0 <= threshold {
                best = best.min(a[0] * p[0] + a[1] * p[1]);
            }
        }
    }
    assert!(lo <= best + 1e-9 && best - lo < 1e-2, "{lo} vs grid {best}");
}

#[test]
fn delta_one_gives_bare_set_and_constant_gives_point() {
    let data = noisy_linear(40, 11, 1.0);
    let class = LinearClass::unconstrained(&data, true).unwrap();
    let erm = class.minimize_combination(1.0, 0.0).unwrap();
    let phi = Descriptor::linear_prediction(&class, &[1.0], &[1.0]);
    let ci = rashomon_phi_ci(&class, erm.e_orig, &phi, &tc(1.0, 40), false, None).unwrap();
    assert_eq!(ci.epsilon, 0.0);
    assert!(ci.upper - ci.lower < 1e-6, "{ci:?}");
    let constant = Descriptor::Linear { weights: vec![0.0; 3], offset: 2.5 };
    let ci = rashomon_phi_ci(&class, erm.e_orig, &constant, &tc(0.05, 40), true, None).unwrap();
    assert_eq!((ci.lower, ci.upper), (2.5, 2.5));
}

#[test]
fn range_interval_nests_point_interval() {
    let data = noisy_linear(60, 12, 1.0);
    let class = LinearClass::ridge(&data, true, EllipsoidConstraint::identity(2, 9.0)).unwrap();
    let erm = class.minimize_combination(1.0, 0.0).unwrap();
    let phi = Descriptor::linear_prediction(&class, &[0.2], &[0.9]);
    for d in [0.01, 0.1, 0.5] {
        let p = rashomon_phi_ci(&class, erm.e_orig, &phi, &tc(d, 60), false, None).unwrap();
        let r = rashomon_phi_ci(&class, erm.e_orig, &phi, &tc(d, 60), true, None).unwrap();
        assert!(r.lower <= p.lower + 1e-9 && r.upper >= p.upper - 1e-9);
    }
}

#[test]
fn custom_descriptor_needs_sampling() {
    let data = noisy_linear(30, 13, 1.0);
    let class = LinearClass::unconstrained(&data, true).unwrap();
    let erm = class.minimize_combination(1.0, 0.0).unwrap();
    let phi = Descriptor::Custom(Arc::new(|m: &dyn PredictionModel| m.predict(&[1.0], &[0.0])));
    let t = tc(0.1, 30);
    assert!(matches!(rashomon_phi_ci(&class, erm.e_orig, &phi, &t, false, None), Err(Error::NonOptimizableDescriptor)));
    let sampled =
        rashomon_phi_ci(&class, erm.e_orig, &phi, &t, false, Some(SamplingConfig { samples: 500, seed: 1 })).unwrap();
    assert_eq!(sampled.method, PhiMethod::SampleApproximation { samples: 500 });
    let exact = rashomon_phi_ci(&class, erm.e_orig, &Descriptor::linear_prediction(&class, &[1.0], &[0.0]), &t, false, None)
        .unwrap();
    assert!(sampled.lower >= exact.lower - 1e-9 && sampled.upper <= exact.upper + 1e-9);
}

#[test]
fn rkhs_class_binds_through_spec() {
    let data = noisy_linear(20, 14, 1.0);
    let rk = mcrkit::RkhsClass::from_training(&data, mcrkit::KernelSpec::rbf(1.0).unwrap(), 1.0).unwrap();
    let spec = ClassSpec::Rkhs { class: rk, estimator: SwitchEstimator::Switch };
    let bound = spec.bind(&data).unwrap();
    assert_eq!(bound.param_dim(), 20);
}
