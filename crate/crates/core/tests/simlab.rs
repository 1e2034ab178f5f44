use mcrkit::estimators::{e_orig, e_switch, LossKind};
use mcrkit::simlab::{
    causal_identity_check, coverage_experiment, simulate_dgp, standard_linear_baseline, standard_linear_ci, CausalDgp,
    CoverageConfig, DgpSpec, Focus, TrueRegression, TARGET_MR_F0, TARGET_STANDARD_MR_F0,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noise_variance_examples() {
    assert_eq!(DgpSpec::new(0.0, 10, 0).noise_variance(), 6.0);
    let s = DgpSpec { gamma: 0.0, n: 10, seed: 0, var_x: 2.0, cov_x: -0.5 };
    // Var(x1 + 2 x2) = 2 + 8 - 2.
    assert_eq!(s.noise_variance(), 8.0);
}

#[test]
fn linear_truth_reliance_from_covariance_plug_in() {
    // For f0 = x1 + 2 x2 the switched loss adds 2 Var(x1) to the noise
    // variance, so MR(f0) = 1 + 2/6.
    let spec = DgpSpec::new(0.0, 40_000, 5);
    assert!((spec.analytic_mr_f0() - 4.0 / 3.0).abs() < 1e-15);
    let data = simulate_dgp(&spec).unwrap();
    let f0 = TrueRegression(spec);
    let sample = data.select_rows(&(0..3000).collect::<Vec<_>>()).unwrap();
    let mr = e_switch(&f0, LossKind::SquaredError, &sample) / e_orig(&f0, LossKind::SquaredError, &sample);
    assert!((mr - 4.0 / 3.0).abs() < 0.05, "{mr}");
    let big = mcrkit::simlab::additive_switch_loss(&spec, &data) / e_orig(&f0, LossKind::SquaredError, &data);
    assert!((big - 4.0 / 3.0).abs() < 0.02, "{big}");
}

#[test]
fn simulation_is_reproducible_with_correct_moments() {
    let spec = DgpSpec::new(0.2, 20_000, 9);
    let a = simulate_dgp(&spec).unwrap();
    let b = simulate_dgp(&spec).unwrap();
    assert_eq!(a, b);
    let n = a.n() as f64;
    let x1: Vec<f64> = (0..a.n()).map(|i| a.x1_row(i)[0]).collect();
    let x2: Vec<f64> = (0..a.n()).map(|i| a.x2_row(i)[0]).collect();
    let m1 = x1.iter().sum::<f64>() / n;
    let m2 = x2.iter().sum::<f64>() / n;
    let v1 = x1.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / (n - 1.0);
    let v2 = x2.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / (n - 1.0);
    let c = x1.iter().zip(&x2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / (n - 1.0);
    let se_var = (2.0 / n).sqrt();
    let se_cov = ((1.0 + 0.25f64 * 0.25) / n).sqrt();
    assert!((v1 - 1.0).abs() < 5.0 * se_var, "{v1}");
    assert!((v2 - 1.0).abs() < 5.0 * se_var, "{v2}");
    assert!((c - 0.25).abs() < 5.0 * se_cov, "{c}");
    assert!(m1.abs() < 5.0 / n.sqrt() && m2.abs() < 5.0 / n.sqrt());
    let names = a.column_names();
    assert_eq!(names, vec!["y", "x1", "x2"]);
}

#[test]
fn invalid_covariance_is_rejected() {
    let spec = DgpSpec { gamma: 0.0, n: 5, seed: 0, var_x: 1.0, cov_x: 1.5 };
    assert!(simulate_dgp(&spec).is_err());
}

fn small(reps: usize) -> CoverageConfig {
    let mut cfg = CoverageConfig::new(vec![0.0], 120, reps, 20, 77);
    cfg.population_size = 2000;
    cfg
}

#[test]
fn single_rep_plumbing_and_csv() {
    let report = coverage_experiment(&small(1)).unwrap();
    assert_eq!(report.records.len(), 1);
    let row = report.row(0.0, TARGET_MR_F0).unwrap();
    assert_eq!(row.reps, 1);
    assert!(row.coverage == 0.0 || row.coverage == 1.0);
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("gamma,target,n,reps,coverage,mean_width\n"), "{text}");
    assert_eq!(text.lines().count(), 1 + report.rows.len());
}

#[test]
fn coverage_is_deterministic_and_focus_changes_target() {
    let a = coverage_experiment(&small(3)).unwrap();
    let b = coverage_experiment(&small(3)).unwrap();
    assert_eq!(a, b);
    let mut second = small(3);
    second.focus = Focus::Second;
    let c = coverage_experiment(&second).unwrap();
    assert!(c.population_mr[0].1 > a.population_mr[0].1);
}

#[test]
fn standard_baseline_is_deterministic() {
    let data = simulate_dgp(&DgpSpec::new(0.0, 200, 3)).unwrap();
    let a = standard_linear_ci(&data, 100, 30, 4).unwrap();
    assert_eq!(a, standard_linear_ci(&data, 100, 30, 4).unwrap());
    assert!(a.0 < a.1);
    let report = standard_linear_baseline(&small(4)).unwrap();
    assert!(report.row(0.0, TARGET_STANDARD_MR_F0).is_some());
    assert!(report.row(0.0, TARGET_MR_F0).is_none());
}

#[test]
fn causal_worked_example() {
    // C and T independent fair coins, Y = C T: CATE(c) = c, Var(T) = 1/4,
    // E[C^2 | T = t] = 1/2, so the gap is 1/4 (1/2 + 1/2) = 1/4.
    let dgp = CausalDgp::with_constant_propensity(vec![0.5, 0.5], 0.5, vec![[0.0, 0.0], [0.0, 1.0]], 0.0);
    let r = causal_identity_check(&dgp, 100_000, 1).unwrap();
    assert_eq!(r.rhs, 0.25);
    assert!((r.lhs - r.rhs).abs() <= 4.0 * r.mc_se, "{r:?}");
}

#[test]
fn causal_degenerate_cases() {
    let flat = CausalDgp::with_constant_propensity(vec![0.3, 0.7], 0.4, vec![[1.0, 1.0], [-2.0, -2.0]], 1.0);
    let r = causal_identity_check(&flat, 10_000, 2).unwrap();
    assert_eq!(r.rhs, 0.0);
    assert_eq!(r.lhs, 0.0);
    let all_treated = CausalDgp::with_constant_propensity(vec![0.5, 0.5], 1.0 - 1e-9, vec![[0.0, 3.0], [1.0, -1.0]], 0.5);
    let r = causal_identity_check(&all_treated, 10_000, 3).unwrap();
    assert!(r.rhs.abs() < 1e-7, "{r:?}");
    assert!(r.lhs.abs() < 1e-3);
    let bad = CausalDgp::with_constant_propensity(vec![1.0], 1.0, vec![[0.0, 1.0]], 0.0);
    assert!(causal_identity_check(&bad, 100, 0).is_err());
}

#[test]
fn causal_identity_on_random_confounded_dgps() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..5 {
        let profiles = rng.random_range(2..6);
        let dgp = CausalDgp {
            profile_probs: (0..profiles).map(|_| rng.random_range(0.1..1.0)).collect(),
            propensity: (0..profiles).map(|_| rng.random_range(0.1..0.9)).collect(),
            mean_outcome: (0..profiles).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect(),
            noise_sd: rng.random_range(0.0..1.5),
        };
        let r = causal_identity_check(&dgp, 100_000, 100 + k).unwrap();
        assert!((r.lhs - r.rhs).abs() <= 4.0 * r.mc_se, "{dgp:?} {r:?}");
    }
}
