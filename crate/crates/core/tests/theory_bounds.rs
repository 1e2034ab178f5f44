use mcrkit::estimators::RelianceMode;
use mcrkit::rkhs_class::{KernelSpec, RkhsClass};
use mcrkit::theory_bounds::{
    b_ind_linear, b_ind_rkhs, best_in_class_ci, convex_path_gap, covering_segment, estimate_r_d, estimate_r_x,
    inner_bounds, inner_bounds_with, outer_bounds, phi_ci_epsilons, q_uniform, q_uniform_with, BoundKind,
    CoveringNumbers, TheoryConstants,
};
use mcrkit::EllipsoidConstraint;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tc(b_ind: f64, b_ref: f64, b_orig: f64, b_switch: f64, n: usize, delta: f64) -> TheoryConstants {
    TheoryConstants { b_ind, b_ref, b_orig, b_switch, n, delta }
}

/// Second implementation, transcribed display by display.
mod oracle {
    pub fn eps_outer(eps: f64, b_ref: f64, n: f64, d: f64) -> f64 {
        eps + 2.0 * b_ref * ((3.0 / d).ln() / (2.0 * n)).sqrt()
    }
    pub fn q_outer(bi: f64, bo: f64, bs: f64, n: f64, d: f64) -> f64 {
        let num = bs - bi * ((6.0 / d).ln() / n).sqrt();
        let den = bo + bi * ((6.0 / d).ln() / (2.0 * n)).sqrt();
        bs / bo - num / den
    }
    pub fn q_best(bi: f64, bo: f64, bs: f64, n: f64, d: f64) -> f64 {
        let num = bs - bi * ((12.0 / d).ln() / n).sqrt();
        let den = bo + bi * ((12.0 / d).ln() / (2.0 * n)).sqrt();
        bs / bo - num / den
    }
    pub fn eps_best(b_ref: f64, n: f64, d: f64) -> f64 {
        2.0 * b_ref * ((6.0 / d).ln() / (2.0 * n)).sqrt()
    }
    #[allow(clippy::too_many_arguments)]
    pub fn q_unif(bi: f64, bo: f64, bs: f64, n: f64, d: f64, r: f64, n_r: f64, n_r2: f64) -> f64 {
        let top = bs - (bi * ((4.0 * n_r2 / d).ln() / n).sqrt() + 2.0 * r * 2f64.sqrt());
        let bottom = bo + (bi * ((4.0 * n_r / d).ln() / (2.0 * n)).sqrt() + 2.0 * r);
        bs / bo - top / bottom
    }
    pub fn eps_inner(eps: f64, b_ref: f64, n: f64, d: f64, r: f64, n_r: f64) -> f64 {
        eps - 2.0 * b_ref * ((4.0 * n_r / d).ln() / (2.0 * n)).sqrt() - 2.0 * r
    }
    pub fn q1_diff(bi: f64, n: f64, d: f64) -> f64 {
        (1.0 + 1.0 / 2f64.sqrt()) * bi * ((6.0 / d).ln() / n).sqrt()
    }
    pub fn q2_diff(bi: f64, n: f64, d: f64) -> f64 {
        (1.0 + 1.0 / 2f64.sqrt()) * bi * ((12.0 / d).ln() / n).sqrt()
    }
    pub fn q3_diff(bi: f64, n: f64, d: f64, r: f64, n_r: f64, n_r2: f64) -> f64 {
        bi * (((8.0 * n_r2 / d).ln() / n).sqrt() + ((8.0 * n_r / d).ln() / (2.0 * n)).sqrt())
            + 2.0 * r * (2f64.sqrt() + 1.0)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn worked_values() {
    let t = tc(1.0, 1.0, 0.5, 1.0, 1000, 0.05);
    let r = outer_bounds(&t, 0.0, RelianceMode::Ratio).unwrap();
    assert!((r.epsilon_adjusted - 2.0 * ((60f64).ln() / 2000.0).sqrt()).abs() < 1e-15);
    assert!((r.epsilon_adjusted - 0.0905).abs() < 5e-4);

    let t = tc(1.0, 1.0, 0.5, 1.0, 10_000, 0.05);
    let r = best_in_class_ci(&t, RelianceMode::Difference).unwrap();
    assert!((r.q - 0.0400).abs() < 5e-4, "{}", r.q);
    assert_eq!(r.kind, BoundKind::BestInClass);

    let t = tc(4.0, 4.0, 1.0, 4.0, 2873, 0.05);
    let (e4, _) = phi_ci_epsilons(&t);
    assert!((e4 - 0.1825).abs() < 5e-4, "{e4}");
}

#[test]
fn sqrt_terms_halve_when_n_quadruples() {
    let a = outer_bounds(&tc(1.0, 1.0, 0.5, 1.0, 500, 0.1), 0.2, RelianceMode::Difference).unwrap();
    let b = outer_bounds(&tc(1.0, 1.0, 0.5, 1.0, 2000, 0.1), 0.2, RelianceMode::Difference).unwrap();
    assert!(rel_close((a.epsilon_adjusted - 0.2) / 2.0, b.epsilon_adjusted - 0.2, 1e-14));
    assert!(rel_close(a.q / 2.0, b.q, 1e-14));
}

#[test]
fn best_in_class_is_outer_at_half_delta() {
    let t = tc(2.0, 1.5, 0.3, 1.9, 700, 0.08);
    for mode in [RelianceMode::Ratio, RelianceMode::Difference] {
        let b = best_in_class_ci(&t, mode).unwrap();
        let o = outer_bounds(&tc(2.0, 1.5, 0.3, 1.9, 700, 0.04), 0.0, mode).unwrap();
        assert_eq!(b.q, o.q);
        assert_eq!(b.epsilon_adjusted, o.epsilon_adjusted);
    }
    assert_eq!(best_in_class_ci(&tc(0.0, 0.0, 0.3, 1.9, 700, 0.08), RelianceMode::Ratio).unwrap().q, 0.0);
}

#[test]
fn uniform_bound_cases() {
    let t = tc(0.0, 0.0, 0.5, 2.0, 100, 0.1);
    assert!(q_uniform(&t, 1e-300, 1, RelianceMode::Ratio).unwrap().abs() < 1e-12);
    let t = tc(1.0, 1.0, 0.5, 2.0, 10_000, 0.1);
    let a = q_uniform(&t, 0.01, 100, RelianceMode::Ratio).unwrap();
    let b = q_uniform(&t, 0.01, 200, RelianceMode::Ratio).unwrap();
    assert!(b > a);
    let o = oracle::q_unif(1.0, 0.5, 2.0, 1e4, 0.1, 0.01, 100.0, 100.0);
    assert!(rel_close(a, o, 1e-12), "{a} vs {o}");
    assert!(q_uniform(&t, 0.01, 0, RelianceMode::Ratio).is_err());
}

#[test]
fn inner_bound_cases() {
    let t = tc(1.0, 0.0, 0.5, 2.0, 100, 0.1);
    let r = inner_bounds(&t, 0.4, 0.0, 1, RelianceMode::Ratio).unwrap();
    assert_eq!(r.epsilon_adjusted, 0.4);
    let t = tc(1.0, 1.0, 0.5, 2.0, 50, 0.1);
    let r = inner_bounds(&t, 0.01, 0.05, 10, RelianceMode::Ratio).unwrap();
    assert!(r.epsilon_adjusted < 0.0);
    assert_eq!(r.kind, BoundKind::Inner);
    let q = q_uniform(&tc(1.0, 1.0, 0.5, 2.0, 50, 0.05), 0.05, 10, RelianceMode::Ratio).unwrap();
    assert_eq!(r.q, q);
}

#[test]
fn phi_epsilons_order_and_delta_one() {
    let (e4, e5) = phi_ci_epsilons(&tc(1.0, 1.0, 0.5, 1.0, 100, 1.0));
    assert_eq!(e4, 0.0);
    assert!(e5 > 0.0);
    for d in [0.01, 0.2, 0.9] {
        let (e4, e5) = phi_ci_epsilons(&tc(1.0, 1.0, 0.5, 1.0, 100, d));
        assert!(e5 > e4);
    }
}

#[test]
fn dual_implementation_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let bi = rng.random_range(0.0..10.0);
        let bref = rng.random_range(0.0..bi + 1e-9);
        let bs = rng.random_range(0.1..10.0);
        let bo = rng.random_range(0.01..bs);
        let n = rng.random_range(2..100_000usize);
        let d = rng.random_range(0.001..0.999);
        let r = rng.random_range(0.0..0.2);
        let n_r = rng.random_range(1.0..1e6f64).floor();
        let n_r2 = (n_r / rng.random_range(1.0..10.0f64)).floor().max(1.0);
        let eps = rng.random_range(0.0..2.0);
        let nf = n as f64;
        let t = tc(bi, bref, bo, bs, n, d);
        let cov = CoveringNumbers { at_r: n_r, at_r_sqrt2: n_r2 };

        let o = outer_bounds(&t, eps, RelianceMode::Ratio).unwrap();
        assert!(rel_close(o.epsilon_adjusted, oracle::eps_outer(eps, bref, nf, d), 1e-12));
        assert!(rel_close(o.q, oracle::q_outer(bi, bo, bs, nf, d), 1e-12));
        let od = outer_bounds(&t, eps, RelianceMode::Difference).unwrap();
        assert!(rel_close(od.q, oracle::q1_diff(bi, nf, d), 1e-12));

        let b = best_in_class_ci(&t, RelianceMode::Ratio).unwrap();
        assert!(rel_close(b.q, oracle::q_best(bi, bo, bs, nf, d), 1e-12));
        assert!(rel_close(b.epsilon_adjusted, oracle::eps_best(bref, nf, d), 1e-12));
        let bd = best_in_class_ci(&t, RelianceMode::Difference).unwrap();
        assert!(rel_close(bd.q, oracle::q2_diff(bi, nf, d), 1e-12));

        let q = q_uniform_with(&t, r, cov, RelianceMode::Ratio).unwrap();
        assert!(rel_close(q, oracle::q_unif(bi, bo, bs, nf, d, r, n_r, n_r2), 1e-12));

        let inn = inner_bounds_with(&t, eps, r, cov, RelianceMode::Ratio).unwrap();
        assert!(rel_close(inn.epsilon_adjusted, oracle::eps_inner(eps, bref, nf, d, r, n_r), 1e-12));
        assert!(rel_close(inn.q, oracle::q_unif(bi, bo, bs, nf, d / 2.0, r, n_r, n_r2), 1e-12));
        let innd = inner_bounds_with(&t, eps, r, cov, RelianceMode::Difference).unwrap();
        assert!(rel_close(innd.q, oracle::q3_diff(bi, nf, d, r, n_r, n_r2), 1e-12));

        let (e4, e5) = phi_ci_epsilons(&t);
        assert!(rel_close(e4, 2.0 * bref * ((1.0 / d).ln() / (2.0 * nf)).sqrt(), 1e-12));
        assert!(rel_close(e5, 2.0 * bref * ((2.0 / d).ln() / (2.0 * nf)).sqrt(), 1e-12));
    }
}

#[test]
fn invalid_constants_rejected() {
    assert!(outer_bounds(&tc(-1.0, 0.0, 0.5, 1.0, 10, 0.1), 0.0, RelianceMode::Difference).is_err());
    assert!(outer_bounds(&tc(1.0, 0.0, 0.5, 1.0, 10, 0.0), 0.0, RelianceMode::Difference).is_err());
    assert!(outer_bounds(&tc(1.0, 0.0, 0.0, 1.0, 10, 0.1), 0.0, RelianceMode::Ratio).is_err());
    assert!(outer_bounds(&tc(1.0, 0.0, 0.5, 1.0, 0, 0.1), 0.0, RelianceMode::Ratio).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]
    #[test]
    fn constants_are_nonnegative_and_monotone(
        bi in 0.0f64..5.0, extra in 0.0f64..5.0, bs in 0.5f64..5.0, frac in 0.05f64..1.0,
        n in 2usize..50_000, d in 0.001f64..0.99, cov in 1u64..10_000, r in 0.0f64..0.1,
    ) {
        let bo = frac * bs;
        let base = tc(bi, bi, bo, bs, n, d);
        for mode in [RelianceMode::Ratio, RelianceMode::Difference] {
            let o = outer_bounds(&base, 0.1, mode).unwrap();
            let b = best_in_class_ci(&base, mode).unwrap();
            let q = q_uniform(&base, r, cov, mode).unwrap();
            prop_assert!(o.q >= 0.0 && b.q >= 0.0 && q >= 0.0);
            prop_assert!(o.epsilon_adjusted >= 0.1);
            prop_assert!(inner_bounds(&base, 0.1, r, cov, mode).unwrap().epsilon_adjusted <= 0.1);

            let larger_n = tc(bi, bi, bo, bs, n * 2, d);
            prop_assert!(outer_bounds(&larger_n, 0.1, mode).unwrap().q <= o.q);
            prop_assert!(q_uniform(&larger_n, r, cov, mode).unwrap() <= q);
            let smaller_delta = tc(bi, bi, bo, bs, n, d / 2.0);
            prop_assert!(outer_bounds(&smaller_delta, 0.1, mode).unwrap().q >= o.q);
            prop_assert!(q_uniform(&smaller_delta, r, cov, mode).unwrap() >= q);
            let larger_b = tc(bi + extra, bi + extra, bo, bs.max(bo), n, d);
            prop_assert!(outer_bounds(&larger_b, 0.1, mode).unwrap().q >= o.q);
            prop_assert!(outer_bounds(&larger_b, 0.1, mode).unwrap().epsilon_adjusted >= o.epsilon_adjusted);
            prop_assert!(q_uniform(&base, r, cov * 2, mode).unwrap() >= q);
        }
    }
}

#[test]
fn linear_loss_cap_cases() {
    let con = EllipsoidConstraint::identity(2, 1.0);
    assert_eq!(b_ind_linear(&con, 1.0, 0.0, 1.0), 4.0);
    let zero = EllipsoidConstraint::identity(2, 0.0);
    assert_eq!(b_ind_linear(&zero, 3.0, -2.0, 1.0), 4.0);
    let con = EllipsoidConstraint::identity(1, 4.0);
    assert_eq!(b_ind_linear(&con, 1.0, -3.0, 3.0), 25.0);
}

#[test]
fn kernel_loss_cap_cases() {
    let d = DMatrix::from_row_slice(1, 1, &[0.0]);
    let class = RkhsClass::new(&d, 1, KernelSpec::rbf(1.0).unwrap(), 0.0, 1.0).unwrap();
    assert_eq!(b_ind_rkhs(&class, 1.0, -1.0, 1.0), 4.0);
    let class = RkhsClass::new(&d, 1, KernelSpec::rbf(1.0).unwrap(), 0.0, 0.0).unwrap();
    assert_eq!(b_ind_rkhs(&class, 1.0, -3.0, 2.0), 9.0);
}

#[test]
fn r_d_is_sample_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let dict = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
    let class = RkhsClass::new(&dict, 1, KernelSpec::rbf(0.7).unwrap(), 0.0, 1.0).unwrap();
    let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-2.0..2.0));
    let got = estimate_r_d(&class, &x).unwrap();
    let inv = class.gram().clone().try_inverse().unwrap();
    let mut best: f64 = 0.0;
    for i in 0..30 {
        let v = DVector::from_iterator(4, (0..4).map(|r| class.kernel.evaluate(&[x[(i, 0)], x[(i, 1)]], class.atom(r))));
        best = best.max((v.transpose() * &inv * &v)[0]);
    }
    assert!(rel_close(got, best, 1e-9));
    // Dictionary rows attain v' K^{-1} v = 1.
    assert!(rel_close(estimate_r_d(&class, &dict).unwrap(), 1.0, 1e-8));
}

#[test]
fn loss_caps_hold_on_constrained_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
    let con = EllipsoidConstraint::new(m.clone(), 1.5).unwrap();
    let xs = DMatrix::from_fn(200, 2, |_, _| rng.random_range(-2.0..2.0));
    let r_x = estimate_r_x(&con, &xs).unwrap();
    let cap = b_ind_linear(&con, r_x, -1.0, 2.0);
    let chol = m.clone().cholesky().unwrap();
    for k in 0..10_000 {
        // Boundary point half of the time, interior otherwise.
        let z = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0f64));
        let scale = if k % 2 == 0 { 1.0 } else { rng.random_range(0.0..1.0f64) };
        let u = &z / z.norm() * (1.5f64).sqrt() * scale;
        let beta = chol.l().transpose().solve_upper_triangular(&u).unwrap();
        assert!(beta.dot(&(&m * &beta)) <= 1.5 * (1.0 + 1e-12));
        let i = rng.random_range(0..200);
        let x = xs.row(i).transpose();
        let y = rng.random_range(-1.0..2.0);
        assert!((y - x.dot(&beta)).powi(2) <= cap);
    }
}

#[test]
fn kernel_loss_cap_holds_with_negative_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let dict = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
    let class = RkhsClass::new(&dict, 1, KernelSpec::rbf(0.5).unwrap(), -1.2, 0.8).unwrap();
    let xs = DMatrix::from_fn(100, 2, |_, _| rng.random_range(-1.5..1.5));
    let r_d = estimate_r_d(&class, &xs).unwrap();
    let cap = b_ind_rkhs(&class, r_d, -0.5, 0.5);
    let chol = class.gram().clone().cholesky().unwrap();
    for _ in 0..10_000 {
        let z = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0f64));
        let u = &z / z.norm() * (0.8f64).sqrt();
        let alpha = chol.l().transpose().solve_upper_triangular(&u).unwrap();
        let i = rng.random_range(0..100);
        let row = [xs[(i, 0)], xs[(i, 1)]];
        let pred = class.mu + (0..5).map(|r| class.kernel.evaluate(&row, class.atom(r)) * alpha[r]).sum::<f64>();
        let y = rng.random_range(-0.5..0.5);
        assert!((y - pred).powi(2) <= cap, "{} > {cap}", (y - pred).powi(2));
    }
}

#[test]
fn segment_gap_matches_row_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
    let a = [0.3, -0.2, 1.0];
    let b = [0.1, 0.4, 0.8];
    let mut best: f64 = 0.0;
    for i in 0..40 {
        let v: f64 = (0..3).map(|j| x[(i, j)] * (b[j] - a[j])).sum();
        best = best.max(v.abs());
    }
    assert!((convex_path_gap(&a, &b, &x).unwrap() - best).abs() < 1e-14);
    assert_eq!(convex_path_gap(&a, &a, &x).unwrap(), 0.0);
    assert!(convex_path_gap(&a, &b[..2], &x).is_err());
    assert_eq!(covering_segment(convex_path_gap(&a, &a, &x).unwrap(), 0.1), 1);
}
