mod common;

use agestruct::certificate::{
    b3_search, clf_from_delay, clf_from_profile, mu1, observer_feasible, observer_quadratic,
    overshoot_bound, sigma_search, verify_decay, Certificate,
};
use agestruct::delay::DelayModel;
use agestruct::trajectory::{make_constant, make_transition, reference_profile, validate};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kernel integral on a dense closed-form grid, independent of the age grid.
struct KernelOracle {
    ages: Vec<f64>,
    kernel: Vec<f64>,
    density: Vec<f64>,
    h: f64,
}

impl KernelOracle {
    fn new(k0: f64, d_star: f64, panels: usize) -> Self {
        let h = MAX_AGE / panels as f64;
        let ages: Vec<f64> = (0..=panels).map(|i| i as f64 * h).collect();
        let decay = d_star + MORTALITY;
        let kernel: Vec<f64> = ages
            .iter()
            .map(|a| k0 * a * (MAX_AGE - a) * (-decay * a).exp())
            .collect();
        let mut tail = vec![0.0; ages.len()];
        for i in (0..panels).rev() {
            tail[i] = tail[i + 1] + 0.5 * h * (kernel[i] + kernel[i + 1]);
        }
        let moment = trapezoid(
            &ages
                .iter()
                .zip(&kernel)
                .map(|(a, k)| a * k)
                .collect::<Vec<_>>(),
            h,
        );
        let density = tail.iter().map(|t| t / moment).collect();
        Self {
            ages,
            kernel,
            density,
            h,
        }
    }

    fn integral(&self, lambda: f64, sigma: f64) -> f64 {
        let values: Vec<f64> = self
            .ages
            .iter()
            .zip(&self.kernel)
            .zip(&self.density)
            .map(|((a, k), d)| (sigma * a).exp() * (k - lambda * d).abs())
            .collect();
        trapezoid(&values, self.h)
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[values.len() - 1]))
}

#[test]
fn b3_minimum_matches_dense_scan() {
    let (params, eq) = calibrated(401);
    let (lambda, value) = b3_search(&eq.k_tilde).unwrap();
    assert!(value < 1.0);
    let oracle = KernelOracle::new(params.k.eval(1.0), eq.d_star, 40_000);
    let (best_lambda, best) = (1..=5000)
        .map(|i| i as f64 * 1e-3)
        .map(|l| (l, oracle.integral(l, 0.0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((value - best).abs() < 1e-5, "{value} vs {best}");
    assert!(
        (lambda - best_lambda).abs() < 5e-3,
        "{lambda} vs {best_lambda}"
    );
    // λ = 0 gives ∫k̃ = 1
    assert!((oracle.integral(0.0, 0.0) - 1.0).abs() < 1e-6);
}

#[test]
fn b3_value_stable_under_grid_refinement() {
    let (_, coarse) = calibrated(401);
    let (_, fine) = calibrated(801);
    let a = b3_search(&coarse.k_tilde).unwrap().1;
    let b = b3_search(&fine.k_tilde).unwrap().1;
    assert!((a - b).abs() < 1e-4, "{a} {b}");
}

#[test]
fn sigma_is_bracketed_by_the_oracle() {
    let (params, eq) = calibrated(401);
    let (lambda, _) = b3_search(&eq.k_tilde).unwrap();
    let sigma = sigma_search(&eq.k_tilde, lambda).unwrap();
    assert!(sigma > 0.0);
    let oracle = KernelOracle::new(params.k.eval(1.0), eq.d_star, 40_000);
    assert!(oracle.integral(lambda, sigma) < 1.0);
    assert!(oracle.integral(lambda, sigma + 1e-4) > 1.0);
    let samples: Vec<f64> = (0..50)
        .map(|i| oracle.integral(lambda, i as f64 * 0.02))
        .collect();
    assert!(samples.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn observer_pair_feasible_and_grid_oracle_agrees() {
    let form = observer_quadratic(4.0, 8.0).unwrap();
    let (p1, p2) = (form.p1, form.p2);
    let lhs = 2.0 + 4.0 * p1 - 16.0 * p2;
    assert!(lhs * lhs < 32.0 * p1 - 32.0 * p1 * p1);
    assert!(p1 * p1 < 4.0 * p2);
    let feasible = (1..=200)
        .flat_map(|i| (1..=400).map(move |j| (i as f64 * 0.01, j as f64 * 0.01)))
        .filter(|&(a, b)| observer_feasible(4.0, 8.0, a, b))
        .count();
    assert!(feasible > 0);
    assert!(!observer_feasible(4.0, 8.0, 2.0, 0.5));
}

#[test]
fn observer_form_eigen_bounds_hold() {
    let form = observer_quadratic(4.0, 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let e = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let n2 = e[0] * e[0] + e[1] * e[1];
        let v = form.value(e);
        assert!(form.k1 * n2 <= v * (1.0 + 1e-12) && v <= form.k2 * n2 * (1.0 + 1e-12));
    }
}

#[test]
fn rate_constants_formulae() {
    let (_, eq) = calibrated(401);
    let traj = make_transition(1.0, 3.0, 5.0).unwrap();
    let report = validate(&traj, &eq, bounds(), 20.0);
    let cert =
        Certificate::build(&eq, bounds(), &gains(), report.inf_rate, report.sup_rate).unwrap();
    assert!((cert.mu2 - 4.0).abs() < 1e-12);
    assert!(cert.l_rate > 0.0);
    assert!(cert.violations().is_empty(), "{:?}", cert.violations());
    assert!(cert.big_m * cert.sigma > cert.beta2 * (2.0 * cert.sigma * MAX_AGE).exp());
    let constant = mu1(1.0, bounds(), 2.0, 0.0, 0.0);
    assert!((constant - 2.0 * 0.5).abs() < 1e-12);
}

#[test]
fn clf_forms_agree_and_vanish_at_tracking() {
    let (params, eq) = calibrated(401);
    let traj = make_transition(1.0, 3.0, 5.0).unwrap();
    let report = validate(&traj, &eq, bounds(), 20.0);
    let cert =
        Certificate::build(&eq, bounds(), &gains(), report.inf_rate, report.sup_rate).unwrap();
    let model = DelayModel::new(&params, &eq);

    let x0 = x0(&params);
    let state = model.init_state(&x0, &traj, gains().z0, &params).unwrap();
    let a = clf_from_profile(&x0, gains().z0, &traj, &eq, &model, &cert, 0.0).unwrap();
    let b = clf_from_delay(&state, &model, &cert).unwrap();
    assert!((a.v - b.v).abs() < 1e-8 * a.v.max(1.0), "{} {}", a.v, b.v);

    let tracking = reference_profile(&traj, &eq, 2.0);
    let v = clf_from_profile(&tracking, [0.0, eq.d_star], &traj, &eq, &model, &cert, 2.0).unwrap();
    assert!(v.v.abs() < 1e-10, "{}", v.v);
}

#[test]
fn initial_clf_matches_quadrature_oracle() {
    let (params, eq) = calibrated(401);
    let traj = make_transition(1.0, 3.0, 5.0).unwrap();
    let report = validate(&traj, &eq, bounds(), 20.0);
    let cert =
        Certificate::build(&eq, bounds(), &gains(), report.inf_rate, report.sup_rate).unwrap();
    let model = DelayModel::new(&params, &eq);
    let x0 = x0(&params);
    let v = clf_from_profile(&x0, gains().z0, &traj, &eq, &model, &cert, 0.0).unwrap();

    // dense closed-form evaluation of η, W, C and the observer error
    let k0 = params.k.eval(1.0);
    let decay = eq.d_star + MORTALITY;
    let pi = |a: f64| {
        simpson(
            |s| k0 * s * (MAX_AGE - s) * (-decay * (s - a)).exp(),
            a,
            MAX_AGE,
            1000,
        )
    };
    let x_star = |a: f64| eq.x_star.eval(0.0) * (-decay * a).exp();
    let x0_fn = |a: f64| x0.eval(a);
    let big_pi = simpson(|a| pi(a) * x0_fn(a), 0.0, MAX_AGE, 400)
        / simpson(|a| pi(a) * x_star(a), 0.0, MAX_AGE, 400);
    let eta = big_pi.ln();
    let psi = |a: f64| x0_fn(a) / (x_star(a) * big_pi) - 1.0;
    let dense: Vec<f64> = (0..=400).map(|i| i as f64 * MAX_AGE / 400.0).collect();
    let w = dense
        .iter()
        .map(|&a| (-cert.sigma * a).exp() * psi(a).abs())
        .fold(0.0, f64::max);
    let c = 1.0 + dense.iter().map(|&a| psi(a)).fold(0.0, f64::min);
    let e = [0.0 - eta, 0.5 - eq.d_star];
    let q = 0.5 * cert.big_m * (w / c).powi(2) + cert.form().value(e);
    let oracle = eta * eta + cert.alpha1 * q.sqrt() + cert.alpha2 * q;
    assert!((v.v - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", v.v);

    // regression pin at 401 nodes
    assert!((v.v / 136.567_590_090 - 1.0).abs() < 1e-8, "{}", v.v);
}

#[test]
fn zero_trace_and_negative_control() {
    let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
    let zero = vec![0.0; t.len()];
    assert!(verify_decay(&t, &zero, 1.0, None).passed());
    let v: Vec<f64> = t.iter().map(|t| (-0.2 * t).exp()).collect();
    assert!(verify_decay(&t, &v, 0.2, None).passed());
    assert!(!verify_decay(&t, &v, 2.0, None).passed());
}

#[test]
fn overshoot_is_class_k() {
    let (_, eq) = calibrated(401);
    let traj = make_constant(1.0).unwrap();
    let report = validate(&traj, &eq, bounds(), 20.0);
    let cert =
        Certificate::build(&eq, bounds(), &gains(), report.inf_rate, report.sup_rate).unwrap();
    assert_eq!(overshoot_bound(0.0, 0.0, &cert), 0.0);
    let small = overshoot_bound(1e-4, 0.0, &cert);
    let larger = overshoot_bound(2e-4, 0.0, &cert);
    assert!(0.0 < small && small < larger);
}
