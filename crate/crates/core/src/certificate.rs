//! Lyapunov certificate of the closed loop and its numerical checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{saturate, ControllerGains};
use crate::delay::{DelayModel, DelayState};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::model::{Equilibrium, InputBounds};
use crate::trajectory::Trajectory;

const B3_SCAN: (f64, f64, usize) = (1e-3, 1e3, 241);
const OBSERVER_SCAN: (f64, f64, usize) = (1e-3, 1e2, 200);

/// `∫ₐᴬ k̃ / ∫₀ᴬ s k̃(s) ds`, a probability density on `[0, A]`.
pub fn tail_density(k_tilde: &GridFunction) -> Vec<f64> {
    let grid = k_tilde.grid();
    let tail = grid.tail_integrals(k_tilde.values());
    let first_moment = grid.integrate(
        &grid
            .ages()
            .zip(k_tilde.values())
            .map(|(a, k)| a * k)
            .collect::<Vec<_>>(),
    );
    tail.iter().map(|t| t / first_moment).collect()
}

/// `∫ e^{σa} |k̃(a) − λ · tail_density(a)| da`
pub fn b3_integral(k_tilde: &GridFunction, density: &[f64], lambda: f64, sigma: f64) -> f64 {
    let grid = k_tilde.grid();
    let values: Vec<f64> = grid
        .ages()
        .zip(k_tilde.values())
        .zip(density)
        .map(|((a, k), d)| (sigma * a).exp() * (k - lambda * d))
        .collect();
    abs_quadrature(&values, grid.spacing())
}

/// `∫ |f|` from uniform samples: each double panel integrates the absolute
/// value of its interpolating quadratic exactly, so sign changes inside a
/// panel cost no accuracy.
fn abs_quadrature(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return values
            .windows(2)
            .map(|w| 0.5 * h * (w[0].abs() + w[1].abs()))
            .sum();
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += abs_quadratic(values[i], values[i + 1], values[i + 2], 0.0, 2.0);
        i += 2;
    }
    if i + 1 < n {
        total += abs_quadratic(values[n - 3], values[n - 2], values[n - 1], 1.0, 2.0);
    }
    total * h
}

/// `∫_{u0}^{u1} |q(s)| ds` for the quadratic through `(0,f0), (1,f1), (2,f2)`.
fn abs_quadratic(f0: f64, f1: f64, f2: f64, u0: f64, u1: f64) -> f64 {
    let c = 0.5 * (f0 - 2.0 * f1 + f2);
    let b = f1 - f0 - c;
    let antiderivative = |s: f64| s * (f0 + s * (0.5 * b + s * c / 3.0));
    let mut cuts = vec![u0];
    let mut roots = Vec::new();
    if c.abs() > 1e-14 * (f0.abs() + f1.abs() + f2.abs()) {
        let disc = b * b - 4.0 * c * f0;
        if disc > 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            roots.push(q / c);
            if q != 0.0 {
                roots.push(f0 / q);
            }
        }
    } else if b != 0.0 {
        roots.push(-f0 / b);
    }
    roots.sort_by(f64::total_cmp);
    cuts.extend(roots.into_iter().filter(|r| *r > u0 && *r < u1));
    cuts.push(u1);
    cuts.windows(2)
        .map(|w| (antiderivative(w[1]) - antiderivative(w[0])).abs())
        .sum()
}

/// Minimises the kernel integral over `λ > 0` (log scan, then golden
/// section). Fails when the minimum is not below one.
pub fn b3_search(k_tilde: &GridFunction) -> Result<(f64, f64)> {
    let density = tail_density(k_tilde);
    let f = |l: f64| b3_integral(k_tilde, &density, l, 0.0);
    let (lo, hi, n) = B3_SCAN;
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let scan: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    let values: Vec<f64> = scan.iter().map(|&l| f(l)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut a = if best == 0 { 0.0 } else { scan[best - 1] };
    let mut b = scan[(best + 1).min(n - 1)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 * b.max(1e-3) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let (lambda, value) = [(c, fc), (d, fd), (scan[best], values[best])]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    if !(value < 1.0) {
        return Err(Error::B3Fail { value });
    }
    Ok((lambda, value))
}

/// Largest `σ` (to 1e-6) keeping the weighted kernel integral below one.
pub fn sigma_search(k_tilde: &GridFunction, lambda: f64) -> Result<f64> {
    let density = tail_density(k_tilde);
    let f = |s: f64| b3_integral(k_tilde, &density, lambda, s);
    let base = f(0.0);
    if !(base < 1.0) {
        return Err(Error::B3Fail { value: base });
    }
    let mut hi = 1.0;
    while f(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParams(
                "weighted kernel integral stays below one".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Quadratic form `eᵀ P e` bounding the observer error and its decay data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverForm {
    pub p1: f64,
    pub p2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k1_tilde: f64,
    pub k2_tilde: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ObserverForm {
    /// `e₁² − p₁ e₁ e₂ + p₂ e₂²`
    pub fn value(&self, e: [f64; 2]) -> f64 {
        e[0] * e[0] - self.p1 * e[0] * e[1] + self.p2 * e[1] * e[1]
    }
}

fn sym_eigen(a: f64, b: f64, d: f64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - radius, mean + radius)
}

pub fn observer_feasible(l1: f64, l2: f64, p1: f64, p2: f64) -> bool {
    let lhs = 2.0 + l1 * p1 - 2.0 * l2 * p2;
    p1 > 0.0 && p2 > 0.0 && lhs * lhs < 8.0 * l1 * p1 - 4.0 * l2 * p1 * p1 && p1 * p1 < 4.0 * p2
}

/// Form data for one `(p₁, p₂)`, or `None` if it is infeasible.
pub fn observer_form_at(l1: f64, l2: f64, p1: f64, p2: f64) -> Option<ObserverForm> {
    if !observer_feasible(l1, l2, p1, p2) {
        return None;
    }
    let (k1, k2) = sym_eigen(1.0, -0.5 * p1, p2);
    let diag = 2.0 * l1 - l2 * p1;
    let off = l2 * p2 - 0.5 * l1 * p1 - 1.0;
    let (k1_tilde, k2_tilde) = sym_eigen(diag, off, p1);
    if !(k1 > 0.0 && k1_tilde > 0.0) {
        return None;
    }
    let beta1 = k1_tilde / (4.0 * k2);
    let beta2 = (diag * diag + (l1 * p1 - 2.0 * l2 * p2).powi(2)) / (2.0 * k1_tilde);
    Some(ObserverForm {
        p1,
        p2,
        k1,
        k2,
        k1_tilde,
        k2_tilde,
        beta1,
        beta2,
    })
}

/// Exhaustive log-grid search maximising `β₁`.
pub fn observer_quadratic(l1: f64, l2: f64) -> Result<ObserverForm> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "observer gains must be positive, got ({l1}, {l2})"
        )));
    }
    let (lo, hi, n) = OBSERVER_SCAN;
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let axis: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    let mut best: Option<ObserverForm> = None;
    for &p1 in &axis {
        for &p2 in &axis {
            if let Some(form) = observer_form_at(l1, l2, p1, p2) {
                if best.is_none_or(|b| form.beta1 > b.beta1) {
                    best = Some(form);
                }
            }
        }
    }
    best.ok_or(Error::NoFeasiblePair)
}

/// Trajectory-dependent and gain-dependent rate constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub mu1: f64,
    pub mu2: f64,
    pub big_m: f64,
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub l_rate: f64,
}

/// `min(2,γ) · min{1, D* − d_min − sup rate, d_max − D* + inf rate}`
pub fn mu1(d_star: f64, bounds: InputBounds, gamma: f64, rate_inf: f64, rate_sup: f64) -> f64 {
    gamma.min(2.0)
        * 1f64
            .min(d_star - bounds.d_min - rate_sup)
            .min(bounds.d_max - d_star + rate_inf)
}

#[allow(clippy::too_many_arguments)]
pub fn rate_constants(
    d_star: f64,
    bounds: InputBounds,
    gamma: f64,
    rate_inf: f64,
    rate_sup: f64,
    sigma: f64,
    max_age: f64,
    form: &ObserverForm,
) -> Result<RateConstants> {
    let mu1 = mu1(d_star, bounds, gamma, rate_inf, rate_sup);
    if !(mu1 > 0.0) {
        return Err(Error::InvalidTrajectory { mu1 });
    }
    let width = bounds.width();
    let mu2 = 8.0 * width / gamma;
    let growth = (sigma * max_age).exp();
    let big_m = 2.0 * form.beta2 * growth * growth / sigma;
    let beta = form.beta1.min(sigma - growth * growth * form.beta2 / big_m);
    let bracket = 1.0 / (gamma * form.k1.sqrt()) + 2f64.sqrt() * growth / big_m.sqrt();
    let alpha1 =
        (1.1 * 8.0 * width / beta * bracket).max(2.0 / form.k1.sqrt().min((0.5 * big_m).sqrt()));
    let l_rate = (beta - 8.0 * width / alpha1 * bracket).min(mu1);
    Ok(RateConstants {
        mu1,
        mu2,
        big_m,
        beta,
        alpha1,
        alpha2: 1.0,
        l_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub sigma: f64,
    pub lambda_b3: f64,
    pub b3_value: f64,
    pub p1: f64,
    pub p2: f64,
    pub big_m: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k1_tilde: f64,
    pub k2_tilde: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub l_rate: f64,
    pub max_age: f64,
    pub d_star: f64,
    pub gamma: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Certificate {
    /// `rate_inf`/`rate_sup` bound `ẏ_ref/y_ref` over `t ≥ 0`.
    pub fn build(
        eq: &Equilibrium,
        bounds: InputBounds,
        gains: &ControllerGains,
        rate_inf: f64,
        rate_sup: f64,
    ) -> Result<Self> {
        let (lambda_b3, b3_value) = b3_search(&eq.k_tilde)?;
        let sigma = sigma_search(&eq.k_tilde, lambda_b3)?;
        let form = observer_quadratic(gains.l1, gains.l2)?;
        let max_age = eq.k_tilde.grid().max_age();
        let rc = rate_constants(
            eq.d_star,
            bounds,
            gains.gamma,
            rate_inf,
            rate_sup,
            sigma,
            max_age,
            &form,
        )?;
        Ok(Self {
            sigma,
            lambda_b3,
            b3_value,
            p1: form.p1,
            p2: form.p2,
            big_m: rc.big_m,
            alpha1: rc.alpha1,
            alpha2: rc.alpha2,
            k1: form.k1,
            k2: form.k2,
            k1_tilde: form.k1_tilde,
            k2_tilde: form.k2_tilde,
            beta1: form.beta1,
            beta2: form.beta2,
            beta: rc.beta,
            mu1: rc.mu1,
            mu2: rc.mu2,
            l_rate: rc.l_rate,
            max_age,
            d_star: eq.d_star,
            gamma: gains.gamma,
            l1: gains.l1,
            l2: gains.l2,
        })
    }

    pub fn form(&self) -> ObserverForm {
        ObserverForm {
            p1: self.p1,
            p2: self.p2,
            k1: self.k1,
            k2: self.k2,
            k1_tilde: self.k1_tilde,
            k2_tilde: self.k2_tilde,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    /// Names of violated certificate conditions; empty when all hold.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !observer_feasible(self.l1, self.l2, self.p1, self.p2) {
            out.push("observer quadratic-form conditions".to_string());
        }
        let growth = (2.0 * self.sigma * self.max_age).exp();
        if !(self.big_m * self.sigma > self.beta2 * growth) {
            out.push("M sigma > beta2 e^(2 sigma A)".to_string());
        }
        if !(self.b3_value < 1.0) {
            out.push("kernel integral below one".to_string());
        }
        if !(self.alpha1 * self.k1.sqrt().min((0.5 * self.big_m).sqrt()) >= 2.0 * (1.0 - 1e-12)) {
            out.push("alpha1 overshoot floor".to_string());
        }
        for (name, v) in self.entries() {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} positive"));
            }
        }
        out
    }

    fn entries(&self) -> [(&'static str, f64); 18] {
        [
            ("sigma", self.sigma),
            ("lambda_b3", self.lambda_b3),
            ("b3_value", self.b3_value),
            ("p1", self.p1),
            ("p2", self.p2),
            ("big_m", self.big_m),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k1_tilde", self.k1_tilde),
            ("k2_tilde", self.k2_tilde),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta", self.beta),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("l_rate", self.l_rate),
        ]
    }

    /// Flat `key = value` listing.
    pub fn dump(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v:.12e}\n"))
            .collect()
    }
}

/// Components of the control Lyapunov functional at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfValue {
    pub v: f64,
    pub q: f64,
    pub eta: f64,
    /// `‖e^{−σa} ψ(t − a)‖_∞`
    pub w: f64,
    /// `1 + min(0, min ψ(t − a))`
    pub c: f64,
    /// Observer error `z − (η, D*)`.
    pub e: [f64; 2],
}

fn clf_parts(
    eta: f64,
    psi: &[f64],
    z: [f64; 2],
    grid_ages: impl Iterator<Item = f64>,
    cert: &Certificate,
) -> ClfValue {
    let w = grid_ages
        .zip(psi)
        .map(|(a, v)| (-cert.sigma * a).exp() * v.abs())
        .fold(0.0, f64::max);
    let c = 1.0 + psi.iter().copied().fold(0.0, f64::min);
    let e = [z[0] - eta, z[1] - cert.d_star];
    let q = 0.5 * cert.big_m * (w / c).powi(2) + cert.form().value(e);
    let v = eta * eta + cert.alpha1 * q.sqrt() + cert.alpha2 * q;
    ClfValue { v, q, eta, w, c, e }
}

/// Functional evaluated on a population profile.
pub fn clf_from_profile(
    x: &GridFunction,
    z: [f64; 2],
    traj: &Trajectory,
    eq: &Equilibrium,
    model: &DelayModel,
    cert: &Certificate,
    t: f64,
) -> Result<ClfValue> {
    if !x.is_positive() {
        return Err(Error::LogDomain { t, arg: x.min() });
    }
    let pi_x = model.pi_of(x);
    let eta = (pi_x / traj.eval(t)).ln();
    let psi: Vec<f64> = x
        .values()
        .iter()
        .zip(eq.x_star.values())
        .map(|(v, s)| v / (s * pi_x) - 1.0)
        .collect();
    Ok(clf_parts(eta, &psi, z, x.grid().ages(), cert))
}

/// Functional evaluated on delay coordinates.
pub fn clf_from_delay(
    state: &DelayState,
    model: &DelayModel,
    cert: &Certificate,
) -> Result<ClfValue> {
    let psi = state.history.window_values(model.grid())?;
    if let Some(&bad) = psi.iter().find(|v| !(**v > -1.0)) {
        return Err(Error::LogDomain {
            t: state.t,
            arg: 1.0 + bad,
        });
    }
    Ok(clf_parts(
        state.eta,
        &psi,
        state.z,
        model.grid().ages(),
        cert,
    ))
}

/// Result of checking a sampled differential inequality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InequalityReport {
    pub checked: usize,
    /// Samples skipped because the value is below its own simulation error.
    pub unresolved: usize,
    /// `(t, excess)` where the forward difference beats the bound by more
    /// than the slack.
    pub violations: Vec<(f64, f64)>,
    pub max_slack: f64,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `(v(t+dt) − v(t))/dt ≤ bound(t) + slack(t)` on a uniform series.
///
/// The slack is twice the gap between forward differences over `dt` and
/// `2 dt` (a step-halving estimate of the differencing error) plus a
/// round-off floor. With `error` given (pointwise simulation error of the
/// values, e.g. from a refined run), samples where `|v| ≤ 10 · error` are
/// counted as unresolved instead of being checked.
pub fn check_differential_inequality(
    times: &[f64],
    values: &[f64],
    bound: &[f64],
    error: Option<&[f64]>,
) -> InequalityReport {
    let n = times.len().min(values.len()).min(bound.len());
    let mut report = InequalityReport::default();
    if n < 3 {
        return report;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n - 2 {
        if let Some(err) = error {
            if (i..i + 2)
                .any(|j| values[j].abs() <= 10.0 * err.get(j).copied().unwrap_or(f64::INFINITY))
            {
                report.unresolved += 1;
                continue;
            }
        }
        let dt = times[i + 1] - times[i];
        let fd1 = (values[i + 1] - values[i]) / dt;
        let fd2 = (values[i + 2] - values[i]) / (times[i + 2] - times[i]);
        let slack = 2.0 * (fd2 - fd1).abs() + 1e3 * f64::EPSILON * scale / dt;
        report.max_slack = report.max_slack.max(slack);
        report.checked += 1;
        let excess = fd1 - bound[i] - slack;
        if excess > 0.0 {
            report.violations.push((times[i], excess));
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecayReport {
    pub differential: InequalityReport,
    /// Samples where `V(t) > e^{−Lt/2} V₀ e^{max(0, V₀ − 1)}`.
    pub integrated_violations: Vec<(f64, f64)>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.differential.passed() && self.integrated_violations.is_empty()
    }
}

/// `V̇ ≤ −L V / (1 + √V)` and its integrated bound along a sampled run.
/// `error` is an optional pointwise error estimate of `values`.
pub fn verify_decay(
    times: &[f64],
    values: &[f64],
    l_rate: f64,
    error: Option<&[f64]>,
) -> DecayReport {
    let bound: Vec<f64> = values
        .iter()
        .map(|v| -l_rate * v / (1.0 + v.sqrt()))
        .collect();
    let differential = check_differential_inequality(times, values, &bound, error);
    let mut integrated_violations = Vec::new();
    if let (Some(&t0), Some(&v0)) = (times.first(), values.first()) {
        let amplitude = v0 * (v0 - 1.0).max(0.0).exp();
        for (&t, &v) in times.iter().zip(values) {
            let envelope = (-0.5 * l_rate * (t - t0)).exp() * amplitude;
            if v > envelope * (1.0 + 1e-9) + 1e-14 {
                integrated_violations.push((t, v - envelope));
            }
        }
    }
    DecayReport {
        differential,
        integrated_violations,
    }
}

/// `|coarse(t) − fine(t)|` at the coarse sample times; the fine series must
/// contain every coarse time.
pub fn refinement_error(
    coarse_times: &[f64],
    coarse: &[f64],
    fine_times: &[f64],
    fine: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(coarse.len());
    let mut j = 0;
    for (&t, &v) in coarse_times.iter().zip(coarse) {
        while j < fine_times.len() && fine_times[j] < t - 1e-9 {
            j += 1;
        }
        match fine_times.get(j) {
            Some(&ft) if (ft - t).abs() <= 1e-9 => out.push((v - fine[j]).abs()),
            _ => {
                return Err(Error::InvalidParams(format!(
                    "fine series has no sample at t = {t}"
                )))
            }
        }
    }
    Ok(out)
}

/// Running maximum of `error` over `[t − width, t + width]`. Pointwise
/// refinement gaps vanish where coarse and fine series cross; values that
/// depend on a whole history window carry the error of that window.
pub fn error_envelope(times: &[f64], error: &[f64], width: f64) -> Vec<f64> {
    let n = times.len().min(error.len());
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0, 0);
    let mut window = std::collections::VecDeque::new();
    for i in 0..n {
        while hi < n && times[hi] <= times[i] + width + 1e-12 {
            while window
                .back()
                .is_some_and(|&j: &usize| error[j] <= error[hi])
            {
                window.pop_back();
            }
            window.push_back(hi);
            hi += 1;
        }
        while times[lo] < times[i] - width - 1e-12 {
            lo += 1;
        }
        while window.front().is_some_and(|&j| j < lo) {
            window.pop_front();
        }
        out.push(window.front().map_or(0.0, |&j| error[j]));
    }
    out
}

/// `κ(s) = κ̃(κ_V(s))` for `s = ς₀ + |e₀|`.
pub fn overshoot_bound(varsigma0: f64, e0_norm: f64, cert: &Certificate) -> f64 {
    let s = varsigma0 + e0_norm;
    let kappa_psi = (2.0 * s).exp() * ((2.0 * s).exp() - 1.0);
    let kappa_q = (cert.k2 + 0.5 * cert.big_m) * (s + kappa_psi).powi(2);
    let kappa_v = s * s + cert.alpha1 * kappa_q.sqrt() + cert.alpha2 * kappa_q;
    (cert.sigma * cert.max_age).exp() * (kappa_v.sqrt() + kappa_v) * (kappa_v - 1.0).max(0.0).exp()
}

/// `z · sat_{[−a,b]}(z) ≥ min(1,a,b) · z² / (1 + |z|)`
pub fn saturation_fact(z: f64, a: f64, b: f64) -> bool {
    let lhs = z * saturate(z, -a, b);
    let rhs = a.min(b).min(1.0) * z * z / (1.0 + z.abs());
    lhs >= rhs * (1.0 - 4.0 * f64::EPSILON)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationReport {
    pub checked: usize,
    pub violations: usize,
}

/// Randomised check of [`saturation_fact`] over `samples` triples.
pub fn saturation_fact_check(samples: usize, seed: u64) -> SaturationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let z = rng.random_range(-1.0..1.0f64) * 10f64.powf(rng.random_range(-3.0..3.0));
        let a = 10f64.powf(rng.random_range(-3.0..3.0));
        let b = 10f64.powf(rng.random_range(-3.0..3.0));
        if !saturation_fact(z, a, b) {
            violations += 1;
        }
    }
    SaturationReport {
        checked: samples,
        violations,
    }
}

/// Samples where `W(t) > W(s) e^{−σ(t−s)} (1 + tol)` for consecutive
/// samples or against the first one.
pub fn check_history_decay(times: &[f64], w: &[f64], sigma: f64, tol: f64) -> Vec<f64> {
    let mut bad = Vec::new();
    for i in 1..times.len().min(w.len()) {
        let step = w[i - 1] * (-sigma * (times[i] - times[i - 1])).exp() * (1.0 + tol) + tol * w[0];
        let global = w[0] * (-sigma * (times[i] - times[0])).exp() * (1.0 + tol) + tol * w[0];
        if w[i] > step || w[i] > global {
            bad.push(times[i]);
        }
    }
    bad
}

/// Samples where the floor `C` decreased by more than `tol`.
pub fn check_floor_monotone(times: &[f64], c: &[f64], tol: f64) -> Vec<f64> {
    (1..times.len().min(c.len()))
        .filter(|&i| c[i] < c[i - 1] - tol)
        .map(|i| times[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_fact_cases() {
        assert!(saturation_fact(0.0, 1.0, 1.0));
        let (z, a, b) = (0.3, 1.0, 1.0);
        assert!(z * saturate(z, -a, b) > z * z / (1.0 + z));
        assert!(saturation_fact(-50.0, 0.2, 3.0));
        let report = saturation_fact_check(10_000, 7);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn infeasible_observer_pair() {
        assert!(!observer_feasible(4.0, 8.0, 2.0, 0.5));
        assert!(observer_form_at(4.0, 8.0, 2.0, 0.5).is_none());
    }

    #[test]
    fn observer_search_for_trial_gains() {
        let form = observer_quadratic(4.0, 8.0).unwrap();
        assert!(observer_feasible(4.0, 8.0, form.p1, form.p2));
        assert!(form.k1 > 0.0 && form.k1_tilde > 0.0);
        assert!(form.beta1 > 0.0 && form.beta2 > 0.0);
    }

    #[test]
    fn mu1_for_constant_reference() {
        let bounds = InputBounds::new(0.5, 1.5).unwrap();
        assert_eq!(mu1(1.0, bounds, 2.0, 0.0, 0.0), 1.0);
        assert!((mu1(1.2, bounds, 1.0, 0.0, 0.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn envelope_is_a_sliding_max() {
        let times: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let error: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64).collect();
        let env = error_envelope(&times, &error, 0.25);
        for i in 0..20usize {
            let naive = (i.saturating_sub(2)..(i + 3).min(20))
                .map(|j| error[j])
                .fold(0.0, f64::max);
            assert_eq!(env[i], naive, "{i}");
        }
        assert_eq!(error_envelope(&times, &error, 0.0), error);
    }

    #[test]
    fn refinement_error_aligns_samples() {
        let coarse_t = [0.0, 0.1, 0.2];
        let fine_t = [0.0, 0.05, 0.1, 0.15, 0.2];
        let err = refinement_error(
            &coarse_t,
            &[1.0, 2.0, 3.0],
            &fine_t,
            &[1.0, 0.0, 2.5, 0.0, 3.0],
        )
        .unwrap();
        assert_eq!(err, vec![0.0, 0.5, 0.0]);
        assert!(refinement_error(&[0.03], &[1.0], &fine_t, &[0.0; 5]).is_err());
    }

    #[test]
    fn zero_trace_has_no_violations() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let v = vec![0.0; 100];
        assert!(verify_decay(&t, &v, 1.0, None).passed());
    }

    #[test]
    fn abs_quadrature_exact_on_kinked_quadratics() {
        // |a² − 0.3| on [0, 1], odd and even interval counts
        let exact = {
            let r = 0.3f64.sqrt();
            2.0 * (0.3 * r - r.powi(3) / 3.0) + (1.0 / 3.0 - 0.3)
        };
        for nodes in [11, 12, 101] {
            let h = 1.0 / (nodes - 1) as f64;
            let v: Vec<f64> = (0..nodes).map(|i| (i as f64 * h).powi(2) - 0.3).collect();
            assert!((abs_quadrature(&v, h) - exact).abs() < 1e-14, "{nodes}");
        }
    }

    #[test]
    fn exact_decay_passes_and_fast_claim_fails() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|t| (-0.5 * t).exp()).collect();
        assert!(verify_decay(&t, &v, 0.5, None).passed());
        assert!(!verify_decay(&t, &v, 5.0, None).passed());
        let noisy: Vec<f64> = v.iter().map(|x| x + 1e-3).collect();
        let err = vec![1e-3; v.len()];
        let report = verify_decay(&t, &noisy, 0.25, Some(&err));
        assert!(report.differential.unresolved > 0);
        assert!(report.differential.passed());
    }

    #[test]
    fn overshoot_vanishes_at_zero_and_grows() {
        let cert = Certificate {
            sigma: 0.5,
            lambda_b3: 1.0,
            b3_value: 0.5,
            p1: 0.5,
            p2: 0.5,
            big_m: 4.0,
            alpha1: 10.0,
            alpha2: 1.0,
            k1: 0.5,
            k2: 1.0,
            k1_tilde: 1.0,
            k2_tilde: 2.0,
            beta1: 0.25,
            beta2: 1.0,
            beta: 0.25,
            mu1: 0.2,
            mu2: 4.0,
            l_rate: 0.02,
            max_age: 2.0,
            d_star: 1.0,
            gamma: 2.0,
            l1: 4.0,
            l2: 8.0,
        };
        assert_eq!(overshoot_bound(0.0, 0.0, &cert), 0.0);
        assert!(overshoot_bound(0.01, 0.0, &cert) < overshoot_bound(0.02, 0.0, &cert));
    }
}
