//! Exact solution route in delay coordinates.
//!
//! The profile is written as `x(a,t) = x*(a) y_ref(t) e^{η(t)} (1 + ψ(t − a))`.
//! `ψ` obeys an integral delay equation that does not depend on the input;
//! it is advanced through its differentiated form
//! `ψ̇ = k̃(0)ψ(t) − k̃(A)ψ(t−A) + ∫ k̃′(a) ψ(t−a) da`
//! while `η` and the observer follow ordinary differential equations.
//! A feedback term `κ (∫ k̃(a) ψ(t−a) da − ψ(t))`, which vanishes on exact
//! solutions, keeps numerical defects of the integral identity from
//! accumulating into a drift of the neutral constant mode.

use std::collections::VecDeque;

use crate::controller::{ControlSample, InputLaw};
use crate::error::{Error, Result};
use crate::grid::{simpson, AgeGrid, GridFunction};
use crate::integrate::{rk4_step, step_count};
use crate::model::{check_initial_condition, Equilibrium, InputBounds, ModelParams};
use crate::trajectory::Trajectory;

/// Default gain of the integral-identity feedback term.
pub const IDE_FEEDBACK: f64 = 20.0;

/// `π(a) = e^{D* a + ∫₀ᵃμ} ∫ₐᴬ k̃`
pub fn pi_weight(eq: &Equilibrium, params: &ModelParams) -> GridFunction {
    let grid = params.grid();
    let tail = grid.tail_integrals(eq.k_tilde.values());
    let survival = params.survival(eq.d_star);
    let values = tail.iter().zip(&survival).map(|(t, s)| t / s).collect();
    GridFunction::from_values(grid, values).expect("finite weight")
}

/// `Π(f) = ⟨π, f⟩ / ⟨π, x*⟩`
pub fn pi_functional(f: &GridFunction, pi: &GridFunction, eq: &Equilibrium) -> f64 {
    pi.inner(f) / pi.inner(&eq.x_star)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    t: f64,
    v: f64,
    d_left: f64,
    d_right: f64,
}

/// Samples of `ψ` on `[t − A, t]` with cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiHistory {
    samples: VecDeque<Sample>,
    window: f64,
    /// Time where the derivative of `ψ` jumps (the initial instant).
    kink: f64,
}

impl PsiHistory {
    /// History `ψ(−a) = psi0(a)` on the grid nodes. `slope0` is `ψ₀′(a)`;
    /// `right_rate` is the forward derivative at `t = 0`.
    fn from_initial(grid: AgeGrid, psi0: &[f64], slope0: &[f64], right_rate: f64) -> Self {
        let n = grid.len();
        let mut samples = VecDeque::with_capacity(2 * n);
        for i in (0..n).rev() {
            let d = -slope0[i];
            samples.push_back(Sample {
                t: -grid.node(i),
                v: psi0[i],
                d_left: d,
                d_right: d,
            });
        }
        samples.back_mut().expect("non-empty grid").d_right = right_rate;
        Self {
            samples,
            window: grid.max_age(),
            kink: 0.0,
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn start(&self) -> f64 {
        self.samples.front().map_or(0.0, |s| s.t)
    }

    pub fn end(&self) -> f64 {
        self.samples.back().map_or(0.0, |s| s.t)
    }

    pub fn latest(&self) -> f64 {
        self.samples.back().map_or(0.0, |s| s.v)
    }

    /// Stored `(t, ψ(t))` pairs, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().map(|s| (s.t, s.v))
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-10 * (1.0 + s.abs());
        if s < start - slack || s > end + slack {
            return Err(Error::HistoryGap {
                from: s,
                to: s,
                start,
            });
        }
        let s = s.clamp(start, end);
        let j = self.samples.partition_point(|x| x.t <= s);
        let j = j.clamp(1, self.samples.len() - 1);
        let (p, q) = (self.samples[j - 1], self.samples[j]);
        if s == p.t {
            return Ok(p.v);
        }
        if s == q.t {
            return Ok(q.v);
        }
        let span = q.t - p.t;
        let u = (s - p.t) / span;
        let u2 = u * u;
        let u3 = u2 * u;
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * p.v
            + (u3 - 2.0 * u2 + u) * span * p.d_right
            + (-2.0 * u3 + 3.0 * u2) * q.v
            + (u3 - u2) * span * q.d_left)
    }

    /// Position of the derivative jump in the window ending at `t`. Even
    /// nodes are Simpson panel ends already and need no split.
    fn kink_in_window(&self, t: f64, grid: AgeGrid) -> Option<Kink> {
        let u = (t - self.kink) / grid.spacing();
        if u <= 1e-9 || u >= (grid.len() - 1) as f64 - 1e-9 {
            return None;
        }
        let m = u.round();
        if (u - m).abs() <= 1e-9 {
            let m = m as usize;
            return (m % 2 == 1).then_some(Kink::Node(m));
        }
        let value = self.eval(self.kink).ok()?;
        Some(Kink::Between { u, value })
    }

    /// `ψ(t − aᵢ)` for every grid node, with `ψ(t)` replaced by `head`.
    fn window_with_head(&self, t: f64, head: f64, grid: AgeGrid) -> Result<Window> {
        let mut out = Vec::with_capacity(grid.len());
        out.push(head);
        for i in 1..grid.len() {
            let s = t - grid.node(i);
            out.push(self.eval(s).map_err(|_| Error::HistoryGap {
                from: t - grid.max_age(),
                to: t,
                start: self.start(),
            })?);
        }
        Ok(Window {
            values: out,
            kink: self.kink_in_window(t, grid),
        })
    }

    /// `ψ(t − aᵢ)` for every grid node, `t` being the latest sample time.
    pub fn window_values(&self, grid: AgeGrid) -> Result<Vec<f64>> {
        Ok(self
            .window_with_head(self.end(), self.latest(), grid)?
            .values)
    }

    fn latest_window(&self, grid: AgeGrid) -> Result<Window> {
        self.window_with_head(self.end(), self.latest(), grid)
    }

    fn push(&mut self, t: f64, v: f64, rate: f64) {
        self.samples.push_back(Sample {
            t,
            v,
            d_left: rate,
            d_right: rate,
        });
        let cutoff = t - self.window;
        while self.samples.len() > 2 && self.samples[1].t <= cutoff {
            self.samples.pop_front();
        }
    }
}

struct Window {
    values: Vec<f64>,
    kink: Option<Kink>,
}

#[derive(Debug, Clone, Copy)]
enum Kink {
    Node(usize),
    /// Between nodes at lag `u·h`, where `ψ` takes `value`.
    Between {
        u: f64,
        value: f64,
    },
}

/// Lagrange interpolant through `(xs, ys)` at `x`.
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut sum = 0.0;
    for (i, (xi, yi)) in xs.iter().zip(ys).enumerate() {
        let mut l = 1.0;
        for (j, xj) in xs.iter().enumerate() {
            if i != j {
                l *= (x - xj) / (xi - xj);
            }
        }
        sum += l * yi;
    }
    sum
}

/// Two-point Gauss rule on `[lo, hi]` applied to the interpolant.
fn gauss_segment(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let off = half / 3f64.sqrt();
    half * (lagrange(xs, ys, mid - off) + lagrange(xs, ys, mid + off))
}

/// `∫ kernel·ψ` in node units (`h = 1` scaled by `h`) with the integrand
/// smooth on each side of `u` only.
fn split_between(kernel: &[f64], product: &[f64], u: f64, value: f64, h: f64) -> f64 {
    let n = product.len();
    let j = u.floor() as usize;
    let near: Vec<usize> = (j.saturating_sub(1)..(j + 3).min(n)).collect();
    let near_x: Vec<f64> = near.iter().map(|&i| i as f64).collect();
    let near_k: Vec<f64> = near.iter().map(|&i| kernel[i]).collect();
    let at_kink = lagrange(&near_x, &near_k, u) * value;

    let left: Vec<usize> = (j.saturating_sub(2)..=j).collect();
    let mut xs: Vec<f64> = left.iter().map(|&i| i as f64).collect();
    let mut ys: Vec<f64> = left.iter().map(|&i| product[i]).collect();
    xs.push(u);
    ys.push(at_kink);
    let mut total = gauss_segment(&xs, &ys, j as f64, u);

    let right: Vec<usize> = (j + 1..(j + 4).min(n)).collect();
    let mut xs = vec![u];
    let mut ys = vec![at_kink];
    xs.extend(right.iter().map(|&i| i as f64));
    ys.extend(right.iter().map(|&i| product[i]));
    total += gauss_segment(&xs, &ys, u, (j + 1) as f64);

    total *= h;
    if j >= 1 {
        total += simpson(&product[..=j], h);
    }
    if j + 2 < n {
        total += simpson(&product[j + 1..], h);
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayState {
    pub t: f64,
    pub eta: f64,
    pub z: [f64; 2],
    pub history: PsiHistory,
}

/// Precomputed kernels of the delay representation.
#[derive(Debug, Clone)]
pub struct DelayModel {
    grid: AgeGrid,
    weights: Vec<f64>,
    k_tilde: Vec<f64>,
    k_tilde_prime: Vec<f64>,
    g: Vec<f64>,
    x_star: GridFunction,
    pi: GridFunction,
    d_star: f64,
    bounds: InputBounds,
    ide_feedback: f64,
}

impl DelayModel {
    pub fn new(params: &ModelParams, eq: &Equilibrium) -> Self {
        let grid = params.grid();
        let survival = params.survival(eq.d_star);
        // k̃′ = k′ S − (D* + μ) k̃
        let k_tilde_prime = params
            .k_derivative()
            .values()
            .iter()
            .zip(&survival)
            .zip(eq.k_tilde.values())
            .zip(params.mu.values())
            .map(|(((dk, s), kt), mu)| dk * s - (eq.d_star + mu) * kt)
            .collect();
        Self {
            grid,
            weights: grid.simpson_weights(),
            k_tilde: eq.k_tilde.values().to_vec(),
            k_tilde_prime,
            g: eq.g.values().to_vec(),
            x_star: eq.x_star.clone(),
            pi: pi_weight(eq, params),
            d_star: eq.d_star,
            bounds: params.bounds,
            ide_feedback: IDE_FEEDBACK,
        }
    }

    /// Same model with another identity feedback gain; `0` gives the plain
    /// differentiated equation.
    pub fn with_ide_feedback(mut self, gain: f64) -> Self {
        self.ide_feedback = gain;
        self
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn pi(&self) -> &GridFunction {
        &self.pi
    }

    pub fn d_star(&self) -> f64 {
        self.d_star
    }

    pub fn pi_of(&self, f: &GridFunction) -> f64 {
        self.pi.inner(f) / self.pi.inner(&self.x_star)
    }

    fn weighted(&self, kernel: &[f64], window: &[f64], kink: Option<Kink>) -> f64 {
        let Some(kink) = kink else {
            return self
                .weights
                .iter()
                .zip(kernel)
                .zip(window)
                .map(|((w, k), v)| w * k * v)
                .sum();
        };
        let product: Vec<f64> = kernel.iter().zip(window).map(|(k, v)| k * v).collect();
        let h = self.grid.spacing();
        match kink {
            Kink::Node(m) => simpson(&product[..=m], h) + simpson(&product[m..], h),
            Kink::Between { u, value } => split_between(kernel, &product, u, value, h),
        }
    }

    fn rate_from_window(&self, window: &[f64], kink: Option<Kink>) -> f64 {
        let last = self.grid.len() - 1;
        let identity = self.weighted(&self.k_tilde, window, kink) - window[0];
        self.k_tilde[0] * window[0] - self.k_tilde[last] * window[last]
            + self.weighted(&self.k_tilde_prime, window, kink)
            + self.ide_feedback * identity
    }

    /// Delay-equation right-hand side at `t` with `ψ(t) = head`.
    fn psi_rate(&self, history: &PsiHistory, t: f64, head: f64) -> Result<f64> {
        let window = history.window_with_head(t, head, self.grid)?;
        Ok(self.rate_from_window(&window.values, window.kink))
    }

    /// `ψ(t) − ∫ k̃(a) ψ(t − a) da` at the latest history time.
    pub fn ide_residual(&self, history: &PsiHistory) -> Result<f64> {
        let window = history.latest_window(self.grid)?;
        Ok(window.values[0] - self.weighted(&self.k_tilde, &window.values, window.kink))
    }

    /// `∫ g(a) ψ(t − a) da` at the latest history time.
    pub fn g_moment(&self, history: &PsiHistory) -> Result<f64> {
        let window = history.latest_window(self.grid)?;
        Ok(self.weighted(&self.g, &window.values, window.kink))
    }

    fn log_factor(&self, t: f64, moment: f64) -> Result<f64> {
        let arg = 1.0 + moment;
        if !(arg > 0.0) {
            return Err(Error::LogDomain { t, arg });
        }
        Ok(arg.ln())
    }

    /// `δ(t) = ln(1 + ∫ g(a) ψ(t − a) da)`
    pub fn delta(&self, state: &DelayState) -> Result<f64> {
        self.log_factor(state.t, self.g_moment(&state.history)?)
    }

    /// Delay coordinates of `x0`. Rejects initial data that are not positive
    /// or violate the birth condition.
    pub fn init_state(
        &self,
        x0: &GridFunction,
        traj: &Trajectory,
        z0: [f64; 2],
        params: &ModelParams,
    ) -> Result<DelayState> {
        if !x0.is_positive() {
            return Err(Error::InvalidIc("profile is not positive".into()));
        }
        if !check_initial_condition(x0, params) {
            return Err(Error::InvalidIc(
                "profile violates the birth condition".into(),
            ));
        }
        let pi_x0 = self.pi_of(x0);
        let eta = (pi_x0 / traj.eval(0.0)).ln();
        let psi0: Vec<f64> = x0
            .values()
            .iter()
            .zip(self.x_star.values())
            .map(|(x, s)| x / (s * pi_x0) - 1.0)
            .collect();
        let slope0 = self.grid.derivative(&psi0);
        let right_rate = self.rate_from_window(&psi0, None);
        let history = PsiHistory::from_initial(self.grid, &psi0, &slope0, right_rate);
        Ok(DelayState {
            t: 0.0,
            eta,
            z: z0,
            history,
        })
    }

    fn check_step(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.grid.spacing() * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "delay step {dt} must lie in (0, {}]",
                self.grid.spacing()
            )));
        }
        Ok(())
    }

    /// Advances the history by one RK4 step of the delay equation.
    pub fn step_psi(&self, history: &mut PsiHistory, dt: f64) -> Result<()> {
        self.check_step(dt)?;
        let t = history.end();
        let mut failure = None;
        let mut state = [history.latest()];
        rk4_step(t, &mut state, dt, |tau, s, ds| {
            match self.psi_rate(history, tau, s[0]) {
                Ok(r) => ds[0] = r,
                Err(e) => {
                    failure.get_or_insert(e);
                    ds[0] = 0.0;
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let rate = self.psi_rate(history, t + dt, state[0])?;
        history.push(t + dt, state[0], rate);
        Ok(())
    }

    /// Measured output and control action at the current state.
    pub fn sample(
        &self,
        state: &DelayState,
        traj: &Trajectory,
        law: &InputLaw,
    ) -> Result<OracleSample> {
        let delta = self.delta(state)?;
        let log_error = state.eta + delta;
        let y = traj.eval(state.t) * log_error.exp();
        let control = law.apply(y, traj, state.z, state.t, self.bounds)?;
        Ok(OracleSample {
            t: state.t,
            eta: state.eta,
            delta,
            z: state.z,
            y,
            log_error,
            control,
        })
    }

    /// One RK4 step of `(ψ, η, z)`. The `ψ` component never reads the others,
    /// so its values do not depend on the input law.
    pub fn step_closed_loop(
        &self,
        state: &mut DelayState,
        traj: &Trajectory,
        law: &InputLaw,
        dt: f64,
    ) -> Result<()> {
        self.check_step(dt)?;
        let t = state.t;
        let history = &state.history;
        let mut failure = None;
        let mut vec = [history.latest(), state.eta, state.z[0], state.z[1]];
        rk4_step(t, &mut vec, dt, |tau, s, ds| {
            let result = (|| {
                let window = history.window_with_head(tau, s[0], self.grid)?;
                let psi_rate = self.rate_from_window(&window.values, window.kink);
                let log_delta =
                    self.log_factor(tau, self.weighted(&self.g, &window.values, window.kink))?;
                let y = traj.eval(tau) * (s[1] + log_delta).exp();
                let z = [s[2], s[3]];
                let c = law.apply(y, traj, z, tau, self.bounds)?;
                let dz = law.observer_rate(z, &c);
                Ok::<_, Error>([psi_rate, self.d_star + c.d_ff - c.d_applied, dz[0], dz[1]])
            })();
            match result {
                Ok(r) => ds.copy_from_slice(&r),
                Err(e) => {
                    failure.get_or_insert(e);
                    ds.fill(0.0);
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let rate = self.psi_rate(&state.history, t + dt, vec[0])?;
        state.history.push(t + dt, vec[0], rate);
        state.t = t + dt;
        state.eta = vec[1];
        state.z = [vec[2], vec[3]];
        Ok(())
    }

    /// Profile and output represented by the delay state.
    pub fn reconstruct(
        &self,
        state: &DelayState,
        traj: &Trajectory,
    ) -> Result<(GridFunction, f64)> {
        let window = state.history.latest_window(self.grid)?;
        let scale = traj.eval(state.t) * state.eta.exp();
        let values = self
            .x_star
            .values()
            .iter()
            .zip(&window.values)
            .map(|(x, w)| scale * x * (1.0 + w))
            .collect();
        let profile = GridFunction::from_values(self.grid, values)?;
        let y = scale * (1.0 + self.weighted(&self.g, &window.values, window.kink));
        Ok((profile, y))
    }

    /// `‖e^{−σa} ψ(t − a)‖_∞` on the grid nodes.
    pub fn weighted_sup(&self, history: &PsiHistory, sigma: f64) -> Result<f64> {
        let window = history.window_values(self.grid)?;
        Ok(self
            .grid
            .ages()
            .zip(&window)
            .map(|(a, v)| (-sigma * a).exp() * v.abs())
            .fold(0.0, f64::max))
    }

    /// `1 + min(0, min ψ(t − a))` on the grid nodes.
    pub fn floor(&self, history: &PsiHistory) -> Result<f64> {
        let window = history.window_values(self.grid)?;
        Ok(1.0 + window.iter().copied().fold(0.0, f64::min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub t: f64,
    pub eta: f64,
    pub delta: f64,
    pub z: [f64; 2],
    pub y: f64,
    /// `η + δ = ln(y / y_ref)`
    pub log_error: f64,
    pub control: ControlSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub profile: GridFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrace {
    pub dt: f64,
    pub samples: Vec<OracleSample>,
    pub snapshots: Vec<Snapshot>,
}

impl OracleTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }
}

/// Default step `min(h, A/400)`.
pub fn default_step(grid: AgeGrid) -> f64 {
    grid.spacing().min(grid.max_age() / 400.0)
}

/// Runs the delay route over `[0, horizon]`, calling `observe` after every
/// recorded sample. Snapshot profiles are taken at the steps nearest the
/// requested times.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with(
    model: &DelayModel,
    mut state: DelayState,
    traj: &Trajectory,
    law: &InputLaw,
    horizon: f64,
    dt: f64,
    snapshot_times: &[f64],
    mut observe: impl FnMut(&DelayState, &OracleSample),
) -> Result<OracleTrace> {
    let steps = step_count(horizon, dt).ok_or_else(|| {
        Error::InvalidParams(format!("horizon {horizon} is not a multiple of dt {dt}"))
    })?;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    for k in 0..=steps {
        let sample = model.sample(&state, traj, law)?;
        observe(&state, &sample);
        samples.push(sample);
        if snapshot_times
            .iter()
            .any(|&ts| (ts - state.t).abs() < 0.5 * dt)
        {
            snapshots.push(Snapshot {
                t: state.t,
                profile: model.reconstruct(&state, traj)?.0,
            });
        }
        if k < steps {
            model.step_closed_loop(&mut state, traj, law, dt)?;
            // pin the clock to the step grid so traces share sample times
            state.t = (k + 1) as f64 * dt;
        }
    }
    Ok(OracleTrace {
        dt,
        samples,
        snapshots,
    })
}

pub fn simulate(
    model: &DelayModel,
    state: DelayState,
    traj: &Trajectory,
    law: &InputLaw,
    horizon: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<OracleTrace> {
    simulate_with(
        model,
        state,
        traj,
        law,
        horizon,
        dt,
        snapshot_times,
        |_, _| {},
    )
}
