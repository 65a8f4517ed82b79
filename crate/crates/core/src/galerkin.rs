//! Galerkin modal approximation of the closed loop.
//!
//! The profile is approximated by `x̂(a,t) = Σ λⱼ(t) φⱼ(a)` with trial
//! functions that each satisfy the birth condition: the initial profile,
//! the equilibrium profile and equilibrium-weighted oscillating
//! exponentials built from the characteristic roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::controller::{ControlSample, InputLaw};
use crate::delay::Snapshot;
use crate::error::{Error, Result};
use crate::grid::{AgeGrid, GridFunction};
use crate::integrate::{rk4_step, step_count};
use crate::model::{Equilibrium, ModelParams};
use crate::trajectory::Trajectory;

/// Largest accepted Gram condition number.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Residual bound every returned root must meet.
pub const ROOT_TOLERANCE: f64 = 1e-8;

const GUESS_SIGMA: (f64, f64, usize) = (-6.0, 1.0, 15);
const GUESS_OMEGA_POINTS: usize = 24;
const DEDUP_DISTANCE: f64 = 1e-4;
const OVERFLOW: f64 = 1e100;

/// `∫ k̃(a) e^{−s a} da − 1`; its zeros are the exponents `e^{s t}` of
/// the free modes.
pub fn characteristic_residual(k_tilde: &GridFunction, s: Complex64) -> Complex64 {
    residual_and_slope(k_tilde, &k_tilde.grid().simpson_weights(), s).0
}

fn residual_and_slope(
    k_tilde: &GridFunction,
    weights: &[f64],
    s: Complex64,
) -> (Complex64, Complex64) {
    let grid = k_tilde.grid();
    let mut f = Complex64::new(-1.0, 0.0);
    let mut df = Complex64::new(0.0, 0.0);
    for ((a, w), k) in grid.ages().zip(weights).zip(k_tilde.values()) {
        let term = (-s * a).exp() * (w * k);
        f += term;
        df -= term * a;
    }
    (f, df)
}

fn newton(k_tilde: &GridFunction, weights: &[f64], mut s: Complex64) -> Option<Complex64> {
    let (mut f, mut df) = residual_and_slope(k_tilde, weights, s);
    for _ in 0..100 {
        if f.norm() < 1e-14 {
            break;
        }
        if df.norm() == 0.0 {
            return None;
        }
        let step = f / df;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = s - step * scale;
            let (ft, dft) = residual_and_slope(k_tilde, weights, trial);
            if ft.norm().is_finite() && ft.norm() < f.norm() {
                s = trial;
                f = ft;
                df = dft;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || !s.norm().is_finite() || s.norm() > 1e3 {
            break;
        }
    }
    (f.norm() < ROOT_TOLERANCE * 1e-2).then_some(s)
}

/// The trivial root `0` followed by the `count/2 − 1` complex roots with
/// positive imaginary part and largest real parts (each stands for its
/// conjugate pair).
pub fn characteristic_roots(eq: &Equilibrium, count: usize) -> Result<Vec<Complex64>> {
    if count < 2 || count % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "root count must be even and at least 2, got {count}"
        )));
    }
    let requested = count / 2 - 1;
    let k_tilde = &eq.k_tilde;
    let grid = k_tilde.grid();
    let weights = grid.simpson_weights();
    let omega_max = 6.0 * std::f64::consts::PI / grid.max_age();

    let mut found: Vec<Complex64> = Vec::new();
    let (s_lo, s_hi, s_n) = GUESS_SIGMA;
    for i in 0..s_n {
        let sigma = s_lo + (s_hi - s_lo) * i as f64 / (s_n - 1) as f64;
        for j in 1..=GUESS_OMEGA_POINTS {
            let omega = omega_max * j as f64 / GUESS_OMEGA_POINTS as f64;
            let Some(root) = newton(k_tilde, &weights, Complex64::new(sigma, omega)) else {
                continue;
            };
            let root = if root.im < 0.0 { root.conj() } else { root };
            if root.im < 1e-8 {
                continue;
            }
            if found.iter().all(|r| (r - root).norm() > DEDUP_DISTANCE) {
                found.push(root);
            }
        }
    }
    found.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    if found.len() < requested {
        return Err(Error::RootSearchExhausted {
            found: found.len(),
            requested,
        });
    }
    let mut roots = vec![Complex64::new(0.0, 0.0)];
    roots.extend(found.into_iter().take(requested));
    for r in &roots {
        let res = residual_and_slope(k_tilde, &weights, *r).0.norm();
        if !(res < ROOT_TOLERANCE) {
            return Err(Error::RootSearchExhausted {
                found: 0,
                requested,
            });
        }
    }
    Ok(roots)
}

#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    trials: Vec<GridFunction>,
    derivatives: Vec<GridFunction>,
    roots: Vec<Complex64>,
}

impl GalerkinBasis {
    /// Arbitrary trial functions with their age derivatives.
    pub fn from_trials(trials: Vec<GridFunction>, derivatives: Vec<GridFunction>) -> Result<Self> {
        if trials.is_empty() || trials.len() != derivatives.len() {
            return Err(Error::InvalidParams(
                "need one derivative per trial function".into(),
            ));
        }
        let grid = trials[0].grid();
        if trials.iter().chain(&derivatives).any(|f| f.grid() != grid) {
            return Err(Error::InvalidParams(
                "trial functions live on different grids".into(),
            ));
        }
        Ok(Self {
            trials,
            derivatives,
            roots: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn grid(&self) -> AgeGrid {
        self.trials[0].grid()
    }

    pub fn trials(&self) -> &[GridFunction] {
        &self.trials
    }

    pub fn derivatives(&self) -> &[GridFunction] {
        &self.derivatives
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.trials[i].inner(&self.trials[j]))
    }

    /// `φ(a)ᵀ λ` on the grid.
    pub fn combine(&self, lambda: &[f64]) -> Vec<f64> {
        combine(&self.trials, lambda)
    }
}

fn combine(funcs: &[GridFunction], lambda: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; funcs[0].grid().len()];
    for (f, l) in funcs.iter().zip(lambda) {
        for (o, v) in out.iter_mut().zip(f.values()) {
            *o += l * v;
        }
    }
    out
}

/// Condition number of a symmetric matrix, infinite if it is not positive
/// definite.
pub fn gram_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `φ₁ = x0`, `φ₂ = x*`, then `cos(ω a) e^{−σ a} x*` and `sin(ω a) e^{−σ a} x*`
/// for each root `σ + jω` after the trivial one.
pub fn build_basis(
    x0: &GridFunction,
    params: &ModelParams,
    eq: &Equilibrium,
    roots: &[Complex64],
    n: usize,
) -> Result<GalerkinBasis> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "basis size must be even and at least 4, got {n}"
        )));
    }
    let pairs = n / 2 - 1;
    if roots.len() < pairs + 1 {
        return Err(Error::RootSearchExhausted {
            found: roots.len().saturating_sub(1),
            requested: pairs,
        });
    }
    let x_star = &eq.x_star;
    let decay = params.mu.map(|_, mu| mu + eq.d_star);
    let x_star_prime = x_star.mul(&decay).scale(-1.0);

    let mut trials = vec![x0.clone(), x_star.clone()];
    let mut derivatives = vec![x0.derivative(), x_star_prime];
    for root in &roots[1..=pairs] {
        let (sigma, omega) = (root.re, root.im);
        let cos = x_star.map(|a, x| (omega * a).cos() * (-sigma * a).exp() * x);
        let sin = x_star.map(|a, x| (omega * a).sin() * (-sigma * a).exp() * x);
        // φc′ = −(σ + μ + D*) φc − ω φs, φs′ = −(σ + μ + D*) φs + ω φc
        let rate = decay.map(|_, d| d + sigma);
        let dcos = GridFunction::from_values(
            x_star.grid(),
            cos.values()
                .iter()
                .zip(sin.values())
                .zip(rate.values())
                .map(|((c, s), r)| -r * c - omega * s)
                .collect(),
        )?;
        let dsin = GridFunction::from_values(
            x_star.grid(),
            sin.values()
                .iter()
                .zip(cos.values())
                .zip(rate.values())
                .map(|((s, c), r)| -r * s + omega * c)
                .collect(),
        )?;
        trials.push(cos);
        trials.push(sin);
        derivatives.push(dcos);
        derivatives.push(dsin);
    }
    let mut basis = GalerkinBasis::from_trials(trials, derivatives)?;
    basis.roots = roots[..=pairs].to_vec();
    let condition = gram_condition(&basis.gram());
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::DependentBasis { condition });
    }
    Ok(basis)
}

/// Mass matrix, transport matrix and output vector of the modal system.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub m_matrix: DMatrix<f64>,
    pub n_matrix: DMatrix<f64>,
    pub p_vector: DVector<f64>,
    /// `M⁻¹ N`
    pub generator: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub t: f64,
}

impl GalerkinSystem {
    /// `y = pᵀ λ`
    pub fn output(&self) -> f64 {
        self.p_vector.dot(&self.lambda)
    }
}

/// `M = ∫ φ φᵀ`, `N = −∫ φ (φ′ + μ φ)ᵀ`, `p = ∫ p φ`, `λ₀ = e₁`.
pub fn assemble(basis: &GalerkinBasis, params: &ModelParams) -> Result<GalerkinSystem> {
    let n = basis.len();
    let trials = basis.trials();
    let transported: Vec<GridFunction> = trials
        .iter()
        .zip(basis.derivatives())
        .map(|(f, df)| {
            GridFunction::from_values(
                f.grid(),
                df.values()
                    .iter()
                    .zip(f.values())
                    .zip(params.mu.values())
                    .map(|((d, v), mu)| d + mu * v)
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let m_matrix = basis.gram();
    let n_matrix = DMatrix::from_fn(n, n, |i, j| -trials[i].inner(&transported[j]));
    let p_vector = DVector::from_iterator(n, trials.iter().map(|f| f.inner(&params.p)));
    let chol = m_matrix.clone().cholesky().ok_or(Error::DependentBasis {
        condition: gram_condition(&m_matrix),
    })?;
    let generator = chol.solve(&n_matrix);
    let mut lambda = DVector::zeros(n);
    lambda[0] = 1.0;
    Ok(GalerkinSystem {
        m_matrix,
        n_matrix,
        p_vector,
        generator,
        lambda,
        t: 0.0,
    })
}

/// PDE defect `R = φ′ᵀλ + φᵀ(M⁻¹N − D)λ + (μ + D) φᵀλ` and its L² norm.
pub fn residual(
    system: &GalerkinSystem,
    basis: &GalerkinBasis,
    params: &ModelParams,
    d_applied: f64,
) -> (f64, GridFunction) {
    let lambda = system.lambda.as_slice();
    let mut rate = &system.generator * &system.lambda;
    rate.axpy(-d_applied, &system.lambda, 1.0);
    let transport = combine(basis.derivatives(), lambda);
    let change = combine(basis.trials(), rate.as_slice());
    let profile = basis.combine(lambda);
    let values: Vec<f64> = transport
        .iter()
        .zip(&change)
        .zip(&profile)
        .zip(params.mu.values())
        .map(|(((tr, ch), x), mu)| tr + ch + (mu + d_applied) * x)
        .collect();
    let grid = basis.grid();
    let norm = grid
        .integrate(&values.iter().map(|v| v * v).collect::<Vec<_>>())
        .max(0.0)
        .sqrt();
    (
        norm,
        GridFunction::from_values(grid, values).expect("finite residual"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalerkinSample {
    pub t: f64,
    pub y: f64,
    pub y_ref: f64,
    pub z: [f64; 2],
    pub control: ControlSample,
    /// L² norm of the PDE defect.
    pub residual: f64,
    /// Residual divided by the L² norm of the approximate profile.
    pub relative_residual: f64,
    pub min_profile: f64,
}

#[derive(Debug, Clone)]
pub struct GalerkinTrace {
    pub dt: f64,
    pub samples: Vec<GalerkinSample>,
    pub lambdas: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

impl GalerkinTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// Time average of the relative residual.
    pub fn mean_relative_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.relative_residual)
            .sum::<f64>()
            / self.samples.len() as f64
    }
}

/// Integrates `λ̇ = (M⁻¹N − D) λ` together with the observer.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    system: &mut GalerkinSystem,
    basis: &GalerkinBasis,
    params: &ModelParams,
    traj: &Trajectory,
    law: &InputLaw,
    horizon: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<GalerkinTrace> {
    let steps = step_count(horizon, dt).ok_or_else(|| {
        Error::InvalidParams(format!("horizon {horizon} is not a multiple of dt {dt}"))
    })?;
    let n = basis.len();
    let grid = basis.grid();
    let bounds = params.bounds;
    let mut z = law.initial_observer();
    let t0 = system.t;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut lambdas = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();

    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        system.t = t;
        let profile = basis.combine(system.lambda.as_slice());
        let min_profile = profile.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_profile > 0.0) {
            return Err(Error::PositivityViolation {
                t,
                min: min_profile,
            });
        }
        let y = system.output();
        let control = law.apply(y, traj, z, t, bounds)?;
        let (r, _) = residual(system, basis, params, control.d_applied);
        let profile_norm = grid
            .integrate(&profile.iter().map(|v| v * v).collect::<Vec<_>>())
            .sqrt();
        samples.push(GalerkinSample {
            t,
            y,
            y_ref: traj.eval(t),
            z,
            control,
            residual: r,
            relative_residual: r / profile_norm,
            min_profile,
        });
        lambdas.push(system.lambda.as_slice().to_vec());
        if snapshot_times.iter().any(|&ts| (ts - t).abs() < 0.5 * dt) {
            snapshots.push(Snapshot {
                t,
                profile: GridFunction::from_values(grid, profile)?,
            });
        }
        if k == steps {
            break;
        }

        let mut state: Vec<f64> = system.lambda.iter().copied().chain(z).collect();
        let mut failure = None;
        let generator = &system.generator;
        let p = &system.p_vector;
        rk4_step(t, &mut state, dt, |tau, s, ds| {
            let lam = DVector::from_column_slice(&s[..n]);
            let zs = [s[n], s[n + 1]];
            match law.apply(p.dot(&lam), traj, zs, tau, bounds) {
                Ok(c) => {
                    let mut rate = generator * &lam;
                    rate.axpy(-c.d_applied, &lam, 1.0);
                    ds[..n].copy_from_slice(rate.as_slice());
                    let dz = law.observer_rate(zs, &c);
                    ds[n] = dz[0];
                    ds[n + 1] = dz[1];
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    ds.fill(0.0);
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if state.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW) {
            return Err(Error::Instability { t: t + dt });
        }
        system.lambda.copy_from_slice(&state[..n]);
        z = [state[n], state[n + 1]];
    }
    Ok(GalerkinTrace {
        dt,
        samples,
        lambdas,
        snapshots,
    })
}
