//! Chemostat model data and its steady state.
//!
//! The population density obeys the McKendrick-von Foerster transport
//! equation with mortality `μ(a)`, dilution `D(t)` and the non-local birth
//! condition `x(0,t) = ⟨k, x[t]⟩`. The output is `y(t) = ⟨p, x[t]⟩`.

use crate::error::{Error, Result};
use crate::grid::{AgeGrid, GridFunction};

/// Closed-form or tabulated age profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `scale · a (A − a)`
    QuadraticMotherhood {
        scale: f64,
    },
    /// `scale · (slope · a + exp(rate · a))`
    LinearExponential {
        slope: f64,
        rate: f64,
        scale: f64,
    },
    /// Values at uniformly spaced ages covering `[0, A]`.
    Table(Vec<f64>),
}

impl Profile {
    pub fn sample(&self, grid: AgeGrid) -> Result<GridFunction> {
        let max_age = grid.max_age();
        match self {
            Profile::Constant(c) => Ok(GridFunction::constant(grid, *c)),
            Profile::QuadraticMotherhood { scale } => {
                Ok(grid.sample(|a| scale * a * (max_age - a)))
            }
            Profile::LinearExponential { slope, rate, scale } => {
                Ok(grid.sample(|a| scale * (slope * a + (rate * a).exp())))
            }
            Profile::Table(values) => GridFunction::from_table(grid, values),
        }
    }

    /// Exact derivative for closed forms, fourth-order differences for
    /// tables.
    pub fn derivative(&self, grid: AgeGrid) -> Result<GridFunction> {
        let max_age = grid.max_age();
        match self {
            Profile::Constant(_) => Ok(GridFunction::constant(grid, 0.0)),
            Profile::QuadraticMotherhood { scale } => {
                Ok(grid.sample(|a| scale * (max_age - 2.0 * a)))
            }
            Profile::LinearExponential { slope, rate, scale } => {
                Ok(grid.sample(|a| scale * (slope + rate * (rate * a).exp())))
            }
            Profile::Table(_) => Ok(self.sample(grid)?.derivative()),
        }
    }

    pub fn scaled(&self, c: f64) -> Profile {
        match self {
            Profile::Constant(v) => Profile::Constant(c * v),
            Profile::QuadraticMotherhood { scale } => {
                Profile::QuadraticMotherhood { scale: c * scale }
            }
            Profile::LinearExponential { slope, rate, scale } => Profile::LinearExponential {
                slope: *slope,
                rate: *rate,
                scale: c * scale,
            },
            Profile::Table(v) => Profile::Table(v.iter().map(|x| c * x).collect()),
        }
    }
}

/// Input bounds `[d_min, d_max]` on the dilution rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub d_min: f64,
    pub d_max: f64,
}

impl InputBounds {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min.is_finite() && d_max.is_finite() && d_min >= 0.0 && d_min < d_max) {
            return Err(Error::InvalidParams(format!(
                "input bounds need 0 <= d_min < d_max, got [{d_min}, {d_max}]"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn width(&self) -> f64 {
        self.d_max - self.d_min
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.d_min && d <= self.d_max
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    grid: AgeGrid,
    pub mu: GridFunction,
    pub k: GridFunction,
    pub p: GridFunction,
    pub bounds: InputBounds,
    mu_form: Profile,
    k_form: Profile,
    p_form: Profile,
    k_prime: GridFunction,
    cumulative_mortality: Vec<f64>,
}

impl ModelParams {
    pub fn new(
        grid: AgeGrid,
        mu: &Profile,
        k: &Profile,
        p: &Profile,
        bounds: InputBounds,
    ) -> Result<Self> {
        let mu_f = mu.sample(grid)?;
        let k_f = k.sample(grid)?;
        let p_f = p.sample(grid)?;
        if mu_f.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParams("mortality must be nonnegative".into()));
        }
        for (name, f) in [("birth modulus", &k_f), ("output weight", &p_f)] {
            if f.values().iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be nonnegative")));
            }
            if f.integral() <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must not vanish identically"
                )));
            }
        }
        let cumulative_mortality = grid.cumulative_trapezoid(mu_f.values());
        Ok(Self {
            grid,
            mu: mu_f,
            k: k_f,
            p: p_f,
            bounds,
            k_prime: k.derivative(grid)?,
            mu_form: mu.clone(),
            k_form: k.clone(),
            p_form: p.clone(),
            cumulative_mortality,
        })
    }

    pub fn grid(&self) -> AgeGrid {
        self.grid
    }

    pub fn max_age(&self) -> f64 {
        self.grid.max_age()
    }

    pub fn birth_profile(&self) -> &Profile {
        &self.k_form
    }

    /// `∫₀ᵃ μ` at the grid nodes.
    pub fn cumulative_mortality(&self) -> &[f64] {
        &self.cumulative_mortality
    }

    /// Survival weight `exp(−d a − ∫₀ᵃ μ)` at the nodes.
    pub fn survival(&self, d: f64) -> Vec<f64> {
        self.grid
            .ages()
            .zip(&self.cumulative_mortality)
            .map(|(a, m)| (-d * a - m).exp())
            .collect()
    }

    pub fn k_derivative(&self) -> &GridFunction {
        &self.k_prime
    }

    /// Same model with the birth modulus multiplied by `c`.
    pub fn with_birth_scaled(&self, c: f64) -> Result<Self> {
        ModelParams::new(
            self.grid,
            &self.mu_form,
            &self.k_form.scaled(c),
            &self.p_form,
            self.bounds,
        )
    }
}

/// `∫₀ᴬ k(a) exp(−d a − ∫₀ᵃ μ) da − 1`.
pub fn lotka_sharpe_residual(d: f64, params: &ModelParams) -> f64 {
    let grid = params.grid();
    let integrand: Vec<f64> = params
        .k
        .values()
        .iter()
        .zip(params.survival(d))
        .map(|(k, s)| k * s)
        .collect();
    grid.integrate(&integrand) - 1.0
}

fn lotka_sharpe_slope(d: f64, params: &ModelParams) -> f64 {
    let grid = params.grid();
    let integrand: Vec<f64> = grid
        .ages()
        .zip(params.k.values())
        .zip(params.survival(d))
        .map(|((a, k), s)| -a * k * s)
        .collect();
    grid.integrate(&integrand)
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub d_star: f64,
    /// Equilibrium profile normalised to `⟨p, x*⟩ = 1`.
    pub x_star: GridFunction,
    /// `g = x* · p`
    pub g: GridFunction,
    /// `k̃(a) = k(a) exp(−D* a − ∫₀ᵃ μ)`, integrates to one.
    pub k_tilde: GridFunction,
}

const MAX_DOUBLINGS: usize = 60;

/// Finds the equilibrium dilution rate and the associated profiles.
///
/// Bisection on a doubling bracket down to 1e-6, then Newton polish.
pub fn solve_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    let f = |d: f64| lotka_sharpe_residual(d, params);
    let r0 = f(0.0);
    let d_star = if r0.abs() <= 1e-12 {
        0.0
    } else if r0 < 0.0 {
        return Err(Error::NoRoot { upper: 0.0 });
    } else {
        let mut hi = 1.0;
        let mut doublings = 0;
        while f(hi) > 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::NoRoot { upper: hi });
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut d = 0.5 * (lo + hi);
        for _ in 0..50 {
            let r = f(d);
            if r.abs() < 1e-14 {
                break;
            }
            let step = r / lotka_sharpe_slope(d, params);
            d -= step;
            if step.abs() < 1e-15 * d.abs().max(1.0) {
                break;
            }
        }
        d
    };

    let grid = params.grid();
    let survival = GridFunction::from_values(grid, params.survival(d_star))?;
    let norm = survival.inner(&params.p);
    let x_star = survival.scale(1.0 / norm);
    let g = x_star.mul(&params.p);
    let k_tilde = params.k.mul(&survival);
    Ok(Equilibrium {
        d_star,
        x_star,
        g,
        k_tilde,
    })
}

/// Scale `c` such that `c · shape` satisfies the Lotka-Sharpe condition at
/// `d_star_target`.
pub fn calibrate_birth_modulus(
    shape: &GridFunction,
    d_star_target: f64,
    params: &ModelParams,
) -> Result<f64> {
    let weighted = shape
        .values()
        .iter()
        .zip(params.survival(d_star_target))
        .map(|(s, w)| s * w)
        .collect::<Vec<_>>();
    let integral = params.grid().integrate(&weighted);
    if integral.abs() < f64::MIN_POSITIVE || !integral.is_finite() {
        return Err(Error::DegenerateShape);
    }
    Ok(1.0 / integral)
}

/// Positivity and `x0(0) = ⟨k, x0⟩` up to `1e-6 · max|x0|`.
pub fn check_initial_condition(x0: &GridFunction, params: &ModelParams) -> bool {
    compatibility_defect(x0, params).is_some_and(|defect| defect <= 1e-6 * x0.max_abs())
}

/// `|x0(0) − ⟨k, x0⟩|`, or `None` if `x0` is not positive.
pub fn compatibility_defect(x0: &GridFunction, params: &ModelParams) -> Option<f64> {
    if !x0.is_positive() {
        return None;
    }
    Some((x0.at_node(0) - x0.inner(&params.k)).abs())
}

/// Linear-exponential profile `scale · (slope · a + exp(rate · a))` with the
/// slope fixed by the birth condition and the scale by `⟨p, x0⟩ = output`.
pub fn compatible_linear_exponential(
    rate: f64,
    output: f64,
    params: &ModelParams,
) -> Result<Profile> {
    let grid = params.grid();
    let exp_part = grid.sample(|a| (rate * a).exp());
    let lin_part = grid.sample(|a| a);
    let k_lin = lin_part.inner(&params.k);
    if k_lin.abs() < f64::MIN_POSITIVE {
        return Err(Error::InvalidParams(
            "birth modulus has no first moment".into(),
        ));
    }
    let slope = (1.0 - exp_part.inner(&params.k)) / k_lin;
    let unscaled = Profile::LinearExponential {
        slope,
        rate,
        scale: 1.0,
    }
    .sample(grid)?;
    let mass = unscaled.inner(&params.p);
    if !(mass > 0.0) {
        return Err(Error::InvalidIc(
            "compatible profile has non-positive output".into(),
        ));
    }
    Ok(Profile::LinearExponential {
        slope,
        rate,
        scale: output / mass,
    })
}
