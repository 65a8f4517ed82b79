#![allow(dead_code)]

use agestruct::controller::ControllerGains;
use agestruct::model::{calibrate_birth_modulus, compatible_linear_exponential, solve_equilibrium};
use agestruct::{AgeGrid, Equilibrium, GridFunction, InputBounds, ModelParams, Profile};

pub const MAX_AGE: f64 = 2.0;
pub const MORTALITY: f64 = 0.1;

pub fn bounds() -> InputBounds {
    InputBounds::new(0.5, 1.5).unwrap()
}

pub fn params_with(nodes: usize, k0: f64) -> ModelParams {
    ModelParams::new(
        AgeGrid::new(MAX_AGE, nodes).unwrap(),
        &Profile::Constant(MORTALITY),
        &Profile::QuadraticMotherhood { scale: k0 },
        &Profile::Constant(1.0),
        bounds(),
    )
    .unwrap()
}

/// Trial system with the birth modulus calibrated to `D* = 1`.
pub fn calibrated(nodes: usize) -> (ModelParams, Equilibrium) {
    let base = params_with(nodes, 1.0);
    let k0 = calibrate_birth_modulus(&base.k, 1.0, &base).unwrap();
    let params = base.with_birth_scaled(k0).unwrap();
    let eq = solve_equilibrium(&params).unwrap();
    (params, eq)
}

/// Birth-compatible linear-exponential start with unit output.
pub fn x0(params: &ModelParams) -> GridFunction {
    compatible_linear_exponential(-1.3, 1.0, params)
        .unwrap()
        .sample(params.grid())
        .unwrap()
}

pub fn gains() -> ControllerGains {
    ControllerGains::new(2.0, 4.0, 8.0, [0.0, 0.5]).unwrap()
}

/// Composite Simpson on `n` (even) panels of a closed-form integrand.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}
