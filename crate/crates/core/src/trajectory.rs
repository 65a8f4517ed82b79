//! Reference yield trajectories with closed-form logarithmic rates.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::model::{Equilibrium, InputBounds};

/// Polynomial blend coefficients of the set-point transition; they sum to one
/// and their weighted sum `3·10 − 4·15 + 5·6` vanishes.
pub const TRANSITION_COEFFS: [f64; 3] = [10.0, -15.0, 6.0];

/// Probe points used for the rate extrema.
pub const PROBE_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    Constant {
        value: f64,
    },
    /// `y4 + y1 t`
    Ramp {
        y4: f64,
        y1: f64,
    },
    /// `y2 + y3 sin(ω t + sin ω t)`
    Periodic {
        y2: f64,
        y3: f64,
        omega: f64,
    },
    /// Quintic blend from `y0` to `y_delta` over `[0, t_delta]`, constant after.
    Transition {
        y0: f64,
        y_delta: f64,
        t_delta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    kind: TrajectoryKind,
}

pub fn make_constant(value: f64) -> Result<Trajectory> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::NonPositive(format!("constant reference {value}")));
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Constant { value },
    })
}

pub fn make_ramp(y4: f64, y1: f64) -> Result<Trajectory> {
    if !(y4 > 0.0) || !(y1 >= 0.0) {
        return Err(Error::NonPositive(format!(
            "ramp needs y4 > 0 and y1 >= 0, got ({y4}, {y1})"
        )));
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Ramp { y4, y1 },
    })
}

pub fn make_periodic(y2: f64, y3: f64, omega: f64) -> Result<Trajectory> {
    if !(y3 >= 0.0) || !(y2 > y3) {
        return Err(Error::NonPositive(format!(
            "periodic needs y2 > y3 >= 0, got ({y2}, {y3})"
        )));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "angular frequency must be positive, got {omega}"
        )));
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Periodic { y2, y3, omega },
    })
}

pub fn make_transition(y0: f64, y_delta: f64, t_delta: f64) -> Result<Trajectory> {
    if !(y0 > 0.0) || !(y_delta > 0.0) {
        return Err(Error::NonPositive(format!(
            "transition end points must be positive, got ({y0}, {y_delta})"
        )));
    }
    if !(t_delta > 0.0 && t_delta.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "transition time must be positive, got {t_delta}"
        )));
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Transition {
            y0,
            y_delta,
            t_delta,
        },
    })
}

impl Trajectory {
    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            TrajectoryKind::Constant { value } => value,
            TrajectoryKind::Ramp { y4, y1 } => y4 + y1 * t,
            TrajectoryKind::Periodic { y2, y3, omega } => {
                let wt = omega * t;
                y2 + y3 * (wt + wt.sin()).sin()
            }
            TrajectoryKind::Transition {
                y0,
                y_delta,
                t_delta,
            } => {
                if t >= t_delta {
                    return y_delta;
                }
                let s = t.max(0.0) / t_delta;
                let [g1, g2, g3] = TRANSITION_COEFFS;
                y0 + (y_delta - y0) * s.powi(3) * (g1 + s * (g2 + s * g3))
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            TrajectoryKind::Constant { .. } => 0.0,
            TrajectoryKind::Ramp { y1, .. } => y1,
            TrajectoryKind::Periodic { y3, omega, .. } => {
                let wt = omega * t;
                y3 * (wt + wt.sin()).cos() * omega * (1.0 + wt.cos())
            }
            TrajectoryKind::Transition {
                y0,
                y_delta,
                t_delta,
            } => {
                if t >= t_delta || t <= 0.0 {
                    return 0.0;
                }
                let s = t / t_delta;
                let [g1, g2, g3] = TRANSITION_COEFFS;
                (y_delta - y0) / t_delta * s * s * (3.0 * g1 + s * (4.0 * g2 + s * 5.0 * g3))
            }
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match self.kind {
            TrajectoryKind::Constant { .. } | TrajectoryKind::Ramp { .. } => 0.0,
            TrajectoryKind::Periodic { y3, omega, .. } => {
                let wt = omega * t;
                let phase = wt + wt.sin();
                let dphase = omega * (1.0 + wt.cos());
                y3 * (-phase.sin() * dphase * dphase - phase.cos() * omega * omega * wt.sin())
            }
            TrajectoryKind::Transition {
                y0,
                y_delta,
                t_delta,
            } => {
                if t >= t_delta || t <= 0.0 {
                    return 0.0;
                }
                let s = t / t_delta;
                let [g1, g2, g3] = TRANSITION_COEFFS;
                (y_delta - y0) / (t_delta * t_delta)
                    * s
                    * (6.0 * g1 + s * (12.0 * g2 + s * 20.0 * g3))
            }
        }
    }

    /// `ẏ_ref / y_ref`
    pub fn rate(&self, t: f64) -> f64 {
        match self.kind {
            TrajectoryKind::Ramp { y4, y1 } => y1 / (y4 + y1 * t),
            _ => self.derivative(t) / self.eval(t),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self.kind {
            TrajectoryKind::Periodic { omega, .. } => Some(2.0 * PI / omega),
            _ => None,
        }
    }

    /// Whether the logarithmic rate is monotone on `t ≥ 0`.
    pub fn has_monotone_rate(&self) -> bool {
        matches!(
            self.kind,
            TrajectoryKind::Constant { .. } | TrajectoryKind::Ramp { .. }
        )
    }

    pub fn scaled(&self, c: f64) -> Result<Trajectory> {
        match self.kind {
            TrajectoryKind::Constant { value } => make_constant(c * value),
            TrajectoryKind::Ramp { y4, y1 } => make_ramp(c * y4, c * y1),
            TrajectoryKind::Periodic { y2, y3, omega } => make_periodic(c * y2, c * y3, omega),
            TrajectoryKind::Transition {
                y0,
                y_delta,
                t_delta,
            } => make_transition(c * y0, c * y_delta, t_delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub inf_rate: f64,
    pub sup_rate: f64,
    pub valid: bool,
    /// First time the rate lies strictly inside the admissible band.
    pub t_crit: Option<f64>,
    /// The rate leaves the band again after `t_crit` on the probe grid.
    pub may_reexit: bool,
}

/// Checks `D* − d_max < inf ẏ/y ≤ sup ẏ/y < D* − d_min` on a probe grid.
///
/// Periodic trajectories are probed over one period regardless of
/// `horizon`.
pub fn validate(
    traj: &Trajectory,
    eq: &Equilibrium,
    bounds: InputBounds,
    horizon: f64,
) -> ValidityReport {
    validate_with_points(traj, eq.d_star, bounds, horizon, PROBE_POINTS)
}

pub fn validate_with_points(
    traj: &Trajectory,
    d_star: f64,
    bounds: InputBounds,
    horizon: f64,
    points: usize,
) -> ValidityReport {
    let span = traj.period().unwrap_or(horizon);
    let lo = d_star - bounds.d_max;
    let hi = d_star - bounds.d_min;
    let inside = |r: f64| r > lo && r < hi;

    let probe = |i: usize| span * i as f64 / (points - 1) as f64;
    let mut inf_rate = f64::INFINITY;
    let mut sup_rate = f64::NEG_INFINITY;
    let mut entry: Option<usize> = None;
    let mut reexit = false;
    for i in 0..points {
        let r = traj.rate(probe(i));
        inf_rate = inf_rate.min(r);
        sup_rate = sup_rate.max(r);
        match (entry, inside(r)) {
            (None, true) => entry = Some(i),
            (Some(_), false) => reexit = true,
            _ => {}
        }
    }

    let t_crit = entry.map(|i| {
        if i == 0 {
            return 0.0;
        }
        // bisect the band crossing between the last outside and first inside probe
        let (mut a, mut b) = (probe(i - 1), probe(i));
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if inside(traj.rate(mid)) {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= f64::EPSILON * b.max(1.0) {
                break;
            }
        }
        b
    });

    ValidityReport {
        inf_rate,
        sup_rate,
        valid: inf_rate > lo && sup_rate < hi,
        t_crit,
        may_reexit: reexit,
    }
}

/// `x_ref(a, t) = x*(a) · y_ref(t)`
pub fn reference_profile(traj: &Trajectory, eq: &Equilibrium, t: f64) -> GridFunction {
    eq.x_star.scale(traj.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> InputBounds {
        InputBounds::new(0.5, 1.5).unwrap()
    }

    #[test]
    fn transition_coefficients() {
        assert_eq!(TRANSITION_COEFFS, [10.0, -15.0, 6.0]);
        assert_eq!(TRANSITION_COEFFS.iter().sum::<f64>(), 1.0);
        let slope_sum: f64 = TRANSITION_COEFFS
            .iter()
            .enumerate()
            .map(|(i, g)| (i as f64 + 3.0) * g)
            .sum();
        assert_eq!(slope_sum, 0.0);
    }

    #[test]
    fn transition_end_points() {
        let tr = make_transition(1.0, 3.0, 5.0).unwrap();
        assert_eq!(tr.eval(0.0), 1.0);
        assert_eq!(tr.eval(5.0), 3.0);
        assert!((tr.eval(5.0 - 1e-12) - 3.0).abs() < 1e-10);
        assert_eq!(tr.derivative(0.0), 0.0);
        assert!(tr.derivative(5.0 - 1e-9).abs() < 1e-9);
        assert!(tr.second_derivative(1e-9).abs() < 1e-7);
        assert!(tr.second_derivative(5.0 - 1e-9).abs() < 1e-7);
        assert_eq!(tr.eval(7.0), 3.0);
    }

    #[test]
    fn transition_derivatives_match_differences() {
        let tr = make_transition(1.0, 3.0, 5.0).unwrap();
        for t in [0.3, 1.7, 2.5, 4.1] {
            let h = 1e-5;
            let fd1 = (tr.eval(t + h) - tr.eval(t - h)) / (2.0 * h);
            let fd2 = (tr.derivative(t + h) - tr.derivative(t - h)) / (2.0 * h);
            assert!((fd1 - tr.derivative(t)).abs() < 1e-8);
            assert!((fd2 - tr.second_derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn periodic_rejects_nonpositive() {
        assert!(make_periodic(0.5, 0.5, 1.0).is_err());
        assert!(make_periodic(0.79, 0.625, 2.0 * PI / 6.0).is_ok());
    }

    #[test]
    fn periodic_without_amplitude_is_constant() {
        let tr = make_periodic(0.79, 0.0, 1.0).unwrap();
        for t in [0.0, 0.4, 3.3] {
            assert_eq!(tr.eval(t), 0.79);
            assert_eq!(tr.rate(t), 0.0);
        }
    }

    #[test]
    fn periodic_derivative_matches_difference() {
        let tr = make_periodic(0.79, 0.625, 2.0 * PI / 6.0).unwrap();
        for t in [0.1, 1.0, 2.9, 5.5] {
            let h = 1e-5;
            let fd = (tr.eval(t + h) - tr.eval(t - h)) / (2.0 * h);
            assert!((fd - tr.derivative(t)).abs() < 1e-8);
            let fd2 = (tr.derivative(t + h) - tr.derivative(t - h)) / (2.0 * h);
            assert!((fd2 - tr.second_derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn ramp_rate() {
        let ramp = make_ramp(0.3, 0.75).unwrap();
        assert!((ramp.rate(0.0) - 2.5).abs() < 1e-15);
        assert!((ramp.rate(1.6) - 0.5).abs() < 1e-15);
        let flat = make_ramp(0.3, 0.0).unwrap();
        assert_eq!(flat.rate(3.0), 0.0);
        assert!(validate_with_points(&flat, 1.0, bounds(), 10.0, 100).valid);
    }

    #[test]
    fn ramp_entry_time() {
        let ramp = make_ramp(0.3, 0.75).unwrap();
        let report = validate_with_points(&ramp, 1.0, bounds(), 10.0, PROBE_POINTS);
        assert!(!report.valid);
        assert!((report.sup_rate - 2.5).abs() < 1e-12);
        assert!((report.t_crit.unwrap() - 1.6).abs() < 1e-9);
        assert!(!report.may_reexit);
    }

    #[test]
    fn constant_is_valid_from_start() {
        let c = make_constant(2.0).unwrap();
        let report = validate_with_points(&c, 1.0, bounds(), 10.0, 100);
        assert!(report.valid);
        assert_eq!(report.t_crit, Some(0.0));
        assert!(make_constant(0.0).is_err());
    }

    #[test]
    fn transition_sup_rate_is_grid_converged() {
        let tr = make_transition(1.0, 3.0, 5.0).unwrap();
        let coarse = validate_with_points(&tr, 1.0, bounds(), 5.0, PROBE_POINTS);
        let fine = validate_with_points(&tr, 1.0, bounds(), 5.0, 10 * PROBE_POINTS);
        assert!((coarse.sup_rate - fine.sup_rate).abs() < 1e-6);
        assert!(coarse.valid);
    }
}
