//! Saturated two-degree-of-freedom output controller with a D* observer.
//!
//! Nothing in this module sees the model: inputs are the measured output,
//! the reference trajectory, the observer state, gains and input bounds.

use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::model::InputBounds;
use crate::trajectory::Trajectory;

pub fn saturate(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub gamma: f64,
    pub l1: f64,
    pub l2: f64,
    /// Observer initial state; the second entry is the initial guess of D*.
    pub z0: [f64; 2],
}

impl ControllerGains {
    pub fn new(gamma: f64, l1: f64, l2: f64, z0: [f64; 2]) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("l1", l1), ("l2", l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !z0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams(
                "observer initial state must be finite".into(),
            ));
        }
        Ok(Self { gamma, l1, l2, z0 })
    }

    /// Observer error matrix `[[−l1, 1], [−l2, 0]]`.
    pub fn observer_matrix(&self) -> [[f64; 2]; 2] {
        [[-self.l1, 1.0], [-self.l2, 0.0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub d_ff: f64,
    pub d_fb: f64,
    pub d_applied: f64,
    pub saturated: bool,
    /// `ln(y / y_ref)`
    pub log_error: f64,
}

pub fn control(
    y: f64,
    traj: &Trajectory,
    gains: &ControllerGains,
    z: [f64; 2],
    t: f64,
    bounds: InputBounds,
) -> Result<ControlSample> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveOutput { t, y });
    }
    let log_error = (y / traj.eval(t)).ln();
    let d_ff = -traj.rate(t);
    let d_fb = z[1] + gains.gamma * log_error;
    let raw = d_ff + d_fb;
    let d_applied = saturate(raw, bounds.d_min, bounds.d_max);
    Ok(ControlSample {
        d_ff,
        d_fb,
        d_applied,
        saturated: d_applied != raw,
        log_error,
    })
}

/// Observer vector field for fixed log error, feedforward and applied input.
pub fn observer_rhs(
    z: [f64; 2],
    log_error: f64,
    d_ff: f64,
    d_applied: f64,
    gains: &ControllerGains,
) -> [f64; 2] {
    [
        -gains.l1 * z[0] + z[1] + gains.l1 * log_error + d_ff - d_applied,
        -gains.l2 * z[0] + gains.l2 * log_error,
    ]
}

/// One RK4 step of the observer with `y` and `d_applied` held over the step.
pub fn observer_step(
    z: [f64; 2],
    y: f64,
    traj: &Trajectory,
    d_applied: f64,
    gains: &ControllerGains,
    t: f64,
    dt: f64,
) -> [f64; 2] {
    let mut state = z;
    rk4_step(t, &mut state, dt, |tau, s, ds| {
        let e = (y / traj.eval(tau)).ln();
        let dz = observer_rhs([s[0], s[1]], e, -traj.rate(tau), d_applied, gains);
        ds.copy_from_slice(&dz);
    });
    state
}

/// Feedback controller, or a fixed input for open-loop runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputLaw {
    Feedback(ControllerGains),
    Constant(f64),
}

impl InputLaw {
    pub fn apply(
        &self,
        y: f64,
        traj: &Trajectory,
        z: [f64; 2],
        t: f64,
        bounds: InputBounds,
    ) -> Result<ControlSample> {
        match self {
            InputLaw::Feedback(gains) => control(y, traj, gains, z, t, bounds),
            InputLaw::Constant(d) => {
                if !(y > 0.0) {
                    return Err(Error::NonPositiveOutput { t, y });
                }
                let d_ff = -traj.rate(t);
                Ok(ControlSample {
                    d_ff,
                    d_fb: d - d_ff,
                    d_applied: *d,
                    saturated: false,
                    log_error: (y / traj.eval(t)).ln(),
                })
            }
        }
    }

    /// Observer vector field; frozen for open-loop runs.
    pub fn observer_rate(&self, z: [f64; 2], sample: &ControlSample) -> [f64; 2] {
        match self {
            InputLaw::Feedback(gains) => {
                observer_rhs(z, sample.log_error, sample.d_ff, sample.d_applied, gains)
            }
            InputLaw::Constant(_) => [0.0, 0.0],
        }
    }

    pub fn initial_observer(&self) -> [f64; 2] {
        match self {
            InputLaw::Feedback(gains) => gains.z0,
            InputLaw::Constant(_) => [0.0, 0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{make_constant, make_ramp};
    use nalgebra::Matrix2;

    fn bounds() -> InputBounds {
        InputBounds::new(0.5, 1.5).unwrap()
    }

    #[test]
    fn saturation_cases() {
        assert_eq!(saturate(1.0, 0.5, 1.5), 1.0);
        assert_eq!(saturate(2.3, 0.5, 1.5), 1.5);
        assert_eq!(saturate(-1.0, 0.5, 1.5), 0.5);
    }

    #[test]
    fn gains_validated() {
        assert!(ControllerGains::new(0.0, 4.0, 8.0, [0.0, 0.5]).is_err());
        assert!(ControllerGains::new(2.0, -4.0, 8.0, [0.0, 0.5]).is_err());
        assert!(ControllerGains::new(2.0, 4.0, 8.0, [f64::NAN, 0.5]).is_err());
    }

    #[test]
    fn equilibrium_input() {
        let traj = make_constant(1.0).unwrap();
        let gains = ControllerGains::new(2.0, 4.0, 8.0, [0.0, 1.0]).unwrap();
        let s = control(1.0, &traj, &gains, [0.0, 1.0], 0.0, bounds()).unwrap();
        assert_eq!(s.d_applied, 1.0);
        assert!(!s.saturated);
        let dz = observer_rhs([0.0, 1.0], s.log_error, s.d_ff, s.d_applied, &gains);
        assert_eq!(dz, [0.0, 0.0]);
    }

    #[test]
    fn rejects_nonpositive_output() {
        let traj = make_constant(1.0).unwrap();
        let gains = ControllerGains::new(2.0, 4.0, 8.0, [0.0, 0.5]).unwrap();
        assert!(matches!(
            control(0.0, &traj, &gains, [0.0, 0.5], 1.0, bounds()),
            Err(Error::NonPositiveOutput { .. })
        ));
    }

    #[test]
    fn ramp_start_is_pinned_low() {
        let traj = make_ramp(0.3, 0.75).unwrap();
        let gains = ControllerGains::new(2.0, 4.0, 8.0, [0.0, 0.5]).unwrap();
        let s = control(0.3, &traj, &gains, gains.z0, 0.0, bounds()).unwrap();
        assert_eq!(s.d_applied, 0.5);
        assert!(s.saturated);
    }

    #[test]
    fn observer_eigenvalues() {
        let gains = ControllerGains::new(2.0, 4.0, 8.0, [0.0, 0.5]).unwrap();
        let l = gains.observer_matrix();
        let m = Matrix2::new(l[0][0], l[0][1], l[1][0], l[1][1]);
        // s² + l1 s + l2 = 0 gives −2 ± 2j for l = (4, 8)
        let eig = m.complex_eigenvalues();
        for e in eig.iter() {
            assert!(
                (e.re + 2.0).abs() < 1e-12 && (e.im.abs() - 2.0).abs() < 1e-12,
                "{e}"
            );
        }
    }

    #[test]
    fn observer_step_is_affine() {
        let traj = make_constant(1.3).unwrap();
        let gains = ControllerGains::new(2.0, 4.0, 8.0, [0.0, 0.5]).unwrap();
        let step = |z: [f64; 2]| observer_step(z, 1.1, &traj, 0.9, &gains, 0.0, 0.01);
        let base = step([0.0, 0.0]);
        let a = step([0.3, -0.2]);
        let b = step([-1.0, 0.7]);
        let ab = step([-0.7, 0.5]);
        for i in 0..2 {
            assert!(((ab[i] - base[i]) - (a[i] - base[i]) - (b[i] - base[i])).abs() < 1e-14);
        }
    }
}
