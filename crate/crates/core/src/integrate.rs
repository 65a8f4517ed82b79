//! Fixed-step classical Runge-Kutta used by every simulation route.

/// Advances `state` from `t` to `t + dt`.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`. Stage buffers are
/// allocated per call; state vectors here are a handful of entries.
pub fn rk4_step<F>(t: f64, state: &mut [f64], dt: f64, mut rhs: F)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    rhs(t, state, &mut k1);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    rhs(t + 0.5 * dt, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    rhs(t + dt, &tmp, &mut k4);
    for i in 0..n {
        state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Number of whole steps of size `dt` in `[0, horizon]`, rejecting grids
/// that do not land on the horizon.
pub fn step_count(horizon: f64, dt: f64) -> Option<usize> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return None;
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return None;
    }
    Some(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_exponential() {
        let solve = |dt: f64| {
            let mut y = [1.0];
            let steps = step_count(1.0, dt).unwrap();
            for i in 0..steps {
                rk4_step(i as f64 * dt, &mut y, dt, |_, y, dy| dy[0] = -2.0 * y[0]);
            }
            (y[0] - (-2.0f64).exp()).abs()
        };
        let ratio = solve(0.1) / solve(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn step_count_requires_alignment() {
        assert_eq!(step_count(10.0, 0.005), Some(2000));
        assert_eq!(step_count(1.0, 0.3), None);
        assert_eq!(step_count(1.0, 0.0), None);
    }
}
