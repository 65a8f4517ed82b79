//! Cross-route agreement and decay-rate fits.

use agestruct::delay::Snapshot;

use crate::error::{Result, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteMetrics {
    /// `max_t |y_g − y_o| / |y_o|`
    pub linf: f64,
    /// `‖y_g − y_o‖₂ / ‖y_o‖₂` over the samples.
    pub l2: f64,
}

fn same_times(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(ScenarioError::GridMismatch(format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, y)) = a
        .iter()
        .zip(b)
        .find(|(x, y)| (*x - *y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(ScenarioError::GridMismatch(format!(
            "sample times {x} and {y} differ"
        )));
    }
    Ok(())
}

/// Gaps of the second series relative to the first (the reference).
pub fn compare_series(
    ref_times: &[f64],
    reference: &[f64],
    times: &[f64],
    values: &[f64],
) -> Result<RouteMetrics> {
    same_times(ref_times, times)?;
    if reference.len() != ref_times.len() || values.len() != times.len() {
        return Err(ScenarioError::GridMismatch(
            "series and time axis lengths differ".into(),
        ));
    }
    let mut linf: f64 = 0.0;
    let (mut num, mut den) = (0.0, 0.0);
    for (r, v) in reference.iter().zip(values) {
        linf = linf.max((v - r).abs() / r.abs());
        num += (v - r) * (v - r);
        den += r * r;
    }
    Ok(RouteMetrics {
        linf,
        l2: (num / den).sqrt(),
    })
}

/// Output gap of the Galerkin trace against the delay oracle.
pub fn compare_routes(
    galerkin: &agestruct::galerkin::GalerkinTrace,
    oracle: &agestruct::delay::OracleTrace,
) -> Result<RouteMetrics> {
    compare_series(
        &oracle.times(),
        &oracle.outputs(),
        &galerkin.times(),
        &galerkin.outputs(),
    )
}

/// `max|x_g − x_o| / max|x_o|` at every snapshot time present in both.
pub fn compare_snapshots(galerkin: &[Snapshot], oracle: &[Snapshot]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for o in oracle {
        if let Some(g) = galerkin.iter().find(|g| (g.t - o.t).abs() < 1e-9) {
            if g.profile.grid() != o.profile.grid() {
                return Err(ScenarioError::GridMismatch(format!(
                    "snapshot grids differ at t = {}",
                    o.t
                )));
            }
            let gap = g
                .profile
                .values()
                .iter()
                .zip(o.profile.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push((o.t, gap / o.profile.max_abs()));
        }
    }
    Ok(out)
}

/// Least-squares rate `r` of `|e(t)| ≈ c e^{−r t}` over samples in
/// `[t0, t1]` with `|e| > floor`. `None` with fewer than two usable samples.
pub fn fit_decay_rate(times: &[f64], errors: &[f64], t0: f64, t1: f64, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(t, e)| **t >= t0 && **t <= t1 && e.abs() > floor)
        .map(|(t, e)| (*t, e.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_have_zero_gap() {
        let t = [0.0, 0.1, 0.2];
        let y = [1.0, 2.0, 3.0];
        let m = compare_series(&t, &y, &t, &y).unwrap();
        assert_eq!(m, RouteMetrics { linf: 0.0, l2: 0.0 });
    }

    #[test]
    fn mismatched_grids_rejected() {
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            compare_series(&[0.0, 0.1, 0.2], &y, &[0.0, 0.1, 0.3], &y),
            Err(ScenarioError::GridMismatch(_))
        ));
        assert!(matches!(
            compare_series(&[0.0, 0.1], &y[..2], &[0.0], &y[..1]),
            Err(ScenarioError::GridMismatch(_))
        ));
    }

    #[test]
    fn relative_gap() {
        let t = [0.0, 1.0];
        let m = compare_series(&t, &[2.0, 4.0], &t, &[2.2, 4.0]).unwrap();
        assert!((m.linf - 0.1).abs() < 1e-12);
        assert!((m.l2 - (0.04f64 / 20.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_exponential_rate_recovered() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| -3.0 * (-0.7 * t).exp()).collect();
        let r = fit_decay_rate(&t, &e, 0.0, 10.0, 0.0).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
        assert!(fit_decay_rate(&t, &e, 0.0, 10.0, 10.0).is_none());
    }
}
