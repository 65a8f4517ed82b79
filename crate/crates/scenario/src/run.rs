//! Equilibrium, certificate and both simulation routes for one scenario.

use num_complex::Complex64;

use agestruct::certificate::{
    b3_search, check_floor_monotone, check_history_decay, clf_from_delay, error_envelope,
    overshoot_bound, refinement_error, sigma_search, verify_decay, Certificate, DecayReport,
};
use agestruct::controller::InputLaw;
use agestruct::delay::{simulate_with, DelayModel, OracleTrace};
use agestruct::galerkin::{self, assemble, build_basis, characteristic_roots, GalerkinTrace};
use agestruct::trajectory::{
    reference_profile, validate, Trajectory, TrajectoryKind, ValidityReport,
};
use agestruct::{Equilibrium, GridFunction, ModelParams};

use crate::config::{LoadedConfig, Routes, ScenarioConfig};
use crate::error::{Context, Result};
use crate::metrics::{compare_routes, compare_snapshots, fit_decay_rate, RouteMetrics};

/// Tolerances of the per-run checks.
pub const IDE_TOLERANCE: f64 = 1e-6;
pub const HISTORY_DECAY_TOLERANCE: f64 = 1e-6;
pub const FLOOR_TOLERANCE: f64 = 1e-12;
pub const STEADY_RESIDUAL_MAX: f64 = 1e-6;
pub const MEAN_RESIDUAL_MAX: f64 = 0.06;
pub const ROUTE_GAP_MAX: f64 = 0.05;
pub const OBSERVER_TOLERANCE: f64 = 1e-3;
pub const TRACKING_TOLERANCE: f64 = 1e-3;
pub const TRACKING_TIME: f64 = 10.0;
/// Samples between envelope evaluations on the delay route.
pub const ENVELOPE_STRIDE: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            status: if passed { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(name: &'static str, reason: &str) -> Self {
        Self {
            name,
            status: Status::Skipped(reason.to_string()),
            detail: String::new(),
        }
    }
}

/// Lyapunov functional along the delay route.
#[derive(Debug, Clone)]
pub struct ClfSeries {
    pub v: Vec<f64>,
    /// Pointwise `|V_h − V_{h/2}|` from the refined run, if requested.
    pub error: Option<Vec<f64>>,
    pub decay: DecayReport,
}

/// Measured deviation against the overshoot envelope.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub bound: f64,
    /// `(t, ‖ln(x/x_ref)‖_∞ + |e|)`
    pub samples: Vec<(f64, f64)>,
    pub crossings: usize,
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub trace: OracleTrace,
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    pub max_ide_residual: f64,
    pub clf: Option<ClfSeries>,
    pub envelope: Option<Envelope>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_hash: String,
    pub name: String,
    pub routes: Routes,
    pub birth_scale: f64,
    pub d_star: f64,
    pub roots: Vec<Complex64>,
    pub validity: ValidityReport,
    /// History decay rate from the kernel alone, if the kernel condition
    /// holds.
    pub sigma: Option<f64>,
    pub certificate: Option<Certificate>,
    pub warnings: Vec<String>,
    pub galerkin: Option<GalerkinTrace>,
    pub oracle: Option<OracleRun>,
    pub agreement: Option<RouteMetrics>,
    pub snapshot_gaps: Vec<(f64, f64)>,
    pub tracking_rate: Option<f64>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Assembled model of a scenario at the configured resolution.
pub struct Scenario {
    pub params: ModelParams,
    pub eq: Equilibrium,
    pub birth_scale: f64,
    pub traj: Trajectory,
    pub law: InputLaw,
    pub x0: GridFunction,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        Self::on_grid(config, config.grid()?, None)
    }

    fn on_grid(
        config: &ScenarioConfig,
        grid: agestruct::AgeGrid,
        scale: Option<f64>,
    ) -> Result<Self> {
        let (params, birth_scale) = config.model_on(grid, scale)?;
        let eq = config.equilibrium(&params)?;
        let x0 = config.initial_profile(&params, &eq)?;
        Ok(Self {
            params,
            eq,
            birth_scale,
            traj: config.trajectory()?,
            law: config.law()?,
            x0,
        })
    }

    /// Same scenario with twice the age resolution and the same birth scale.
    pub fn refined(&self, config: &ScenarioConfig) -> Result<Self> {
        Self::on_grid(config, self.params.grid().refined(), Some(self.birth_scale))
    }
}

/// Certificate for a scenario, or the reason it cannot be built.
pub fn certificate_for(
    scenario: &Scenario,
    config: &ScenarioConfig,
    validity: &ValidityReport,
) -> std::result::Result<Certificate, String> {
    if !validity.valid {
        return Err("reference trajectory leaves the valid rate band; no certificate".into());
    }
    let gains = config.gains().map_err(|e| e.to_string())?;
    Certificate::build(
        &scenario.eq,
        scenario.params.bounds,
        &gains,
        validity.inf_rate,
        validity.sup_rate,
    )
    .map_err(|e| format!("certificate construction failed: {e}"))
}

/// Runs one scenario. `routes` overrides the configured route selection.
pub fn run(loaded: &LoadedConfig, routes: Option<Routes>) -> Result<RunReport> {
    let config = &loaded.config;
    let routes = routes.unwrap_or(config.routes);
    let scenario = Scenario::build(config)?;
    let (params, eq, traj, law) = (
        &scenario.params,
        &scenario.eq,
        &scenario.traj,
        &scenario.law,
    );
    let horizon = config.numerics.horizon;
    let dt = config.time_step();
    let mut warnings = Vec::new();

    let validity = validate(traj, eq, params.bounds, horizon);
    if !validity.valid {
        let mut w = format!(
            "rate bound violated: ẏ_ref/y_ref spans [{:.6}, {:.6}], allowed ({:.6}, {:.6})",
            validity.inf_rate,
            validity.sup_rate,
            eq.d_star - params.bounds.d_max,
            eq.d_star - params.bounds.d_min
        );
        if let Some(t) = validity.t_crit {
            w.push_str(&format!("; valid from t_crit = {t:.6}"));
        }
        if validity.may_reexit {
            w.push_str("; may leave the band again");
        }
        warnings.push(w);
    }
    let sigma = match b3_search(&eq.k_tilde) {
        Ok((lambda, _)) => sigma_search(&eq.k_tilde, lambda).ok(),
        Err(e) => {
            warnings.push(format!("kernel condition fails: {e}"));
            None
        }
    };
    let certificate = match certificate_for(&scenario, config, &validity) {
        Ok(c) => {
            for v in c.violations() {
                warnings.push(format!("certificate condition violated: {v}"));
            }
            Some(c)
        }
        Err(w) => {
            warnings.push(w);
            None
        }
    };
    let pairs = config.numerics.basis_size / 2 - 1;
    let roots = characteristic_roots(eq, 2 * pairs + 2).context("characteristic roots")?;

    let galerkin = if routes.galerkin() {
        let basis = build_basis(&scenario.x0, params, eq, &roots, config.numerics.basis_size)
            .context("Galerkin basis")?;
        let mut system = assemble(&basis, params).context("Galerkin assembly")?;
        Some(
            galerkin::simulate(
                &mut system,
                &basis,
                params,
                traj,
                law,
                horizon,
                dt,
                &config.outputs.snapshots,
            )
            .context("Galerkin route")?,
        )
    } else {
        None
    };

    let oracle = if routes.oracle() {
        Some(run_oracle(
            config,
            &scenario,
            certificate.as_ref(),
            sigma,
            dt,
            &mut warnings,
        )?)
    } else {
        None
    };

    let (agreement, snapshot_gaps) = match (&galerkin, &oracle) {
        (Some(g), Some(o)) => (
            Some(compare_routes(g, &o.trace)?),
            compare_snapshots(&g.snapshots, &o.trace.snapshots)?,
        ),
        _ => (None, Vec::new()),
    };
    let tracking_rate = oracle.as_ref().and_then(|o| {
        let errs: Vec<f64> = o.trace.samples.iter().map(|s| s.log_error).collect();
        fit_decay_rate(
            &o.trace.times(),
            &errs,
            0.0,
            TRACKING_TIME.min(horizon),
            1e-9,
        )
    });

    let mut report = RunReport {
        config_hash: loaded.hash.clone(),
        name: config.name.clone().unwrap_or_default(),
        routes,
        birth_scale: scenario.birth_scale,
        d_star: eq.d_star,
        roots,
        validity,
        sigma,
        certificate,
        warnings,
        galerkin,
        oracle,
        agreement,
        snapshot_gaps,
        tracking_rate,
        checks: Vec::new(),
    };
    report.checks = run_checks(&report, config, &scenario);
    Ok(report)
}

fn run_oracle(
    config: &ScenarioConfig,
    scenario: &Scenario,
    cert: Option<&Certificate>,
    sigma: Option<f64>,
    dt: f64,
    warnings: &mut Vec<String>,
) -> Result<OracleRun> {
    let (params, eq, traj, law) = (
        &scenario.params,
        &scenario.eq,
        &scenario.traj,
        &scenario.law,
    );
    let horizon = config.numerics.horizon;
    let model = DelayModel::new(params, eq);
    let state = model
        .init_state(&scenario.x0, traj, law.initial_observer(), params)
        .context("delay coordinates")?;
    let w_sigma = cert.map(|c| c.sigma).or(sigma).unwrap_or(0.0);

    let mut w = Vec::new();
    let mut c = Vec::new();
    let mut v = Vec::new();
    let mut max_ide: f64 = 0.0;
    let mut failure = None;
    let mut envelope_samples = Vec::new();
    let mut step = 0usize;
    let trace = simulate_with(
        &model,
        state,
        traj,
        law,
        horizon,
        dt,
        &config.outputs.snapshots,
        |s, sample| {
            let res = (|| -> agestruct::Result<()> {
                w.push(model.weighted_sup(&s.history, w_sigma)?);
                c.push(model.floor(&s.history)?);
                max_ide = max_ide.max(model.ide_residual(&s.history)?.abs());
                if let Some(cert) = cert {
                    v.push(clf_from_delay(s, &model, cert)?.v);
                    if step % ENVELOPE_STRIDE == 0 {
                        let (x, _) = model.reconstruct(s, traj)?;
                        let x_ref = reference_profile(traj, eq, s.t);
                        let log_gap = x
                            .values()
                            .iter()
                            .zip(x_ref.values())
                            .map(|(a, b)| (a / b).ln().abs())
                            .fold(0.0, f64::max);
                        let e = [s.z[0] - s.eta, s.z[1] - eq.d_star];
                        envelope_samples.push((s.t, log_gap, e[0].hypot(e[1]), sample.t));
                    }
                }
                Ok(())
            })();
            if let Err(e) = res {
                failure.get_or_insert(e);
            }
            step += 1;
        },
    )
    .context("delay route")?;
    if let Some(e) = failure {
        return Err(e).context("delay route diagnostics");
    }

    let (clf, envelope) = match cert {
        Some(cert) => {
            let times = trace.times();
            let error = if config.numerics.refinement_check {
                let fine = scenario.refined(config)?;
                let fine_v = refined_clf(&fine, cert, horizon, dt / 2.0)?;
                let gap = refinement_error(&times, &v, &fine_v.0, &fine_v.1)
                    .context("refinement error")?;
                Some(error_envelope(
                    &times,
                    &gap,
                    scenario.params.grid().max_age(),
                ))
            } else {
                None
            };
            let decay = verify_decay(&times, &v, cert.l_rate, error.as_deref());
            if !decay.passed() {
                warnings.push(format!(
                    "Lyapunov decay violated at {} samples ({} on the integrated bound)",
                    decay.differential.violations.len(),
                    decay.integrated_violations.len()
                ));
            }
            let (t0_log, e0) = envelope_samples
                .first()
                .map(|s| (s.1, s.2))
                .unwrap_or((0.0, 0.0));
            let bound = overshoot_bound(t0_log, e0, cert);
            let samples: Vec<(f64, f64)> =
                envelope_samples.iter().map(|s| (s.0, s.1 + s.2)).collect();
            let crossings = samples
                .iter()
                .filter(|(t, m)| *m > bound * (-0.25 * cert.l_rate * t).exp())
                .count();
            if !bound.is_finite() {
                warnings
                    .push("overshoot envelope is infinite; the envelope check is vacuous".into());
            }
            (
                Some(ClfSeries { v, error, decay }),
                Some(Envelope {
                    bound,
                    samples,
                    crossings,
                }),
            )
        }
        None => (None, None),
    };
    Ok(OracleRun {
        trace,
        w,
        c,
        max_ide_residual: max_ide,
        clf,
        envelope,
    })
}

fn refined_clf(
    fine: &Scenario,
    cert: &Certificate,
    horizon: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = DelayModel::new(&fine.params, &fine.eq);
    let state = model
        .init_state(
            &fine.x0,
            &fine.traj,
            fine.law.initial_observer(),
            &fine.params,
        )
        .context("refined run")?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut failure = None;
    simulate_with(
        &model,
        state,
        &fine.traj,
        &fine.law,
        horizon,
        dt,
        &[],
        |s, _| match clf_from_delay(s, &model, cert) {
            Ok(c) => {
                times.push(s.t);
                values.push(c.v);
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        },
    )
    .context("refined run")?;
    if let Some(e) = failure {
        return Err(e).context("refined run");
    }
    Ok((times, values))
}

fn run_checks(report: &RunReport, config: &ScenarioConfig, scenario: &Scenario) -> Vec<Check> {
    let bounds = scenario.params.bounds;
    let feedback = matches!(scenario.law, InputLaw::Feedback(_));
    let eventually_valid =
        report.validity.valid || (report.validity.t_crit.is_some() && !report.validity.may_reexit);
    let horizon = config.numerics.horizon;
    let mut checks = Vec::new();

    let mut inputs: Vec<f64> = Vec::new();
    if let Some(g) = &report.galerkin {
        inputs.extend(g.samples.iter().map(|s| s.control.d_applied));
    }
    if let Some(o) = &report.oracle {
        inputs.extend(o.trace.samples.iter().map(|s| s.control.d_applied));
    }
    let outside = inputs.iter().filter(|d| !bounds.contains(**d)).count();
    checks.push(Check::new(
        "input_bounds",
        outside == 0,
        format!("{outside} of {} samples outside", inputs.len()),
    ));

    let mut min_profile = f64::INFINITY;
    if let Some(g) = &report.galerkin {
        min_profile = g
            .samples
            .iter()
            .map(|s| s.min_profile)
            .fold(min_profile, f64::min);
    }
    let min_floor = report
        .oracle
        .as_ref()
        .map(|o| o.c.iter().copied().fold(f64::INFINITY, f64::min));
    let positive = min_profile > 0.0 && min_floor.is_none_or(|c| c > 0.0);
    checks.push(Check::new(
        "positivity",
        positive,
        format!(
            "min Galerkin profile {}, min history floor {}",
            fmt(min_profile),
            fmt(min_floor.unwrap_or(f64::NAN))
        ),
    ));

    if let Some(g) = &report.galerkin {
        if let TrajectoryKind::Transition { t_delta, .. } = scenario.traj.kind() {
            let worst = g
                .samples
                .iter()
                .filter(|s| s.t >= t_delta - 1e-9)
                .map(|s| s.residual)
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "steady_residual",
                worst <= STEADY_RESIDUAL_MAX,
                format!("max r(t) for t >= {t_delta} is {}", fmt(worst)),
            ));
        }
        let mean = g.mean_relative_residual();
        checks.push(Check::new(
            "mean_residual",
            mean <= MEAN_RESIDUAL_MAX,
            format!("mean r/|x| = {}", fmt(mean)),
        ));
    }

    match &report.oracle {
        Some(o) => {
            checks.push(Check::new(
                "integral_identity",
                o.max_ide_residual < IDE_TOLERANCE,
                format!("max residual {}", fmt(o.max_ide_residual)),
            ));
            let times = o.trace.times();
            if report.sigma.is_some() || report.certificate.is_some() {
                let sigma = report
                    .certificate
                    .map(|c| c.sigma)
                    .or(report.sigma)
                    .unwrap_or(0.0);
                let bad = check_history_decay(&times, &o.w, sigma, HISTORY_DECAY_TOLERANCE);
                checks.push(Check::new(
                    "history_decay",
                    bad.is_empty(),
                    format!("{} samples above bound", bad.len()),
                ));
            } else {
                checks.push(Check::skipped("history_decay", "no history decay rate"));
            }
            let bad = check_floor_monotone(&times, &o.c, FLOOR_TOLERANCE);
            checks.push(Check::new(
                "floor_monotone",
                bad.is_empty(),
                format!("{} decreasing samples", bad.len()),
            ));
        }
        None => {
            for name in ["integral_identity", "history_decay", "floor_monotone"] {
                checks.push(Check::skipped(name, "delay route not run"));
            }
        }
    }

    if let Some(m) = &report.agreement {
        checks.push(Check::new(
            "route_gap",
            m.linf <= ROUTE_GAP_MAX,
            format!("relative L∞ {}, L2 {}", fmt(m.linf), fmt(m.l2)),
        ));
    }

    let final_z = report
        .oracle
        .as_ref()
        .and_then(|o| o.trace.samples.last().map(|s| s.z))
        .or_else(|| {
            report
                .galerkin
                .as_ref()
                .and_then(|g| g.samples.last().map(|s| s.z))
        });
    if !feedback {
        checks.push(Check::skipped("observer", "open loop"));
        checks.push(Check::skipped("tracking", "open loop"));
    } else if !eventually_valid {
        checks.push(Check::skipped(
            "observer",
            "trajectory outside the valid class",
        ));
        checks.push(Check::skipped(
            "tracking",
            "trajectory outside the valid class",
        ));
    } else {
        if let Some(z) = final_z {
            let gap = (z[1] - report.d_star).abs();
            checks.push(Check::new(
                "observer",
                gap <= OBSERVER_TOLERANCE,
                format!("|z2(T) - D*| = {}", fmt(gap)),
            ));
        }
        let err_at = report
            .oracle
            .as_ref()
            .and_then(|o| {
                o.trace
                    .samples
                    .iter()
                    .find(|s| (s.t - TRACKING_TIME).abs() < 1e-9)
                    .map(|s| s.log_error)
            })
            .or_else(|| {
                report.galerkin.as_ref().and_then(|g| {
                    g.samples
                        .iter()
                        .find(|s| (s.t - TRACKING_TIME).abs() < 1e-9)
                        .map(|s| s.control.log_error)
                })
            });
        match err_at {
            Some(e) => checks.push(Check::new(
                "tracking",
                e.abs() < TRACKING_TOLERANCE,
                format!("|ln(y/y_ref)| at t = {TRACKING_TIME} is {}", fmt(e.abs())),
            )),
            None => checks.push(Check::skipped(
                "tracking",
                &format!("horizon {horizon} ends before t = {TRACKING_TIME}"),
            )),
        }
    }

    match (
        &report.certificate,
        report
            .oracle
            .as_ref()
            .and_then(|o| o.clf.as_ref().zip(o.envelope.as_ref())),
    ) {
        (Some(cert), Some((clf, env))) => {
            let violations = cert.violations();
            checks.push(Check::new(
                "certificate",
                violations.is_empty(),
                violations.join("; "),
            ));
            let d = &clf.decay.differential;
            checks.push(Check::new(
                "lyapunov_decay",
                clf.decay.passed(),
                format!(
                    "{} checked, {} unresolved, {} violations, {} integrated violations",
                    d.checked,
                    d.unresolved,
                    d.violations.len(),
                    clf.decay.integrated_violations.len()
                ),
            ));
            let detail = if env.bound.is_finite() {
                format!("bound {}, {} crossings", fmt(env.bound), env.crossings)
            } else {
                "bound is infinite (vacuous)".to_string()
            };
            checks.push(Check::new("envelope", env.crossings == 0, detail));
        }
        (Some(cert), None) => {
            let violations = cert.violations();
            checks.push(Check::new(
                "certificate",
                violations.is_empty(),
                violations.join("; "),
            ));
            checks.push(Check::skipped("lyapunov_decay", "delay route not run"));
            checks.push(Check::skipped("envelope", "delay route not run"));
        }
        (None, _) => {
            for name in ["certificate", "lyapunov_decay", "envelope"] {
                checks.push(Check::skipped(name, "no certificate"));
            }
        }
    }
    checks
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}
