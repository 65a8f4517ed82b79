//! Text report and CSV traces. Every float is written as `{:.12e}` so
//! identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use agestruct::delay::Snapshot;

use crate::error::{Result, ScenarioError};
use crate::run::{fmt, RunReport, Status};

pub fn render_report(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash = {}", report.config_hash);
    if !report.name.is_empty() {
        let _ = writeln!(s, "name = {}", report.name);
    }
    let _ = writeln!(s, "routes = {:?}", report.routes);
    let _ = writeln!(s, "birth_scale = {}", fmt(report.birth_scale));
    let _ = writeln!(s, "d_star = {}", fmt(report.d_star));

    s.push_str("\n[roots]\n");
    for (i, r) in report.roots.iter().enumerate() {
        let _ = writeln!(s, "root_{i} = {} {}", fmt(r.re), fmt(r.im));
    }

    let v = &report.validity;
    s.push_str("\n[validity]\n");
    let _ = writeln!(s, "valid = {}", v.valid);
    let _ = writeln!(s, "inf_rate = {}", fmt(v.inf_rate));
    let _ = writeln!(s, "sup_rate = {}", fmt(v.sup_rate));
    let _ = writeln!(
        s,
        "t_crit = {}",
        v.t_crit.map(fmt).unwrap_or_else(|| "none".into())
    );
    let _ = writeln!(s, "may_reexit = {}", v.may_reexit);
    let _ = writeln!(
        s,
        "history_sigma = {}",
        report.sigma.map(fmt).unwrap_or_else(|| "none".into())
    );

    s.push_str("\n[certificate]\n");
    match &report.certificate {
        Some(c) => s.push_str(&c.dump()),
        None => s.push_str("unavailable\n"),
    }

    s.push_str("\n[metrics]\n");
    if let Some(m) = &report.agreement {
        let _ = writeln!(s, "route_gap_linf = {}", fmt(m.linf));
        let _ = writeln!(s, "route_gap_l2 = {}", fmt(m.l2));
    }
    for (t, gap) in &report.snapshot_gaps {
        let _ = writeln!(s, "snapshot_gap t={} = {}", fmt(*t), fmt(*gap));
    }
    if let Some(g) = &report.galerkin {
        let _ = writeln!(
            s,
            "mean_relative_residual = {}",
            fmt(g.mean_relative_residual())
        );
    }
    if let Some(o) = &report.oracle {
        let _ = writeln!(
            s,
            "max_integral_identity_residual = {}",
            fmt(o.max_ide_residual)
        );
        if let Some(last) = o.trace.samples.last() {
            let _ = writeln!(s, "final_log_error = {}", fmt(last.log_error));
            let _ = writeln!(s, "final_z2 = {}", fmt(last.z[1]));
        }
        if let Some(clf) = &o.clf {
            let _ = writeln!(s, "clf_initial = {}", fmt(clf.v[0]));
            let _ = writeln!(s, "clf_final = {}", fmt(*clf.v.last().unwrap_or(&f64::NAN)));
        }
    }
    if let Some(r) = report.tracking_rate {
        let _ = writeln!(s, "tracking_decay_rate = {}", fmt(r));
    }
    let saturated = report
        .galerkin
        .as_ref()
        .map(|g| g.samples.iter().filter(|x| x.control.saturated).count())
        .or_else(|| {
            report.oracle.as_ref().map(|o| {
                o.trace
                    .samples
                    .iter()
                    .filter(|x| x.control.saturated)
                    .count()
            })
        });
    if let Some(n) = saturated {
        let _ = writeln!(s, "saturated_samples = {n}");
    }

    s.push_str("\n[warnings]\n");
    for w in &report.warnings {
        let _ = writeln!(s, "- {w}");
    }

    s.push_str("\n[acceptance]\n");
    for c in &report.checks {
        let (tag, note) = match &c.status {
            Status::Pass => ("PASS", c.detail.clone()),
            Status::Fail => ("FAIL", c.detail.clone()),
            Status::Skipped(why) => ("SKIP", why.clone()),
        };
        let _ = writeln!(s, "{tag} {:<18} {note}", c.name);
    }
    let _ = writeln!(
        s,
        "overall = {}",
        if report.passed() { "PASS" } else { "FAIL" }
    );
    s
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|source| ScenarioError::Write {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn snapshot_csv(snapshots: &[Snapshot]) -> String {
    let mut s = String::from("a");
    for snap in snapshots {
        let _ = write!(s, ",x(t={})", fmt(snap.t));
    }
    s.push('\n');
    if let Some(first) = snapshots.first() {
        let grid = first.profile.grid();
        for i in 0..grid.len() {
            s.push_str(&fmt(grid.node(i)));
            for snap in snapshots {
                let _ = write!(s, ",{}", fmt(snap.profile.at_node(i)));
            }
            s.push('\n');
        }
    }
    s
}

/// Writes `report.txt` and the CSV traces into `dir`; returns the paths.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Write {
        path: dir.into(),
        source,
    })?;
    let mut written = Vec::new();

    if let Some(g) = &report.galerkin {
        let mut s = String::from("t,y_sim,y_ref,D,z1,z2,r,min_profile\n");
        for x in &g.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt(x.t),
                fmt(x.y),
                fmt(x.y_ref),
                fmt(x.control.d_applied),
                fmt(x.z[0]),
                fmt(x.z[1]),
                fmt(x.residual),
                fmt(x.min_profile)
            );
        }
        write(dir.join("galerkin.csv"), &s, &mut written)?;
        if !g.snapshots.is_empty() {
            write(
                dir.join("galerkin_snapshots.csv"),
                &snapshot_csv(&g.snapshots),
                &mut written,
            )?;
        }
    }

    if let Some(o) = &report.oracle {
        let clf = o.clf.as_ref();
        let mut s = String::from("t,eta,delta,z1,z2,D,y,log_error,W,C");
        if clf.is_some() {
            s.push_str(",V");
        }
        s.push('\n');
        for (i, x) in o.trace.samples.iter().enumerate() {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt(x.t),
                fmt(x.eta),
                fmt(x.delta),
                fmt(x.z[0]),
                fmt(x.z[1]),
                fmt(x.control.d_applied),
                fmt(x.y),
                fmt(x.log_error),
                fmt(o.w[i]),
                fmt(o.c[i])
            );
            if let Some(c) = clf {
                let _ = write!(s, ",{}", fmt(c.v[i]));
            }
            s.push('\n');
        }
        write(dir.join("oracle.csv"), &s, &mut written)?;
        if !o.trace.snapshots.is_empty() {
            write(
                dir.join("oracle_snapshots.csv"),
                &snapshot_csv(&o.trace.snapshots),
                &mut written,
            )?;
        }
        if let Some(c) = clf {
            let mut s = String::from("t,excess\n");
            for (t, e) in &c.decay.differential.violations {
                let _ = writeln!(s, "{},{}", fmt(*t), fmt(*e));
            }
            write(dir.join("decay_violations.csv"), &s, &mut written)?;
        }
    }

    write(dir.join("report.txt"), &render_report(report), &mut written)?;
    Ok(written)
}
