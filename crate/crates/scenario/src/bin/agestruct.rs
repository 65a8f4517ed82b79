use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agestruct::certificate::saturation_fact_check;
use agestruct::galerkin::{characteristic_residual, characteristic_roots};
use agestruct::trajectory::validate;
use agestruct_scenario::run::{certificate_for, Scenario};
use agestruct_scenario::{load_config, render_report, run, write_outputs, Routes, ScenarioError};

const EXIT_ACCEPTANCE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const SATURATION_SAMPLES: usize = 1_000_000;
const SATURATION_SEED: u64 = 20_240_501;

#[derive(Parser)]
#[command(
    name = "agestruct",
    version,
    about = "Output tracking for age-structured chemostat populations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the report and CSV traces.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        routes: Option<Routes>,
        /// Output directory; defaults to `outputs.dir`, then `./out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the certificate and run the property checks without simulating.
    Verify { config: PathBuf },
    /// Print the characteristic roots used by the modal basis.
    Roots { config: PathBuf },
}

fn fail(err: ScenarioError) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_input_error() {
        ExitCode::from(EXIT_INPUT)
    } else {
        ExitCode::from(EXIT_ACCEPTANCE)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            routes,
            out,
        } => {
            let loaded = match load_config(&config) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            let report = match run(&loaded, routes) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let dir = out
                .or_else(|| loaded.config.outputs.dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            match write_outputs(&report, &dir) {
                Ok(paths) => {
                    print!("{}", render_report(&report));
                    for p in paths {
                        log::info!("wrote {}", p.display());
                    }
                }
                Err(e) => return fail(e),
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            }
        }
        Command::Verify { config } => {
            let loaded = match load_config(&config) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            let scenario = match Scenario::build(&loaded.config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            println!("config_hash = {}", loaded.hash);
            let validity = validate(
                &scenario.traj,
                &scenario.eq,
                scenario.params.bounds,
                loaded.config.numerics.horizon,
            );
            println!("d_star = {:.12e}", scenario.eq.d_star);
            println!("valid = {}", validity.valid);
            let mut ok = true;
            match certificate_for(&scenario, &loaded.config, &validity) {
                Ok(cert) => {
                    print!("{}", cert.dump());
                    for v in cert.violations() {
                        println!("violated: {v}");
                        ok = false;
                    }
                }
                Err(why) => {
                    println!("certificate: {why}");
                    ok = false;
                }
            }
            let sat = saturation_fact_check(SATURATION_SAMPLES, SATURATION_SEED);
            println!(
                "saturation_fact = {} violations in {} samples",
                sat.violations, sat.checked
            );
            ok &= sat.violations == 0;
            println!("overall = {}", if ok { "PASS" } else { "FAIL" });
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            }
        }
        Command::Roots { config } => {
            let loaded = match load_config(&config) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            let scenario = match Scenario::build(&loaded.config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match characteristic_roots(&scenario.eq, loaded.config.numerics.basis_size) {
                Ok(roots) => {
                    println!("re,im,residual");
                    for r in roots {
                        let res = characteristic_residual(&scenario.eq.k_tilde, r).norm();
                        println!("{:.12e},{:.12e},{:.3e}", r.re, r.im, res);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ACCEPTANCE)
                }
            }
        }
    }
}
