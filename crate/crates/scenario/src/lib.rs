//! Scenario files, dual-route runs and reports.

pub mod config;
pub mod error;
pub mod metrics;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, LoadedConfig, Routes, ScenarioConfig};
pub use error::{Result, ScenarioError};
pub use metrics::{compare_routes, RouteMetrics};
pub use report::{render_report, write_outputs};
pub use run::{run, Check, RunReport, Status};
