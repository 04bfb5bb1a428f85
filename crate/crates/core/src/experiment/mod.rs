//! Configuration, figure-reproducing scenarios and result serialization.

mod config;
mod runners;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

pub use config::{ExperimentConfig, FilterConfig, KernelConfig, Scenario, SweepConfig, PAPER2021_TOML};
pub use runners::{
    calibrate_gain, enhancement, hom_predictions, linear_fit, loglog_interpolate, point_bins, point_setup, ratio,
    run_car_vs_rate, run_g2_vs_rate, run_hom_scan, run_jsi_map, run_loss_budget, run_rate_vs_power,
    slope_through_origin, PointResult, Series, CHANNEL_OFFSETS, PURITY_FIT_MIN_SURVIVAL,
};

use crate::detection::json_f64;
use crate::error::Result;

/// Wall-clock and throughput of a run. Kept out of metrics.json so that
/// file stays byte-identical for a fixed seed.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub wall_clock_s: f64,
    /// Bins simulated (grid cells or fit samples for analytic scenarios).
    pub work_units: u64,
    pub units_per_s: f64,
}

impl Timing {
    pub fn new(start: Instant, work_units: u64) -> Self {
        let wall = start.elapsed().as_secs_f64();
        Self {
            wall_clock_s: wall,
            work_units,
            units_per_s: if wall > 0.0 { work_units as f64 / wall } else { 0.0 },
        }
    }
}

/// Everything a scenario produces.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run_id: String,
    pub scenario: Scenario,
    pub config_echo: String,
    /// Main table, written as `<scenario>.csv`.
    pub csv: String,
    pub points: Vec<Value>,
    pub summary: Value,
    /// Additional files by name.
    pub files: BTreeMap<String, String>,
    pub timing: Timing,
}

impl RunResult {
    pub(crate) fn new(
        config: &ExperimentConfig,
        scenario: Scenario,
        csv: String,
        points: Vec<Value>,
        summary: Value,
        files: BTreeMap<String, String>,
        timing: Timing,
    ) -> Self {
        let mut echo = config.clone();
        echo.scenario = scenario;
        Self {
            run_id: config.run_id.clone(),
            scenario,
            config_echo: echo.to_toml().unwrap_or_default(),
            csv,
            points,
            summary,
            files,
            timing,
        }
    }

    /// Points and summary, every float rounded to six significant digits.
    pub fn metrics_json(&self) -> Value {
        round_floats(json!({
            "run_id": self.run_id,
            "scenario": self.scenario.name(),
            "points": self.points,
            "summary": self.summary,
        }))
    }

    /// Writes `<out>/<run_id>/{<scenario>.csv, metrics.json, config.echo,
    /// timing.json}` plus any extra files, and returns the run directory.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let dir = out.join(&self.run_id);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.scenario.name())), &self.csv)?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&self.metrics_json())? + "\n",
        )?;
        std::fs::write(dir.join("config.echo"), &self.config_echo)?;
        std::fs::write(
            dir.join("timing.json"),
            serde_json::to_string_pretty(&self.timing)? + "\n",
        )?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(dir)
    }
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n.as_f64().map(json_f64).unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Runs the scenario selected in `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    match config.scenario {
        Scenario::RateVsPower => run_rate_vs_power(config),
        Scenario::CarVsRate => run_car_vs_rate(config),
        Scenario::G2VsRate => run_g2_vs_rate(config),
        Scenario::JsiMap => run_jsi_map(config),
        Scenario::HomScan => run_hom_scan(config),
        Scenario::LossBudget => run_loss_budget(config),
    }
}
