use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::feedforward::FeedForwardConfig;
use crate::hom::HomConfig;
use crate::loss::{db_to_transmission, transmission_to_db, ComponentLosses, LossBudget};
use crate::source::SourceConfig;
use crate::spectral::{FilterBank, JsiSweepConfig, SpectralMode, F_I1_THZ, F_I2_THZ, F_I3_THZ};

/// The checked-in `paper2021` preset.
pub const PAPER2021_TOML: &str = include_str!("../../presets/paper2021.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RateVsPower,
    CarVsRate,
    G2VsRate,
    JsiMap,
    HomScan,
    LossBudget,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::RateVsPower,
        Scenario::CarVsRate,
        Scenario::G2VsRate,
        Scenario::JsiMap,
        Scenario::HomScan,
        Scenario::LossBudget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::RateVsPower => "rate_vs_power",
            Scenario::CarVsRate => "car_vs_rate",
            Scenario::G2VsRate => "g2_vs_rate",
            Scenario::JsiMap => "jsi_map",
            Scenario::HomScan => "hom_scan",
            Scenario::LossBudget => "loss_budget",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Spectral filters of the setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub herald_channel_fwhm_ghz: f64,
    pub output_filter_fwhm_ghz: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            herald_channel_fwhm_ghz: 6.5,
            output_filter_fwhm_ghz: 12.5,
        }
    }
}

/// Sweep points of the Monte-Carlo scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub rate_powers_mw: Vec<f64>,
    pub car_powers_mw: Vec<f64>,
    pub g2_powers_mw: Vec<f64>,
    /// Power at which the full g2(tau) histogram is written.
    pub g2_curve_power_mw: f64,
    /// Signal-arm detection efficiency used for the HBT runs. Heralded g2
    /// does not depend on it, so a lossless arm buys statistics. `None`
    /// keeps the loss budget.
    pub hbt_signal_efficiency: Option<f64>,
    /// Scale the bins of each point as (P_min / P)^exponent so every point
    /// collects about the same number of heralds.
    pub constant_counts: bool,
    /// Pump power of the Klyshko runs in the loss-budget scenario.
    pub klyshko_power_mw: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rate_powers_mw: vec![2.0, 3.0, 4.0, 8.0, 12.0, 16.98, 24.0],
            car_powers_mw: vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.98],
            g2_powers_mw: vec![3.0, 4.0, 6.0, 8.0, 12.0, 16.98],
            g2_curve_power_mw: 16.98,
            hbt_signal_efficiency: Some(1.0),
            constant_counts: true,
            klyshko_power_mw: 4.0,
        }
    }
}

/// Histogram and batching parameters of the kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub max_delay_bins: u64,
    pub batch_bins: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            max_delay_bins: 1000,
            batch_bins: 1 << 27,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seed: u64,
    pub scenario: Scenario,
    /// Bins per sweep point (at the lowest power when `constant_counts`).
    pub acquisition_bins: u64,
    pub source: SourceConfig,
    pub feedforward: FeedForwardConfig,
    /// Needs one detector labelled `signal` and one labelled `herald`.
    pub detectors: Vec<DetectorConfig>,
    pub losses: ComponentLosses,
    pub filters: FilterConfig,
    pub sweep: SweepConfig,
    pub kernel: KernelConfig,
    pub jsi: JsiSweepConfig,
    pub hom: HomConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "paper2021".into(),
            seed: 2021,
            scenario: Scenario::RateVsPower,
            acquisition_bins: 200_000_000_000,
            source: SourceConfig::default(),
            feedforward: FeedForwardConfig::default(),
            detectors: vec![
                DetectorConfig {
                    label: "signal".into(),
                    efficiency: db_to_transmission(2.2),
                    dark_count_rate_hz: 100.0,
                },
                DetectorConfig {
                    label: "herald".into(),
                    efficiency: db_to_transmission(1.8),
                    dark_count_rate_hz: 100.0,
                },
            ],
            losses: ComponentLosses::default(),
            filters: FilterConfig::default(),
            sweep: SweepConfig::default(),
            kernel: KernelConfig::default(),
            jsi: JsiSweepConfig::default(),
            hom: HomConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn paper2021() -> Result<Self> {
        Self::from_toml(PAPER2021_TOML)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper2021" => Self::paper2021(),
            other => Err(Error::invalid("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.acquisition_bins == 0 {
            return Err(Error::invalid("acquisition_bins", "must be > 0"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == ".." {
            return Err(Error::invalid("run_id", "must be a plain directory name"));
        }
        self.source.validate()?;
        self.feedforward.validate()?;
        self.losses.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        self.detector("signal")?;
        self.detector("herald")?;
        for (name, bw) in [
            ("herald_channel_fwhm_ghz", self.filters.herald_channel_fwhm_ghz),
            ("output_filter_fwhm_ghz", self.filters.output_filter_fwhm_ghz),
        ] {
            if !(bw > 0.0) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        for p in self
            .sweep
            .rate_powers_mw
            .iter()
            .chain(&self.sweep.car_powers_mw)
            .chain(&self.sweep.g2_powers_mw)
        {
            if !(*p > 0.0 && p.is_finite()) {
                return Err(Error::invalid("sweep", format!("pump powers must be > 0, got {p}")));
            }
        }
        if let Some(e) = self.sweep.hbt_signal_efficiency {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::invalid("hbt_signal_efficiency", "must lie in (0, 1]"));
            }
        }
        if self.kernel.batch_bins <= 4 * self.kernel.max_delay_bins {
            return Err(Error::invalid("batch_bins", "must exceed four times max_delay_bins"));
        }
        self.hom.validate()?;
        Ok(())
    }

    pub fn detector(&self, label: &str) -> Result<&DetectorConfig> {
        self.detectors
            .iter()
            .find(|d| d.label == label)
            .ok_or_else(|| Error::invalid("detectors", format!("missing detector `{label}`")))
    }

    pub fn loss_budget(&self) -> Result<LossBudget> {
        LossBudget::new(
            self.losses.clone(),
            transmission_to_db(self.detector("signal")?.efficiency),
            transmission_to_db(self.detector("herald")?.efficiency),
        )
    }

    /// Narrowband heralding bank with the configured channel width and the
    /// per-port losses.
    pub fn herald_bank(&self) -> Result<FilterBank> {
        let fwhm = self.filters.herald_channel_fwhm_ghz;
        let channels = vec![
            SpectralMode::new("f_i1", F_I1_THZ, fwhm)?,
            SpectralMode::new("f_i2", F_I2_THZ, fwhm)?,
            SpectralMode::new("f_i3", F_I3_THZ, fwhm)?,
        ];
        let loss = (0..3)
            .map(|k| self.losses.narrowband_db[k] + self.losses.narrowband_excess_db[k])
            .collect();
        FilterBank::new(channels, loss)
    }
}
