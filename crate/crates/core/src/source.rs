//! Photon-pair generation: per-bin, per-mode pair numbers drawn from
//! single-mode thermal statistics, and the matching analytic distribution.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CW time bin: one coherence time of a 6.5 GHz channel.
pub const CW_BIN_NS: f64 = 1.0 / 6.5;

/// How the pump is delivered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PumpMode {
    /// Continuous-wave pump discretised into bins of `bin_width_ns`.
    CwBinned { bin_width_ns: f64 },
    /// Pulsed pump; one bin per pulse, pair number set by the peak power.
    Pulsed {
        rep_rate_mhz: f64,
        pulse_fwhm_ps: f64,
        peak_power_mw: f64,
    },
}

impl PumpMode {
    pub fn cw() -> Self {
        PumpMode::CwBinned {
            bin_width_ns: CW_BIN_NS,
        }
    }

    pub fn pulsed() -> Self {
        PumpMode::Pulsed {
            rep_rate_mhz: 500.0,
            pulse_fwhm_ps: 65.0,
            peak_power_mw: 25.0,
        }
    }

    /// Duration of one bin in seconds.
    pub fn bin_duration_s(&self) -> f64 {
        match self {
            PumpMode::CwBinned { bin_width_ns } => bin_width_ns * 1e-9,
            PumpMode::Pulsed { rep_rate_mhz, .. } => 1e-6 / rep_rate_mhz,
        }
    }
}

/// Pump and pair-generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub pump_power_mw: f64,
    pub pump_mode: PumpMode,
    /// Mean pairs per bin per mode per mW^power_exponent.
    pub gain_coefficient: f64,
    #[serde(default = "default_exponent")]
    pub power_exponent: f64,
    pub mode_count: usize,
}

fn default_exponent() -> f64 {
    2.0
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            pump_power_mw: 4.0,
            pump_mode: PumpMode::cw(),
            gain_coefficient: 6.0425e-6,
            power_exponent: 2.0,
            mode_count: 3,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_power_mw >= 0.0 && self.pump_power_mw.is_finite()) {
            return Err(Error::invalid("pump_power_mw", "must be >= 0"));
        }
        if !(self.gain_coefficient > 0.0 && self.gain_coefficient.is_finite()) {
            return Err(Error::invalid("gain_coefficient", "must be > 0"));
        }
        if !(self.power_exponent > 0.0) {
            return Err(Error::invalid("power_exponent", "must be > 0"));
        }
        if self.mode_count == 0 {
            return Err(Error::invalid("mode_count", "must be >= 1"));
        }
        match self.pump_mode {
            PumpMode::CwBinned { bin_width_ns } if !(bin_width_ns > 0.0) => {
                Err(Error::invalid("bin_width_ns", "must be > 0"))
            }
            PumpMode::Pulsed {
                rep_rate_mhz,
                peak_power_mw,
                ..
            } if !(rep_rate_mhz > 0.0 && peak_power_mw >= 0.0) => {
                Err(Error::invalid("pump_mode", "rep rate must be > 0 and peak power >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Power that drives pair generation: the CW power, or the peak power
    /// of the pulses.
    pub fn driving_power_mw(&self) -> f64 {
        match self.pump_mode {
            PumpMode::CwBinned { .. } => self.pump_power_mw,
            PumpMode::Pulsed { peak_power_mw, .. } => peak_power_mw,
        }
    }

    pub fn with_power(&self, pump_power_mw: f64) -> Self {
        Self {
            pump_power_mw,
            ..self.clone()
        }
    }
}

/// Mean pair number per bin in mode `mode_index`, before any loss. The
/// cascaded SHG + SPDC process makes it quadratic in pump power by default.
pub fn mean_pairs_per_bin(config: &SourceConfig, mode_index: usize) -> Result<f64> {
    config.validate()?;
    if mode_index >= config.mode_count {
        return Err(Error::invalid(
            "mode_index",
            format!("{mode_index} out of range for {} modes", config.mode_count),
        ));
    }
    Ok(config.gain_coefficient * config.driving_power_mw().powf(config.power_exponent))
}

/// Thermal (Bose-Einstein) sampler, p(n) = mu^n / (1 + mu)^(n + 1).
#[derive(Clone, Copy, Debug)]
pub struct Thermal {
    mean: f64,
    geometric: Option<Geometric>,
}

impl Thermal {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::invalid("mean", format!("must be >= 0, got {mean}")));
        }
        let geometric = if mean > 0.0 {
            Some(Geometric::new(1.0 / (1.0 + mean)).map_err(|e| Error::invalid("mean", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { mean, geometric })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.geometric {
            Some(g) => g.sample(rng),
            None => 0,
        }
    }
}

/// Draws one thermal pair number with mean `mu`.
pub fn sample_pair_numbers<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> Result<u64> {
    Ok(Thermal::new(mu)?.sample(rng))
}

/// Thermal photon-number probabilities p(0..=n_max) with the truncated tail.
#[derive(Clone, Debug, PartialEq)]
pub struct NumberDistribution {
    pub probabilities: Vec<f64>,
    pub tail: f64,
}

pub fn photon_number_distribution(mu: f64, n_max: usize) -> Result<NumberDistribution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", format!("must be >= 0, got {mu}")));
    }
    let ratio = mu / (1.0 + mu);
    let mut p = 1.0 / (1.0 + mu);
    let probabilities = (0..=n_max)
        .map(|_| {
            let v = p;
            p *= ratio;
            v
        })
        .collect();
    Ok(NumberDistribution {
        probabilities,
        tail: ratio.powi(n_max as i32 + 1),
    })
}

/// Pair numbers of every mode in one time bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairBatch {
    pub bin_index: u64,
    pub pairs_per_mode: Vec<u64>,
}

/// Dense generation of `count` consecutive bins starting at `first_bin`.
pub fn generate_pair_batches<R: Rng + ?Sized>(
    config: &SourceConfig,
    first_bin: u64,
    count: u64,
    rng: &mut R,
) -> Result<Vec<PairBatch>> {
    let samplers = (0..config.mode_count)
        .map(|m| Thermal::new(mean_pairs_per_bin(config, m)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((first_bin..first_bin + count)
        .map(|bin_index| PairBatch {
            bin_index,
            pairs_per_mode: samplers.iter().map(|s| s.sample(rng)).collect(),
        })
        .collect())
}
