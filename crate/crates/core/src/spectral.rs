//! Frequency-domain model: channel filters, filter banks and the joint
//! spectral intensity (JSI) of the photon pairs.
//!
//! Frequencies are carried in THz, widths and offsets in GHz. All filter
//! profiles are Gaussian in intensity transmission.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::loss::db_to_transmission;

/// Spacing between neighbouring spectral modes, GHz.
pub const MODE_SPACING_GHZ: f64 = 12.5;
/// Transmission FWHM of one narrowband heralding channel, GHz.
pub const HERALD_CHANNEL_FWHM_GHZ: f64 = 6.5;
/// Passband FWHM of the tunable narrowband output filter, GHz.
pub const TNF_FWHM_GHZ: f64 = 12.5;
/// Bandwidth of the pulsed pump, GHz.
pub const PUMP_BANDWIDTH_GHZ: f64 = 6.4;

pub const F_I1_THZ: f64 = 193.4992;
pub const F_I2_THZ: f64 = 193.5117;
pub const F_I3_THZ: f64 = 193.5242;
pub const F_S_PLUS_THZ: f64 = 195.7006;
pub const F_S0_THZ: f64 = 195.6881;
pub const F_S_MINUS_THZ: f64 = 195.6756;

/// Sum frequency that all pairs share (energy conservation). Pinned to the
/// mode grid, `f_s0 + f_i2`, so that every signal/idler mode pair sums to it.
pub const DOUBLED_PUMP_THZ: f64 = F_S0_THZ + F_I2_THZ;

const GHZ_PER_THZ: f64 = 1000.0;
const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

/// Gaussian intensity profile with unit peak.
#[inline]
pub(crate) fn gaussian_fwhm(offset: f64, fwhm: f64) -> f64 {
    let r = offset / fwhm;
    (-FOUR_LN2 * r * r).exp()
}

/// Signal frequency of the mode that sits `offset` spacings above `f_s0`.
pub fn signal_mode_frequency(offset: i32) -> f64 {
    F_S0_THZ + offset as f64 * MODE_SPACING_GHZ / GHZ_PER_THZ
}

/// A frequency channel with Gaussian transmission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    pub label: String,
    pub center_thz: f64,
    pub fwhm_ghz: f64,
}

impl SpectralMode {
    pub fn new(label: impl Into<String>, center_thz: f64, fwhm_ghz: f64) -> Result<Self> {
        let mode = Self {
            label: label.into(),
            center_thz,
            fwhm_ghz,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_ghz > 0.0 && self.fwhm_ghz.is_finite()) {
            return Err(Error::invalid(
                "fwhm_ghz",
                format!("must be > 0, got {}", self.fwhm_ghz),
            ));
        }
        if !self.center_thz.is_finite() {
            return Err(Error::invalid("center_thz", "must be finite"));
        }
        Ok(())
    }

    /// Peak-normalised transmission at `f_thz`.
    pub fn transmission(&self, f_thz: f64) -> f64 {
        gaussian_fwhm((f_thz - self.center_thz) * GHZ_PER_THZ, self.fwhm_ghz)
    }
}

/// Transmission of `mode` at frequency `f_thz`, in [0, 1].
pub fn filter_transmission(mode: &SpectralMode, f_thz: f64) -> f64 {
    mode.transmission(f_thz)
}

/// A set of Gaussian channels with per-channel insertion loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub channels: Vec<SpectralMode>,
    pub insertion_loss_db: Vec<f64>,
}

impl FilterBank {
    pub fn new(channels: Vec<SpectralMode>, insertion_loss_db: Vec<f64>) -> Result<Self> {
        let bank = Self {
            channels,
            insertion_loss_db,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.insertion_loss_db.len() {
            return Err(Error::invalid(
                "insertion_loss_db",
                format!(
                    "{} losses for {} channels",
                    self.insertion_loss_db.len(),
                    self.channels.len()
                ),
            ));
        }
        for ch in &self.channels {
            ch.validate()?;
        }
        for w in self.channels.windows(2) {
            if w[1].center_thz <= w[0].center_thz {
                return Err(Error::invalid("channels", "centres must be strictly increasing"));
            }
        }
        if let Some(l) = self.insertion_loss_db.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::invalid("insertion_loss_db", format!("must be >= 0, got {l}")));
        }
        Ok(())
    }

    /// The three narrowband heralding channels f_i1, f_i2, f_i3 (6.5 GHz,
    /// 12.5 GHz spacing) with the given per-channel losses.
    pub fn heralding(insertion_loss_db: [f64; 3]) -> Result<Self> {
        Self::new(
            vec![
                SpectralMode::new("f_i1", F_I1_THZ, HERALD_CHANNEL_FWHM_GHZ)?,
                SpectralMode::new("f_i2", F_I2_THZ, HERALD_CHANNEL_FWHM_GHZ)?,
                SpectralMode::new("f_i3", F_I3_THZ, HERALD_CHANNEL_FWHM_GHZ)?,
            ],
            insertion_loss_db.to_vec(),
        )
    }

    /// Transmission of channel `index` including its insertion loss.
    pub fn channel_transmission(&self, index: usize, f_thz: f64) -> f64 {
        self.channels[index].transmission(f_thz) * db_to_transmission(self.insertion_loss_db[index])
    }

    /// Transmission summed over all output ports.
    pub fn transmission(&self, f_thz: f64) -> f64 {
        (0..self.channels.len())
            .map(|i| self.channel_transmission(i, f_thz))
            .sum()
    }
}

/// Unfiltered energy-conservation ridge. Its cross-section, cut by moving
/// signal and idler together by the same offset, has FWHM `pump_bandwidth_ghz`.
fn ridge(f_s: f64, f_i: f64, pump_bandwidth_ghz: f64) -> f64 {
    let detuning = (f_s + f_i - DOUBLED_PUMP_THZ) * GHZ_PER_THZ;
    gaussian_fwhm(detuning, 2.0 * pump_bandwidth_ghz)
}

fn check_bandwidth(pump_bandwidth_ghz: f64) -> Result<()> {
    if pump_bandwidth_ghz > 0.0 && pump_bandwidth_ghz.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "pump_bandwidth_ghz",
            format!("must be > 0, got {pump_bandwidth_ghz}"),
        ))
    }
}

/// Joint spectral intensity at (`f_s`, `f_i`), optionally multiplied by
/// signal and idler filter banks. Arbitrary units; the unfiltered ridge
/// peaks at 1.
pub fn jsi_value(
    f_s: f64,
    f_i: f64,
    pump_bandwidth_ghz: f64,
    signal_filter: Option<&FilterBank>,
    idler_filter: Option<&FilterBank>,
) -> Result<f64> {
    check_bandwidth(pump_bandwidth_ghz)?;
    let mut value = ridge(f_s, f_i, pump_bandwidth_ghz);
    if let Some(bank) = signal_filter {
        value *= bank.transmission(f_s);
    }
    if let Some(bank) = idler_filter {
        value *= bank.transmission(f_i);
    }
    Ok(value)
}

/// Which measurement a JSI sweep emulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsiScenario {
    /// Pairs straight out of the waveguide.
    Unfiltered,
    /// Narrowband bank in the idler arm, no frequency shifting.
    IdlerFiltered,
    /// Narrowband bank in the idler arm with feed-forward shifting on.
    Multiplexed,
}

impl FromStr for JsiScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "unfiltered" => Ok(Self::Unfiltered),
            "b" | "idler_filtered" | "filtered" => Ok(Self::IdlerFiltered),
            "c" | "multiplexed" => Ok(Self::Multiplexed),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

/// Axes and physics parameters for a swept-filter JSI map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JsiSweepConfig {
    pub scenario: JsiScenario,
    pub signal_start_thz: f64,
    pub signal_stop_thz: f64,
    pub idler_start_thz: f64,
    pub idler_stop_thz: f64,
    pub step_ghz: f64,
    pub pump_bandwidth_ghz: f64,
    /// Fraction of side-mode photons actually moved when multiplexing.
    pub shift_efficiency: f64,
}

impl Default for JsiSweepConfig {
    fn default() -> Self {
        Self {
            scenario: JsiScenario::Multiplexed,
            signal_start_thz: 195.6631,
            signal_stop_thz: 195.7131,
            idler_start_thz: 193.4867,
            idler_stop_thz: 193.5367,
            step_ghz: 2.5,
            pump_bandwidth_ghz: PUMP_BANDWIDTH_GHZ,
            shift_efficiency: 0.9,
        }
    }
}

fn axis(start: f64, stop: f64, step_ghz: f64) -> Result<Vec<f64>> {
    if !(step_ghz > 0.0) || !(stop >= start) {
        return Err(Error::invalid(
            "axis",
            format!("bad axis {start}..{stop} step {step_ghz}"),
        ));
    }
    let n = ((stop - start) * GHZ_PER_THZ / step_ghz + 1e-6).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step_ghz / GHZ_PER_THZ).collect())
}

/// Emulates the swept-filter JSI measurement on a regular grid.
///
/// `idler_bank` is the narrowband heralding bank; it is ignored for the
/// unfiltered scenario. In the multiplexed scenario the idler channel whose
/// twin sits `o` spacings above `f_s0` moves its island by `-o` spacings with
/// probability `shift_efficiency`.
pub fn jsi_sweep(config: &JsiSweepConfig, idler_bank: &FilterBank) -> Result<JsiGrid> {
    check_bandwidth(config.pump_bandwidth_ghz)?;
    if !(0.0..=1.0).contains(&config.shift_efficiency) {
        return Err(Error::invalid("shift_efficiency", "must lie in [0, 1]"));
    }
    idler_bank.validate()?;
    let signal_axis = axis(config.signal_start_thz, config.signal_stop_thz, config.step_ghz)?;
    let idler_axis = axis(config.idler_start_thz, config.idler_stop_thz, config.step_ghz)?;
    let bw = config.pump_bandwidth_ghz;

    // Signal offset (in mode spacings) of the twin heralded by each channel.
    let offsets: Vec<f64> = idler_bank
        .channels
        .iter()
        .map(|ch| ((DOUBLED_PUMP_THZ - ch.center_thz - F_S0_THZ) * GHZ_PER_THZ / MODE_SPACING_GHZ).round())
        .collect();

    let intensity = idler_axis
        .iter()
        .map(|&f_i| {
            signal_axis
                .iter()
                .map(|&f_s| match config.scenario {
                    JsiScenario::Unfiltered => ridge(f_s, f_i, bw),
                    JsiScenario::IdlerFiltered => ridge(f_s, f_i, bw) * idler_bank.transmission(f_i),
                    JsiScenario::Multiplexed => offsets
                        .iter()
                        .enumerate()
                        .map(|(ch, &o)| {
                            let t = idler_bank.channel_transmission(ch, f_i);
                            if o == 0.0 {
                                return t * ridge(f_s, f_i, bw);
                            }
                            // A photon born at f_s' is observed at f_s' - o * spacing.
                            let origin = f_s + o * MODE_SPACING_GHZ / GHZ_PER_THZ;
                            let eff = config.shift_efficiency;
                            t * (eff * ridge(origin, f_i, bw) + (1.0 - eff) * ridge(f_s, f_i, bw))
                        })
                        .sum(),
                })
                .collect()
        })
        .collect();

    Ok(JsiGrid {
        signal_axis,
        idler_axis,
        intensity,
    })
}

/// Sampled JSI. `intensity[i][j]` belongs to `idler_axis[i]`, `signal_axis[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsiGrid {
    pub signal_axis: Vec<f64>,
    pub idler_axis: Vec<f64>,
    pub intensity: Vec<Vec<f64>>,
}

impl JsiGrid {
    /// Intensity summed over the idler axis, one value per signal frequency.
    pub fn signal_marginal(&self) -> Vec<f64> {
        (0..self.signal_axis.len())
            .map(|j| self.intensity.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// Intensity summed over the signal axis, one value per idler frequency.
    pub fn idler_marginal(&self) -> Vec<f64> {
        self.intensity.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.intensity.iter().flatten().sum()
    }

    /// Strict 2-D local maxima (8-neighbourhood) above `threshold` times the
    /// grid maximum, as (idler index, signal index).
    pub fn islands(&self, threshold: f64) -> Vec<(usize, usize)> {
        let max = self.intensity.iter().flatten().cloned().fold(0.0, f64::max);
        let (ni, nj) = (self.idler_axis.len(), self.signal_axis.len());
        let mut out = Vec::new();
        for i in 0..ni {
            for j in 0..nj {
                let v = self.intensity[i][j];
                if v <= threshold * max {
                    continue;
                }
                let mut is_peak = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= ni as i64 || b >= nj as i64 {
                            continue;
                        }
                        if self.intensity[a as usize][b as usize] >= v {
                            is_peak = false;
                        }
                    }
                }
                if is_peak {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Samples along the cut that moves signal and idler together, through
    /// grid point (`idler_index`, `signal_index`). Returns (offset GHz, value).
    pub fn cross_section(&self, idler_index: usize, signal_index: usize) -> Vec<(f64, f64)> {
        let step =
            (self.signal_axis.get(1).copied().unwrap_or(self.signal_axis[0]) - self.signal_axis[0]) * GHZ_PER_THZ;
        let (ni, nj) = (self.idler_axis.len() as i64, self.signal_axis.len() as i64);
        let lo = -(idler_index.min(signal_index) as i64);
        let hi = (ni - 1 - idler_index as i64).min(nj - 1 - signal_index as i64);
        (lo..=hi)
            .map(|k| {
                let v = self.intensity[(idler_index as i64 + k) as usize][(signal_index as i64 + k) as usize];
                (k as f64 * step, v)
            })
            .collect()
    }

    /// CSV: header row of signal frequencies, first column idler frequencies.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("idler_thz\\signal_thz");
        for f in &self.signal_axis {
            let _ = write!(s, ",{f:.6}");
        }
        s.push('\n');
        for (f_i, row) in self.idler_axis.iter().zip(&self.intensity) {
            let _ = write!(s, "{f_i:.6}");
            for v in row {
                s.push(',');
                s.push_str(&sig6(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Indices of strict interior local maxima of a 1-D profile.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] > values[k + 1])
        .collect()
}

/// FWHM of a single-peaked profile from a least-squares parabola fit to the
/// log of the samples above 10% of the peak. Exact for Gaussian profiles.
pub fn measure_fwhm(samples: &[(f64, f64)]) -> Option<f64> {
    let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    let mut used = 0;
    for &(x, y) in samples {
        if y <= 0.1 * peak {
            continue;
        }
        let row = Vector3::new(1.0, x, x * x);
        ata += row * row.transpose();
        atb += row * (y / peak).ln();
        used += 1;
    }
    if used < 3 {
        return None;
    }
    let coef = ata.lu().solve(&atb)?;
    let curvature = coef[2];
    if curvature >= 0.0 {
        return None;
    }
    Some(2.0 * (std::f64::consts::LN_2 / -curvature).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fi2() -> SpectralMode {
        SpectralMode::new("f_i2", F_I2_THZ, HERALD_CHANNEL_FWHM_GHZ).unwrap()
    }

    #[test]
    fn transmission_peak_and_half_width() {
        let m = fi2();
        assert_relative_eq!(filter_transmission(&m, 193.5117), 1.0);
        let half = F_I2_THZ + 0.5 * HERALD_CHANNEL_FWHM_GHZ / 1000.0;
        assert_relative_eq!(filter_transmission(&m, half), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn transmission_one_spacing_away() {
        // exp(-4 ln2 (12.5/6.5)^2), evaluated by hand: 3.5228e-5
        let v = filter_transmission(&fi2(), F_I2_THZ + 0.0125);
        let by_hand = (-4.0 * 2f64.ln() * (12.5f64 / 6.5).powi(2)).exp();
        assert_relative_eq!(v, by_hand, max_relative = 1e-9);
        assert_relative_eq!(v, 3.5228e-5, max_relative = 1e-3);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(SpectralMode::new("x", 193.0, 0.0).is_err());
        assert!(SpectralMode::new("x", 193.0, -1.0).is_err());
    }

    #[test]
    fn bank_rejects_unsorted_and_negative_loss() {
        let a = SpectralMode::new("a", 193.6, 6.5).unwrap();
        let b = SpectralMode::new("b", 193.5, 6.5).unwrap();
        assert!(FilterBank::new(vec![a.clone(), b.clone()], vec![0.0, 0.0]).is_err());
        assert!(FilterBank::new(vec![b.clone(), b.clone()], vec![0.0, 0.0]).is_err());
        assert!(FilterBank::new(vec![b, a], vec![0.0, -0.1]).is_err());
    }

    #[test]
    fn grid_is_energy_consistent() {
        assert_relative_eq!(F_S_PLUS_THZ + F_I1_THZ, DOUBLED_PUMP_THZ, epsilon = 1e-9);
        assert_relative_eq!(F_S_MINUS_THZ + F_I3_THZ, DOUBLED_PUMP_THZ, epsilon = 1e-9);
        assert_relative_eq!(signal_mode_frequency(1), F_S_PLUS_THZ, epsilon = 1e-9);
        assert_relative_eq!(signal_mode_frequency(-1), F_S_MINUS_THZ, epsilon = 1e-9);
    }

    #[test]
    fn jsi_ridge_maximum_and_half_point() {
        let peak = jsi_value(F_S0_THZ, F_I2_THZ, 6.4, None, None).unwrap();
        assert_relative_eq!(peak, 1.0, epsilon = 1e-12);
        let half = jsi_value(F_S0_THZ + 0.0032, F_I2_THZ + 0.0032, 6.4, None, None).unwrap();
        assert_relative_eq!(half, 0.5, epsilon = 1e-9);
        // Along the ridge the unfiltered JSI is flat.
        let along = jsi_value(F_S0_THZ + 0.01, F_I2_THZ - 0.01, 6.4, None, None).unwrap();
        assert_relative_eq!(along, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn jsi_rejects_bad_bandwidth() {
        assert!(jsi_value(F_S0_THZ, F_I2_THZ, 0.0, None, None).is_err());
    }

    #[test]
    fn excess_loss_lowers_f_s_plus_island() {
        let bank = FilterBank::heralding([5.58, 4.58, 4.60]).unwrap();
        let plus = jsi_value(F_S_PLUS_THZ, F_I1_THZ, 6.4, None, Some(&bank)).unwrap();
        let zero = jsi_value(F_S0_THZ, F_I2_THZ, 6.4, None, Some(&bank)).unwrap();
        assert_relative_eq!(plus / zero, 10f64.powf(-0.1), max_relative = 1e-4);
    }

    #[test]
    fn scenario_names() {
        assert_eq!("A".parse::<JsiScenario>().unwrap(), JsiScenario::Unfiltered);
        assert_eq!("multiplexed".parse::<JsiScenario>().unwrap(), JsiScenario::Multiplexed);
        assert!(matches!("D".parse::<JsiScenario>(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn default_axes_are_21_by_21() {
        let bank = FilterBank::heralding([4.58; 3]).unwrap();
        let g = jsi_sweep(&JsiSweepConfig::default(), &bank).unwrap();
        assert_eq!(g.signal_axis.len(), 21);
        assert_eq!(g.idler_axis.len(), 21);
        assert_relative_eq!(g.signal_axis[10], F_S0_THZ, epsilon = 1e-9);
        assert_relative_eq!(g.idler_axis[10], F_I2_THZ, epsilon = 1e-9);
    }

    #[test]
    fn fwhm_of_sampled_gaussian() {
        let s: Vec<(f64, f64)> = (-10..=10)
            .map(|k| {
                let x = k as f64 * 2.5;
                (x, gaussian_fwhm(x, 6.4))
            })
            .collect();
        assert_relative_eq!(measure_fwhm(&s).unwrap(), 6.4, max_relative = 1e-9);
    }

    #[test]
    fn csv_layout() {
        let bank = FilterBank::heralding([4.58; 3]).unwrap();
        let g = jsi_sweep(&JsiSweepConfig::default(), &bank).unwrap();
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 22);
        assert!(lines[0].starts_with("idler_thz\\signal_thz,195.663100,"));
        assert!(lines[1].starts_with("193.486700,"));
        assert_eq!(lines[1].split(',').count(), 22);
    }
}
