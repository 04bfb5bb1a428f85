//! Feed-forward frequency multiplexer: herald-resolved triggers, the AWG
//! trigger-loss model and the electro-optic shift of the twin signal photon.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::ClickStream;
use crate::error::{Error, Result};
use crate::spectral::{signal_mode_frequency, MODE_SPACING_GHZ};

/// Electronics and modulator parameters of the feed-forward loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedForwardConfig {
    pub v_pi_volts: f64,
    /// Rising-edge slope kappa+, V/s. Produces an up-shift.
    pub ramp_up_v_per_s: f64,
    /// Falling-edge slope kappa-, V/s (negative). Produces a down-shift.
    pub ramp_down_v_per_s: f64,
    pub shift_efficiency: f64,
    pub awg_f3db_mhz: f64,
    pub butterworth_order: u32,
    /// Electronic delay added to the f_i1 triggers. The signal delay loop is
    /// assumed to match it exactly.
    pub compensation_delay_ns: f64,
    /// Treat every trigger as surviving the AWG (perfect electronics).
    #[serde(default)]
    pub ideal_trigger: bool,
}

impl Default for FeedForwardConfig {
    fn default() -> Self {
        Self {
            v_pi_volts: 1.4,
            ramp_up_v_per_s: 3.5e10,
            ramp_down_v_per_s: -3.5e10,
            shift_efficiency: 0.90,
            awg_f3db_mhz: 1.2,
            butterworth_order: 2,
            compensation_delay_ns: 0.0,
            ideal_trigger: false,
        }
    }
}

impl FeedForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_pi_volts > 0.0) {
            return Err(Error::invalid("v_pi_volts", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.shift_efficiency) {
            return Err(Error::invalid("shift_efficiency", "must lie in [0, 1]"));
        }
        if !(self.awg_f3db_mhz > 0.0) {
            return Err(Error::invalid("awg_f3db_mhz", "must be > 0"));
        }
        if self.butterworth_order == 0 {
            return Err(Error::invalid("butterworth_order", "must be >= 1"));
        }
        if !(self.compensation_delay_ns >= 0.0) {
            return Err(Error::invalid("compensation_delay_ns", "must be >= 0"));
        }
        Ok(())
    }

    /// Signed shift in GHz applied to the twin of a photon heralded
    /// `offset` spacings above f_s0: down for f_s+, up for f_s-.
    pub fn shift_for_offset(&self, offset: i32) -> Result<f64> {
        match offset.signum() {
            0 => Ok(0.0),
            1 => frequency_shift_magnitude(self.ramp_down_v_per_s, self.v_pi_volts),
            _ => frequency_shift_magnitude(self.ramp_up_v_per_s, self.v_pi_volts),
        }
    }

    /// Probability that a side-mode trigger produces a shift, at the given
    /// side-mode trigger rate.
    pub fn shift_success_probability(&self, trigger_rate_khz: f64) -> f64 {
        self.shift_efficiency * trigger_survival_probability(trigger_rate_khz, self)
    }
}

/// Frequency shift of a linear phase ramp, kappa / (2 V_pi), in GHz. The
/// sign follows the ramp direction.
pub fn frequency_shift_magnitude(kappa_v_per_s: f64, v_pi_volts: f64) -> Result<f64> {
    if !(v_pi_volts > 0.0) {
        return Err(Error::invalid("v_pi_volts", format!("must be > 0, got {v_pi_volts}")));
    }
    Ok(kappa_v_per_s / (2.0 * v_pi_volts) * 1e-9)
}

/// Survival probability of a trigger through the AWG, modelled as the
/// magnitude response of an order-n Butterworth low-pass evaluated at the
/// side-mode trigger rate.
pub fn trigger_survival_probability(trigger_rate_khz: f64, config: &FeedForwardConfig) -> f64 {
    if config.ideal_trigger {
        return 1.0;
    }
    let x = (trigger_rate_khz.max(0.0) * 1e-3) / config.awg_f3db_mhz;
    1.0 / (1.0 + x.powi(2 * config.butterworth_order as i32)).sqrt()
}

/// What happened to one signal photon at the multiplexer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftOutcome {
    pub bin: u64,
    pub attempted: bool,
    pub trigger_survived: bool,
    pub shift_applied: bool,
    pub resulting_frequency_thz: f64,
}

/// A signal photon in time bin `bin`, `offset` mode spacings above f_s0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignalPhoton {
    pub bin: u64,
    pub offset: i32,
}

/// Clicks of one heralding channel together with the signal offset of the
/// twin it announces (f_i1 announces +1, f_i2 0, f_i3 -1).
#[derive(Clone, Copy, Debug)]
pub struct HeraldChannelClicks<'a> {
    pub signal_offset: i32,
    pub clicks: &'a ClickStream,
}

/// Per-bin multiplexer decision shared by every photon in the bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftDecision {
    pub attempted: bool,
    pub trigger_survived: bool,
    pub applied: bool,
    /// Applied shift in GHz, zero unless `applied`.
    pub shift_ghz: f64,
}

impl ShiftDecision {
    pub const IDLE: ShiftDecision = ShiftDecision {
        attempted: false,
        trigger_survived: false,
        applied: false,
        shift_ghz: 0.0,
    };
}

/// Decides the shift for one bin given the signal offsets announced by the
/// side-mode channels that clicked. Simultaneous side triggers collapse to a
/// single AWG pulse whose direction is picked uniformly, so no photon is
/// shifted twice.
pub fn decide_shift<R: Rng + ?Sized>(
    side_offsets: &[i32],
    survival: f64,
    config: &FeedForwardConfig,
    rng: &mut R,
) -> Result<ShiftDecision> {
    let chosen = match side_offsets.len() {
        0 => return Ok(ShiftDecision::IDLE),
        1 => side_offsets[0],
        n => side_offsets[rng.random_range(0..n)],
    };
    let trigger_survived = survival >= 1.0 || rng.random::<f64>() < survival;
    let applied = trigger_survived && (config.shift_efficiency >= 1.0 || rng.random::<f64>() < config.shift_efficiency);
    Ok(ShiftDecision {
        attempted: true,
        trigger_survived,
        applied,
        shift_ghz: if applied { config.shift_for_offset(chosen)? } else { 0.0 },
    })
}

/// Runs the multiplexer over a bin timeline of length `timeline_bins`.
///
/// Each photon gets one outcome. A side-channel click in a bin attempts to
/// shift every photon of that bin by the ramp-determined amount; a click on
/// the central channel heralds without shifting. `survival` is the
/// quasi-static trigger survival probability of the run.
pub fn apply_feedforward<R: Rng + ?Sized>(
    heralds: &[HeraldChannelClicks<'_>],
    photons: &[SignalPhoton],
    timeline_bins: u64,
    survival: f64,
    config: &FeedForwardConfig,
    rng: &mut R,
) -> Result<Vec<ShiftOutcome>> {
    config.validate()?;
    if !(0.0..=1.0).contains(&survival) {
        return Err(Error::invalid("survival", "must lie in [0, 1]"));
    }
    for h in heralds {
        if let Some(&last) = h.clicks.bins.last() {
            if last >= timeline_bins {
                return Err(Error::TimelineMismatch(format!(
                    "herald `{}` clicks at bin {last} beyond timeline of {timeline_bins} bins",
                    h.clicks.label
                )));
            }
        }
    }
    if let Some(p) = photons.iter().find(|p| p.bin >= timeline_bins) {
        return Err(Error::TimelineMismatch(format!(
            "signal photon at bin {} beyond timeline of {timeline_bins} bins",
            p.bin
        )));
    }

    let mut order: Vec<usize> = (0..photons.len()).collect();
    order.sort_by_key(|&i| photons[i].bin);
    let mut outcomes = vec![None; photons.len()];
    let mut cursors = vec![0usize; heralds.len()];
    let mut current: Option<(u64, ShiftDecision)> = None;

    for i in order {
        let photon = photons[i];
        let decision = match current {
            Some((bin, d)) if bin == photon.bin => d,
            _ => {
                let mut side = Vec::new();
                for (h, cur) in heralds.iter().zip(cursors.iter_mut()) {
                    let bins = &h.clicks.bins;
                    while *cur < bins.len() && bins[*cur] < photon.bin {
                        *cur += 1;
                    }
                    if *cur < bins.len() && bins[*cur] == photon.bin && h.signal_offset != 0 {
                        side.push(h.signal_offset);
                    }
                }
                let d = decide_shift(&side, survival, config, rng)?;
                current = Some((photon.bin, d));
                d
            }
        };
        outcomes[i] = Some(ShiftOutcome {
            bin: photon.bin,
            attempted: decision.attempted,
            trigger_survived: decision.trigger_survived,
            shift_applied: decision.applied,
            resulting_frequency_thz: signal_mode_frequency(photon.offset) + decision.shift_ghz / 1000.0,
        });
    }
    Ok(outcomes.into_iter().map(|o| o.expect("every photon visited")).collect())
}

/// Resulting mode offset after a shift of `shift_ghz`, or `None` when the
/// shift does not land on the mode grid.
pub fn offset_after_shift(offset: i32, shift_ghz: f64) -> Option<i32> {
    let steps = shift_ghz / MODE_SPACING_GHZ;
    let rounded = steps.round();
    if (steps - rounded).abs() < 1e-6 {
        Some(offset + rounded as i32)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::spectral::{F_S0_THZ, F_S_MINUS_THZ, F_S_PLUS_THZ};
    use approx::assert_relative_eq;

    fn stream(label: &str, bins: Vec<u64>) -> ClickStream {
        ClickStream::new(label, bins).unwrap()
    }

    #[test]
    fn shift_magnitude() {
        assert_eq!(frequency_shift_magnitude(0.0, 1.4).unwrap(), 0.0);
        assert_relative_eq!(
            frequency_shift_magnitude(3.5e10, 1.4).unwrap(),
            12.5,
            max_relative = 1e-12
        );
        let one = frequency_shift_magnitude(3.5e10, 1.4).unwrap();
        let four = frequency_shift_magnitude(4.0 * 3.5e10, 1.4).unwrap();
        assert_relative_eq!(four, 4.0 * one, max_relative = 1e-12);
        assert_relative_eq!(four, 50.0, max_relative = 1e-12);
        assert!(frequency_shift_magnitude(1e10, 0.0).is_err());
        assert!(frequency_shift_magnitude(-3.5e10, 1.4).unwrap() < 0.0);
    }

    #[test]
    fn survival_closed_forms() {
        let c = FeedForwardConfig::default();
        assert_eq!(trigger_survival_probability(0.0, &c), 1.0);
        assert_relative_eq!(trigger_survival_probability(1200.0, &c), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(
            trigger_survival_probability(2400.0, &c),
            1.0 / 17f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn survival_is_monotone() {
        let c = FeedForwardConfig::default();
        let mut last = 1.0;
        for k in 0..200 {
            let p = trigger_survival_probability(k as f64 * 50.0, &c);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn central_click_does_not_shift() {
        let clicks = stream("f_i2", vec![5]);
        let heralds = [HeraldChannelClicks {
            signal_offset: 0,
            clicks: &clicks,
        }];
        let photons = [SignalPhoton { bin: 5, offset: 0 }];
        let mut rng = stream_rng(1, 0);
        let out = apply_feedforward(&heralds, &photons, 10, 1.0, &FeedForwardConfig::default(), &mut rng).unwrap();
        assert!(!out[0].attempted && !out[0].shift_applied);
        assert_relative_eq!(out[0].resulting_frequency_thz, F_S0_THZ);
    }

    #[test]
    fn f_i1_click_moves_f_s_plus_to_center() {
        let clicks = stream("f_i1", vec![3]);
        let heralds = [HeraldChannelClicks {
            signal_offset: 1,
            clicks: &clicks,
        }];
        let photons = [SignalPhoton { bin: 3, offset: 1 }];
        let config = FeedForwardConfig {
            shift_efficiency: 1.0,
            ..Default::default()
        };
        let mut rng = stream_rng(2, 0);
        let out = apply_feedforward(&heralds, &photons, 10, 1.0, &config, &mut rng).unwrap();
        assert!(out[0].shift_applied);
        assert_relative_eq!(out[0].resulting_frequency_thz, F_S0_THZ, epsilon = 1e-9);
        assert_relative_eq!(
            (out[0].resulting_frequency_thz - F_S_PLUS_THZ) * 1000.0,
            -12.5,
            epsilon = 1e-6
        );
    }

    #[test]
    fn dead_trigger_leaves_photon() {
        let clicks = stream("f_i3", vec![7]);
        let heralds = [HeraldChannelClicks {
            signal_offset: -1,
            clicks: &clicks,
        }];
        let photons = [SignalPhoton { bin: 7, offset: -1 }];
        let mut rng = stream_rng(3, 0);
        let out = apply_feedforward(&heralds, &photons, 10, 0.0, &FeedForwardConfig::default(), &mut rng).unwrap();
        assert!(out[0].attempted);
        assert!(!out[0].trigger_survived);
        assert!(!out[0].shift_applied);
        assert_relative_eq!(out[0].resulting_frequency_thz, F_S_MINUS_THZ);
    }

    #[test]
    fn mismatched_timeline() {
        let clicks = stream("f_i1", vec![30]);
        let heralds = [HeraldChannelClicks {
            signal_offset: 1,
            clicks: &clicks,
        }];
        let mut rng = stream_rng(4, 0);
        let err = apply_feedforward(&heralds, &[], 10, 1.0, &FeedForwardConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::TimelineMismatch(_))));
        let ok_clicks = stream("f_i1", vec![]);
        let heralds = [HeraldChannelClicks {
            signal_offset: 1,
            clicks: &ok_clicks,
        }];
        let err = apply_feedforward(
            &heralds,
            &[SignalPhoton { bin: 11, offset: 0 }],
            10,
            1.0,
            &FeedForwardConfig::default(),
            &mut rng,
        );
        assert!(matches!(err, Err(Error::TimelineMismatch(_))));
    }

    #[test]
    fn efficiency_sets_success_fraction() {
        let bins: Vec<u64> = (0..20_000).collect();
        let clicks = stream("f_i1", bins.clone());
        let heralds = [HeraldChannelClicks {
            signal_offset: 1,
            clicks: &clicks,
        }];
        let photons: Vec<SignalPhoton> = bins.iter().map(|&b| SignalPhoton { bin: b, offset: 1 }).collect();
        let mut rng = stream_rng(5, 0);
        let out = apply_feedforward(&heralds, &photons, 20_000, 0.8, &FeedForwardConfig::default(), &mut rng).unwrap();
        let frac = out.iter().filter(|o| o.shift_applied).count() as f64 / out.len() as f64;
        let p = 0.9 * 0.8;
        let se = (p * (1.0 - p) / out.len() as f64).sqrt();
        assert!((frac - p).abs() < 4.0 * se, "fraction {frac}");
    }

    #[test]
    fn shifts_are_one_spacing() {
        let c = FeedForwardConfig::default();
        assert_relative_eq!(c.shift_for_offset(1).unwrap(), -MODE_SPACING_GHZ, max_relative = 1e-12);
        assert_relative_eq!(c.shift_for_offset(-1).unwrap(), MODE_SPACING_GHZ, max_relative = 1e-12);
        assert_eq!(offset_after_shift(1, -12.5), Some(0));
        assert_eq!(offset_after_shift(0, -12.5), Some(-1));
        assert_eq!(offset_after_shift(1, -10.0), None);
    }
}
