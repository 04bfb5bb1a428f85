//! Component loss budget of the signal and heralding arms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power transmission of a loss given in dB.
#[inline]
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

#[inline]
pub fn transmission_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Measured insertion losses of the fibre components, dB. Detector
/// losses are carried by the detector configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentLosses {
    pub ppln_coupling_db: f64,
    pub dwdm_signal_db: f64,
    pub dwdm_herald_db: f64,
    /// Narrowband DWDM ports f_i1, f_i2, f_i3.
    pub narrowband_db: [f64; 3],
    /// Extra loss observed on individual narrowband ports on top of
    /// `narrowband_db`; the f_i1 port runs 1 dB low.
    pub narrowband_excess_db: [f64; 3],
    pub delay_fiber_db: f64,
    pub eom_db: f64,
    pub tnf_db: f64,
    /// Fraction of signal photons inside the 12.5 GHz output filter whose
    /// twin falls inside a 6.5 GHz heralding channel.
    pub herald_bandwidth_ratio: f64,
}

impl Default for ComponentLosses {
    fn default() -> Self {
        Self {
            ppln_coupling_db: 2.50,
            dwdm_signal_db: 1.83,
            dwdm_herald_db: 2.21,
            narrowband_db: [4.58, 4.58, 4.60],
            narrowband_excess_db: [1.0, 0.0, 0.0],
            delay_fiber_db: 0.40,
            eom_db: 4.56,
            tnf_db: 5.30,
            herald_bandwidth_ratio: 6.5 / 12.5,
        }
    }
}

impl ComponentLosses {
    /// Every component ideal.
    pub fn lossless() -> Self {
        Self {
            ppln_coupling_db: 0.0,
            dwdm_signal_db: 0.0,
            dwdm_herald_db: 0.0,
            narrowband_db: [0.0; 3],
            narrowband_excess_db: [0.0; 3],
            delay_fiber_db: 0.0,
            eom_db: 0.0,
            tnf_db: 0.0,
            herald_bandwidth_ratio: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("ppln_coupling_db", self.ppln_coupling_db),
            ("dwdm_signal_db", self.dwdm_signal_db),
            ("dwdm_herald_db", self.dwdm_herald_db),
            ("delay_fiber_db", self.delay_fiber_db),
            ("eom_db", self.eom_db),
            ("tnf_db", self.tnf_db),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("loss must be >= 0 dB, got {v}")));
            }
        }
        for v in self.narrowband_db.iter().chain(&self.narrowband_excess_db) {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "narrowband_db",
                    format!("loss must be >= 0 dB, got {v}"),
                ));
            }
        }
        if !(self.herald_bandwidth_ratio > 0.0 && self.herald_bandwidth_ratio <= 1.0) {
            return Err(Error::invalid("herald_bandwidth_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// One named entry of a loss chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub component: String,
    pub loss_db: f64,
}

/// Loss chains of both arms, including the detectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBudget {
    pub components: ComponentLosses,
    pub signal_detector_db: f64,
    pub herald_detector_db: f64,
}

impl LossBudget {
    pub fn new(components: ComponentLosses, signal_detector_db: f64, herald_detector_db: f64) -> Result<Self> {
        components.validate()?;
        for (name, v) in [
            ("signal_detector_db", signal_detector_db),
            ("herald_detector_db", herald_detector_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("loss must be >= 0 dB, got {v}")));
            }
        }
        Ok(Self {
            components,
            signal_detector_db,
            herald_detector_db,
        })
    }

    fn entry(name: &str, db: f64) -> ChainEntry {
        ChainEntry {
            component: name.to_string(),
            loss_db: db,
        }
    }

    /// Source to signal detector, through the delay loop, EOM and TNF.
    pub fn signal_chain(&self) -> Vec<ChainEntry> {
        let c = &self.components;
        vec![
            Self::entry("ppln_coupling", c.ppln_coupling_db),
            Self::entry("dwdm_signal", c.dwdm_signal_db),
            Self::entry("delay_fiber", c.delay_fiber_db),
            Self::entry("eom", c.eom_db),
            Self::entry("tnf", c.tnf_db),
            Self::entry("snspd", self.signal_detector_db),
        ]
    }

    /// Source to the detector behind narrowband port `channel` (0 = f_i1).
    /// The per-port excess loss is listed only when `with_excess` is set.
    pub fn herald_chain(&self, channel: usize, with_excess: bool) -> Vec<ChainEntry> {
        let c = &self.components;
        let mut chain = vec![
            Self::entry("ppln_coupling", c.ppln_coupling_db),
            Self::entry("dwdm_herald", c.dwdm_herald_db),
            Self::entry(
                ["narrowband_f_i1", "narrowband_f_i2", "narrowband_f_i3"][channel],
                c.narrowband_db[channel],
            ),
            Self::entry("snspd", self.herald_detector_db),
        ];
        if with_excess && c.narrowband_excess_db[channel] > 0.0 {
            chain.push(Self::entry("narrowband_excess", c.narrowband_excess_db[channel]));
        }
        chain
    }

    pub fn total_db(chain: &[ChainEntry]) -> f64 {
        chain.iter().map(|e| e.loss_db).sum()
    }

    pub fn signal_transmission(&self) -> f64 {
        db_to_transmission(Self::total_db(&self.signal_chain()))
    }

    pub fn herald_transmission(&self, channel: usize, with_excess: bool) -> f64 {
        db_to_transmission(Self::total_db(&self.herald_chain(channel, with_excess)))
    }

    /// Probability that the idler of a pair whose signal is inside the output
    /// filter is detected behind port `channel`.
    pub fn herald_efficiency(&self, channel: usize) -> f64 {
        self.herald_transmission(channel, true) * self.components.herald_bandwidth_ratio
    }
}
