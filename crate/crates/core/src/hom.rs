//! Hong-Ou-Mandel interference between the multiplexed source and a weak
//! coherent source: analytic visibilities, spectral-mismatch corrections and
//! a noisy dip scan with Monte-Carlo Gaussian fitting.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::rng::{stream_id, stream_rng};

/// Spectral-mismatch factor quoted for the experiment.
pub const MEASURED_BANDWIDTH_FACTOR: f64 = 0.97;
/// Purity deterioration factor quoted for the experiment.
pub const MEASURED_PURITY_FACTOR: f64 = 0.8116;
/// Purity-corrected three-fold visibility measured in the experiment.
pub const MEASURED_THREE_FOLD: f64 = 0.6099;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomConfig {
    pub n_bar_1: f64,
    pub n_bar_2: f64,
    /// g2(0) of the heralded arm in the three-fold measurement.
    pub g2_arm1: f64,
    /// g2(0) of the coherent arm.
    pub g2_arm2: f64,
    pub pump_bandwidth_ghz: f64,
    pub herald_bandwidth_ghz: f64,
    pub output_filter_bandwidth_ghz: f64,
    pub delay_scan_ps: Vec<f64>,
    pub bandwidth_factor: f64,
    pub purity_factor: f64,
    /// Multiply the interference term by `purity_factor` as well.
    #[serde(default)]
    pub include_purity: bool,
    /// Expected two-fold counts per delay on the wings.
    pub two_fold_wing_counts: f64,
    /// Expected three-fold counts per delay on the wings.
    pub three_fold_wing_counts: f64,
    #[serde(default = "yes")]
    pub poisson_noise: bool,
    pub resamples: usize,
    /// Reference measured three-fold visibility (bandwidth-corrected) from
    /// which the single-photon-replacement visibility is predicted.
    pub measured_three_fold: f64,
}

fn yes() -> bool {
    true
}

impl Default for HomConfig {
    fn default() -> Self {
        Self {
            n_bar_1: 1.0,
            n_bar_2: 1.0,
            g2_arm1: 0.014,
            g2_arm2: 1.0,
            pump_bandwidth_ghz: 6.4,
            herald_bandwidth_ghz: 6.5,
            output_filter_bandwidth_ghz: 12.5,
            delay_scan_ps: (-20..=20).map(|k| k as f64 * 20.0).collect(),
            bandwidth_factor: MEASURED_BANDWIDTH_FACTOR,
            purity_factor: MEASURED_PURITY_FACTOR,
            include_purity: false,
            two_fold_wing_counts: 20_000.0,
            three_fold_wing_counts: 600.0,
            poisson_noise: true,
            resamples: 1000,
            measured_three_fold: MEASURED_THREE_FOLD,
        }
    }
}

impl HomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_bar_1 >= 0.0 && self.n_bar_2 >= 0.0) {
            return Err(Error::invalid("n_bar", "mean photon numbers must be >= 0"));
        }
        if !(self.g2_arm1 >= 0.0 && self.g2_arm2 >= 0.0) {
            return Err(Error::invalid("g2_arm", "must be >= 0"));
        }
        for (name, bw) in [
            ("pump_bandwidth_ghz", self.pump_bandwidth_ghz),
            ("herald_bandwidth_ghz", self.herald_bandwidth_ghz),
            ("output_filter_bandwidth_ghz", self.output_filter_bandwidth_ghz),
        ] {
            if !(bw > 0.0) {
                return Err(Error::invalid(name, "bandwidths must be > 0"));
            }
        }
        for (name, f) in [
            ("bandwidth_factor", self.bandwidth_factor),
            ("purity_factor", self.purity_factor),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        if !(self.two_fold_wing_counts > 0.0 && self.three_fold_wing_counts > 0.0) {
            return Err(Error::invalid("wing_counts", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.measured_three_fold) {
            return Err(Error::invalid("measured_three_fold", "must lie in [0, 1]"));
        }
        if self.resamples == 0 {
            return Err(Error::invalid("resamples", "must be >= 1"));
        }
        Ok(())
    }

    /// Peak interference factor: mode mismatch, and optionally purity.
    pub fn max_interference(&self) -> f64 {
        let purity = if self.include_purity { self.purity_factor } else { 1.0 };
        self.bandwidth_factor * purity
    }

    /// Coherence time of the dip, set by the narrower of the two spectra.
    pub fn coherence_time_ps(&self) -> f64 {
        let heralded = heralded_output_bandwidth(
            self.pump_bandwidth_ghz,
            self.herald_bandwidth_ghz,
            self.output_filter_bandwidth_ghz,
        );
        coherence_time_ps(heralded.min(self.pump_bandwidth_ghz))
    }
}

/// Coincidence probability (arbitrary units) at a balanced splitter,
/// 1/4 (g1 n1^2 + g2 n2^2 + 2 n1 n2 - 2 n1 n2 i12).
pub fn coincidence_probability(n1: f64, n2: f64, g2_1: f64, g2_2: f64, i12: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&i12) {
        return Err(Error::invalid("i12", format!("must lie in [0, 1], got {i12}")));
    }
    if !(n1 >= 0.0 && n2 >= 0.0) {
        return Err(Error::invalid("n_bar", "must be >= 0"));
    }
    Ok(0.25 * (g2_1 * n1 * n1 + g2_2 * n2 * n2 + 2.0 * n1 * n2 - 2.0 * n1 * n2 * i12))
}

/// Visibility (wing - dip) / wing for arbitrary arm statistics and peak
/// interference factor `i_max`.
pub fn visibility(n1: f64, n2: f64, g2_1: f64, g2_2: f64, i_max: f64) -> Result<f64> {
    let wing = coincidence_probability(n1, n2, g2_1, g2_2, 0.0)?;
    if wing <= 0.0 {
        return Err(Error::invalid("n_bar", "no coincidences on the wings"));
    }
    let dip = coincidence_probability(n1, n2, g2_1, g2_2, i_max)?;
    Ok((wing - dip) / wing)
}

/// Thermal arm 1 against coherent arm 2: 2 / (2 n1/n2 + n2/n1 + 2).
pub fn visibility_two_fold(n1: f64, n2: f64) -> Result<f64> {
    if !(n1 > 0.0) {
        return Err(Error::invalid("n_bar_1", "must be > 0"));
    }
    if n2 == 0.0 {
        return Ok(0.0);
    }
    if !(n2 > 0.0) {
        return Err(Error::invalid("n_bar_2", "must be >= 0"));
    }
    Ok(2.0 / (2.0 * n1 / n2 + n2 / n1 + 2.0))
}

/// Ideal heralded single photon against coherent arm 2: 2 / (n2/n1 + 2).
pub fn visibility_three_fold(n1: f64, n2: f64) -> Result<f64> {
    if !(n1 > 0.0) {
        return Err(Error::invalid("n_bar_1", "must be > 0"));
    }
    if !(n2 >= 0.0) {
        return Err(Error::invalid("n_bar_2", "must be >= 0"));
    }
    Ok(2.0 / (n2 / n1 + 2.0))
}

/// Width of the pump after second-harmonic generation, and of the external
/// heralded signal: sqrt(2 pump^2 + herald^2).
pub fn external_bandwidth(pump_bw: f64, herald_bw: f64) -> f64 {
    (2.0 * pump_bw * pump_bw + herald_bw * herald_bw).sqrt()
}

/// Heralded output width after the Gaussian output filter.
pub fn heralded_output_bandwidth(pump_bw: f64, herald_bw: f64, filter_bw: f64) -> f64 {
    let ext = external_bandwidth(pump_bw, herald_bw);
    ext * filter_bw / (ext * ext + filter_bw * filter_bw).sqrt()
}

/// Mode-overlap factor of two Gaussian spectra of FWHM w1 and w2.
pub fn gaussian_overlap_factor(w1: f64, w2: f64) -> f64 {
    2.0 * w1 * w2 / (w1 * w1 + w2 * w2)
}

/// Spectral-mismatch factor between the filtered heralded photon and a
/// coherent source carrying the pump bandwidth.
pub fn bandwidth_correction(pump_bw: f64, herald_bw: f64, filter_bw: f64) -> Result<f64> {
    for (name, v) in [("pump_bw", pump_bw), ("herald_bw", herald_bw), ("filter_bw", filter_bw)] {
        if !(v > 0.0) {
            return Err(Error::invalid(name, "bandwidths must be > 0"));
        }
    }
    Ok(gaussian_overlap_factor(
        heralded_output_bandwidth(pump_bw, herald_bw, filter_bw),
        pump_bw,
    ))
}

/// Spectral purity estimated from the Gaussian geometry: the
/// second-harmonic width over the external heralded width.
pub fn purity_estimate(pump_bw: f64, herald_bw: f64) -> f64 {
    let sh = std::f64::consts::SQRT_2 * pump_bw;
    sh / external_bandwidth(pump_bw, herald_bw)
}

/// Visibility expected when the coherent arm is replaced by an ideal single
/// photon, from a measured three-fold visibility. The measured value fixes
/// the interference factor through the balanced three-fold bound.
pub fn single_photon_replacement_visibility(
    measured_three_fold: f64,
    bandwidth_factor: f64,
    g2_arm1: f64,
) -> Result<f64> {
    if !(bandwidth_factor > 0.0) {
        return Err(Error::invalid("bandwidth_factor", "must be > 0"));
    }
    let interference = measured_three_fold / (bandwidth_factor * visibility_three_fold(1.0, 1.0)?);
    Ok((2.0 * interference / (g2_arm1 + 2.0)).clamp(0.0, 1.0))
}

/// 1/e half-width of the squared overlap of two Gaussian wave packets of
/// intensity FWHM `bandwidth_ghz`: sqrt(2 ln 2) / (pi FWHM).
pub fn coherence_time_ps(bandwidth_ghz: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2).sqrt() / std::f64::consts::PI / bandwidth_ghz * 1000.0
}

/// Interference factor versus delay.
pub fn interference_factor(delay_ps: f64, coherence_ps: f64, i_max: f64) -> f64 {
    i_max * (-(delay_ps / coherence_ps).powi(2)).exp()
}

/// Gaussian dip model parameters: wing level, visibility, centre, width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub wing: f64,
    pub visibility: f64,
    pub center_ps: f64,
    pub width_ps: f64,
}

impl DipFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.wing * (1.0 - self.visibility * (-((x - self.center_ps) / self.width_ps).powi(2)).exp())
    }
}

/// Weighted Levenberg-Marquardt fit of a Gaussian dip.
pub fn fit_dip(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<DipFit> {
    if x.len() < 5 || x.len() != y.len() || y.len() != sigma.len() {
        return Err(Error::FitFailed("need at least five points of matching length".into()));
    }
    let n = x.len();
    let edge = (n / 5).max(1);
    let mut wings: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    wings.sort_by(f64::total_cmp);
    let wing0 = wings[wings.len() / 2].max(1e-12);
    let (imin, ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty");
    let v0 = (1.0 - ymin / wing0).clamp(0.01, 0.99);
    let half = wing0 * (1.0 - v0 / 2.0);
    let below = x.iter().zip(y).filter(|(_, v)| **v < half).count().max(1);
    let span = (x[n - 1] - x[0]).abs() / (n - 1) as f64;
    let w0 = (below as f64 * span / (2.0 * 2f64.ln().sqrt())).max(span);
    let mut p = Vector4::new(wing0, v0, x[imin], w0);

    let chi2 = |p: &Vector4<f64>| -> f64 {
        let f = DipFit {
            wing: p[0],
            visibility: p[1],
            center_ps: p[2],
            width_ps: p[3],
        };
        x.iter()
            .zip(y)
            .zip(sigma)
            .map(|((&xi, &yi), &s)| ((yi - f.eval(xi)) / s).powi(2))
            .sum()
    };
    let mut lambda = 1e-3;
    let mut current = chi2(&p);
    for _ in 0..300 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for ((&xi, &yi), &s) in x.iter().zip(y).zip(sigma) {
            let u = (xi - p[2]) / p[3];
            let g = (-u * u).exp();
            let f = p[0] * (1.0 - p[1] * g);
            let j = Vector4::new(
                1.0 - p[1] * g,
                -p[0] * g,
                -p[0] * p[1] * g * 2.0 * u / p[3],
                -p[0] * p[1] * g * 2.0 * u * u / p[3],
            ) / s;
            jtj += j * j.transpose();
            jtr += j * ((yi - f) / s);
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            if trial[3].abs() < 1e-9 {
                lambda *= 10.0;
                continue;
            }
            let c = chi2(&trial);
            if c.is_finite() && c <= current {
                let converged = (current - c) <= 1e-12 * current.max(1e-300);
                p = trial;
                current = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailed("non-finite parameters".into()));
    }
    Ok(DipFit {
        wing: p[0],
        visibility: p[1],
        center_ps: p[2],
        width_ps: p[3].abs(),
    })
}

/// Summary of the repeated fits of one fold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    /// Analytic visibility of the noiseless model.
    pub model: f64,
    /// Fit of the measured curve, clamped to [0, 1].
    pub fitted: f64,
    pub mean: f64,
    pub std: f64,
    pub width_ps: f64,
}

/// Simulated HOM scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipCurve {
    pub delays_ps: Vec<f64>,
    pub two_fold: Vec<f64>,
    pub two_fold_err: Vec<f64>,
    pub three_fold: Vec<f64>,
    pub three_fold_err: Vec<f64>,
    pub two_fold_fit: VisibilityFit,
    pub three_fold_fit: VisibilityFit,
    pub coherence_time_ps: f64,
}

impl DipCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_ps,two_fold,two_fold_err,three_fold,three_fold_err\n");
        for i in 0..self.delays_ps.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                sig6(self.delays_ps[i]),
                sig6(self.two_fold[i]),
                sig6(self.two_fold_err[i]),
                sig6(self.three_fold[i]),
                sig6(self.three_fold_err[i])
            ));
        }
        out
    }

    pub fn fit_summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "two_fold": self.two_fold_fit,
            "three_fold": self.three_fold_fit,
            "coherence_time_ps": self.coherence_time_ps,
        })
    }
}

/// Expected counts per delay with arm-1 statistics `g1`, scaled so the
/// wings sit at `wing_counts`.
fn expected_counts(config: &HomConfig, wing_counts: f64, g1: f64) -> Result<Vec<f64>> {
    let (n1, n2, g2) = (config.n_bar_1, config.n_bar_2, config.g2_arm2);
    let (tau, i_max) = (config.coherence_time_ps(), config.max_interference());
    let wing = coincidence_probability(n1, n2, g1, g2, 0.0)?;
    config
        .delay_scan_ps
        .iter()
        .map(|&d| Ok(wing_counts * coincidence_probability(n1, n2, g1, g2, interference_factor(d, tau, i_max))? / wing))
        .collect()
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng)
}

fn fit_fold(
    delays: &[f64],
    counts: &[f64],
    model: f64,
    config: &HomConfig,
    seed: u64,
    fold: u32,
) -> Result<VisibilityFit> {
    let sigma: Vec<f64> = counts.iter().map(|c| c.max(1.0).sqrt()).collect();
    let base = fit_dip(delays, counts, &sigma)?;
    let fits: Vec<DipFit> = (0..config.resamples as u32)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, stream_id(fold, i));
            let y: Vec<f64> = counts.iter().map(|&c| poisson(c, &mut rng)).collect();
            let s: Vec<f64> = y.iter().map(|c| c.max(1.0).sqrt()).collect();
            fit_dip(delays, &y, &s)
        })
        .collect::<Result<_>>()?;
    let vis: Vec<f64> = fits.iter().map(|f| f.visibility.clamp(0.0, 1.0)).collect();
    let mean = vis.iter().sum::<f64>() / vis.len() as f64;
    let var = if vis.len() > 1 {
        vis.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vis.len() - 1) as f64
    } else {
        0.0
    };
    Ok(VisibilityFit {
        model,
        fitted: base.visibility.clamp(0.0, 1.0),
        mean,
        std: var.sqrt(),
        width_ps: base.width_ps,
    })
}

/// Simulates a HOM delay scan and fits it. Two-fold counts use a thermal
/// arm 1 (g2 = 2); three-fold counts use the heralded arm.
pub fn hom_dip_scan(config: &HomConfig, seed: u64) -> Result<DipCurve> {
    config.validate()?;
    let tau = config.coherence_time_ps();
    let delays = &config.delay_scan_ps;
    let lo = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if delays.len() < 5 || -lo < 3.0 * tau || hi < 3.0 * tau {
        return Err(Error::ScanTooNarrow(format!(
            "scan [{lo}, {hi}] ps must reach beyond +-{:.1} ps (three coherence times) with at least five points",
            3.0 * tau
        )));
    }
    let i_max = config.max_interference();
    let (n1, n2) = (config.n_bar_1, config.n_bar_2);
    let two_model = visibility(n1, n2, 2.0, config.g2_arm2, i_max)?;
    let three_model = visibility(n1, n2, config.g2_arm1, config.g2_arm2, i_max)?;
    let two_expected = expected_counts(config, config.two_fold_wing_counts, 2.0)?;
    let three_expected = expected_counts(config, config.three_fold_wing_counts, config.g2_arm1)?;

    let mut rng = stream_rng(seed, stream_id(u32::MAX, 0));
    let (two, three) = if config.poisson_noise {
        (
            two_expected.iter().map(|&m| poisson(m, &mut rng)).collect::<Vec<_>>(),
            three_expected.iter().map(|&m| poisson(m, &mut rng)).collect::<Vec<_>>(),
        )
    } else {
        (two_expected.clone(), three_expected.clone())
    };
    let err = |v: &[f64]| v.iter().map(|c| c.sqrt()).collect::<Vec<_>>();
    let (two_fit, three_fit) = if config.poisson_noise {
        (
            fit_fold(delays, &two, two_model, config, seed, 1)?,
            fit_fold(delays, &three, three_model, config, seed, 2)?,
        )
    } else {
        let exact = |counts: &[f64], model: f64| -> Result<VisibilityFit> {
            let s: Vec<f64> = counts.iter().map(|c| c.max(1.0).sqrt()).collect();
            let f = fit_dip(delays, counts, &s)?;
            Ok(VisibilityFit {
                model,
                fitted: f.visibility.clamp(0.0, 1.0),
                mean: f.visibility.clamp(0.0, 1.0),
                std: 0.0,
                width_ps: f.width_ps,
            })
        };
        (exact(&two, two_model)?, exact(&three, three_model)?)
    };
    Ok(DipCurve {
        delays_ps: delays.clone(),
        two_fold_err: err(&two),
        three_fold_err: err(&three),
        two_fold: two,
        three_fold: three,
        two_fold_fit: two_fit,
        three_fold_fit: three_fit,
        coherence_time_ps: tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eq_s4_examples() {
        assert_relative_eq!(coincidence_probability(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
        let n: f64 = 3.0;
        assert_relative_eq!(coincidence_probability(n, n, 1.0, 1.0, 1.0).unwrap(), n * n / 2.0);
        let wing = coincidence_probability(1.0, 1.0, 2.0, 1.0, 0.0).unwrap();
        let dip = coincidence_probability(1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(dip / wing, 3.0 / 5.0);
        assert!(coincidence_probability(1.0, 1.0, 1.0, 1.0, 1.5).is_err());
        assert!(coincidence_probability(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn two_fold_examples() {
        assert_relative_eq!(visibility_two_fold(1.0, 1.0).unwrap(), 0.4, epsilon = 1e-15);
        let peak = visibility_two_fold(1.0, 2f64.sqrt()).unwrap();
        assert_relative_eq!(peak, 2.0 / (2.0 + 2.0 * 2f64.sqrt()), epsilon = 1e-15);
        for r in [0.5, 1.0, 1.3, 1.5, 2.0, 3.0] {
            assert!(visibility_two_fold(1.0, r).unwrap() <= peak + 1e-15);
        }
        assert_eq!(visibility_two_fold(1.0, 0.0).unwrap(), 0.0);
        assert!(visibility_two_fold(0.0, 1.0).is_err());
    }

    #[test]
    fn three_fold_examples() {
        assert_relative_eq!(visibility_three_fold(1.0, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(visibility_three_fold(1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(visibility_three_fold(1.0, 2.0).unwrap(), 0.5);
        assert!(visibility_three_fold(0.0, 1.0).is_err());
    }

    #[test]
    fn general_visibility_matches_closed_forms() {
        for (n1, n2) in [(1.0, 1.0), (0.3, 0.7), (2.0, 0.5)] {
            assert_relative_eq!(
                visibility(n1, n2, 2.0, 1.0, 1.0).unwrap(),
                visibility_two_fold(n1, n2).unwrap(),
                epsilon = 1e-14
            );
            assert_relative_eq!(
                visibility(n1, n2, 0.0, 1.0, 1.0).unwrap(),
                visibility_three_fold(n1, n2).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn bandwidth_geometry() {
        assert_relative_eq!(gaussian_overlap_factor(5.0, 5.0), 1.0);
        assert_relative_eq!(external_bandwidth(6.4, 6.5), 11.143, epsilon = 1e-3);
        let f = bandwidth_correction(6.4, 6.5, 12.5).unwrap();
        assert!((f - MEASURED_BANDWIDTH_FACTOR).abs() < 0.01, "factor {f}");
        assert!((purity_estimate(6.4, 6.5) - MEASURED_PURITY_FACTOR).abs() < 0.01);
        assert!(bandwidth_correction(0.0, 6.5, 12.5).is_err());
    }

    #[test]
    fn coherence_time_of_gaussian_overlap() {
        // |FT of a Gaussian spectrum|^2 falls to 1/e at 1 / (2 pi sigma).
        let fwhm = 6.4;
        let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let expect_ns = 1.0 / (2.0 * std::f64::consts::PI * sigma);
        assert_relative_eq!(coherence_time_ps(fwhm), expect_ns * 1000.0, max_relative = 1e-6);
    }

    #[test]
    fn fit_recovers_noiseless_dip() {
        let truth = DipFit {
            wing: 1000.0,
            visibility: 0.4,
            center_ps: 5.0,
            width_ps: 60.0,
        };
        let x: Vec<f64> = (-30..=30).map(|k| k as f64 * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let s: Vec<f64> = y.iter().map(|v| v.sqrt()).collect();
        let f = fit_dip(&x, &y, &s).unwrap();
        assert_relative_eq!(f.visibility, 0.4, epsilon = 1e-6);
        assert_relative_eq!(f.width_ps, 60.0, epsilon = 1e-4);
        assert_relative_eq!(f.center_ps, 5.0, epsilon = 1e-4);
    }

    #[test]
    fn noiseless_scan_reproduces_formulas() {
        let config = HomConfig {
            g2_arm1: 0.0,
            bandwidth_factor: 1.0,
            poisson_noise: false,
            ..Default::default()
        };
        let curve = hom_dip_scan(&config, 1).unwrap();
        assert_relative_eq!(curve.two_fold_fit.fitted, 0.4, epsilon = 1e-6);
        assert_relative_eq!(curve.three_fold_fit.fitted, 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn distinguishable_gives_zero() {
        let config = HomConfig {
            bandwidth_factor: 0.0,
            poisson_noise: false,
            ..Default::default()
        };
        let curve = hom_dip_scan(&config, 1).unwrap();
        assert!(curve.two_fold_fit.fitted.abs() < 1e-6);
        assert!(curve.three_fold_fit.fitted.abs() < 1e-6);
    }

    #[test]
    fn narrow_scan_rejected() {
        let config = HomConfig {
            delay_scan_ps: vec![-40.0, -20.0, 0.0, 20.0, 40.0],
            ..Default::default()
        };
        assert!(matches!(hom_dip_scan(&config, 1), Err(Error::ScanTooNarrow(_))));
    }

    #[test]
    fn replacement_prediction() {
        let v = single_photon_replacement_visibility(0.6099, MEASURED_BANDWIDTH_FACTOR, 0.014).unwrap();
        assert!((v - 0.943).abs() < 0.01, "v {v}");
    }

    #[test]
    fn csv_header() {
        let config = HomConfig {
            resamples: 4,
            ..Default::default()
        };
        let curve = hom_dip_scan(&config, 3).unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("delay_ps,two_fold,two_fold_err,three_fold,three_fold_err\n"));
        assert_eq!(csv.lines().count(), config.delay_scan_ps.len() + 1);
    }
}
