use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Scenario};
use super::{RunResult, Timing};
use crate::detection::{json_f64, Measured};
use crate::error::{Error, Result};
use crate::feedforward::trigger_survival_probability;
use crate::fmt::sig6;
use crate::hom::{
    bandwidth_correction, hom_dip_scan, purity_estimate, single_photon_replacement_visibility, visibility,
    visibility_three_fold, visibility_two_fold, HomConfig,
};
use crate::kernel::{run, ChannelSetup, KernelSetup, MuxSetup, Readout, Tally};
use crate::loss::LossBudget;
use crate::source::mean_pairs_per_bin;
use crate::spectral::{jsi_sweep, local_maxima, measure_fwhm, JsiScenario};

/// Signal offsets of the twins heralded by f_i1, f_i2 and f_i3.
pub const CHANNEL_OFFSETS: [i32; 3] = [1, 0, -1];
const CHANNEL_LABELS: [&str; 3] = ["f_i1", "f_i2", "f_i3"];

/// Bins below which constant-count scaling never goes.
const MIN_POINT_BINS: u64 = 10_000_000;

/// One curve of the rate, CAR and g2 scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Series {
    Multiplexed,
    /// Single-mode source heralded by channel index 0..3, no shifting.
    Single(usize),
}

impl Series {
    pub const ALL: [Series; 4] = [
        Series::Multiplexed,
        Series::Single(0),
        Series::Single(1),
        Series::Single(2),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Series::Multiplexed => "multiplexed",
            Series::Single(0) => "f_s+",
            Series::Single(1) => "f_s0",
            Series::Single(_) => "f_s-",
        }
    }

    fn index(self) -> u32 {
        match self {
            Series::Multiplexed => 0,
            Series::Single(k) => 1 + k as u32,
        }
    }
}

/// Kernel setup of one operating point.
pub fn point_setup(
    config: &ExperimentConfig,
    power_mw: f64,
    series: Series,
    readout: Readout,
    signal_efficiency: Option<f64>,
) -> Result<KernelSetup> {
    let budget = config.loss_budget()?;
    let source = config.source.with_power(power_mw);
    let bin_s = source.pump_mode.bin_duration_s();
    let herald = config.detector("herald")?;
    let signal = config.detector("signal")?;
    let channel = |k: usize| -> Result<ChannelSetup> {
        Ok(ChannelSetup {
            label: CHANNEL_LABELS[k].into(),
            mu: mean_pairs_per_bin(&source, k.min(source.mode_count - 1))?,
            signal_offset: CHANNEL_OFFSETS[k],
            herald_efficiency: budget.herald_efficiency(k),
            herald_dark_probability: herald.dark_probability(bin_s),
        })
    };
    let (channels, output_offset) = match series {
        Series::Multiplexed => ((0..3).map(channel).collect::<Result<Vec<_>>>()?, 0),
        Series::Single(k) if k < 3 => (vec![channel(k)?], CHANNEL_OFFSETS[k]),
        Series::Single(k) => return Err(Error::invalid("series", format!("no channel {k}"))),
    };
    let mut setup = KernelSetup {
        channels,
        signal_efficiency: signal_efficiency.unwrap_or_else(|| budget.signal_transmission()),
        signal_dark_probability: signal.dark_probability(bin_s),
        readout,
        output_offset,
        mux: None,
        bin_s,
        max_delay: config.kernel.max_delay_bins,
        batch_bins: config.kernel.batch_bins,
    };
    if series == Series::Multiplexed {
        let survival = trigger_survival_probability(setup.side_trigger_rate_hz() * 1e-3, &config.feedforward);
        setup.mux = Some(MuxSetup {
            feedforward: config.feedforward.clone(),
            survival,
        });
    }
    Ok(setup)
}

/// Bins simulated at `power_mw` for a sweep whose lowest power is `p_min`.
pub fn point_bins(config: &ExperimentConfig, power_mw: f64, p_min: f64) -> u64 {
    if !config.sweep.constant_counts {
        return config.acquisition_bins;
    }
    let scale = (p_min / power_mw).powf(config.source.power_exponent);
    ((config.acquisition_bins as f64 * scale) as u64).max(MIN_POINT_BINS.min(config.acquisition_bins))
}

fn sweep_powers(powers: &[f64], scenario: Scenario) -> Result<(&[f64], f64)> {
    if powers.is_empty() {
        return Err(Error::EmptySweep(scenario.name().into()));
    }
    Ok((powers, powers.iter().copied().fold(f64::INFINITY, f64::min)))
}

/// Result of one Monte-Carlo operating point.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub power_mw: f64,
    pub series: Series,
    pub bins: u64,
    pub tally: Tally,
    pub survival: f64,
}

fn run_points(
    config: &ExperimentConfig,
    scenario: Scenario,
    powers: &[f64],
    series: &[Series],
    readout: Readout,
    signal_efficiency: Option<f64>,
    stream_offset: u32,
) -> Result<Vec<PointResult>> {
    let (powers, p_min) = sweep_powers(powers, scenario)?;
    let jobs: Vec<(usize, f64, Series)> = powers
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| series.iter().map(move |&s| (i, p, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, p, s)| {
            let setup = point_setup(config, p, s, readout, signal_efficiency)?;
            let bins = point_bins(config, p, p_min);
            let point = stream_offset + (i as u32) * 8 + s.index();
            let tally = run(&setup, bins, config.seed, point)?;
            Ok(PointResult {
                power_mw: p,
                series: s,
                bins: tally.bins(),
                survival: setup.mux.as_ref().map_or(1.0, |m| m.survival),
                tally,
            })
        })
        .collect()
}

fn rate_khz(p: &PointResult) -> Measured {
    p.tally.hsp_rate_hz().scaled(1e-3)
}

fn measured_json(m: Measured) -> Value {
    json!({ "value": json_f64(m.value), "error": json_f64(m.error) })
}

/// Ratio of two measurements with first-order error propagation.
pub fn ratio(a: Measured, b: Measured) -> Measured {
    let value = a.value / b.value;
    let rel = ((a.error / a.value).powi(2) + (b.error / b.value).powi(2)).sqrt();
    Measured::new(value, value.abs() * rel)
}

/// Multiplexed rate over single-mode rates at one power: against the mean
/// of the three modes, and against the central mode alone.
pub fn enhancement(points: &[PointResult], power_mw: f64) -> Option<(Measured, Measured)> {
    let at = |s: Series| {
        points
            .iter()
            .find(|p| p.power_mw == power_mw && p.series == s)
            .map(rate_khz)
    };
    let mux = at(Series::Multiplexed)?;
    let singles: Vec<Measured> = (0..3).map(|k| at(Series::Single(k))).collect::<Option<_>>()?;
    let mean = Measured::new(
        singles.iter().map(|m| m.value).sum::<f64>() / 3.0,
        singles.iter().map(|m| m.error * m.error).sum::<f64>().sqrt() / 3.0,
    );
    Some((ratio(mux, mean), ratio(mux, singles[1])))
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Weighted slope of y = k x through the origin.
pub fn slope_through_origin(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<Measured> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&a, &b), &s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s).max(1e-300);
        sxx += w * a * a;
        sxy += w * a * b;
    }
    (sxx > 0.0).then(|| Measured::new(sxy / sxx, 1.0 / sxx.sqrt()))
}

/// Log-log interpolation of y at x0 from (x, y) pairs sorted by x.
pub fn loglog_interpolate(points: &[(f64, f64)], x0: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 2 {
        return None;
    }
    let k = pts
        .iter()
        .position(|p| p.0 >= x0)
        .unwrap_or(pts.len() - 1)
        .clamp(1, pts.len() - 1);
    let (a, b) = (pts[k - 1], pts[k]);
    let t = (x0.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
    Some((a.1.ln() + t * (b.1.ln() - a.1.ln())).exp())
}

fn total_bins(points: &[PointResult]) -> u64 {
    points.iter().map(|p| p.bins).sum()
}

fn point_json(p: &PointResult) -> Value {
    let mut v = p.tally.metrics().map(|m| m.to_json()).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("pump_power_mw".into(), json_f64(p.power_mw));
        m.insert("series".into(), json!(p.series.label()));
        m.insert("bins".into(), json!(p.bins));
        m.insert("heralds".into(), json!(p.tally.heralds));
        m.insert(
            "herald_rate_khz".into(),
            json_f64(p.tally.herald_rate_hz().value * 1e-3),
        );
        m.insert("trigger_survival".into(), json_f64(p.survival));
        m.insert("shifts_attempted".into(), json!(p.tally.shifts_attempted));
        m.insert("shifts_applied".into(), json!(p.tally.shifts_applied));
    }
    v
}

fn sorted(mut points: Vec<PointResult>) -> Vec<PointResult> {
    points.sort_by(|a, b| {
        a.power_mw
            .total_cmp(&b.power_mw)
            .then(a.series.index().cmp(&b.series.index()))
    });
    points
}

/// HSP rate versus pump power for the multiplexed source and each mode.
pub fn run_rate_vs_power(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let points = sorted(run_points(
        config,
        Scenario::RateVsPower,
        &config.sweep.rate_powers_mw,
        &Series::ALL,
        Readout::Single,
        None,
        0,
    )?);
    let mut csv = String::from(
        "pump_power_mw,series,hsp_rate_khz,hsp_rate_err_khz,herald_rate_khz,car,car_err,trigger_survival\n",
    );
    for p in &points {
        let r = rate_khz(p);
        let car = p.tally.car()?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            sig6(p.power_mw),
            p.series.label(),
            sig6(r.value),
            sig6(r.error),
            sig6(p.tally.herald_rate_hz().value * 1e-3),
            sig6(car.value),
            sig6(car.error),
            sig6(p.survival)
        ));
    }
    let p_min = config
        .sweep
        .rate_powers_mw
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut by_power = Vec::new();
    for &p in &config.sweep.rate_powers_mw {
        if let Some((mean, central)) = enhancement(&points, p) {
            by_power.push(json!({
                "pump_power_mw": json_f64(p),
                "vs_mean_single_mode": measured_json(mean),
                "vs_f_s0": measured_json(central),
            }));
        }
    }
    let (low_mean, low_central) =
        enhancement(&points, p_min).ok_or_else(|| Error::EmptySweep("rate_vs_power".into()))?;
    let summary = json!({
        "low_power_mw": json_f64(p_min),
        "enhancement_low_power": measured_json(low_mean),
        "enhancement_low_power_vs_f_s0": measured_json(low_central),
        "enhancement_by_power": by_power,
    });
    Ok(RunResult::new(
        config,
        Scenario::RateVsPower,
        csv,
        points.iter().map(point_json).collect(),
        summary,
        BTreeMap::new(),
        Timing::new(start, total_bins(&points)),
    ))
}

/// CAR versus HSP rate, with the low-power log-log slope.
pub fn run_car_vs_rate(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let series = [Series::Multiplexed, Series::Single(1)];
    let points = sorted(run_points(
        config,
        Scenario::CarVsRate,
        &config.sweep.car_powers_mw,
        &series,
        Readout::Single,
        None,
        1 << 20,
    )?);
    let mut csv = String::from("pump_power_mw,series,hsp_rate_khz,hsp_rate_err_khz,car,car_err,car_lower_bound\n");
    for p in &points {
        let r = rate_khz(p);
        let car = p.tally.car()?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig6(p.power_mw),
            p.series.label(),
            sig6(r.value),
            sig6(r.error),
            sig6(car.value),
            sig6(car.error),
            car.lower_bound
        ));
    }
    let mut curves = serde_json::Map::new();
    for s in series {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.series == s)
            .filter_map(|p| p.tally.car().ok().map(|c| (rate_khz(p).value, c.value)))
            .collect();
        let low: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > 0.0).collect::<Vec<_>>();
        let n_low = low.len().min(3);
        let (lx, ly): (Vec<f64>, Vec<f64>) = low[..n_low].iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
        curves.insert(
            s.label().into(),
            json!({
                "loglog_slope_low_power": linear_fit(&lx, &ly).map(|f| json_f64(f.0)),
                "car_at_4_khz": loglog_interpolate(&pts, 4.0).map(json_f64),
                "min_car": json_f64(pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)),
                "max_rate_khz": json_f64(pts.iter().map(|p| p.0).fold(0.0, f64::max)),
            }),
        );
    }
    Ok(RunResult::new(
        config,
        Scenario::CarVsRate,
        csv,
        points.iter().map(point_json).collect(),
        Value::Object(curves),
        BTreeMap::new(),
        Timing::new(start, total_bins(&points)),
    ))
}

/// Heralded g2(0) versus HSP rate, plus a full g2(tau) curve.
/// Lowest multiplexed trigger survival of the points entering the g2 slope
/// fits. Above it trigger loss makes multiplexed g2 grow faster than linear
/// in rate.
pub const PURITY_FIT_MIN_SURVIVAL: f64 = 0.99;

pub fn run_g2_vs_rate(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let series = Series::ALL;
    let powers = &config.sweep.g2_powers_mw;
    let rates = sorted(run_points(
        config,
        Scenario::G2VsRate,
        powers,
        &series,
        Readout::Single,
        None,
        2 << 20,
    )?);
    let mut hbt_powers = powers.clone();
    if !hbt_powers.contains(&config.sweep.g2_curve_power_mw) {
        hbt_powers.push(config.sweep.g2_curve_power_mw);
    }
    let hbt = sorted(run_points(
        config,
        Scenario::G2VsRate,
        &hbt_powers,
        &series,
        Readout::Hbt,
        config.sweep.hbt_signal_efficiency,
        3 << 20,
    )?);

    let mut csv = String::from("pump_power_mw,series,hsp_rate_khz,hsp_rate_err_khz,g2_zero,g2_zero_err\n");
    let mut json_points = Vec::new();
    let mut fits = serde_json::Map::new();
    let low_power = |power: f64| {
        rates
            .iter()
            .any(|p| p.series == Series::Multiplexed && p.power_mw == power && p.survival >= PURITY_FIT_MIN_SURVIVAL)
    };
    for s in series {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut es = Vec::new();
        let mut curve = Vec::new();
        for r in rates.iter().filter(|p| p.series == s) {
            let h = hbt
                .iter()
                .find(|p| p.series == s && p.power_mw == r.power_mw)
                .expect("hbt point for every rate point");
            let g2 = h.tally.g2_zero().expect("hbt readout");
            let rate = rate_khz(r);
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sig6(r.power_mw),
                s.label(),
                sig6(rate.value),
                sig6(rate.error),
                sig6(g2.value),
                sig6(g2.error)
            ));
            let mut v = point_json(r);
            if let Value::Object(m) = &mut v {
                m.insert("g2_zero".into(), json_f64(g2.value));
                m.insert("g2_zero_err".into(), json_f64(g2.error));
                m.insert("hbt_heralds".into(), json!(h.tally.heralds));
            }
            json_points.push(v);
            if g2.defined {
                curve.push((rate.value, g2.value));
                if low_power(r.power_mw) {
                    xs.push(rate.value);
                    ys.push(g2.value);
                    es.push(g2.error.max(1e-12));
                }
            }
        }
        let slope = slope_through_origin(&xs, &ys, &es);
        fits.insert(
            s.label().into(),
            json!({
                "g2_per_khz": slope.map(measured_json),
                "fit_points": xs.len(),
                "g2_at_3_1_khz": loglog_interpolate(&curve, 3.1).map(json_f64),
                "g2_at_21_2_khz": loglog_interpolate(&curve, 21.2).map(json_f64),
            }),
        );
    }
    let slope = |s: &str| -> Option<Measured> {
        let f = fits.get(s)?.get("g2_per_khz")?;
        Some(Measured::new(f.get("value")?.as_f64()?, f.get("error")?.as_f64()?))
    };
    // Single-mode reference: g2 per kHz averaged over the three channels,
    // the same reference as the rate enhancement.
    let singles: Option<Vec<Measured>> = ["f_s+", "f_s0", "f_s-"].into_iter().map(slope).collect();
    let reference = singles.map(|v| {
        let n = v.len() as f64;
        Measured::new(
            v.iter().map(|m| m.value).sum::<f64>() / n,
            v.iter().map(|m| m.error * m.error).sum::<f64>().sqrt() / n,
        )
    });
    let purity_ratio = match (slope("multiplexed"), reference) {
        (Some(a), Some(b)) => measured_json(ratio(a, b)),
        _ => Value::Null,
    };
    let purity_ratio_f_s0 = match (slope("multiplexed"), slope("f_s0")) {
        (Some(a), Some(b)) => measured_json(ratio(a, b)),
        _ => Value::Null,
    };
    fits.insert("purity_ratio_vs_f_s0".into(), purity_ratio_f_s0);
    fits.insert("purity_ratio_at_matched_rate".into(), purity_ratio);

    let mut files = BTreeMap::new();
    if let Some(p) = hbt
        .iter()
        .find(|p| p.series == Series::Multiplexed && p.power_mw == config.sweep.g2_curve_power_mw)
    {
        let mut tau = String::from("delay_bins,delay_ns,g2,g2_err\n");
        let bin_ns = p.tally.bin_s * 1e9;
        for (d, g) in p.tally.g2_curve()? {
            tau.push_str(&format!(
                "{d},{},{},{}\n",
                sig6(d as f64 * bin_ns),
                sig6(g.value),
                sig6(g.error)
            ));
        }
        files.insert("g2_tau.csv".to_string(), tau);
    }
    let all_bins = total_bins(&rates) + total_bins(&hbt);
    Ok(RunResult::new(
        config,
        Scenario::G2VsRate,
        csv,
        json_points,
        Value::Object(fits),
        files,
        Timing::new(start, all_bins),
    ))
}

/// Swept-filter JSI of the configured measurement scenario.
pub fn run_jsi_map(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let bank = config.herald_bank()?;
    let grid = jsi_sweep(&config.jsi, &bank)?;
    let islands = grid.islands(0.05);
    let signal_peaks = local_maxima(&grid.signal_marginal());
    let idler_peaks = local_maxima(&grid.idler_marginal());
    // The unfiltered ridge has no isolated maximum, so the cut goes through
    // the strongest idler row.
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k)
    };
    let pi = argmax(&grid.idler_marginal());
    let pj = argmax(&grid.intensity[pi]);
    let fwhm = measure_fwhm(&grid.cross_section(pi, pj));
    let summary = json!({
        "scenario": format!("{:?}", config.jsi.scenario),
        "islands": islands.iter().map(|&(i, j)| json!({
            "idler_thz": json_f64(grid.idler_axis[i]),
            "signal_thz": json_f64(grid.signal_axis[j]),
        })).collect::<Vec<_>>(),
        "signal_marginal_peaks_thz": signal_peaks.iter().map(|&j| json_f64(grid.signal_axis[j])).collect::<Vec<_>>(),
        "idler_marginal_peaks_thz": idler_peaks.iter().map(|&i| json_f64(grid.idler_axis[i])).collect::<Vec<_>>(),
        "cross_section_fwhm_ghz": fwhm.map(json_f64),
    });
    let mut files = BTreeMap::new();
    if config.jsi.scenario != JsiScenario::Unfiltered {
        files.insert(
            "signal_marginal.csv".to_string(),
            std::iter::once("signal_thz,intensity\n".to_string())
                .chain(
                    grid.signal_axis
                        .iter()
                        .zip(grid.signal_marginal())
                        .map(|(f, v)| format!("{f:.6},{}\n", sig6(v))),
                )
                .collect(),
        );
    }
    let cells = (grid.signal_axis.len() * grid.idler_axis.len()) as u64;
    Ok(RunResult::new(
        config,
        Scenario::JsiMap,
        grid.to_csv(),
        Vec::new(),
        summary,
        files,
        Timing::new(start, cells),
    ))
}

/// Analytic HOM predictions for a configuration.
pub fn hom_predictions(hom: &HomConfig) -> Result<Value> {
    let (n1, n2) = (hom.n_bar_1, hom.n_bar_2);
    let factor = hom.bandwidth_factor;
    let three_bound = visibility_three_fold(n1, n2)?;
    let corrected = visibility(n1, n2, hom.g2_arm1, hom.g2_arm2, factor)?;
    Ok(json!({
        "two_fold_bound": json_f64(visibility_two_fold(n1, n2)?),
        "three_fold_bound": json_f64(three_bound),
        "three_fold_bound_with_bandwidth": json_f64(factor * three_bound),
        "two_fold_expected": json_f64(visibility(n1, n2, 2.0, hom.g2_arm2, factor)?),
        "three_fold_expected": json_f64(corrected),
        "three_fold_expected_with_purity": json_f64(visibility(n1, n2, hom.g2_arm1, hom.g2_arm2, factor * hom.purity_factor)?),
        "bandwidth_factor": json_f64(factor),
        "bandwidth_factor_gaussian_model": json_f64(bandwidth_correction(
            hom.pump_bandwidth_ghz,
            hom.herald_bandwidth_ghz,
            hom.output_filter_bandwidth_ghz,
        )?),
        "purity_factor": json_f64(hom.purity_factor),
        "purity_gaussian_model": json_f64(purity_estimate(hom.pump_bandwidth_ghz, hom.herald_bandwidth_ghz)),
        "measured_three_fold": json_f64(hom.measured_three_fold),
        "single_photon_replacement": json_f64(single_photon_replacement_visibility(hom.measured_three_fold, factor, hom.g2_arm1)?),
    }))
}

/// Simulated HOM dip with repeated Gaussian fits.
pub fn run_hom_scan(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let curve = hom_dip_scan(&config.hom, config.seed)?;
    let mut summary = curve.fit_summary_json();
    if let (Value::Object(m), Value::Object(p)) = (&mut summary, hom_predictions(&config.hom)?) {
        let v3 = curve.three_fold_fit.mean;
        m.insert("predictions".into(), Value::Object(p));
        m.insert(
            "single_photon_replacement_from_fit".into(),
            json_f64(single_photon_replacement_visibility(
                v3,
                config.hom.bandwidth_factor,
                config.hom.g2_arm1,
            )?),
        );
    }
    let mut files = BTreeMap::new();
    files.insert(
        "hom_fit.json".to_string(),
        serde_json::to_string_pretty(&curve.fit_summary_json())? + "\n",
    );
    Ok(RunResult::new(
        config,
        Scenario::HomScan,
        curve.to_csv(),
        Vec::new(),
        summary,
        files,
        Timing::new(start, (config.hom.resamples * 2 * curve.delays_ps.len()) as u64),
    ))
}

/// Loss chains, transmissions and simulated Klyshko efficiencies.
pub fn run_loss_budget(config: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let budget = config.loss_budget()?;
    let mut csv = String::from("arm,component,loss_db\n");
    let mut push_chain = |arm: &str, chain: &[crate::loss::ChainEntry]| {
        for e in chain {
            csv.push_str(&format!("{arm},{},{}\n", e.component, sig6(e.loss_db)));
        }
        csv.push_str(&format!("{arm},total,{}\n", sig6(LossBudget::total_db(chain))));
    };
    push_chain("signal", &budget.signal_chain());
    for (k, label) in CHANNEL_LABELS.iter().enumerate() {
        push_chain(&format!("herald_{label}"), &budget.herald_chain(k, true));
    }

    let setup = point_setup(
        config,
        config.sweep.klyshko_power_mw,
        Series::Single(1),
        Readout::Single,
        None,
    )?;
    let tally = run(&setup, config.acquisition_bins, config.seed, 4 << 20)?;
    let c = tally.signal.at(0);
    let signal_klyshko = if tally.heralds > 0 {
        c as f64 / tally.heralds as f64
    } else {
        0.0
    };
    let herald_klyshko = if tally.signal_clicks > 0 {
        c as f64 / tally.signal_clicks as f64
    } else {
        0.0
    };
    let summary = json!({
        "signal_transmission": json_f64(budget.signal_transmission()),
        "signal_loss_db": json_f64(LossBudget::total_db(&budget.signal_chain())),
        "herald_transmission": CHANNEL_LABELS.iter().enumerate().map(|(k, _)| json_f64(budget.herald_transmission(k, false))).collect::<Vec<_>>(),
        "herald_transmission_with_excess": (0..3).map(|k| json_f64(budget.herald_transmission(k, true))).collect::<Vec<_>>(),
        "herald_bandwidth_ratio": json_f64(budget.components.herald_bandwidth_ratio),
        "klyshko_signal_arm": json_f64(signal_klyshko),
        "klyshko_herald_arm_f_i2": json_f64(herald_klyshko),
        "klyshko_pump_power_mw": json_f64(config.sweep.klyshko_power_mw),
        "coincidences": c,
        "heralds": tally.heralds,
        "signal_singles": tally.signal_clicks,
    });
    Ok(RunResult::new(
        config,
        Scenario::LossBudget,
        csv,
        Vec::new(),
        summary,
        BTreeMap::new(),
        Timing::new(start, tally.bins()),
    ))
}

/// Gain coefficient that puts the multiplexed HSP rate at `target_khz` for
/// pump power `power_mw`, by fixed-point iteration on seeded runs.
pub fn calibrate_gain(config: &ExperimentConfig, target_khz: f64, power_mw: f64, bins: u64) -> Result<f64> {
    if !(target_khz > 0.0 && power_mw > 0.0) {
        return Err(Error::invalid("calibration", "target rate and power must be > 0"));
    }
    let mut c = config.clone();
    for i in 0..6 {
        let setup = point_setup(&c, power_mw, Series::Multiplexed, Readout::Single, None)?;
        let rate = run(&setup, bins, config.seed, (5 << 20) + i)?.hsp_rate_hz().value * 1e-3;
        if rate <= 0.0 {
            return Err(Error::invalid(
                "calibration",
                "no coincidences at the calibration point",
            ));
        }
        let next = c.source.gain_coefficient * target_khz / rate;
        let done = (next / c.source.gain_coefficient - 1.0).abs() < 2e-3;
        c.source.gain_coefficient = next;
        if done {
            break;
        }
    }
    Ok(c.source.gain_coefficient)
}
