//! Threshold detectors, time-tag coincidence logic and the estimators built
//! on top of it: HSP rate, CAR, heralded g2 and Klyshko efficiency.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::loss::db_to_transmission;

/// A non-number-resolving click detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub label: String,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
}

impl DetectorConfig {
    pub fn new(label: impl Into<String>, efficiency: f64, dark_count_rate_hz: f64) -> Result<Self> {
        let d = Self {
            label: label.into(),
            efficiency,
            dark_count_rate_hz,
        };
        d.validate()?;
        Ok(d)
    }

    /// SNSPD whose efficiency is expressed as an insertion loss in dB.
    pub fn snspd(label: impl Into<String>, loss_db: f64, dark_count_rate_hz: f64) -> Result<Self> {
        Self::new(label, db_to_transmission(loss_db), dark_count_rate_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(
                "efficiency",
                format!("must lie in [0, 1], got {}", self.efficiency),
            ));
        }
        if !(self.dark_count_rate_hz >= 0.0 && self.dark_count_rate_hz.is_finite()) {
            return Err(Error::invalid("dark_count_rate_hz", "must be >= 0"));
        }
        Ok(())
    }

    /// Probability of a dark click in one bin of `bin_s` seconds.
    pub fn dark_probability(&self, bin_s: f64) -> f64 {
        dark_probability(self.dark_count_rate_hz, bin_s)
    }
}

pub fn dark_probability(rate_hz: f64, bin_s: f64) -> f64 {
    -(-rate_hz * bin_s).exp_m1()
}

/// Bins in which a detector clicked, strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickStream {
    pub label: String,
    pub bins: Vec<u64>,
}

impl ClickStream {
    pub fn new(label: impl Into<String>, bins: Vec<u64>) -> Result<Self> {
        if let Some(w) = bins.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::TimelineMismatch(format!(
                "click bins must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            label: label.into(),
            bins,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn contains(&self, bin: u64) -> bool {
        self.bins.binary_search(&bin).is_ok()
    }

    /// Clicks of either stream, as a detector OR.
    pub fn union(&self, other: &ClickStream, label: impl Into<String>) -> ClickStream {
        ClickStream {
            label: label.into(),
            bins: merge_sorted(&self.bins, &other.bins),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_index,count\n");
        for b in &self.bins {
            out.push_str(&format!("{b},1\n"));
        }
        out
    }
}

/// Sorted union of two strictly increasing sequences.
pub fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Applies a click detector to a dense vector of per-bin photon numbers.
/// Click probability is 1 - (1 - eta)^n (1 - p_dark).
pub fn detect<R: Rng + ?Sized>(
    counts: &[u64],
    config: &DetectorConfig,
    bin_s: f64,
    rng: &mut R,
) -> Result<ClickStream> {
    config.validate()?;
    let p_dark = config.dark_probability(bin_s);
    let miss = 1.0 - config.efficiency;
    let mut bins = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        let p_click = 1.0 - miss.powi(n.min(i32::MAX as u64) as i32) * (1.0 - p_dark);
        if p_click > 0.0 && rng.random::<f64>() < p_click {
            bins.push(i as u64);
        }
    }
    Ok(ClickStream {
        label: config.label.clone(),
        bins,
    })
}

/// Routes each photon to output A or B with probability 1/2.
pub fn hbt_split<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> (Vec<u64>, Vec<u64>) {
    let mut a = Vec::with_capacity(counts.len());
    let mut b = Vec::with_capacity(counts.len());
    for &n in counts {
        let to_a = split_half(n, rng);
        a.push(to_a);
        b.push(n - to_a);
    }
    (a, b)
}

pub(crate) fn split_half<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    match n {
        0 => 0,
        1 => rng.random::<bool>() as u64,
        _ if n <= 64 => (rng.random::<u64>() & (u64::MAX >> (64 - n))).count_ones() as u64,
        _ => Binomial::new(n, 0.5).expect("valid binomial").sample(rng),
    }
}

/// Pairs (t_a, t_b) with |t_b - t_a - delay| <= window / 2.
pub fn coincidence_count(a: &ClickStream, b: &ClickStream, delay: i64, window: u64) -> u64 {
    let half = window as i64 / 2;
    let mut count = 0u64;
    let mut start = 0usize;
    for &ta in &a.bins {
        let lo = ta as i64 + delay - half;
        let hi = ta as i64 + delay + half;
        while start < b.bins.len() && (b.bins[start] as i64) < lo {
            start += 1;
        }
        let mut j = start;
        while j < b.bins.len() && (b.bins[j] as i64) <= hi {
            count += 1;
            j += 1;
        }
    }
    count
}

/// Counts versus delay, delay axis in bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub delays: Vec<i64>,
    pub counts: Vec<u64>,
    pub total_bins: u64,
}

impl CoincidenceHistogram {
    pub fn zeros(max_delay: u64) -> Self {
        let d = max_delay as i64;
        Self {
            delays: (-d..=d).collect(),
            counts: vec![0; 2 * max_delay as usize + 1],
            total_bins: 0,
        }
    }

    pub fn max_delay(&self) -> u64 {
        (self.delays.len() / 2) as u64
    }

    pub fn at(&self, delay: i64) -> u64 {
        let idx = delay + self.max_delay() as i64;
        if idx < 0 {
            return 0;
        }
        self.counts.get(idx as usize).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.delays != other.delays {
            return Err(Error::TimelineMismatch("histograms with different delay axes".into()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total_bins += other.total_bins;
        Ok(())
    }

    /// Counts at every delay with |delay| >= `min_offset`.
    pub fn wings(&self, min_offset: u64) -> (u64, usize) {
        let mut sum = 0;
        let mut n = 0;
        for (d, c) in self.delays.iter().zip(&self.counts) {
            if d.unsigned_abs() >= min_offset {
                sum += c;
                n += 1;
            }
        }
        (sum, n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay,count\n");
        for (d, c) in self.delays.iter().zip(&self.counts) {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}

/// Histogram of `other` clicks relative to heralds at `t_h`, for delays in
/// [-max_delay, max_delay]. Only heralds inside `range` are used, so a
/// caller can keep a guard band at segment edges.
pub fn herald_histogram(
    herald: &ClickStream,
    other: &ClickStream,
    max_delay: u64,
    range: Range<u64>,
) -> CoincidenceHistogram {
    let mut hist = CoincidenceHistogram::zeros(max_delay);
    hist.total_bins = range.end.saturating_sub(range.start);
    let mut start = 0usize;
    for &th in herald.bins.iter().filter(|t| range.contains(t)) {
        let lo = th.saturating_sub(max_delay);
        while start < other.bins.len() && other.bins[start] < lo {
            start += 1;
        }
        let mut j = start;
        while j < other.bins.len() && other.bins[j] <= th + max_delay {
            let idx = (other.bins[j] as i64 - th as i64 + max_delay as i64) as usize;
            hist.counts[idx] += 1;
            j += 1;
        }
    }
    hist
}

/// Three-fold histogram: heralds at t_h with a B click at t_h and an A
/// click at t_h + tau.
pub fn triple_histogram(
    herald: &ClickStream,
    a: &ClickStream,
    b: &ClickStream,
    max_delay: u64,
    range: Range<u64>,
) -> CoincidenceHistogram {
    let mut hb_bins = Vec::new();
    let mut j = 0usize;
    for &th in herald.bins.iter().filter(|t| range.contains(t)) {
        while j < b.bins.len() && b.bins[j] < th {
            j += 1;
        }
        if j < b.bins.len() && b.bins[j] == th {
            hb_bins.push(th);
        }
    }
    let hb = ClickStream {
        label: "herald_and_b".into(),
        bins: hb_bins,
    };
    herald_histogram(&hb, a, max_delay, range)
}

/// A value with its one-sigma error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

impl Measured {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    /// Rate and Poisson error from a raw count over `duration_s`.
    pub fn rate(count: u64, duration_s: f64) -> Self {
        Self {
            value: count as f64 / duration_s,
            error: (count as f64).sqrt() / duration_s,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            value: self.value * k,
            error: self.error * k.abs(),
        }
    }
}

/// CAR estimate. `lower_bound` is set when no accidentals were observed and
/// the value assumes a single accidental count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarEstimate {
    pub value: f64,
    pub error: f64,
    pub lower_bound: bool,
}

/// CAR from a true-delay count and the total over `accidental_windows`
/// accidental delays.
pub fn car_from_counts(true_count: u64, accidental_total: u64, accidental_windows: usize) -> Result<CarEstimate> {
    if accidental_windows == 0 {
        return Err(Error::invalid(
            "accidental_windows",
            "need at least one accidental delay",
        ));
    }
    let n = accidental_windows as f64;
    let c = true_count as f64;
    if accidental_total == 0 {
        return Ok(CarEstimate {
            value: c * n,
            error: c.sqrt() * n,
            lower_bound: true,
        });
    }
    let acc = accidental_total as f64 / n;
    let value = c / acc;
    let rel = if true_count == 0 {
        1.0 / acc
    } else {
        (1.0 / c + 1.0 / accidental_total as f64).sqrt()
    };
    Ok(CarEstimate {
        value,
        error: if true_count == 0 { rel } else { value * rel },
        lower_bound: false,
    })
}

/// CAR between a signal and a herald stream: coincidences at `true_delay`
/// over the mean count at the `accidental_delays`.
pub fn car(
    signal: &ClickStream,
    herald: &ClickStream,
    true_delay: i64,
    accidental_delays: &[i64],
    window: u64,
) -> Result<CarEstimate> {
    let guard = window as i64 / 2 + 1;
    if accidental_delays.iter().any(|d| (d - true_delay).abs() < guard) {
        return Err(Error::invalid(
            "accidental_delay",
            "must sit at least one bin beyond the coincidence peak",
        ));
    }
    let c = coincidence_count(herald, signal, true_delay, window);
    let acc: u64 = accidental_delays
        .iter()
        .map(|&d| coincidence_count(herald, signal, d, window))
        .sum();
    car_from_counts(c, acc, accidental_delays.len())
}

/// One point of a heralded g2 curve. `defined` is false when C_AH(tau) is
/// zero and the ratio cannot be formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Point {
    pub value: f64,
    pub error: f64,
    pub defined: bool,
}

/// Heralded g2(tau) = C_ABH(tau) H / (C_AH(tau) C_BH(0)), pointwise.
pub fn g2_heralded(c_abh: &[u64], c_ah: &[u64], c_bh0: u64, heralds: u64) -> Result<Vec<G2Point>> {
    if heralds == 0 {
        return Err(Error::invalid("heralds", "herald count must be > 0"));
    }
    if c_bh0 == 0 {
        return Err(Error::invalid("c_bh", "C_BH(0) must be > 0"));
    }
    if c_abh.len() != c_ah.len() {
        return Err(Error::TimelineMismatch("C_ABH and C_AH have different lengths".into()));
    }
    Ok(c_abh
        .iter()
        .zip(c_ah)
        .map(|(&abh, &ah)| g2_point(abh, ah, c_bh0, heralds))
        .collect())
}

pub fn g2_point(c_abh: u64, c_ah: u64, c_bh0: u64, heralds: u64) -> G2Point {
    if c_ah == 0 || c_bh0 == 0 || heralds == 0 {
        return G2Point {
            value: 0.0,
            error: 0.0,
            defined: false,
        };
    }
    let norm = heralds as f64 / (c_ah as f64 * c_bh0 as f64);
    let value = c_abh as f64 * norm;
    let error = if c_abh == 0 {
        norm
    } else {
        value * (1.0 / c_abh as f64 + 1.0 / c_ah as f64 + 1.0 / c_bh0 as f64 + 1.0 / heralds as f64).sqrt()
    };
    G2Point {
        value,
        error,
        defined: true,
    }
}

/// Klyshko collection efficiency, coincidences over herald singles.
pub fn klyshko_efficiency(coincidences: u64, herald_singles: u64) -> Result<f64> {
    if herald_singles == 0 {
        return Err(Error::invalid("herald_singles", "must be > 0"));
    }
    Ok(coincidences as f64 / herald_singles as f64)
}

/// Per-point summary of a Monte-Carlo run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hsp_rate_khz: Measured,
    pub car: Measured,
    pub car_lower_bound: bool,
    pub g2_zero: Measured,
    pub heralding_efficiency: f64,
}

impl MetricsReport {
    /// Flat JSON object: `name`, `name_err` pairs.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Measured| {
            m.insert(k.to_string(), json_f64(v.value));
            m.insert(format!("{k}_err"), json_f64(v.error));
        };
        put("hsp_rate_khz", self.hsp_rate_khz);
        put("car", self.car);
        put("g2_zero", self.g2_zero);
        m.insert("car_lower_bound".into(), Value::Bool(self.car_lower_bound));
        m.insert("heralding_efficiency".into(), json_f64(self.heralding_efficiency));
        Value::Object(m)
    }
}

/// JSON number rounded to six significant digits, null if not finite.
pub fn json_f64(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = sig6(x).parse().unwrap_or(x);
    serde_json::Number::from_f64(rounded)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn cs(bins: &[u64]) -> ClickStream {
        ClickStream::new("t", bins.to_vec()).unwrap()
    }

    #[test]
    fn click_stream_must_increase() {
        assert!(ClickStream::new("x", vec![1, 1]).is_err());
        assert!(ClickStream::new("x", vec![3, 2]).is_err());
        assert!(ClickStream::new("x", vec![1, 2, 9]).is_ok());
    }

    #[test]
    fn detect_trivial_cases() {
        let mut rng = stream_rng(1, 0);
        let none = DetectorConfig::new("d", 0.7, 0.0).unwrap();
        assert!(detect(&[0; 1000], &none, 1e-9, &mut rng).unwrap().is_empty());
        let perfect = DetectorConfig::new("d", 1.0, 0.0).unwrap();
        assert_eq!(detect(&[1; 1000], &perfect, 1e-9, &mut rng).unwrap().len(), 1000);
    }

    #[test]
    fn detect_two_photons_half_efficiency() {
        let mut rng = stream_rng(2, 0);
        let d = DetectorConfig::new("d", 0.5, 0.0).unwrap();
        let n = 100_000;
        let clicks = detect(&vec![2; n], &d, 1e-9, &mut rng).unwrap().len() as f64;
        let p = 1.0 - 0.5f64.powi(2);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((clicks / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn invalid_detector() {
        assert!(DetectorConfig::new("d", 1.2, 0.0).is_err());
        assert!(DetectorConfig::new("d", 0.5, -1.0).is_err());
    }

    #[test]
    fn coincidence_basics() {
        let a = cs(&[1, 5, 9, 20]);
        assert_eq!(coincidence_count(&a, &a, 0, 1), 4);
        let b = cs(&[100, 200]);
        assert_eq!(coincidence_count(&a, &b, 0, 1), 0);
        assert_eq!(coincidence_count(&a, &cs(&[3, 7]), 2, 1), 2);
        assert_eq!(coincidence_count(&a, &cs(&[2, 6]), 0, 2), 2);
    }

    #[test]
    fn car_counts() {
        let est = car_from_counts(2000, 10, 10).unwrap();
        assert!((est.value - 2000.0).abs() < 1e-9);
        assert!(!est.lower_bound);
        let lb = car_from_counts(50, 0, 100).unwrap();
        assert!(lb.lower_bound);
        assert_eq!(lb.value, 5000.0);
    }

    #[test]
    fn car_rejects_peak_delay() {
        let a = cs(&[1, 2, 3]);
        assert!(car(&a, &a, 0, &[0], 1).is_err());
        assert!(car(&a, &a, 0, &[1], 1).is_ok());
    }

    #[test]
    fn g2_arithmetic() {
        let g = g2_heralded(&[14, 0], &[100_000, 100_000], 100_000, 10_000_000).unwrap();
        assert!((g[0].value - 0.014).abs() < 1e-12);
        assert_eq!(g[1].value, 0.0);
        assert!(g[1].defined);
        let undefined = g2_heralded(&[3], &[0], 5, 10).unwrap();
        assert!(!undefined[0].defined);
        assert!(g2_heralded(&[1], &[1], 0, 1).is_err());
        assert!(g2_heralded(&[1], &[1], 1, 0).is_err());
    }

    #[test]
    fn klyshko_trivial() {
        assert_eq!(klyshko_efficiency(500, 500).unwrap(), 1.0);
        assert!(klyshko_efficiency(1, 0).is_err());
    }

    #[test]
    fn hbt_split_one_and_two_photons() {
        let mut rng = stream_rng(3, 0);
        let (a, b) = hbt_split(&vec![1; 10_000], &mut rng);
        assert!(a.iter().zip(&b).all(|(x, y)| x + y == 1 && x * y == 0));
        let n = 100_000;
        let (a, b) = hbt_split(&vec![2; n], &mut rng);
        let both = a.iter().zip(&b).filter(|(x, y)| **x > 0 && **y > 0).count() as f64 / n as f64;
        assert!((both - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn split_half_large_n_conserves() {
        let mut rng = stream_rng(4, 0);
        for n in [0u64, 3, 64, 65, 1000] {
            let a = split_half(n, &mut rng);
            assert!(a <= n);
        }
    }

    #[test]
    fn histograms() {
        let h = cs(&[10, 50]);
        let s = cs(&[10, 12, 48, 51]);
        let hist = herald_histogram(&h, &s, 3, 0..100);
        assert_eq!(hist.at(0), 1);
        assert_eq!(hist.at(2), 1);
        assert_eq!(hist.at(-2), 1);
        assert_eq!(hist.at(1), 1);
        let guarded = herald_histogram(&h, &s, 3, 20..100);
        assert_eq!(guarded.at(0), 0);
        let mut merged = hist.clone();
        merged.merge(&guarded).unwrap();
        assert_eq!(merged.at(1), 2);
        assert!(merged.merge(&CoincidenceHistogram::zeros(2)).is_err());

        let a = cs(&[10, 11, 50]);
        let b = cs(&[10]);
        let t = triple_histogram(&h, &a, &b, 2, 0..100);
        assert_eq!(t.at(0), 1);
        assert_eq!(t.at(1), 1);
        assert_eq!(t.counts.iter().sum::<u64>(), 2);
    }

    #[test]
    fn metrics_json_is_flat() {
        let m = MetricsReport {
            hsp_rate_khz: Measured::new(23.6, 0.1),
            ..Default::default()
        };
        let v = m.to_json();
        assert_eq!(v["hsp_rate_khz"].as_f64(), Some(23.6));
        assert_eq!(v["hsp_rate_khz_err"].as_f64(), Some(0.1));
        assert!(v.get("car_err").is_some());
    }
}
