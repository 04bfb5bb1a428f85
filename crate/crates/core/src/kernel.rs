//! Event-driven Monte-Carlo engine.
//!
//! Bins without any click are never visited. Herald bins are drawn with
//! geometric gaps from the exact per-bin herald probability, and the pair
//! numbers of every mode are then sampled from their distribution
//! conditioned on the herald outcome. Signal photons in bins without a
//! herald, and detector dark counts, are drawn as separate sparse processes
//! inside the coincidence windows of the heralds and only counted elsewhere.
//! The result is statistically identical to a dense bin-by-bin simulation.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{
    car_from_counts, g2_heralded, g2_point, herald_histogram, merge_sorted, split_half, triple_histogram, CarEstimate,
    ClickStream, CoincidenceHistogram, G2Point, Measured, MetricsReport,
};
use crate::error::{Error, Result};
use crate::feedforward::{decide_shift, offset_after_shift, FeedForwardConfig};
use crate::rng::{stream_id, stream_rng, SimRng};
use crate::source::Thermal;

/// One SPDC mode pair together with its heralding channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetup {
    pub label: String,
    /// Mean pairs per bin.
    pub mu: f64,
    /// Signal mode of the twin, in spacings above f_s0.
    pub signal_offset: i32,
    /// Probability that one idler photon produces a herald click.
    pub herald_efficiency: f64,
    pub herald_dark_probability: f64,
}

/// How the output photons are detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// One detector.
    Single,
    /// 50:50 splitter and two detectors, A and B.
    Hbt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuxSetup {
    pub feedforward: FeedForwardConfig,
    /// Trigger survival probability through the AWG.
    pub survival: f64,
}

/// Everything the kernel needs for one operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSetup {
    pub channels: Vec<ChannelSetup>,
    /// Probability that a photon in the output mode is detected, all losses
    /// included.
    pub signal_efficiency: f64,
    /// Dark-click probability per bin of each signal detector.
    pub signal_dark_probability: f64,
    pub readout: Readout,
    /// Mode passed by the output filter, in spacings above f_s0.
    pub output_offset: i32,
    pub mux: Option<MuxSetup>,
    pub bin_s: f64,
    /// Largest delay kept in the histograms, bins.
    pub max_delay: u64,
    /// Bins per independently seeded batch.
    pub batch_bins: u64,
}

impl KernelSetup {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("channels", "need at least one channel"));
        }
        for c in &self.channels {
            if !(c.mu >= 0.0 && c.mu.is_finite()) {
                return Err(Error::invalid("mu", format!("must be >= 0, got {}", c.mu)));
            }
            if !(0.0..=1.0).contains(&c.herald_efficiency) || !(0.0..1.0).contains(&c.herald_dark_probability) {
                return Err(Error::invalid(
                    "channel",
                    format!("`{}` has probabilities outside [0, 1)", c.label),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.signal_efficiency) || !(0.0..1.0).contains(&self.signal_dark_probability) {
            return Err(Error::invalid("signal_efficiency", "probabilities must lie in [0, 1)"));
        }
        if !(self.bin_s > 0.0) {
            return Err(Error::invalid("bin_s", "must be > 0"));
        }
        if self.batch_bins <= 4 * self.max_delay {
            return Err(Error::invalid("batch_bins", "must exceed four times max_delay"));
        }
        if let Some(m) = &self.mux {
            m.feedforward.validate()?;
            if !(0.0..=1.0).contains(&m.survival) {
                return Err(Error::invalid("survival", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Herald click probability per bin of channel `k`.
    pub fn herald_probability(&self, k: usize) -> f64 {
        let c = &self.channels[k];
        1.0 - (1.0 - c.herald_dark_probability) / (1.0 + c.mu * c.herald_efficiency)
    }

    /// Combined click rate of the side-mode heralding channels, Hz.
    pub fn side_trigger_rate_hz(&self) -> f64 {
        (0..self.channels.len())
            .filter(|&k| self.channels[k].signal_offset != 0)
            .map(|k| self.herald_probability(k))
            .sum::<f64>()
            / self.bin_s
    }
}

/// Per-channel constants derived once per batch.
struct ChannelLaw {
    q: f64,
    photon_click_given_click: f64,
    detected: Option<Thermal>,
    undetected: Option<Thermal>,
}

impl ChannelLaw {
    fn new(c: &ChannelSetup) -> Result<Self> {
        let a = c.mu * c.herald_efficiency;
        let q = 1.0 - (1.0 - c.herald_dark_probability) / (1.0 + a);
        let p_photon = a / (1.0 + a);
        let x = c.mu * (1.0 - c.herald_efficiency) / (1.0 + c.mu);
        let nu0 = x / (1.0 - x);
        Ok(Self {
            q,
            photon_click_given_click: if q > 0.0 { p_photon / q } else { 0.0 },
            detected: (a > 0.0).then(|| Thermal::new(a)).transpose()?,
            undetected: (nu0 > 0.0).then(|| Thermal::new(nu0)).transpose()?,
        })
    }

    fn nu0(&self) -> f64 {
        self.undetected.map_or(0.0, |t| t.mean())
    }

    fn sample_undetected<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.undetected.map_or(0, |t| t.sample(rng))
    }

    /// Pair number given the herald outcome of this channel.
    fn sample_pairs<R: Rng + ?Sized>(&self, clicked: bool, rng: &mut R) -> u64 {
        if clicked && rng.random::<f64>() < self.photon_click_given_click {
            let m = 1 + self.detected.map_or(0, |t| t.sample(rng));
            m + (0..=m).map(|_| self.sample_undetected(rng)).sum::<u64>()
        } else {
            self.sample_undetected(rng)
        }
    }
}

/// Bernoulli process over bins, sampled by geometric gaps.
struct Gaps {
    dist: Option<Geometric>,
    next: u64,
}

impl Gaps {
    fn new<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<Self> {
        if p <= 0.0 {
            return Ok(Self {
                dist: None,
                next: u64::MAX,
            });
        }
        let dist = Geometric::new(p.min(1.0)).map_err(|e| Error::invalid("probability", e.to_string()))?;
        let next = dist.sample(rng);
        Ok(Self { dist: Some(dist), next })
    }

    fn collect<R: Rng + ?Sized>(mut self, len: u64, rng: &mut R) -> Vec<u64> {
        let mut out = Vec::new();
        if let Some(dist) = self.dist {
            while self.next < len {
                out.push(self.next);
                self.next = self.next.saturating_add(1).saturating_add(dist.sample(rng));
            }
        }
        out
    }
}

/// Picks which of the events with probabilities `p` occur, conditioned on
/// at least one occurring.
fn sample_at_least_one<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Vec<bool> {
    let mut tail_none = vec![1.0; p.len() + 1];
    for k in (0..p.len()).rev() {
        tail_none[k] = tail_none[k + 1] * (1.0 - p[k]);
    }
    let mut any = false;
    let mut out = vec![false; p.len()];
    for k in 0..p.len() {
        let prob = if any {
            p[k]
        } else {
            let denom = 1.0 - tail_none[k];
            if denom <= 0.0 {
                0.0
            } else {
                p[k] / denom
            }
        };
        if rng.random::<f64>() < prob {
            out[k] = true;
            any = true;
        }
    }
    out
}

fn thin<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return n;
    }
    (0..n).filter(|_| rng.random::<f64>() < p).count() as u64
}

/// Coincidence histograms of the HBT readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbtTally {
    /// A at t_h + tau.
    pub c_ah: CoincidenceHistogram,
    /// B at t_h + tau.
    pub c_bh: CoincidenceHistogram,
    /// B at t_h and A at t_h + tau.
    pub c_abh: CoincidenceHistogram,
}

/// Raw counts of one operating point. Merging is integer addition, so the
/// result does not depend on how batches were scheduled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub bin_s: f64,
    pub heralds: u64,
    pub heralds_by_channel: Vec<u64>,
    pub coincidences_by_channel: Vec<u64>,
    pub signal_clicks: u64,
    /// Output clicks (any signal detector) relative to heralds.
    pub signal: CoincidenceHistogram,
    pub hbt: Option<HbtTally>,
    pub shifts_attempted: u64,
    pub shifts_applied: u64,
}

/// Smallest |delay| counted as accidental.
pub const ACCIDENTAL_MIN_OFFSET: u64 = 2;

impl Tally {
    fn empty(channels: usize, max_delay: u64, hbt: bool, bin_s: f64) -> Self {
        let z = CoincidenceHistogram::zeros(max_delay);
        Self {
            bin_s,
            heralds: 0,
            heralds_by_channel: vec![0; channels],
            coincidences_by_channel: vec![0; channels],
            signal_clicks: 0,
            signal: z.clone(),
            hbt: hbt.then(|| HbtTally {
                c_ah: z.clone(),
                c_bh: z.clone(),
                c_abh: z,
            }),
            shifts_attempted: 0,
            shifts_applied: 0,
        }
    }

    pub fn merge(&mut self, other: &Tally) -> Result<()> {
        if self.heralds_by_channel.len() != other.heralds_by_channel.len() {
            return Err(Error::TimelineMismatch("tallies with different channel counts".into()));
        }
        self.heralds += other.heralds;
        for (a, b) in self.heralds_by_channel.iter_mut().zip(&other.heralds_by_channel) {
            *a += b;
        }
        for (a, b) in self
            .coincidences_by_channel
            .iter_mut()
            .zip(&other.coincidences_by_channel)
        {
            *a += b;
        }
        self.signal_clicks += other.signal_clicks;
        self.signal.merge(&other.signal)?;
        match (&mut self.hbt, &other.hbt) {
            (Some(a), Some(b)) => {
                a.c_ah.merge(&b.c_ah)?;
                a.c_bh.merge(&b.c_bh)?;
                a.c_abh.merge(&b.c_abh)?;
            }
            (None, None) => {}
            _ => return Err(Error::TimelineMismatch("cannot merge HBT and single readouts".into())),
        }
        self.shifts_attempted += other.shifts_attempted;
        self.shifts_applied += other.shifts_applied;
        Ok(())
    }

    /// Bins in which heralds were counted.
    pub fn bins(&self) -> u64 {
        self.signal.total_bins
    }

    pub fn duration_s(&self) -> f64 {
        self.bins() as f64 * self.bin_s
    }

    /// Heralded single-photon rate: signal-herald coincidences per second.
    pub fn hsp_rate_hz(&self) -> Measured {
        Measured::rate(self.signal.at(0), self.duration_s())
    }

    pub fn herald_rate_hz(&self) -> Measured {
        Measured::rate(self.heralds, self.duration_s())
    }

    pub fn car(&self) -> Result<CarEstimate> {
        let (acc, n) = self.signal.wings(ACCIDENTAL_MIN_OFFSET);
        car_from_counts(self.signal.at(0), acc, n)
    }

    /// Heralded g2(0), if the run used the HBT readout.
    pub fn g2_zero(&self) -> Option<G2Point> {
        self.hbt
            .as_ref()
            .map(|h| g2_point(h.c_abh.at(0), h.c_ah.at(0), h.c_bh.at(0), self.heralds))
    }

    /// Heralded g2(tau) over the histogram delay axis.
    pub fn g2_curve(&self) -> Result<Vec<(i64, G2Point)>> {
        let h = self
            .hbt
            .as_ref()
            .ok_or_else(|| Error::invalid("readout", "g2 needs the HBT readout"))?;
        let curve = g2_heralded(&h.c_abh.counts, &h.c_ah.counts, h.c_bh.at(0), self.heralds)?;
        Ok(h.c_abh.delays.iter().copied().zip(curve).collect())
    }

    /// Klyshko efficiency of the output arm, C / N_herald per channel.
    pub fn klyshko_by_channel(&self) -> Vec<f64> {
        self.coincidences_by_channel
            .iter()
            .zip(&self.heralds_by_channel)
            .map(|(&c, &h)| if h > 0 { c as f64 / h as f64 } else { 0.0 })
            .collect()
    }

    pub fn metrics(&self) -> Result<MetricsReport> {
        let car = self.car()?;
        let g2 = self.g2_zero().unwrap_or(G2Point {
            value: 0.0,
            error: 0.0,
            defined: false,
        });
        Ok(MetricsReport {
            hsp_rate_khz: self.hsp_rate_hz().scaled(1e-3),
            car: Measured::new(car.value, car.error),
            car_lower_bound: car.lower_bound,
            g2_zero: Measured::new(g2.value, g2.error),
            heralding_efficiency: if self.heralds > 0 {
                self.signal.at(0) as f64 / self.heralds as f64
            } else {
                0.0
            },
        })
    }
}

/// Click streams produced by one batch, before histogramming.
#[derive(Clone, Debug)]
pub struct BatchStreams {
    pub heralds: ClickStream,
    pub heralds_by_channel: Vec<ClickStream>,
    /// Signal clicks within max_delay of a herald. With the HBT readout
    /// this is detector A.
    pub a: ClickStream,
    pub b: Option<ClickStream>,
    /// Output clicks (either detector) in guarded bins outside every herald
    /// window, counted but not placed.
    pub background_clicks: u64,
    pub shifts_attempted: u64,
    pub shifts_applied: u64,
}

/// Simulates `len` bins and returns the raw click streams.
pub fn simulate_streams<R: Rng + ?Sized>(setup: &KernelSetup, len: u64, rng: &mut R) -> Result<BatchStreams> {
    let laws = setup.channels.iter().map(ChannelLaw::new).collect::<Result<Vec<_>>>()?;
    let q: Vec<f64> = laws.iter().map(|l| l.q).collect();
    let p_herald = 1.0 - q.iter().map(|q| 1.0 - q).product::<f64>();
    let herald_bins = Gaps::new(p_herald, rng)?.collect(len, rng);

    let mut by_channel: Vec<Vec<u64>> = vec![Vec::new(); laws.len()];
    let mut photons: Vec<(u64, u64)> = Vec::new();
    let mut attempted = 0u64;
    let mut applied = 0u64;
    let mut side = Vec::with_capacity(laws.len());
    for &t in &herald_bins {
        let clicks = sample_at_least_one(&q, rng);
        side.clear();
        for (k, &c) in clicks.iter().enumerate() {
            if c {
                by_channel[k].push(t);
                let o = setup.channels[k].signal_offset;
                if o != 0 {
                    side.push(o);
                }
            }
        }
        let mut steps = Some(0);
        if let Some(mux) = &setup.mux {
            let d = decide_shift(&side, mux.survival, &mux.feedforward, rng)?;
            attempted += d.attempted as u64;
            applied += d.applied as u64;
            if d.applied {
                steps = offset_after_shift(0, d.shift_ghz);
            }
        }
        let mut n_out = 0;
        for (k, law) in laws.iter().enumerate() {
            let n = law.sample_pairs(clicks[k], rng);
            if n == 0 {
                continue;
            }
            if let Some(s) = steps {
                if setup.channels[k].signal_offset + s == setup.output_offset {
                    n_out += thin(n, setup.signal_efficiency, rng);
                }
            }
        }
        if n_out > 0 {
            photons.push((t, n_out));
        }
    }

    // Only clicks within max_delay of a herald can enter a histogram, so
    // background photons and dark counts are drawn inside those windows and
    // merely counted elsewhere.
    let windows = herald_windows(&herald_bins, setup.max_delay, len);
    let free: Vec<usize> = (0..laws.len())
        .filter(|&k| setup.channels[k].signal_offset == setup.output_offset)
        .collect();
    let thinned: Vec<Option<Thermal>> = free
        .iter()
        .map(|&k| {
            let m = laws[k].nu0() * setup.signal_efficiency;
            (m > 0.0).then(|| Thermal::new(m)).transpose()
        })
        .collect::<Result<_>>()?;
    let p_free: Vec<f64> = thinned
        .iter()
        .map(|t| t.map_or(0.0, |t| t.mean() / (1.0 + t.mean())))
        .collect();
    let p_any = 1.0 - p_free.iter().map(|p| 1.0 - p).product::<f64>();
    let free_bins = bernoulli_in(p_any, &windows, rng)?;
    let mut free_photons = Vec::with_capacity(free_bins.len());
    let mut h = 0usize;
    for t in free_bins {
        while h < herald_bins.len() && herald_bins[h] < t {
            h += 1;
        }
        let which = sample_at_least_one(&p_free, rng);
        if h < herald_bins.len() && herald_bins[h] == t {
            continue;
        }
        let mut n = 0;
        for (i, present) in which.into_iter().enumerate() {
            let extra = thinned[i].map_or(0, |d| d.sample(rng));
            n += if present { 1 + extra } else { extra };
        }
        free_photons.push((t, n));
    }
    photons = merge_photons(photons, free_photons);

    let detectors = match setup.readout {
        Readout::Single => 1,
        Readout::Hbt => 2,
    };
    let d = setup.max_delay;
    let guarded = d..len - d;
    let outside = (guarded.end - guarded.start) - overlap(&windows, &guarded);
    let p_background = 1.0 - (1.0 - p_any) * (1.0 - setup.signal_dark_probability).powi(detectors);
    let background_clicks = if outside > 0 && p_background > 0.0 {
        Binomial::new(outside, p_background.min(1.0))
            .map_err(|e| Error::invalid("probability", e.to_string()))?
            .sample(rng)
    } else {
        0
    };

    let (a, b) = match setup.readout {
        Readout::Single => {
            let bins: Vec<u64> = photons.iter().map(|p| p.0).collect();
            let dark = bernoulli_in(setup.signal_dark_probability, &windows, rng)?;
            (merge_sorted(&bins, &dark), None)
        }
        Readout::Hbt => {
            let mut a_bins = Vec::new();
            let mut b_bins = Vec::new();
            for &(t, n) in &photons {
                let to_a = split_half(n, rng);
                if to_a > 0 {
                    a_bins.push(t);
                }
                if n - to_a > 0 {
                    b_bins.push(t);
                }
            }
            let dark_a = bernoulli_in(setup.signal_dark_probability, &windows, rng)?;
            let dark_b = bernoulli_in(setup.signal_dark_probability, &windows, rng)?;
            (merge_sorted(&a_bins, &dark_a), Some(merge_sorted(&b_bins, &dark_b)))
        }
    };

    Ok(BatchStreams {
        heralds: ClickStream {
            label: "herald".into(),
            bins: herald_bins,
        },
        heralds_by_channel: by_channel
            .into_iter()
            .zip(&setup.channels)
            .map(|(bins, c)| ClickStream {
                label: c.label.clone(),
                bins,
            })
            .collect(),
        a: ClickStream {
            label: "signal_a".into(),
            bins: a,
        },
        b: b.map(|bins| ClickStream {
            label: "signal_b".into(),
            bins,
        }),
        background_clicks,
        shifts_attempted: attempted,
        shifts_applied: applied,
    })
}

/// Merged intervals [t - max_delay, t + max_delay] around every herald,
/// clipped to [0, len).
fn herald_windows(heralds: &[u64], max_delay: u64, len: u64) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for &t in heralds {
        let lo = t.saturating_sub(max_delay);
        let hi = (t + max_delay + 1).min(len);
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn overlap(windows: &[(u64, u64)], range: &std::ops::Range<u64>) -> u64 {
    windows
        .iter()
        .map(|&(a, b)| b.min(range.end).saturating_sub(a.max(range.start)))
        .sum()
}

/// Bernoulli(p) events restricted to the given disjoint sorted intervals.
fn bernoulli_in<R: Rng + ?Sized>(p: f64, intervals: &[(u64, u64)], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    if p <= 0.0 {
        return Ok(out);
    }
    let dist = Geometric::new(p.min(1.0)).map_err(|e| Error::invalid("probability", e.to_string()))?;
    for &(a, b) in intervals {
        let mut t = a.saturating_add(dist.sample(rng));
        while t < b {
            out.push(t);
            t = t.saturating_add(1).saturating_add(dist.sample(rng));
        }
    }
    Ok(out)
}

fn merge_photons(a: Vec<(u64, u64)>, b: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

fn count_in(stream: &ClickStream, range: &std::ops::Range<u64>) -> u64 {
    stream.bins.iter().filter(|t| range.contains(t)).count() as u64
}

/// Simulates one batch and histograms it. Heralds within `max_delay` of the
/// batch edges are discarded so every kept herald sees the full delay range.
pub fn simulate_batch<R: Rng + ?Sized>(setup: &KernelSetup, len: u64, rng: &mut R) -> Result<Tally> {
    let s = simulate_streams(setup, len, rng)?;
    let d = setup.max_delay;
    let range = d..len - d;
    let mut tally = Tally::empty(setup.channels.len(), d, setup.readout == Readout::Hbt, setup.bin_s);
    tally.heralds = count_in(&s.heralds, &range);
    let output = match &s.b {
        Some(b) => s.a.union(b, "signal"),
        None => s.a.clone(),
    };
    tally.signal_clicks = count_in(&output, &range) + s.background_clicks;
    tally.signal = herald_histogram(&s.heralds, &output, d, range.clone());
    for (k, ch) in s.heralds_by_channel.iter().enumerate() {
        tally.heralds_by_channel[k] = count_in(ch, &range);
        tally.coincidences_by_channel[k] = herald_histogram(ch, &output, 0, range.clone()).at(0);
    }
    if let (Some(h), Some(b)) = (&mut tally.hbt, &s.b) {
        h.c_ah = herald_histogram(&s.heralds, &s.a, d, range.clone());
        h.c_bh = herald_histogram(&s.heralds, b, d, range.clone());
        h.c_abh = triple_histogram(&s.heralds, &s.a, b, d, range.clone());
    }
    tally.shifts_attempted = s.shifts_attempted;
    tally.shifts_applied = s.shifts_applied;
    Ok(tally)
}

/// Runs `total_bins` (rounded up to whole batches) for sweep point `point`.
/// Batches use independent seeded streams and run in parallel.
pub fn run(setup: &KernelSetup, total_bins: u64, seed: u64, point: u32) -> Result<Tally> {
    setup.validate()?;
    if total_bins == 0 {
        return Err(Error::invalid("acquisition_bins", "must be > 0"));
    }
    let len = setup.batch_bins.min(total_bins.max(4 * setup.max_delay + 1));
    let batches = total_bins.div_ceil(len);
    if batches > u32::MAX as u64 {
        return Err(Error::invalid("acquisition_bins", "too many batches"));
    }
    let tallies: Vec<Tally> = (0..batches as u32)
        .into_par_iter()
        .map(|b| {
            let mut rng: SimRng = stream_rng(seed, stream_id(point, b));
            simulate_batch(setup, len, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut iter = tallies.into_iter();
    let mut total = iter.next().expect("at least one batch");
    for t in iter {
        total.merge(&t)?;
    }
    Ok(total)
}
