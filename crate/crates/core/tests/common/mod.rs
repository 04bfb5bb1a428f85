//! Independent reference calculations used by the integration and
//! acceptance tests. Nothing here calls into the Monte-Carlo kernel.

#![allow(dead_code)]

/// Thermal photon-number probabilities p(n) for n = 0..=n_max.
pub fn thermal(mu: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| mu.powi(n as i32) / (1.0 + mu).powi(n as i32 + 1))
        .collect()
}

/// Expected per-bin counts (H, C_AH(0), C_BH(0), C_ABH(0)) for one thermal
/// mode, heralded by a click detector of efficiency `eta_h` and dark
/// probability `d_h`, with the twin split 50:50 onto two detectors of
/// overall efficiency `eta_s` and dark probability `d_s`.
pub fn heralded_counts(mu: f64, eta_h: f64, d_h: f64, eta_s: f64, d_s: f64, n_max: usize) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (n, p) in thermal(mu, n_max).into_iter().enumerate() {
        let n = n as i32;
        let ph = 1.0 - (1.0 - d_h) * (1.0 - eta_h).powi(n);
        let no_a = (1.0 - d_s) * (1.0 - eta_s / 2.0).powi(n);
        let no_ab = (1.0 - d_s).powi(2) * (1.0 - eta_s).powi(n);
        let pa = 1.0 - no_a;
        let pab = 1.0 - 2.0 * no_a + no_ab;
        out[0] += p * ph;
        out[1] += p * ph * pa;
        out[2] += p * ph * pa;
        out[3] += p * ph * pab;
    }
    out
}

/// Heralded g2(0) from the enumeration, truncated at n <= 8.
pub fn heralded_g2(mu: f64, eta_h: f64, d_h: f64, eta_s: f64, d_s: f64) -> f64 {
    let [h, ah, bh, abh] = heralded_counts(mu, eta_h, d_h, eta_s, d_s, 8);
    abh * h / (ah * bh)
}

/// Unheralded g2(0) of a thermal mode from the enumeration.
pub fn thermal_g2(mu: f64, n_max: usize) -> f64 {
    let p = thermal(mu, n_max);
    let mean: f64 = p.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let fact2: f64 = p
        .iter()
        .enumerate()
        .map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p)
        .sum();
    fact2 / (mean * mean)
}

/// Expected coincidence probability per bin between one herald and its
/// output photon, with signal efficiency `eta_s` and no darks.
pub fn coincidence_probability(mu: f64, eta_h: f64, eta_s: f64) -> f64 {
    thermal(mu, 40)
        .into_iter()
        .enumerate()
        .map(|(n, p)| {
            let ph = 1.0 - (1.0 - eta_h).powi(n as i32);
            let ps = 1.0 - (1.0 - eta_s).powi(n as i32);
            let none = (1.0 - eta_h - eta_s + eta_h * eta_s).powi(n as i32);
            p * (ph + ps - 1.0 + none)
        })
        .sum()
}

/// Loss chain in dB summed by hand and converted to a transmission.
pub fn chain_transmission(losses_db: &[f64]) -> f64 {
    10f64.powf(-losses_db.iter().sum::<f64>() / 10.0)
}
