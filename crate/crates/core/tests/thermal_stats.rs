mod common;

use hspsmux::rng::stream_rng;
use hspsmux::source::{photon_number_distribution, Thermal};
use proptest::prelude::*;

#[test]
fn unheralded_g2_is_two() {
    let t = Thermal::new(1.0).unwrap();
    let mut rng = stream_rng(3, 0);
    let n = 4_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let k = t.sample(&mut rng) as f64;
        s1 += k;
        s2 += k * (k - 1.0);
    }
    let mean = s1 / n as f64;
    let g2 = (s2 / n as f64) / (mean * mean);
    assert!((g2 - 2.0).abs() < 0.02, "g2 {g2}");
    assert!((common::thermal_g2(1.0, 200) - 2.0).abs() < 1e-6);
}

#[test]
fn sampled_distribution_matches_oracle() {
    let mu = 0.3;
    let t = Thermal::new(mu).unwrap();
    let mut rng = stream_rng(4, 0);
    let n = 1_000_000;
    let mut hist = [0u64; 4];
    for _ in 0..n {
        let k = t.sample(&mut rng) as usize;
        if k < hist.len() {
            hist[k] += 1;
        }
    }
    for (k, p) in common::thermal(mu, 3).into_iter().enumerate() {
        let expect = p * n as f64;
        assert!((hist[k] as f64 - expect).abs() < 5.0 * expect.sqrt(), "n={k}");
    }
}

proptest! {
    #[test]
    fn number_distribution_matches_oracle(mu in 0.0f64..5.0) {
        let d = photon_number_distribution(mu, 12).unwrap();
        for (a, b) in d.probabilities.iter().zip(common::thermal(mu, 12)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let total: f64 = d.probabilities.iter().sum::<f64>() + d.tail;
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
