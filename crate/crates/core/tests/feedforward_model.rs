use approx::assert_relative_eq;
use hspsmux::feedforward::{
    frequency_shift_magnitude, offset_after_shift, trigger_survival_probability, FeedForwardConfig,
};
use proptest::prelude::*;

#[test]
fn survival_reference_points() {
    let cfg = FeedForwardConfig::default();
    assert_eq!(trigger_survival_probability(0.0, &cfg), 1.0);
    assert_relative_eq!(
        trigger_survival_probability(1200.0, &cfg),
        1.0 / 2f64.sqrt(),
        epsilon = 1e-12
    );
}

#[test]
fn ramp_gives_one_mode_spacing() {
    let cfg = FeedForwardConfig::default();
    assert_relative_eq!(
        frequency_shift_magnitude(cfg.ramp_up_v_per_s, cfg.v_pi_volts).unwrap(),
        12.5,
        epsilon = 1e-9
    );
    assert_relative_eq!(cfg.shift_for_offset(1).unwrap(), -12.5, epsilon = 1e-9);
    assert_relative_eq!(cfg.shift_for_offset(-1).unwrap(), 12.5, epsilon = 1e-9);
    assert_eq!(cfg.shift_for_offset(0).unwrap(), 0.0);
}

#[test]
fn shifted_side_modes_land_on_centre() {
    assert_eq!(offset_after_shift(1, -12.5), Some(0));
    assert_eq!(offset_after_shift(-1, 12.5), Some(0));
    assert_eq!(offset_after_shift(0, 0.0), Some(0));
}

#[test]
fn ideal_trigger_always_survives() {
    let cfg = FeedForwardConfig {
        ideal_trigger: true,
        ..FeedForwardConfig::default()
    };
    assert_eq!(trigger_survival_probability(1e6, &cfg), 1.0);
}

proptest! {
    #[test]
    fn survival_is_bounded_and_decreasing(r1 in 0.0f64..1e5, r2 in 0.0f64..1e5, order in 1u32..6) {
        let cfg = FeedForwardConfig { butterworth_order: order, ..FeedForwardConfig::default() };
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (p_lo, p_hi) = (trigger_survival_probability(lo, &cfg), trigger_survival_probability(hi, &cfg));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo);
    }

    #[test]
    fn success_never_exceeds_shift_efficiency(rate in 0.0f64..1e4, eff in 0.0f64..=1.0) {
        let cfg = FeedForwardConfig { shift_efficiency: eff, ..FeedForwardConfig::default() };
        prop_assert!(cfg.shift_success_probability(rate) <= eff + 1e-15);
    }
}
