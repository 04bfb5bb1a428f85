use hspsmux::experiment::{run_experiment, ExperimentConfig, Scenario};
use hspsmux::Error;

fn small(scenario: Scenario) -> ExperimentConfig {
    let mut c = ExperimentConfig::paper2021().unwrap();
    c.run_id = format!("small_{}", scenario.name());
    c.scenario = scenario;
    c.acquisition_bins = 2_000_000_000;
    c.hom.resamples = 50;
    c
}

#[test]
fn every_scenario_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    for s in Scenario::ALL {
        let r = run_experiment(&small(s)).unwrap();
        let out = r.write(dir.path()).unwrap();
        for name in [
            format!("{}.csv", s.name()),
            "metrics.json".into(),
            "config.echo".into(),
            "timing.json".into(),
        ] {
            assert!(out.join(&name).is_file(), "{s}: missing {name}");
        }
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
        assert_eq!(metrics["scenario"], s.name());
        let echo = ExperimentConfig::from_toml(&std::fs::read_to_string(out.join("config.echo")).unwrap()).unwrap();
        assert_eq!(echo, small(s));
    }
}

#[test]
fn fixed_seed_is_reproducible() {
    let c = small(Scenario::CarVsRate);
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(a.csv, b.csv);
    assert_eq!(a.metrics_json(), b.metrics_json());
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(run_experiment(&other).unwrap().csv, a.csv);
}

#[test]
fn g2_wings_approach_one() {
    let r = run_experiment(&small(Scenario::G2VsRate)).unwrap();
    let tau = &r.files["g2_tau.csv"];
    let wings: Vec<f64> = tau
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse::<i64>().ok()?.abs() >= 100).then(|| f[2].parse::<f64>().ok())?
        })
        .collect();
    let mean = wings.iter().sum::<f64>() / wings.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "wing mean {mean}");
}

#[test]
fn enhancement_falls_as_triggers_are_lost() {
    let mut c = small(Scenario::RateVsPower);
    c.sweep.rate_powers_mw = vec![8.0, 24.0, 40.0];
    let r = run_experiment(&c).unwrap();
    let e: Vec<f64> = r.summary["enhancement_by_power"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["vs_mean_single_mode"]["value"].as_f64().unwrap())
        .collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn survival_column_tracks_power() {
    let r = run_experiment(&small(Scenario::RateVsPower)).unwrap();
    let survival: Vec<f64> = r
        .points
        .iter()
        .filter(|p| p["series"] == "multiplexed")
        .map(|p| p["trigger_survival"].as_f64().unwrap())
        .collect();
    assert!(survival.windows(2).all(|w| w[1] <= w[0]));
    assert!(survival[0] > 0.999);
}

#[test]
fn empty_sweep_is_an_error() {
    let mut c = small(Scenario::CarVsRate);
    c.sweep.car_powers_mw.clear();
    assert!(matches!(run_experiment(&c), Err(Error::EmptySweep(_))));
}
