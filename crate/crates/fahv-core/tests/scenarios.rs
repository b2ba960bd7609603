use std::fs;
use std::path::PathBuf;

use fahv_core::config::{parse_config, parse_config_with_overrides, ScenarioConfig, Variant};
use fahv_core::error::Error;
use fahv_core::sim::{run_scenario, Simulation};
use proptest::prelude::*;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    let text = fs::read_to_string(scenario_dir().join(name)).unwrap();
    parse_config(&text).unwrap()
}

#[test]
fn shipped_scenarios_parse_and_validate() {
    let mut n = 0;
    for entry in fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&fs::read_to_string(&path).unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
    assert_eq!(load("nominal.toml"), ScenarioConfig::default());
}

#[test]
fn written_config_reloads_identically() {
    let cfg = load("retuned_q_observer.toml");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    fs::write(&path, cfg.to_text()).unwrap();
    let back = parse_config(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(parse_config("[initial]\nh_err = 1.0\n").is_err());
    assert!(parse_config_with_overrides("", &["gains.nope=1".into()]).is_err());
    assert!(parse_config_with_overrides("", &["dt=0".into()]).is_err());
}

#[test]
fn retuned_scenario_keeps_every_bound() {
    let out = run_scenario(&load("retuned_q_observer.toml")).unwrap();
    assert!(out.succeeded(), "{:?}", out.failure);
    let m = out.metrics.unwrap();
    assert!((m.t_end - 100.0).abs() < 1e-9);
    for (ch, xi_b) in [(&m.velocity, 0.2), (&m.altitude, 0.6)] {
        assert_eq!(ch.transformed_violations, 0);
        assert_eq!(ch.violations_after_tp, 0);
        assert_eq!(ch.accuracy_violations, 0);
        assert_eq!(ch.post_fault_violations, 0);
        assert!(ch.max_abs_e_after_ts <= xi_b);
    }
    assert_eq!(m.breach_steps, [0, 0]);
}

#[test]
fn strict_baseline_reports_breach() {
    let mut cfg = ScenarioConfig::default();
    cfg.variant = Variant::Baseline;
    cfg.strict = true;
    cfg.duration = 40.0;
    cfg.initial.h_error = 400.0;
    let out = Simulation::new(&cfg).unwrap().run();
    assert!(
        matches!(out.failure, Some(Error::BoundBreach { .. })),
        "{:?}",
        out.failure
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overrides_survive_a_text_round_trip(h in -30.0f64..30.0, v in -5.0f64..5.0) {
        let ov = vec![format!("initial.h_error={h:?}"), format!("initial.v_error={v:?}")];
        let cfg = parse_config_with_overrides("", &ov).unwrap();
        prop_assert_eq!(cfg.initial.h_error, h);
        prop_assert_eq!(cfg.initial.v_error, v);
        prop_assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}
