mod common;

use rep2h::scenario::Scenario;
use rep2h::synth::{generate, SynthOptions};
use rep2h::Error;

use common::{case_study, scenarios_dir};

#[test]
fn bundled_scenarios_validate() {
    let sc = case_study();
    assert_eq!(sc.steps(), 24);
    assert_eq!(sc.plant.units.len(), 4);
    for e in std::fs::read_dir(scenarios_dir().join("batch")).unwrap() {
        let p = e.unwrap().path();
        Scenario::load_valid(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn bundled_case_study_is_the_seeded_one() {
    let mut generated = generate(&SynthOptions::default());
    let sc = case_study();
    generated.name = sc.name.clone();
    generated.description = sc.description.clone();
    assert_eq!(generated, sc);
}

#[test]
fn json_round_trip() {
    let sc = case_study();
    assert_eq!(Scenario::from_json(&sc.to_json().unwrap()).unwrap(), sc);
}

#[test]
fn schema_errors_carry_a_path() {
    let mut v: serde_json::Value = serde_json::from_str(&case_study().to_json().unwrap()).unwrap();
    v["network"]["branches"][2]["r"] = serde_json::json!("high");
    match Scenario::from_json(&v.to_string()) {
        Err(Error::Scenario(msgs)) => assert!(msgs[0].starts_with("network.branches[2].r"), "{msgs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invariant_errors_are_located() {
    let mut sc = case_study();
    sc.series.wind_mw[1].pop();
    sc.series.pv_mw[0][3] = -0.5;
    sc.initial.temperatures.push(40.0);
    let msgs = sc.check();
    assert!(msgs.iter().any(|m| m.starts_with("series.wind_mw[1]: length 23")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.starts_with("series.pv_mw[0][3]")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.starts_with("initial.temperatures: 5 entries")), "{msgs:?}");
    assert!(matches!(sc.validate(), Err(Error::Scenario(_))));
}

#[test]
fn truncation_keeps_series_aligned() {
    let sc = case_study().truncated(5);
    assert_eq!(sc.steps(), 5);
    assert!(sc.series.wind_mw.iter().chain(&sc.series.pv_mw).all(|s| s.len() == 5));
    assert_eq!(sc.series.ambient_c.len(), 5);
    assert!(sc.check().is_empty());
    assert_eq!(case_study().truncated(100).steps(), 24);
}
