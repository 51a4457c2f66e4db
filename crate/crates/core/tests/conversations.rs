use std::fs;
use std::path::{Path, PathBuf};

use codial_core::chief::parse_chief;
use codial_core::compiler::compile;
use codial_core::scenario::{run_scenario, Scenario};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn scenarios() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = fs::read_dir(fixtures().join("conversations"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

#[test]
fn at_least_ten_scenarios_over_all_flows() {
    let all = scenarios();
    assert!(all.len() >= 10);
    for flow in ["taxi", "confirm", "weather"] {
        assert!(all.iter().any(|s| s.flow == flow), "{flow}");
    }
}

#[test]
fn scripted_conversations_match_expectations() {
    let mut failures = Vec::new();
    for scenario in scenarios() {
        let text = fs::read_to_string(fixtures().join("flows").join(format!("{}.chief.json", scenario.flow))).unwrap();
        let program = compile(&parse_chief(&text).unwrap()).unwrap();
        let report = run_scenario(&program, &scenario);
        failures.extend(report.failures());
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn wrong_expectations_are_reported() {
    let mut scenario = scenarios().into_iter().find(|s| s.name == "confirm-yes").unwrap();
    let text = fs::read_to_string(fixtures().join("flows/confirm.chief.json")).unwrap();
    let program = compile(&parse_chief(&text).unwrap()).unwrap();
    scenario.turns[1].expect.utterance.push('!');
    scenario.turns[1].script.pop();
    let failures = run_scenario(&program, &scenario).failures();
    assert!(failures.iter().any(|f| f.contains("turn failed")), "{failures:?}");

    let mut scenario = scenarios().into_iter().find(|s| s.name == "confirm-yes").unwrap();
    scenario.turns[0].expect.utterance.push('!');
    let failures = run_scenario(&program, &scenario).failures();
    assert_eq!(failures.len(), 1, "{failures:?}");
    assert!(failures[0].starts_with("confirm-yes turn 1: utterance"));
}
