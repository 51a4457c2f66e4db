//! Approximated wizard state for every (action node, variable) pair of the
//! taxi and confirm flows, worked out by hand from the flow diagrams.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use codial_core::chief::parse_chief;
use codial_core::eval::{approx_wizard_state, approx_wizard_states, WizardError};

const TAXI: &str = include_str!("../fixtures/flows/taxi.chief.json");
const CONFIRM: &str = include_str!("../fixtures/flows/confirm.chief.json");

const F: &str = "<filled>";
const X: &str = "<executed>";

fn table(rows: &[(&str, Value)]) -> BTreeMap<String, Value> {
    rows.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn taxi_table() {
    let g = parse_chief(TAXI).unwrap();
    let expected = [
        (
            "n1",
            table(&[
                ("departure", Value::Null),
                ("arrival", Value::Null),
                ("time", Value::Null),
                ("action_n2", Value::Null),
                ("inform_n3", Value::Null),
            ]),
        ),
        (
            "n2",
            table(&[
                ("departure", json!(F)),
                ("arrival", json!(F)),
                ("time", json!(F)),
                ("action_n2", Value::Null),
                ("inform_n3", Value::Null),
            ]),
        ),
        (
            "n3",
            table(&[
                ("departure", json!(F)),
                ("arrival", json!(F)),
                ("time", json!(F)),
                ("action_n2", json!(X)),
                ("inform_n3", json!(false)),
            ]),
        ),
    ];
    for (node, want) in expected {
        assert_eq!(approx_wizard_states(&g, node).unwrap(), want, "target {node}");
        for (var, value) in &want {
            assert_eq!(&approx_wizard_state(&g, node, var).unwrap(), value, "{node}/{var}");
        }
    }
}

#[test]
fn confirm_table() {
    let g = parse_chief(CONFIRM).unwrap();
    let slots = |v: Value| vec![("restaurant", v.clone()), ("people", v.clone()), ("day", v)];
    let rows = |s: Value, helpers: [Value; 5]| {
        let names = ["inform_n2", "answered_n2", "action_n3", "inform_n4", "inform_n5"];
        let mut all = slots(s);
        all.extend(names.iter().copied().zip(helpers));
        table(&all)
    };
    let null = Value::Null;
    let expected = [
        ("n1", rows(null.clone(), std::array::from_fn(|_| Value::Null))),
        (
            "n2",
            rows(json!(F), [json!(false), json!(false), null.clone(), null.clone(), null.clone()]),
        ),
        (
            "n3",
            rows(json!(F), [json!(true), json!("yes"), null.clone(), null.clone(), null.clone()]),
        ),
        (
            "n4",
            rows(json!(F), [json!(true), json!("yes"), json!(X), json!(false), null.clone()]),
        ),
        (
            "n5",
            rows(json!(F), [json!(true), json!("no"), null.clone(), null.clone(), json!(false)]),
        ),
    ];
    for (node, want) in expected {
        assert_eq!(want.len(), 8);
        assert_eq!(approx_wizard_states(&g, node).unwrap(), want, "target {node}");
    }
}

#[test]
fn disconnected_target_has_no_path() {
    let mut g = parse_chief(TAXI).unwrap();
    g.edges.retain(|e| e.target != "n3");
    assert_eq!(approx_wizard_states(&g, "n3"), Err(WizardError::NoPath("n3".into())));
    assert_eq!(approx_wizard_state(&g, "n3", "time"), Err(WizardError::NoPath("n3".into())));
}
