//! Offline evaluation of the confirm flow against two recorded dialogues.
//! The backend reads perfectly in the first dialogue and makes two mistakes
//! in the second: it hears "2" as "3" and takes "no thanks" for a yes.

use std::collections::{BTreeMap, BTreeSet};

use codial_core::backend::{BackendError, BackendRequest, FnBackend, Purpose};
use codial_core::chief::{parse_chief, ChiefGraph};
use codial_core::compiler::{compile, GuardrailProgram};
use codial_core::eval::{evaluate, load_dialogues, state_error_report, EvalOptions, EvalReport, GroundTruthDialogue, TurnRecord};

const CONFIRM: &str = include_str!("../fixtures/flows/confirm.chief.json");
const DIALOGUES: &str = include_str!("../fixtures/eval/confirm.jsonl");

fn setup() -> (ChiefGraph, GuardrailProgram, Vec<GroundTruthDialogue>) {
    let g = parse_chief(CONFIRM).unwrap();
    let p = compile(&g).unwrap();
    (g, p, load_dialogues(DIALOGUES).unwrap())
}

fn last_user(req: &BackendRequest) -> String {
    if let Some((_, rest)) = req.user.split_once("User message: \"") {
        return rest.split('"').next().unwrap_or_default().to_string();
    }
    req.user
        .lines()
        .filter_map(|l| l.strip_prefix("User: "))
        .last()
        .unwrap_or_default()
        .to_string()
}

fn reply(req: &BackendRequest) -> Result<String, BackendError> {
    let last = last_user(req);
    let tag = req.tag.as_deref().unwrap_or_default();
    let slots: &[(&str, &str)] = if req.user.contains("Golden Curry for 4") {
        &[("restaurant", "Golden Curry"), ("people", "4"), ("day", "friday")]
    } else if req.user.contains("for 2 on sunday") {
        &[("restaurant", "Golden Curry"), ("people", "3"), ("day", "sunday")]
    } else {
        &[]
    };
    let confirming = last == "yes do it" || last == "no thanks";
    Ok(match req.purpose {
        Purpose::Intent => if last == "hi there" { "hello" } else { "none" }.to_string(),
        Purpose::ValueFromInstruction if tag == "answered_n2" => if confirming { "yes" } else { "other" }.to_string(),
        Purpose::ValueFromInstruction => slots.iter().find(|(s, _)| *s == tag).map_or("None", |(_, v)| v).to_string(),
        Purpose::BooleanNld => if tag == "n2->n3" && confirming { "True" } else { "False" }.to_string(),
        Purpose::FallbackChoice => "out_of_scope".to_string(),
        other => panic!("unexpected {other:?} request"),
    })
}

fn run(dialogues: &[GroundTruthDialogue], options: EvalOptions) -> EvalReport {
    let (g, p, _) = setup();
    evaluate(&p, &g, dialogues, &FnBackend(reply), options).unwrap()
}

fn turn<'a>(r: &'a EvalReport, dialogue: &str, n: usize) -> &'a TurnRecord {
    r.turns.iter().find(|t| t.dialogue == dialogue && t.turn == n).unwrap()
}

#[test]
fn per_turn_outcomes() {
    let (_, _, ds) = setup();
    let r = run(&ds, EvalOptions::default());
    let labels: Vec<String> = r.turns.iter().map(|t| t.gold.label()).collect();
    let got: Vec<(&str, Option<&str>, bool)> = r
        .turns
        .iter()
        .zip(&labels)
        .map(|(t, l)| (l.as_str(), t.predicted_action.as_deref(), t.correct))
        .collect();
    assert_eq!(
        got,
        vec![
            ("hello", Some("hello"), true),
            ("n2", Some("n2"), true),
            ("n4", Some("n4"), true),
            ("n2", Some("n2"), true),
            ("n5", Some("n4"), false),
            ("unmapped:chitchat", Some("out_of_scope"), false),
        ]
    );
    assert_eq!(turn(&r, "d1", 3).predicted_utterance, "Your table is booked. The reference number is REF-DDC7B7.");
    assert_eq!(
        turn(&r, "d2", 1).predicted_utterance,
        "I can book Golden Curry for 3 people on sunday. Do you confirm the booking?"
    );
    assert_eq!(turn(&r, "d1", 3).api_calls, vec!["n3"]);
    assert_eq!(turn(&r, "d1", 3).api_calls_correct, 1);
    assert_eq!(turn(&r, "d2", 2).api_calls, vec!["n3"]);
    assert_eq!(turn(&r, "d2", 2).api_calls_correct, 0);
    assert!(r.turns.iter().all(|t| t.error.is_none()));
}

#[test]
fn summary_matches_hand_counts() {
    let (_, _, ds) = setup();
    let s = run(&ds, EvalOptions::default()).summary;
    assert_eq!((s.dialogues, s.turns, s.correct, s.failed_turns), (2, 6, 4, 0));
    assert!((s.accuracy - 400.0 / 6.0).abs() < 1e-9);
    // TP 4, FP 2, FN 2.
    assert!((s.micro_f1 - 400.0 / 6.0).abs() < 1e-9);
    assert_eq!(s.jga_turns, 4);
    assert_eq!(s.jga, Some(50.0));
    assert_eq!((s.api_calls, s.api_calls_correct, s.api_precision), (2, 1, Some(50.0)));

    // Four turns have a node as gold action; each checks the three slots,
    // one external-action helper and four inform helpers. Only the misread
    // decline goes wrong: the answer, the call, n4's and n5's messages.
    let e = &s.state_errors;
    assert_eq!((e["request"].checked, e["request"].errors), (12, 0));
    assert_eq!((e["external_action"].checked, e["external_action"].errors), (4, 1));
    assert_eq!((e["inform"].checked, e["inform"].errors), (16, 3));
    assert_eq!(e["inform"].rate, 3.0 / 16.0);
}

#[test]
fn perfect_dialogue_has_no_state_errors() {
    let (g, p, ds) = setup();
    let report = state_error_report(&p, &g, &ds[..1], &FnBackend(reply)).unwrap();
    assert_eq!(report.len(), 3);
    assert!(report.values().all(|e| e.errors == 0 && e.rate == 0.0 && e.checked > 0));
}

#[test]
fn oracle_state_repairs_the_misheard_slot() {
    let (_, _, ds) = setup();
    let options = EvalOptions {
        oracle_state: true,
        ..Default::default()
    };
    let r = run(&ds, options);
    assert_eq!(turn(&r, "d2", 1).predicted_slots["people"], serde_json::json!(3));
    // The gold belief replaced people=3 after the first turn, but the
    // second turn extracts it again from the transcript.
    assert_eq!(r.summary.jga, Some(50.0));
}

/// F1 from an explicit confusion matrix over the per-turn records.
#[test]
fn f1_matches_confusion_matrix() {
    let (_, _, ds) = setup();
    let r = run(&ds, EvalOptions::default());
    let mut matrix: BTreeMap<(String, Option<String>), usize> = BTreeMap::new();
    for t in &r.turns {
        *matrix.entry((t.gold.label(), t.predicted_action.clone())).or_default() += 1;
    }
    let labels: BTreeSet<String> = matrix
        .keys()
        .flat_map(|(g, p)| std::iter::once(g.clone()).chain(p.clone()))
        .collect();
    let count = |f: &dyn Fn(&String, &Option<String>) -> bool| -> usize {
        matrix.iter().filter(|((g, p), _)| f(g, p)).map(|(_, n)| n).sum()
    };
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        if tp + fp + fn_ == 0 {
            0.0
        } else {
            let (p, r) = (tp as f64 / (tp + fp).max(1) as f64, tp as f64 / (tp + fn_).max(1) as f64);
            if p + r == 0.0 { 0.0 } else { 100.0 * 2.0 * p * r / (p + r) }
        }
    };
    let mut sums = (0, 0, 0);
    let mut macro_sum = 0.0;
    for l in &labels {
        let tp = count(&|g, p| g == l && p.as_ref() == Some(l));
        let fp = count(&|g, p| g != l && p.as_ref() == Some(l));
        let fn_ = count(&|g, p| g == l && p.as_ref() != Some(l));
        sums = (sums.0 + tp, sums.1 + fp, sums.2 + fn_);
        macro_sum += f1(tp, fp, fn_);
    }
    let s = &r.summary;
    assert!((s.micro_f1 - f1(sums.0, sums.1, sums.2)).abs() < 1e-9);
    assert!((s.macro_f1 - macro_sum / labels.len() as f64).abs() < 1e-9);
    // hello, n2 and n4 are fully or partly right; n5, out_of_scope and the
    // unmapped label score zero.
    assert_eq!(labels.len(), 6);
}

#[test]
fn aggregates_equal_per_turn_sums_and_do_not_depend_on_threads() {
    let (_, _, ds) = setup();
    let seq = run(&ds, EvalOptions { parallelism: Some(1), ..Default::default() });
    let par = run(&ds, EvalOptions { parallelism: Some(4), ..Default::default() });
    assert_eq!(seq, par);
    let s = &seq.summary;
    assert_eq!(s.correct, seq.turns.iter().filter(|t| t.correct).count());
    assert_eq!(s.api_calls, seq.turns.iter().map(|t| t.api_calls.len()).sum::<usize>());
    let checks: usize = seq.turns.iter().map(|t| t.state_checks.len()).sum();
    assert_eq!(checks, s.state_errors.values().map(|e| e.checked).sum::<usize>());
}

#[test]
fn reports_serialize() {
    let (_, _, ds) = setup();
    let r = run(&ds, EvalOptions::default());
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["turns"].as_array().unwrap().len(), 6);
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(r.summary.table().contains("API-call precision     50.00 (1/2)"));
}
