use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{action_scores, bleu4, jga, Smoothing};
use super::{EvalReport, TurnRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateErrorRate {
    pub checked: usize,
    pub errors: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dialogues: usize,
    pub turns: usize,
    pub failed_turns: usize,
    pub correct: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub bleu4: f64,
    /// Over turns with a gold belief state only.
    pub jga: Option<f64>,
    pub jga_turns: usize,
    pub api_calls: usize,
    pub api_calls_correct: usize,
    pub api_precision: Option<f64>,
    /// Keyed by node kind: `request`, `external_action`, `inform`.
    pub state_errors: BTreeMap<String, StateErrorRate>,
}

impl EvalSummary {
    pub fn from_turns(turns: &[TurnRecord], smoothing: Smoothing) -> Self {
        let predicted: Vec<Option<String>> = turns.iter().map(|t| t.predicted_action.clone()).collect();
        let gold: Vec<String> = turns.iter().map(|t| t.gold.label()).collect();
        let scores = action_scores(&predicted, &gold);

        let candidates: Vec<String> = turns.iter().map(|t| t.predicted_utterance.clone()).collect();
        let references: Vec<String> = turns.iter().map(|t| t.reference_utterance.clone()).collect();

        let (pred_states, gold_states): (Vec<_>, Vec<_>) = turns
            .iter()
            .filter_map(|t| t.gold_slots.as_ref().map(|g| (t.predicted_slots.clone(), g.clone())))
            .unzip();

        let api_calls: usize = turns.iter().map(|t| t.api_calls.len()).sum();
        let api_calls_correct: usize = turns.iter().map(|t| t.api_calls_correct).sum();

        let mut state_errors: BTreeMap<String, StateErrorRate> = BTreeMap::new();
        for check in turns.iter().flat_map(|t| &t.state_checks) {
            let e = state_errors.entry(check.node_kind.clone()).or_default();
            e.checked += 1;
            e.errors += usize::from(!check.ok);
        }
        for e in state_errors.values_mut() {
            e.rate = e.errors as f64 / e.checked as f64;
        }

        let mut dialogues: Vec<&str> = turns.iter().map(|t| t.dialogue.as_str()).collect();
        dialogues.dedup();
        EvalSummary {
            dialogues: dialogues.len(),
            turns: turns.len(),
            failed_turns: turns.iter().filter(|t| t.error.is_some()).count(),
            correct: scores.correct,
            micro_f1: scores.micro_f1,
            macro_f1: scores.macro_f1,
            accuracy: scores.accuracy,
            bleu4: if turns.is_empty() { 0.0 } else { bleu4(&candidates, &references, smoothing) },
            jga: (!gold_states.is_empty()).then(|| jga(&pred_states, &gold_states)),
            jga_turns: gold_states.len(),
            api_calls,
            api_calls_correct,
            api_precision: (api_calls > 0).then(|| 100.0 * api_calls_correct as f64 / api_calls as f64),
            state_errors,
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k:<22} {v}");
        };
        row("dialogues", self.dialogues.to_string());
        row("turns", format!("{} ({} failed)", self.turns, self.failed_turns));
        row("next-action micro F1", format!("{:.2}", self.micro_f1));
        row("next-action macro F1", format!("{:.2}", self.macro_f1));
        row("next-action accuracy", format!("{:.2}", self.accuracy));
        row("BLEU-4", format!("{:.2}", self.bleu4));
        row(
            "JGA",
            self.jga.map_or("n/a".into(), |j| format!("{j:.2} over {} turns", self.jga_turns)),
        );
        row(
            "API-call precision",
            self.api_precision
                .map_or("n/a".into(), |p| format!("{p:.2} ({}/{})", self.api_calls_correct, self.api_calls)),
        );
        for (kind, e) in &self.state_errors {
            row(&format!("state error {kind}"), format!("{:.3} ({}/{})", e.rate, e.errors, e.checked));
        }
        out
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One row per turn.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dialogue",
            "turn",
            "gold_label",
            "gold",
            "predicted_action",
            "correct",
            "predicted_utterance",
            "reference_utterance",
            "api_calls",
            "state_errors",
            "error",
        ])
        .expect("in-memory write");
        for t in &self.turns {
            w.write_record([
                t.dialogue.clone(),
                t.turn.to_string(),
                t.gold_label.clone(),
                t.gold.label(),
                t.predicted_action.clone().unwrap_or_default(),
                t.correct.to_string(),
                t.predicted_utterance.clone(),
                t.reference_utterance.clone(),
                t.api_calls.join(" "),
                t.state_checks.iter().filter(|c| !c.ok).count().to_string(),
                t.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}
