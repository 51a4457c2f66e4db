//! Corpus BLEU-4, next-action F1/accuracy and joint goal accuracy. All
//! scores are percentages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::runtime::display_value;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Any n-gram order without a match gives a score of 0.
    #[default]
    None,
    /// Orders without a match get precision `1 / (2^k * total)`, `k`
    /// counting such orders so far.
    Exp,
}

impl FromStr for Smoothing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Smoothing::None),
            "exp" => Ok(Smoothing::Exp),
            other => Err(format!("unknown smoothing `{other}` (expected none or exp)")),
        }
    }
}

/// Lowercases, then splits on whitespace; every punctuation character becomes
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.to_lowercase().chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if c.is_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(c.to_string());
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of corpus BLEU; they add up across pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn of_pair(candidate: &str, reference: &str) -> Self {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        let mut s = BleuStats {
            candidate_len: c.len(),
            reference_len: r.len(),
            ..Default::default()
        };
        for n in 1..=4 {
            let cand = ngram_counts(&c, n);
            let refs = ngram_counts(&r, n);
            s.totals[n - 1] = c.len().saturating_sub(n - 1);
            s.matches[n - 1] = cand
                .iter()
                .map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for i in 0..4 {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn score(&self, smoothing: Smoothing) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut zero_orders = 0;
        for i in 0..4 {
            let total = self.totals[i];
            if total == 0 {
                return 0.0;
            }
            let p = if self.matches[i] > 0 {
                self.matches[i] as f64 / total as f64
            } else {
                match smoothing {
                    Smoothing::None => return 0.0,
                    Smoothing::Exp => {
                        zero_orders += 1;
                        1.0 / (2f64.powi(zero_orders) * total as f64)
                    }
                }
            };
            log_sum += p.ln();
        }
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (log_sum / 4.0).exp()
    }
}

/// Corpus BLEU-4 with one reference per candidate.
pub fn bleu4(candidates: &[String], references: &[String], smoothing: Smoothing) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&BleuStats::of_pair(c, r));
    }
    total.score(smoothing)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub turns: usize,
    pub correct: usize,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        100.0 * (2 * tp) as f64 / denom as f64
    }
}

/// Scores next-action predictions. `None` is a turn without a prediction
/// (a failed turn): it counts against recall and accuracy only.
pub fn action_scores(predicted: &[Option<String>], gold: &[String]) -> ActionScores {
    assert_eq!(predicted.len(), gold.len());
    let mut per_label: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, g) in predicted.iter().zip(gold) {
        match p.as_deref() {
            Some(p) if p == g => {
                correct += 1;
                per_label.entry(g).or_default().0 += 1;
            }
            Some(p) => {
                per_label.entry(p).or_default().1 += 1;
                per_label.entry(g).or_default().2 += 1;
            }
            None => per_label.entry(g).or_default().2 += 1,
        }
    }
    let (tp, fp, fn_) = per_label
        .values()
        .fold((0, 0, 0), |(a, b, c), &(x, y, z)| (a + x, b + y, c + z));
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.values().map(|&(a, b, c)| f1(a, b, c)).sum::<f64>() / per_label.len() as f64
    };
    ActionScores {
        micro_f1: f1(tp, fp, fn_),
        macro_f1,
        accuracy: if gold.is_empty() { 0.0 } else { 100.0 * correct as f64 / gold.len() as f64 },
        turns: gold.len(),
        correct,
    }
}

/// Comparison form of a slot value: trimmed, lowercased text; null stays null.
pub fn normalize_value(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        other => Some(display_value(other).trim().to_lowercase()),
    }
}

pub fn values_match(a: &Value, b: &Value) -> bool {
    normalize_value(a) == normalize_value(b)
}

/// Joint goal accuracy: share of turns whose every slot matches gold. A slot
/// missing on one side counts as null.
pub fn jga(predicted: &[BTreeMap<String, Value>], gold: &[BTreeMap<String, Value>]) -> f64 {
    assert_eq!(predicted.len(), gold.len());
    if gold.is_empty() {
        return 0.0;
    }
    let hits = predicted
        .iter()
        .zip(gold)
        .filter(|(p, g)| {
            let keys: BTreeSet<&String> = p.keys().chain(g.keys()).collect();
            keys.into_iter().all(|k| {
                values_match(p.get(k).unwrap_or(&Value::Null), g.get(k).unwrap_or(&Value::Null))
            })
        })
        .count();
    100.0 * hits as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("Hello, World!  It's 5pm."), s(&["hello", ",", "world", "!", "it", "'", "s", "5pm", "."]));
    }

    #[test]
    fn bleu_anchors() {
        let c = s(&["the cat sat on the mat", "a quick brown fox jumps"]);
        assert!((bleu4(&c, &c, Smoothing::None) - 100.0).abs() < 1e-9);
        let r = s(&["dogs bark loudly at night", "no overlap here at all"]);
        assert_eq!(bleu4(&c, &r, Smoothing::None), 0.0);
        assert!(bleu4(&c, &r, Smoothing::Exp) >= 0.0);
    }

    #[test]
    fn bleu_hand_computed() {
        // cand: the cat sat on a mat / ref: the cat sat on the mat
        // 1-gram 5/6, 2-gram 3/5, 3-gram 2/4, 4-gram 1/3, equal lengths.
        let got = bleu4(&s(&["the cat sat on a mat"]), &s(&["the cat sat on the mat"]), Smoothing::None);
        let want = 100.0 * ((5.0 / 6.0) * 0.6 * 0.5 * (1.0 / 3.0f64)).powf(0.25);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let full = bleu4(&s(&["a b c d e"]), &s(&["a b c d e"]), Smoothing::None);
        let short = bleu4(&s(&["a b c d"]), &s(&["a b c d e"]), Smoothing::None);
        assert!((full - 100.0).abs() < 1e-9);
        assert!((short - 100.0 * (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn action_scores_with_failures() {
        let pred = vec![Some("n1".to_string()), Some("n2".into()), None, Some("n3".into())];
        let gold = s(&["n1", "n3", "n2", "n3"]);
        let a = action_scores(&pred, &gold);
        assert_eq!((a.turns, a.correct), (4, 2));
        assert!((a.accuracy - 50.0).abs() < 1e-12);
        // tp 2, fp 1, fn 2
        assert!((a.micro_f1 - 100.0 * 4.0 / 7.0).abs() < 1e-12);
        // n1: 1,0,0 -> 100; n2: 0,1,1 -> 0; n3: 1,0,1 -> 66.67
        assert!((a.macro_f1 - (100.0 + 0.0 + 200.0 / 3.0) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn jga_normalizes_and_treats_absent_as_null() {
        let p = vec![
            BTreeMap::from([("city".to_string(), json!("Cambridge ")), ("day".into(), Value::Null)]),
            BTreeMap::from([("city".to_string(), json!("Ely"))]),
        ];
        let g = vec![
            BTreeMap::from([("city".to_string(), json!("cambridge"))]),
            BTreeMap::from([("city".to_string(), json!("Ely")), ("day".into(), json!("monday"))]),
        ];
        assert!((jga(&p, &g) - 50.0).abs() < 1e-12);
        assert!(values_match(&json!(4), &json!("4")));
    }
}
