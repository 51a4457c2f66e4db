use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use codial_core::eval::{action_scores, bleu4, jga, Smoothing};

/// Tokens by a character class scan written separately from the library.
fn oracle_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<(usize, char)> = lower.char_indices().collect();
    for (pos, &(i, c)) in chars.iter().enumerate() {
        let word_char = c.is_alphanumeric();
        if word_char && start.is_none() {
            start = Some(i);
        }
        let ends = !word_char || pos + 1 == chars.len();
        if ends {
            if let Some(s) = start.take() {
                let end = if word_char { i + c.len_utf8() } else { i };
                out.push(lower[s..end].to_string());
            }
        }
        if !word_char && !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    out
}

fn occurrences(tokens: &[String], gram: &[String]) -> usize {
    (0..tokens.len())
        .filter(|&i| i + gram.len() <= tokens.len() && tokens[i..i + gram.len()] == *gram)
        .count()
}

/// Corpus BLEU-4 by brute-force n-gram counting.
fn oracle_bleu(cands: &[String], refs: &[String], exp_smoothing: bool) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        let c = oracle_tokens(c);
        let r = oracle_tokens(r);
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4usize {
            let mut seen: Vec<&[String]> = Vec::new();
            for i in 0..c.len() {
                if i + n > c.len() {
                    break;
                }
                totals[n - 1] += 1;
                let gram = &c[i..i + n];
                if seen.contains(&gram) {
                    continue;
                }
                seen.push(gram);
                matches[n - 1] += occurrences(&c, gram).min(occurrences(&r, gram));
            }
        }
    }
    if c_len == 0 || totals.contains(&0) {
        return 0.0;
    }
    let mut k = 0;
    let mut product = 1.0;
    for n in 0..4 {
        let p = if matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else if exp_smoothing {
            k += 1;
            1.0 / (2f64.powi(k) * totals[n] as f64)
        } else {
            return 0.0;
        };
        product *= p;
    }
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * product.powf(0.25)
}

fn corpus(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    const WORDS: &[&str] = &["The", "cab", "is", "booked", "for", "noon", "at", "Airport", "you", "ref", "12", "ok"];
    const PUNCT: &[&str] = &[".", ",", "!", "?", "-"];
    let sentence = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..12);
        let mut s = String::new();
        for _ in 0..n {
            if rng.random_bool(0.15) {
                s.push_str(PUNCT[rng.random_range(0..PUNCT.len())]);
            } else {
                if !s.is_empty() {
                    s.push(' ');
                }
                s.push_str(WORDS[rng.random_range(0..WORDS.len())]);
            }
        }
        s
    };
    let k = rng.random_range(1..5);
    let refs: Vec<String> = (0..k).map(|_| sentence(rng)).collect();
    // Candidates lean on their reference so high-order matches occur.
    let cands = refs
        .iter()
        .map(|r| if rng.random_bool(0.5) { format!("{r} ok") } else { sentence(rng) })
        .collect();
    (cands, refs)
}

#[test]
fn tokenizers_agree() {
    let samples = ["Hello, World!", "REF-616EF1.", "  a  b ", "", "it's 5pm?", "Ünïcode straße"];
    for s in samples {
        assert_eq!(codial_core::eval::tokenize(s), oracle_tokens(s), "{s:?}");
    }
}

#[test]
fn bleu_matches_brute_force_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut nonzero = 0;
    for _ in 0..20 {
        let (c, r) = corpus(&mut rng);
        for (smoothing, exp) in [(Smoothing::None, false), (Smoothing::Exp, true)] {
            let want = oracle_bleu(&c, &r, exp);
            let got = bleu4(&c, &r, smoothing);
            assert!((got - want).abs() < 1e-9, "{c:?} vs {r:?} ({smoothing:?}): {got} != {want}");
            nonzero += usize::from(want > 0.0);
        }
    }
    assert!(nonzero >= 10, "corpora too easy: {nonzero}");
}

#[test]
fn bleu_fixed_points() {
    let s = vec!["the cat sat on the mat".to_string()];
    assert_eq!(bleu4(&s, &s, Smoothing::None), 100.0);
    let other = vec!["a dog ran in a park".to_string()];
    assert_eq!(bleu4(&other, &s, Smoothing::None), 0.0);
    assert!(bleu4(&other, &s, Smoothing::Exp) > 0.0);
}

#[test]
fn action_scores_hand_counts() {
    let some = |s: &str| Some(s.to_string());
    let gold: Vec<String> = ["n1", "n1", "n2", "hello", "n3"].iter().map(|s| s.to_string()).collect();
    let predicted = vec![some("n1"), some("n2"), some("n2"), some("hello"), None];
    let s = action_scores(&predicted, &gold);
    // TP 3; FP 1 (n2 for n1); FN 2 (that n1 and the failed n3 turn).
    assert!((s.micro_f1 - 100.0 * 6.0 / 9.0).abs() < 1e-9);
    assert_eq!(s.accuracy, 60.0);
    // Per label: n1 F1 = 2/3, n2 F1 = 2/3, hello 1, n3 0.
    let macro_f1 = 100.0 * (2.0 / 3.0 + 2.0 / 3.0 + 1.0 + 0.0) / 4.0;
    assert!((s.macro_f1 - macro_f1).abs() < 1e-9);
    assert_eq!((s.turns, s.correct), (5, 3));
}

#[test]
fn jga_hand_counts() {
    let state = |pairs: &[(&str, Value)]| -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };
    let gold = vec![
        state(&[("city", json!("cambridge")), ("people", json!(2))]),
        state(&[("city", json!("cambridge")), ("people", json!(3))]),
        state(&[("city", json!("ely")), ("day", Value::Null)]),
        state(&[]),
    ];
    let predicted = vec![
        state(&[("city", json!("Cambridge ")), ("people", json!("2"))]),
        state(&[("city", json!("cambridge")), ("people", json!(2))]),
        state(&[("city", json!("ely"))]),
        state(&[("day", Value::Null)]),
    ];
    assert_eq!(jga(&predicted, &gold), 75.0);
    assert_eq!(jga(&predicted[..2], &gold[..2]), 50.0);
    assert_eq!(jga(&gold, &gold), 100.0);
}
