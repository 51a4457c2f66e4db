//! Scripted runs of the instruction optimizer. The agent's accuracy on the
//! validation set is fixed per instruction version, so every score is known
//! in advance.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use codial_core::backend::{BackendError, BackendRequest, FnBackend, Purpose};
use codial_core::chief::ValueType;
use codial_core::compiler::DstEntry;
use codial_core::promptopt::{optimize_dst, LabeledTurn, OptConfig, OptError, OptRun};
use codial_core::runtime::{Message, Speaker};

fn dataset(n: usize) -> Vec<LabeledTurn> {
    (0..n)
        .map(|i| LabeledTurn {
            slot: "city".into(),
            conversation: vec![Message {
                speaker: Speaker::User,
                text: format!("I need a cab, case {i}"),
            }],
            value: json!(format!("city{i}")),
        })
        .collect()
}

fn entry() -> DstEntry {
    DstEntry {
        slot: "city".into(),
        node: "n1".into(),
        instruction: "Extract the city. v0".into(),
        invalidates: Default::default(),
        value_type: ValueType::Text,
    }
}

fn case_of(req: &BackendRequest) -> usize {
    let tail = req.user.split("case ").nth(1).unwrap();
    tail.split(|c: char| !c.is_ascii_digit()).next().unwrap().parse().unwrap()
}

fn version_of(instruction: &str) -> usize {
    instruction.rsplit('v').next().unwrap().trim().parse().unwrap()
}

/// Agent correct on the first `quota[v]` validation turns for instruction
/// version `v`, and on every training turn.
struct Agent {
    validation: Vec<usize>,
    quota: Vec<usize>,
}

impl Agent {
    fn reply(&self, req: &BackendRequest) -> Result<String, BackendError> {
        assert_eq!(req.purpose, Purpose::ValueFromInstruction);
        assert_eq!(req.tag.as_deref(), Some("city"));
        let case = case_of(req);
        let instruction = req.user.split("Instruction: ").nth(1).unwrap();
        let v = version_of(instruction);
        Ok(match self.validation.iter().position(|&i| i == case) {
            Some(pos) if pos >= self.quota[v] => "nowhere".into(),
            _ => format!("city{case}"),
        })
    }
}

/// Optimizer proposing "v1", "v2", ... in turn.
fn counting_optimizer() -> impl Fn(&BackendRequest) -> Result<String, BackendError> + Send + Sync {
    let n = AtomicUsize::new(0);
    move |req| {
        assert_eq!(req.purpose, Purpose::PromptRewrite);
        let k = n.fetch_add(1, Ordering::SeqCst) + 1;
        Ok(format!("\"Extract the city. v{k}\""))
    }
}

/// Validation indices chosen for a seed, read from a throwaway run.
fn split(seed: u64, data: &[LabeledTurn]) -> Vec<usize> {
    let agent = FnBackend(|r: &BackendRequest| Ok(format!("city{}", case_of(r))));
    let optimizer = FnBackend(|_: &BackendRequest| Ok("Extract the city. v0".to_string()));
    let config = OptConfig { seed, ..Default::default() };
    optimize_dst(&entry(), data, &agent, &optimizer, config).unwrap().validation
}

fn scripted(seed: u64, quota: Vec<usize>) -> OptRun {
    let data = dataset(90);
    let agent = Agent { validation: split(seed, &data), quota };
    let config = OptConfig { seed, ..Default::default() };
    optimize_dst(&entry(), &data, &FnBackend(|r: &BackendRequest| agent.reply(r)), &FnBackend(counting_optimizer()), config).unwrap()
}

#[test]
fn split_sizes_and_disjointness() {
    let data = dataset(90);
    let run = scripted(1, vec![50; 5]);
    assert_eq!((run.train.len(), run.validation.len(), run.history.len()), (20, 50, 4));
    assert!(run.train.iter().all(|i| !run.validation.contains(i)));
    assert!(run.train.iter().chain(&run.validation).all(|&i| i < data.len()));
}

#[test]
fn single_improvement_is_the_only_acceptance() {
    // v0 60%, v1 50%, v2 80%, v3 70%, v4 80%.
    let run = scripted(7, vec![30, 25, 40, 35, 40]);
    assert_eq!(run.initial_score, 60.0);
    let steps: Vec<(usize, f64, bool)> = run.history.iter().map(|s| (s.batch, s.score, s.accepted)).collect();
    assert_eq!(steps, vec![(1, 50.0, false), (2, 80.0, true), (3, 70.0, false), (4, 80.0, false)]);
    assert_eq!(run.best_instruction, "Extract the city. v2");
    assert_eq!(run.best_score, 80.0);
    assert_eq!(run.best_scores(), vec![60.0, 60.0, 80.0, 80.0, 80.0]);
}

#[test]
fn unchanged_rewrite_is_never_accepted() {
    let data = dataset(70);
    let validation = split(3, &data);
    let agent = Agent { validation, quota: vec![20] };
    let echo = FnBackend(|req: &BackendRequest| {
        let current = req.user.split("Current instruction:\n").nth(1).unwrap();
        Ok(current.split("\n\n").next().unwrap().to_string())
    });
    let config = OptConfig { seed: 3, ..Default::default() };
    let run = optimize_dst(&entry(), &data, &FnBackend(|r: &BackendRequest| agent.reply(r)), &echo, config).unwrap();
    assert_eq!(run.history.len(), 4);
    assert!(run.history.iter().all(|s| !s.accepted && s.score == 40.0 && s.candidate == "Extract the city. v0"));
    assert_eq!(run.best_instruction, run.initial_instruction);
}

#[test]
fn best_score_never_decreases() {
    for seed in 0..10u64 {
        let quota: Vec<usize> = (0..5).map(|v| (seed as usize * 7 + v * 13) % 51).collect();
        let run = scripted(seed, quota);
        let best = run.best_scores();
        assert!(best.windows(2).all(|w| w[1] >= w[0]), "{best:?}");
        assert_eq!(*best.last().unwrap(), run.best_score);
        for s in &run.history {
            assert_eq!(s.accepted, s.score > best[s.batch - 1]);
        }
    }
}

#[test]
fn seeded_reruns_are_byte_identical() {
    let a = serde_json::to_string(&scripted(11, vec![10, 20, 30, 40, 50])).unwrap();
    let b = serde_json::to_string(&scripted(11, vec![10, 20, 30, 40, 50])).unwrap();
    assert_eq!(a, b);
    let data = dataset(90);
    assert_ne!(split(11, &data), split(12, &data));
}

#[test]
fn backend_failure_keeps_the_best_so_far() {
    let data = dataset(70);
    let agent = Agent { validation: split(5, &data), quota: vec![10, 30, 20, 50, 50] };
    let calls = Mutex::new(0);
    let optimizer = FnBackend(|_: &BackendRequest| {
        let mut n = calls.lock().unwrap();
        *n += 1;
        if *n == 3 {
            Err(BackendError::Timeout { timeout_ms: 100 })
        } else {
            Ok(format!("Extract the city. v{n}"))
        }
    });
    let config = OptConfig { seed: 5, ..Default::default() };
    let err = optimize_dst(&entry(), &data, &FnBackend(|r: &BackendRequest| agent.reply(r)), &optimizer, config).unwrap_err();
    let OptError::Backend { error, partial } = err else { panic!("wrong error") };
    assert_eq!(error, BackendError::Timeout { timeout_ms: 100 });
    assert_eq!(partial.history.len(), 2);
    assert_eq!(partial.best_instruction, "Extract the city. v1");
    assert_eq!(partial.best_score, 60.0);
    assert!(partial.aborted.is_some());
}
