//! Validation-gated rewriting of slot extraction instructions.
//!
//! A seeded sample of labelled turns is split into a training and a
//! validation set. Each training batch shows the optimizer model what the
//! current best instruction extracted versus the gold values; the rewrite it
//! proposes replaces the best instruction only if it scores strictly higher
//! on the validation set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{Backend, BackendError, BackendRequest, Purpose};
use crate::compiler::DstEntry;
use crate::eval::{values_match, GroundTruthDialogue};
use crate::runtime::{display_value, postprocess_value, system_message, value_request, Message, Speaker};

/// One conversation prefix (ending with a user message) and the slot value
/// it should yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTurn {
    pub slot: String,
    pub conversation: Vec<Message>,
    pub value: Value,
}

impl LabeledTurn {
    fn transcript(&self) -> String {
        self.conversation.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
    }
}

/// Labelled turns for `slot` taken from dialogues whose turns carry a gold
/// belief state.
pub fn labeled_turns(dialogues: &[GroundTruthDialogue], slot: &str) -> Vec<LabeledTurn> {
    let mut out = Vec::new();
    for d in dialogues {
        let mut conversation = Vec::new();
        for t in &d.turns {
            conversation.push(Message {
                speaker: Speaker::User,
                text: t.user.clone(),
            });
            if let Some(belief) = &t.belief {
                out.push(LabeledTurn {
                    slot: slot.to_string(),
                    conversation: conversation.clone(),
                    value: belief.get(slot).cloned().unwrap_or(Value::Null),
                });
            }
            conversation.push(Message {
                speaker: Speaker::Bot,
                text: t.wizard.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub train_size: usize,
    pub validation_size: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            train_size: 20,
            validation_size: 50,
            batch_size: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptStep {
    pub batch: usize,
    pub candidate: String,
    pub score: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRun {
    pub slot: String,
    pub config: OptConfig,
    /// Dataset indices of the training and validation turns.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub initial_instruction: String,
    pub initial_score: f64,
    pub history: Vec<OptStep>,
    pub best_instruction: String,
    pub best_score: f64,
    /// Set when a backend failure ended the run early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl OptRun {
    /// Best score after the initial scoring and after each batch.
    pub fn best_scores(&self) -> Vec<f64> {
        let mut best = self.initial_score;
        let mut out = vec![best];
        for s in &self.history {
            if s.accepted {
                best = s.score;
            }
            out.push(best);
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OptError {
    #[error("slot {slot} has {got} labelled turns, {needed} needed")]
    InsufficientData { slot: String, needed: usize, got: usize },
    #[error("backend failure, best so far kept: {error}")]
    Backend { error: BackendError, partial: Box<OptRun> },
}

/// Exact-match accuracy after value normalization, as a percentage.
pub fn compute_score(predictions: &[Value], gold: &[Value]) -> f64 {
    assert_eq!(predictions.len(), gold.len());
    if gold.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| values_match(p, g)).count();
    100.0 * hits as f64 / gold.len() as f64
}

fn predict(backend: &dyn Backend, instruction: &str, slot: &str, turns: &[&LabeledTurn]) -> Result<Vec<Value>, BackendError> {
    turns
        .iter()
        .map(|t| {
            let req = value_request(None, &t.transcript(), instruction).tagged(slot);
            backend.complete(&req).map(|r| postprocess_value(&r))
        })
        .collect()
}

fn rewrite_request(slot: &str, instruction: &str, batch: &[&LabeledTurn], predictions: &[Value]) -> BackendRequest {
    let system = system_message(
        None,
        "You improve instructions that tell an assistant how to extract one value from a conversation.",
    );
    let mut user = format!("Slot: {slot}\nCurrent instruction:\n{instruction}\n\nResults on some conversations:\n");
    for (i, (t, p)) in batch.iter().zip(predictions).enumerate() {
        user.push_str(&format!(
            "\nExample {}\n{}\nExtracted: {}\nExpected: {}\n",
            i + 1,
            t.transcript(),
            display_value(p),
            display_value(&t.value)
        ));
    }
    user.push_str(
        "\nWrite a better instruction that would give the expected values. Keep the reply format rules of the current instruction. Reply with the new instruction only.",
    );
    BackendRequest::new(Purpose::PromptRewrite, system, user).tagged(slot)
}

/// The instruction text in an optimizer reply.
fn clean_instruction(reply: &str) -> String {
    let mut s = reply.trim();
    if let Some(inner) = s.strip_prefix("```").and_then(|r| r.strip_suffix("```")) {
        s = inner.split_once('\n').map_or(inner, |(_, body)| body).trim();
    }
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        s = &s[1..s.len() - 1];
    }
    s.trim().to_string()
}

pub fn optimize_dst(
    entry: &DstEntry,
    dataset: &[LabeledTurn],
    agent: &dyn Backend,
    optimizer: &dyn Backend,
    config: OptConfig,
) -> Result<OptRun, OptError> {
    let pool: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].slot == entry.slot).collect();
    let needed = config.train_size + config.validation_size;
    if pool.len() < needed || config.batch_size == 0 {
        return Err(OptError::InsufficientData {
            slot: entry.slot.clone(),
            needed,
            got: pool.len(),
        });
    }
    let mut sample = pool;
    sample.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let train: Vec<usize> = sample[..config.train_size].to_vec();
    let validation: Vec<usize> = sample[config.train_size..needed].to_vec();
    let val_turns: Vec<&LabeledTurn> = validation.iter().map(|&i| &dataset[i]).collect();
    let val_gold: Vec<Value> = val_turns.iter().map(|t| t.value.clone()).collect();

    let mut run = OptRun {
        slot: entry.slot.clone(),
        config,
        train: train.clone(),
        validation,
        initial_instruction: entry.instruction.clone(),
        initial_score: 0.0,
        history: Vec::new(),
        best_instruction: entry.instruction.clone(),
        best_score: 0.0,
        aborted: None,
    };
    let abort = |mut run: OptRun, error: BackendError| {
        run.aborted = Some(error.to_string());
        Err(OptError::Backend {
            error,
            partial: Box::new(run),
        })
    };

    let initial = match predict(agent, &entry.instruction, &entry.slot, &val_turns) {
        Ok(p) => compute_score(&p, &val_gold),
        Err(e) => return abort(run, e),
    };
    run.initial_score = initial;
    run.best_score = initial;

    for (b, chunk) in train.chunks(config.batch_size).enumerate() {
        let batch: Vec<&LabeledTurn> = chunk.iter().map(|&i| &dataset[i]).collect();
        let step = (|| {
            let predictions = predict(agent, &run.best_instruction, &entry.slot, &batch)?;
            let reply = optimizer.complete(&rewrite_request(&entry.slot, &run.best_instruction, &batch, &predictions))?;
            let candidate = clean_instruction(&reply);
            let score = compute_score(&predict(agent, &candidate, &entry.slot, &val_turns)?, &val_gold);
            Ok::<_, BackendError>((candidate, score))
        })();
        let (candidate, score) = match step {
            Ok(x) => x,
            Err(e) => return abort(run, e),
        };
        let accepted = score > run.best_score;
        tracing::debug!(slot = %entry.slot, batch = b + 1, score, accepted, "rewrite scored");
        if accepted {
            run.best_instruction = candidate.clone();
            run.best_score = score;
        }
        run.history.push(OptStep {
            batch: b + 1,
            candidate,
            score,
            accepted,
        });
    }
    Ok(run)
}

/// Optimizes several slots at once; each run is independent.
pub fn optimize_slots(
    entries: &[DstEntry],
    dataset: &[LabeledTurn],
    agent: &dyn Backend,
    optimizer: &dyn Backend,
    config: OptConfig,
) -> Vec<Result<OptRun, OptError>> {
    crate::par::map(entries, |e| optimize_dst(e, dataset, agent, optimizer, config))
}
