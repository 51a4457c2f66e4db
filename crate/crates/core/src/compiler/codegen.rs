//! Language-model code generation with syntax-checked retries and
//! refinement rounds.

use serde::{Deserialize, Serialize};

use super::gcg::{GcgError, PromptBundle, PromptTemplates};
use super::syntax::{check_colang, SyntaxError};
use crate::backend::{Backend, BackendError, BackendRequest, Purpose};
use crate::chief::ChiefGraph;

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("no syntactically valid program after {attempts} attempt(s); last errors: {}", summarize(.errors))]
    GenerationExhausted { attempts: usize, errors: Vec<SyntaxError> },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] GcgError),
}

fn summarize(errors: &[SyntaxError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCode {
    pub code: String,
    pub attempts: usize,
    /// Syntax errors of each rejected candidate, in order.
    pub rejected: Vec<Vec<SyntaxError>>,
}

/// Contents of the first fenced block, or the whole reply when there is none.
pub fn extract_code(reply: &str) -> String {
    let Some(start) = reply.find("```") else {
        return ensure_newline(reply.trim());
    };
    let after = &reply[start + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let body = match body.find("```") {
        Some(end) => &body[..end],
        None => body,
    };
    ensure_newline(body.trim_end())
}

fn ensure_newline(s: &str) -> String {
    let mut s = s.to_string();
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

/// Asks for a program up to `max_retries` times, regenerating from the same
/// prompt after each candidate that fails the syntax check.
pub fn llm_generate_code(
    bundle: &PromptBundle,
    backend: &dyn Backend,
    max_retries: usize,
) -> Result<GeneratedCode, CodegenError> {
    let request = BackendRequest::new(Purpose::Codegen, bundle.system.clone(), bundle.user.clone())
        .tagged(bundle.paradigm.as_str());
    let mut rejected = Vec::new();
    for attempt in 1..=max_retries.max(1) {
        let code = extract_code(&backend.complete(&request)?);
        match check_colang(&code) {
            Ok(()) => {
                return Ok(GeneratedCode {
                    code,
                    attempts: attempt,
                    rejected,
                })
            }
            Err(errors) => {
                tracing::debug!(attempt, errors = errors.len(), "generated program rejected");
                rejected.push(errors);
            }
        }
    }
    Err(CodegenError::GenerationExhausted {
        attempts: rejected.len(),
        errors: rejected.pop().unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRound {
    pub instruction: String,
    /// Backend calls used by the round, syntax repairs included.
    pub attempts: usize,
    pub accepted: bool,
}

/// Applies each refinement instruction in turn. A round whose output still
/// fails the syntax check after `max_retries` calls is dropped and the
/// previous program kept.
pub fn refine_code(
    code: &str,
    graph: &ChiefGraph,
    bundle: &PromptBundle,
    templates: &PromptTemplates,
    instructions: &[String],
    backend: &dyn Backend,
    max_retries: usize,
) -> Result<(String, Vec<RefineRound>), CodegenError> {
    let mut current = code.to_string();
    let mut rounds = Vec::new();
    for ri in instructions {
        let mut user = templates.refinement(ri, graph, &current)?;
        let mut accepted = false;
        let mut attempts = 0;
        while attempts < max_retries.max(1) {
            attempts += 1;
            let request = BackendRequest::new(Purpose::Codegen, bundle.system.clone(), user.clone()).tagged(ri.clone());
            let candidate = extract_code(&backend.complete(&request)?);
            match check_colang(&candidate) {
                Ok(()) => {
                    current = candidate;
                    accepted = true;
                    break;
                }
                Err(errors) => {
                    let listed: Vec<String> = errors.iter().map(|e| format!("- {e}")).collect();
                    user = templates.syntax_fix(&candidate, &listed.join("\n"))?;
                }
            }
        }
        rounds.push(RefineRound {
            instruction: ri.clone(),
            attempts,
            accepted,
        });
    }
    Ok((current, rounds))
}

/// Per-task success counts over repeated single-shot generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub tasks: usize,
    pub trials_per_task: usize,
    pub successes: usize,
    pub min: usize,
    pub max: usize,
    pub average: f64,
    /// Successes over all generations, as a percentage.
    pub rate: f64,
}

impl SuccessStats {
    /// `outcomes[t][k]` is whether trial `k` of task `t` passed. Every task
    /// must have the same number of trials.
    pub fn from_outcomes(outcomes: &[Vec<bool>]) -> Option<Self> {
        let trials = outcomes.first()?.len();
        if trials == 0 || outcomes.iter().any(|t| t.len() != trials) {
            return None;
        }
        let counts: Vec<usize> = outcomes.iter().map(|t| t.iter().filter(|&&ok| ok).count()).collect();
        let successes: usize = counts.iter().sum();
        Some(SuccessStats {
            tasks: counts.len(),
            trials_per_task: trials,
            successes,
            min: counts.iter().copied().min().unwrap_or(0),
            max: counts.iter().copied().max().unwrap_or(0),
            average: successes as f64 / counts.len() as f64,
            rate: 100.0 * successes as f64 / (counts.len() * trials) as f64,
        })
    }
}

/// One backend call per trial, no retries; records whether each reply passes
/// the syntax check.
pub fn generation_trials(
    bundles: &[PromptBundle],
    backend: &dyn Backend,
    trials: usize,
) -> Result<Vec<Vec<bool>>, BackendError> {
    bundles
        .iter()
        .map(|b| {
            (0..trials)
                .map(|_| match llm_generate_code(b, backend, 1) {
                    Ok(_) => Ok(true),
                    Err(CodegenError::GenerationExhausted { .. }) => Ok(false),
                    Err(CodegenError::Backend(e)) => Err(e),
                    Err(CodegenError::Template(_)) => unreachable!("no templates rendered"),
                })
                .collect()
        })
        .collect()
}
