//! Language-model access. Every model interaction in the runtime, the code
//! generator and the optimizer goes through [`Backend::complete`].

mod http;
mod intent;
mod mock;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, HttpConfig};
pub use intent::{detect_intent, normalize_utterance};
pub use mock::{CallRecord, MockBackend, MockEntry, MockFailure, MockScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    ValueFromInstruction,
    BooleanNld,
    Intent,
    FallbackChoice,
    Codegen,
    PromptRewrite,
}

impl Purpose {
    pub const ALL: [Purpose; 6] = [
        Purpose::ValueFromInstruction,
        Purpose::BooleanNld,
        Purpose::Intent,
        Purpose::FallbackChoice,
        Purpose::Codegen,
        Purpose::PromptRewrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::ValueFromInstruction => "value_from_instruction",
            Purpose::BooleanNld => "boolean_nld",
            Purpose::Intent => "intent",
            Purpose::FallbackChoice => "fallback_choice",
            Purpose::Codegen => "codegen",
            Purpose::PromptRewrite => "prompt_rewrite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn default_temperature(self) -> f32 {
        match self {
            Purpose::Codegen | Purpose::PromptRewrite => 0.7,
            _ => 0.0,
        }
    }

    pub fn default_max_tokens(self) -> u32 {
        match self {
            Purpose::BooleanNld | Purpose::Intent => 16,
            Purpose::ValueFromInstruction => 64,
            Purpose::FallbackChoice => 64,
            Purpose::PromptRewrite => 1024,
            Purpose::Codegen => 8192,
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub purpose: Purpose,
    pub system: String,
    pub user: String,
    pub temperature: f32,
    pub max_tokens: u32,
    /// What the request is about (slot name, node id, edge condition).
    /// Not sent to the model; used by the mock and by logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl BackendRequest {
    pub fn new(purpose: Purpose, system: impl Into<String>, user: impl Into<String>) -> Self {
        BackendRequest {
            purpose,
            system: system.into(),
            user: user.into(),
            temperature: purpose.default_temperature(),
            max_tokens: purpose.default_max_tokens(),
            tag: None,
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend transport error: {message}")]
    Transport { message: String },
    #[error("backend timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("could not parse backend reply: {message}")]
    Parse { message: String },
    #[error("mock script has no entry for {purpose} request ({detail})")]
    ScriptExhausted { purpose: Purpose, detail: String },
}

impl BackendError {
    /// Worth retrying: server-side failures, throttling, timeouts and
    /// connection problems.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Transport { .. } | BackendError::Timeout { .. } => true,
            _ => false,
        }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Backend backed by a closure; handy for tests and simulations.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&BackendRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        (self.0)(request)
    }
}

/// Shortens long text for error messages.
pub(crate) fn excerpt(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let cut: String = text.chars().take(max).collect();
    format!("{cut}...")
}
