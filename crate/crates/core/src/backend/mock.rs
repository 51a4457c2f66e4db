use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{excerpt, Backend, BackendError, BackendRequest, Purpose};

/// One scripted reply. A request matches when every matcher that is set
/// agrees; the first unconsumed matching entry answers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<Purpose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Substring of the system or user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<MockFailure>,
    /// Never consumed; answers every matching request.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockFailure {
    Status { status: u16, #[serde(default)] body: String },
    Timeout,
    Transport { #[serde(default)] message: String },
}

impl MockEntry {
    pub fn reply(purpose: Purpose, text: impl Into<String>) -> Self {
        MockEntry {
            purpose: Some(purpose),
            tag: None,
            contains: None,
            reply: Some(text.into()),
            error: None,
            repeat: false,
        }
    }

    pub fn failure(purpose: Purpose, failure: MockFailure) -> Self {
        MockEntry {
            reply: None,
            error: Some(failure),
            ..MockEntry::reply(purpose, "")
        }
    }

    pub fn tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn contains(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn repeat(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn matches(&self, r: &BackendRequest) -> bool {
        self.purpose.is_none_or(|p| p == r.purpose)
            && self.tag.as_ref().is_none_or(|t| r.tag.as_ref() == Some(t))
            && self
                .contains
                .as_ref()
                .is_none_or(|c| r.system.contains(c.as_str()) || r.user.contains(c.as_str()))
    }

    fn answer(&self) -> Result<String, BackendError> {
        match &self.error {
            Some(MockFailure::Status { status, body }) => Err(BackendError::Status {
                status: *status,
                body: body.clone(),
            }),
            Some(MockFailure::Timeout) => Err(BackendError::Timeout { timeout_ms: 0 }),
            Some(MockFailure::Transport { message }) => Err(BackendError::Transport {
                message: message.clone(),
            }),
            None => Ok(self.reply.clone().unwrap_or_default()),
        }
    }
}

/// Script file contents: a JSON array of entries, or `{"entries": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            List(Vec<MockEntry>),
            Wrapped(MockScript),
        }
        Ok(match serde_json::from_str(text)? {
            Either::List(entries) => MockScript { entries },
            Either::Wrapped(s) => s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub purpose: Purpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub system: String,
    pub user: String,
    /// Index of the script entry that answered, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<usize>,
    pub result: Result<String, BackendError>,
}

#[derive(Debug, Default)]
struct State {
    entries: Vec<(MockEntry, bool)>,
    log: Vec<CallRecord>,
}

/// Scripted backend. Unmatched requests fail with `ScriptExhausted`; there
/// are no silent defaults.
#[derive(Debug, Default)]
pub struct MockBackend {
    state: Mutex<State>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            state: Mutex::new(State {
                entries: script.entries.into_iter().map(|e| (e, false)).collect(),
                log: Vec::new(),
            }),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = MockEntry>) -> Self {
        Self::new(MockScript {
            entries: entries.into_iter().collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        MockScript::from_json(text).map(Self::new)
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn push(&self, entry: MockEntry) {
        self.lock().entries.push((entry, false));
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.lock().log.clone()
    }

    pub fn call_count(&self, purpose: Purpose) -> usize {
        self.lock().log.iter().filter(|c| c.purpose == purpose).count()
    }

    pub fn clear_log(&self) {
        self.lock().log.clear();
    }

    /// Entries that were expected to be used but were not.
    pub fn unused(&self) -> Vec<MockEntry> {
        self.lock()
            .entries
            .iter()
            .filter(|(e, used)| !used && !e.repeat)
            .map(|(e, _)| e.clone())
            .collect()
    }

    pub fn assert_exhausted(&self) {
        let unused = self.unused();
        assert!(unused.is_empty(), "unused mock entries: {unused:#?}");
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let mut state = self.lock();
        let hit = state
            .entries
            .iter()
            .position(|(e, used)| !used && e.matches(request));
        let (entry, result) = match hit {
            Some(i) => {
                let (e, used) = &mut state.entries[i];
                if !e.repeat {
                    *used = true;
                }
                (Some(i), e.answer())
            }
            None => (
                None,
                Err(BackendError::ScriptExhausted {
                    purpose: request.purpose,
                    detail: format!(
                        "tag {:?}, user message {:?}",
                        request.tag,
                        excerpt(&request.user, 120)
                    ),
                }),
            ),
        };
        state.log.push(CallRecord {
            purpose: request.purpose,
            tag: request.tag.clone(),
            system: request.system.clone(),
            user: request.user.clone(),
            entry,
            result: result.clone(),
        });
        result
    }
}
