//! Live conversations and their JSONL transcripts.
//!
//! A transcript file `<id>.jsonl` starts with one `session` record followed
//! by one `turn` record per completed turn.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};
use uuid::Uuid;

use codial_core::backend::Backend;
use codial_core::runtime::{ConversationState, Runtime, TurnResult};

/// Turns buffered per SSE subscriber before it starts missing events.
const EVENT_BUFFER: usize = 64;

#[derive(Debug, Clone)]
pub struct Session {
    pub id: Uuid,
    pub program_hash: String,
    pub state: ConversationState,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Session {
        id: Uuid,
        program_hash: String,
        created: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preamble: Option<String>,
    },
    Turn {
        started: DateTime<Utc>,
        finished: DateTime<Utc>,
        user: String,
        result: TurnResult,
    },
}

impl Session {
    pub fn header(&self) -> TranscriptRecord {
        TranscriptRecord::Session {
            id: self.id,
            program_hash: self.program_hash.clone(),
            created: self.created,
            preamble: self.state.context_preamble.clone(),
        }
    }

    /// Appends one record to the transcript file, if there is one.
    pub fn log(&self, record: &TranscriptRecord) -> anyhow::Result<()> {
        let Some(path) = &self.transcript else {
            return Ok(());
        };
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        file.write_all(line.as_bytes())
            .with_context(|| format!("appending to {}", path.display()))
    }
}

pub struct SessionHandle {
    pub session: Arc<Mutex<Session>>,
    pub events: broadcast::Sender<TurnResult>,
}

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<Uuid, Arc<SessionHandle>>>,
    transcript_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(transcript_dir: Option<PathBuf>) -> Self {
        SessionStore {
            sessions: RwLock::default(),
            transcript_dir,
        }
    }

    pub fn transcript_dir(&self) -> Option<&Path> {
        self.transcript_dir.as_deref()
    }

    pub fn create(&self, runtime: &Runtime, preamble: Option<String>) -> anyhow::Result<Uuid> {
        let id = Uuid::new_v4();
        let now = Utc::now();
        let mut state = runtime.initial_state();
        state.context_preamble = preamble;
        let session = Session {
            id,
            program_hash: runtime.program().source_graph_hash.clone(),
            state,
            created: now,
            updated: now,
            transcript: self.transcript_dir.as_ref().map(|d| d.join(format!("{id}.jsonl"))),
        };
        session.log(&session.header())?;
        self.insert(session);
        Ok(id)
    }

    pub fn insert(&self, session: Session) {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let handle = SessionHandle {
            session: Arc::new(Mutex::new(session.clone())),
            events,
        };
        self.sessions.write().unwrap().insert(session.id, Arc::new(handle));
    }

    pub fn get(&self, id: &Uuid) -> Option<Arc<SessionHandle>> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Restores every transcript in the directory. Returns how many sessions
    /// were loaded.
    pub fn restore(&self, runtime: &Runtime) -> anyhow::Result<usize> {
        let Some(dir) = &self.transcript_dir else {
            return Ok(0);
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in &paths {
            let session = replay_file(runtime, path, None)?;
            self.insert(session);
        }
        Ok(paths.len())
    }
}

pub fn read_transcript(path: &Path) -> anyhow::Result<Vec<TranscriptRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad transcript record", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Rebuilds a session from its transcript. Without a backend the recorded
/// state changes are applied as they are; with one every user turn is run
/// again and must give the recorded result.
pub fn replay_file(runtime: &Runtime, path: &Path, backend: Option<&dyn Backend>) -> anyhow::Result<Session> {
    let records = read_transcript(path)?;
    let Some(TranscriptRecord::Session {
        id,
        program_hash,
        created,
        preamble,
    }) = records.first().cloned()
    else {
        bail!("{}: transcript does not start with a session record", path.display());
    };
    if program_hash != runtime.program().source_graph_hash {
        bail!("{}: transcript belongs to a different program", path.display());
    }
    let mut state = runtime.initial_state();
    state.context_preamble = preamble;
    let mut updated = created;
    for (i, record) in records.iter().enumerate().skip(1) {
        let TranscriptRecord::Turn { finished, user, result, .. } = record else {
            bail!("{}: record {} is a second session header", path.display(), i + 1);
        };
        match backend {
            None => state.apply(user, &result.utterance, &result.state_delta),
            Some(b) => {
                let (again, next) = runtime
                    .run_turn(&state, user, b)
                    .map_err(|e| anyhow::anyhow!("{}: turn {i} failed on replay: {e}", path.display()))?;
                if again != *result {
                    bail!("{}: turn {i} gave a different result on replay", path.display());
                }
                state = next;
            }
        }
        updated = *finished;
    }
    Ok(Session {
        id,
        program_hash,
        state,
        created,
        updated,
        transcript: Some(path.to_path_buf()),
    })
}
