#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use codial_cli::server::{router, AppState};
use codial_cli::session::{read_transcript, replay_file, SessionStore, TranscriptRecord};
use codial_core::backend::{Backend, BackendRequest, FnBackend, Purpose};
use codial_core::chief::{parse_chief, ChiefGraph};
use codial_core::compiler::{compile, GuardrailProgram};
use codial_core::runtime::Runtime;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn flow_path(name: &str) -> PathBuf {
    fixture(&format!("../core/fixtures/flows/{name}.chief.json"))
}

pub fn flow(name: &str) -> ChiefGraph {
    parse_chief(&std::fs::read_to_string(flow_path(name)).unwrap()).unwrap()
}

pub fn program(name: &str) -> GuardrailProgram {
    compile(&flow(name)).unwrap()
}

/// Replies depend only on the last user message, so a session's results do
/// not depend on how it is interleaved with others.
pub fn keyed_backend() -> Arc<dyn Backend> {
    Arc::new(FnBackend(|req: &BackendRequest| {
        let last = req
            .user
            .lines()
            .filter_map(|l| l.strip_prefix("User: "))
            .last()
            .unwrap_or("")
            .to_string();
        let k: usize = last.rsplit('m').next().and_then(|n| n.trim().parse().ok()).unwrap_or(0);
        let reply = match (req.purpose, req.tag.as_deref()) {
            (Purpose::Intent, _) => "none".to_string(),
            (Purpose::ValueFromInstruction, Some("departure")) => format!("Stop {}", k / 2),
            (Purpose::ValueFromInstruction, Some("arrival")) if k % 4 == 1 => "None".into(),
            (Purpose::ValueFromInstruction, Some("arrival")) => "Airport".into(),
            (Purpose::ValueFromInstruction, Some("time")) if k % 3 == 0 => "None".into(),
            (Purpose::ValueFromInstruction, Some("time")) => format!("{}:00", k % 12 + 1),
            (Purpose::BooleanNld, _) => "yes".into(),
            _ => "I am not sure".into(),
        };
        Ok(reply)
    }))
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn start(name: &str, backend: Arc<dyn Backend>, transcripts: Option<&Path>, cors: Option<&str>) -> TestServer {
    let graph = flow(name);
    let runtime = Runtime::new(compile(&graph).unwrap());
    let store = SessionStore::new(transcripts.map(Path::to_path_buf));
    start_with(AppState::new(runtime, backend, Some(&graph), store, None), cors).await
}

pub async fn start_with(state: AppState, cors: Option<&str>) -> TestServer {
    let state = Arc::new(state);
    let app = router(state.clone(), cors).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let task = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    TestServer { base, state, task }
}

pub async fn create_session(client: &reqwest::Client, base: &str) -> String {
    let resp = client.post(format!("{base}/conversations")).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    let body: Value = resp.json().await.unwrap();
    body["session_id"].as_str().unwrap().to_string()
}

pub async fn say(client: &reqwest::Client, base: &str, id: &str, text: &str) -> reqwest::Response {
    client
        .post(format!("{base}/conversations/{id}/messages"))
        .json(&json!({ "text": text }))
        .send()
        .await
        .unwrap()
}

pub async fn get_json(client: &reqwest::Client, url: &str) -> Value {
    client.get(url).send().await.unwrap().json().await.unwrap()
}

#[derive(Debug)]
pub struct Linearizability {
    pub requests: usize,
    pub conflicts: usize,
}

/// Fires `sessions * per_session` messages at once, retrying each on 409,
/// then checks every transcript against the live state, both replay modes
/// and a restored store.
pub async fn linearizability(sessions: usize, per_session: usize) -> Result<Linearizability, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let backend = keyed_backend();
    let server = start("taxi", backend.clone(), Some(dir.path()), None).await;
    let client = reqwest::Client::new();
    let mut ids = Vec::new();
    for _ in 0..sessions {
        ids.push(create_session(&client, &server.base).await);
    }

    let mut tasks = Vec::new();
    for k in 0..per_session {
        for (s, id) in ids.iter().enumerate() {
            let (client, base, id) = (client.clone(), server.base.clone(), id.clone());
            let text = format!("s{s} m{k}");
            tasks.push(tokio::spawn(async move {
                let mut conflicts = 0;
                loop {
                    let resp = say(&client, &base, &id, &text).await;
                    match resp.status().as_u16() {
                        200 => return Ok(conflicts),
                        409 => {
                            conflicts += 1;
                            tokio::time::sleep(Duration::from_millis(1 + (conflicts % 5) as u64)).await;
                        }
                        other => return Err(format!("{text}: HTTP {other}: {}", resp.text().await.unwrap_or_default())),
                    }
                }
            }));
        }
    }
    let mut conflicts = 0;
    for t in tasks {
        conflicts += t.await.map_err(|e| e.to_string())??;
    }

    let runtime = &server.state.runtime;
    for (s, id) in ids.iter().enumerate() {
        let path = dir.path().join(format!("{id}.jsonl"));
        let records = read_transcript(&path).map_err(|e| format!("{e:#}"))?;
        let users: Vec<String> = records
            .iter()
            .filter_map(|r| match r {
                TranscriptRecord::Turn { user, .. } => Some(user.clone()),
                _ => None,
            })
            .collect();
        let expected: BTreeSet<String> = (0..per_session).map(|k| format!("s{s} m{k}")).collect();
        let seen: BTreeSet<String> = users.iter().cloned().collect();
        if users.len() != per_session || seen != expected {
            return Err(format!("session {s}: transcript has turns {users:?}"));
        }
        let live: Value = get_json(&client, &format!("{}/conversations/{id}/state", server.base)).await;
        let history_len = live["history"].as_array().map_or(0, Vec::len);
        if history_len != 2 * per_session {
            return Err(format!("session {s}: live history has {history_len} messages"));
        }
        let from_deltas = replay_file(runtime, &path, None).map_err(|e| format!("{e:#}"))?;
        let rerun = replay_file(runtime, &path, Some(&*backend)).map_err(|e| format!("{e:#}"))?;
        let live_state = json!({ "slots": live["slots"], "helpers": live["helpers"], "history": live["history"] });
        for (how, session) in [("delta replay", &from_deltas), ("re-run", &rerun)] {
            let st = &session.state;
            let got = json!({ "slots": st.slots, "helpers": st.helpers, "history": st.history });
            if got != live_state {
                return Err(format!("session {s}: {how} differs from the live state"));
            }
        }
    }

    let restored = SessionStore::new(Some(dir.path().to_path_buf()));
    let n = restored.restore(runtime).map_err(|e| format!("{e:#}"))?;
    if n != sessions {
        return Err(format!("restored {n} of {sessions} sessions"));
    }
    for id in &ids {
        let uuid = id.parse().unwrap();
        let a = server.state.store.get(&uuid).unwrap().session.lock().await.state.clone();
        let b = restored.get(&uuid).unwrap().session.lock().await.state.clone();
        if a != b {
            return Err(format!("restored session {id} differs"));
        }
    }
    Ok(Linearizability {
        requests: sessions * per_session,
        conflicts,
    })
}
