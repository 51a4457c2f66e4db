//! Settings file. `.toml` files are read as TOML, anything else as JSON.
//!
//! ```toml
//! preamble = "You are a taxi booking assistant."
//!
//! [backend]
//! kind = "http"
//! [backend.http]
//! url = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4o-mini"
//!
//! [server]
//! port = 8080
//! cors_origin = "http://localhost:5173"
//! transcript_dir = "transcripts"
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use codial_core::backend::HttpConfig;
use codial_core::runtime::RuntimeOptions;

use crate::args::BackendKind;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preamble: Option<String>,
    pub backend: BackendConfig,
    pub server: ServerConfig,
    pub runtime: RuntimeOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(with = "kind_name")]
    pub kind: Option<BackendKind>,
    pub script: Option<PathBuf>,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub cors_origin: Option<String>,
    pub transcript_dir: Option<PathBuf>,
    pub replay: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origin: None,
            transcript_dir: None,
            replay: false,
        }
    }
}

mod kind_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::args::BackendKind;

    pub fn serialize<S: Serializer>(kind: &Option<BackendKind>, s: S) -> Result<S::Ok, S::Error> {
        match kind {
            Some(BackendKind::Mock) => s.serialize_some("mock"),
            Some(BackendKind::Http) => s.serialize_some("http"),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BackendKind>, D::Error> {
        match Option::<String>::deserialize(d)?.as_deref() {
            None => Ok(None),
            Some("mock") => Ok(Some(BackendKind::Mock)),
            Some("http") => Ok(Some(BackendKind::Http)),
            Some(other) => Err(serde::de::Error::custom(format!("unknown backend `{other}` (expected mock or http)"))),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Config = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.backend.script, &mut config.server.transcript_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}
