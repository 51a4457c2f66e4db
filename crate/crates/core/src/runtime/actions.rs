use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde_json::Value;
use sha2::{Digest, Sha256};

pub type ActionArgs = BTreeMap<String, Value>;
type ActionFn = dyn Fn(&ActionArgs) -> Result<Value, String> + Send + Sync;

#[derive(Debug, Clone, PartialEq, thiserror::Error, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalActionError {
    #[error("no external function named `{name}` is registered")]
    UnknownFunction { name: String },
    #[error("external function `{function}` failed: {message}")]
    Failed { function: String, message: String },
}

/// External functions callable from external-action nodes.
#[derive(Clone, Default)]
pub struct ActionRegistry {
    functions: HashMap<String, Arc<ActionFn>>,
}

impl fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.functions.keys().collect();
        names.sort();
        f.debug_struct("ActionRegistry").field("functions", &names).finish()
    }
}

/// `REF-` plus the first six hex digits of the SHA-256 of the arguments'
/// canonical JSON, uppercased.
pub fn reference_number(args: &ActionArgs) -> String {
    let canonical = serde_json::to_string(args).expect("arguments serialize");
    let digest = hex::encode(Sha256::digest(canonical.as_bytes()));
    format!("REF-{}", digest[..6].to_uppercase())
}

const FORECASTS: &[&str] = &["sunny", "cloudy", "rainy", "windy"];

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Deterministic stand-ins for the fixture flows' functions.
    pub fn with_stubs() -> Self {
        let mut r = Self::new();
        r.register("book_taxi", |args| Ok(Value::String(reference_number(args))));
        r.register("book_table", |args| Ok(Value::String(reference_number(args))));
        r.register("get_weather", |args| {
            let city = args.get("city").and_then(Value::as_str).unwrap_or_default();
            let digest = Sha256::digest(city.to_lowercase().as_bytes());
            Ok(Value::String(FORECASTS[digest[0] as usize % FORECASTS.len()].to_string()))
        });
        r
    }

    pub fn register<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: Fn(&ActionArgs) -> Result<Value, String> + Send + Sync + 'static,
    {
        self.functions.insert(name.into(), Arc::new(f));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn call(&self, name: &str, args: &ActionArgs) -> Result<Value, ExternalActionError> {
        let f = self
            .functions
            .get(name)
            .ok_or_else(|| ExternalActionError::UnknownFunction { name: name.to_string() })?;
        f(args).map_err(|message| ExternalActionError::Failed {
            function: name.to_string(),
            message,
        })
    }
}
