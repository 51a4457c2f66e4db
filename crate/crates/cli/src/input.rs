use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use serde_json::Value;

use codial_core::backend::{Backend, HttpBackend, MockBackend};
use codial_core::chief::{graph_from_value, validate_chief, ChiefGraph};
use codial_core::compiler::{compile, GuardrailProgram};
use codial_core::diagnostic::{has_errors, Diagnostic};

use crate::args::{BackendArgs, BackendKind};
use crate::config::Config;
use crate::CliError;

/// A flow document or a compiled program, told apart by their keys.
pub enum Loaded {
    Flow(ChiefGraph),
    Program(GuardrailProgram),
}

pub fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `path`, or to standard output without one.
pub fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn print_diagnostics(diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        eprintln!("{d}");
    }
}

pub fn load_flow(path: &Path) -> Result<ChiefGraph, CliError> {
    let text = read(path)?;
    codial_core::chief::parse_chief(&text).map_err(|e| CliError::Failed(anyhow!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = read(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Failed(anyhow!("{}: not JSON: {e}", path.display())))?;
    if value.get("nap_tree").is_some() {
        let program = serde_json::from_value(value)
            .map_err(|e| CliError::Failed(anyhow!("{}: not a guardrail program: {e}", path.display())))?;
        Ok(Loaded::Program(program))
    } else {
        let graph = graph_from_value(&value).map_err(|e| CliError::Failed(anyhow!("{}: {e}", path.display())))?;
        Ok(Loaded::Flow(graph))
    }
}

/// Compiles after validation, printing the diagnostics on failure.
pub fn compile_flow(graph: &ChiefGraph) -> Result<GuardrailProgram, CliError> {
    let diagnostics = validate_chief(graph);
    if has_errors(&diagnostics) {
        print_diagnostics(&diagnostics);
        return Err(CliError::Reported);
    }
    compile(graph).map_err(|e| CliError::Failed(e.into()))
}

/// The program, plus the flow when the input was one.
pub fn load_program(path: &Path) -> Result<(GuardrailProgram, Option<ChiefGraph>), CliError> {
    match load(path)? {
        Loaded::Program(p) => Ok((p, None)),
        Loaded::Flow(g) => Ok((compile_flow(&g)?, Some(g))),
    }
}

pub fn backend(args: &BackendArgs, config: &Config) -> Result<Arc<dyn Backend>, CliError> {
    let kind = args.backend.or(config.backend.kind).unwrap_or(BackendKind::Mock);
    match kind {
        BackendKind::Mock => {
            let script = args.script.as_ref().or(config.backend.script.as_ref());
            let mock = match script {
                Some(p) => MockBackend::from_file(p).with_context(|| format!("loading mock script {}", p.display()))?,
                None => MockBackend::default(),
            };
            Ok(Arc::new(mock))
        }
        BackendKind::Http => {
            if args.script.is_some() {
                return Err(CliError::Usage("--script only applies to the mock backend".into()));
            }
            let http = HttpBackend::from_env(config.backend.http.clone()).map_err(|e| CliError::Failed(e.into()))?;
            Ok(Arc::new(http))
        }
    }
}

pub fn mock_from(path: &Path) -> anyhow::Result<Arc<dyn Backend>> {
    let mock = MockBackend::from_file(path).with_context(|| format!("loading mock script {}", path.display()))?;
    Ok(Arc::new(mock))
}

pub fn require_flow(graph: Option<ChiefGraph>, flag: Option<&Path>) -> Result<ChiefGraph, CliError> {
    match (graph, flag) {
        (Some(g), _) => Ok(g),
        (None, Some(p)) => load_flow(p),
        (None, None) => Err(CliError::Usage("a compiled program needs --flow <flow document>".into())),
    }
}

/// Warns when a program was not compiled from `graph`.
pub fn check_source(program: &GuardrailProgram, graph: &ChiefGraph) {
    let hash = codial_core::compiler::graph_hash(graph);
    if program.source_graph_hash != hash {
        eprintln!(
            "warning: program was compiled from a different flow (hash {} vs {})",
            &program.source_graph_hash[..program.source_graph_hash.len().min(12)],
            &hash[..12]
        );
    }
}

pub fn instruction_text(arg: &str) -> anyhow::Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => Ok(read(Path::new(path))?.trim_end().to_string()),
        None if arg.trim().is_empty() => bail!("instruction text is empty"),
        None => Ok(arg.to_string()),
    }
}
