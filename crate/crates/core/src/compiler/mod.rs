mod codegen;
mod colang;
mod gcg;
mod ir;
mod lint;
mod lower;
mod repair;
pub mod rule;
mod syntax;

pub use codegen::{extract_code, generation_trials, llm_generate_code, refine_code, CodegenError, GeneratedCode, RefineRound, SuccessStats};
pub use colang::emit_colang;
pub use gcg::{assemble_gcg_prompt, GcgError, Paradigm, PromptBundle, PromptTemplates};
pub use ir::*;
pub use lint::{lint_all, lint_ri1, lint_ri2, lint_ri3};
pub use lower::{compile, confirm_instruction, dst_instruction, graph_hash, STANDARD_FALLBACKS};
pub use repair::{repair, RepairError};
pub use syntax::{check_colang, SyntaxError};

use crate::diagnostic::Diagnostic;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CompileError {
    #[error("flow has {} validation error(s)", .0.iter().filter(|d| d.is_error()).count())]
    ValidationFailed(Vec<Diagnostic>),
}
