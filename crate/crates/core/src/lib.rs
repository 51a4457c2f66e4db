pub mod backend;
pub mod chief;
pub mod compiler;
pub mod diagnostic;
pub mod eval;
pub mod par;
pub mod promptopt;
pub mod runtime;
pub mod scenario;
pub mod synth;
