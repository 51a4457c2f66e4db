//! Line-oriented terminal conversation.
//!
//! Every input line is one user turn. `/state` prints the variables and
//! `/quit` ends the session; end of input does too.

use std::io::{self, BufRead, Write};

use codial_core::backend::Backend;
use codial_core::runtime::{display_value, ConversationState, Runtime, TurnResult};

#[derive(Debug, Clone, Default)]
pub struct ChatOptions {
    pub show_state: bool,
    pub show_trace: bool,
    pub preamble: Option<String>,
    /// Print `> ` before reading each line.
    pub prompt: bool,
}

pub fn chat_loop(
    runtime: &Runtime,
    backend: &dyn Backend,
    input: impl BufRead,
    mut out: impl Write,
    options: &ChatOptions,
) -> io::Result<ConversationState> {
    let mut state = runtime.initial_state();
    if let Some(p) = &options.preamble {
        state = state.with_preamble(p.clone());
    }
    let mut lines = input.lines();
    loop {
        if options.prompt {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next().transpose()? else {
            break;
        };
        let line = line.trim();
        match line {
            "" => continue,
            "/quit" | "/exit" => break,
            "/state" => {
                write_state(&mut out, &state)?;
                continue;
            }
            _ => {}
        }
        match runtime.run_turn(&state, line, backend) {
            Ok((result, next)) => {
                state = next;
                writeln!(out, "{}", result.utterance)?;
                if options.show_trace {
                    write_trace(&mut out, &result)?;
                }
                if options.show_state {
                    write_changes(&mut out, &result)?;
                }
            }
            Err(e) => {
                writeln!(out, "[turn failed: {e}]")?;
                if options.show_trace {
                    for step in &e.trace {
                        writeln!(out, "  {} | {} -> {}", step.point, step.predicate, step.outcome)?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(state)
}

fn write_state(out: &mut impl Write, state: &ConversationState) -> io::Result<()> {
    for (k, v) in state.slots.iter().chain(&state.helpers) {
        writeln!(out, "  {k} = {}", display_value(v))?;
    }
    Ok(())
}

fn write_trace(out: &mut impl Write, result: &TurnResult) -> io::Result<()> {
    for step in &result.trace {
        writeln!(out, "  {} | {} -> {}", step.point, step.predicate, step.outcome)?;
    }
    Ok(())
}

fn write_changes(out: &mut impl Write, result: &TurnResult) -> io::Result<()> {
    for (k, d) in &result.state_delta {
        writeln!(out, "  {k}: {} -> {}", display_value(&d.old), display_value(&d.new))?;
    }
    Ok(())
}
