use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use anyhow::{anyhow, Context};

use codial_core::chief::validate_chief;
use codial_core::compiler::{
    emit_colang, lint_ri1, lint_ri2, lint_ri3, llm_generate_code, refine_code, repair, Paradigm, PromptTemplates,
};
use codial_core::diagnostic::has_errors;
use codial_core::eval::{evaluate, load_dialogues, EvalOptions, Smoothing};
use codial_core::promptopt::{labeled_turns, optimize_slots, OptConfig, OptError, OptRun};
use codial_core::runtime::Runtime;

use crate::args::{ChatArgs, Command, EvalArgs, GenCodeArgs, OptimizeArgs};
use crate::chat::{chat_loop, ChatOptions};
use crate::config::Config;
use crate::input::{self, Loaded};
use crate::{CliError, EXIT_FAILED, EXIT_OK};

pub fn dispatch(command: Command, config: &Config) -> Result<i32, CliError> {
    match command {
        Command::Validate { flow } => validate(&flow),
        Command::Compile { flow, output } => {
            let graph = input::load_flow(&flow)?;
            let program = input::compile_flow(&graph)?;
            input::emit(output.as_deref(), &program.to_canonical_json())?;
            Ok(EXIT_OK)
        }
        Command::EmitColang { input: path, output } => {
            let (program, _) = input::load_program(&path)?;
            input::emit(output.as_deref(), &emit_colang(&program))?;
            Ok(EXIT_OK)
        }
        Command::Lint {
            ir,
            flow,
            ri3,
            repair: repaired,
        } => lint(&ir, &flow, ri3, repaired.as_deref()),
        Command::GenCode(args) => gen_code(args, config),
        Command::Chat(args) => chat(args, config),
        Command::Serve(args) => crate::server::serve_command(args, config),
        Command::Eval(args) => eval(args, config),
        Command::OptimizeDst(args) => optimize(args, config),
        Command::SetInstruction { ir, slot, text, output } => {
            let (mut program, _) = input::load_program(&ir)?;
            let text = input::instruction_text(&text)?;
            let entry = program
                .dst_table
                .iter_mut()
                .find(|e| e.slot == slot)
                .ok_or_else(|| anyhow!("program has no slot `{slot}`"))?;
            entry.instruction = text;
            input::emit(output.as_deref().or(Some(ir.as_path())), &program.to_canonical_json())?;
            Ok(EXIT_OK)
        }
    }
}

fn validate(path: &Path) -> Result<i32, CliError> {
    let graph = input::load_flow(path)?;
    let diagnostics = validate_chief(&graph);
    input::print_diagnostics(&diagnostics);
    Ok(if has_errors(&diagnostics) { EXIT_FAILED } else { EXIT_OK })
}

fn lint(ir: &Path, flow: &Path, ri3: bool, repaired: Option<&Path>) -> Result<i32, CliError> {
    let program = match input::load(ir)? {
        Loaded::Program(p) => p,
        Loaded::Flow(_) => return Err(CliError::Usage(format!("{} is a flow, not a compiled program", ir.display()))),
    };
    let graph = input::load_flow(flow)?;
    let mut diagnostics = lint_ri1(&program, &graph);
    diagnostics.extend(lint_ri2(&program, &graph));
    let blocking = !diagnostics.is_empty();
    if ri3 {
        diagnostics.extend(lint_ri3(&program, &graph));
    }
    input::print_diagnostics(&diagnostics);
    if let Some(out) = repaired {
        let fixed = repair(&program, &graph, &diagnostics).map_err(|e| CliError::Failed(e.into()))?;
        input::write(out, &fixed.to_canonical_json())?;
        let left = lint_ri1(&fixed, &graph).len() + lint_ri2(&fixed, &graph).len();
        eprintln!("wrote repaired program to {} ({left} finding(s) left)", out.display());
        return Ok(if left == 0 { EXIT_OK } else { EXIT_FAILED });
    }
    Ok(if blocking { EXIT_FAILED } else { EXIT_OK })
}

fn gen_code(args: GenCodeArgs, config: &Config) -> Result<i32, CliError> {
    let paradigm: Paradigm = args.paradigm.parse().map_err(|e: codial_core::compiler::GcgError| CliError::Usage(e.to_string()))?;
    let graph = input::load_flow(&args.flow)?;
    let templates = match &args.prompts {
        Some(dir) => PromptTemplates::with_overrides(dir).map_err(|e| CliError::Failed(e.into()))?,
        None => PromptTemplates::builtin(),
    };
    let known = templates.refinements();
    if let Some(bad) = args.refine.iter().find(|r| !known.contains(r)) {
        return Err(CliError::Usage(format!("unknown refinement `{bad}` (known: {})", known.join(", "))));
    }
    let bundle = templates.assemble(&graph, paradigm).map_err(|e| CliError::Failed(e.into()))?;
    if args.prompt_only {
        let text = format!("### system\n{}\n\n### user\n{}\n", bundle.system.trim_end(), bundle.user.trim_end());
        input::emit(args.output.as_deref(), &text)?;
        return Ok(EXIT_OK);
    }
    let backend = input::backend(&args.backend, config)?;
    let generated = llm_generate_code(&bundle, &*backend, args.retries).map_err(|e| CliError::Failed(e.into()))?;
    eprintln!("generated in {} attempt(s)", generated.attempts);
    let mut code = generated.code;
    if !args.refine.is_empty() {
        let (refined, rounds) = refine_code(&code, &graph, &bundle, &templates, &args.refine, &*backend, args.retries)
            .map_err(|e| CliError::Failed(e.into()))?;
        for r in &rounds {
            let verdict = if r.accepted { "accepted" } else { "rejected" };
            eprintln!("{}: {verdict} after {} attempt(s)", r.instruction, r.attempts);
        }
        code = refined;
    }
    if !code.ends_with('\n') {
        code.push('\n');
    }
    input::emit(args.output.as_deref(), &code)?;
    Ok(EXIT_OK)
}

fn chat(args: ChatArgs, config: &Config) -> Result<i32, CliError> {
    let (program, _) = input::load_program(&args.input)?;
    let backend = input::backend(&args.backend, config)?;
    let runtime = Runtime::new(program).with_options(config.runtime);
    let options = ChatOptions {
        show_state: args.show_state,
        show_trace: args.show_trace,
        preamble: args.preamble.or_else(|| config.preamble.clone()),
        prompt: atty_prompt(),
    };
    let stdin = io::stdin();
    chat_loop(&runtime, &*backend, stdin.lock(), io::stdout(), &options).context("terminal i/o")?;
    Ok(EXIT_OK)
}

/// Shows a `> ` prompt only when a person is typing.
fn atty_prompt() -> bool {
    use std::io::IsTerminal;
    io::stdin().is_terminal()
}

fn eval(args: EvalArgs, config: &Config) -> Result<i32, CliError> {
    let smoothing: Smoothing = args.smoothing.parse().map_err(CliError::Usage)?;
    let (program, graph) = input::load_program(&args.input)?;
    let graph = input::require_flow(graph, args.flow.as_deref())?;
    input::check_source(&program, &graph);
    let dialogues = load_dialogues(&input::read(&args.data)?).map_err(|e| CliError::Failed(anyhow!("{}: {e}", args.data.display())))?;
    let backend = input::backend(&args.backend, config)?;
    let options = EvalOptions {
        oracle_state: args.oracle_state,
        smoothing,
        runtime: config.runtime,
        parallelism: args.threads,
    };
    let report = evaluate(&program, &graph, &dialogues, &*backend, options).map_err(|e| CliError::Failed(e.into()))?;
    print!("{}", report.summary.table());
    if let Some(p) = &args.json {
        input::write(p, &report.to_json())?;
    }
    if let Some(p) = &args.csv {
        input::write(p, &report.to_csv())?;
    }
    Ok(EXIT_OK)
}

fn optimize(args: OptimizeArgs, config: &Config) -> Result<i32, CliError> {
    let (mut program, _) = input::load_program(&args.input)?;
    let dialogues = load_dialogues(&input::read(&args.data)?).map_err(|e| CliError::Failed(anyhow!("{}: {e}", args.data.display())))?;
    let entries: Vec<_> = if args.slots.is_empty() {
        program.dst_table.clone()
    } else {
        args.slots
            .iter()
            .map(|s| program.dst_entry(s).cloned().ok_or_else(|| CliError::Usage(format!("program has no slot `{s}`"))))
            .collect::<Result<_, _>>()?
    };
    let dataset: Vec<_> = entries.iter().flat_map(|e| labeled_turns(&dialogues, &e.slot)).collect();
    let agent = input::backend(&args.backend, config)?;
    let optimizer = match &args.optimizer_script {
        Some(p) => input::mock_from(p)?,
        None => agent.clone(),
    };
    let opt = OptConfig {
        train_size: args.train,
        validation_size: args.validation,
        batch_size: args.batch,
        seed: args.seed,
    };
    let results = optimize_slots(&entries, &dataset, &*agent, &*optimizer, opt);

    let mut runs: BTreeMap<String, OptRun> = BTreeMap::new();
    let mut failed = false;
    for (entry, result) in entries.iter().zip(results) {
        let run = match result {
            Ok(run) => run,
            Err(OptError::Backend { error, partial }) => {
                eprintln!("{}: stopped early: {error}", entry.slot);
                failed = true;
                *partial
            }
            Err(e) => {
                eprintln!("{}: {e}", entry.slot);
                failed = true;
                continue;
            }
        };
        let accepted = run.history.iter().filter(|s| s.accepted).count();
        println!(
            "{}: {:.1} -> {:.1} ({accepted} of {} rewrites accepted)",
            run.slot,
            run.initial_score,
            run.best_score,
            run.history.len()
        );
        if let Some(e) = program.dst_table.iter_mut().find(|e| e.slot == run.slot) {
            e.instruction = run.best_instruction.clone();
        }
        runs.insert(run.slot.clone(), run);
    }
    if let Some(p) = &args.report {
        input::write(p, &(serde_json::to_string_pretty(&runs).context("serializing report")? + "\n"))?;
    }
    if let Some(p) = &args.output {
        input::write(p, &program.to_canonical_json())?;
    }
    Ok(if failed { EXIT_FAILED } else { EXIT_OK })
}
