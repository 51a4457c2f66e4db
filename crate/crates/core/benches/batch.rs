//! Parallel against sequential batch work: compiling and linting random
//! flows, and offline evaluation with an instant and a slow backend.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use codial_core::backend::{BackendError, BackendRequest, FnBackend, Purpose};
use codial_core::chief::{parse_chief, ChiefGraph};
use codial_core::compiler::{compile, lint_ri1, lint_ri2};
use codial_core::eval::{evaluate, load_dialogues, EvalOptions, GroundTruthDialogue};
use codial_core::par;
use codial_core::synth::{random_graph, GraphShape};

const CONFIRM: &str = include_str!("../fixtures/flows/confirm.chief.json");
const DIALOGUES: &str = include_str!("../fixtures/eval/confirm.jsonl");

fn compile_and_lint(g: &ChiefGraph) -> usize {
    let p = compile(g).expect("random flows compile");
    lint_ri1(&p, g).len() + lint_ri2(&p, g).len()
}

fn bench_compile(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let graphs: Vec<ChiefGraph> = (0..256)
        .map(|_| random_graph(&mut rng, GraphShape { max_nodes: 40, ..Default::default() }))
        .collect();
    let mut group = c.benchmark_group("compile_lint_256_flows");
    group.bench_function("sequential", |b| b.iter(|| par::map_sequential(black_box(&graphs), compile_and_lint)));
    group.bench_function("parallel", |b| b.iter(|| par::map(black_box(&graphs), compile_and_lint)));
    group.finish();
}

fn reply(req: &BackendRequest) -> Result<String, BackendError> {
    let tag = req.tag.as_deref().unwrap_or_default();
    Ok(match (req.purpose, tag) {
        (Purpose::ValueFromInstruction, "restaurant") => "Golden Curry",
        (Purpose::ValueFromInstruction, "people") => "4",
        (Purpose::ValueFromInstruction, "day") => "friday",
        (Purpose::ValueFromInstruction, _) => "yes",
        (Purpose::BooleanNld, "n2->n3") => "True",
        (Purpose::BooleanNld, _) => "False",
        (Purpose::FallbackChoice, _) => "out_of_scope",
        _ => "none",
    }
    .to_string())
}

fn bench_evaluate(c: &mut Criterion) {
    let g = parse_chief(CONFIRM).unwrap();
    let p = compile(&g).unwrap();
    let base = load_dialogues(DIALOGUES).unwrap();
    let dialogues: Vec<GroundTruthDialogue> = (0..32)
        .flat_map(|i| {
            base.iter().map(move |d| GroundTruthDialogue {
                id: format!("{}-{i}", d.id),
                ..d.clone()
            })
        })
        .collect();
    let instant = FnBackend(reply);
    let slow = FnBackend(|r: &BackendRequest| {
        std::thread::sleep(Duration::from_micros(200));
        reply(r)
    });
    let mut group = c.benchmark_group("evaluate_64_dialogues");
    group.sample_size(10);
    for (name, threads) in [("sequential", Some(1)), ("parallel", None), ("parallel_8_threads", Some(8))] {
        let options = EvalOptions {
            parallelism: threads,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("instant", name), &options, |b, o| {
            b.iter(|| evaluate(&p, &g, black_box(&dialogues), &instant, *o).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("slow_backend", name), &options, |b, o| {
            b.iter(|| evaluate(&p, &g, black_box(&dialogues), &slow, *o).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_compile, bench_evaluate);
criterion_main!(benches);
