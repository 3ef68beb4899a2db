use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use stancebench::budget::{filter_by_budget, ModelProfile, TokenCounter};
use stancebench::corpus::Stance;
use stancebench::eval::f1_scores;
use stancebench::postprocess::extract_label;
use stancebench::promptlab::build_prompt_set;
use stancebench_bench::synthetic_split;

fn prompts(c: &mut Criterion) {
    let split = synthetic_split(300, 11);
    c.bench_function("build_prompt_set/300 posts", |b| {
        b.iter(|| build_prompt_set(black_box(&split), 11).unwrap())
    });
    let set = build_prompt_set(&split, 11).unwrap();
    let profile = ModelProfile::builtin("flan-ul2").unwrap();
    let counter = TokenCounter::default();
    c.bench_function("filter_by_budget/flan-ul2", |b| {
        b.iter(|| filter_by_budget(black_box(&set), &profile, &counter).unwrap())
    });
}

fn parsing(c: &mut Criterion) {
    let outputs = [
        "Against",
        "In favor. The tweet encourages parents to get their kids the shot.",
        "The stance of this tweet is neutral or unclear.",
        "Some would read it as in favor, others as against.",
        "I'm sorry, but I cannot determine the stance of this tweet.",
        "Stance:\nStance:\nStance:\nStance:",
        "Tweet 7",
    ];
    c.bench_function("extract_label/mixed", |b| {
        b.iter(|| {
            for o in outputs {
                black_box(extract_label(black_box(o)));
            }
        })
    });
}

fn metrics(c: &mut Criterion) {
    let pairs: Vec<(Stance, Stance)> = (0..378)
        .map(|i| (Stance::ALL[i % 3], Stance::ALL[(i * 7 + i / 5) % 3]))
        .collect();
    c.bench_function("f1_scores/378", |b| {
        b.iter_batched(|| pairs.clone(), |p| f1_scores(&p).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, prompts, parsing, metrics);
criterion_main!(benches);
