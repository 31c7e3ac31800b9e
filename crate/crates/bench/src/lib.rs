//! Benchmarks of the hot paths: the seeded two-stage draw, rule firing,
//! and whole distributions through the deterministic scheduler.

use std::hint::black_box;
use std::sync::Arc;

use casealot_core::auditlog::{AuditLog, SystemClock};
use casealot_core::corpus::{default_court, generate, Corpus, CorpusConfig};
use casealot_core::distributor::{draw, mix_seed, DrawRng};
use casealot_core::domain::{BodyId, MagistrateId};
use casealot_core::rulekit::{fire, Fact, WorkingMemory};
use casealot_core::{default_rules, Platform, PlatformConfig, Scheduler};
use criterion::{BatchSize, Criterion, Throughput};

pub fn corpus(n: usize) -> Corpus {
    generate(&CorpusConfig {
        n_lawsuits: n,
        ..Default::default()
    })
    .expect("default corpus config is valid")
}

pub fn platform(c: &Corpus) -> Platform {
    Platform::new(
        c.court.clone(),
        default_rules(),
        AuditLog::in_memory(Arc::new(SystemClock)),
        PlatformConfig::default(),
    )
    .expect("generated court validates")
}

fn bench_draw(c: &mut Criterion) {
    let court = default_court();
    let candidates: Vec<(BodyId, Vec<MagistrateId>)> = court
        .bodies
        .iter()
        .filter(|b| b.id.as_str().starts_with('T'))
        .map(|b| (b.id.clone(), b.members.clone()))
        .collect();
    let mut n = 0u64;
    c.bench_function("draw/two_stage_8_bodies", |b| {
        b.iter(|| {
            n += 1;
            let mut rng = DrawRng::new(mix_seed(7, &n.to_string()));
            black_box(draw(black_box(&candidates), &mut rng).expect("bodies are non-empty"))
        })
    });
}

fn bench_fire(c: &mut Criterion) {
    let rules = default_rules();
    let lawsuit = corpus(1).records.remove(0).lawsuit;
    let mut wm = WorkingMemory::new();
    wm.insert(Fact::Lawsuit(lawsuit));
    c.bench_function("rules/fire_ordinary", |b| {
        b.iter(|| black_box(fire(black_box(&wm), &rules).expect("ordinary rule fires")))
    });
}

fn bench_distribution(c: &mut Criterion) {
    let mut group = c.benchmark_group("platform");
    for n in [1usize, 100] {
        let corpus = corpus(n);
        group.throughput(Throughput::Elements(n as u64));
        group.sample_size(10);
        group.bench_function(format!("deterministic_{n}"), |b| {
            b.iter_batched(
                || {
                    let mut p = platform(&corpus);
                    for r in &corpus.records {
                        p.submit(r.lawsuit.clone())
                            .expect("fresh platform accepts the corpus");
                    }
                    p
                },
                |mut p| black_box(p.run(Scheduler::Deterministic).expect("run completes")),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    bench_draw(c);
    bench_fire(c);
    bench_distribution(c);
}
