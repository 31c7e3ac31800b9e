#![allow(dead_code)]

use std::sync::Arc;

use casealot_core::auditlog::{AuditLog, Clock, SteppingClock};
use casealot_core::corpus::{generate, Corpus, CorpusConfig};
use casealot_core::{default_rules, Platform, PlatformConfig, Scheduler};
use chrono::{TimeZone, Utc};

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2016, 6, 24, 10, 57, 25).unwrap(),
        3,
    ))
}

pub fn corpus(n: usize, seed: u64, mix: [f64; 3]) -> Corpus {
    generate(&CorpusConfig {
        n_lawsuits: n,
        rule_mix: mix,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn platform(corpus: &Corpus, audit: AuditLog) -> Platform {
    Platform::new(
        corpus.court.clone(),
        default_rules(),
        audit,
        PlatformConfig {
            seed_root: 7,
            ..Default::default()
        },
    )
    .unwrap()
}

pub fn submit_all(p: &mut Platform, corpus: &Corpus) {
    for r in &corpus.records {
        p.submit(r.lawsuit.clone()).unwrap();
    }
}

pub fn run(corpus: &Corpus, scheduler: Scheduler) -> Platform {
    let mut p = platform(corpus, AuditLog::in_memory(clock()));
    submit_all(&mut p, corpus);
    p.run(scheduler).unwrap();
    p
}
