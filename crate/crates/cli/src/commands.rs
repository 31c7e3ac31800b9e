//! Subcommands of the `casealot` binary. Each writes its report to the
//! given sink and returns an error for a nonzero exit.

use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use casealot_core::auditlog::{AuditLog, Clock, SteppingClock, SystemClock};
use casealot_core::corpus::{
    self, export, load_corpus, load_court, CorpusConfig, CorpusError, CorpusRecord,
};
use casealot_core::rulekit::RuleError;
use casealot_core::{
    default_rules, parse_rules, Court, Platform, PlatformConfig, PlatformError, RuleSet, Scheduler,
};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::gateway::{self, TraceRow};

/// Floor on sustained distributions per second.
pub const RATE_FLOOR: f64 = 3.15;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("rules: {0}")]
    Rules(#[from] RuleError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("audit log {0} already holds records; pass a fresh path")]
    AuditLogInUse(PathBuf),
    #[error("audit log {0} does not exist")]
    MissingAuditLog(PathBuf),
    #[error("replay failed for {failed} of {total} distributions")]
    ReplayFailed { failed: usize, total: usize },
    #[error("rate {rate:.2} lawsuits/sec is below the floor of {floor}")]
    BelowFloor { rate: f64, floor: f64 },
}

impl From<casealot_core::AuditError> for CliError {
    fn from(e: casealot_core::AuditError) -> Self {
        Self::Platform(e.into())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn out_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "casealot",
    version,
    about = "Auditable multi-agent lawsuit distribution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic court and corpus.
    Gen(GenArgs),
    /// Distribute a corpus and print rule statistics and throughput.
    Run(RunArgs),
    /// Timed distribution of a generated corpus.
    Bench(BenchArgs),
    /// Print the audit trace of one distribution.
    Trace(TraceArgs),
    /// Replay every distribution recorded in an audit log.
    Verify(VerifyArgs),
    /// Serve the HTTP gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for court.json and corpus.jsonl.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Fractions of rules 1, 2 and 3, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub mix: Option<Vec<f64>>,
    #[arg(long)]
    pub impediment_rate: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    /// Rule file; the built-in rules when absent.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Root of every per-distribution draw seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "deterministic")]
    pub scheduler: Scheduler,
    /// Audit log file; in memory when absent.
    #[arg(long, env = "CASEALOT_AUDIT_PATH")]
    pub audit_path: Option<PathBuf>,
    /// Stamp records from this instant, one millisecond apart, instead of
    /// the wall clock.
    #[arg(long)]
    pub epoch: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory written by `gen`, or a records file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Court configuration; the corpus's own `court.json`, then the reference court, when absent.
    #[arg(long)]
    pub court: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Write every outcome as one JSON line.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub corpus_seed: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "concurrent")]
    pub scheduler: Scheduler,
    #[arg(long, env = "CASEALOT_AUDIT_PATH")]
    pub audit_path: Option<PathBuf>,
    #[arg(long, default_value_t = RATE_FLOOR)]
    pub min_rate: f64,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    pub id: String,
    #[arg(long, env = "CASEALOT_AUDIT_PATH")]
    pub audit_path: PathBuf,
    /// Print payloads as well.
    #[arg(long)]
    pub payload: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, env = "CASEALOT_AUDIT_PATH")]
    pub audit_path: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Distributed before the gateway starts listening.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Court configuration; the corpus's own `court.json`, then the reference court, when absent.
    #[arg(long)]
    pub court: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, env = "CASEALOT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => gen(&a, out),
        Command::Run(a) => run(&a, out),
        Command::Bench(a) => bench(&a, out),
        Command::Trace(a) => trace(&a, out),
        Command::Verify(a) => verify(&a, out),
        Command::Serve(a) => serve(&a, out),
    }
}

pub fn gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = CorpusConfig {
        n_lawsuits: a.n,
        seed: a.seed,
        ..Default::default()
    };
    if let Some(mix) = &a.mix {
        cfg.rule_mix = [mix[0], mix[1], mix[2]];
    }
    if let Some(rate) = a.impediment_rate {
        cfg.impediment_rate = rate;
    }
    let counts = cfg.planted_counts()?;
    let c = corpus::generate(&cfg)?;
    export(&c, &a.out)?;
    writeln!(
        out,
        "wrote {} lawsuits and {} impediments to {}",
        c.records.len(),
        c.court.impediments.len(),
        a.out.display()
    )
    .map_err(out_err)?;
    writeln!(
        out,
        "planted rules: 1={} 2={} 3={} 4={}",
        counts[0], counts[1], counts[2], counts[3]
    )
    .map_err(out_err)
}

pub fn load_rules(path: Option<&Path>) -> Result<RuleSet, CliError> {
    match path {
        None => Ok(default_rules()),
        Some(p) => Ok(parse_rules(
            &std::fs::read_to_string(p).map_err(io_err(p))?,
        )?),
    }
}

fn clock(epoch: Option<DateTime<Utc>>) -> Arc<dyn Clock> {
    match epoch {
        Some(at) => Arc::new(SteppingClock::new(at, 1)),
        None => Arc::new(SystemClock),
    }
}

/// A fresh audit log. An existing non-empty file is never appended to.
pub fn fresh_audit_log(path: Option<&Path>, clock: Arc<dyn Clock>) -> Result<AuditLog, CliError> {
    match path {
        None => Ok(AuditLog::in_memory(clock)),
        Some(p) => {
            if std::fs::metadata(p).map(|m| m.len() > 0).unwrap_or(false) {
                return Err(CliError::AuditLogInUse(p.to_owned()));
            }
            Ok(AuditLog::open(p, clock)?)
        }
    }
}

fn existing_audit_log(path: &Path) -> Result<AuditLog, CliError> {
    if !path.exists() {
        return Err(CliError::MissingAuditLog(path.to_owned()));
    }
    Ok(AuditLog::open(path, Arc::new(SystemClock))?)
}

fn court(path: Option<&Path>) -> Result<Court, CliError> {
    match path {
        Some(p) => Ok(load_court(p)?),
        None => Ok(corpus::default_court()),
    }
}

/// Court and records for `--corpus`, which names either a directory written
/// by `gen` or a records file. Without `--court`, a `court.json` beside the
/// records is used, then the default court.
pub fn corpus_inputs(
    corpus: &Path,
    court_path: Option<&Path>,
) -> Result<(Court, Vec<CorpusRecord>), CliError> {
    let (records_path, sibling) = if corpus.is_dir() {
        (corpus.join("corpus.jsonl"), corpus.join("court.json"))
    } else {
        let dir = corpus.parent().unwrap_or(Path::new("."));
        (corpus.to_path_buf(), dir.join("court.json"))
    };
    let court = match court_path {
        Some(p) => load_court(p)?,
        None if sibling.is_file() => load_court(&sibling)?,
        None => corpus::default_court(),
    };
    Ok((court, load_corpus(records_path)?))
}

pub fn build_platform(court: Court, engine: &EngineArgs) -> Result<Platform, CliError> {
    let rules = load_rules(engine.rules.as_deref())?;
    let audit = fresh_audit_log(engine.audit_path.as_deref(), clock(engine.epoch))?;
    Ok(Platform::new(
        court,
        rules,
        audit,
        PlatformConfig {
            seed_root: engine.seed,
            ..Default::default()
        },
    )?)
}

pub fn rule_table(p: &Platform) -> String {
    let mut s = String::from("rule  count  frequency\n");
    for r in p.rule_stats() {
        let _ = writeln!(
            s,
            "{:<4}  {:>5}  {:>8.2}%",
            r.rule_number,
            r.count,
            r.frequency * 100.0
        );
    }
    s
}

pub fn run(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (court, records) = corpus_inputs(&a.corpus, a.court.as_deref())?;
    let mut p = build_platform(court, &a.engine)?;
    for r in &records {
        p.submit(r.lawsuit.clone())?;
    }
    let report = p.run(a.engine.scheduler)?;
    write!(out, "{}", rule_table(&p)).map_err(out_err)?;
    writeln!(
        out,
        "distributed {} lawsuits ({} failed) in {:.2} s: {:.1} lawsuits/sec [{}]",
        report.distributed,
        report.failed,
        report.elapsed_secs,
        report.lawsuits_per_sec,
        scheduler_name(report.scheduler)
    )
    .map_err(out_err)?;
    for f in p.failures() {
        writeln!(out, "failed {}: {}", f.case_number, f.error).map_err(out_err)?;
    }
    if let Some(path) = &a.outcomes {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
        for o in p.outcomes() {
            serde_json::to_writer(&mut w, o).map_err(|e| io_err(path)(e.into()))?;
            w.write_all(b"\n").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

fn scheduler_name(s: Scheduler) -> &'static str {
    match s {
        Scheduler::Deterministic => "deterministic",
        Scheduler::Concurrent => "concurrent",
    }
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = corpus::generate(&CorpusConfig {
        n_lawsuits: a.n,
        seed: a.corpus_seed,
        ..Default::default()
    })?;
    let engine = EngineArgs {
        rules: None,
        seed: a.seed,
        scheduler: a.scheduler,
        audit_path: a.audit_path.clone(),
        epoch: None,
    };
    let mut p = build_platform(c.court, &engine)?;
    for r in c.records {
        p.submit(r.lawsuit)?;
    }
    let report = p.run(a.scheduler)?;
    writeln!(
        out,
        "bench: {} lawsuits in {:.2} s = {:.1} lawsuits/sec ({} scheduler, floor {})",
        report.distributed + report.failed,
        report.elapsed_secs,
        report.lawsuits_per_sec,
        scheduler_name(report.scheduler),
        a.min_rate
    )
    .map_err(out_err)?;
    if report.lawsuits_per_sec < a.min_rate {
        return Err(CliError::BelowFloor {
            rate: report.lawsuits_per_sec,
            floor: a.min_rate,
        });
    }
    Ok(())
}

pub fn trace(a: &TraceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let log = existing_audit_log(&a.audit_path)?;
    let t = log.trace(&a.id)?;
    writeln!(
        out,
        "{:>8}  {:<10}  {:<12}  {:<6}  action",
        "#", "date", "time", "agent"
    )
    .map_err(out_err)?;
    for r in t.records {
        let row = TraceRow::from(r);
        write!(
            out,
            "{:>8}  {:<10}  {:<12}  {:<6}  {}",
            row.seq, row.date, row.time, row.agent, row.action
        )
        .map_err(out_err)?;
        if a.payload {
            write!(out, "  {}", row.payload).map_err(out_err)?;
        }
        writeln!(out).map_err(out_err)?;
    }
    if let Some(o) = t.outcome {
        writeln!(
            out,
            "outcome: rule {} ({}) -> {} / {}",
            o.rule_number, o.fired_rule, o.body, o.magistrate
        )
        .map_err(out_err)?;
    }
    for (label, link) in [
        ("supersedes", t.predecessor),
        ("superseded by", t.successor),
    ] {
        if let Some(id) = link {
            writeln!(out, "{label}: {id}").map_err(out_err)?;
        }
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let log = existing_audit_log(&a.audit_path)?;
    let ids: Vec<String> = log.distribution_ids().map(str::to_owned).collect();
    let mut failed = Vec::new();
    for id in &ids {
        // a corrupt justification is a failed replay, not a fatal error
        if !log.verify_replay(id).unwrap_or(false) {
            failed.push(id.clone());
        }
    }
    let total = ids.len();
    if failed.is_empty() {
        writeln!(out, "ok: {total}/{total} replayed").map_err(out_err)?;
        return Ok(());
    }
    writeln!(out, "FAILED: {}/{total} replayed", total - failed.len()).map_err(out_err)?;
    for id in &failed {
        writeln!(out, "  {id}").map_err(out_err)?;
    }
    Err(CliError::ReplayFailed {
        failed: failed.len(),
        total,
    })
}

pub fn serve(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (court, records) = match &a.corpus {
        Some(path) => corpus_inputs(path, a.court.as_deref())?,
        None => (court(a.court.as_deref())?, Vec::new()),
    };
    let mut p = build_platform(court, &a.engine)?;
    if a.corpus.is_some() {
        for r in records {
            p.submit(r.lawsuit)?;
        }
        let report = p.run(a.engine.scheduler)?;
        writeln!(
            out,
            "distributed {} lawsuits ({} failed)",
            report.distributed, report.failed
        )
        .map_err(out_err)?;
    }
    let addr = SocketAddr::new(a.host, a.port);
    let state = gateway::AppState::new(p, a.engine.scheduler);
    writeln!(out, "listening on http://{addr}").map_err(out_err)?;
    out.flush().map_err(out_err)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err(Path::new("<runtime>")))?;
    rt.block_on(gateway::serve(state, addr))
        .map_err(|source| CliError::Io {
            path: addr.to_string(),
            source,
        })
}
