//! HTTP gateway over a running platform.
//!
//! Endpoints:
//!
//! - `GET  /lawsuits/{case}`: lawsuit as held by its protocol agent, with its latest distribution
//! - `GET  /lawsuits/{case}/distributions`: every outcome of the case, oldest first
//! - `POST /lawsuits/{case}/redistribute`: `{"reason": text}`
//! - `GET  /distributions/{id}`: the outcome exactly as logged
//! - `GET  /distributions/{id}/trace?offset&limit`: audit rows of one distribution
//! - `POST /distributions/run`: `{"corpus": path | [records], "wait": bool}`
//! - `GET  /agents`, `POST /agents/{id}/lifecycle`, `POST /agents/{id}/impediments`
//! - `GET  /stats/rules`, `GET /stats/throughput`
//!
//! Reads of audit data go through the log alone, so they never wait on a
//! running batch. Mutations serialize through the platform lock.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use casealot_core::agentry::{AgentError, AgentView, Progress, RunReport};
use casealot_core::auditlog::{AuditError, AuditLog, AuditRecord};
use casealot_core::corpus::{load_corpus, CorpusError, CorpusRecord};
use casealot_core::distributor::{DistributionError, DistributionOutcome};
use casealot_core::domain::{
    parse_case_number, CaseNumber, DomainError, Impediment, ImpedimentTarget, Lawsuit,
};
use casealot_core::{Lifecycle, Platform, PlatformError, Scheduler};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_TRACE_LIMIT: usize = 200;
pub const MAX_TRACE_LIMIT: usize = 5_000;
/// Deterministic steps per platform lock hold during a batch.
const STEP_CHUNK: u64 = 2_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl ToString) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.to_string(),
        }
    }

    fn not_found(code: &str, message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn run_in_progress() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "run_in_progress",
            "a distribution batch is already running",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self }))).into_response()
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let (status, code) = match &e {
            AgentError::UnknownAgent(_) => (StatusCode::NOT_FOUND, "unknown_agent"),
            AgentError::DuplicateAgent(_) => (StatusCode::CONFLICT, "duplicate_agent"),
            AgentError::AgentUnavailable(_) => (StatusCode::CONFLICT, "agent_unavailable"),
            AgentError::Terminated(_) => (StatusCode::CONFLICT, "agent_terminated"),
            AgentError::IncompatiblePerformative { .. } => {
                (StatusCode::BAD_REQUEST, "incompatible_performative")
            }
            AgentError::NotAMagistrate(_) => (StatusCode::BAD_REQUEST, "not_a_magistrate"),
        };
        Self::new(status, code, e)
    }
}

impl From<AuditError> for ApiError {
    fn from(e: AuditError) -> Self {
        let (status, code) = match &e {
            AuditError::UnknownDistribution(_) => (StatusCode::NOT_FOUND, "unknown_distribution"),
            AuditError::Halted => (StatusCode::SERVICE_UNAVAILABLE, "audit_halted"),
            AuditError::StorageFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
            AuditError::MalformedRecord { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "malformed_record")
            }
        };
        Self::new(status, code, e)
    }
}

impl From<DistributionError> for ApiError {
    fn from(e: DistributionError) -> Self {
        let status = match &e {
            DistributionError::RedistributionOfUnknownCase(_)
            | DistributionError::UnknownLawsuit { .. } => StatusCode::NOT_FOUND,
            DistributionError::AgentUnavailable(_) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e)
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let code = match &e {
            DomainError::MalformedCaseNumber { .. } => "malformed_case_number",
            DomainError::InvalidCourt(_) => "invalid_lawsuit",
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, e)
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        match e {
            PlatformError::Agent(e) => e.into(),
            PlatformError::Audit(e) => e.into(),
            PlatformError::Distribution(e) => e.into(),
            PlatformError::Domain(e) => e.into(),
            e @ PlatformError::DuplicateLawsuit(_) => {
                Self::new(StatusCode::CONFLICT, "duplicate_lawsuit", e)
            }
            e @ PlatformError::Unsettled(_) => Self::new(StatusCode::CONFLICT, "unsettled", e),
        }
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::MalformedRecord { .. } => "malformed_corpus",
            CorpusError::Io { .. } => "corpus_unreadable",
            CorpusError::InvalidConfig(_) | CorpusError::InconsistentRecord { .. } => {
                "invalid_corpus"
            }
            CorpusError::Court(_) => "invalid_court",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Shared {
    platform: Mutex<Platform>,
    audit: Arc<Mutex<AuditLog>>,
    progress: Arc<Progress>,
    running: AtomicBool,
    scheduler: Scheduler,
    last_run: Mutex<Option<RunReport>>,
    last_error: Mutex<Option<ApiError>>,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Clears the running flag however the batch ends.
struct RunGuard(Arc<Shared>);

impl Drop for RunGuard {
    fn drop(&mut self) {
        self.0.progress.running.store(false, Ordering::Relaxed);
        self.0.running.store(false, Ordering::Release);
    }
}

impl AppState {
    pub fn new(platform: Platform, scheduler: Scheduler) -> Self {
        Self {
            shared: Arc::new(Shared {
                audit: platform.audit_handle(),
                progress: platform.progress(),
                platform: Mutex::new(platform),
                running: AtomicBool::new(false),
                scheduler,
                last_run: Mutex::new(None),
                last_error: Mutex::new(None),
            }),
        }
    }

    /// Exclusive access to the platform, off the async workers.
    async fn with_platform<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&mut Platform) -> ApiResult<T> + Send + 'static,
    {
        let shared = Arc::clone(&self.shared);
        tokio::task::spawn_blocking(move || f(&mut lock(&shared.platform)))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e))?
    }

    async fn with_audit<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&AuditLog) -> ApiResult<T> + Send + 'static,
    {
        let shared = Arc::clone(&self.shared);
        tokio::task::spawn_blocking(move || f(&lock(&shared.audit)))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e))?
    }

    fn claim_run(&self) -> ApiResult<RunGuard> {
        self.shared
            .running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ApiError::run_in_progress())?;
        Ok(RunGuard(Arc::clone(&self.shared)))
    }

    pub fn is_running(&self) -> bool {
        self.shared.running.load(Ordering::Acquire)
    }
}

/// Runs queued work to quiescence. The deterministic scheduler releases the
/// platform between chunks so lifecycle changes and reads interleave.
fn drive(shared: &Shared) -> Result<RunReport, PlatformError> {
    shared.progress.running.store(true, Ordering::Relaxed);
    let start = Instant::now();
    let (d0, f0) = {
        let p = lock(&shared.platform);
        (p.outcomes().len(), p.failures().len())
    };
    match shared.scheduler {
        Scheduler::Deterministic => while lock(&shared.platform).run_steps(STEP_CHUNK)? {},
        Scheduler::Concurrent => {
            lock(&shared.platform).run(Scheduler::Concurrent)?;
        }
    }
    let p = lock(&shared.platform);
    let elapsed = start.elapsed().as_secs_f64();
    let distributed = (p.outcomes().len() - d0) as u64;
    let failed = (p.failures().len() - f0) as u64;
    let report = RunReport {
        scheduler: shared.scheduler,
        distributed,
        failed,
        elapsed_secs: elapsed,
        lawsuits_per_sec: if elapsed > 0.0 {
            (distributed + failed) as f64 / elapsed
        } else {
            0.0
        },
    };
    *lock(&shared.last_run) = Some(report);
    Ok(report)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/lawsuits/{case}", get(get_lawsuit))
        .route(
            "/lawsuits/{case}/distributions",
            get(get_case_distributions),
        )
        .route("/lawsuits/{case}/redistribute", post(post_redistribute))
        .route("/distributions/run", post(post_run))
        .route("/distributions/{id}", get(get_distribution))
        .route("/distributions/{id}/trace", get(get_trace))
        .route("/agents", get(get_agents))
        .route("/agents/{id}/lifecycle", post(post_lifecycle))
        .route("/agents/{id}/impediments", post(post_impediment))
        .route("/stats/rules", get(get_rule_stats))
        .route("/stats/throughput", get(get_throughput))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .with_state(state)
}

fn case_number(text: &str) -> ApiResult<CaseNumber> {
    parse_case_number(text)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_case_number", e))
}

fn unknown_case(case: &CaseNumber) -> ApiError {
    ApiError::not_found(
        "unknown_case",
        format!("no protocol agent holds case {case}"),
    )
}

#[derive(Debug, Serialize)]
pub struct LawsuitView {
    #[serde(flatten)]
    pub lawsuit: Lawsuit,
    pub body: Option<String>,
    pub magistrate: Option<String>,
    /// Latest distribution, with its full justification.
    pub distribution: Option<DistributionOutcome>,
    pub distribution_count: usize,
}

async fn get_lawsuit(
    State(state): State<AppState>,
    Path(case): Path<String>,
) -> ApiResult<Json<LawsuitView>> {
    let case = case_number(&case)?;
    let view = state
        .with_platform(move |p| {
            let status = p.lawsuit(&case).ok_or_else(|| unknown_case(&case))?;
            let history = p.outcomes_for_case(&case);
            Ok(LawsuitView {
                lawsuit: status.lawsuit.clone(),
                body: status.assignment.as_ref().map(|a| a.body.to_string()),
                magistrate: status.assignment.as_ref().map(|a| a.magistrate.to_string()),
                distribution: history.last().map(|o| (*o).clone()),
                distribution_count: history.len(),
            })
        })
        .await?;
    Ok(Json(view))
}

async fn get_case_distributions(
    State(state): State<AppState>,
    Path(case): Path<String>,
) -> ApiResult<Json<Vec<DistributionOutcome>>> {
    let case = case_number(&case)?;
    let list = state
        .with_platform(move |p| {
            if p.lawsuit(&case).is_none() {
                return Err(unknown_case(&case));
            }
            Ok(p.outcomes_for_case(&case).into_iter().cloned().collect())
        })
        .await?;
    Ok(Json(list))
}

#[derive(Debug, Deserialize)]
struct RedistributeBody {
    reason: String,
}

async fn post_redistribute(
    State(state): State<AppState>,
    Path(case): Path<String>,
    body: Result<Json<RedistributeBody>, JsonRejection>,
) -> ApiResult<Json<DistributionOutcome>> {
    let Json(body) = body?;
    let case = case_number(&case)?;
    if body.reason.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "missing_reason",
            "a reason is required",
        ));
    }
    let guard = state.claim_run()?;
    let outcome = state
        .with_platform(move |p| {
            let _guard = guard;
            Ok(p.redistribute(&case, &body.reason)?)
        })
        .await?;
    Ok(Json(outcome))
}

/// The outcome payload as appended to the log.
async fn get_distribution(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let payload = state
        .with_audit(move |log| {
            if log.outcome(&id)?.is_none() {
                return Err(ApiError::not_found(
                    "no_outcome",
                    format!("distribution {id} has no recorded outcome"),
                ));
            }
            let trace = log.trace(&id)?;
            let record = trace
                .records
                .into_iter()
                .rev()
                .find(|r| r.action == casealot_core::auditlog::actions::RECORD_OUTCOME)
                .expect("outcome seen above");
            Ok(record.payload)
        })
        .await?;
    Ok(Json(payload))
}

#[derive(Debug, Deserialize)]
struct Page {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seq: u64,
    pub date: String,
    pub time: String,
    pub agent: String,
    pub action: String,
    pub payload: Value,
}

impl From<AuditRecord> for TraceRow {
    fn from(r: AuditRecord) -> Self {
        Self {
            seq: r.seq,
            date: r.ts.format("%Y-%m-%d").to_string(),
            time: r.ts.format("%H:%M:%S%.3f").to_string(),
            agent: r.agent,
            action: r.action,
            payload: r.payload,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TracePage {
    pub distribution_id: String,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub predecessor: Option<String>,
    pub successor: Option<String>,
    pub rows: Vec<TraceRow>,
}

async fn get_trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
    page: Result<Query<Page>, QueryRejection>,
) -> ApiResult<Json<TracePage>> {
    let Query(page) = page?;
    let offset = page.offset.unwrap_or(0);
    let limit = page.limit.unwrap_or(DEFAULT_TRACE_LIMIT);
    if limit == 0 || limit > MAX_TRACE_LIMIT {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_limit",
            format!("limit must lie in 1..={MAX_TRACE_LIMIT}"),
        ));
    }
    let page = state
        .with_audit(move |log| {
            let trace = log.trace(&id)?;
            let total = trace.records.len();
            let rows = trace
                .records
                .into_iter()
                .skip(offset)
                .take(limit)
                .map(TraceRow::from)
                .collect();
            Ok(TracePage {
                distribution_id: id,
                total,
                offset,
                limit,
                predecessor: trace.predecessor,
                successor: trace.successor,
                rows,
            })
        })
        .await?;
    Ok(Json(page))
}

async fn get_agents(State(state): State<AppState>) -> ApiResult<Json<Vec<AgentView>>> {
    Ok(Json(state.with_platform(|p| Ok(p.census())).await?))
}

#[derive(Debug, Deserialize)]
struct LifecycleBody {
    state: Lifecycle,
}

async fn post_lifecycle(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<LifecycleBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let to = body.state;
    let answer = state
        .with_platform(move |p| {
            let from = p.set_lifecycle(&id, to)?;
            Ok(json!({ "agent": id, "from": from.name(), "state": to.name() }))
        })
        .await?;
    Ok(Json(answer))
}

#[derive(Debug, Deserialize)]
struct ImpedimentBody {
    #[serde(flatten)]
    target: ImpedimentTarget,
    reason: String,
}

async fn post_impediment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ImpedimentBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Impediment>)> {
    let Json(body) = body?;
    let imp = Impediment {
        magistrate: id.as_str().into(),
        target: body.target,
        reason: body.reason,
    };
    let stored = imp.clone();
    state
        .with_platform(move |p| Ok(p.register_impediment(imp)?))
        .await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CorpusSource {
    Path(String),
    Inline(Vec<CorpusItem>),
}

/// Inline items may carry a planted rule label; it is ignored.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CorpusItem {
    Record(CorpusRecord),
    Lawsuit(Lawsuit),
}

#[derive(Debug, Default, Deserialize)]
struct RunBody {
    corpus: Option<CorpusSource>,
    #[serde(default)]
    wait: bool,
}

async fn post_run(
    State(state): State<AppState>,
    body: Option<Json<RunBody>>,
) -> ApiResult<Response> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let guard = state.claim_run()?;
    let lawsuits: Vec<Lawsuit> = match body.corpus {
        None => Vec::new(),
        Some(CorpusSource::Path(path)) => tokio::task::spawn_blocking(move || load_corpus(path))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e))??
            .into_iter()
            .map(|r| r.lawsuit)
            .collect(),
        Some(CorpusSource::Inline(items)) => items
            .into_iter()
            .map(|i| match i {
                CorpusItem::Record(r) => r.lawsuit,
                CorpusItem::Lawsuit(l) => l,
            })
            .collect(),
    };
    let submitted = lawsuits.len();
    let queued = state
        .with_platform(move |p| {
            for l in lawsuits {
                p.submit(l)?;
            }
            Ok(p.pending())
        })
        .await?;
    *lock(&state.shared.last_error) = None;
    let shared = Arc::clone(&state.shared);
    let job = move || {
        let _guard = guard;
        let result = drive(&shared).map_err(ApiError::from);
        if let Err(e) = &result {
            *lock(&shared.last_error) = Some(e.clone());
        }
        result
    };
    if body.wait {
        let report = tokio::task::spawn_blocking(job)
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "worker_failed", e))??;
        return Ok((
            StatusCode::OK,
            Json(json!({ "status": "done", "submitted": submitted, "report": report })),
        )
            .into_response());
    }
    tokio::task::spawn_blocking(job);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "status": "running", "submitted": submitted, "queued": queued })),
    )
        .into_response())
}

async fn get_rule_stats(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let rows = state.with_audit(|log| Ok(log.rule_stats())).await?;
    Ok(Json(json!(rows)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThroughputView {
    pub running: bool,
    pub submitted: u64,
    pub settled: u64,
    pub distributed: u64,
    pub failed: u64,
    pub last_run: Option<Value>,
    pub last_error: Option<Value>,
}

async fn get_throughput(State(state): State<AppState>) -> ApiResult<Json<ThroughputView>> {
    let distributed = state
        .with_audit(|log| Ok(log.outcome_count() as u64))
        .await?;
    let shared = &state.shared;
    let settled = shared.progress.settled.load(Ordering::Relaxed);
    Ok(Json(ThroughputView {
        running: state.is_running(),
        submitted: shared.progress.submitted.load(Ordering::Relaxed),
        settled,
        distributed,
        failed: settled.saturating_sub(distributed),
        last_run: lock(&shared.last_run).map(|r| json!(r)),
        last_error: lock(&shared.last_error).as_ref().map(|e| json!(e)),
    }))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
