//! The platform coordinator and its two schedulers.
//!
//! The deterministic scheduler visits agents round-robin in registration
//! order and lets exactly one agent consume one message (or, for the
//! distribution agent, open one queued distribution) per step. The
//! concurrent scheduler gives every active agent its own thread and
//! mailbox channel; the audit appender behind a mutex is the only shared
//! serialization point.

use std::collections::{HashMap, VecDeque};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use super::{
    AgentError, AgentId, AgentKind, Behavior, Content, Effect, LawsuitStatus, Lifecycle,
    MagistrateAgent, Message, ProtocolAgent, Registry, DISTRIBUTION_SERVICE, LAWSUIT_SERVICE,
};
use crate::auditlog::{
    actions, outcome_digest, AuditError, AuditLog, Entry, RuleCount, PLATFORM_AGENT,
};
use crate::distributor::{
    DistributionAgent, DistributionError, DistributionFailure, DistributionOutcome, WorkItem,
    IMPEDIMENT_SERVICE,
};
use crate::domain::{CaseNumber, Court, DomainError, Impediment, Lawsuit};
use crate::rulekit::RuleSet;

pub const PMA_AGENT: &str = "PMA";

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("case {0} is already held at this phase or later")]
    DuplicateLawsuit(String),
    #[error("distribution ticket {0} did not settle")]
    Unsettled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    #[default]
    Deterministic,
    Concurrent,
}

impl FromStr for Scheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Scheduler::Deterministic),
            "concurrent" => Ok(Scheduler::Concurrent),
            other => Err(format!(
                "unknown scheduler {other:?} (deterministic|concurrent)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub seed_root: u64,
    pub distributor_label: String,
    /// Deterministic scheduler: steps a conversation may wait for replies.
    pub reply_budget: u64,
    /// Concurrent scheduler: wall-clock wait for a reply.
    pub reply_timeout: Duration,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            seed_root: 0,
            distributor_label: "DA01".into(),
            reply_budget: 10_000,
            reply_timeout: Duration::from_secs(5),
        }
    }
}

/// Live counters readable without locking the platform.
#[derive(Debug, Default)]
pub struct Progress {
    pub running: AtomicBool,
    pub settled: AtomicU64,
    pub submitted: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunReport {
    pub scheduler: Scheduler,
    pub distributed: u64,
    pub failed: u64,
    pub elapsed_secs: f64,
    pub lawsuits_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Throughput {
    pub running: bool,
    pub submitted: u64,
    pub settled: u64,
    pub last_run: Option<RunReport>,
    pub total_distributed: u64,
    pub total_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentView {
    pub label: String,
    pub kind: String,
    pub state: String,
    pub mailbox: usize,
    pub services: Vec<String>,
}

struct Slot {
    id: AgentId,
    mailbox: VecDeque<Message>,
    behavior: Behavior,
}

enum Settled {
    Done(u64, Box<DistributionOutcome>),
    Failed(DistributionFailure),
}

// messages dominate the channel; boxing them would allocate per delivery
#[allow(clippy::large_enum_variant)]
enum Envelope {
    Msg(Message),
    Stop,
}

/// Applies a handler's effects in order. Sends to inactive receivers are
/// logged as `delivery-failed` and dropped.
fn apply(
    effects: Vec<Effect>,
    from: &AgentId,
    audit: &Mutex<AuditLog>,
    registry: &Registry,
    progress: &Progress,
    deliver: &mut dyn FnMut(Message),
    settled: &mut Vec<Settled>,
) -> Result<(), AuditError> {
    let mut digests: HashMap<String, String> = HashMap::new();
    for effect in effects {
        match effect {
            Effect::Record(entry) => {
                lock(audit).append(entry)?;
            }
            Effect::Send(mut msg) => {
                if let Content::InformDistribution(notice) = &mut msg.content {
                    if let Some(d) = digests.remove(&notice.distribution_id) {
                        notice.outcome_digest = d;
                    }
                }
                let mut payload = msg.audit_payload();
                let entry = |action, payload| {
                    Entry::new(msg.sender.label.clone(), action, payload)
                        .in_distribution(msg.conversation_id.clone())
                        .for_case(&msg.case_number)
                };
                match registry.lifecycle(&msg.receiver.label) {
                    Some(Lifecycle::Active) => {
                        lock(audit).append(entry(actions::SEND_MESSAGE, payload))?;
                        deliver(msg);
                    }
                    state => {
                        let why = match state {
                            Some(s) => format!("receiver {} is {}", msg.receiver.label, s.name()),
                            None => format!("receiver {} is not registered", msg.receiver.label),
                        };
                        payload["error"] = why.into();
                        lock(audit).append(entry(actions::DELIVERY_FAILED, payload))?;
                    }
                }
            }
            Effect::Outcome {
                ticket,
                mut outcome,
            } => {
                let mut log = lock(audit);
                let ts = log.now();
                outcome.timestamp = ts;
                let payload = serde_json::to_value(&*outcome).expect("outcome serializes");
                digests.insert(outcome.distribution_id.clone(), outcome_digest(&payload));
                log.append_at(
                    Entry::new(from.label.clone(), actions::RECORD_OUTCOME, payload)
                        .in_distribution(outcome.distribution_id.clone())
                        .for_case(&outcome.case_number),
                    ts,
                )?;
                progress.settled.fetch_add(1, Ordering::Relaxed);
                settled.push(Settled::Done(ticket, outcome));
            }
            Effect::Failed(f) => {
                progress.settled.fetch_add(1, Ordering::Relaxed);
                settled.push(Settled::Failed(f));
            }
        }
    }
    Ok(())
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct Platform {
    court: Court,
    registry: Registry,
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    da: usize,
    audit: Arc<Mutex<AuditLog>>,
    config: PlatformConfig,
    progress: Arc<Progress>,
    cursor: usize,
    steps: u64,
    awaiting_since: Option<(String, u64)>,
    next_ticket: u64,
    case_owner: HashMap<CaseNumber, String>,
    outcomes: Vec<DistributionOutcome>,
    by_id: HashMap<String, usize>,
    by_case: HashMap<CaseNumber, Vec<usize>>,
    failures: Vec<DistributionFailure>,
    tickets: HashMap<u64, Result<usize, usize>>,
    last_run: Option<RunReport>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("agents", &self.slots.len())
            .field("outcomes", &self.outcomes.len())
            .finish()
    }
}

impl Platform {
    /// Registers one protocol agent per configured protocol, one magistrate
    /// agent per magistrate and the distribution agent, then hands every
    /// configured impediment to its magistrate agent.
    pub fn new(
        court: Court,
        rules: RuleSet,
        audit: AuditLog,
        config: PlatformConfig,
    ) -> Result<Self, PlatformError> {
        court.validate()?;
        let mut p = Self {
            registry: Registry::new(),
            slots: Vec::new(),
            index: HashMap::new(),
            da: 0,
            audit: Arc::new(Mutex::new(audit)),
            progress: Arc::new(Progress::default()),
            cursor: 0,
            steps: 0,
            awaiting_since: None,
            next_ticket: 1,
            case_owner: HashMap::new(),
            outcomes: Vec::new(),
            by_id: HashMap::new(),
            by_case: HashMap::new(),
            failures: Vec::new(),
            tickets: HashMap::new(),
            last_run: None,
            config,
            court,
        };
        for label in p.court.protocols.clone() {
            let id = AgentId::protocol(label);
            p.add(
                id.clone(),
                [LAWSUIT_SERVICE],
                Behavior::Protocol(ProtocolAgent::new(id)),
            )?;
        }
        for m in p.court.magistrates.clone() {
            let id = AgentId::magistrate(&m.id);
            p.add(
                id.clone(),
                [IMPEDIMENT_SERVICE],
                Behavior::Magistrate(MagistrateAgent::new(id, m)),
            )?;
        }
        let da_id = AgentId::distributor(p.config.distributor_label.clone());
        let da = DistributionAgent::new(
            da_id.clone(),
            Arc::new(rules),
            p.court.competence.clone(),
            p.court.prior_assignments.clone(),
            p.config.seed_root,
        );
        p.add(
            da_id,
            [DISTRIBUTION_SERVICE],
            Behavior::Distributor(Box::new(da)),
        )?;
        p.da = p.slots.len() - 1;
        for imp in p.court.impediments.clone() {
            p.register_impediment(imp)?;
        }
        Ok(p)
    }

    fn add(
        &mut self,
        id: AgentId,
        services: [&str; 1],
        behavior: Behavior,
    ) -> Result<(), PlatformError> {
        self.registry.register(id.clone(), services)?;
        lock(&self.audit).append(Entry::new(
            PLATFORM_AGENT,
            actions::REGISTER_AGENT,
            json!({ "agent": id.label, "kind": id.kind, "services": services }),
        ))?;
        self.index.insert(id.label.clone(), self.slots.len());
        self.slots.push(Slot {
            id,
            mailbox: VecDeque::new(),
            behavior,
        });
        Ok(())
    }

    fn distributor(&mut self) -> &mut DistributionAgent {
        match &mut self.slots[self.da].behavior {
            Behavior::Distributor(d) => d,
            _ => unreachable!("distribution agent slot"),
        }
    }

    fn distributor_ref(&self) -> &DistributionAgent {
        match &self.slots[self.da].behavior {
            Behavior::Distributor(d) => d,
            _ => unreachable!("distribution agent slot"),
        }
    }

    pub fn court(&self) -> &Court {
        &self.court
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn audit(&self) -> MutexGuard<'_, AuditLog> {
        lock(&self.audit)
    }

    pub fn audit_handle(&self) -> Arc<Mutex<AuditLog>> {
        Arc::clone(&self.audit)
    }

    pub fn progress(&self) -> Arc<Progress> {
        Arc::clone(&self.progress)
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn distributor_label(&self) -> &str {
        &self.slots[self.da].id.label
    }

    pub fn mailbox_len(&self, label: &str) -> Option<usize> {
        self.index.get(label).map(|&i| self.slots[i].mailbox.len())
    }

    /// Distributions queued at the distribution agent, not yet opened.
    pub fn pending(&self) -> usize {
        self.distributor_ref().queue_len()
    }

    /// Application agents plus the two platform registries.
    pub fn census(&self) -> Vec<AgentView> {
        let mut out: Vec<AgentView> = ["AMS", "DF"]
            .into_iter()
            .map(|label| AgentView {
                label: label.into(),
                kind: "PLATFORM".into(),
                state: Lifecycle::Active.name().into(),
                mailbox: 0,
                services: vec![if label == "AMS" {
                    "white-pages"
                } else {
                    "yellow-pages"
                }
                .into()],
            })
            .collect();
        out.extend(self.registry.entries().into_iter().map(|e| {
            AgentView {
                mailbox: self.mailbox_len(&e.id.label).unwrap_or(0),
                kind: serde_json::to_value(e.id.kind)
                    .unwrap()
                    .as_str()
                    .unwrap_or_default()
                    .to_owned(),
                label: e.id.label,
                state: e.state.name().into(),
                services: e.services,
            }
        }));
        out
    }

    fn check_intake(&self) -> Result<(), PlatformError> {
        if lock(&self.audit).is_halted() {
            return Err(AuditError::Halted.into());
        }
        Ok(())
    }

    /// Hands a lawsuit to its protocol agent and queues its distribution.
    pub fn submit(&mut self, lawsuit: Lawsuit) -> Result<u64, PlatformError> {
        self.check_intake()?;
        self.court.validate_lawsuit(&lawsuit)?;
        let &slot = self
            .index
            .get(&lawsuit.protocol)
            .filter(|&&i| self.slots[i].id.kind == AgentKind::PA)
            .ok_or_else(|| AgentError::UnknownAgent(lawsuit.protocol.clone()))?;
        let Behavior::Protocol(pa) = &mut self.slots[slot].behavior else {
            unreachable!("protocol slot")
        };
        let case = lawsuit.case_number.clone();
        let protocol = lawsuit.protocol.clone();
        if !pa.ingest(lawsuit) {
            return Err(PlatformError::DuplicateLawsuit(case.to_string()));
        }
        self.case_owner.insert(case.clone(), protocol.clone());
        let ticket = self.take_ticket();
        self.distributor().enqueue(WorkItem {
            ticket,
            protocol,
            case_number: case,
            redistribution: None,
        });
        Ok(ticket)
    }

    fn take_ticket(&mut self) -> u64 {
        let t = self.next_ticket;
        self.next_ticket += 1;
        self.progress.submitted.fetch_add(1, Ordering::Relaxed);
        t
    }

    /// Queues a new distribution of a distributed case, excluding its
    /// current magistrate.
    pub fn request_redistribution(
        &mut self,
        case: &CaseNumber,
        reason: &str,
    ) -> Result<u64, PlatformError> {
        self.check_intake()?;
        let ticket = self.next_ticket;
        self.distributor().redistribute(case, reason, ticket)?;
        self.take_ticket();
        Ok(ticket)
    }

    pub fn set_lifecycle(
        &mut self,
        label: &str,
        state: Lifecycle,
    ) -> Result<Lifecycle, PlatformError> {
        let previous = self.registry.set_lifecycle(label, state)?;
        lock(&self.audit).append(Entry::new(
            PMA_AGENT,
            actions::LIFECYCLE_CHANGE,
            json!({ "agent": label, "from": previous.name(), "to": state.name() }),
        ))?;
        Ok(previous)
    }

    pub fn register_impediment(&mut self, imp: Impediment) -> Result<(), PlatformError> {
        let label = imp.magistrate.as_str().to_owned();
        let &i = self
            .index
            .get(&label)
            .ok_or_else(|| AgentError::UnknownAgent(label.clone()))?;
        let Behavior::Magistrate(ma) = &mut self.slots[i].behavior else {
            return Err(AgentError::NotAMagistrate(label).into());
        };
        let effect = ma.register_impediment(imp);
        let from = self.slots[i].id.clone();
        self.apply(vec![effect], &from)
    }

    fn apply(&mut self, effects: Vec<Effect>, from: &AgentId) -> Result<(), PlatformError> {
        let mut settled = Vec::new();
        let slots = &mut self.slots;
        let index = &self.index;
        let result = apply(
            effects,
            from,
            &self.audit,
            &self.registry,
            &self.progress,
            &mut |m: Message| {
                if let Some(&i) = index.get(&m.receiver.label) {
                    slots[i].mailbox.push_back(m);
                }
            },
            &mut settled,
        );
        self.settle(settled);
        result.map_err(Into::into)
    }

    fn settle(&mut self, settled: Vec<Settled>) {
        for s in settled {
            match s {
                Settled::Done(ticket, o) => {
                    let i = self.outcomes.len();
                    self.by_id.insert(o.distribution_id.clone(), i);
                    self.by_case
                        .entry(o.case_number.clone())
                        .or_default()
                        .push(i);
                    self.tickets.insert(ticket, Ok(i));
                    self.outcomes.push(*o);
                }
                Settled::Failed(f) => {
                    let i = self.failures.len();
                    self.tickets.insert(f.ticket, Err(i));
                    self.failures.push(f);
                }
            }
        }
    }

    /// One deterministic scheduling step. Returns false once every active
    /// agent is idle.
    pub fn step(&mut self) -> Result<bool, PlatformError> {
        self.check_intake()?;
        let da_active = self.registry.is_active(&self.slots[self.da].id.label);
        if da_active {
            if let Some(conv) = self.distributor_ref().awaiting_replies() {
                match &self.awaiting_since {
                    Some((id, since)) if id == conv => {
                        if self.steps - since > self.config.reply_budget {
                            return self.time_out().map(|_| true);
                        }
                    }
                    _ => self.awaiting_since = Some((conv.to_owned(), self.steps)),
                }
            }
        }
        let n = self.slots.len();
        for k in 0..n {
            let i = (self.cursor + k) % n;
            if !self.registry.is_active(&self.slots[i].id.label) {
                continue;
            }
            let effects = if let Some(msg) = self.slots[i].mailbox.pop_front() {
                self.slots[i].behavior.handle(msg, &self.registry)
            } else if i == self.da && self.distributor_ref().can_start() {
                let registry = &self.registry;
                match &mut self.slots[i].behavior {
                    Behavior::Distributor(d) => d.start_next(registry),
                    _ => unreachable!("distribution agent slot"),
                }
            } else {
                continue;
            };
            self.cursor = (i + 1) % n;
            self.steps += 1;
            let from = self.slots[i].id.clone();
            self.apply(effects, &from)?;
            return Ok(true);
        }
        if da_active && self.distributor_ref().awaiting_replies().is_some() {
            self.time_out()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn time_out(&mut self) -> Result<(), PlatformError> {
        self.awaiting_since = None;
        self.steps += 1;
        let registry = &self.registry;
        let effects = match &mut self.slots[self.da].behavior {
            Behavior::Distributor(d) => d.timeout(registry),
            _ => unreachable!("distribution agent slot"),
        };
        let from = self.slots[self.da].id.clone();
        self.apply(effects, &from)
    }

    /// Runs queued distributions to quiescence under the chosen scheduler.
    pub fn run(&mut self, scheduler: Scheduler) -> Result<RunReport, PlatformError> {
        self.progress.running.store(true, Ordering::Relaxed);
        let (done0, failed0) = (self.outcomes.len(), self.failures.len());
        let start = Instant::now();
        let result = match scheduler {
            Scheduler::Deterministic => self.run_deterministic(),
            Scheduler::Concurrent => self.run_concurrent(),
        };
        self.progress.running.store(false, Ordering::Relaxed);
        result?;
        let elapsed = start.elapsed().as_secs_f64();
        let distributed = (self.outcomes.len() - done0) as u64;
        let failed = (self.failures.len() - failed0) as u64;
        let report = RunReport {
            scheduler,
            distributed,
            failed,
            elapsed_secs: elapsed,
            lawsuits_per_sec: if elapsed > 0.0 {
                (distributed + failed) as f64 / elapsed
            } else {
                0.0
            },
        };
        self.last_run = Some(report);
        Ok(report)
    }

    /// At most `max_steps` deterministic steps. Returns whether work remains,
    /// so a caller can release the platform between chunks.
    pub fn run_steps(&mut self, max_steps: u64) -> Result<bool, PlatformError> {
        for _ in 0..max_steps {
            if !self.step()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn run_deterministic(&mut self) -> Result<(), PlatformError> {
        while self.step()? {}
        Ok(())
    }

    fn run_concurrent(&mut self) -> Result<(), PlatformError> {
        self.check_intake()?;
        let registry = &self.registry;
        let audit = &*self.audit;
        let progress = &*self.progress;
        let reply_timeout = self.config.reply_timeout;
        let da = self.da;
        let mut senders: HashMap<String, Sender<Envelope>> = HashMap::new();
        let mut receivers: Vec<Receiver<Envelope>> = Vec::new();
        for slot in &mut self.slots {
            let (tx, rx) = unbounded();
            for m in slot.mailbox.drain(..) {
                tx.send(Envelope::Msg(m)).expect("receiver alive");
            }
            senders.insert(slot.id.label.clone(), tx);
            receivers.push(rx);
        }
        let senders = &senders;
        let settled: Mutex<Vec<Settled>> = Mutex::new(Vec::new());
        let failure: Mutex<Option<AuditError>> = Mutex::new(None);
        let (settled_ref, failure_ref) = (&settled, &failure);

        let run_effects = move |effects: Vec<Effect>, from: &AgentId| {
            let mut local = Vec::new();
            let r = apply(
                effects,
                from,
                audit,
                registry,
                progress,
                &mut |m: Message| {
                    if let Some(tx) = senders.get(&m.receiver.label) {
                        let _ = tx.send(Envelope::Msg(m));
                    }
                },
                &mut local,
            );
            lock(settled_ref).extend(local);
            if let Err(e) = r {
                lock(failure_ref).get_or_insert(e);
                return false;
            }
            true
        };

        std::thread::scope(|s| {
            let mut workers = Vec::new();
            let mut distributor = None;
            for (i, (slot, rx)) in self.slots.iter_mut().zip(&receivers).enumerate() {
                if !registry.is_active(&slot.id.label) {
                    continue;
                }
                let run_effects = &run_effects;
                if i == da {
                    distributor = Some(s.spawn(move || {
                        let Behavior::Distributor(d) = &mut slot.behavior else {
                            unreachable!("distribution agent slot")
                        };
                        loop {
                            if lock(failure_ref).is_some() {
                                break;
                            }
                            if d.in_conversation().is_none() {
                                if !d.can_start() {
                                    break;
                                }
                                let effects = d.start_next(registry);
                                run_effects(effects, &slot.id);
                                continue;
                            }
                            let effects = match rx.recv_timeout(reply_timeout) {
                                Ok(Envelope::Msg(m)) => d.handle(m, registry),
                                Ok(Envelope::Stop) => break,
                                Err(RecvTimeoutError::Timeout) => d.timeout(registry),
                                Err(RecvTimeoutError::Disconnected) => break,
                            };
                            run_effects(effects, &slot.id);
                        }
                    }));
                } else {
                    workers.push(s.spawn(move || {
                        while let Ok(Envelope::Msg(m)) = rx.recv() {
                            let effects = slot.behavior.handle(m, registry);
                            run_effects(effects, &slot.id);
                        }
                    }));
                }
            }
            if let Some(d) = distributor {
                d.join().expect("distribution agent thread");
            }
            for (label, tx) in senders {
                if registry.is_active(label) {
                    let _ = tx.send(Envelope::Stop);
                }
            }
            for w in workers {
                w.join().expect("agent thread");
            }
        });

        for (slot, rx) in self.slots.iter_mut().zip(&receivers) {
            slot.mailbox.extend(rx.try_iter().filter_map(|e| match e {
                Envelope::Msg(m) => Some(m),
                Envelope::Stop => None,
            }));
        }
        self.settle(settled.into_inner().unwrap_or_else(|e| e.into_inner()));
        match failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    fn settled(&self, ticket: u64) -> Result<DistributionOutcome, PlatformError> {
        match self.tickets.get(&ticket) {
            Some(Ok(i)) => Ok(self.outcomes[*i].clone()),
            Some(Err(i)) => Err(self.failures[*i].error.clone().into()),
            None => Err(PlatformError::Unsettled(ticket)),
        }
    }

    /// Submits one lawsuit and runs the deterministic scheduler until it settles.
    pub fn distribute(&mut self, lawsuit: Lawsuit) -> Result<DistributionOutcome, PlatformError> {
        let ticket = self.submit(lawsuit)?;
        self.run(Scheduler::Deterministic)?;
        self.settled(ticket)
    }

    pub fn redistribute(
        &mut self,
        case: &CaseNumber,
        reason: &str,
    ) -> Result<DistributionOutcome, PlatformError> {
        let ticket = self.request_redistribution(case, reason)?;
        self.run(Scheduler::Deterministic)?;
        self.settled(ticket)
    }

    pub fn result(
        &self,
        ticket: u64,
    ) -> Option<Result<&DistributionOutcome, &DistributionFailure>> {
        self.tickets.get(&ticket).map(|r| match r {
            Ok(i) => Ok(&self.outcomes[*i]),
            Err(i) => Err(&self.failures[*i]),
        })
    }

    /// Outcomes in settlement order.
    pub fn outcomes(&self) -> &[DistributionOutcome] {
        &self.outcomes
    }

    pub fn failures(&self) -> &[DistributionFailure] {
        &self.failures
    }

    pub fn outcome(&self, distribution_id: &str) -> Option<&DistributionOutcome> {
        self.by_id.get(distribution_id).map(|&i| &self.outcomes[i])
    }

    /// Outcomes of one case, oldest first.
    pub fn outcomes_for_case(&self, case: &CaseNumber) -> Vec<&DistributionOutcome> {
        self.by_case
            .get(case)
            .map(|is| is.iter().map(|&i| &self.outcomes[i]).collect())
            .unwrap_or_default()
    }

    /// The lawsuit as held by its protocol agent.
    pub fn lawsuit(&self, case: &CaseNumber) -> Option<&LawsuitStatus> {
        let label = self.case_owner.get(case)?;
        match &self.slots[*self.index.get(label)?].behavior {
            Behavior::Protocol(pa) => pa.lawsuit(case),
            _ => None,
        }
    }

    pub fn impediments(&self) -> Vec<Impediment> {
        self.slots
            .iter()
            .filter_map(|s| match &s.behavior {
                Behavior::Magistrate(ma) => Some(ma.impediments().iter().cloned()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn rule_stats(&self) -> Vec<RuleCount> {
        lock(&self.audit).rule_stats()
    }

    pub fn throughput(&self) -> Throughput {
        Throughput {
            running: self.progress.running.load(Ordering::Relaxed),
            submitted: self.progress.submitted.load(Ordering::Relaxed),
            settled: self.progress.settled.load(Ordering::Relaxed),
            last_run: self.last_run,
            total_distributed: self.outcomes.len() as u64,
            total_failed: self.failures.len() as u64,
        }
    }
}
