//! The distribution agent: gathers facts by messaging, fires the rule
//! engine, executes the selected directive and reports the outcome.
//!
//! The agent never reads lawsuit or magistrate stores. The lawsuit comes
//! from its protocol agent, impediments and body composition come from
//! magistrate replies, and the only data it owns are the competence map and
//! its own assignment history.

mod draw;
mod outcome;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

pub use draw::{draw, mix_seed, DrawPick, DrawResult, DrawRng, Exhausted};
pub use outcome::{
    CorruptJustification, DirectiveKind, DistributionOutcome, ImpededMagistrate, Justification,
    TWO_STAGE_NOTE,
};

use crate::agentry::{
    consumed, AgentId, Content, DistributionNotice, Effect, ImpedimentReply, Message, Registry,
};
use crate::auditlog::{actions, Entry};
use crate::domain::{
    competent_bodies, BodyId, CaseNumber, CompetenceMap, Lawsuit, MagistrateId, PriorAssignment,
};
use crate::rulekit::{fire, Fact, Firing, RuleSet, WorkingMemory};

pub const IMPEDIMENT_SERVICE: &str = "impediment-query";

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum DistributionError {
    #[error("no judicial body is competent for class {class}")]
    NoCompetentBody { class: String },
    #[error(
        "every candidate body of {case} was emptied by impediments, exclusions or suspensions"
    )]
    DistributionExhausted { case: String },
    #[error("prevention source {magistrate} cannot take the case and body {body} has no other eligible member")]
    PreventionConflict {
        body: BodyId,
        magistrate: MagistrateId,
    },
    #[error("no rule matched the working memory")]
    NoRuleMatched,
    #[error("case {0} has no earlier distribution to redistribute")]
    RedistributionOfUnknownCase(String),
    #[error("protocol agent {protocol} does not hold case {case}")]
    UnknownLawsuit { protocol: String, case: String },
    #[error("agent {0} is not active")]
    AgentUnavailable(String),
}

impl DistributionError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NoCompetentBody { .. } => "no_competent_body",
            Self::DistributionExhausted { .. } => "distribution_exhausted",
            Self::PreventionConflict { .. } => "prevention_conflict",
            Self::NoRuleMatched => "no_rule_matched",
            Self::RedistributionOfUnknownCase(_) => "redistribution_of_unknown_case",
            Self::UnknownLawsuit { .. } => "unknown_lawsuit",
            Self::AgentUnavailable(_) => "agent_unavailable",
        }
    }
}

/// A distribution that ended without an outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionFailure {
    pub ticket: u64,
    pub distribution_id: Option<String>,
    pub case_number: CaseNumber,
    pub error: DistributionError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redistribution {
    pub supersedes: String,
    pub reason: String,
}

/// One pending distribution in the agent's queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkItem {
    pub ticket: u64,
    pub protocol: String,
    pub case_number: CaseNumber,
    pub redistribution: Option<Redistribution>,
}

/// Assignments known to the distribution agent: seeded history plus its
/// own outcomes, per case in insertion order.
#[derive(Debug, Clone, Default)]
pub struct AssignmentDb {
    by_case: HashMap<CaseNumber, Vec<PriorAssignment>>,
}

impl AssignmentDb {
    pub fn new(history: impl IntoIterator<Item = PriorAssignment>) -> Self {
        let mut db = Self::default();
        for a in history {
            db.record(a);
        }
        db
    }

    pub fn record(&mut self, a: PriorAssignment) {
        self.by_case
            .entry(a.case_number.clone())
            .or_default()
            .push(a);
    }

    /// Most recent assignment of the case, any phase.
    pub fn latest(&self, case: &CaseNumber) -> Option<&PriorAssignment> {
        self.by_case.get(case)?.iter().rev().max_by_key(|a| a.phase)
    }

    /// Most recent assignment of an earlier phase of the case.
    pub fn previous_phase(&self, case: &CaseNumber, phase: u32) -> Option<&PriorAssignment> {
        self.by_case
            .get(case)?
            .iter()
            .rev()
            .filter(|a| a.phase < phase)
            .max_by_key(|a| a.phase)
    }
}

/// Builds the working memory for one lawsuit from the gathered perceptions.
pub fn collect_facts(
    lawsuit: &Lawsuit,
    replies: &[ImpedimentReply],
    db: &AssignmentDb,
    competence: &CompetenceMap,
) -> Result<WorkingMemory, DistributionError> {
    let bodies = competent_bodies(&lawsuit.procedural_class, competence);
    if bodies.is_empty() {
        return Err(DistributionError::NoCompetentBody {
            class: lawsuit.procedural_class.clone(),
        });
    }
    let mut wm = WorkingMemory::new();
    wm.insert(Fact::Lawsuit(lawsuit.clone()));
    wm.insert(Fact::Competence {
        class: lawsuit.procedural_class.clone(),
        bodies,
    });
    for r in replies.iter().filter(|r| r.impeded) {
        wm.insert(Fact::Impediment {
            magistrate: r.magistrate.clone(),
            case_number: lawsuit.case_number.clone(),
        });
    }
    for related in &lawsuit.related_cases {
        if let Some(a) = db.latest(related) {
            wm.insert(Fact::RelatedAssignment(a.clone()));
        }
    }
    if lawsuit.phase > 1 {
        if let Some(p) = db.previous_phase(&lawsuit.case_number, lawsuit.phase) {
            wm.insert(Fact::PriorAssignment(p.clone()));
        }
    }
    if let Some(div) = &lawsuit.embargo_of {
        wm.insert(Fact::Divergence {
            case_number: lawsuit.case_number.clone(),
            diverging_bodies: div.diverging_bodies.clone(),
        });
    }
    Ok(wm)
}

/// What the agent knows about each magistrate when executing a directive.
#[derive(Debug, Clone, Default)]
pub struct Eligibility {
    /// Members of each body, sorted.
    pub composition: BTreeMap<BodyId, Vec<MagistrateId>>,
    pub impeded: Vec<ImpededMagistrate>,
    pub excluded: BTreeSet<MagistrateId>,
    pub timed_out: BTreeSet<MagistrateId>,
    /// Magistrates that may be drawn.
    pub eligible: BTreeSet<MagistrateId>,
}

impl Eligibility {
    pub fn members(&self, body: &BodyId) -> &[MagistrateId] {
        self.composition
            .get(body)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    pub fn eligible_members(&self, body: &BodyId) -> Vec<MagistrateId> {
        self.members(body)
            .iter()
            .filter(|m| self.eligible.contains(*m))
            .cloned()
            .collect()
    }
}

/// Directive execution result before the outcome is assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub body: BodyId,
    pub magistrate: MagistrateId,
    pub justification: Justification,
}

fn draw_over(
    bodies: &[BodyId],
    elig: &Eligibility,
    seed: u64,
    j: &mut Justification,
) -> Result<(BodyId, MagistrateId), Exhausted> {
    let candidates: Vec<(BodyId, Vec<MagistrateId>)> = bodies
        .iter()
        .map(|b| (b.clone(), elig.eligible_members(b)))
        .collect();
    let result = draw(&candidates, &mut DrawRng::new(seed))?;
    j.eligible_bodies = result.bodies.clone();
    j.eligible_members = candidates
        .into_iter()
        .filter(|(b, ms)| !ms.is_empty() && result.bodies.contains(b))
        .collect();
    j.draw_picks = result.picks;
    j.draw_method = Some(TWO_STAGE_NOTE.to_owned());
    Ok((result.body, result.magistrate))
}

/// Executes a fired directive over the gathered eligibility.
pub fn execute(
    firing: &Firing,
    lawsuit: &Lawsuit,
    competence: &CompetenceMap,
    elig: &Eligibility,
    seed: u64,
) -> Result<Execution, DistributionError> {
    let competent = competent_bodies(&lawsuit.procedural_class, competence);
    let kind = DirectiveKind::from(&firing.directive);
    let bound = firing
        .directive
        .binding()
        .and_then(|l| firing.bindings.get(l));
    let mut j = Justification {
        competent_bodies: competent.clone(),
        impeded: elig.impeded.clone(),
        excluded: elig.excluded.iter().cloned().collect(),
        timed_out: elig.timed_out.iter().cloned().collect(),
        draw_seed: seed,
        ..Default::default()
    };
    let mut considered: BTreeSet<BodyId> = competent.iter().cloned().collect();
    let exhausted = || DistributionError::DistributionExhausted {
        case: lawsuit.case_number.to_string(),
    };
    let (body, magistrate) = match (kind, bound) {
        (
            DirectiveKind::AssignSameAs | DirectiveKind::PreventionAssign,
            Some(Fact::PriorAssignment(src) | Fact::RelatedAssignment(src)),
        ) => {
            considered.insert(src.body.clone());
            j.source = Some(src.clone());
            let seated = elig.members(&src.body).contains(&src.magistrate);
            if seated && elig.eligible.contains(&src.magistrate) {
                (src.body.clone(), src.magistrate.clone())
            } else {
                j.prevention_override = true;
                draw_over(std::slice::from_ref(&src.body), elig, seed, &mut j).map_err(|_| {
                    DistributionError::PreventionConflict {
                        body: src.body.clone(),
                        magistrate: src.magistrate.clone(),
                    }
                })?
            }
        }
        (DirectiveKind::EmbargoAssign, _) => {
            let body = competence
                .divergence_body
                .get(&lawsuit.procedural_class)
                .cloned()
                .ok_or_else(|| DistributionError::NoCompetentBody {
                    class: lawsuit.procedural_class.clone(),
                })?;
            considered.insert(body.clone());
            draw_over(&[body], elig, seed, &mut j).map_err(|_| exhausted())?
        }
        (DirectiveKind::OrdinaryDraw, _) => {
            draw_over(&competent, elig, seed, &mut j).map_err(|_| exhausted())?
        }
        // The parser guarantees the binding type, so this is unreachable for
        // rule sets that passed scope checks.
        _ => return Err(DistributionError::NoRuleMatched),
    };
    j.composition = considered
        .into_iter()
        .map(|b| {
            let members = elig.members(&b).to_vec();
            (b, members)
        })
        .collect();
    Ok(Execution {
        body,
        magistrate,
        justification: j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    AwaitingLawsuit,
    AwaitingReplies,
}

#[derive(Debug)]
struct Conversation {
    id: String,
    item: WorkItem,
    seed: u64,
    stage: Stage,
    lawsuit: Option<Lawsuit>,
    awaiting: BTreeSet<MagistrateId>,
    replies: BTreeMap<MagistrateId, ImpedimentReply>,
}

#[derive(Debug)]
pub struct DistributionAgent {
    pub id: AgentId,
    rules: Arc<RuleSet>,
    competence: CompetenceMap,
    seed_root: u64,
    db: AssignmentDb,
    /// Latest own outcome per case: (distribution id, magistrate, protocol).
    distributed: HashMap<CaseNumber, (String, MagistrateId, String)>,
    exclusions: HashMap<CaseNumber, BTreeSet<MagistrateId>>,
    memberships: BTreeMap<MagistrateId, BTreeSet<BodyId>>,
    serial: u64,
    queue: VecDeque<WorkItem>,
    current: Option<Conversation>,
}

impl DistributionAgent {
    pub fn new(
        id: AgentId,
        rules: Arc<RuleSet>,
        competence: CompetenceMap,
        history: impl IntoIterator<Item = PriorAssignment>,
        seed_root: u64,
    ) -> Self {
        Self {
            id,
            rules,
            competence,
            seed_root,
            db: AssignmentDb::new(history),
            distributed: HashMap::new(),
            exclusions: HashMap::new(),
            memberships: BTreeMap::new(),
            serial: 0,
            queue: VecDeque::new(),
            current: None,
        }
    }

    pub fn enqueue(&mut self, item: WorkItem) {
        self.queue.push_back(item);
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Idle with queued work.
    pub fn can_start(&self) -> bool {
        self.current.is_none() && !self.queue.is_empty()
    }

    pub fn is_idle(&self) -> bool {
        self.current.is_none() && self.queue.is_empty()
    }

    /// Conversation id while impediment replies are outstanding.
    pub fn awaiting_replies(&self) -> Option<&str> {
        self.current
            .as_ref()
            .filter(|c| c.stage == Stage::AwaitingReplies)
            .map(|c| c.id.as_str())
    }

    pub fn in_conversation(&self) -> Option<&str> {
        self.current.as_ref().map(|c| c.id.as_str())
    }

    /// Queues a new distribution of an already distributed case, excluding
    /// the magistrate that currently holds it.
    pub fn redistribute(
        &mut self,
        case: &CaseNumber,
        reason: &str,
        ticket: u64,
    ) -> Result<(), DistributionError> {
        let (supersedes, magistrate, protocol) = self
            .distributed
            .get(case)
            .cloned()
            .ok_or_else(|| DistributionError::RedistributionOfUnknownCase(case.to_string()))?;
        self.exclusions
            .entry(case.clone())
            .or_default()
            .insert(magistrate);
        self.enqueue(WorkItem {
            ticket,
            protocol,
            case_number: case.clone(),
            redistribution: Some(Redistribution {
                supersedes,
                reason: reason.to_owned(),
            }),
        });
        Ok(())
    }

    pub fn latest_distribution(&self, case: &CaseNumber) -> Option<&str> {
        self.distributed.get(case).map(|(id, _, _)| id.as_str())
    }

    fn entry(
        &self,
        conv: &Conversation,
        action: &'static str,
        payload: serde_json::Value,
    ) -> Effect {
        Effect::Record(
            Entry::new(self.id.label.clone(), action, payload)
                .in_distribution(conv.id.clone())
                .for_case(&conv.item.case_number),
        )
    }

    fn fail(&mut self, error: DistributionError, out: &mut Vec<Effect>) {
        let conv = self.current.take().expect("failing an open conversation");
        out.push(self.entry(
            &conv,
            actions::DISTRIBUTION_FAILED,
            json!({ "error": error.to_string(), "code": error.code() }),
        ));
        out.push(Effect::Failed(DistributionFailure {
            ticket: conv.item.ticket,
            distribution_id: Some(conv.id),
            case_number: conv.item.case_number,
            error,
        }));
    }

    fn send(&self, conv: &Conversation, to: AgentId, content: Content) -> Effect {
        Effect::Send(Message::reply(
            self.id.clone(),
            to,
            conv.id.clone(),
            conv.item.case_number.clone(),
            content,
        ))
    }

    /// Opens the next queued distribution.
    pub fn start_next(&mut self, registry: &Registry) -> Vec<Effect> {
        let Some(item) = self.queue.pop_front() else {
            return Vec::new();
        };
        self.serial += 1;
        let id = format!("{}-{:06}", self.id.label, self.serial);
        let seed = mix_seed(self.seed_root, &id);
        let conv = Conversation {
            id,
            item,
            seed,
            stage: Stage::AwaitingLawsuit,
            lawsuit: None,
            awaiting: BTreeSet::new(),
            replies: BTreeMap::new(),
        };
        let mut start = json!({ "protocol": conv.item.protocol, "draw_seed": seed });
        if let Some(r) = &conv.item.redistribution {
            start["supersedes"] = r.supersedes.clone().into();
            start["reason"] = r.reason.clone().into();
        }
        let mut out = vec![
            self.entry(&conv, actions::START_DISTRIBUTION, start),
            self.entry(
                &conv,
                actions::START_BEHAVIOR,
                json!({ "behavior": "RequestLawsuit" }),
            ),
        ];
        let protocol = conv.item.protocol.clone();
        let case_number = conv.item.case_number.clone();
        self.current = Some(conv);
        match registry
            .get(&protocol)
            .filter(|_| registry.is_active(&protocol))
        {
            Some(pa) => {
                let msg = self.send(
                    self.current.as_ref().unwrap(),
                    pa.clone(),
                    Content::RequestLawsuit { case_number },
                );
                out.push(msg);
            }
            None => self.fail(DistributionError::AgentUnavailable(protocol), &mut out),
        }
        out
    }

    pub fn handle(&mut self, msg: Message, registry: &Registry) -> Vec<Effect> {
        let current = self.current.as_ref().map(|c| (c.id.clone(), c.stage));
        let ours = current
            .as_ref()
            .is_some_and(|(id, _)| *id == msg.conversation_id);
        match (&msg.content, current) {
            (Content::InformLawsuit { lawsuit }, Some((_, Stage::AwaitingLawsuit))) if ours => {
                let mut out = vec![consumed(
                    &msg,
                    actions::START_BEHAVIOR,
                    Some("QueryIfImpediment"),
                    json!({}),
                )];
                self.on_lawsuit(lawsuit.clone(), registry, &mut out);
                out
            }
            (Content::InformImpedimentOrCompetence(reply), Some((_, Stage::AwaitingReplies)))
                if ours
                    && self
                        .current
                        .as_ref()
                        .unwrap()
                        .awaiting
                        .contains(&reply.magistrate) =>
            {
                let mut out = vec![consumed(
                    &msg,
                    actions::HANDLE_MESSAGE,
                    None,
                    json!({ "impeded": reply.impeded, "reasons": reply.reasons }),
                )];
                self.memberships
                    .insert(reply.magistrate.clone(), reply.memberships.clone());
                let conv = self.current.as_mut().unwrap();
                conv.awaiting.remove(&reply.magistrate);
                conv.replies.insert(reply.magistrate.clone(), reply.clone());
                if conv.awaiting.is_empty() {
                    self.finish(registry, &mut out);
                }
                out
            }
            _ => {
                if let Content::InformImpedimentOrCompetence(reply) = &msg.content {
                    self.memberships
                        .insert(reply.magistrate.clone(), reply.memberships.clone());
                }
                vec![consumed(
                    &msg,
                    actions::HANDLE_MESSAGE,
                    None,
                    json!({ "stale": true }),
                )]
            }
        }
    }

    fn on_lawsuit(&mut self, lawsuit: Option<Lawsuit>, registry: &Registry, out: &mut Vec<Effect>) {
        let conv = self.current.as_ref().unwrap();
        let Some(lawsuit) = lawsuit else {
            let e = DistributionError::UnknownLawsuit {
                protocol: conv.item.protocol.clone(),
                case: conv.item.case_number.to_string(),
            };
            return self.fail(e, out);
        };
        if competent_bodies(&lawsuit.procedural_class, &self.competence).is_empty() {
            let e = DistributionError::NoCompetentBody {
                class: lawsuit.procedural_class.clone(),
            };
            return self.fail(e, out);
        }
        let targets: Vec<AgentId> = registry
            .lookup_service(IMPEDIMENT_SERVICE)
            .iter()
            .filter(|a| registry.is_active(&a.label))
            .cloned()
            .collect();
        for t in &targets {
            out.push(self.send(
                conv,
                t.clone(),
                Content::QueryIfImpediment {
                    lawsuit: lawsuit.clone(),
                },
            ));
        }
        let conv = self.current.as_mut().unwrap();
        conv.lawsuit = Some(lawsuit);
        conv.stage = Stage::AwaitingReplies;
        conv.awaiting = targets
            .into_iter()
            .map(|a| MagistrateId::new(a.label))
            .collect();
        if conv.awaiting.is_empty() {
            self.finish(registry, out);
        }
    }

    /// Gives up on outstanding replies. Magistrates that did not answer keep
    /// their place in the body composition but cannot be drawn.
    pub fn timeout(&mut self, registry: &Registry) -> Vec<Effect> {
        let Some(conv) = self
            .current
            .as_ref()
            .filter(|c| c.stage == Stage::AwaitingReplies)
        else {
            return Vec::new();
        };
        let missing: Vec<_> = conv.awaiting.iter().cloned().collect();
        let mut out = vec![self.entry(conv, actions::QUERY_TIMEOUT, json!({ "missing": missing }))];
        self.finish(registry, &mut out);
        out
    }

    fn eligibility(&self, conv: &Conversation) -> Eligibility {
        let excluded = self
            .exclusions
            .get(&conv.item.case_number)
            .cloned()
            .unwrap_or_default();
        let mut elig = Eligibility {
            excluded,
            timed_out: conv.awaiting.clone(),
            ..Default::default()
        };
        let known = conv
            .replies
            .values()
            .map(|r| (&r.magistrate, &r.memberships))
            .chain(
                conv.awaiting
                    .iter()
                    .filter_map(|m| self.memberships.get(m).map(|b| (m, b))),
            );
        for (m, bodies) in known {
            for b in bodies {
                elig.composition
                    .entry(b.clone())
                    .or_default()
                    .push(m.clone());
            }
            // an unanswered query cannot rule out an impediment
            let usable = conv.replies.get(m).is_some_and(|r| r.active && !r.impeded);
            if usable && !elig.excluded.contains(m) {
                elig.eligible.insert(m.clone());
            }
        }
        for members in elig.composition.values_mut() {
            members.sort();
            members.dedup();
        }
        elig.impeded = conv
            .replies
            .values()
            .filter(|r| r.impeded)
            .map(|r| ImpededMagistrate {
                magistrate: r.magistrate.clone(),
                reasons: r.reasons.clone(),
            })
            .collect();
        elig
    }

    fn finish(&mut self, registry: &Registry, out: &mut Vec<Effect>) {
        let conv = self.current.as_ref().unwrap();
        let lawsuit = conv
            .lawsuit
            .clone()
            .expect("lawsuit received before replies");
        let replies: Vec<_> = conv.replies.values().cloned().collect();
        let wm = match collect_facts(&lawsuit, &replies, &self.db, &self.competence) {
            Ok(wm) => wm,
            Err(e) => return self.fail(e, out),
        };
        let firing = match fire(&wm, &self.rules) {
            Ok(f) => f,
            Err(_) => return self.fail(DistributionError::NoRuleMatched, out),
        };
        let kind = DirectiveKind::from(&firing.directive);
        out.push(self.entry(
            conv,
            actions::FIRE_RULE,
            json!({
                "rule": firing.rule,
                "directive": kind.name(),
                "rule_number": kind.rule_number(),
                "facts": wm.len(),
            }),
        ));
        let elig = self.eligibility(conv);
        let exec = match execute(&firing, &lawsuit, &self.competence, &elig, conv.seed) {
            Ok(x) => x,
            Err(e) => return self.fail(e, out),
        };
        let conv = self.current.take().unwrap();
        let mut justification = exec.justification;
        if let Some(r) = &conv.item.redistribution {
            justification.supersedes = Some(r.supersedes.clone());
            justification.redistribution_reason = Some(r.reason.clone());
        }
        let outcome = DistributionOutcome {
            distribution_id: conv.id.clone(),
            case_number: lawsuit.case_number.clone(),
            phase: lawsuit.phase,
            protocol: lawsuit.protocol.clone(),
            fired_rule: firing.rule.clone(),
            directive: kind,
            rule_number: kind.rule_number(),
            body: exec.body.clone(),
            magistrate: exec.magistrate.clone(),
            justification,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
        };
        self.db.record(outcome.as_assignment());
        self.distributed.insert(
            lawsuit.case_number.clone(),
            (
                conv.id.clone(),
                exec.magistrate.clone(),
                conv.item.protocol.clone(),
            ),
        );
        let notice = DistributionNotice {
            distribution_id: conv.id.clone(),
            rule_number: kind.rule_number(),
            fired_rule: firing.rule,
            body: exec.body,
            magistrate: exec.magistrate,
            outcome_digest: String::new(),
        };
        out.push(Effect::Outcome {
            ticket: conv.item.ticket,
            outcome: Box::new(outcome),
        });
        let pa = registry
            .get(&conv.item.protocol)
            .cloned()
            .unwrap_or_else(|| AgentId::protocol(conv.item.protocol.clone()));
        out.push(self.send(&conv, pa, Content::InformDistribution(notice)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_case_number, DivergenceRef, PartyRef};
    use crate::rulekit::default_rules;

    fn case(s: &str) -> CaseNumber {
        parse_case_number(s).unwrap()
    }

    fn lawsuit(class: &str) -> Lawsuit {
        Lawsuit {
            case_number: case("3128-70.2012.5.18.102"),
            procedural_class: class.into(),
            parties: [PartyRef::from("P1")].into_iter().collect(),
            lawyers: Default::default(),
            related_cases: Default::default(),
            phase: 1,
            embargo_of: None,
            protocol: "PA18".into(),
        }
    }

    fn cmap() -> CompetenceMap {
        let t18: Vec<BodyId> = (1..=8).map(|i| BodyId::new(format!("T{i}"))).collect();
        CompetenceMap {
            classes: [("AIRR".into(), t18), ("E-RR".into(), vec!["SDI1".into()])]
                .into_iter()
                .collect(),
            divergence_body: [("E-RR".into(), "SDI1".into())].into_iter().collect(),
        }
    }

    fn reply(m: &str, bodies: &[&str], impeded: bool) -> ImpedimentReply {
        ImpedimentReply {
            magistrate: m.into(),
            active: true,
            impeded,
            reasons: if impeded {
                vec!["party".into()]
            } else {
                vec![]
            },
            memberships: bodies.iter().map(|&b| BodyId::from(b)).collect(),
        }
    }

    #[test]
    fn facts_for_a_first_distribution() {
        let l = lawsuit("AIRR");
        let replies = [reply("MMCP", &["T1"], true), reply("MKA", &["T6"], false)];
        let wm = collect_facts(&l, &replies, &AssignmentDb::default(), &cmap()).unwrap();
        let competence: Vec<_> = wm.of_type(crate::rulekit::FactType::Competence).collect();
        assert!(matches!(competence[0], Fact::Competence { bodies, .. } if bodies.len() == 8));
        assert_eq!(wm.of_type(crate::rulekit::FactType::Impediment).count(), 1);
        assert_eq!(wm.len(), 3);
    }

    #[test]
    fn unmapped_class_has_no_competent_body() {
        assert_eq!(
            collect_facts(&lawsuit("XYZ"), &[], &AssignmentDb::default(), &cmap()).unwrap_err(),
            DistributionError::NoCompetentBody {
                class: "XYZ".into()
            }
        );
    }

    #[test]
    fn related_cases_become_facts() {
        let mut l = lawsuit("AIRR");
        let a = case("1-00.2010.5.01.001");
        let b = case("2-00.2010.5.01.001");
        l.related_cases = [a.clone(), b.clone(), case("9-00.2010.5.01.001")]
            .into_iter()
            .collect();
        let db = AssignmentDb::new([a, b].into_iter().map(|c| PriorAssignment {
            case_number: c,
            phase: 1,
            body: "T1".into(),
            magistrate: "M1".into(),
            distribution_id: "H".into(),
        }));
        let wm = collect_facts(&l, &[], &db, &cmap()).unwrap();
        assert_eq!(
            wm.of_type(crate::rulekit::FactType::RelatedAssignment)
                .count(),
            2
        );
    }

    fn elig(members: &[(&str, &[&str])], ineligible: &[&str]) -> Eligibility {
        let mut e = Eligibility::default();
        for (b, ms) in members {
            let mut ms: Vec<MagistrateId> = ms.iter().map(|&m| m.into()).collect();
            ms.sort();
            for m in &ms {
                if !ineligible.contains(&m.as_str()) {
                    e.eligible.insert(m.clone());
                }
            }
            e.composition.insert((*b).into(), ms);
        }
        e
    }

    fn fire_on(l: &Lawsuit, db: &AssignmentDb) -> Firing {
        let wm = collect_facts(l, &[], db, &cmap()).unwrap();
        fire(&wm, &default_rules()).unwrap()
    }

    #[test]
    fn prevention_copies_prior_without_draw() {
        let mut l = lawsuit("AIRR");
        l.phase = 2;
        let prior = PriorAssignment {
            case_number: l.case_number.clone(),
            phase: 1,
            body: "T3".into(),
            magistrate: "MX".into(),
            distribution_id: "H-1".into(),
        };
        let db = AssignmentDb::new([prior.clone()]);
        let f = fire_on(&l, &db);
        assert_eq!(f.rule, "prevention");
        let x = execute(&f, &l, &cmap(), &elig(&[("T3", &["MX", "MY"])], &[]), 1).unwrap();
        assert_eq!((x.body.as_str(), x.magistrate.as_str()), ("T3", "MX"));
        assert!(x.justification.draw_picks.is_empty());
        assert!(!x.justification.prevention_override);
        assert_eq!(x.justification.source, Some(prior));
    }

    #[test]
    fn prevention_override_and_conflict() {
        let mut l = lawsuit("AIRR");
        l.phase = 2;
        let db = AssignmentDb::new([PriorAssignment {
            case_number: l.case_number.clone(),
            phase: 1,
            body: "T3".into(),
            magistrate: "MX".into(),
            distribution_id: "H-1".into(),
        }]);
        let f = fire_on(&l, &db);
        let x = execute(&f, &l, &cmap(), &elig(&[("T3", &["MX", "MY"])], &["MX"]), 1).unwrap();
        assert_eq!(x.magistrate.as_str(), "MY");
        assert!(x.justification.prevention_override);
        assert_eq!(
            x.justification
                .replay(DirectiveKind::PreventionAssign)
                .unwrap(),
            (x.body.clone(), x.magistrate.clone())
        );
        let err = execute(&f, &l, &cmap(), &elig(&[("T3", &["MX"])], &["MX"]), 1).unwrap_err();
        assert!(matches!(err, DistributionError::PreventionConflict { .. }));
    }

    #[test]
    fn embargo_draws_in_divergence_body() {
        let mut l = lawsuit("E-RR");
        l.phase = 2;
        l.embargo_of = Some(DivergenceRef {
            source_case: case("1-00.2010.5.01.001"),
            diverging_bodies: vec!["T1".into(), "T2".into()],
        });
        let f = fire_on(&l, &AssignmentDb::default());
        assert_eq!(f.rule, "embargo");
        let x = execute(
            &f,
            &l,
            &cmap(),
            &elig(&[("SDI1", &["A", "B"]), ("T1", &["C"])], &[]),
            5,
        )
        .unwrap();
        assert_eq!(x.body.as_str(), "SDI1");
        assert_eq!(x.justification.eligible_bodies, vec![BodyId::from("SDI1")]);
    }

    #[test]
    fn ordinary_draw_avoids_impeded_and_exhausts() {
        let l = lawsuit("AIRR");
        let f = fire_on(&l, &AssignmentDb::default());
        assert_eq!(f.rule, "ordinary");
        for seed in 0..200 {
            let x = execute(
                &f,
                &l,
                &cmap(),
                &elig(&[("T1", &["MMCP", "A"]), ("T6", &["MKA"])], &["MMCP"]),
                seed,
            )
            .unwrap();
            assert_ne!(x.magistrate.as_str(), "MMCP");
            assert_eq!(
                x.justification.replay(DirectiveKind::OrdinaryDraw).unwrap(),
                (x.body, x.magistrate)
            );
        }
        let err = execute(&f, &l, &cmap(), &elig(&[("T1", &["MMCP"])], &["MMCP"]), 0).unwrap_err();
        assert!(matches!(
            err,
            DistributionError::DistributionExhausted { .. }
        ));
    }
}
