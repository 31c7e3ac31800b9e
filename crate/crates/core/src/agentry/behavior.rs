//! Protocol and magistrate agent behaviors. Handlers are pure state
//! transitions that return [`Effect`]s; the scheduler applies them in order.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use super::{AgentId, Content, DistributionNotice, ImpedimentReply, Message};
use crate::auditlog::{actions, Entry};
use crate::distributor::{DistributionAgent, DistributionFailure, DistributionOutcome};
use crate::domain::{impediment_applies, CaseNumber, Impediment, Lawsuit, Magistrate};

// sends dominate; boxing them would allocate per message
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Record(Entry),
    Send(Message),
    /// Appended as `record-outcome`, stamped with the append time.
    Outcome {
        ticket: u64,
        outcome: Box<DistributionOutcome>,
    },
    Failed(DistributionFailure),
}

/// Consumption record for a delivered message.
pub(crate) fn consumed(
    msg: &Message,
    action: &'static str,
    behavior: Option<&str>,
    extra: serde_json::Value,
) -> Effect {
    let mut payload = json!({
        "content_type": msg.content_type().name(),
        "sender": msg.sender.label,
    });
    if let Some(b) = behavior {
        payload["behavior"] = b.into();
    }
    if let (Some(obj), serde_json::Value::Object(more)) = (payload.as_object_mut(), extra) {
        obj.extend(more);
    }
    Effect::Record(
        Entry::new(msg.receiver.label.clone(), action, payload)
            .in_distribution(msg.conversation_id.clone())
            .for_case(&msg.case_number),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LawsuitStatus {
    pub lawsuit: Lawsuit,
    pub assignment: Option<DistributionNotice>,
}

/// Holds the lawsuits of one regional court and answers lawsuit requests.
#[derive(Debug, Clone)]
pub struct ProtocolAgent {
    pub id: AgentId,
    lawsuits: BTreeMap<CaseNumber, LawsuitStatus>,
}

impl ProtocolAgent {
    pub fn new(id: AgentId) -> Self {
        Self {
            id,
            lawsuits: BTreeMap::new(),
        }
    }

    /// Stores a lawsuit, replacing an earlier phase of the same case.
    /// Returns false when the case is already held at this phase or later.
    pub fn ingest(&mut self, lawsuit: Lawsuit) -> bool {
        if let Some(held) = self.lawsuits.get(&lawsuit.case_number) {
            if held.lawsuit.phase >= lawsuit.phase {
                return false;
            }
        }
        self.lawsuits.insert(
            lawsuit.case_number.clone(),
            LawsuitStatus {
                lawsuit,
                assignment: None,
            },
        );
        true
    }

    pub fn lawsuit(&self, case: &CaseNumber) -> Option<&LawsuitStatus> {
        self.lawsuits.get(case)
    }

    pub fn len(&self) -> usize {
        self.lawsuits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lawsuits.is_empty()
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Effect> {
        match &msg.content {
            Content::RequestLawsuit { case_number } => {
                let lawsuit = self.lawsuits.get(case_number).map(|s| s.lawsuit.clone());
                vec![
                    consumed(
                        &msg,
                        actions::START_BEHAVIOR,
                        Some("InformLawsuit"),
                        json!({}),
                    ),
                    Effect::Send(Message::reply(
                        self.id.clone(),
                        msg.sender.clone(),
                        msg.conversation_id.clone(),
                        msg.case_number.clone(),
                        Content::InformLawsuit { lawsuit },
                    )),
                ]
            }
            Content::InformDistribution(notice) => {
                let known = match self.lawsuits.get_mut(&msg.case_number) {
                    Some(status) => {
                        status.assignment = Some(notice.clone());
                        true
                    }
                    None => false,
                };
                vec![consumed(
                    &msg,
                    actions::START_BEHAVIOR,
                    Some("UpdateLawsuit"),
                    json!({
                        "body": notice.body,
                        "magistrate": notice.magistrate,
                        "updated": known,
                        "justification": format!(
                            "assignment from distribution {} under rule {}",
                            notice.distribution_id, notice.rule_number
                        ),
                    }),
                )]
            }
            _ => vec![consumed(
                &msg,
                actions::HANDLE_MESSAGE,
                None,
                json!({ "ignored": true }),
            )],
        }
    }
}

/// Speaks for one magistrate: membership and registered impediments.
#[derive(Debug, Clone)]
pub struct MagistrateAgent {
    pub id: AgentId,
    pub magistrate: Magistrate,
    impediments: Vec<Impediment>,
}

impl MagistrateAgent {
    pub fn new(id: AgentId, magistrate: Magistrate) -> Self {
        Self {
            id,
            magistrate,
            impediments: Vec::new(),
        }
    }

    pub fn impediments(&self) -> &[Impediment] {
        &self.impediments
    }

    pub fn register_impediment(&mut self, imp: Impediment) -> Effect {
        let payload = json!({
            "impediment": imp,
            "justification": imp.reason,
        });
        self.impediments.push(imp);
        Effect::Record(Entry::new(
            self.id.label.clone(),
            actions::REGISTER_IMPEDIMENT,
            payload,
        ))
    }

    pub fn reply_for(&self, lawsuit: &Lawsuit) -> ImpedimentReply {
        let me = &self.magistrate.id;
        let reasons: Vec<String> = self
            .impediments
            .iter()
            .filter(|i| i.magistrate == *me && i.covers(lawsuit))
            .map(|i| i.reason.clone())
            .collect();
        ImpedimentReply {
            magistrate: me.clone(),
            active: self.magistrate.active,
            impeded: impediment_applies(me, lawsuit, &self.impediments),
            reasons,
            memberships: self.magistrate.memberships.clone(),
        }
    }

    pub fn handle(&mut self, msg: Message) -> Vec<Effect> {
        match &msg.content {
            Content::QueryIfImpediment { lawsuit } => {
                let reply = self.reply_for(lawsuit);
                vec![
                    consumed(
                        &msg,
                        actions::START_BEHAVIOR,
                        Some("InformImpedimentOrCompetence"),
                        json!({}),
                    ),
                    Effect::Send(Message::reply(
                        self.id.clone(),
                        msg.sender.clone(),
                        msg.conversation_id.clone(),
                        msg.case_number.clone(),
                        Content::InformImpedimentOrCompetence(reply),
                    )),
                ]
            }
            _ => vec![consumed(
                &msg,
                actions::HANDLE_MESSAGE,
                None,
                json!({ "ignored": true }),
            )],
        }
    }
}

#[derive(Debug)]
pub enum Behavior {
    Protocol(ProtocolAgent),
    Magistrate(MagistrateAgent),
    Distributor(Box<DistributionAgent>),
}

impl Behavior {
    pub fn handle(&mut self, msg: Message, registry: &super::Registry) -> Vec<Effect> {
        match self {
            Behavior::Protocol(pa) => pa.handle(msg),
            Behavior::Magistrate(ma) => ma.handle(msg),
            Behavior::Distributor(da) => da.handle(msg, registry),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ImpedimentTarget, PartyRef};

    fn lawsuit() -> Lawsuit {
        Lawsuit {
            case_number: "3128-70.2012.5.18.102".parse().unwrap(),
            procedural_class: "AIRR".into(),
            parties: [PartyRef::from("P1")].into_iter().collect(),
            lawyers: Default::default(),
            related_cases: Default::default(),
            phase: 1,
            embargo_of: None,
            protocol: "PA18".into(),
        }
    }

    fn ma() -> MagistrateAgent {
        let m = Magistrate {
            id: "MMCP".into(),
            name: "MMCP".into(),
            active: true,
            memberships: ["T1".into()].into_iter().collect(),
        };
        MagistrateAgent::new(AgentId::magistrate(&m.id), m)
    }

    #[test]
    fn ma_reply_agrees_with_impediment_check() {
        let mut agent = ma();
        let l = lawsuit();
        assert!(!agent.reply_for(&l).impeded);
        agent.register_impediment(Impediment {
            magistrate: "MMCP".into(),
            target: ImpedimentTarget::Party("P1".into()),
            reason: "related to a party".into(),
        });
        let reply = agent.reply_for(&l);
        assert!(reply.impeded);
        assert_eq!(reply.reasons, ["related to a party"]);
    }

    #[test]
    fn pa_answers_request_and_records_assignment() {
        let mut pa = ProtocolAgent::new(AgentId::protocol("PA18"));
        let l = lawsuit();
        assert!(pa.ingest(l.clone()));
        assert!(!pa.ingest(l.clone()));
        let req = Message::reply(
            AgentId::distributor("DA01"),
            pa.id.clone(),
            "DA01-000001",
            l.case_number.clone(),
            Content::RequestLawsuit {
                case_number: l.case_number.clone(),
            },
        );
        let effects = pa.handle(req);
        assert_eq!(effects.len(), 2);
        match &effects[1] {
            Effect::Send(m) => assert_eq!(
                m.content,
                Content::InformLawsuit {
                    lawsuit: Some(l.clone())
                }
            ),
            other => panic!("unexpected {other:?}"),
        }
        let notice = DistributionNotice {
            distribution_id: "DA01-000001".into(),
            rule_number: 4,
            fired_rule: "ordinary".into(),
            body: "T6".into(),
            magistrate: "MKA".into(),
            outcome_digest: String::new(),
        };
        pa.handle(Message::reply(
            AgentId::distributor("DA01"),
            pa.id.clone(),
            "DA01-000001",
            l.case_number.clone(),
            Content::InformDistribution(notice.clone()),
        ));
        assert_eq!(pa.lawsuit(&l.case_number).unwrap().assignment, Some(notice));
    }
}
