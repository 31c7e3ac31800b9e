use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::domain::{BodyId, CaseNumber, Lawsuit, MagistrateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AgentKind {
    /// Protocol agent: owns the lawsuits of one court.
    PA,
    /// Magistrate agent: answers impediment queries for one magistrate.
    MA,
    /// Distribution agent.
    DA,
    /// Platform management agent.
    PMA,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub kind: AgentKind,
    pub label: String,
}

impl AgentId {
    pub fn new(kind: AgentKind, label: impl Into<String>) -> Self {
        Self {
            kind,
            label: label.into(),
        }
    }

    pub fn protocol(label: impl Into<String>) -> Self {
        Self::new(AgentKind::PA, label)
    }

    pub fn magistrate(id: &MagistrateId) -> Self {
        Self::new(AgentKind::MA, id.as_str())
    }

    pub fn distributor(label: impl Into<String>) -> Self {
        Self::new(AgentKind::DA, label)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Performative {
    Request,
    Inform,
    QueryIf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentType {
    RequestLawsuit,
    InformLawsuit,
    QueryIfImpediment,
    InformImpedimentOrCompetence,
    InformDistribution,
}

impl ContentType {
    pub fn performative(self) -> Performative {
        match self {
            ContentType::RequestLawsuit => Performative::Request,
            ContentType::QueryIfImpediment => Performative::QueryIf,
            _ => Performative::Inform,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContentType::RequestLawsuit => "request-lawsuit",
            ContentType::InformLawsuit => "inform-lawsuit",
            ContentType::QueryIfImpediment => "query-if-impediment",
            ContentType::InformImpedimentOrCompetence => "inform-impediment-or-competence",
            ContentType::InformDistribution => "inform-distribution",
        }
    }
}

/// A magistrate agent's answer to an impediment query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpedimentReply {
    pub magistrate: MagistrateId,
    pub active: bool,
    pub impeded: bool,
    pub reasons: Vec<String>,
    /// Bodies the magistrate sits on; the competence half of the reply.
    pub memberships: BTreeSet<BodyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionNotice {
    pub distribution_id: String,
    pub rule_number: u8,
    pub fired_rule: String,
    pub body: BodyId,
    pub magistrate: MagistrateId,
    /// Digest of the logged outcome payload; filled in when the outcome is appended.
    #[serde(default)]
    pub outcome_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "content_type", content = "payload", rename_all = "kebab-case")]
pub enum Content {
    RequestLawsuit {
        case_number: CaseNumber,
    },
    /// `None` when the protocol agent does not hold the case.
    InformLawsuit {
        lawsuit: Option<Lawsuit>,
    },
    QueryIfImpediment {
        lawsuit: Lawsuit,
    },
    InformImpedimentOrCompetence(ImpedimentReply),
    InformDistribution(DistributionNotice),
}

impl Content {
    pub fn content_type(&self) -> ContentType {
        match self {
            Content::RequestLawsuit { .. } => ContentType::RequestLawsuit,
            Content::InformLawsuit { .. } => ContentType::InformLawsuit,
            Content::QueryIfImpediment { .. } => ContentType::QueryIfImpediment,
            Content::InformImpedimentOrCompetence(_) => ContentType::InformImpedimentOrCompetence,
            Content::InformDistribution(_) => ContentType::InformDistribution,
        }
    }
}

/// Envelope exchanged between agents. The conversation id is the
/// distribution id the message belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub performative: Performative,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub conversation_id: String,
    pub case_number: CaseNumber,
    #[serde(flatten)]
    pub content: Content,
}

impl Message {
    pub fn new(
        performative: Performative,
        sender: AgentId,
        receiver: AgentId,
        conversation_id: impl Into<String>,
        case_number: CaseNumber,
        content: Content,
    ) -> Result<Self, AgentError> {
        let content_type = content.content_type();
        if content_type.performative() != performative {
            return Err(AgentError::IncompatiblePerformative {
                performative,
                content_type,
            });
        }
        Ok(Self {
            performative,
            sender,
            receiver,
            conversation_id: conversation_id.into(),
            case_number,
            content,
        })
    }

    /// Builds a message whose performative follows from its content.
    pub fn reply(
        sender: AgentId,
        receiver: AgentId,
        conversation_id: impl Into<String>,
        case_number: CaseNumber,
        content: Content,
    ) -> Self {
        let performative = content.content_type().performative();
        Self::new(
            performative,
            sender,
            receiver,
            conversation_id,
            case_number,
            content,
        )
        .expect("performative derived from content")
    }

    pub fn content_type(&self) -> ContentType {
        self.content.content_type()
    }

    /// Audit payload: the envelope with agent labels in place of ids.
    pub fn audit_payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("message serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.insert("sender".into(), self.sender.label.clone().into());
            obj.insert("receiver".into(), self.receiver.label.clone().into());
            obj.remove("case_number");
            obj.remove("conversation_id");
        }
        v
    }
}
