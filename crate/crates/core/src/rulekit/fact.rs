use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{BodyId, CaseNumber, Lawsuit, MagistrateId, PriorAssignment};

/// A perception held in working memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fact {
    Lawsuit(Lawsuit),
    PriorAssignment(PriorAssignment),
    /// Assignment of a case related to the lawsuit being distributed.
    RelatedAssignment(PriorAssignment),
    Competence {
        class: String,
        bodies: Vec<BodyId>,
    },
    Impediment {
        magistrate: MagistrateId,
        case_number: CaseNumber,
    },
    Divergence {
        case_number: CaseNumber,
        diverging_bodies: Vec<BodyId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactType {
    Lawsuit,
    PriorAssignment,
    RelatedAssignment,
    Competence,
    Impediment,
    Divergence,
}

const ASSIGNMENT_FIELDS: &[&str] = &[
    "case_number",
    "phase",
    "body",
    "magistrate",
    "distribution_id",
];

impl FactType {
    pub const ALL: [FactType; 6] = [
        FactType::Lawsuit,
        FactType::PriorAssignment,
        FactType::RelatedAssignment,
        FactType::Competence,
        FactType::Impediment,
        FactType::Divergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FactType::Lawsuit => "Lawsuit",
            FactType::PriorAssignment => "PriorAssignment",
            FactType::RelatedAssignment => "RelatedAssignment",
            FactType::Competence => "Competence",
            FactType::Impediment => "Impediment",
            FactType::Divergence => "Divergence",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn fields(self) -> &'static [&'static str] {
        match self {
            FactType::Lawsuit => &[
                "case_number",
                "class",
                "phase",
                "parties",
                "lawyers",
                "related_cases",
                "embargo",
                "protocol",
            ],
            FactType::PriorAssignment | FactType::RelatedAssignment => ASSIGNMENT_FIELDS,
            FactType::Competence => &["class", "bodies"],
            FactType::Impediment => &["magistrate", "case_number"],
            FactType::Divergence => &["case_number", "diverging_bodies"],
        }
    }
}

impl fmt::Display for FactType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Constraint operand and field value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Text(String),
    List(Vec<Value>),
    Null,
}

impl Value {
    fn texts<T: ToString>(items: impl IntoIterator<Item = T>) -> Value {
        Value::List(
            items
                .into_iter()
                .map(|t| Value::Text(t.to_string()))
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Value::Null => true,
            Value::Text(s) => s.is_empty(),
            Value::List(l) => l.is_empty(),
            Value::Int(_) => false,
        }
    }
}

impl Fact {
    pub fn fact_type(&self) -> FactType {
        match self {
            Fact::Lawsuit(_) => FactType::Lawsuit,
            Fact::PriorAssignment(_) => FactType::PriorAssignment,
            Fact::RelatedAssignment(_) => FactType::RelatedAssignment,
            Fact::Competence { .. } => FactType::Competence,
            Fact::Impediment { .. } => FactType::Impediment,
            Fact::Divergence { .. } => FactType::Divergence,
        }
    }

    /// Reads a field as a rule-level value. `None` for unknown fields.
    pub fn field(&self, name: &str) -> Option<Value> {
        let text = |s: &dyn ToString| Value::Text(s.to_string());
        Some(match (self, name) {
            (Fact::Lawsuit(l), "case_number") => text(&l.case_number),
            (Fact::Lawsuit(l), "class") => text(&l.procedural_class),
            (Fact::Lawsuit(l), "phase") => Value::Int(l.phase as i64),
            (Fact::Lawsuit(l), "parties") => Value::texts(&l.parties),
            (Fact::Lawsuit(l), "lawyers") => Value::texts(&l.lawyers),
            (Fact::Lawsuit(l), "related_cases") => Value::texts(&l.related_cases),
            (Fact::Lawsuit(l), "embargo") => match &l.embargo_of {
                Some(d) => text(&d.source_case),
                None => Value::Null,
            },
            (Fact::Lawsuit(l), "protocol") => text(&l.protocol),
            (Fact::PriorAssignment(p) | Fact::RelatedAssignment(p), field) => match field {
                "case_number" => text(&p.case_number),
                "phase" => Value::Int(p.phase as i64),
                "body" => text(&p.body),
                "magistrate" => text(&p.magistrate),
                "distribution_id" => text(&p.distribution_id),
                _ => return None,
            },
            (Fact::Competence { class, .. }, "class") => text(class),
            (Fact::Competence { bodies, .. }, "bodies") => Value::texts(bodies),
            (Fact::Impediment { magistrate, .. }, "magistrate") => text(magistrate),
            (Fact::Impediment { case_number, .. }, "case_number") => text(case_number),
            (Fact::Divergence { case_number, .. }, "case_number") => text(case_number),
            (
                Fact::Divergence {
                    diverging_bodies, ..
                },
                "diverging_bodies",
            ) => Value::texts(diverging_bodies),
            _ => return None,
        })
    }
}

/// Insertion-ordered, duplicate-free fact store.
#[derive(Debug, Clone, Default)]
pub struct WorkingMemory {
    facts: Vec<Fact>,
    seen: HashSet<Fact>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Functional assertion: returns the memory with `fact` present once.
    #[must_use]
    pub fn assert_fact(mut self, fact: Fact) -> Self {
        self.insert(fact);
        self
    }

    /// Inserts in place; returns false when the fact was already present.
    pub fn insert(&mut self, fact: Fact) -> bool {
        if self.seen.contains(&fact) {
            return false;
        }
        self.seen.insert(fact.clone());
        self.facts.push(fact);
        true
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Facts in assertion order.
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn of_type(&self, t: FactType) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(move |f| f.fact_type() == t)
    }
}

impl FromIterator<Fact> for WorkingMemory {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut wm = WorkingMemory::new();
        for f in iter {
            wm.insert(f);
        }
        wm
    }
}
