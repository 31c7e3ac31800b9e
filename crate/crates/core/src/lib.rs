//! Auditable lawsuit distribution by a society of message-passing agents.
//!
//! Protocol agents own lawsuits, magistrate agents answer impediment
//! queries, and a distribution agent gathers those perceptions into a
//! working memory, fires one declarative rule and assigns a judicial body
//! and magistrate. Every action and message lands in an append-only audit
//! log keyed by distribution instance, from which any outcome can be
//! replayed.

pub mod agentry;
pub mod auditlog;
pub mod corpus;
pub mod distributor;
pub mod domain;
pub mod rulekit;

pub use agentry::{Lifecycle, Platform, PlatformConfig, PlatformError, Scheduler};
pub use auditlog::{
    AuditError, AuditLog, AuditRecord, Clock, SteppingClock, SystemClock, TraceView,
};
pub use distributor::{DistributionError, DistributionOutcome, Justification};
pub use domain::{BodyId, CaseNumber, Court, Impediment, Lawsuit, MagistrateId, PriorAssignment};
pub use rulekit::{default_rules, parse_rules, RuleSet};
