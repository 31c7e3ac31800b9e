//! Agent runtime: white and yellow pages, mailboxes, lifecycle control,
//! performative-typed messages and the protocol/magistrate behaviors.
//! Every send and every consumption is mirrored into the audit log.

mod behavior;
mod message;
mod platform;
mod registry;

use thiserror::Error;

pub(crate) use behavior::consumed;
pub use behavior::{Behavior, Effect, LawsuitStatus, MagistrateAgent, ProtocolAgent};
pub use message::{
    AgentId, AgentKind, Content, ContentType, DistributionNotice, ImpedimentReply, Message,
    Performative,
};
pub use platform::{
    AgentView, Platform, PlatformConfig, PlatformError, Progress, RunReport, Scheduler, Throughput,
};
pub use registry::{AgentEntry, Lifecycle, Registry};

pub const LAWSUIT_SERVICE: &str = "lawsuit-source";
pub const DISTRIBUTION_SERVICE: &str = "distribution";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("agent {0} is already registered")]
    DuplicateAgent(String),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("agent {0} is not active")]
    AgentUnavailable(String),
    #[error("agent {0} is terminated")]
    Terminated(String),
    #[error("performative {performative:?} cannot carry {content_type:?}")]
    IncompatiblePerformative {
        performative: Performative,
        content_type: ContentType,
    },
    #[error("agent {0} is not a magistrate agent")]
    NotAMagistrate(String),
}
