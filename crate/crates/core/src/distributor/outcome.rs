use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::draw::{draw, DrawPick, DrawRng};
use crate::domain::{BodyId, CaseNumber, MagistrateId, PriorAssignment};
use crate::rulekit::Directive;

/// Which directive produced an outcome. Determines the rule number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectiveKind {
    AssignSameAs,
    PreventionAssign,
    EmbargoAssign,
    OrdinaryDraw,
}

impl DirectiveKind {
    pub fn rule_number(self) -> u8 {
        match self {
            DirectiveKind::AssignSameAs => 1,
            DirectiveKind::PreventionAssign => 2,
            DirectiveKind::EmbargoAssign => 3,
            DirectiveKind::OrdinaryDraw => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DirectiveKind::AssignSameAs => "AssignSameAs",
            DirectiveKind::PreventionAssign => "PreventionAssign",
            DirectiveKind::EmbargoAssign => "EmbargoAssign",
            DirectiveKind::OrdinaryDraw => "OrdinaryDraw",
        }
    }
}

impl From<&Directive> for DirectiveKind {
    fn from(d: &Directive) -> Self {
        match d {
            Directive::AssignSameAs(_) => DirectiveKind::AssignSameAs,
            Directive::PreventionAssign(_) => DirectiveKind::PreventionAssign,
            Directive::EmbargoAssign(_) => DirectiveKind::EmbargoAssign,
            Directive::OrdinaryDraw => DirectiveKind::OrdinaryDraw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpededMagistrate {
    pub magistrate: MagistrateId,
    pub reasons: Vec<String>,
}

/// Everything needed to explain and re-execute a distribution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Justification {
    /// Bodies competent for the lawsuit's class, in configuration order.
    pub competent_bodies: Vec<BodyId>,
    /// Composition of each considered body as reported by its magistrates.
    pub composition: BTreeMap<BodyId, Vec<MagistrateId>>,
    /// First-stage candidate list: bodies left with an eligible member, sorted.
    pub eligible_bodies: Vec<BodyId>,
    /// Second-stage candidate lists, sorted.
    pub eligible_members: BTreeMap<BodyId, Vec<MagistrateId>>,
    pub impeded: Vec<ImpededMagistrate>,
    /// Magistrates excluded by earlier redistributions of the case.
    #[serde(default)]
    pub excluded: Vec<MagistrateId>,
    /// Magistrates that did not answer the impediment query in time.
    #[serde(default)]
    pub timed_out: Vec<MagistrateId>,
    pub draw_seed: u64,
    pub draw_picks: Vec<DrawPick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw_method: Option<String>,
    /// Prior or related assignment the outcome follows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PriorAssignment>,
    /// Set when the source magistrate could not take the case and another
    /// member of the same body was drawn.
    #[serde(default)]
    pub prevention_override: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redistribution_reason: Option<String>,
}

pub const TWO_STAGE_NOTE: &str =
    "two-stage draw: uniform over eligible bodies, then uniform over the drawn body's \
     eligible members; per-magistrate probability depends on body sizes";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt justification: {0}")]
pub struct CorruptJustification(pub String);

impl Justification {
    /// Re-executes the recorded choices over the recorded candidate lists.
    pub fn replay(
        &self,
        directive: DirectiveKind,
    ) -> Result<(BodyId, MagistrateId), CorruptJustification> {
        let corrupt = |m: String| Err(CorruptJustification(m));
        if self.draw_picks.is_empty() {
            return match (&self.source, directive) {
                (Some(src), DirectiveKind::AssignSameAs | DirectiveKind::PreventionAssign)
                    if !self.prevention_override =>
                {
                    Ok((src.body.clone(), src.magistrate.clone()))
                }
                _ => corrupt(format!("{} outcome without draw picks", directive.name())),
            };
        }
        if self.draw_picks.len() != 2 {
            return corrupt(format!(
                "expected 2 draw picks, found {}",
                self.draw_picks.len()
            ));
        }
        let stage =
            |pick: &DrawPick, len: usize, what: &str| -> Result<usize, CorruptJustification> {
                if pick.candidates != len {
                    return Err(CorruptJustification(format!(
                        "{what}: pick over {} candidates but {len} recorded",
                        pick.candidates
                    )));
                }
                if pick.index >= len {
                    return Err(CorruptJustification(format!(
                        "{what}: index {} out of range {len}",
                        pick.index
                    )));
                }
                Ok(pick.index)
            };
        let bi = stage(
            &self.draw_picks[0],
            self.eligible_bodies.len(),
            "body stage",
        )?;
        let body = &self.eligible_bodies[bi];
        let Some(members) = self.eligible_members.get(body) else {
            return corrupt(format!("no eligible member list for {body}"));
        };
        let mi = stage(&self.draw_picks[1], members.len(), "magistrate stage")?;
        // the recorded picks must be the ones the recorded seed produces
        let candidates: Vec<(BodyId, Vec<MagistrateId>)> = self
            .eligible_bodies
            .iter()
            .map(|b| {
                (
                    b.clone(),
                    self.eligible_members.get(b).cloned().unwrap_or_default(),
                )
            })
            .collect();
        match draw(&candidates, &mut DrawRng::new(self.draw_seed)) {
            Ok(redrawn) if redrawn.picks == self.draw_picks => {
                Ok((body.clone(), members[mi].clone()))
            }
            _ => corrupt(format!(
                "picks do not follow from draw seed {}",
                self.draw_seed
            )),
        }
    }
}

/// Result of one distribution instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionOutcome {
    pub distribution_id: String,
    pub case_number: CaseNumber,
    pub phase: u32,
    pub protocol: String,
    pub fired_rule: String,
    pub directive: DirectiveKind,
    pub rule_number: u8,
    pub body: BodyId,
    pub magistrate: MagistrateId,
    pub justification: Justification,
    #[serde(with = "crate::auditlog::ts_millis")]
    pub timestamp: DateTime<Utc>,
}

impl DistributionOutcome {
    pub fn as_assignment(&self) -> PriorAssignment {
        PriorAssignment {
            case_number: self.case_number.clone(),
            phase: self.phase,
            body: self.body.clone(),
            magistrate: self.magistrate.clone(),
            distribution_id: self.distribution_id.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drawn() -> Justification {
        let candidates: Vec<(BodyId, Vec<MagistrateId>)> = vec![
            ("T1".into(), vec!["A".into(), "B".into()]),
            ("T2".into(), vec!["C".into()]),
        ];
        let result = draw(&candidates, &mut DrawRng::new(42)).unwrap();
        Justification {
            eligible_bodies: result.bodies,
            eligible_members: candidates.into_iter().collect(),
            draw_seed: 42,
            draw_picks: result.picks,
            ..Default::default()
        }
    }

    #[test]
    fn replay_follows_seeded_picks() {
        let j = drawn();
        let (body, magistrate) = j.replay(DirectiveKind::OrdinaryDraw).unwrap();
        assert_eq!(j.eligible_bodies[j.draw_picks[0].index], body);
        assert_eq!(j.eligible_members[&body][j.draw_picks[1].index], magistrate);
    }

    #[test]
    fn picks_that_the_seed_did_not_produce_are_corrupt() {
        let mut j = drawn();
        let other = if j.draw_picks[0].index == 0 {
            (1, 1)
        } else {
            (0, 2)
        };
        j.draw_picks = vec![
            DrawPick {
                candidates: 2,
                index: other.0,
            },
            DrawPick {
                candidates: other.1,
                index: 0,
            },
        ];
        assert!(j.replay(DirectiveKind::OrdinaryDraw).is_err());
    }

    #[test]
    fn out_of_range_index_is_corrupt() {
        let mut j = drawn();
        j.draw_picks[1].index = 2;
        assert!(j.replay(DirectiveKind::OrdinaryDraw).is_err());
        let mut j = drawn();
        j.draw_picks[0] = DrawPick {
            candidates: 3,
            index: 2,
        };
        assert!(j.replay(DirectiveKind::OrdinaryDraw).is_err());
    }

    #[test]
    fn sourced_outcomes_replay_without_picks() {
        let src = PriorAssignment {
            case_number: "1-00.2000.5.01.001".parse().unwrap(),
            phase: 1,
            body: "T3".into(),
            magistrate: "MX".into(),
            distribution_id: "H-1".into(),
        };
        let j = Justification {
            source: Some(src),
            ..Default::default()
        };
        assert_eq!(
            j.replay(DirectiveKind::PreventionAssign).unwrap(),
            ("T3".into(), "MX".into())
        );
        assert!(j.replay(DirectiveKind::OrdinaryDraw).is_err());
    }
}
