//! Court domain: lawsuits, magistrates, judicial bodies, impediments and the
//! competence map that routes procedural classes to bodies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("malformed case number {text:?}: {reason}")]
    MalformedCaseNumber { text: String, reason: &'static str },
    #[error("invalid court configuration: {0}")]
    InvalidCourt(String),
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// Magistrate identifier, e.g. `MMCP`. Also the label of the magistrate's agent.
    MagistrateId
);
id_newtype!(
    /// Judicial body identifier, e.g. `T6`.
    BodyId
);
id_newtype!(
    /// Opaque party reference. No personal data is modelled.
    PartyRef
);
id_newtype!(
    /// Opaque lawyer reference.
    LawyerRef
);

/// Unified case number `NNNN-DD.YYYY.S.RR.OOO`.
///
/// Digit groups have variable width; the width seen at parse time is kept so
/// that rendering reproduces the input exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CaseNumber {
    pub sequence: u64,
    pub check_digits: u8,
    pub year: u32,
    pub segment: u8,
    pub region: u32,
    pub origin: u32,
    widths: [u8; 6],
}

impl CaseNumber {
    /// Builds a case number with the conventional widths (7-2-4-1-2-4 is the
    /// national standard; we keep the minimum width that fits each value).
    pub fn new(
        sequence: u64,
        check_digits: u8,
        year: u32,
        segment: u8,
        region: u32,
        origin: u32,
    ) -> Self {
        Self::with_widths(
            sequence,
            check_digits,
            year,
            segment,
            region,
            origin,
            [1, 2, 4, 1, 2, 3],
        )
    }

    /// Builds a case number, padding each group to at least the given width.
    pub fn with_widths(
        sequence: u64,
        check_digits: u8,
        year: u32,
        segment: u8,
        region: u32,
        origin: u32,
        min_widths: [u8; 6],
    ) -> Self {
        assert!(check_digits <= 99, "check digits must be 0..=99");
        let values = [
            sequence,
            check_digits as u64,
            year as u64,
            segment as u64,
            region as u64,
            origin as u64,
        ];
        let mut widths = [0u8; 6];
        for (w, (v, min)) in widths.iter_mut().zip(values.iter().zip(min_widths)) {
            *w = (digit_count(*v) as u8).max(min.max(1));
        }
        Self {
            sequence,
            check_digits,
            year,
            segment,
            region,
            origin,
            widths,
        }
    }
}

fn digit_count(mut v: u64) -> usize {
    let mut n = 1;
    while v >= 10 {
        v /= 10;
        n += 1;
    }
    n
}

/// Parses the textual form of a case number.
pub fn parse_case_number(text: &str) -> Result<CaseNumber, DomainError> {
    let err = |reason| DomainError::MalformedCaseNumber {
        text: text.to_owned(),
        reason,
    };
    if text.is_empty() {
        return Err(err("empty input"));
    }
    let (sequence, rest) = text
        .split_once('-')
        .ok_or_else(|| err("missing '-' after sequence"))?;
    let groups: Vec<&str> = rest.split('.').collect();
    if groups.len() != 5 {
        return Err(err("expected five '.'-separated groups after '-'"));
    }
    let all = [
        sequence, groups[0], groups[1], groups[2], groups[3], groups[4],
    ];
    let mut values = [0u64; 6];
    let mut widths = [0u8; 6];
    for (i, g) in all.iter().enumerate() {
        if g.is_empty() || !g.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("digit group contains non-digits or is empty"));
        }
        if g.len() > 18 {
            return Err(err("digit group too long"));
        }
        values[i] = g.parse().map_err(|_| err("digit group out of range"))?;
        widths[i] = g.len() as u8;
    }
    if values[1] > 99 {
        return Err(err("check digits must be 0..=99"));
    }
    let narrow = |v: u64, max: u64| {
        if v > max {
            Err(err("digit group out of range"))
        } else {
            Ok(v)
        }
    };
    Ok(CaseNumber {
        sequence: values[0],
        check_digits: values[1] as u8,
        year: narrow(values[2], u32::MAX as u64)? as u32,
        segment: narrow(values[3], u8::MAX as u64)? as u8,
        region: narrow(values[4], u32::MAX as u64)? as u32,
        origin: narrow(values[5], u32::MAX as u64)? as u32,
        widths,
    })
}

impl fmt::Display for CaseNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.widths.map(|w| w as usize);
        write!(
            f,
            "{:0w0$}-{:0w1$}.{:0w2$}.{:0w3$}.{:0w4$}.{:0w5$}",
            self.sequence,
            self.check_digits,
            self.year,
            self.segment,
            self.region,
            self.origin,
            w0 = w[0],
            w1 = w[1],
            w2 = w[2],
            w3 = w[3],
            w4 = w[4],
            w5 = w[5],
        )
    }
}

impl FromStr for CaseNumber {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_case_number(s)
    }
}

impl Serialize for CaseNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseNumber {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_case_number(&s).map_err(serde::de::Error::custom)
    }
}

/// Reference to the divergent decisions an embargo challenges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DivergenceRef {
    /// Case whose decisions diverged.
    pub source_case: CaseNumber,
    pub diverging_bodies: Vec<BodyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lawsuit {
    pub case_number: CaseNumber,
    pub procedural_class: String,
    #[serde(default)]
    pub parties: BTreeSet<PartyRef>,
    #[serde(default)]
    pub lawyers: BTreeSet<LawyerRef>,
    #[serde(default)]
    pub related_cases: BTreeSet<CaseNumber>,
    pub phase: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embargo_of: Option<DivergenceRef>,
    /// Label of the protocol agent that owns the lawsuit.
    pub protocol: String,
}

impl Lawsuit {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.phase < 1 {
            return Err(DomainError::InvalidCourt(format!(
                "lawsuit {} has phase 0",
                self.case_number
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Magistrate {
    pub id: MagistrateId,
    pub name: String,
    pub active: bool,
    pub memberships: BTreeSet<BodyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JudicialBody {
    pub id: BodyId,
    pub members: Vec<MagistrateId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpedimentKind {
    Lawyer,
    Case,
    Party,
}

/// What an impediment is tied to. The variant fixes the impediment kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "lowercase")]
pub enum ImpedimentTarget {
    Lawyer(LawyerRef),
    Case(CaseNumber),
    Party(PartyRef),
}

impl ImpedimentTarget {
    pub fn kind(&self) -> ImpedimentKind {
        match self {
            Self::Lawyer(_) => ImpedimentKind::Lawyer,
            Self::Case(_) => ImpedimentKind::Case,
            Self::Party(_) => ImpedimentKind::Party,
        }
    }
}

/// A registered legal bar. Suspicion is only representable through an
/// explicit impediment with a reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Impediment {
    pub magistrate: MagistrateId,
    #[serde(flatten)]
    pub target: ImpedimentTarget,
    pub reason: String,
}

impl Impediment {
    pub fn kind(&self) -> ImpedimentKind {
        self.target.kind()
    }

    /// Whether this single impediment bars its magistrate from the lawsuit.
    pub fn covers(&self, lawsuit: &Lawsuit) -> bool {
        match &self.target {
            ImpedimentTarget::Case(c) => *c == lawsuit.case_number,
            ImpedimentTarget::Party(p) => lawsuit.parties.contains(p),
            ImpedimentTarget::Lawyer(l) => lawsuit.lawyers.contains(l),
        }
    }
}

pub fn impediment_applies<'a>(
    magistrate: &MagistrateId,
    lawsuit: &Lawsuit,
    impediments: impl IntoIterator<Item = &'a Impediment>,
) -> bool {
    impediments
        .into_iter()
        .any(|imp| imp.magistrate == *magistrate && imp.covers(lawsuit))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetenceMap {
    pub classes: BTreeMap<String, Vec<BodyId>>,
    /// Target body for embargo classes.
    #[serde(default)]
    pub divergence_body: BTreeMap<String, BodyId>,
}

impl CompetenceMap {
    pub fn is_embargo_class(&self, class: &str) -> bool {
        self.divergence_body.contains_key(class)
    }
}

/// Bodies competent for `class`, in configuration order. Empty when unmapped.
pub fn competent_bodies(class: &str, cmap: &CompetenceMap) -> Vec<BodyId> {
    cmap.classes.get(class).cloned().unwrap_or_default()
}

/// Assignment of one phase of a case, either historic or produced by a
/// distribution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PriorAssignment {
    pub case_number: CaseNumber,
    pub phase: u32,
    pub body: BodyId,
    pub magistrate: MagistrateId,
    pub distribution_id: String,
}

/// Full court configuration (`court.json`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Court {
    pub magistrates: Vec<Magistrate>,
    pub bodies: Vec<JudicialBody>,
    pub competence: CompetenceMap,
    #[serde(default)]
    pub impediments: Vec<Impediment>,
    /// Protocol agent labels, e.g. `PA18`.
    #[serde(default)]
    pub protocols: Vec<String>,
    #[serde(default)]
    pub prior_assignments: Vec<PriorAssignment>,
}

impl Court {
    pub fn body(&self, id: &BodyId) -> Option<&JudicialBody> {
        self.bodies.iter().find(|b| b.id == *id)
    }

    pub fn magistrate(&self, id: &MagistrateId) -> Option<&Magistrate> {
        self.magistrates.iter().find(|m| m.id == *id)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: String| Err(DomainError::InvalidCourt(msg));
        let mut mags = BTreeMap::new();
        for m in &self.magistrates {
            if mags.insert(&m.id, m).is_some() {
                return bad(format!("duplicate magistrate {}", m.id));
            }
        }
        let mut bodies = BTreeMap::new();
        for b in &self.bodies {
            if bodies.insert(&b.id, b).is_some() {
                return bad(format!("duplicate body {}", b.id));
            }
            if b.members.is_empty() {
                return bad(format!("body {} has no members", b.id));
            }
            let distinct: BTreeSet<_> = b.members.iter().collect();
            if distinct.len() != b.members.len() {
                return bad(format!("body {} lists a member twice", b.id));
            }
            for m in &b.members {
                match mags.get(m) {
                    None => return bad(format!("body {} references unknown magistrate {m}", b.id)),
                    Some(mag) if !mag.memberships.contains(&b.id) => {
                        return bad(format!(
                            "magistrate {m} does not list membership in {}",
                            b.id
                        ))
                    }
                    _ => {}
                }
            }
        }
        for m in &self.magistrates {
            for b in &m.memberships {
                match bodies.get(b) {
                    Some(body) if body.members.contains(&m.id) => {}
                    _ => return bad(format!("magistrate {} claims membership in {b}", m.id)),
                }
            }
        }
        for (class, list) in &self.competence.classes {
            if list.is_empty() {
                return bad(format!("class {class} maps to no bodies"));
            }
            for b in list {
                if !bodies.contains_key(b) {
                    return bad(format!("class {class} references unknown body {b}"));
                }
            }
        }
        for (class, b) in &self.competence.divergence_body {
            if !bodies.contains_key(b) {
                return bad(format!("divergence body {b} for {class} does not exist"));
            }
        }
        for imp in &self.impediments {
            if !mags.contains_key(&imp.magistrate) {
                return bad(format!(
                    "impediment for unknown magistrate {}",
                    imp.magistrate
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.prior_assignments {
            if !seen.insert((&p.case_number, p.phase)) {
                return bad(format!(
                    "duplicate prior assignment {} phase {}",
                    p.case_number, p.phase
                ));
            }
            match bodies.get(&p.body) {
                Some(b) if b.members.contains(&p.magistrate) => {}
                _ => {
                    return bad(format!(
                        "prior assignment {} names {} outside body {}",
                        p.case_number, p.magistrate, p.body
                    ))
                }
            }
        }
        Ok(())
    }

    /// Checks a lawsuit against this court's configuration.
    pub fn validate_lawsuit(&self, lawsuit: &Lawsuit) -> Result<(), DomainError> {
        lawsuit.validate()?;
        if lawsuit.embargo_of.is_some()
            && !self.competence.is_embargo_class(&lawsuit.procedural_class)
        {
            return Err(DomainError::InvalidCourt(format!(
                "lawsuit {} is an embargo but class {} has no divergence body",
                lawsuit.case_number, lawsuit.procedural_class
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lawsuit() -> Lawsuit {
        Lawsuit {
            case_number: parse_case_number("3128-70.2012.5.18.102").unwrap(),
            procedural_class: "AIRR".into(),
            parties: ["P1", "P2"].into_iter().map(PartyRef::from).collect(),
            lawyers: ["L1"].into_iter().map(LawyerRef::from).collect(),
            related_cases: BTreeSet::new(),
            phase: 1,
            embargo_of: None,
            protocol: "PA18".into(),
        }
    }

    fn imp(m: &str, target: ImpedimentTarget) -> Impediment {
        Impediment {
            magistrate: m.into(),
            target,
            reason: "r".into(),
        }
    }

    #[test]
    fn parses_the_reference_case_number() {
        let c = parse_case_number("3128-70.2012.5.18.102").unwrap();
        assert_eq!(
            (
                c.sequence,
                c.check_digits,
                c.year,
                c.segment,
                c.region,
                c.origin
            ),
            (3128, 70, 2012, 5, 18, 102)
        );
        assert_eq!(c.to_string(), "3128-70.2012.5.18.102");
    }

    #[test]
    fn degenerate_zero_case_number() {
        let c = parse_case_number("0-00.0000.0.00.000").unwrap();
        assert_eq!(
            (
                c.sequence,
                c.check_digits,
                c.year,
                c.segment,
                c.region,
                c.origin
            ),
            (0, 0, 0, 0, 0, 0)
        );
        assert_eq!(c.to_string(), "0-00.0000.0.00.000");
    }

    #[test]
    fn rejects_malformed_case_numbers() {
        for bad in [
            "3128.70.2012",
            "",
            "3128-70.2012.5.18",
            "3128-7a.2012.5.18.102",
            "3128-100.2012.5.18.102",
            "-70.2012.5.18.102",
        ] {
            assert!(
                matches!(
                    parse_case_number(bad),
                    Err(DomainError::MalformedCaseNumber { .. })
                ),
                "{bad:?} should fail"
            );
        }
    }

    #[test]
    fn padding_is_preserved() {
        let c = parse_case_number("0003128-07.2012.5.18.0102").unwrap();
        assert_eq!(c.to_string(), "0003128-07.2012.5.18.0102");
        assert_ne!(c, parse_case_number("3128-07.2012.5.18.102").unwrap());
    }

    #[test]
    fn no_impediments_never_apply() {
        assert!(!impediment_applies(&"MMCP".into(), &lawsuit(), &[]));
    }

    #[test]
    fn party_impediment_applies() {
        let imps = [imp("MMCP", ImpedimentTarget::Party("P1".into()))];
        assert!(impediment_applies(&"MMCP".into(), &lawsuit(), &imps));
        assert!(!impediment_applies(&"MKA".into(), &lawsuit(), &imps));
    }

    #[test]
    fn impediment_kinds_match_brute_force() {
        let l = lawsuit();
        let other = parse_case_number("1-00.2000.5.01.001").unwrap();
        let pool = [
            imp("M", ImpedimentTarget::Case(other.clone())),
            imp("M", ImpedimentTarget::Case(l.case_number.clone())),
            imp("M", ImpedimentTarget::Party("P9".into())),
            imp("M", ImpedimentTarget::Party("P2".into())),
            imp("M", ImpedimentTarget::Lawyer("L9".into())),
            imp("M", ImpedimentTarget::Lawyer("L1".into())),
        ];
        // Oracle: a subset applies iff it contains one of the three hitting entries.
        let hits = [false, true, false, true, false, true];
        for mask in 0u32..(1 << pool.len()) {
            let subset: Vec<_> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).collect();
            let expected = subset.iter().any(|&i| hits[i]);
            let imps: Vec<_> = subset.iter().map(|&i| pool[i].clone()).collect();
            assert_eq!(
                impediment_applies(&"M".into(), &l, &imps),
                expected,
                "mask {mask:b}"
            );
        }
        // the case-kind miss alone with disjoint parties/lawyers
        assert!(!impediment_applies(&"M".into(), &l, &[pool[0].clone()]));
    }

    #[test]
    fn competent_bodies_lookup() {
        let mut cmap = CompetenceMap::default();
        cmap.classes.insert(
            "AIRR".into(),
            (1..=8).map(|i| BodyId(format!("T{i}"))).collect(),
        );
        cmap.classes.insert("X".into(), vec!["T3".into()]);
        let airr = competent_bodies("AIRR", &cmap);
        assert_eq!(
            airr.iter().map(BodyId::as_str).collect::<Vec<_>>(),
            ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8"]
        );
        assert!(competent_bodies("RR", &cmap).is_empty());
        assert_eq!(competent_bodies("X", &cmap), vec![BodyId::from("T3")]);
        assert_eq!(competent_bodies("AIRR", &cmap), airr);
    }

    #[test]
    fn impediment_serializes_with_kind_and_target() {
        let i = imp("MMCP", ImpedimentTarget::Party("P1".into()));
        let v = serde_json::to_value(&i).unwrap();
        assert_eq!(v["kind"], "party");
        assert_eq!(v["target"], "P1");
        let back: Impediment = serde_json::from_value(v).unwrap();
        assert_eq!(back, i);
    }

    #[test]
    fn court_validation_catches_inconsistent_membership() {
        let court = Court {
            magistrates: vec![Magistrate {
                id: "M1".into(),
                name: "M1".into(),
                active: true,
                memberships: BTreeSet::new(),
            }],
            bodies: vec![JudicialBody {
                id: "T1".into(),
                members: vec!["M1".into()],
            }],
            ..Default::default()
        };
        assert!(court.validate().is_err());
    }

    prop_compose! {
        fn case_text()(
            seq in 0u64..10_000_000, check in 0u8..100, year in 0u32..10_000,
            seg in 0u8..10, region in 0u32..100, origin in 0u32..10_000,
            pads in proptest::array::uniform6(0usize..3),
        ) -> String {
            format!(
                "{:0a$}-{:0b$}.{:0c$}.{:0d$}.{:0e$}.{:0f$}",
                seq, check, year, seg, region, origin,
                a = pads[0] + 1, b = pads[1] + 1, c = pads[2] + 1,
                d = pads[3] + 1, e = pads[4] + 1, f = pads[5] + 1,
            )
        }
    }

    proptest! {
        #[test]
        fn case_number_round_trip(text in case_text()) {
            let c = parse_case_number(&text).unwrap();
            prop_assert_eq!(c.to_string(), text);
        }

        #[test]
        fn impediment_applies_is_monotone(
            base in proptest::collection::vec(0usize..6, 0..4),
            extra in 0usize..6,
        ) {
            let l = lawsuit();
            let pool = [
                imp("M", ImpedimentTarget::Party("P1".into())),
                imp("M", ImpedimentTarget::Party("P7".into())),
                imp("M", ImpedimentTarget::Lawyer("L1".into())),
                imp("M", ImpedimentTarget::Lawyer("L7".into())),
                imp("M", ImpedimentTarget::Case(l.case_number.clone())),
                imp("N", ImpedimentTarget::Party("P1".into())),
            ];
            let mut set: Vec<_> = base.iter().map(|&i| pool[i].clone()).collect();
            let before = impediment_applies(&"M".into(), &l, &set);
            set.push(pool[extra].clone());
            let after = impediment_applies(&"M".into(), &l, &set);
            prop_assert!(!before || after);
        }
    }
}
