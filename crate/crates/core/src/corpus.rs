//! Synthetic corpora calibrated to a target rule mix, plus load and export
//! of `corpus.jsonl` and `court.json`.
//!
//! Every record carries the rule its planted metadata must trigger. Rule
//! selection is deterministic given the metadata, so a full run reproduces
//! the planted counts exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    BodyId, CaseNumber, CompetenceMap, Court, DivergenceRef, DomainError, Impediment,
    ImpedimentTarget, JudicialBody, Lawsuit, LawyerRef, Magistrate, MagistrateId, PartyRef,
    PriorAssignment,
};

/// Rule 1/2/3 shares of a reference year of distributions. Rule 4 takes the rest.
pub const REFERENCE_MIX: [f64; 3] = [0.0015, 0.0504, 0.0001];

pub const ORDINARY_CLASSES: [&str; 3] = ["AIRR", "RR", "AG-AIRR"];
pub const EMBARGO_CLASS: &str = "E-RR";
pub const DIVERGENCE_BODY: &str = "SDI1";

const MAGISTRATE_IDS: [&str; 27] = [
    "MMCP", "MJOD", "MLPS", "MRAT", "MDMC", "MALB", "MFEP", "MHCS", "MDMA", "MGMB", "MIGS", "MKAC",
    "MCB", "MEMR", "MLVC", "MBP", "MAAB", "MWOF", "MKA", "MACV", "MCMR", "MVMF", "MDAS", "MMAE",
    "MJRP", "MAMC", "MPFL",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("record {case}: {message}")]
    InconsistentRecord { case: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Court(#[from] DomainError),
}

fn io(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_lawsuits: usize,
    /// Fractions of rules 1, 2 and 3.
    pub rule_mix: [f64; 3],
    pub n_magistrates: usize,
    /// Sizes of the ordinary bodies `T1..`; they must add up to `n_magistrates`.
    pub bodies: Vec<usize>,
    /// Probability that a given (magistrate, party) pair is impeded.
    pub impediment_rate: f64,
    pub classes: Vec<String>,
    pub n_protocols: usize,
    pub party_pool: usize,
    pub lawyer_pool: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_lawsuits: 10_000,
            rule_mix: REFERENCE_MIX,
            n_magistrates: 27,
            bodies: vec![4, 4, 4, 3, 3, 3, 3, 3],
            impediment_rate: 0.05,
            classes: ORDINARY_CLASSES.iter().map(|c| c.to_string()).collect(),
            n_protocols: 25,
            party_pool: 1000,
            lawyer_pool: 300,
            seed: 7,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.rule_mix.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("rule fractions must lie in [0, 1]".into());
        }
        if self.rule_mix.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("rule fractions add up to more than 1".into());
        }
        if self.bodies.is_empty() || self.bodies.contains(&0) {
            return bad("every body needs at least one member".into());
        }
        if self.bodies.iter().sum::<usize>() != self.n_magistrates {
            return bad(format!(
                "body sizes add up to {}, not {} magistrates",
                self.bodies.iter().sum::<usize>(),
                self.n_magistrates
            ));
        }
        if !(0.0..=1.0).contains(&self.impediment_rate) {
            return bad("impediment rate must lie in [0, 1]".into());
        }
        if self.classes.is_empty() {
            return bad("at least one ordinary class is required".into());
        }
        if self.classes.iter().any(|c| c == EMBARGO_CLASS) {
            return bad(format!("{EMBARGO_CLASS} is reserved for embargoes"));
        }
        if self.n_protocols == 0 || self.party_pool < 2 || self.lawyer_pool == 0 {
            return bad("protocol, party and lawyer pools must be non-empty".into());
        }
        Ok(())
    }

    /// Planted count per rule: `round(n * fraction)` for rules 1 to 3, the
    /// remainder for rule 4.
    pub fn planted_counts(&self) -> Result<[usize; 4], CorpusError> {
        let n = self.n_lawsuits;
        let c: Vec<usize> = self
            .rule_mix
            .iter()
            .map(|f| (n as f64 * f).round() as usize)
            .collect();
        let planted: usize = c.iter().sum();
        if planted > n {
            return Err(CorpusError::InvalidConfig(format!(
                "rounded rule counts {planted} exceed {n} lawsuits"
            )));
        }
        if n > 0 && c[0] == n {
            return Err(CorpusError::InvalidConfig(
                "dependency records need an earlier record to depend on".into(),
            ));
        }
        Ok([c[0], c[1], c[2], n - planted])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(flatten)]
    pub lawsuit: Lawsuit,
    pub ground_truth_rule: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub court: Court,
    pub records: Vec<CorpusRecord>,
}

fn magistrate_id(i: usize) -> MagistrateId {
    match MAGISTRATE_IDS.get(i) {
        Some(id) => (*id).into(),
        None => MagistrateId::new(format!("M{i:03}")),
    }
}

/// Court with `T1..Tk` bodies of the given sizes over distinct magistrates,
/// a divergence body made of the first member of every `T` body, and
/// `n_protocols` protocol agents.
pub fn build_court(body_sizes: &[usize], classes: &[String], n_protocols: usize) -> Court {
    let mut magistrates: Vec<Magistrate> = Vec::new();
    let mut bodies = Vec::new();
    for (b, &size) in body_sizes.iter().enumerate() {
        let body = BodyId::new(format!("T{}", b + 1));
        let mut members = Vec::new();
        for _ in 0..size {
            let id = magistrate_id(magistrates.len());
            magistrates.push(Magistrate {
                id: id.clone(),
                name: format!("Magistrate {id}"),
                active: true,
                memberships: [body.clone()].into_iter().collect(),
            });
            members.push(id);
        }
        bodies.push(JudicialBody { id: body, members });
    }
    let divergence = BodyId::from(DIVERGENCE_BODY);
    let heads: Vec<MagistrateId> = bodies.iter().map(|b| b.members[0].clone()).collect();
    for m in magistrates.iter_mut().filter(|m| heads.contains(&m.id)) {
        m.memberships.insert(divergence.clone());
    }
    let turmas: Vec<BodyId> = bodies.iter().map(|b| b.id.clone()).collect();
    bodies.push(JudicialBody {
        id: divergence.clone(),
        members: heads,
    });
    let mut competence = CompetenceMap::default();
    for c in classes {
        competence.classes.insert(c.clone(), turmas.clone());
    }
    competence
        .classes
        .insert(EMBARGO_CLASS.into(), vec![divergence.clone()]);
    competence
        .divergence_body
        .insert(EMBARGO_CLASS.into(), divergence);
    Court {
        magistrates,
        bodies,
        competence,
        impediments: Vec::new(),
        protocols: (0..n_protocols).map(|i| format!("PA{i:02}")).collect(),
        prior_assignments: Vec::new(),
    }
}

/// The reference court: 27 magistrates in eight bodies, 25 protocols.
pub fn default_court() -> Court {
    let cfg = CorpusConfig::default();
    build_court(&cfg.bodies, &cfg.classes, cfg.n_protocols)
}

struct Generator<'a> {
    cfg: &'a CorpusConfig,
    rng: ChaCha8Rng,
    court: Court,
    parties: Vec<PartyRef>,
    lawyers: Vec<LawyerRef>,
    /// Impeded magistrates per party.
    impeded_by_party: BTreeMap<PartyRef, BTreeSet<MagistrateId>>,
}

impl Generator<'_> {
    fn case_number(&mut self, sequence: u64, region: u32) -> CaseNumber {
        let check = self.rng.random_range(0..100u8);
        let year = self.rng.random_range(2005..=2016u32);
        let origin = self.rng.random_range(1..1000u32);
        CaseNumber::with_widths(sequence, check, year, 5, region, origin, [4, 2, 4, 1, 2, 3])
    }

    fn pick_parties(&mut self) -> BTreeSet<PartyRef> {
        let k = self.rng.random_range(2..=3usize).min(self.parties.len());
        self.parties
            .choose_multiple(&mut self.rng, k)
            .cloned()
            .collect()
    }

    fn pick_lawyers(&mut self) -> BTreeSet<LawyerRef> {
        let k = self.rng.random_range(1..=2usize).min(self.lawyers.len());
        self.lawyers
            .choose_multiple(&mut self.rng, k)
            .cloned()
            .collect()
    }

    fn impeded(&self, parties: &BTreeSet<PartyRef>) -> BTreeSet<MagistrateId> {
        parties
            .iter()
            .filter_map(|p| self.impeded_by_party.get(p))
            .flatten()
            .cloned()
            .collect()
    }

    fn ordinary_class(&mut self) -> String {
        self.cfg
            .classes
            .choose(&mut self.rng)
            .expect("classes validated")
            .clone()
    }

    fn turma(&mut self) -> BodyId {
        let n = self.cfg.bodies.len();
        BodyId::new(format!("T{}", self.rng.random_range(1..=n)))
    }

    fn impediments(&mut self) {
        for m in self.court.magistrates.clone() {
            for p in self.parties.clone() {
                if self.rng.random_bool(self.cfg.impediment_rate) {
                    self.impeded_by_party
                        .entry(p.clone())
                        .or_default()
                        .insert(m.id.clone());
                    self.court.impediments.push(Impediment {
                        magistrate: m.id.clone(),
                        target: ImpedimentTarget::Party(p),
                        reason: "magistrate is related to a party".into(),
                    });
                }
            }
        }
    }
}

/// Generates a court and `n_lawsuits` records with planted rule labels.
pub fn generate(cfg: &CorpusConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let counts = cfg.planted_counts()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        court: build_court(&cfg.bodies, &cfg.classes, cfg.n_protocols),
        parties: (0..cfg.party_pool)
            .map(|i| PartyRef::new(format!("P{i:05}")))
            .collect(),
        lawyers: (0..cfg.lawyer_pool)
            .map(|i| LawyerRef::new(format!("L{i:04}")))
            .collect(),
        impeded_by_party: BTreeMap::new(),
    };
    g.impediments();

    let mut labels: Vec<u8> = counts
        .iter()
        .enumerate()
        .flat_map(|(r, &c)| std::iter::repeat_n(r as u8 + 1, c))
        .collect();
    labels.shuffle(&mut g.rng);
    if labels.first() == Some(&1) {
        let j = labels
            .iter()
            .position(|&r| r != 1)
            .expect("not all dependency records");
        labels.swap(0, j);
    }

    let mut records: Vec<CorpusRecord> = Vec::with_capacity(cfg.n_lawsuits);
    for (i, &rule) in labels.iter().enumerate() {
        let p = g.rng.random_range(0..cfg.n_protocols);
        let protocol = format!("PA{p:02}");
        let case_number = g.case_number(i as u64 + 1, p as u32);
        let mut lawsuit = Lawsuit {
            case_number,
            procedural_class: String::new(),
            parties: BTreeSet::new(),
            lawyers: BTreeSet::new(),
            related_cases: BTreeSet::new(),
            phase: 1,
            embargo_of: None,
            protocol,
        };
        match rule {
            1 => {
                let target = &records[g.rng.random_range(0..i)].lawsuit;
                lawsuit.related_cases.insert(target.case_number.clone());
                // same parties and lawyers keep the target's magistrate unimpeded
                lawsuit.parties = target.parties.clone();
                lawsuit.lawyers = target.lawyers.clone();
                lawsuit.procedural_class = g.ordinary_class();
            }
            2 => {
                lawsuit.procedural_class = g.ordinary_class();
                lawsuit.phase = g.rng.random_range(2..=3);
                lawsuit.lawyers = g.pick_lawyers();
                let (body, magistrate) = loop {
                    lawsuit.parties = g.pick_parties();
                    let impeded = g.impeded(&lawsuit.parties);
                    let body = g.turma();
                    let free: Vec<MagistrateId> = g
                        .court
                        .body(&body)
                        .expect("turma exists")
                        .members
                        .iter()
                        .filter(|m| !impeded.contains(*m))
                        .cloned()
                        .collect();
                    if let Some(m) = free.choose(&mut g.rng) {
                        break (body, m.clone());
                    }
                };
                g.court.prior_assignments.push(PriorAssignment {
                    case_number: lawsuit.case_number.clone(),
                    phase: lawsuit.phase - 1,
                    body,
                    magistrate,
                    distribution_id: format!("HIST-{:06}", g.court.prior_assignments.len() + 1),
                });
            }
            3 => {
                lawsuit.procedural_class = EMBARGO_CLASS.into();
                lawsuit.phase = 2;
                lawsuit.parties = g.pick_parties();
                lawsuit.lawyers = g.pick_lawyers();
                let a = g.turma();
                let mut b = g.turma();
                while b == a && cfg.bodies.len() > 1 {
                    b = g.turma();
                }
                let mut diverging = vec![a, b];
                diverging.sort();
                diverging.dedup();
                lawsuit.embargo_of = Some(DivergenceRef {
                    source_case: lawsuit.case_number.clone(),
                    diverging_bodies: diverging,
                });
            }
            _ => {
                lawsuit.procedural_class = g.ordinary_class();
                lawsuit.parties = g.pick_parties();
                lawsuit.lawyers = g.pick_lawyers();
            }
        }
        records.push(CorpusRecord {
            lawsuit,
            ground_truth_rule: rule,
        });
    }
    let corpus = Corpus {
        court: g.court,
        records,
    };
    validate_corpus(&corpus)?;
    Ok(corpus)
}

/// Checks every record's metadata against its planted rule and the court.
pub fn validate_corpus(corpus: &Corpus) -> Result<(), CorpusError> {
    corpus.court.validate()?;
    let priors: BTreeMap<&CaseNumber, &PriorAssignment> = corpus
        .court
        .prior_assignments
        .iter()
        .map(|p| (&p.case_number, p))
        .collect();
    let mut seen: BTreeSet<&CaseNumber> = BTreeSet::new();
    for r in &corpus.records {
        let l = &r.lawsuit;
        let bad = |m: &str| {
            Err(CorpusError::InconsistentRecord {
                case: l.case_number.to_string(),
                message: m.to_owned(),
            })
        };
        corpus.court.validate_lawsuit(l)?;
        if !corpus.court.protocols.contains(&l.protocol) {
            return bad("unknown protocol agent");
        }
        let has_prior = priors
            .get(&l.case_number)
            .is_some_and(|p| p.phase < l.phase);
        let consistent = match r.ground_truth_rule {
            1 => {
                !l.related_cases.is_empty()
                    && l.related_cases.iter().all(|c| seen.contains(c))
                    && l.phase == 1
            }
            2 => l.phase >= 2 && has_prior && l.related_cases.is_empty(),
            3 => l.embargo_of.is_some() && !has_prior && l.related_cases.is_empty(),
            4 => l.related_cases.is_empty() && l.embargo_of.is_none() && l.phase == 1,
            _ => false,
        };
        if !consistent {
            return bad(&format!(
                "metadata does not plant rule {}",
                r.ground_truth_rule
            ));
        }
        if !seen.insert(&l.case_number) {
            return bad("duplicate case number");
        }
    }
    Ok(())
}

pub fn export_corpus(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| io(path, e))?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(path, e))?;
        w.write_all(b"\n").map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Parses corpus lines; blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, CorpusError> {
    let path = path.as_ref();
    parse_corpus(BufReader::new(File::open(path).map_err(|e| io(path, e))?))
}

pub fn export_court(court: &Court, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(court).map_err(|e| io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io(path, e))
}

pub fn load_court(path: impl AsRef<Path>) -> Result<Court, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let court: Court = serde_json::from_str(&text).map_err(|e| CorpusError::MalformedRecord {
        line: e.line(),
        message: e.to_string(),
    })?;
    court.validate()?;
    Ok(court)
}

/// Writes `court.json` and `corpus.jsonl` into `dir`.
pub fn export(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    export_court(&corpus.court, dir.join("court.json"))?;
    export_corpus(&corpus.records, dir.join("corpus.jsonl"))
}

pub fn load(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    Ok(Corpus {
        court: load_court(dir.join("court.json"))?,
        records: load_corpus(dir.join("corpus.jsonl"))?,
    })
}
