//! Forward-chaining matcher. Each rule is matched by a nested scan of the
//! working memory in assertion order; the resulting activations are ordered
//! by salience, then rule declaration order, then the assertion indices of
//! the bound facts. Firing returns the head of that agenda and never touches
//! the memory.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use super::fact::{Fact, Value, WorkingMemory};
use super::syntax::{Constraint, Directive, Op, Operand, Path, Rule, RuleSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("no rule matched the working memory")]
    NoRuleMatched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activation {
    pub rule: String,
    pub rule_index: usize,
    pub salience: i64,
    /// Facts bound by labelled patterns.
    pub bindings: BTreeMap<String, Fact>,
    /// Assertion indices of the facts bound by positive patterns, in pattern order.
    pub match_key: Vec<usize>,
}

/// Agenda order: salience desc, declaration order asc, bound assertion order asc.
pub fn agenda_order(a: &Activation, b: &Activation) -> Ordering {
    b.salience
        .cmp(&a.salience)
        .then(a.rule_index.cmp(&b.rule_index))
        .then_with(|| a.match_key.cmp(&b.match_key))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub rule: String,
    pub directive: Directive,
    pub bindings: BTreeMap<String, Fact>,
}

struct RuleMatcher<'a> {
    rule: &'a Rule,
    facts: &'a [Fact],
    /// Fact index bound by each pattern; `None` for negated or not yet bound.
    env: Vec<Option<usize>>,
    found: Vec<Vec<usize>>,
}

impl RuleMatcher<'_> {
    fn resolve(&self, path: &Path, pattern: usize, candidate: &Fact) -> Option<Value> {
        match &path.root {
            None => candidate.field(&path.field),
            Some(root) => {
                let idx = self.rule.resolve_root(root, pattern)?;
                self.facts[self.env[idx]?].field(&path.field)
            }
        }
    }

    fn holds(&self, c: &Constraint, pattern: usize, candidate: &Fact) -> bool {
        let Some(left) = self.resolve(&c.left, pattern, candidate) else {
            return false;
        };
        let right = match &c.right {
            None => None,
            Some(Operand::Literal(v)) => Some(v.clone()),
            Some(Operand::Path(p)) => match self.resolve(p, pattern, candidate) {
                Some(v) => Some(v),
                None => return false,
            },
        };
        evaluate(c.op, &left, right.as_ref())
    }

    fn satisfies(&self, pattern: usize, candidate: &Fact) -> bool {
        let p = &self.rule.patterns[pattern];
        candidate.fact_type() == p.fact_type
            && p.constraints
                .iter()
                .all(|c| self.holds(c, pattern, candidate))
    }

    fn search(&mut self, pattern: usize) {
        if pattern == self.rule.patterns.len() {
            self.found
                .push(self.env.iter().flatten().copied().collect());
            return;
        }
        if self.rule.patterns[pattern].negated {
            if !self.facts.iter().any(|f| self.satisfies(pattern, f)) {
                self.env[pattern] = None;
                self.search(pattern + 1);
            }
            return;
        }
        for (i, f) in self.facts.iter().enumerate() {
            if self.satisfies(pattern, f) {
                self.env[pattern] = Some(i);
                self.search(pattern + 1);
            }
        }
        self.env[pattern] = None;
    }
}

/// Applies one constraint operator.
pub fn evaluate(op: Op, left: &Value, right: Option<&Value>) -> bool {
    match (op, right) {
        (Op::NotEmpty, _) => !left.is_empty(),
        (Op::Eq, Some(r)) => left == r,
        (Op::Ne, Some(r)) => left != r,
        (Op::In, Some(Value::List(items))) => items.contains(left),
        _ => false,
    }
}

/// All activations of `rules` over `wm`, in agenda order.
pub fn match_rules(wm: &WorkingMemory, rules: &RuleSet) -> Vec<Activation> {
    let facts = wm.facts();
    let mut out = Vec::new();
    for (rule_index, rule) in rules.rules.iter().enumerate() {
        let mut m = RuleMatcher {
            rule,
            facts,
            env: vec![None; rule.patterns.len()],
            found: Vec::new(),
        };
        m.search(0);
        let positive: Vec<_> = rule.patterns.iter().filter(|p| !p.negated).collect();
        for key in m.found {
            let bindings = positive
                .iter()
                .zip(&key)
                .filter_map(|(p, &i)| p.label.clone().map(|l| (l, facts[i].clone())))
                .collect();
            out.push(Activation {
                rule: rule.name.clone(),
                rule_index,
                salience: rule.salience,
                bindings,
                match_key: key,
            });
        }
    }
    out.sort_by(agenda_order);
    out
}

/// Selects the single directive for this memory.
pub fn fire(wm: &WorkingMemory, rules: &RuleSet) -> Result<Firing, EngineError> {
    let head = match_rules(wm, rules)
        .into_iter()
        .next()
        .ok_or(EngineError::NoRuleMatched)?;
    let rule = &rules.rules[head.rule_index];
    Ok(Firing {
        rule: head.rule,
        directive: rule.directive.clone(),
        bindings: head.bindings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_case_number, DivergenceRef, Lawsuit, PriorAssignment};
    use crate::rulekit::{default_rules, parse_rules};
    use proptest::prelude::*;

    fn lawsuit(related: &[&str], phase: u32, embargo: bool) -> Lawsuit {
        let case_number = parse_case_number("3128-70.2012.5.18.102").unwrap();
        Lawsuit {
            case_number: case_number.clone(),
            procedural_class: "AIRR".into(),
            parties: ["P1"].into_iter().map(Into::into).collect(),
            lawyers: Default::default(),
            related_cases: related
                .iter()
                .map(|r| parse_case_number(r).unwrap())
                .collect(),
            phase,
            embargo_of: embargo.then(|| DivergenceRef {
                source_case: case_number,
                diverging_bodies: vec!["T1".into(), "T2".into()],
            }),
            protocol: "PA18".into(),
        }
    }

    fn assignment(case: &str, phase: u32) -> PriorAssignment {
        PriorAssignment {
            case_number: parse_case_number(case).unwrap(),
            phase,
            body: "T3".into(),
            magistrate: "MX".into(),
            distribution_id: "DA01-000001".into(),
        }
    }

    #[test]
    fn lone_lawsuit_activates_only_ordinary() {
        let wm = WorkingMemory::new().assert_fact(Fact::Lawsuit(lawsuit(&[], 1, false)));
        let acts = match_rules(&wm, &default_rules());
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].rule, "ordinary");
    }

    #[test]
    fn empty_memory_has_no_activations() {
        assert!(match_rules(&WorkingMemory::new(), &default_rules()).is_empty());
        assert_eq!(
            fire(&WorkingMemory::new(), &default_rules()),
            Err(EngineError::NoRuleMatched)
        );
    }

    #[test]
    fn reference_scenario_fires_ordinary_with_no_bindings() {
        let l = lawsuit(&[], 1, false);
        let wm: WorkingMemory = [
            Fact::Lawsuit(l.clone()),
            Fact::Competence {
                class: "AIRR".into(),
                bodies: (1..=8).map(|i| format!("T{i}").as_str().into()).collect(),
            },
            Fact::Impediment {
                magistrate: "MMCP".into(),
                case_number: l.case_number.clone(),
            },
        ]
        .into_iter()
        .collect();
        let f = fire(&wm, &default_rules()).unwrap();
        assert_eq!(f.rule, "ordinary");
        assert_eq!(f.directive, Directive::OrdinaryDraw);
        assert!(f.bindings.is_empty());
    }

    #[test]
    fn dependency_outranks_ordinary() {
        let rel = "100-01.2011.5.02.001";
        let wm = WorkingMemory::new()
            .assert_fact(Fact::Lawsuit(lawsuit(&[rel], 1, false)))
            .assert_fact(Fact::RelatedAssignment(assignment(rel, 1)));
        let acts = match_rules(&wm, &default_rules());
        let names: Vec<_> = acts.iter().map(|a| a.rule.as_str()).collect();
        assert_eq!(names, ["dependency", "ordinary"]);
        let f = fire(&wm, &default_rules()).unwrap();
        assert_eq!(f.directive, Directive::AssignSameAs("rel".into()));
        assert_eq!(
            f.bindings["rel"],
            Fact::RelatedAssignment(assignment(rel, 1))
        );
    }

    #[test]
    fn prevention_needs_a_later_phase() {
        let case = "3128-70.2012.5.18.102";
        let rules = default_rules();
        let wm = WorkingMemory::new()
            .assert_fact(Fact::Lawsuit(lawsuit(&[], 2, false)))
            .assert_fact(Fact::PriorAssignment(assignment(case, 1)));
        assert_eq!(fire(&wm, &rules).unwrap().rule, "prevention");
        let wm = WorkingMemory::new()
            .assert_fact(Fact::Lawsuit(lawsuit(&[], 1, false)))
            .assert_fact(Fact::PriorAssignment(assignment(case, 1)));
        assert_eq!(fire(&wm, &rules).unwrap().rule, "ordinary");
    }

    #[test]
    fn embargo_needs_the_divergence_fact() {
        let l = lawsuit(&[], 1, true);
        let rules = default_rules();
        let wm = WorkingMemory::new().assert_fact(Fact::Lawsuit(l.clone()));
        assert_eq!(fire(&wm, &rules).unwrap().rule, "ordinary");
        let wm = wm.assert_fact(Fact::Divergence {
            case_number: l.case_number.clone(),
            diverging_bodies: vec!["T1".into(), "T2".into()],
        });
        assert_eq!(fire(&wm, &rules).unwrap().rule, "embargo");
    }

    #[test]
    fn negated_pattern_blocks_activation() {
        let rules = parse_rules(
            r#"rule "clean" salience 5 when Lawsuit() not Impediment(case_number == lawsuit.case_number) then OrdinaryDraw() end"#,
        )
        .unwrap();
        let l = lawsuit(&[], 1, false);
        let wm = WorkingMemory::new().assert_fact(Fact::Lawsuit(l.clone()));
        assert_eq!(match_rules(&wm, &rules).len(), 1);
        let other = Fact::Impediment {
            magistrate: "M".into(),
            case_number: parse_case_number("1-00.2000.5.01.001").unwrap(),
        };
        let wm = wm.assert_fact(other);
        assert_eq!(match_rules(&wm, &rules).len(), 1);
        let wm = wm.assert_fact(Fact::Impediment {
            magistrate: "M".into(),
            case_number: l.case_number,
        });
        assert!(match_rules(&wm, &rules).is_empty());
    }

    #[test]
    fn firing_does_not_mutate_memory() {
        let wm = WorkingMemory::new().assert_fact(Fact::Lawsuit(lawsuit(&[], 1, false)));
        let before: Vec<_> = wm.facts().to_vec();
        let _ = fire(&wm, &default_rules());
        assert_eq!(wm.facts(), &before[..]);
    }

    fn arb_activation() -> impl Strategy<Value = Activation> {
        (
            -3i64..3,
            0usize..3,
            proptest::collection::vec(0usize..3, 0..3),
        )
            .prop_map(|(salience, rule_index, match_key)| Activation {
                rule: format!("r{rule_index}"),
                rule_index,
                salience,
                bindings: BTreeMap::new(),
                match_key,
            })
    }

    proptest! {
        #[test]
        fn agenda_order_is_a_total_order(a in arb_activation(), b in arb_activation(), c in arb_activation()) {
            prop_assert_eq!(agenda_order(&a, &b), agenda_order(&b, &a).reverse());
            if agenda_order(&a, &b) != Ordering::Greater && agenda_order(&b, &c) != Ordering::Greater {
                prop_assert_ne!(agenda_order(&a, &c), Ordering::Greater);
            }
            if agenda_order(&a, &b) == Ordering::Equal {
                prop_assert_eq!((a.salience, a.rule_index, &a.match_key), (b.salience, b.rule_index, &b.match_key));
            }
        }
    }
}
