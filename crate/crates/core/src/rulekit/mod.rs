//! Declarative distribution rules: a small DSL, a working memory of facts
//! and a match-and-halt forward-chaining engine.

mod engine;
mod fact;
mod syntax;

pub use engine::{agenda_order, evaluate, fire, match_rules, Activation, EngineError, Firing};
pub use fact::{Fact, FactType, Value, WorkingMemory};
pub use syntax::{
    parse_rules, Constraint, Directive, Op, Operand, Path, Pattern, Rule, RuleError, RuleSet,
};

/// Source of the four shipped distribution rules.
pub const DEFAULT_RULES: &str = include_str!("../../rules/distribution.rules");

/// The shipped rules, parsed.
pub fn default_rules() -> RuleSet {
    parse_rules(DEFAULT_RULES).expect("shipped rules parse")
}
