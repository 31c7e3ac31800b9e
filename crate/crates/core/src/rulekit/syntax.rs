//! Rule file syntax: AST, lexer, recursive-descent parser and canonical
//! renderer.
//!
//! ```text
//! ruleset    := rule+
//! rule       := "rule" STRING "salience" INT "when" pattern+ "then" directive "end"
//! pattern    := [IDENT ":"] TYPE "(" [constraint {"," constraint}] ")" | "not" pattern
//! constraint := path ("==" | "!=" | "in") (literal | path) | path "not-empty"
//! path       := IDENT ["." IDENT]
//! directive  := IDENT "(" [IDENT] ")"
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::fmt;

use thiserror::Error;

use super::fact::{FactType, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("{line}:{column}: expected {}, found {found}", expected.join(" | "))]
    Parse {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{column}: unknown fact type {name}")]
    UnknownFactType {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("{line}:{column}: {fact_type} has no field {field}")]
    UnknownField {
        line: usize,
        column: usize,
        fact_type: FactType,
        field: String,
    },
    #[error("{line}:{column}: unknown directive {name}")]
    UnknownDirective {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("rule {rule:?}: label {label} is not bound by an earlier pattern")]
    UnboundLabel { rule: String, label: String },
    #[error("rule {rule:?}: {path} names a field its fact type does not have")]
    UnknownPathField { rule: String, path: String },
    #[error("rule {rule:?}: label {label} declared twice")]
    DuplicateLabel { rule: String, label: String },
    #[error("rule {rule:?}: directive {directive} cannot use a {found} binding")]
    BindingTypeMismatch {
        rule: String,
        directive: &'static str,
        found: FactType,
    },
    #[error("rule {rule:?}: directive {directive} {problem}")]
    DirectiveArity {
        rule: String,
        directive: &'static str,
        problem: &'static str,
    },
    #[error("duplicate rule name {0:?}")]
    DuplicateRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Ne,
    In,
    NotEmpty,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::In => "in",
            Op::NotEmpty => "not-empty",
        }
    }
}

/// `root.field` or a bare `field` of the pattern's own fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub root: Option<String>,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Literal(Value),
    Path(Path),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub left: Path,
    pub op: Op,
    pub right: Option<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub label: Option<String>,
    pub negated: bool,
    pub fact_type: FactType,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Directive {
    AssignSameAs(String),
    PreventionAssign(String),
    EmbargoAssign(String),
    OrdinaryDraw,
}

impl Directive {
    pub fn name(&self) -> &'static str {
        match self {
            Directive::AssignSameAs(_) => "AssignSameAs",
            Directive::PreventionAssign(_) => "PreventionAssign",
            Directive::EmbargoAssign(_) => "EmbargoAssign",
            Directive::OrdinaryDraw => "OrdinaryDraw",
        }
    }

    pub fn binding(&self) -> Option<&str> {
        match self {
            Directive::AssignSameAs(l)
            | Directive::PreventionAssign(l)
            | Directive::EmbargoAssign(l) => Some(l),
            Directive::OrdinaryDraw => None,
        }
    }

    fn accepts(&self, t: FactType) -> bool {
        match self {
            Directive::AssignSameAs(_) => {
                matches!(t, FactType::RelatedAssignment | FactType::PriorAssignment)
            }
            Directive::PreventionAssign(_) => t == FactType::PriorAssignment,
            Directive::EmbargoAssign(_) => t == FactType::Divergence,
            Directive::OrdinaryDraw => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub name: String,
    pub salience: i64,
    pub patterns: Vec<Pattern>,
    pub directive: Directive,
}

impl Rule {
    /// Index of the pattern a path root refers to, looking only at positive
    /// patterns before `before`. `lawsuit` falls back to the first positive
    /// `Lawsuit` pattern when no pattern carries that label.
    pub fn resolve_root(&self, root: &str, before: usize) -> Option<usize> {
        let earlier = self.patterns[..before]
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.negated);
        let mut fallback = None;
        for (i, p) in earlier {
            if p.label.as_deref() == Some(root) {
                return Some(i);
            }
            if root == "lawsuit" && fallback.is_none() && p.fact_type == FactType::Lawsuit {
                fallback = Some(i);
            }
        }
        fallback
    }

    fn label_index(&self, label: &str) -> Option<usize> {
        self.patterns
            .iter()
            .position(|p| !p.negated && p.label.as_deref() == Some(label))
    }

    fn check_scopes(&self) -> Result<(), RuleError> {
        let mut labels = std::collections::HashSet::new();
        for (i, p) in self.patterns.iter().enumerate() {
            for c in &p.constraints {
                let paths = std::iter::once(&c.left).chain(match &c.right {
                    Some(Operand::Path(p)) => Some(p),
                    _ => None,
                });
                for path in paths {
                    if let Some(root) = &path.root {
                        let target =
                            self.resolve_root(root, i)
                                .ok_or_else(|| RuleError::UnboundLabel {
                                    rule: self.name.clone(),
                                    label: root.clone(),
                                })?;
                        if !self.patterns[target]
                            .fact_type
                            .fields()
                            .contains(&path.field.as_str())
                        {
                            return Err(RuleError::UnknownPathField {
                                rule: self.name.clone(),
                                path: path.to_string(),
                            });
                        }
                    }
                }
            }
            if let Some(l) = &p.label {
                if !labels.insert(l.clone()) {
                    return Err(RuleError::DuplicateLabel {
                        rule: self.name.clone(),
                        label: l.clone(),
                    });
                }
            }
        }
        if let Some(label) = self.directive.binding() {
            let idx = self
                .label_index(label)
                .ok_or_else(|| RuleError::UnboundLabel {
                    rule: self.name.clone(),
                    label: label.to_owned(),
                })?;
            let found = self.patterns[idx].fact_type;
            if !self.directive.accepts(found) {
                return Err(RuleError::BindingTypeMismatch {
                    rule: self.name.clone(),
                    directive: self.directive.name(),
                    found,
                });
            }
        }
        Ok(())
    }
}

/// Rules in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    EqEq,
    NotEq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, RuleError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let lex_err = |line, column, expected: &str, found: String| RuleError::Parse {
        line,
        column,
        expected: vec![expected.to_owned()],
        found,
    };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | ',' | ':' | '.' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    _ => Tok::Dot,
                };
                out.push(Spanned {
                    tok,
                    line,
                    column: col,
                });
                advance(1, &mut i, &mut col);
            }
            '=' | '!' => {
                if chars.get(i + 1) != Some(&'=') {
                    return Err(lex_err(line, col, "`==` or `!=`", format!("`{c}`")));
                }
                let tok = if c == '=' { Tok::EqEq } else { Tok::NotEq };
                out.push(Spanned {
                    tok,
                    line,
                    column: col,
                });
                advance(2, &mut i, &mut col);
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(lex_err(
                                start_line,
                                start_col,
                                "closing `\"`",
                                "end of line".into(),
                            ))
                        }
                        Some('"') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                other => {
                                    return Err(lex_err(
                                        line,
                                        col,
                                        "escape `\\\"`, `\\\\` or `\\n`",
                                        format!("{other:?}"),
                                    ))
                                }
                            }
                            i += 2;
                            col += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                out.push(Spanned {
                    tok: Tok::Str(s),
                    line: start_line,
                    column: start_col,
                });
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                let v = text
                    .parse()
                    .map_err(|_| lex_err(line, col, "integer in i64 range", text.clone()))?;
                out.push(Spanned {
                    tok: Tok::Int(v),
                    line,
                    column: col,
                });
                advance(j - i, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-')
                {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                out.push(Spanned {
                    tok: Tok::Ident(text),
                    line,
                    column: col,
                });
                advance(j - i, &mut i, &mut col);
            }
            other => return Err(lex_err(line, col, "a token", format!("`{other}`"))),
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

const KEYWORDS: &[&str] = &[
    "rule",
    "salience",
    "when",
    "then",
    "end",
    "not",
    "in",
    "not-empty",
];

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> RuleError {
        let t = self.peek();
        RuleError::Parse {
            line: t.line,
            column: t.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), RuleError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&format!("`{kw}`")]))
        }
    }

    fn punct(&mut self, tok: Tok, shown: &str) -> Result<(), RuleError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[shown]))
        }
    }

    /// A non-keyword identifier.
    fn ident(&mut self, what: &str) -> Result<Spanned, RuleError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(self.bump()),
            _ => Err(self.error(&[what])),
        }
    }

    fn ruleset(&mut self) -> Result<RuleSet, RuleError> {
        let mut rules: Vec<Rule> = Vec::new();
        loop {
            if self.peek().tok == Tok::Eof && !rules.is_empty() {
                break;
            }
            let rule = self.rule()?;
            if rules.iter().any(|r| r.name == rule.name) {
                return Err(RuleError::DuplicateRule(rule.name));
            }
            rule.check_scopes()?;
            rules.push(rule);
        }
        Ok(RuleSet { rules })
    }

    fn rule(&mut self) -> Result<Rule, RuleError> {
        self.keyword("rule")?;
        let name = match self.bump().tok {
            Tok::Str(s) => s,
            _ => {
                self.pos -= 1;
                return Err(self.error(&["rule name string"]));
            }
        };
        self.keyword("salience")?;
        let salience = match self.peek().tok {
            Tok::Int(v) => {
                self.bump();
                v
            }
            _ => return Err(self.error(&["integer salience"])),
        };
        self.keyword("when")?;
        let mut patterns = vec![self.pattern(false)?];
        while !self.at_keyword("then") {
            patterns.push(self.pattern(false)?);
        }
        self.keyword("then")?;
        let directive = self.directive(&name)?;
        self.keyword("end")?;
        Ok(Rule {
            name,
            salience,
            patterns,
            directive,
        })
    }

    fn pattern(&mut self, under_not: bool) -> Result<Pattern, RuleError> {
        if self.at_keyword("not") {
            if under_not {
                return Err(self.error(&["fact type"]));
            }
            self.bump();
            let mut p = self.pattern(true)?;
            p.negated = true;
            return Ok(p);
        }
        let label = if matches!(self.peek_at(1), Tok::Colon) {
            if under_not {
                // a label inside a negation could never be referenced
                return Err(self.error(&["fact type"]));
            }
            let l = self.ident("pattern label")?;
            self.bump();
            match l.tok {
                Tok::Ident(s) => Some(s),
                _ => unreachable!(),
            }
        } else {
            None
        };
        let at = self.ident("fact type or `not`")?;
        let Tok::Ident(type_name) = at.tok else {
            unreachable!()
        };
        let fact_type = FactType::from_name(&type_name).ok_or(RuleError::UnknownFactType {
            line: at.line,
            column: at.column,
            name: type_name,
        })?;
        self.punct(Tok::LParen, "`(`")?;
        let mut constraints = Vec::new();
        if self.peek().tok != Tok::RParen {
            constraints.push(self.constraint(fact_type)?);
            while self.peek().tok == Tok::Comma {
                self.bump();
                constraints.push(self.constraint(fact_type)?);
            }
        }
        self.punct(Tok::RParen, "`,` or `)`")?;
        Ok(Pattern {
            label,
            negated: false,
            fact_type,
            constraints,
        })
    }

    fn path(&mut self, own: Option<FactType>) -> Result<Path, RuleError> {
        let first = self.ident("field path")?;
        let Tok::Ident(first_name) = first.tok else {
            unreachable!()
        };
        if self.peek().tok == Tok::Dot {
            self.bump();
            let field = self.ident("field name")?;
            let Tok::Ident(field) = field.tok else {
                unreachable!()
            };
            Ok(Path {
                root: Some(first_name),
                field,
            })
        } else {
            if let Some(t) = own {
                if !t.fields().contains(&first_name.as_str()) {
                    return Err(RuleError::UnknownField {
                        line: first.line,
                        column: first.column,
                        fact_type: t,
                        field: first_name,
                    });
                }
            }
            Ok(Path {
                root: None,
                field: first_name,
            })
        }
    }

    fn constraint(&mut self, own: FactType) -> Result<Constraint, RuleError> {
        let left = self.path(Some(own))?;
        let op = match &self.peek().tok {
            Tok::EqEq => Op::Eq,
            Tok::NotEq => Op::Ne,
            Tok::Ident(s) if s == "in" => Op::In,
            Tok::Ident(s) if s == "not-empty" => Op::NotEmpty,
            _ => return Err(self.error(&["`==`", "`!=`", "`in`", "`not-empty`"])),
        };
        self.bump();
        if op == Op::NotEmpty {
            return Ok(Constraint {
                left,
                op,
                right: None,
            });
        }
        let right = match self.peek().tok.clone() {
            Tok::Int(v) => {
                self.bump();
                Operand::Literal(Value::Int(v))
            }
            Tok::Str(s) => {
                self.bump();
                Operand::Literal(Value::Text(s))
            }
            Tok::Ident(_) => Operand::Path(self.path(Some(own))?),
            _ => return Err(self.error(&["integer", "string", "field path"])),
        };
        Ok(Constraint {
            left,
            op,
            right: Some(right),
        })
    }

    fn directive(&mut self, rule: &str) -> Result<Directive, RuleError> {
        let at = self.ident("directive")?;
        let Tok::Ident(name) = at.tok else {
            unreachable!()
        };
        self.punct(Tok::LParen, "`(`")?;
        let arg = if self.peek().tok == Tok::RParen {
            None
        } else {
            let a = self.ident("binding label")?;
            let Tok::Ident(a) = a.tok else { unreachable!() };
            Some(a)
        };
        self.punct(Tok::RParen, "`)`")?;
        let arity = |directive, problem| RuleError::DirectiveArity {
            rule: rule.to_owned(),
            directive,
            problem,
        };
        let needs = |arg: Option<String>, directive| {
            arg.ok_or_else(|| arity(directive, "requires a binding"))
        };
        match name.as_str() {
            "AssignSameAs" => Ok(Directive::AssignSameAs(needs(arg, "AssignSameAs")?)),
            "PreventionAssign" => Ok(Directive::PreventionAssign(needs(arg, "PreventionAssign")?)),
            "EmbargoAssign" => Ok(Directive::EmbargoAssign(needs(arg, "EmbargoAssign")?)),
            "OrdinaryDraw" => match arg {
                None => Ok(Directive::OrdinaryDraw),
                Some(_) => Err(arity("OrdinaryDraw", "takes no binding")),
            },
            _ => Err(RuleError::UnknownDirective {
                line: at.line,
                column: at.column,
                name,
            }),
        }
    }
}

pub fn parse_rules(source: &str) -> Result<RuleSet, RuleError> {
    let toks = lex(source)?;
    Parser { toks, pos: 0 }.ruleset()
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.root {
            Some(r) => write!(f, "{r}.{}", self.field),
            None => f.write_str(&self.field),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.left, self.op.symbol())?;
        match &self.right {
            None => Ok(()),
            Some(Operand::Path(p)) => write!(f, " {p}"),
            Some(Operand::Literal(Value::Int(i))) => write!(f, " {i}"),
            Some(Operand::Literal(Value::Text(s))) => write!(f, " {}", quote(s)),
            // not produced by the parser
            Some(Operand::Literal(v)) => write!(f, " {v:?}"),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        if let Some(l) = &self.label {
            write!(f, "{l}: ")?;
        }
        write!(f, "{}(", self.fact_type)?;
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rule {} salience {}", quote(&self.name), self.salience)?;
        writeln!(f, "when")?;
        for p in &self.patterns {
            writeln!(f, "    {p}")?;
        }
        writeln!(f, "then")?;
        writeln!(
            f,
            "    {}({})",
            self.directive.name(),
            self.directive.binding().unwrap_or("")
        )?;
        writeln!(f, "end")
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}
