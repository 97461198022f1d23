//! Success criteria for multi-condition items.
//!
//! A prediction is a small boolean formula over region surprisals, e.g.
//!
//! ```text
//! ([3;what_nogap] > [3;that_nogap]) & ([4;what_gap] < [4;that_gap])
//! ```
//!
//! Grammar (whitespace is insignificant between tokens):
//!
//! ```text
//! expr    := conj ("|" conj)*
//! conj    := primary ("&" primary)*
//! primary := "(" expr ")" | cmp
//! cmp     := arith ("<" | ">") arith
//! arith   := atom (("+" | "-") atom)*
//! atom    := "[" integer ";" identifier "]" | number
//! ```
//!
//! Parentheses group boolean sub-expressions only. Comparisons are strict, so
//! a tie makes a comparison false. Error positions are 0-based character
//! offsets into the formula text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A reference to the surprisal of one region under one condition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionRef {
    pub region: u32,
    pub condition: String,
}

impl RegionRef {
    pub fn new(region: u32, condition: impl Into<String>) -> Self {
        RegionRef {
            region,
            condition: condition.into(),
        }
    }
}

impl fmt::Display for RegionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{};{}]", self.region, self.condition)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Ref(RegionRef),
    Number(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
}

/// A left-associative chain `first (op atom)*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Arith {
    pub first: Atom,
    pub rest: Vec<(ArithOp, Atom)>,
}

impl Arith {
    pub fn atom(atom: Atom) -> Self {
        Arith {
            first: atom,
            rest: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Less,
    Greater,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Compare(CmpOp, Arith, Arith),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

/// Surprisal lookup keyed by `(region_number, condition_name)`.
pub type SurprisalTable = BTreeMap<(u32, String), f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulaError {
    #[error("empty formula")]
    Empty,
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("no surprisal for region {region} of condition {condition:?}")]
    MissingAtom { region: u32, condition: String },
}

impl Formula {
    /// Every region reference in the formula, deduplicated.
    pub fn refs(&self) -> BTreeSet<RegionRef> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<RegionRef>) {
        match self {
            Formula::Compare(_, l, r) => {
                for arith in [l, r] {
                    for atom in
                        std::iter::once(&arith.first).chain(arith.rest.iter().map(|(_, a)| a))
                    {
                        if let Atom::Ref(r) = atom {
                            out.insert(r.clone());
                        }
                    }
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    /// Condition names referenced anywhere in the formula.
    pub fn conditions(&self) -> BTreeSet<String> {
        self.refs().into_iter().map(|r| r.condition).collect()
    }
}

/// Parses formula text into an AST.
pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    let chars: Vec<char> = text.chars().collect();
    let mut p = Parser { chars, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(FormulaError::Empty);
    }
    let f = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

/// Evaluates a formula against a surprisal table.
pub fn evaluate(formula: &Formula, surprisals: &SurprisalTable) -> Result<bool, FormulaError> {
    match formula {
        Formula::Compare(op, l, r) => {
            let l = eval_arith(l, surprisals)?;
            let r = eval_arith(r, surprisals)?;
            Ok(match op {
                CmpOp::Less => l < r,
                CmpOp::Greater => l > r,
            })
        }
        // Both sides are evaluated so a missing atom is reported even when
        // the result is already decided.
        Formula::And(a, b) => {
            let a = evaluate(a, surprisals)?;
            let b = evaluate(b, surprisals)?;
            Ok(a && b)
        }
        Formula::Or(a, b) => {
            let a = evaluate(a, surprisals)?;
            let b = evaluate(b, surprisals)?;
            Ok(a || b)
        }
    }
}

fn eval_atom(atom: &Atom, surprisals: &SurprisalTable) -> Result<f64, FormulaError> {
    match atom {
        Atom::Number(x) => Ok(*x),
        Atom::Ref(r) => surprisals
            .get(&(r.region, r.condition.clone()))
            .copied()
            .ok_or_else(|| FormulaError::MissingAtom {
                region: r.region,
                condition: r.condition.clone(),
            }),
    }
}

fn eval_arith(arith: &Arith, surprisals: &SurprisalTable) -> Result<f64, FormulaError> {
    let mut acc = eval_atom(&arith.first, surprisals)?;
    for (op, atom) in &arith.rest {
        let v = eval_atom(atom, surprisals)?;
        match op {
            ArithOp::Add => acc += v,
            ArithOp::Sub => acc -= v,
        }
    }
    Ok(acc)
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Ref(r) => r.fmt(f),
            // `{:?}` on f64 is the shortest representation that round-trips.
            Atom::Number(x) => write!(f, "{x:?}"),
        }
    }
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for (op, atom) in &self.rest {
            let sym = match op {
                ArithOp::Add => '+',
                ArithOp::Sub => '-',
            };
            write!(f, " {sym} {atom}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    /// Canonical text form; `parse(&f.to_string()) == f` for every formula.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Compare(op, l, r) => {
                let sym = match op {
                    CmpOp::Less => '<',
                    CmpOp::Greater => '>',
                };
                write!(f, "{l} {sym} {r}")
            }
            Formula::And(a, b) => {
                write_operand(f, a, matches!(**a, Formula::Or(..)))?;
                f.write_str(" & ")?;
                write_operand(f, b, !matches!(**b, Formula::Compare(..)))
            }
            Formula::Or(a, b) => {
                write_operand(f, a, false)?;
                f.write_str(" | ")?;
                write_operand(f, b, matches!(**b, Formula::Or(..)))
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, operand: &Formula, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({operand})")
    } else {
        write!(f, "{operand}")
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, message: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), FormulaError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.conj()?;
        loop {
            self.skip_ws();
            if self.peek() == Some('|') {
                self.pos += 1;
                let rhs = self.conj()?;
                lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn conj(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.primary()?;
        loop {
            self.skip_ws();
            if self.peek() == Some('&') {
                self.pos += 1;
                let rhs = self.primary()?;
                lhs = Formula::And(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        self.skip_ws();
        if self.peek() == Some('(') {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(')')?;
            return Ok(inner);
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.arith()?;
        self.skip_ws();
        let op = match self.peek() {
            Some('<') => CmpOp::Less,
            Some('>') => CmpOp::Greater,
            _ => return Err(self.error("expected '<' or '>'")),
        };
        self.pos += 1;
        let rhs = self.arith()?;
        Ok(Formula::Compare(op, lhs, rhs))
    }

    fn arith(&mut self) -> Result<Arith, FormulaError> {
        let mut out = Arith::atom(self.atom()?);
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => ArithOp::Add,
                Some('-') => ArithOp::Sub,
                _ => return Ok(out),
            };
            self.pos += 1;
            out.rest.push((op, self.atom()?));
        }
    }

    fn atom(&mut self) -> Result<Atom, FormulaError> {
        self.skip_ws();
        match self.peek() {
            Some('[') => {
                self.pos += 1;
                self.skip_ws();
                let start = self.pos;
                let digits = self.take_while(|c| c.is_ascii_digit());
                if digits.is_empty() {
                    return Err(self.error("expected region number"));
                }
                let region: u32 = digits.parse().map_err(|_| FormulaError::Syntax {
                    position: start,
                    message: "region number out of range".into(),
                })?;
                if region == 0 {
                    return Err(FormulaError::Syntax {
                        position: start,
                        message: "region numbers start at 1".into(),
                    });
                }
                self.expect(';')?;
                self.skip_ws();
                let condition = self.identifier()?;
                self.expect(']')?;
                Ok(Atom::Ref(RegionRef { region, condition }))
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(_) => Err(self.error("expected '[' or a number")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn identifier(&mut self) -> Result<String, FormulaError> {
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => {}
            _ => return Err(self.error("expected condition name")),
        }
        Ok(self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-'))
    }

    fn number(&mut self) -> Result<Atom, FormulaError> {
        let start = self.pos;
        let mut text = self.take_while(|c| c.is_ascii_digit());
        if self.peek() == Some('.') {
            self.pos += 1;
            let frac = self.take_while(|c| c.is_ascii_digit());
            if frac.is_empty() {
                return Err(self.error("expected digits after '.'"));
            }
            text.push('.');
            text.push_str(&frac);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut exp = String::from("e");
            if let Some(sign @ ('+' | '-')) = self.peek() {
                self.pos += 1;
                exp.push(sign);
            }
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                self.pos = save;
            } else {
                text.push_str(&exp);
                text.push_str(&digits);
            }
        }
        text.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Atom::Number)
            .ok_or(FormulaError::Syntax {
                position: start,
                message: "invalid number".into(),
            })
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }
}
