//! One-variable linear equations over exact rationals.
//!
//! An [`Equation`] holds two normalized sides. Each side carries at most one
//! variable term and at most one constant term, variable term first. Empty
//! sides stand for the constant `0`.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Exact rational number, always stored in lowest terms with a positive
/// denominator.
pub type Rational = Ratio<i64>;

/// Literal magnitudes above this bound are rejected so that a handful of
/// products and sums cannot overflow `i64`.
const LITERAL_LIMIT: i64 = i32::MAX as i64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquationError {
    #[error("malformed equation: {0}")]
    MalformedEquation(String),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("malformed step: {0}")]
    MalformedStep(String),
    #[error("cannot multiply or divide by zero")]
    ZeroOperand,
}

/// A coefficient with an optional single-letter variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Term {
    pub coefficient: Rational,
    pub variable: Option<char>,
}

impl Term {
    pub fn constant(value: Rational) -> Self {
        Term { coefficient: value, variable: None }
    }

    pub fn var(coefficient: Rational, variable: char) -> Self {
        Term { coefficient, variable: Some(variable) }
    }

    pub fn int(value: i64) -> Self {
        Term::constant(Rational::from_integer(value))
    }

    pub fn is_variable(&self) -> bool {
        self.variable.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficient.is_zero()
    }

    pub fn negated(self) -> Self {
        Term { coefficient: -self.coefficient, ..self }
    }

    pub fn is_positive(&self) -> bool {
        self.coefficient.is_positive()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variable {
            Some(v) if self.coefficient.is_one() => write!(f, "{v}"),
            Some(v) if self.coefficient == -Rational::one() => write!(f, "-{v}"),
            Some(v) => write!(f, "{}{v}", fmt_rational(&self.coefficient)),
            None => f.write_str(&fmt_rational(&self.coefficient)),
        }
    }
}

/// Renders an integer as `n` and any other rational as `a/b`.
pub fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// One side of an equation: an optional variable term followed by an optional
/// constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SideExpr {
    var: Option<Rational>,
    constant: Option<Rational>,
}

impl SideExpr {
    /// Combines like terms, drops zeros. Fails if more than one variable
    /// letter occurs.
    pub fn from_terms(terms: &[Term]) -> Result<(Self, Option<char>), EquationError> {
        let mut letter: Option<char> = None;
        let mut var = Rational::zero();
        let mut constant = Rational::zero();
        for t in terms {
            match t.variable {
                Some(v) => {
                    match letter {
                        Some(l) if l != v => {
                            return Err(EquationError::DomainViolation(format!(
                                "two distinct variables `{l}` and `{v}`"
                            )))
                        }
                        _ => letter = Some(v),
                    }
                    var += t.coefficient;
                }
                None => constant += t.coefficient,
            }
        }
        let side = SideExpr {
            var: (!var.is_zero()).then_some(var),
            constant: (!constant.is_zero()).then_some(constant),
        };
        Ok((side, letter))
    }

    /// Coefficient of the variable term, if one is present.
    pub fn var_coefficient(&self) -> Option<Rational> {
        self.var
    }

    pub fn constant(&self) -> Option<Rational> {
        self.constant
    }

    pub fn has_var(&self) -> bool {
        self.var.is_some()
    }

    /// Number of non-zero terms on this side.
    pub fn len(&self) -> usize {
        self.var.is_some() as usize + self.constant.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The terms in canonical order (variable first).
    pub fn terms(&self, variable: char) -> Vec<Term> {
        let mut out = Vec::with_capacity(2);
        if let Some(c) = self.var {
            out.push(Term::var(c, variable));
        }
        if let Some(c) = self.constant {
            out.push(Term::constant(c));
        }
        out
    }

    fn add(&self, t: &Term) -> SideExpr {
        let mut var = self.var.unwrap_or_else(Rational::zero);
        let mut constant = self.constant.unwrap_or_else(Rational::zero);
        if t.is_variable() {
            var += t.coefficient;
        } else {
            constant += t.coefficient;
        }
        SideExpr {
            var: (!var.is_zero()).then_some(var),
            constant: (!constant.is_zero()).then_some(constant),
        }
    }

    fn scale(&self, k: Rational) -> SideExpr {
        SideExpr { var: self.var.map(|c| c * k), constant: self.constant.map(|c| c * k) }
    }

    fn render(&self, variable: char) -> String {
        let terms = self.terms(variable);
        if terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, t) in terms.iter().enumerate() {
            if i == 0 {
                out.push_str(&t.to_string());
            } else if t.coefficient.is_negative() {
                out.push_str(" - ");
                out.push_str(&t.negated().to_string());
            } else {
                out.push_str(" + ");
                out.push_str(&t.to_string());
            }
        }
        out
    }
}

/// Which side of the equals sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A normalized linear equation in exactly one variable with a unique root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    lhs: SideExpr,
    rhs: SideExpr,
    variable: char,
}

impl Equation {
    pub fn new(lhs: &[Term], rhs: &[Term]) -> Result<Self, EquationError> {
        let (l, lv) = SideExpr::from_terms(lhs)?;
        let (r, rv) = SideExpr::from_terms(rhs)?;
        let variable = match (lv, rv) {
            (Some(a), Some(b)) if a != b => {
                return Err(EquationError::DomainViolation(format!(
                    "two distinct variables `{a}` and `{b}`"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => {
                return Err(EquationError::DomainViolation("no variable term".into()))
            }
        };
        if !variable.is_ascii_lowercase() {
            return Err(EquationError::DomainViolation(format!(
                "variable `{variable}` is not a lowercase ASCII letter"
            )));
        }
        Self::from_sides(l, r, variable)
    }

    fn from_sides(lhs: SideExpr, rhs: SideExpr, variable: char) -> Result<Self, EquationError> {
        if !lhs.has_var() && !rhs.has_var() {
            return Err(EquationError::DomainViolation("no variable term".into()));
        }
        let eq = Equation { lhs, rhs, variable };
        if eq.net_coefficient().is_zero() {
            return Err(EquationError::DomainViolation(
                "variable cancels across sides; no unique solution".into(),
            ));
        }
        Ok(eq)
    }

    pub fn lhs(&self) -> &SideExpr {
        &self.lhs
    }

    pub fn rhs(&self) -> &SideExpr {
        &self.rhs
    }

    pub fn side(&self, side: Side) -> &SideExpr {
        match side {
            Side::Left => &self.lhs,
            Side::Right => &self.rhs,
        }
    }

    pub fn variable(&self) -> char {
        self.variable
    }

    /// Number of variable terms across both sides (1 or 2).
    pub fn var_term_count(&self) -> usize {
        self.lhs.has_var() as usize + self.rhs.has_var() as usize
    }

    /// lhs variable coefficient minus rhs variable coefficient.
    fn net_coefficient(&self) -> Rational {
        self.lhs.var.unwrap_or_else(Rational::zero) - self.rhs.var.unwrap_or_else(Rational::zero)
    }

    /// The unique solution of the equation.
    pub fn root(&self) -> Rational {
        let c = self.lhs.constant.unwrap_or_else(Rational::zero);
        let d = self.rhs.constant.unwrap_or_else(Rational::zero);
        (d - c) / self.net_coefficient()
    }

    /// Adds `t` to both sides.
    pub fn add_term(&self, t: &Term) -> Result<Equation, EquationError> {
        if let Some(v) = t.variable {
            if v != self.variable {
                return Err(EquationError::DomainViolation(format!(
                    "operand variable `{v}` does not match `{}`",
                    self.variable
                )));
            }
        }
        Self::from_sides(self.lhs.add(t), self.rhs.add(t), self.variable)
    }

    /// Multiplies both sides by a non-zero constant.
    pub fn scale(&self, k: Rational) -> Result<Equation, EquationError> {
        if k.is_zero() {
            return Err(EquationError::ZeroOperand);
        }
        Self::from_sides(self.lhs.scale(k), self.rhs.scale(k), self.variable)
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs.render(self.variable), self.rhs.render(self.variable))
    }
}

impl std::str::FromStr for Equation {
    type Err = EquationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_equation(s)
    }
}

pub fn render_equation(eq: &Equation) -> String {
    eq.to_string()
}

// ---------------------------------------------------------------------------
// Lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Rational),
    Var(char),
    Plus,
    Minus,
    Equals,
}

fn lex(text: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            // ASCII hyphen, Unicode minus sign, en dash
            '-' | '\u{2212}' | '\u{2013}' => {
                out.push(Token::Minus);
                i += 1;
            }
            '=' => {
                out.push(Token::Equals);
                i += 1;
            }
            '0'..='9' => {
                let (num, next) = lex_number(&chars, i)?;
                out.push(Token::Num(num));
                i = next;
            }
            c if c.is_ascii_lowercase() => {
                if chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) {
                    return Err(format!("multi-letter identifier at position {i}"));
                }
                out.push(Token::Var(c));
                i += 1;
            }
            other => return Err(format!("unexpected character `{other}` at position {i}")),
        }
    }
    Ok(out)
}

fn lex_integer(chars: &[char], mut i: usize) -> Result<(i64, usize), String> {
    let start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    let digits: String = chars[start..i].iter().collect();
    let value: i64 = digits.parse().map_err(|_| format!("integer literal `{digits}` too large"))?;
    if value > LITERAL_LIMIT {
        return Err(format!("integer literal `{digits}` too large"));
    }
    Ok((value, i))
}

fn lex_number(chars: &[char], i: usize) -> Result<(Rational, usize), String> {
    let (numer, mut next) = lex_integer(chars, i)?;
    // optional "/denominator", whitespace allowed around the slash
    let mut j = next;
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    if j < chars.len() && chars[j] == '/' {
        j += 1;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j >= chars.len() || !chars[j].is_ascii_digit() {
            return Err("fraction is missing its denominator".into());
        }
        let (denom, after) = lex_integer(chars, j)?;
        if denom == 0 {
            return Err("fraction has zero denominator".into());
        }
        next = after;
        return Ok((Rational::new(numer, denom), next));
    }
    Ok((Rational::from_integer(numer), next))
}

/// Parses a run of signed terms. Returns the terms and the index of the first
/// unconsumed token.
fn parse_terms(tokens: &[Token], mut i: usize) -> Result<(Vec<Term>, usize), String> {
    let mut terms = Vec::new();
    let mut first = true;
    loop {
        let mut negative = false;
        if !first {
            match tokens.get(i) {
                Some(Token::Plus) => i += 1,
                Some(Token::Minus) => {
                    negative = true;
                    i += 1;
                }
                _ => break,
            }
        }
        // unary sign directly in front of a term
        match tokens.get(i) {
            Some(Token::Minus) => {
                negative = !negative;
                i += 1;
            }
            Some(Token::Plus) if first => i += 1,
            _ => {}
        }
        let mut term = match tokens.get(i) {
            Some(Token::Num(n)) => {
                i += 1;
                if let Some(Token::Var(v)) = tokens.get(i) {
                    i += 1;
                    Term::var(*n, *v)
                } else {
                    Term::constant(*n)
                }
            }
            Some(Token::Var(v)) => {
                i += 1;
                Term::var(Rational::one(), *v)
            }
            Some(t) => return Err(format!("expected a term, found {t:?}")),
            None => return Err("expected a term, found end of input".into()),
        };
        if negative {
            term = term.negated();
        }
        terms.push(term);
        first = false;
    }
    Ok((terms, i))
}

/// Parses text such as `"j-6=-9"` or `"7/3 = v + 2/3"` into a normalized
/// equation.
pub fn parse_equation(text: &str) -> Result<Equation, EquationError> {
    let malformed = |m: String| EquationError::MalformedEquation(format!("{m} in `{text}`"));
    let tokens = lex(text).map_err(malformed)?;
    let eq_count = tokens.iter().filter(|t| **t == Token::Equals).count();
    if eq_count != 1 {
        return Err(malformed(format!("expected exactly one `=`, found {eq_count}")));
    }
    let (lhs, i) = parse_terms(&tokens, 0).map_err(malformed)?;
    if tokens.get(i) != Some(&Token::Equals) {
        return Err(malformed(format!("unexpected token {:?}", tokens.get(i))));
    }
    let (rhs, j) = parse_terms(&tokens, i + 1).map_err(malformed)?;
    if j != tokens.len() {
        return Err(malformed(format!("trailing token {:?}", tokens[j])));
    }
    Equation::new(&lhs, &rhs)
}

/// Parses a single signed operand such as `-2`, `11u`, `z` or `-3v`.
pub(crate) fn parse_operand(text: &str) -> Result<Term, String> {
    let tokens = lex(text)?;
    let (terms, i) = parse_terms(&tokens, 0)?;
    if i != tokens.len() || terms.len() != 1 {
        return Err(format!("`{text}` is not a single term"));
    }
    let t = terms[0];
    if t.coefficient.numer().abs() > LITERAL_LIMIT {
        return Err(format!("`{text}` is out of range"));
    }
    Ok(t)
}
