//! Solution steps: a both-sides transformation with one operand term.

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::equation::{parse_operand, EquationError, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepOp {
    Add,
    Subtract,
    Multiply,
    Divide,
}

impl StepOp {
    pub fn verb(self) -> &'static str {
        match self {
            StepOp::Add => "add",
            StepOp::Subtract => "subtract",
            StepOp::Multiply => "multiply",
            StepOp::Divide => "divide",
        }
    }

    pub fn is_additive(self) -> bool {
        matches!(self, StepOp::Add | StepOp::Subtract)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    op: StepOp,
    operand: Term,
}

impl Step {
    /// Multiply and divide reject a zero operand.
    pub fn new(op: StepOp, operand: Term) -> Result<Self, EquationError> {
        if !op.is_additive() && operand.coefficient.is_zero() {
            return Err(EquationError::ZeroOperand);
        }
        Ok(Step { op, operand })
    }

    pub fn add(t: Term) -> Self {
        Step { op: StepOp::Add, operand: t }
    }

    pub fn subtract(t: Term) -> Self {
        Step { op: StepOp::Subtract, operand: t }
    }

    pub fn op(&self) -> StepOp {
        self.op
    }

    pub fn operand(&self) -> Term {
        self.operand
    }

    /// For add/subtract, the term that ends up added to both sides.
    pub fn additive_delta(&self) -> Option<Term> {
        match self.op {
            StepOp::Add => Some(self.operand),
            StepOp::Subtract => Some(self.operand.negated()),
            _ => None,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.op.verb(), self.operand)
    }
}

impl std::str::FromStr for Step {
    type Err = EquationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_step(s)
    }
}

/// Parses `"<verb> <operand>"`, e.g. `"subtract 11u"` or `"divide -4"`.
/// An optional `by` after multiply/divide is accepted.
pub fn parse_step(text: &str) -> Result<Step, EquationError> {
    let trimmed = text.trim();
    let (verb, rest) = trimmed
        .split_once(char::is_whitespace)
        .ok_or_else(|| EquationError::MalformedStep(format!("`{text}` has no operand")))?;
    let op = match verb.to_ascii_lowercase().as_str() {
        "add" => StepOp::Add,
        "subtract" => StepOp::Subtract,
        "multiply" => StepOp::Multiply,
        "divide" => StepOp::Divide,
        other => return Err(EquationError::MalformedStep(format!("unknown verb `{other}`"))),
    };
    let mut rest = rest.trim();
    if !op.is_additive() {
        if let Some(after) = rest.strip_prefix("by ") {
            rest = after.trim();
        }
    }
    let operand = parse_operand(rest)
        .map_err(|e| EquationError::MalformedStep(format!("bad operand in `{text}`: {e}")))?;
    Step::new(op, operand)
}
