//! Deterministic step judgment for one-variable linear equations.
//!
//! The canonical solving order is:
//!
//! 1. with two variable terms, eliminate the one on the side with more terms;
//!    on a tie, eliminate whichever yields the shorter remaining solution,
//!    preferring the right-hand term when both are equally short;
//! 2. eliminate a constant left on the variable's side;
//! 3. divide by the coefficient, or multiply by its reciprocal when the
//!    coefficient is a unit fraction `±1/k`.
//!
//! A term `t` is eliminated with `subtract t` when its coefficient is
//! positive and `add -t` otherwise.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equation::{Equation, EquationError, Rational, Side, Term};
use crate::step::{Step, StepOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Equation(#[from] EquationError),
    #[error("equation `{0}` is already solved")]
    AlreadySolved(String),
    #[error("equation `{equation}` needs {steps} canonical steps; only 1 to 3 can be classified")]
    Unclassifiable { equation: String, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correctness {
    Correct,
    Incorrect,
}

impl Correctness {
    pub fn from_bool(correct: bool) -> Self {
        if correct {
            Correctness::Correct
        } else {
            Correctness::Incorrect
        }
    }

    pub fn is_correct(self) -> bool {
        self == Correctness::Correct
    }
}

impl fmt::Display for Correctness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correctness::Correct => "correct",
            Correctness::Incorrect => "incorrect",
        })
    }
}

impl FromStr for Correctness {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" => Ok(Correctness::Correct),
            "incorrect" => Ok(Correctness::Incorrect),
            other => Err(format!("`{other}` is neither `correct` nor `incorrect`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    OneStep,
    TwoStepOneVar,
    TwoStepTwoVars,
    ThreeStep,
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateClass::OneStep => "one step",
            StateClass::TwoStepOneVar => "two step with one variable term",
            StateClass::TwoStepTwoVars => "two step with two variable terms",
            StateClass::ThreeStep => "three step",
        })
    }
}

/// Operation kind crossed with the sign of the operand coefficient. A zero
/// operand counts as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    AddPositive,
    AddNegative,
    SubtractPositive,
    SubtractNegative,
    DividePositive,
    DivideNegative,
    MultiplyPositive,
    MultiplyNegative,
}

impl StepClass {
    pub fn op(self) -> StepOp {
        match self {
            StepClass::AddPositive | StepClass::AddNegative => StepOp::Add,
            StepClass::SubtractPositive | StepClass::SubtractNegative => StepOp::Subtract,
            StepClass::DividePositive | StepClass::DivideNegative => StepOp::Divide,
            StepClass::MultiplyPositive | StepClass::MultiplyNegative => StepOp::Multiply,
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(
            self,
            StepClass::AddNegative
                | StepClass::SubtractNegative
                | StepClass::DivideNegative
                | StepClass::MultiplyNegative
        )
    }
}

impl fmt::Display for StepClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.is_negative() { "-ve" } else { "+ve" };
        write!(f, "{} {sign}", self.op().verb())
    }
}

/// Why a step was judged the way it was. The first four reasons are the only
/// ones that accompany a correct verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    EliminatesVarTerm,
    EliminatesConstOnVarSide,
    DividesLoneCoefficient,
    MultipliesUnitFractionCoefficient,
    WrongOperand,
    WrongSign,
    PrematureDivide,
    ConstantOnWrongSide,
    NoSuchTerm,
    NonProgressing,
}

impl Reason {
    pub fn implies_correct(self) -> bool {
        matches!(
            self,
            Reason::EliminatesVarTerm
                | Reason::EliminatesConstOnVarSide
                | Reason::DividesLoneCoefficient
                | Reason::MultipliesUnitFractionCoefficient
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub reason: Reason,
}

impl Verdict {
    fn of(reason: Reason) -> Self {
        Verdict { correct: reason.implies_correct(), reason }
    }

    pub fn correctness(&self) -> Correctness {
        Correctness::from_bool(self.correct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    /// Variable elimination must remove the term the canonical order removes.
    Strict,
    /// Either side's variable term may be eliminated.
    #[default]
    Permissive,
}

impl FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(JudgeMode::Strict),
            "permissive" => Ok(JudgeMode::Permissive),
            other => Err(format!("unknown judge mode `{other}`")),
        }
    }
}

/// Coordinates of an input in the state × step × correctness space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputTag {
    pub state: StateClass,
    pub step: StepClass,
    pub correctness: Correctness,
}

impl fmt::Display for InputTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.state, self.step, self.correctness)
    }
}

// ---------------------------------------------------------------------------

pub fn apply_step(eq: &Equation, step: &Step) -> Result<Equation, EquationError> {
    let operand = step.operand();
    match step.op() {
        StepOp::Add => eq.add_term(&operand),
        StepOp::Subtract => eq.add_term(&operand.negated()),
        StepOp::Multiply | StepOp::Divide => {
            if operand.is_variable() {
                return Err(EquationError::DomainViolation(format!(
                    "{} by a variable term makes the equation non-linear",
                    step.op().verb()
                )));
            }
            if operand.is_zero() {
                return Err(EquationError::ZeroOperand);
            }
            let k = if step.op() == StepOp::Multiply {
                operand.coefficient
            } else {
                operand.coefficient.recip()
            };
            eq.scale(k)
        }
    }
}

/// True when one side is exactly the bare variable and the other side is a
/// single constant (an empty side counts as `0`).
pub fn is_solved(eq: &Equation) -> bool {
    let bare = |s: Side| {
        let side = eq.side(s);
        side.var_coefficient() == Some(Rational::one()) && side.constant().is_none()
    };
    let constant_only = |s: Side| !eq.side(s).has_var();
    (bare(Side::Left) && constant_only(Side::Right)) || (bare(Side::Right) && constant_only(Side::Left))
}

fn eliminate(t: Term) -> Step {
    if t.is_positive() {
        Step::subtract(t)
    } else {
        Step::add(t.negated())
    }
}

fn var_term(eq: &Equation, side: Side) -> Option<Term> {
    eq.side(side).var_coefficient().map(|c| Term::var(c, eq.variable()))
}

fn var_side(eq: &Equation) -> Side {
    if eq.lhs().has_var() {
        Side::Left
    } else {
        Side::Right
    }
}

fn other(side: Side) -> Side {
    match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

/// Canonical steps for an equation with exactly one variable term.
fn finish_single(eq: &Equation) -> Vec<Step> {
    let mut steps = Vec::with_capacity(2);
    let side = var_side(eq);
    let mut current = eq.clone();
    if let Some(c) = current.side(side).constant() {
        let s = eliminate(Term::constant(c));
        current = apply_step(&current, &s).expect("eliminating a constant keeps the equation valid");
        steps.push(s);
    }
    let a = current.side(side).var_coefficient().expect("single variable term survives");
    if !a.is_one() {
        let step = if !a.is_integer() && a.numer().abs() == 1 {
            Step::new(StepOp::Multiply, Term::constant(a.recip()))
        } else {
            Step::new(StepOp::Divide, Term::constant(a))
        };
        steps.push(step.expect("coefficient is non-zero"));
    }
    steps
}

/// Candidate sides whose variable term step (1) may eliminate, in preference
/// order.
fn elimination_candidates(eq: &Equation) -> Vec<Side> {
    let (l, r) = (eq.lhs().len(), eq.rhs().len());
    if l > r {
        vec![Side::Left]
    } else if r > l {
        vec![Side::Right]
    } else {
        vec![Side::Right, Side::Left]
    }
}

/// Deterministic shortest step list in the canonical order. Empty for a solved
/// equation.
pub fn canonical_solve(eq: &Equation) -> Vec<Step> {
    if is_solved(eq) {
        return Vec::new();
    }
    if eq.var_term_count() == 2 {
        elimination_candidates(eq)
            .into_iter()
            .map(|side| {
                let first = eliminate(var_term(eq, side).expect("both sides carry a variable"));
                let next = apply_step(eq, &first).expect("variable elimination keeps the equation valid");
                let mut steps = vec![first];
                steps.extend(finish_single(&next));
                steps
            })
            .min_by_key(Vec::len)
            .expect("at least one candidate")
    } else {
        finish_single(eq)
    }
}

pub fn classify_state(eq: &Equation) -> Result<StateClass, OracleError> {
    match canonical_solve(eq).len() {
        1 => Ok(StateClass::OneStep),
        2 if eq.var_term_count() == 2 => Ok(StateClass::TwoStepTwoVars),
        2 => Ok(StateClass::TwoStepOneVar),
        3 => Ok(StateClass::ThreeStep),
        steps => Err(OracleError::Unclassifiable { equation: eq.to_string(), steps }),
    }
}

pub fn classify_step(step: &Step) -> StepClass {
    let negative = step.operand().coefficient.is_negative();
    match (step.op(), negative) {
        (StepOp::Add, false) => StepClass::AddPositive,
        (StepOp::Add, true) => StepClass::AddNegative,
        (StepOp::Subtract, false) => StepClass::SubtractPositive,
        (StepOp::Subtract, true) => StepClass::SubtractNegative,
        (StepOp::Divide, false) => StepClass::DividePositive,
        (StepOp::Divide, true) => StepClass::DivideNegative,
        (StepOp::Multiply, false) => StepClass::MultiplyPositive,
        (StepOp::Multiply, true) => StepClass::MultiplyNegative,
    }
}

pub fn tag_input(eq: &Equation, step: &Step, correctness: Correctness) -> Result<InputTag, OracleError> {
    Ok(InputTag { state: classify_state(eq)?, step: classify_step(step), correctness })
}

pub fn judge_step(eq: &Equation, step: &Step, mode: JudgeMode) -> Result<Verdict, OracleError> {
    if is_solved(eq) {
        return Err(OracleError::AlreadySolved(eq.to_string()));
    }
    let verdict = match step.additive_delta() {
        Some(delta) => judge_additive(eq, delta, mode),
        None => judge_scaling(eq, step)?,
    };
    Ok(verdict)
}

fn judge_additive(eq: &Equation, delta: Term, mode: JudgeMode) -> Verdict {
    if delta.is_zero() {
        return Verdict::of(Reason::NonProgressing);
    }
    let sides = [Side::Left, Side::Right];
    let magnitude = delta.coefficient.abs();
    match delta.variable {
        Some(v) if v != eq.variable() => Verdict::of(Reason::WrongOperand),
        Some(_) => {
            if sides.iter().any(|&s| eq.side(s).var_coefficient() == Some(-delta.coefficient)) {
                if eq.var_term_count() < 2 {
                    // moves the lone variable term across the equals sign
                    return Verdict::of(Reason::NonProgressing);
                }
                if mode == JudgeMode::Strict {
                    let canonical = canonical_solve(eq)[0];
                    if canonical.additive_delta() != Some(delta) {
                        return Verdict::of(Reason::NonProgressing);
                    }
                }
                return Verdict::of(Reason::EliminatesVarTerm);
            }
            if sides.iter().any(|&s| eq.side(s).var_coefficient() == Some(delta.coefficient)) {
                Verdict::of(Reason::WrongSign)
            } else if sides.iter().any(|&s| eq.side(s).constant().map(|c| c.abs()) == Some(magnitude)) {
                Verdict::of(Reason::WrongOperand)
            } else {
                Verdict::of(Reason::NoSuchTerm)
            }
        }
        None => {
            // the same constant can sit on both sides; the variable side wins
            let mut sides = sides;
            sides.sort_by_key(|&s| !eq.side(s).has_var());
            if let Some(side) = sides.into_iter().find(|&s| eq.side(s).constant() == Some(-delta.coefficient)) {
                return if eq.side(side).has_var() {
                    Verdict::of(Reason::EliminatesConstOnVarSide)
                } else {
                    Verdict::of(Reason::ConstantOnWrongSide)
                };
            }
            if let Some(side) = sides.into_iter().find(|&s| eq.side(s).constant() == Some(delta.coefficient)) {
                return if eq.side(side).has_var() {
                    Verdict::of(Reason::WrongSign)
                } else {
                    Verdict::of(Reason::ConstantOnWrongSide)
                };
            }
            if sides.iter().any(|&s| eq.side(s).var_coefficient().map(|c| c.abs()) == Some(magnitude)) {
                Verdict::of(Reason::WrongOperand)
            } else {
                Verdict::of(Reason::NoSuchTerm)
            }
        }
    }
}

fn judge_scaling(eq: &Equation, step: &Step) -> Result<Verdict, OracleError> {
    let operand = step.operand();
    if operand.is_zero() {
        return Err(EquationError::ZeroOperand.into());
    }
    if operand.is_variable() {
        return Ok(Verdict::of(Reason::WrongOperand));
    }
    if eq.var_term_count() == 2 {
        return Ok(Verdict::of(Reason::PrematureDivide));
    }
    let side = var_side(eq);
    if eq.side(side).constant().is_some() {
        return Ok(Verdict::of(Reason::PrematureDivide));
    }
    debug_assert!(!eq.side(other(side)).has_var());
    let a = eq.side(side).var_coefficient().expect("variable side has a variable");
    let k = operand.coefficient;
    let reason = match step.op() {
        StepOp::Divide if k == a => Reason::DividesLoneCoefficient,
        StepOp::Divide if k == -a => Reason::WrongSign,
        StepOp::Multiply if k.is_integer() && k * a == Rational::one() => {
            Reason::MultipliesUnitFractionCoefficient
        }
        StepOp::Multiply if k * a == -Rational::one() => Reason::WrongSign,
        _ => Reason::WrongOperand,
    };
    Ok(Verdict::of(reason))
}

/// Every step that is judged correct (permissive) and lies on a shortest
/// solution path, i.e. strictly shortens the canonical solution. Add/subtract
/// forms of the same move are both listed.
pub fn optimal_steps(eq: &Equation) -> Result<Vec<Step>, OracleError> {
    if is_solved(eq) {
        return Err(OracleError::AlreadySolved(eq.to_string()));
    }
    let remaining = canonical_solve(eq).len();
    let mut candidates = Vec::new();
    for side in [Side::Left, Side::Right] {
        for t in eq.side(side).terms(eq.variable()) {
            candidates.push(Step::subtract(t));
            candidates.push(Step::add(t.negated()));
            if t.is_variable() {
                let a = t.coefficient;
                candidates.push(Step::new(StepOp::Divide, Term::constant(a))?);
                if a.recip().is_integer() {
                    candidates.push(Step::new(StepOp::Multiply, Term::constant(a.recip()))?);
                }
            }
        }
    }
    let mut out: Vec<Step> = Vec::new();
    for step in candidates {
        if out.contains(&step) {
            continue;
        }
        if !judge_step(eq, &step, JudgeMode::Permissive)?.correct {
            continue;
        }
        let next = apply_step(eq, &step)?;
        if canonical_solve(&next).len() < remaining {
            out.push(step);
        }
    }
    Ok(out)
}
