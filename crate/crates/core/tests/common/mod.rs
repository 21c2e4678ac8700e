//! Seeded generator of in-domain equations and candidate steps.
#![allow(dead_code)]

pub mod http_stub;

use aefs_core::equation::{Equation, Rational, Term};
use aefs_core::oracle::{is_solved, Correctness};
use aefs_core::step::{Step, StepOp};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

fn coefficient(rng: &mut Pcg64) -> Rational {
    let n = loop {
        let n: i64 = rng.random_range(-12..=12);
        if n != 0 {
            break n;
        }
    };
    if rng.random_bool(0.15) {
        Rational::new(n, rng.random_range(2..=5))
    } else {
        Rational::from_integer(n)
    }
}

/// One side: a variable term, a constant, or both, in random order.
fn side(rng: &mut Pcg64, var: char, want_var: bool, want_const: bool) -> Vec<Term> {
    let mut terms = Vec::new();
    if want_var {
        terms.push(Term::var(coefficient(rng), var));
    }
    if want_const {
        terms.push(Term::constant(coefficient(rng)));
    }
    if rng.random_bool(0.5) {
        terms.reverse();
    }
    terms
}

/// An unsolved equation with at most one variable and one constant term per
/// side and a nonzero net coefficient.
pub fn random_equation(rng: &mut Pcg64) -> Equation {
    loop {
        let var = (b'a' + rng.random_range(0..26u8)) as char;
        let lv = rng.random_bool(0.7);
        let rv = !lv || rng.random_bool(0.4);
        let lc = !lv || rng.random_bool(0.6);
        let rc = !rv || rng.random_bool(0.6);
        let (lhs, rhs) = (side(rng, var, lv, lc), side(rng, var, rv, rc));
        let (lhs, rhs) = if rng.random_bool(0.5) { (lhs, rhs) } else { (rhs, lhs) };
        if let Ok(eq) = Equation::new(&lhs, &rhs) {
            if !is_solved(&eq) {
                return eq;
            }
        }
    }
}

/// Steps a student might plausibly try: adding or subtracting any term
/// (either sign), and scaling by any coefficient, its negation or its
/// reciprocal.
pub fn candidate_steps(eq: &Equation) -> Vec<Step> {
    let v = eq.variable();
    let mut terms: Vec<Term> = eq.lhs().terms(v);
    terms.extend(eq.rhs().terms(v));
    let mut out = Vec::new();
    for t in &terms {
        for u in [*t, t.negated()] {
            out.push(Step::add(u));
            out.push(Step::subtract(u));
            if u.is_variable() {
                for op in [StepOp::Divide, StepOp::Multiply] {
                    let k = u.coefficient;
                    for c in [k, k.recip()] {
                        out.push(Step::new(op, Term::constant(c)).expect("nonzero"));
                    }
                }
            }
        }
    }
    out
}

/// Every labelled triple printed in the source material.
use Correctness::{Correct, Incorrect};

pub const PRINTED: [(&str, &str, Correctness); 21] = [
    ("j-6=-9", "add 6", Correct),
    ("x+10=18", "subtract 18", Incorrect),
    ("-2y=8", "divide 2", Incorrect),
    ("8v=16", "divide 8", Correct),
    ("9-2z=6", "subtract 9", Correct),
    ("3z=9-z", "add z", Correct),
    ("2x=8x+10", "divide 2", Incorrect),
    ("11u+10=12u+17", "subtract 11u", Correct),
    ("15=3s-9", "add 9", Correct),
    ("r+2=-4r", "divide -4", Incorrect),
    ("g-10=1-8g", "add 1", Incorrect),
    ("2-3v=4+2v", "subtract -3v", Correct),
    ("4v-17=-4v", "divide -4", Incorrect),
    ("2x+12=-x", "divide 2", Incorrect),
    ("10=-6-4y", "add 6", Correct),
    ("6+n=-2-4n", "add 4", Incorrect),
    ("6+n=-2-4n", "subtract -2", Correct),
    ("3v+2=7", "add -2", Correct),
    ("3v+2=7", "subtract 2", Correct),
    ("-4n=8+n", "subtract n", Correct),
    ("7/3=v+2/3", "add 5/3", Incorrect),
];
