mod common;

use common::PRINTED;
use aefs_core::oracle::{canonical_solve, judge_step, tag_input, Correctness, JudgeMode};
use aefs_core::prompt::{default_demos, default_extra_demos};
use aefs_core::{parse_equation, parse_step};

use Correctness::{Correct, Incorrect};


#[test]
fn printed_labels_are_reproduced() {
    for (state, step, label) in PRINTED {
        let v = judge_step(&parse_equation(state).unwrap(), &parse_step(step).unwrap(), JudgeMode::Permissive).unwrap();
        assert_eq!(v.correctness(), label, "{state}, {step}: {:?}", v.reason);
    }
}

#[test]
fn test_input_tag_lines() {
    let cases = [
        ("4v-17=-4v", "divide -4", Incorrect, "two step with two variable terms, divide -ve, incorrect"),
        ("2x+12=-x", "divide 2", Incorrect, "two step with two variable terms, divide +ve, incorrect"),
        ("10=-6-4y", "add 6", Correct, "two step with one variable term, add +ve, correct"),
        ("6+n=-2-4n", "add 4", Incorrect, "three step, add +ve, incorrect"),
        ("6+n=-2-4n", "subtract -2", Correct, "three step, subtract -ve, correct"),
    ];
    for (state, step, c, line) in cases {
        let tag = tag_input(&parse_equation(state).unwrap(), &parse_step(step).unwrap(), c).unwrap();
        assert_eq!(tag.to_string(), line);
    }
}

#[test]
fn added_demonstrations_cover_the_unseen_test_inputs() {
    let tags: Vec<String> = default_extra_demos().iter().map(|d| d.tag().to_string()).collect();
    assert_eq!(
        tags,
        [
            "two step with one variable term, add +ve, correct",
            "two step with two variable terms, divide -ve, incorrect",
            "three step, add +ve, incorrect",
            "three step, subtract -ve, correct",
        ]
    );
}

#[test]
fn demonstration_tags() {
    let tags: Vec<String> = default_demos().iter().map(|d| d.tag().to_string()).collect();
    assert_eq!(
        tags,
        [
            "one step, add +ve, correct",
            "one step, subtract +ve, incorrect",
            "one step, divide +ve, incorrect",
            "one step, divide +ve, correct",
            "two step with one variable term, subtract +ve, correct",
            "two step with two variable terms, add +ve, correct",
            "two step with two variable terms, divide +ve, incorrect",
            "two step with two variable terms, subtract +ve, correct",
        ]
    );
}

#[test]
fn canonical_solutions() {
    let show = |s: &str| canonical_solve(&parse_equation(s).unwrap()).iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(show("11u+10=12u+17"), ["subtract 11u", "subtract 17"]);
    assert_eq!(show("9-2z=6"), ["subtract 9", "divide -2"]);
    assert!(show("x=5").is_empty());
}

#[test]
fn shared_constant_is_removed_from_the_variable_side() {
    let eq = parse_equation("-2=3x-2").unwrap();
    let v = judge_step(&eq, &parse_step("add 2").unwrap(), JudgeMode::Strict).unwrap();
    assert!(v.correct, "{:?}", v.reason);
}
