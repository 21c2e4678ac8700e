//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the lines are always shown.

mod support;
#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aefs_core::corpus::{tag_seen, TestInput};
use aefs_core::equation::parse_equation;
use aefs_core::evalkit::{anova_from_summary, anova_oneway, anova_twoway, describe, f_pvalue};
use aefs_core::gateway::{
    Gateway, GatewayError, GenerationRequest, HttpBackend, ReplayBackend, ResponseCache, RetryPolicy, ScriptedBackend,
};
use aefs_core::oracle::{
    apply_step, canonical_solve, is_solved, judge_step, optimal_steps, tag_input, Correctness, JudgeMode,
};
use aefs_core::prompt::{default_demos, default_extra_demos, PromptKit, PromptVariant};
use aefs_core::step::{parse_step, Step};
use rand::RngExt;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn listed(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!(", failing: {}", items.join("; "))
    }
}

fn c1_oracle_goldens() -> Outcome {
    let start = Instant::now();
    let mut wrong = Vec::new();
    for (state, step, label) in common::PRINTED {
        let v = judge_step(&parse_equation(state).unwrap(), &parse_step(step).unwrap(), JudgeMode::Permissive)
            .map_err(|e| e.to_string())?;
        if v.correctness() != label {
            wrong.push(format!("{state}, {step}"));
        }
    }
    let took = start.elapsed();
    check(
        wrong.is_empty() && took < Duration::from_secs(1),
        format!("{}/21 labels reproduced in {:.1} ms{}", 21 - wrong.len(), took.as_secs_f64() * 1e3, listed(&wrong)),
    )
}

const TEST_INPUTS: [(&str, &str, Correctness, &str); 5] = [
    ("4v-17=-4v", "divide -4", Correctness::Incorrect, "two step with two variable terms, divide -ve, incorrect"),
    ("2x+12=-x", "divide 2", Correctness::Incorrect, "two step with two variable terms, divide +ve, incorrect"),
    ("10=-6-4y", "add 6", Correctness::Correct, "two step with one variable term, add +ve, correct"),
    ("6+n=-2-4n", "add 4", Correctness::Incorrect, "three step, add +ve, incorrect"),
    ("6+n=-2-4n", "subtract -2", Correctness::Correct, "three step, subtract -ve, correct"),
];

fn c2_taxonomy() -> Outcome {
    let mut hits = 0;
    for (s, st, c, line) in TEST_INPUTS {
        let tag = tag_input(&parse_equation(s).unwrap(), &parse_step(st).unwrap(), c).map_err(|e| e.to_string())?;
        hits += usize::from(tag.to_string() == line);
    }
    let added = [
        "two step with one variable term, add +ve, correct",
        "two step with two variable terms, divide -ve, incorrect",
        "three step, add +ve, incorrect",
        "three step, subtract -ve, correct",
    ];
    for (d, line) in default_extra_demos().iter().zip(added) {
        hits += usize::from(d.tag().to_string() == line);
    }
    check(hits == 9, format!("{hits}/9 tag lines exact"))
}

fn c3_seen() -> Outcome {
    let inputs: Vec<TestInput> =
        TEST_INPUTS.iter().enumerate().map(|(i, (s, st, c, _))| TestInput::new(format!("{}", i + 1), *s, *st, *c).unwrap()).collect();
    let got: Vec<bool> = tag_seen(&inputs, &default_demos()).iter().map(|i| i.seen == Some(true)).collect();
    let want = [false, true, false, false, false];
    let hits = got.iter().zip(want).filter(|(g, w)| **g == *w).count();
    check(hits == 5, format!("{hits}/5 seen flags exact (seen: {got:?})"))
}

fn binary(ones: usize) -> Vec<f64> {
    (0..60).map(|i| if i < ones { 1.0 } else { 0.0 }).collect()
}

fn c4_accuracy() -> Outcome {
    let (a, t) = (binary(40), binary(31));
    let (da, dt) = (describe(&a), describe(&t));
    let r = anova_oneway(&[&a, &t]).map_err(|e| e.to_string())?;
    let means = (da.mean - 0.667).abs() < 5e-4 && (dt.mean - 0.517).abs() < 5e-4;
    let sds = (da.sd_population - 0.47).abs() <= 0.005 && (dt.sd_population - 0.50).abs() <= 0.005;
    let fp = (r.f - 2.81).abs() <= 0.05 && (r.p - 0.09).abs() <= 0.01 && (r.df1, r.df2) == (1, 118);
    check(
        means && sds && fp,
        format!(
            "M {:.3}/{:.3}, SD(n) {:.4}/{:.4} [SD(n-1) {:.4}/{:.4}], F({}, {}) = {:.3}, p = {:.4}",
            da.mean, dt.mean, da.sd_population, dt.sd_population, da.sd, dt.sd, r.df1, r.df2, r.f, r.p
        ),
    )
}

fn c5_summary() -> Outcome {
    let pairs = [
        ((4.03, 1.31), (3.48, 1.64), 4.14),
        ((3.99, 1.29), (3.46, 1.57), 4.23),
        ((4.08, 1.20), (3.57, 1.48), 4.41),
        ((3.93, 1.26), (3.46, 1.53), 3.44),
        ((4.07, 1.19), (3.67, 1.58), 2.45),
        ((3.83, 1.37), (3.32, 1.68), 3.22),
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for ((m1, s1), (m2, s2), target) in pairs {
        let f = anova_from_summary(60, m1, s1, 60, m2, s2);
        ok &= (f - target).abs() <= 0.25;
        got.push(format!("{f:.2}"));
    }
    let p = f_pvalue(26.07, 1.0, 116.0);
    check(ok && p < 0.001, format!("F = [{}], p(26.07; 1, 116) = {p:.2e}", got.join(", ")))
}

fn normal(rng: &mut rand_pcg::Pcg64) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn grid(rng: &mut rand_pcg::Pcg64, n: usize, mean: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let (mut y, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..2 {
        for j in 0..2 {
            for _ in 0..n {
                y.push(mean(i, j) + normal(rng));
                a.push(i);
                b.push(j);
            }
        }
    }
    (y, a, b)
}

fn pooled_t(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let mx = x.iter().sum::<f64>() / nx;
    let my = y.iter().sum::<f64>() / ny;
    let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / (nx - 1.0);
    let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / (ny - 1.0);
    let sp2 = ((nx - 1.0) * vx + (ny - 1.0) * vy) / (nx + ny - 2.0);
    (mx - my) / (sp2 * (1.0 / nx + 1.0 / ny)).sqrt()
}

fn c6_properties() -> Outcome {
    let mut rng = common::rng(606);
    let quiet = (0..100)
        .filter(|_| {
            let (y, a, b) = grid(&mut rng, 30, |_, _| 3.0);
            anova_twoway(&y, &a, &b).unwrap().interaction.p > 0.05
        })
        .count();
    let (y, a, b) = grid(&mut rng, 30, |i, j| if i == j { 4.0 } else { 2.5 });
    let constructed = anova_twoway(&y, &a, &b).map_err(|e| e.to_string())?.interaction.p;

    let (mut worst_t2, mut worst_scale) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let nx = rng.random_range(2..30);
        let ny = rng.random_range(2..30);
        let x: Vec<f64> = (0..nx).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y: Vec<f64> = (0..ny).map(|_| rng.random_range(-50.0..50.0)).collect();
        let f = anova_oneway(&[&x, &y]).map_err(|e| e.to_string())?.f;
        let t = pooled_t(&x, &y);
        worst_t2 = worst_t2.max((f - t * t).abs() / f.max(t * t));
        let c = rng.random_range(0.01..100.0);
        let k = rng.random_range(-100.0..100.0);
        for g in [
            [x.iter().map(|v| v * c).collect::<Vec<_>>(), y.iter().map(|v| v * c).collect()],
            [x.iter().map(|v| v + k).collect(), y.iter().map(|v| v + k).collect()],
        ] {
            let f2 = anova_oneway(&g).map_err(|e| e.to_string())?.f;
            worst_scale = worst_scale.max((f2 - f).abs() / f.max(1.0));
        }
    }

    let mut worst_p = 0.0f64;
    for nu in [1.0, 3.0, 10.0, 58.0, 118.0, 500.0] {
        let dist = StudentsT::new(0.0, 1.0, nu).unwrap();
        for t in [0.1, 0.5, 1.0, 1.96, 2.81f64.sqrt(), 3.5, 8.0] {
            worst_p = worst_p.max((f_pvalue(t * t, 1.0, nu) - 2.0 * (1.0 - dist.cdf(t))).abs());
        }
    }
    check(
        quiet >= 90 && constructed < 0.001 && worst_t2 <= 1e-9 && worst_scale <= 1e-7 && worst_p < 1e-3,
        format!(
            "null p > .05 in {quiet}/100, constructed p = {constructed:.1e}, |F - t^2| rel {worst_t2:.1e}, \
             scale/shift {worst_scale:.1e}, p vs t-dist {worst_p:.1e}"
        ),
    )
}

const GOLDEN_TF: &str = include_str!("../../core/tests/golden/traditional_fs.txt");
const GOLDEN_AE: &str = include_str!("../../core/tests/golden/assertion_enhanced.txt");

fn c7_prompts() -> Outcome {
    let kit = PromptKit::default();
    let t = TestInput::new("t", "x+10=18", "subtract 18", Correctness::Incorrect).unwrap();
    let tf = kit.build(PromptVariant::TraditionalFs, &t).map_err(|e| e.to_string())?;
    let ae = kit.build(PromptVariant::AssertionEnhanced, &t).map_err(|e| e.to_string())?;
    let extra = kit.build(PromptVariant::TraditionalFsExtra, &t).map_err(|e| e.to_string())?;
    let demos = extra.matches("Given equation state: ").count() - 1;
    let ok = tf == GOLDEN_TF
        && ae == GOLDEN_AE
        && ae.starts_with(&tf)
        && ae.ends_with("contradicts with the facts of the domain.")
        && demos == 12;
    check(
        ok,
        format!(
            "traditional exact: {}, assertion exact: {}, prefix: {}, extra demos: {demos}",
            tf == GOLDEN_TF,
            ae == GOLDEN_AE,
            ae.starts_with(&tf)
        ),
    )
}

fn c8_oracle_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(8);
    let mut failures = Vec::new();
    let mut steps_checked = 0usize;
    for _ in 0..10_000 {
        let eq = common::random_equation(&mut rng);
        let root = eq.root();
        for s in common::candidate_steps(&eq) {
            let v = judge_step(&eq, &s, JudgeMode::Permissive).map_err(|e| e.to_string())?;
            steps_checked += 1;
            if v.correct && apply_step(&eq, &s).map_err(|e| e.to_string())?.root() != root {
                failures.push(format!("root changed: {eq} / {s}"));
            }
            if let Some(d) = s.additive_delta() {
                for mode in [JudgeMode::Permissive, JudgeMode::Strict] {
                    let a = judge_step(&eq, &Step::add(d), mode).map_err(|e| e.to_string())?;
                    let b = judge_step(&eq, &Step::subtract(d.negated()), mode).map_err(|e| e.to_string())?;
                    if a != b {
                        failures.push(format!("add/subtract differ: {eq} / {s}"));
                    }
                }
            }
        }
        let canonical = canonical_solve(&eq);
        let mut cur = eq.clone();
        for s in &canonical {
            cur = apply_step(&cur, s).map_err(|e| e.to_string())?;
        }
        if canonical.len() > 3 || !is_solved(&cur) {
            failures.push(format!("canonical: {eq}"));
        }
        let optimal = optimal_steps(&eq).map_err(|e| e.to_string())?;
        if optimal.is_empty()
            || optimal.iter().any(|s| canonical_solve(&apply_step(&eq, s).unwrap()).len() >= canonical.len())
        {
            failures.push(format!("optimal: {eq}"));
        }
    }
    let took = start.elapsed();
    failures.truncate(3);
    check(
        failures.is_empty() && took < Duration::from_secs(30),
        format!("10000 equations, {steps_checked} judged steps in {:.2} s{}", took.as_secs_f64(), listed(&failures)),
    )
}

fn c9_determinism() -> Outcome {
    let a = support::Workspace::new();
    let b = support::Workspace::new();
    let mut worst = Duration::ZERO;
    for ws in [&a, &b] {
        let start = Instant::now();
        let out = ws.aefs(&["run"]);
        worst = worst.max(start.elapsed());
        if !out.status.success() {
            return Err(format!("run failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let (oa, ob) = (a.outputs(), b.outputs());
    check(
        oa == ob && oa.keys().any(|k| k.ends_with("report.md")) && worst < Duration::from_secs(10),
        format!("{} output files byte-identical: {}, slowest run {:.2} s (replay, offline)", oa.len(), oa == ob, worst.as_secs_f64()),
    )
}

fn c10_generate_paths() -> Outcome {
    const CANNED: &str = "because we can only divide if we have only one variable term in the entire equation \
isolated on one side on its own. Here we have two variable terms, 4v and -4v, on the left side of the equation. \
Therefore, we cannot divide by -4 at this step. We need to combine like terms first by adding 4v to both sides of \
the equation. This will result in 4v - 17 + 4v = -4v + 4v.";
    let kit = PromptKit::default();
    let t = TestInput::new("1", "4v-17=-4v", "divide -4", Correctness::Incorrect).unwrap();
    let req = GenerationRequest::new(kit.build(PromptVariant::AssertionEnhanced, &t).unwrap(), "stub-model");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let mock = Gateway::new(Box::new(ScriptedBackend::new().with_response(req.prompt_hash(), CANNED)))
        .with_cache(ResponseCache::new(dir.path()));
    let mock_ok = mock.generate(&req).map(|r| r.text == CANNED).unwrap_or(false);

    let replay = Gateway::new(Box::new(ReplayBackend)).with_cache(ResponseCache::new(dir.path()));
    let replay_ok = replay.generate(&req).map(|r| r.cached && r.text == CANNED).unwrap_or(false)
        && matches!(replay.generate(&GenerationRequest::new("other", "stub-model")), Err(GatewayError::ReplayMiss { .. }));

    let retry = RetryPolicy { max_attempts: 2, base_delay: Duration::from_millis(1), max_delay: Duration::from_millis(2) };
    let http = |responses: Vec<(u16, String)>| {
        let stub = common::http_stub::serve(responses);
        let gw = Gateway::new(Box::new(HttpBackend::new(&stub.base_url, "sk-test", Duration::from_secs(5)))).with_retry(retry);
        (gw.generate(&req), stub)
    };
    let (ok, stub) = http(vec![(200, common::http_stub::completion_body(CANNED))]);
    let sent_auth = stub.seen.lock().unwrap()[0].header("authorization") == Some("Bearer sk-test");
    let contract = ok.map(|r| r.text == CANNED).unwrap_or(false)
        && sent_auth
        && matches!(http(vec![(401, "{}".into())]).0, Err(GatewayError::AuthError(_)))
        && matches!(http(vec![(429, "{}".into())]).0, Err(GatewayError::RateLimited { attempts: 2 }))
        && matches!(http(vec![(500, "x".into())]).0, Err(GatewayError::NetworkError { attempts: 2, .. }))
        && http(vec![(503, "x".into()), (200, common::http_stub::completion_body("late"))]).0.map(|r| r.text) == Ok("late".into());
    let cached_files = fs::read_dir(dir.path()).map(|d| d.count()).unwrap_or(0);
    check(
        mock_ok && replay_ok && contract && cached_files == 1,
        format!("scripted mock: {mock_ok}, replay hit/miss: {replay_ok}, HTTP stub 200/401/429/5xx contract: {contract}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle golden suite", c1_oracle_goldens),
        ("taxonomy suite", c2_taxonomy),
        ("seen/unseen suite", c3_seen),
        ("accuracy-statistics reconstruction", c4_accuracy),
        ("summary-ANOVA reconstruction", c5_summary),
        ("statistics property substitutes", c6_properties),
        ("prompt goldens", c7_prompts),
        ("oracle property suite", c8_oracle_properties),
        ("pipeline determinism", c9_determinism),
        ("generate path via mock, replay and HTTP stub", c10_generate_paths),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{}/10 criteria pass", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
