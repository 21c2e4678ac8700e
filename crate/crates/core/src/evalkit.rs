//! Teacher ratings, per-stimulus metrics and ANOVA statistics.
//!
//! Ratings use five statements: (1) the explanation focuses on the optimal
//! step, (2) it is logically correct, (3) it is relevant to the input,
//! (4) it mentions the essential concepts, (5) it shows comprehension of
//! those concepts. Statements 1 and 2 decide accuracy; accuracy plus
//! statements 3-5 make up quality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptVariant;

pub const STATEMENTS: usize = 5;
pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 4.0;

pub const STATEMENT_NAMES: [&str; STATEMENTS] = [
    "optimal step",
    "logically correct",
    "relevant to input",
    "essential concepts",
    "genuine comprehension",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("ratings line {line}: {message}")]
    InvalidRating { line: u64, message: String },
    #[error("stimulus {stimulus} has no rating for statement {statement}")]
    MissingStatement { stimulus: String, statement: u8 },
    #[error("stimulus id `{0}` is not of the form <input id>:<variant>")]
    BadStimulusId(String),
    #[error("no ratings for input {0} under the traditional variant")]
    MissingTraditional(String),
    #[error("need at least two groups of at least two values: {0}")]
    TooFewObservations(String),
    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),
    #[error("cell ({a}, {b}) has {count} observation(s); at least 2 are required")]
    EmptyCell { a: usize, b: usize, count: usize },
    #[error("nothing to report: the scored corpus is empty")]
    EmptyReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub stimulus_id: String,
    pub teacher_id: String,
    pub statement: u8,
    pub likert: u8,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=STATEMENTS as u8).contains(&self.statement) {
            return Err(format!("statement {} outside 1..=5", self.statement));
        }
        if !(1..=5).contains(&self.likert) {
            return Err(format!("likert {} outside 1..=5", self.likert));
        }
        if self.stimulus_id.trim().is_empty() {
            return Err("empty stimulus_id".into());
        }
        Ok(())
    }
}

/// Reads a CSV with columns `stimulus_id, teacher_id, statement, likert`.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    parse_ratings(&text)
}

pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| EvalError::InvalidRating { line: 1, message: e.to_string() })?
        .clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| EvalError::InvalidRating {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let record: RatingRecord = row
            .deserialize(Some(&headers))
            .map_err(|e| EvalError::InvalidRating { line, message: e.to_string() })?;
        record.validate().map_err(|message| EvalError::InvalidRating { line, message })?;
        out.push(record);
    }
    Ok(out)
}

/// Mean Likert rating per stimulus and statement.
pub fn aggregate(records: &[RatingRecord]) -> Result<BTreeMap<String, [f64; STATEMENTS]>, EvalError> {
    let mut sums: BTreeMap<&str, [(u32, u32); STATEMENTS]> = BTreeMap::new();
    for r in records {
        let slot = &mut sums.entry(r.stimulus_id.as_str()).or_default()[(r.statement - 1) as usize];
        slot.0 += r.likert as u32;
        slot.1 += 1;
    }
    let mut out = BTreeMap::new();
    for (stimulus, cells) in sums {
        let mut means = [0.0; STATEMENTS];
        for (k, (sum, count)) in cells.iter().enumerate() {
            if *count == 0 {
                return Err(EvalError::MissingStatement { stimulus: stimulus.to_string(), statement: k as u8 + 1 });
            }
            means[k] = *sum as f64 / *count as f64;
        }
        out.insert(stimulus.to_string(), means);
    }
    Ok(out)
}

/// 1 when both the optimal-step and the logical-correctness means reach
/// the threshold.
pub fn accuracy(s1: f64, s2: f64, threshold: f64) -> u8 {
    u8::from(s1 >= threshold && s2 >= threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityFormula {
    /// (acc + s3 + s4 + s5) / 4, range 0.75..=4.
    #[default]
    Default,
    /// Accuracy mapped onto 1..=5 first: (4·acc + 1 + s3 + s4 + s5) / 4.
    Rescaled,
}

impl FromStr for QualityFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(QualityFormula::Default),
            "rescaled" => Ok(QualityFormula::Rescaled),
            other => Err(format!("unknown quality formula `{other}` (expected default or rescaled)")),
        }
    }
}

pub fn quality(acc: f64, s3: f64, s4: f64, s5: f64, formula: QualityFormula) -> f64 {
    let a = match formula {
        QualityFormula::Default => acc,
        QualityFormula::Rescaled => 4.0 * acc + 1.0,
    };
    (a + s3 + s4 + s5) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    High,
    Low,
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Complexity::High => "high",
            Complexity::Low => "low",
        })
    }
}

/// Splits `"<input id>:<variant>"`.
pub fn parse_stimulus_id(id: &str) -> Result<(String, PromptVariant), EvalError> {
    let (input, variant) = id.rsplit_once(':').ok_or_else(|| EvalError::BadStimulusId(id.to_string()))?;
    let variant = variant.parse().map_err(|_| EvalError::BadStimulusId(id.to_string()))?;
    if input.is_empty() {
        return Err(EvalError::BadStimulusId(id.to_string()));
    }
    Ok((input.to_string(), variant))
}

pub fn stimulus_id(input_id: &str, variant: PromptVariant) -> String {
    format!("{input_id}:{}", variant.key())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusScore {
    pub stimulus_id: String,
    pub input_id: String,
    pub prompt_variant: PromptVariant,
    pub s: [f64; STATEMENTS],
    pub accuracy: u8,
    pub quality: f64,
    pub seen: Option<bool>,
    pub complexity: Option<Complexity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub threshold: f64,
    pub formula: QualityFormula,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { threshold: DEFAULT_ACCURACY_THRESHOLD, formula: QualityFormula::Default }
    }
}

/// Scores every rated stimulus. `seen` maps input ids to their seen flag;
/// complexity labels are attached when every input has a traditional
/// score.
pub fn score(
    means: &BTreeMap<String, [f64; STATEMENTS]>,
    seen: &BTreeMap<String, bool>,
    cfg: ScoreConfig,
) -> Result<Vec<StimulusScore>, EvalError> {
    let mut out = Vec::with_capacity(means.len());
    for (id, s) in means {
        let (input_id, variant) = parse_stimulus_id(id)?;
        let acc = accuracy(s[0], s[1], cfg.threshold);
        out.push(StimulusScore {
            stimulus_id: id.clone(),
            seen: seen.get(&input_id).copied(),
            input_id,
            prompt_variant: variant,
            s: *s,
            accuracy: acc,
            quality: quality(acc as f64, s[2], s[3], s[4], cfg.formula),
            complexity: None,
        });
    }
    if let Ok(labels) = median_split(&out) {
        for sc in &mut out {
            sc.complexity = labels.get(&sc.input_id).copied();
        }
    }
    Ok(out)
}

/// Median of a non-empty list; even counts average the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Labels each input by its traditional-variant quality: at or below the
/// median is High complexity, above is Low.
pub fn median_split(scores: &[StimulusScore]) -> Result<BTreeMap<String, Complexity>, EvalError> {
    let inputs: BTreeSet<&str> = scores.iter().map(|s| s.input_id.as_str()).collect();
    let traditional: BTreeMap<&str, f64> = scores
        .iter()
        .filter(|s| s.prompt_variant == PromptVariant::TraditionalFs)
        .map(|s| (s.input_id.as_str(), s.quality))
        .collect();
    if let Some(missing) = inputs.iter().find(|i| !traditional.contains_key(*i)) {
        return Err(EvalError::MissingTraditional(missing.to_string()));
    }
    let values: Vec<f64> = traditional.values().copied().collect();
    let Some(m) = median(&values) else {
        return Ok(BTreeMap::new());
    };
    Ok(traditional
        .into_iter()
        .map(|(id, q)| (id.to_string(), if q <= m { Complexity::High } else { Complexity::Low }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 when n < 2.
    pub sd: f64,
    /// Population standard deviation (n denominator).
    pub sd_population: f64,
}

pub fn describe(values: &[f64]) -> Descriptive {
    let n = values.len();
    if n == 0 {
        return Descriptive { n, mean: f64::NAN, sd: f64::NAN, sd_population: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    Descriptive { n, mean, sd, sd_population: (ss / n as f64).sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub groups: Vec<Descriptive>,
}

pub fn anova_oneway<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult, EvalError> {
    if groups.len() < 2 || groups.iter().any(|g| g.as_ref().len() < 2) {
        return Err(EvalError::TooFewObservations(format!(
            "group sizes {:?}",
            groups.iter().map(|g| g.as_ref().len()).collect::<Vec<_>>()
        )));
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let stats: Vec<Descriptive> = groups.iter().map(|g| describe(g.as_ref())).collect();
    let ss_between: f64 = stats.iter().map(|d| d.n as f64 * (d.mean - grand).powi(2)).sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&stats)
        .map(|(g, d)| g.as_ref().iter().map(|v| (v - d.mean).powi(2)).sum::<f64>())
        .sum();
    let df1 = groups.len() - 1;
    let df2 = all.len() - groups.len();
    let scale = all.iter().map(|v| (v - grand).abs()).fold(0.0, f64::max).max(1.0);
    let tiny = 1e-12 * scale * scale * all.len() as f64;
    let (f, p) = match (ss_between <= tiny, ss_within <= tiny) {
        (true, true) => {
            return Err(EvalError::DegenerateGroups("no variance between or within groups".into()));
        }
        (false, true) => (f64::INFINITY, 0.0),
        (true, false) => (0.0, 1.0),
        (false, false) => {
            let f = (ss_between / df1 as f64) / (ss_within / df2 as f64);
            (f, f_pvalue(f, df1 as f64, df2 as f64))
        }
    };
    Ok(AnovaResult { f, df1, df2, p, ss_between, ss_within, groups: stats })
}

/// Two-group F from reported means and sample SDs.
pub fn anova_from_summary(n1: usize, m1: f64, sd1: f64, n2: usize, m2: f64, sd2: f64) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let grand = (a * m1 + b * m2) / (a + b);
    let msb = a * (m1 - grand).powi(2) + b * (m2 - grand).powi(2);
    let msw = ((a - 1.0) * sd1 * sd1 + (b - 1.0) * sd2 * sd2) / (a + b - 2.0);
    msb / msw
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub ss: f64,
    pub df: usize,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWayAnova {
    pub a: Effect,
    pub b: Effect,
    pub interaction: Effect,
    pub ss_residual: f64,
    pub df_residual: usize,
    /// Cell means indexed `[level of A][level of B]`.
    pub cell_means: Vec<Vec<f64>>,
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(y, 1e-10).expect("both singular-vector sets were computed");
    (y - x * beta).norm_squared()
}

/// Two-way ANOVA with sequential (Type I) sums of squares in the order
/// A, B, A×B. Levels are 0-based codes; every cell needs two observations.
pub fn anova_twoway(y: &[f64], a: &[usize], b: &[usize]) -> Result<TwoWayAnova, EvalError> {
    assert_eq!(y.len(), a.len(), "factor A must label every observation");
    assert_eq!(y.len(), b.len(), "factor B must label every observation");
    let la = a.iter().max().map_or(0, |m| m + 1);
    let lb = b.iter().max().map_or(0, |m| m + 1);
    if la < 2 || lb < 2 {
        return Err(EvalError::TooFewObservations("each factor needs at least two levels".into()));
    }
    let mut cells = vec![vec![Vec::new(); lb]; la];
    for ((&v, &i), &j) in y.iter().zip(a).zip(b) {
        cells[i][j].push(v);
    }
    for (i, row) in cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if c.len() < 2 {
                return Err(EvalError::EmptyCell { a: i, b: j, count: c.len() });
            }
        }
    }
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let design = |with_b: bool| {
        let cols = 1 + (la - 1) + if with_b { lb - 1 } else { 0 };
        DMatrix::from_fn(n, cols, |r, c| match c {
            0 => 1.0,
            c if c < la => f64::from(a[r] == c),
            c => f64::from(b[r] == c - la + 1),
        })
    };
    let rss_a = rss(&design(false), &yv);
    let rss_ab = rss(&design(true), &yv);
    let cell_means: Vec<Vec<f64>> =
        cells.iter().map(|row| row.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()).collect();
    let rss_full: f64 = cells
        .iter()
        .zip(&cell_means)
        .flat_map(|(row, means)| row.iter().zip(means))
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();

    let df_residual = n - la * lb;
    let scale = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1.0);
    if rss_full <= 1e-12 * scale * scale * n as f64 {
        return Err(EvalError::DegenerateGroups("zero residual variance in every cell".into()));
    }
    let ms_res = rss_full / df_residual as f64;
    let effect = |ss: f64, df: usize| {
        let ss = ss.max(0.0);
        let f = (ss / df as f64) / ms_res;
        Effect { ss, df, f, p: f_pvalue(f, df as f64, df_residual as f64) }
    };
    Ok(TwoWayAnova {
        a: effect(ss_total - rss_a, la - 1),
        b: effect(rss_a - rss_ab, lb - 1),
        interaction: effect(rss_ab - rss_full, (la - 1) * (lb - 1)),
        ss_residual: rss_full,
        df_residual,
        cell_means,
    })
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let sum = G.iter().enumerate().skip(1).fold(G[0], |acc, (i, g)| acc + g / (x + i as f64));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper-tail probability of the F(df1, df2) distribution.
pub fn f_pvalue(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: PromptVariant,
    pub accuracy: Descriptive,
    pub quality: Descriptive,
    pub statements: [Descriptive; STATEMENTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAnova {
    pub metric: String,
    pub result: AnovaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub variant: PromptVariant,
    pub group: String,
    pub accuracy: Descriptive,
    pub quality: Descriptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub stimuli: usize,
    pub variants: Vec<VariantSummary>,
    /// One-way ANOVAs with prompt variant as the factor.
    pub anova: Vec<NamedAnova>,
    /// Quality ~ prompt × complexity, over traditional and assertion-enhanced.
    pub interaction: Option<TwoWayAnova>,
    pub seen_breakdown: Vec<BreakdownRow>,
    pub complexity_breakdown: Vec<BreakdownRow>,
    pub notes: Vec<String>,
}

fn by_variant(scores: &[StimulusScore]) -> BTreeMap<PromptVariant, Vec<&StimulusScore>> {
    let mut m: BTreeMap<PromptVariant, Vec<&StimulusScore>> = BTreeMap::new();
    for s in scores {
        m.entry(s.prompt_variant).or_default().push(s);
    }
    m
}

fn breakdown_row(variant: PromptVariant, group: String, rows: &[&StimulusScore]) -> BreakdownRow {
    let acc: Vec<f64> = rows.iter().map(|s| s.accuracy as f64).collect();
    let q: Vec<f64> = rows.iter().map(|s| s.quality).collect();
    BreakdownRow { variant, group, accuracy: describe(&acc), quality: describe(&q) }
}

type Metric = Box<dyn Fn(&StimulusScore) -> f64>;

pub fn compute_stats(scores: &[StimulusScore]) -> Result<StatsBundle, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let groups = by_variant(scores);
    let mut notes = Vec::new();

    let variants: Vec<VariantSummary> = groups
        .iter()
        .map(|(&variant, rows)| {
            let col = |f: &dyn Fn(&StimulusScore) -> f64| rows.iter().map(|s| f(s)).collect::<Vec<f64>>();
            VariantSummary {
                variant,
                accuracy: describe(&col(&|s| s.accuracy as f64)),
                quality: describe(&col(&|s| s.quality)),
                statements: std::array::from_fn(|k| describe(&col(&|s| s.s[k]))),
            }
        })
        .collect();

    let mut anova = Vec::new();
    if groups.len() >= 2 {
        let mut metrics: Vec<(String, Metric)> = vec![
            ("accuracy".to_string(), Box::new(|s: &StimulusScore| s.accuracy as f64)),
            ("quality".to_string(), Box::new(|s: &StimulusScore| s.quality)),
        ];
        for (k, name) in STATEMENT_NAMES.iter().enumerate() {
            metrics.push((format!("s{} {}", k + 1, name), Box::new(move |s: &StimulusScore| s.s[k])));
        }
        for (name, f) in metrics {
            let data: Vec<Vec<f64>> = groups.values().map(|rows| rows.iter().map(|s| f(s)).collect()).collect();
            match anova_oneway(&data) {
                Ok(result) => anova.push(NamedAnova { metric: name, result }),
                Err(e) => notes.push(format!("{name}: {e}")),
            }
        }
    } else {
        notes.push("only one prompt variant present; no between-prompt tests".into());
    }

    let pair: Vec<&StimulusScore> = scores
        .iter()
        .filter(|s| matches!(s.prompt_variant, PromptVariant::TraditionalFs | PromptVariant::AssertionEnhanced))
        .collect();
    let interaction = if pair.iter().all(|s| s.complexity.is_some()) && !pair.is_empty() {
        let y: Vec<f64> = pair.iter().map(|s| s.quality).collect();
        let a: Vec<usize> = pair.iter().map(|s| usize::from(s.prompt_variant == PromptVariant::AssertionEnhanced)).collect();
        let b: Vec<usize> = pair.iter().map(|s| usize::from(s.complexity == Some(Complexity::Low))).collect();
        match anova_twoway(&y, &a, &b) {
            Ok(t) => Some(t),
            Err(e) => {
                notes.push(format!("prompt × complexity: {e}"));
                None
            }
        }
    } else {
        notes.push("complexity labels unavailable; no prompt × complexity test".into());
        None
    };

    let mut seen_breakdown = Vec::new();
    let mut complexity_breakdown = Vec::new();
    for (&variant, rows) in &groups {
        for (label, flag) in [("seen", true), ("unseen", false)] {
            let sub: Vec<&StimulusScore> = rows.iter().copied().filter(|s| s.seen == Some(flag)).collect();
            if !sub.is_empty() {
                seen_breakdown.push(breakdown_row(variant, label.to_string(), &sub));
            }
        }
        for c in [Complexity::High, Complexity::Low] {
            let sub: Vec<&StimulusScore> = rows.iter().copied().filter(|s| s.complexity == Some(c)).collect();
            if !sub.is_empty() {
                complexity_breakdown.push(breakdown_row(variant, c.to_string(), &sub));
            }
        }
    }

    Ok(StatsBundle { stimuli: scores.len(), variants, anova, interaction, seen_breakdown, complexity_breakdown, notes })
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

fn pval(p: f64) -> String {
    if p < 0.001 {
        "< .001".into()
    } else {
        format!("{p:.3}")
    }
}

/// Markdown rendering of a stats bundle. SDs are population SDs.
pub fn render_markdown(stats: &StatsBundle) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Evaluation report\n\n{} rated stimuli.\n", stats.stimuli);
    let _ = writeln!(md, "## Accuracy and quality by prompt\n");
    let _ = writeln!(md, "| prompt | n | accuracy (M ± SD) | quality (M ± SD) |");
    let _ = writeln!(md, "|---|---|---|---|");
    for v in &stats.variants {
        let _ = writeln!(
            md,
            "| {} | {} | {} ± {} | {} ± {} |",
            v.variant.key(),
            v.accuracy.n,
            num(v.accuracy.mean),
            num(v.accuracy.sd_population),
            num(v.quality.mean),
            num(v.quality.sd_population)
        );
    }
    let _ = writeln!(md, "\n## Statement means by prompt\n");
    let _ = write!(md, "| prompt |");
    for (k, name) in STATEMENT_NAMES.iter().enumerate() {
        let _ = write!(md, " s{} {} |", k + 1, name);
    }
    let _ = writeln!(md, "\n|---|{}", "---|".repeat(STATEMENTS));
    for v in &stats.variants {
        let _ = write!(md, "| {} |", v.variant.key());
        for d in &v.statements {
            let _ = write!(md, " {} ± {} |", num(d.mean), num(d.sd_population));
        }
        md.push('\n');
    }
    if !stats.anova.is_empty() {
        let _ = writeln!(md, "\n## One-way ANOVA (factor: prompt)\n");
        let _ = writeln!(md, "| metric | F | df | p |");
        let _ = writeln!(md, "|---|---|---|---|");
        for a in &stats.anova {
            let r = &a.result;
            let _ = writeln!(md, "| {} | {} | ({}, {}) | {} |", a.metric, num(r.f), r.df1, r.df2, pval(r.p));
        }
    }
    if let Some(t) = &stats.interaction {
        let _ = writeln!(md, "\n## Two-way ANOVA on quality (prompt × complexity, sequential SS)\n");
        let _ = writeln!(md, "| effect | SS | F | df | p |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for (name, e) in [("prompt", &t.a), ("complexity", &t.b), ("prompt × complexity", &t.interaction)] {
            let _ = writeln!(md, "| {name} | {} | {} | ({}, {}) | {} |", num(e.ss), num(e.f), e.df, t.df_residual, pval(e.p));
        }
    }
    for (title, rows) in [("Seen vs unseen inputs", &stats.seen_breakdown), ("Input complexity", &stats.complexity_breakdown)] {
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(md, "\n## {title}\n");
        let _ = writeln!(md, "| prompt | group | n | accuracy | quality (M ± SD) |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for r in rows.iter() {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} ± {} |",
                r.variant.key(),
                r.group,
                r.accuracy.n,
                num(r.accuracy.mean),
                num(r.quality.mean),
                num(r.quality.sd_population)
            );
        }
    }
    if !stats.notes.is_empty() {
        let _ = writeln!(md, "\n## Notes\n");
        for n in &stats.notes {
            let _ = writeln!(md, "- {n}");
        }
    }
    md
}

/// JSON and markdown documents for a scored corpus.
pub fn report(scores: &[StimulusScore]) -> Result<(String, String), EvalError> {
    let stats = compute_stats(scores)?;
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    Ok((json, render_markdown(&stats)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stim: &str, teacher: &str, statement: u8, likert: u8) -> RatingRecord {
        RatingRecord { stimulus_id: stim.into(), teacher_id: teacher.into(), statement, likert }
    }

    fn full(stim: &str, teacher: &str, v: [u8; 5]) -> Vec<RatingRecord> {
        (0..5).map(|k| rec(stim, teacher, k as u8 + 1, v[k])).collect()
    }

    #[test]
    fn aggregate_means_and_pass_through() {
        let mut r = full("a:traditional", "t1", [3, 4, 3, 3, 3]);
        r.extend(full("a:traditional", "t2", [3, 5, 3, 3, 3]));
        r.extend(full("b:traditional", "t1", [3, 3, 3, 3, 3]));
        let m = aggregate(&r).unwrap();
        assert_eq!(m["a:traditional"][1], 4.5);
        assert_eq!(m["b:traditional"][0], 3.0);
    }

    #[test]
    fn missing_statement() {
        let r: Vec<_> = (1..=4).map(|k| rec("a:traditional", "t", k, 3)).collect();
        assert!(matches!(aggregate(&r), Err(EvalError::MissingStatement { statement: 5, .. })));
    }

    #[test]
    fn accuracy_threshold() {
        assert_eq!(accuracy(5.0, 4.0, 4.0), 1);
        assert_eq!(accuracy(5.0, 3.0, 4.0), 0);
        assert_eq!(accuracy(4.0, 4.0, 4.0), 1);
        assert_eq!(accuracy(3.99, 5.0, 4.0), 0);
    }

    #[test]
    fn quality_examples() {
        let d = QualityFormula::Default;
        assert_eq!(quality(1.0, 5.0, 5.0, 5.0, d), 4.0);
        assert_eq!(quality(0.0, 1.0, 1.0, 1.0, d), 0.75);
        assert_eq!(quality(1.0, 4.0, 4.0, 4.0, d), 3.25);
        assert_eq!(quality(1.0, 5.0, 5.0, 5.0, QualityFormula::Rescaled), 5.0);
        assert_eq!(quality(0.0, 1.0, 1.0, 1.0, QualityFormula::Rescaled), 1.0);
    }

    fn trad(id: &str, q: f64) -> StimulusScore {
        StimulusScore {
            stimulus_id: stimulus_id(id, PromptVariant::TraditionalFs),
            input_id: id.into(),
            prompt_variant: PromptVariant::TraditionalFs,
            s: [3.0; 5],
            accuracy: 0,
            quality: q,
            seen: None,
            complexity: None,
        }
    }

    fn labels(qs: &[f64]) -> Vec<Complexity> {
        let scores: Vec<_> = qs.iter().enumerate().map(|(i, q)| trad(&format!("i{i}"), *q)).collect();
        let m = median_split(&scores).unwrap();
        (0..qs.len()).map(|i| m[&format!("i{i}")]).collect()
    }

    #[test]
    fn median_split_examples() {
        use Complexity::*;
        assert_eq!(labels(&[1.0, 2.0, 3.0, 4.0]), [High, High, Low, Low]);
        assert_eq!(labels(&[2.0, 2.0, 2.0]), [High, High, High]);
        assert_eq!(labels(&[1.0, 2.0, 3.0]), [High, High, Low]);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
    }

    #[test]
    fn median_split_needs_traditional() {
        let mut s = trad("a", 1.0);
        s.prompt_variant = PromptVariant::AssertionEnhanced;
        assert!(matches!(median_split(&[s]), Err(EvalError::MissingTraditional(_))));
    }

    #[test]
    fn stimulus_ids() {
        assert_eq!(parse_stimulus_id("r12:assertion").unwrap(), ("r12".to_string(), PromptVariant::AssertionEnhanced));
        assert!(parse_stimulus_id("r12").is_err());
        assert!(parse_stimulus_id("r12:bogus").is_err());
    }

    #[test]
    fn identical_groups_give_zero_f() {
        let g = [vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = anova_oneway(&g).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn constant_groups_are_degenerate() {
        assert!(matches!(anova_oneway(&[vec![2.0, 2.0], vec![2.0, 2.0]]), Err(EvalError::DegenerateGroups(_))));
        let r = anova_oneway(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f.is_infinite());
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn textbook_three_groups() {
        // Means 5, 8, 11; grand 8. SSB = 3·9 + 0 + 3·9 = 54.
        // SSW = (1+0+1)·3 = 6. F = (54/2)/(6/6) = 27.
        let g = [vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0], vec![10.0, 11.0, 12.0]];
        let r = anova_oneway(&g).unwrap();
        assert_eq!((r.df1, r.df2), (2, 6));
        assert!((r.ss_between - 54.0).abs() < 1e-12);
        assert!((r.ss_within - 6.0).abs() < 1e-12);
        assert!((r.f - 27.0).abs() < 1e-12);
    }

    #[test]
    fn summary_equal_means_is_zero() {
        assert_eq!(anova_from_summary(10, 3.0, 1.0, 12, 3.0, 2.0), 0.0);
    }

    #[test]
    fn pvalue_edges() {
        assert_eq!(f_pvalue(0.0, 3.0, 10.0), 1.0);
        assert_eq!(f_pvalue(f64::INFINITY, 3.0, 10.0), 0.0);
        // F(2, 2) has survival 1/(1+F).
        for f in [0.5, 1.0, 3.0, 10.0] {
            assert!((f_pvalue(f, 2.0, 2.0) - 1.0 / (1.0 + f)).abs() < 1e-12);
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn twoway_hand_worked() {
        // Cells (a,b): (0,0) [1,3] (0,1) [2,4] (1,0) [5,7] (1,1) [10,12].
        // Balanced, so sequential SS equal the textbook SS:
        // grand mean 5.5; A means 2.5 / 8.5 → SSA = 8·9 = 72.
        // B means 4 / 7 → SSB = 8·2.25 = 18.
        // cell means 2,3,6,11 → SScells = 2·(12.25+6.25+0.25+30.25) = 98 → SSAB = 8.
        // residual: each cell ±1 → 8.
        let y = [1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 10.0, 12.0];
        let a = [0, 0, 0, 0, 1, 1, 1, 1];
        let b = [0, 0, 1, 1, 0, 0, 1, 1];
        let t = anova_twoway(&y, &a, &b).unwrap();
        assert!((t.a.ss - 72.0).abs() < 1e-9);
        assert!((t.b.ss - 18.0).abs() < 1e-9);
        assert!((t.interaction.ss - 8.0).abs() < 1e-9);
        assert!((t.ss_residual - 8.0).abs() < 1e-9);
        assert_eq!(t.df_residual, 4);
        assert!((t.interaction.f - 4.0).abs() < 1e-9);
    }

    #[test]
    fn twoway_errors() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let a = [0, 0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 0, 0, 1];
        assert!(matches!(anova_twoway(&y, &a, &b), Err(EvalError::EmptyCell { a: 1, b: 1, count: 1 })));
        let y = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let a = [0, 0, 0, 0, 1, 1, 1, 1];
        let b = [0, 0, 1, 1, 0, 0, 1, 1];
        assert!(matches!(anova_twoway(&y, &a, &b), Err(EvalError::DegenerateGroups(_))));
    }

    #[test]
    fn ratings_csv_validation() {
        let ok = "stimulus_id,teacher_id,statement,likert\nr1:traditional,t1,1,5\n";
        assert_eq!(parse_ratings(ok).unwrap().len(), 1);
        let bad = "stimulus_id,teacher_id,statement,likert\nr1:traditional,t1,1,5\nr1:traditional,t1,6,5\n";
        assert!(matches!(parse_ratings(bad), Err(EvalError::InvalidRating { line: 3, .. })));
        let bad = "stimulus_id,teacher_id,statement,likert\nr1:traditional,t1,1,x\n";
        assert!(matches!(parse_ratings(bad), Err(EvalError::InvalidRating { line: 2, .. })));
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(report(&[]), Err(EvalError::EmptyReport)));
    }
}
