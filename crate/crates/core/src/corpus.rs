//! Tutoring-log ingestion: validation, de-duplication, seeded sampling and
//! seen/unseen tagging against a demonstration set.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand_core::Rng;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equation::{parse_equation, Equation};
use crate::oracle::{judge_step, tag_input, Correctness, InputTag, JudgeMode, OracleError, Verdict};
use crate::prompt::Demonstration;
use crate::step::{parse_step, Step};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} is empty")]
    EmptyFile(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("cannot sample {requested} inputs from {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

/// One ⟨state, step, correctness⟩ triple with its derived taxonomy tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestInputRecord")]
pub struct TestInput {
    pub id: String,
    pub state: String,
    pub step: String,
    pub correctness: Correctness,
    tag: InputTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen: Option<bool>,
}

#[derive(Deserialize)]
struct TestInputRecord {
    id: String,
    state: String,
    step: String,
    correctness: Correctness,
    #[serde(default)]
    seen: Option<bool>,
}

impl TryFrom<TestInputRecord> for TestInput {
    type Error = OracleError;

    fn try_from(r: TestInputRecord) -> Result<Self, Self::Error> {
        let mut input = TestInput::new(r.id, r.state, r.step, r.correctness)?;
        input.seen = r.seen;
        Ok(input)
    }
}

impl TestInput {
    pub fn new(
        id: impl Into<String>,
        state: impl Into<String>,
        step: impl Into<String>,
        correctness: Correctness,
    ) -> Result<Self, OracleError> {
        let state = state.into();
        let step = step.into();
        let eq = parse_equation(&state)?;
        let parsed = parse_step(&step)?;
        let tag = tag_input(&eq, &parsed, correctness)?;
        Ok(TestInput { id: id.into(), state, step, correctness, tag, seen: None })
    }

    pub fn tag(&self) -> InputTag {
        self.tag
    }

    pub fn equation(&self) -> Equation {
        parse_equation(&self.state).expect("validated at construction")
    }

    pub fn parsed_step(&self) -> Step {
        parse_step(&self.step).expect("validated at construction")
    }

    /// Normalized triple used for duplicate detection.
    pub fn dedup_key(&self) -> (String, String, Correctness) {
        (self.equation().to_string(), self.parsed_step().to_string(), self.correctness)
    }
}

/// Names of the columns holding each component in a delimited log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub state: String,
    pub step: String,
    pub correctness: String,
    /// Optional row identifier column; rows are named `r<line>` without one.
    pub id: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { state: "state".into(), step: "step".into(), correctness: "correctness".into(), id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub line: u64,
    pub input: TestInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<RawRecord>,
    pub malformed: Vec<MalformedRow>,
}

/// Reads a CSV (or TSV, by `.tsv` extension) log. Rows whose components do
/// not parse are reported in `malformed` and left out of `records`.
pub fn ingest(path: &Path, columns: &ColumnMap) -> Result<Ingested, CorpusError> {
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    };
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    ingest_str(&text, delimiter, columns, &path.display().to_string())
}

pub fn ingest_str(text: &str, delimiter: u8, columns: &ColumnMap, source: &str) -> Result<Ingested, CorpusError> {
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyFile(source.to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let state_col = find(&columns.state)?;
    let step_col = find(&columns.step)?;
    let correctness_col = find(&columns.correctness)?;
    let id_col = columns.id.as_deref().map(find).transpose()?;

    let mut out = Ingested::default();
    let mut rows = 0usize;
    for row in reader.records() {
        let row = row?;
        rows += 1;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let id = match id_col {
            Some(i) if !field(i).is_empty() => field(i).to_string(),
            _ => format!("r{line}"),
        };
        let built = field(correctness_col)
            .parse::<Correctness>()
            .map_err(|e| e.to_string())
            .and_then(|c| {
                TestInput::new(id, field(state_col), field(step_col), c).map_err(|e| e.to_string())
            });
        match built {
            Ok(input) => out.records.push(RawRecord { line, input }),
            Err(reason) => out.malformed.push(MalformedRow { line, reason }),
        }
    }
    if rows == 0 {
        return Err(CorpusError::EmptyFile(source.to_string()));
    }
    Ok(out)
}

/// Keeps the first occurrence of every normalized triple.
pub fn dedup(records: &[RawRecord]) -> Vec<TestInput> {
    dedup_inputs(records.iter().map(|r| &r.input))
}

pub fn dedup_inputs<'a>(inputs: impl IntoIterator<Item = &'a TestInput>) -> Vec<TestInput> {
    let mut seen = HashSet::new();
    inputs
        .into_iter()
        .filter(|input| seen.insert(input.dedup_key()))
        .cloned()
        .collect()
}

/// Stream constant of the sampling generator (the PCG reference default).
pub const SAMPLE_STREAM: u64 = 0x0a02_bdbf_7bb3_c0a7;

/// Uniform integer in `0..bound` by rejection: draws below
/// `2^32 mod bound` are discarded so that `draw % bound` is unbiased.
fn bounded(rng: &mut Pcg32, bound: u32) -> u32 {
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let r = rng.next_u32();
        if r >= threshold {
            return r % bound;
        }
    }
}

/// Draws `n` inputs without replacement.
///
/// The generator is PCG-XSH-RR with 64-bit state and 32-bit output
/// (`state = state * 6364136223846793005 + (2*stream + 1)`, output the
/// xorshift-high of the old state rotated right by its top five bits),
/// initialised with `state = seed` and stream [`SAMPLE_STREAM`]. A
/// Fisher-Yates pass runs from the last index down to 1, swapping index `i`
/// with `bounded(i + 1)`; the first `n` items of the shuffled list are the
/// sample.
pub fn sample(inputs: &[TestInput], n: usize, seed: u64) -> Result<Vec<TestInput>, CorpusError> {
    if n > inputs.len() {
        return Err(CorpusError::SampleTooLarge { requested: n, available: inputs.len() });
    }
    let mut rng = Pcg32::new(seed, SAMPLE_STREAM);
    let mut pool: Vec<TestInput> = inputs.to_vec();
    for i in (1..pool.len()).rev() {
        let j = bounded(&mut rng, (i + 1) as u32) as usize;
        pool.swap(i, j);
    }
    pool.truncate(n);
    Ok(pool)
}

/// Marks an input as seen when its tag equals the tag of any demonstration.
pub fn tag_seen(inputs: &[TestInput], demos: &[Demonstration]) -> Vec<TestInput> {
    let demo_tags: HashSet<InputTag> = demos.iter().map(Demonstration::tag).collect();
    inputs
        .iter()
        .map(|input| TestInput { seen: Some(demo_tags.contains(&input.tag)), ..input.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub id: String,
    pub state: String,
    pub step: String,
    pub expert: Correctness,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Inputs whose expert label differs from the oracle verdict.
pub fn validate_against_oracle(inputs: &[TestInput], mode: JudgeMode) -> Vec<Disagreement> {
    inputs
        .iter()
        .filter_map(|input| {
            let entry = |oracle, error| Disagreement {
                id: input.id.clone(),
                state: input.state.clone(),
                step: input.step.clone(),
                expert: input.correctness,
                oracle,
                error,
            };
            match judge_step(&input.equation(), &input.parsed_step(), mode) {
                Ok(v) if v.correctness() == input.correctness => None,
                Ok(v) => Some(entry(Some(v), None)),
                Err(e) => Some(entry(None, Some(e.to_string()))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: String,
    pub records_ingested: usize,
    pub malformed_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after_dedup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
}

impl CorpusManifest {
    /// Counts never grow from one stage to the next.
    pub fn is_monotone(&self) -> bool {
        let dedup_ok = self.after_dedup.is_none_or(|d| d <= self.records_ingested);
        let upstream = self.after_dedup.unwrap_or(self.records_ingested);
        dedup_ok && self.sample_size.is_none_or(|s| s <= upstream)
    }
}
