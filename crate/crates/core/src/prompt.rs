//! Few-shot prompt assembly.
//!
//! A prompt is laid out as
//!
//! ```text
//! <preamble>
//!
//! """
//! <one line per demonstration>
//! """
//!
//! <test line, ending at "knowledge-building response:">
//! ```
//!
//! and the assertion-enhanced variant appends, after one blank line, the
//! assertion header, one `- ` bullet per assertion, a blank line and the
//! penalty sentence. Demonstrations, assertions and the embed map are data
//! files; the defaults ship in `data/`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TestInput;
use crate::equation::parse_equation;
use crate::oracle::{judge_step, tag_input, Correctness, InputTag, JudgeMode};
use crate::step::parse_step;

const DEFAULT_DEMOS: &str = include_str!("../data/demos.json");
const DEFAULT_EXTRA_DEMOS: &str = include_str!("../data/extra_demos.json");
const DEFAULT_ASSERTIONS: &str = include_str!("../data/assertions.json");
const DEFAULT_EMBED_MAP: &str = include_str!("../data/embed_map.json");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("tag mismatch at line {line}: {message}")]
    TagMismatch { line: usize, message: String },
    #[error("no demonstrations supplied")]
    EmptyDemos,
    #[error("the extra-demonstration variant needs at least one extra demonstration")]
    MissingExtraDemos,
    #[error("the embedded variant needs an embed map")]
    MissingEmbedMap,
    #[error("invalid embed map: {0}")]
    InvalidEmbedMap(String),
    #[error("invalid assertion set: {0}")]
    InvalidAssertions(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

/// One input-output pair shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Demonstration {
    pub state: String,
    pub step: String,
    pub correctness: Correctness,
    pub explanation: String,
    #[serde(skip)]
    tag: InputTag,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    state: String,
    step: String,
    correctness: Correctness,
    explanation: String,
    /// Optional declared tag, e.g. "one step, add +ve, correct".
    #[serde(default)]
    tag: Option<String>,
}

impl Demonstration {
    /// Parses the state and step, derives the tag and checks the label
    /// against the oracle. Errors carry line 0; file loaders fill in the
    /// real line.
    pub fn new(
        state: impl Into<String>,
        step: impl Into<String>,
        correctness: Correctness,
        explanation: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let state = state.into();
        let step = step.into();
        let schema = |message: String| PromptError::SchemaError { line: 0, message };
        let eq = parse_equation(&state).map_err(|e| schema(e.to_string()))?;
        let parsed = parse_step(&step).map_err(|e| schema(e.to_string()))?;
        let tag = tag_input(&eq, &parsed, correctness).map_err(|e| schema(e.to_string()))?;
        let verdict = judge_step(&eq, &parsed, JudgeMode::Permissive).map_err(|e| schema(e.to_string()))?;
        if verdict.correctness() != correctness {
            return Err(PromptError::TagMismatch {
                line: 0,
                message: format!(
                    "⟨{state}, {step}⟩ is labelled {correctness} but the oracle judges it {} ({:?})",
                    verdict.correctness(),
                    verdict.reason
                ),
            });
        }
        Ok(Demonstration { state, step, correctness, explanation: explanation.into(), tag })
    }

    pub fn tag(&self) -> InputTag {
        self.tag
    }
}

/// 1-based line on which the `index`-th element of a top-level JSON array
/// starts.
fn element_line(text: &str, index: usize) -> usize {
    let mut line = 1;
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    let mut seen = 0usize;
    let mut expecting = false;
    for c in text.chars() {
        if c == '\n' {
            line += 1;
        }
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        if depth == 1 && expecting && !c.is_whitespace() && c != ']' {
            if seen == index {
                return line;
            }
            seen += 1;
            expecting = false;
        }
        match c {
            '"' => in_string = true,
            '[' | '{' => {
                depth += 1;
                if depth == 1 {
                    expecting = true;
                }
            }
            ']' | '}' => depth -= 1,
            ',' if depth == 1 => expecting = true,
            _ => {}
        }
    }
    line
}

fn with_line(err: PromptError, line: usize) -> PromptError {
    match err {
        PromptError::SchemaError { message, .. } => PromptError::SchemaError { line, message },
        PromptError::TagMismatch { message, .. } => PromptError::TagMismatch { line, message },
        other => other,
    }
}

fn read(path: &Path) -> Result<String, PromptError> {
    fs::read_to_string(path).map_err(|source| PromptError::Io { path: path.display().to_string(), source })
}

fn json_error(e: serde_json::Error) -> PromptError {
    PromptError::SchemaError { line: e.line(), message: e.to_string() }
}

pub fn parse_demos(text: &str) -> Result<Vec<Demonstration>, PromptError> {
    let records: Vec<DemoRecord> = serde_json::from_str(text).map_err(json_error)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = element_line(text, i);
            let demo = Demonstration::new(r.state, r.step, r.correctness, r.explanation)
                .map_err(|e| with_line(e, line))?;
            if let Some(declared) = r.tag {
                if declared.trim() != demo.tag.to_string() {
                    return Err(PromptError::TagMismatch {
                        line,
                        message: format!("declared tag `{declared}` but derived `{}`", demo.tag),
                    });
                }
            }
            Ok(demo)
        })
        .collect()
}

pub fn load_demos(path: &Path) -> Result<Vec<Demonstration>, PromptError> {
    parse_demos(&read(path)?)
}

/// The eight baseline demonstrations.
pub fn default_demos() -> Vec<Demonstration> {
    parse_demos(DEFAULT_DEMOS).expect("bundled demonstrations are valid")
}

/// The four additions used for the twelve-demonstration prompt.
pub fn default_extra_demos() -> Vec<Demonstration> {
    parse_demos(DEFAULT_EXTRA_DEMOS).expect("bundled extra demonstrations are valid")
}

/// Ordered domain facts, each a single sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct AssertionSet(Vec<String>);

impl AssertionSet {
    pub fn new(items: Vec<String>) -> Result<Self, PromptError> {
        if items.is_empty() {
            return Err(PromptError::InvalidAssertions("at least one assertion is required".into()));
        }
        for a in &items {
            let t = a.trim();
            if t.is_empty() || t.contains('\n') {
                return Err(PromptError::InvalidAssertions(format!("`{a}` is not a single line")));
            }
            let chars: Vec<char> = t.chars().collect();
            let breaks = chars
                .windows(3)
                .any(|w| matches!(w[0], '.' | '?' | '!') && w[1] == ' ' && w[2].is_uppercase());
            if breaks {
                return Err(PromptError::InvalidAssertions(format!("`{a}` holds more than one sentence")));
            }
        }
        Ok(AssertionSet(items))
    }

    pub fn items(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn parse_assertions(text: &str) -> Result<AssertionSet, PromptError> {
    let items: Vec<String> = serde_json::from_str(text).map_err(json_error)?;
    AssertionSet::new(items)
}

pub fn load_assertions(path: &Path) -> Result<AssertionSet, PromptError> {
    parse_assertions(&read(path)?)
}

pub fn default_assertions() -> AssertionSet {
    parse_assertions(DEFAULT_ASSERTIONS).expect("bundled assertions are valid")
}

/// For each demonstration (by position), the 0-based indices of the
/// assertions appended to its explanation in the embedded variant.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbedMap(pub Vec<Vec<usize>>);

pub fn parse_embed_map(text: &str) -> Result<EmbedMap, PromptError> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn load_embed_map(path: &Path) -> Result<EmbedMap, PromptError> {
    parse_embed_map(&read(path)?)
}

pub fn default_embed_map() -> EmbedMap {
    parse_embed_map(DEFAULT_EMBED_MAP).expect("bundled embed map is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptVariant {
    #[serde(rename = "traditional")]
    TraditionalFs,
    #[serde(rename = "assertion")]
    AssertionEnhanced,
    #[serde(rename = "extra")]
    TraditionalFsExtra,
    #[serde(rename = "embedded")]
    AssertionsEmbedded,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 4] = [
        PromptVariant::TraditionalFs,
        PromptVariant::AssertionEnhanced,
        PromptVariant::TraditionalFsExtra,
        PromptVariant::AssertionsEmbedded,
    ];

    /// Short name used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            PromptVariant::TraditionalFs => "traditional",
            PromptVariant::AssertionEnhanced => "assertion",
            PromptVariant::TraditionalFsExtra => "extra",
            PromptVariant::AssertionsEmbedded => "embedded",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PromptVariant::TraditionalFs => "Traditional Few-Shot (k = 8)",
            PromptVariant::AssertionEnhanced => "Assertion Enhanced Few-Shot",
            PromptVariant::TraditionalFsExtra => "Traditional Few-Shot with more demonstrations (k = 12)",
            PromptVariant::AssertionsEmbedded => "Traditional Few-Shot with assertions embedded into demonstrations",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown prompt variant `{s}` (expected traditional, assertion, extra or embedded)"))
    }
}

/// Fixed text pieces of a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    /// Uses the slots `{state}`, `{step}`, `{correctness}` and `{response}`.
    pub demo_line_format: String,
    pub assertion_header: String,
    pub penalty_sentence: String,
    pub delimiter: String,
}

const SLOTS: [&str; 4] = ["state", "step", "correctness", "response"];

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            preamble: "You are an accomplished middle school student skilled in solving linear algebraic equations. \
Your task is to provide a correct knowledge-building response using only 4 sentences when presented with the \
equation state, the solution step and information on whether the solution step is correct or incorrect.\n\n\
A few examples of knowledge-building responses are provided below delimited by triple quotes."
                .into(),
            demo_line_format: "Given equation state: {state}, given solution step: {step}, correctness of the given \
solution step: {correctness}, knowledge-building response: {response}"
                .into(),
            assertion_header: "A few facts about solving linear algebraic equation domain that you must assert while \
generating a knowledge-building response:"
                .into(),
            penalty_sentence: "You will be heavily penalized if your generated knowledge-building response contradicts \
with the facts of the domain."
                .into(),
            delimiter: "\"\"\"".into(),
        }
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(usize),
}

fn split_format(format: &str) -> Result<Vec<Piece<'_>>, PromptError> {
    let mut pieces = Vec::new();
    let mut rest = format;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .map(|c| open + c)
            .ok_or_else(|| PromptError::InvalidTemplate("unclosed `{` in demo line format".into()))?;
        let name = &rest[open + 1..close];
        let slot = SLOTS
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| PromptError::InvalidTemplate(format!("unknown slot `{{{name}}}`")))?;
        pieces.push(Piece::Text(&rest[..open]));
        pieces.push(Piece::Slot(slot));
        rest = &rest[close + 1..];
    }
    pieces.push(Piece::Text(rest));
    Ok(pieces)
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.delimiter != "\"\"\"" {
            return Err(PromptError::InvalidTemplate("delimiter must be a triple quote".into()));
        }
        let pieces = split_format(&self.demo_line_format)?;
        let mut counts = [0usize; 4];
        for p in &pieces {
            if let Piece::Slot(i) = p {
                counts[*i] += 1;
            }
        }
        if counts != [1, 1, 1, 1] {
            return Err(PromptError::InvalidTemplate(
                "demo line format must use each of {state}, {step}, {correctness}, {response} exactly once".into(),
            ));
        }
        Ok(())
    }

    /// Single left-to-right pass, so slot-like text inside values is left
    /// alone.
    fn line(&self, values: [&str; 4]) -> Result<String, PromptError> {
        let mut out = String::new();
        for p in split_format(&self.demo_line_format)? {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(i) => out.push_str(values[i]),
            }
        }
        Ok(out)
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Extra demonstrations go right after the last demonstration of the same
/// state class (counting extras already placed), or at the end.
pub fn splice_extra_demos(demos: &[Demonstration], extras: &[Demonstration]) -> Vec<Demonstration> {
    let mut out = demos.to_vec();
    for extra in extras {
        match out.iter().rposition(|d| d.tag.state == extra.tag.state) {
            Some(i) => out.insert(i + 1, extra.clone()),
            None => out.push(extra.clone()),
        }
    }
    out
}

fn embed_assertions(
    demos: &[Demonstration],
    assertions: &AssertionSet,
    map: &EmbedMap,
) -> Result<Vec<Demonstration>, PromptError> {
    if map.0.len() > demos.len() {
        return Err(PromptError::InvalidEmbedMap(format!(
            "{} entries for {} demonstrations",
            map.0.len(),
            demos.len()
        )));
    }
    let mut out = demos.to_vec();
    for (demo, indices) in out.iter_mut().zip(&map.0) {
        for &i in indices {
            let a = assertions.items().get(i).ok_or_else(|| {
                PromptError::InvalidEmbedMap(format!("assertion index {i} out of range (have {})", assertions.len()))
            })?;
            demo.explanation.push_str(" Remember, ");
            demo.explanation.push_str(&lower_first(a.trim()));
        }
    }
    Ok(out)
}

pub fn build_prompt(
    template: &PromptTemplate,
    variant: PromptVariant,
    demos: &[Demonstration],
    extra_demos: &[Demonstration],
    assertions: &AssertionSet,
    embed_map: Option<&EmbedMap>,
    test: &TestInput,
) -> Result<String, PromptError> {
    template.validate()?;
    if demos.is_empty() {
        return Err(PromptError::EmptyDemos);
    }
    let shown = match variant {
        PromptVariant::TraditionalFs | PromptVariant::AssertionEnhanced => demos.to_vec(),
        PromptVariant::TraditionalFsExtra => {
            if extra_demos.is_empty() {
                return Err(PromptError::MissingExtraDemos);
            }
            splice_extra_demos(demos, extra_demos)
        }
        PromptVariant::AssertionsEmbedded => {
            let map = embed_map.ok_or(PromptError::MissingEmbedMap)?;
            embed_assertions(demos, assertions, map)?
        }
    };

    let mut out = String::new();
    out.push_str(&template.preamble);
    out.push_str("\n\n");
    out.push_str(&template.delimiter);
    out.push('\n');
    for d in &shown {
        let correctness = d.correctness.to_string();
        out.push_str(&template.line([&d.state, &d.step, &correctness, &d.explanation])?);
        out.push('\n');
    }
    out.push_str(&template.delimiter);
    out.push_str("\n\n");
    let correctness = test.correctness.to_string();
    out.push_str(template.line([&test.state, &test.step, &correctness, ""])?.trim_end());

    if variant == PromptVariant::AssertionEnhanced {
        out.push_str("\n\n");
        out.push_str(&template.assertion_header);
        out.push('\n');
        for a in assertions.items() {
            out.push_str("- ");
            out.push_str(a.trim());
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&template.penalty_sentence);
    }
    Ok(out)
}

/// Everything needed to build any of the four variants.
#[derive(Debug, Clone)]
pub struct PromptKit {
    pub template: PromptTemplate,
    pub demos: Vec<Demonstration>,
    pub extra_demos: Vec<Demonstration>,
    pub assertions: AssertionSet,
    pub embed_map: EmbedMap,
}

impl Default for PromptKit {
    fn default() -> Self {
        PromptKit {
            template: PromptTemplate::default(),
            demos: default_demos(),
            extra_demos: default_extra_demos(),
            assertions: default_assertions(),
            embed_map: default_embed_map(),
        }
    }
}

impl PromptKit {
    pub fn build(&self, variant: PromptVariant, test: &TestInput) -> Result<String, PromptError> {
        build_prompt(
            &self.template,
            variant,
            &self.demos,
            &self.extra_demos,
            &self.assertions,
            Some(&self.embed_map),
            test,
        )
    }

    /// Demonstrations the given variant shows, in prompt order.
    pub fn shown_demos(&self, variant: PromptVariant) -> Vec<Demonstration> {
        match variant {
            PromptVariant::TraditionalFsExtra => splice_extra_demos(&self.demos, &self.extra_demos),
            _ => self.demos.clone(),
        }
    }
}
