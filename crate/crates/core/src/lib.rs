//! Tooling for generating and evaluating knowledge-building explanations of
//! linear-equation solution steps.

pub mod corpus;
pub mod equation;
pub mod evalkit;
pub mod gateway;
pub mod oracle;
pub mod prompt;
pub mod step;

pub use equation::{parse_equation, render_equation, Equation, EquationError, Rational, Term};
pub use oracle::{
    apply_step, canonical_solve, classify_state, classify_step, is_solved, judge_step, optimal_steps,
    tag_input, Correctness, InputTag, JudgeMode, OracleError, Reason, StateClass, StepClass, Verdict,
};
pub use step::{parse_step, Step, StepOp};
pub use corpus::{
    dedup, ingest, sample, tag_seen, validate_against_oracle, ColumnMap, CorpusError, CorpusManifest, TestInput,
};
pub use evalkit::{
    accuracy, aggregate, anova_from_summary, anova_oneway, anova_twoway, f_pvalue, median_split, quality, report,
    AnovaResult, Complexity, EvalError, QualityFormula, RatingRecord, StimulusScore,
};
pub use gateway::{
    CompletionBackend, Gateway, GatewayError, GenerationRequest, GenerationResult, HttpBackend, ReplayBackend,
    ResponseCache, RetryPolicy, ScriptedBackend,
};
pub use prompt::{
    build_prompt, AssertionSet, Demonstration, EmbedMap, PromptError, PromptKit, PromptTemplate, PromptVariant,
};
