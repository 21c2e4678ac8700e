//! One function per subcommand. Every stage reads its inputs from the
//! previous stage's directory for the same run id unless a file is given,
//! and prints a short summary on stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use aefs_core::corpus::{self, CorpusManifest, Disagreement, RawRecord, TestInput};
use aefs_core::evalkit::{self, ScoreConfig, StimulusScore, STATEMENTS};
use aefs_core::gateway::{
    CompletionBackend, FinishReason, Gateway, GatewayError, GenerationRequest, HttpBackend, ReplayBackend,
    ResponseCache, RetryPolicy, ScriptedBackend,
};
use aefs_core::oracle::{judge_step, Correctness, Reason};
use aefs_core::prompt::{self, PromptKit, PromptVariant};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{BackendKind, RunConfig};
use crate::error::{gateway_kind, CliError, Kind};
use crate::io::{read_json, read_records, slug, to_json, to_jsonl, StageDir};

pub struct Ctx {
    pub cfg: RunConfig,
    pub run_id: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let run_id = cfg.run_id();
        Ctx { cfg, run_id }
    }

    fn stage_path(&self, stage: &str) -> PathBuf {
        self.cfg.paths.output_dir.join(stage).join(&self.run_id)
    }

    /// Creates the stage directory and writes the config snapshot.
    fn stage(&self, stage: &str) -> Result<StageDir, CliError> {
        let dir = StageDir { path: self.stage_path(stage) };
        dir.write("config.json", &self.cfg.snapshot())?;
        Ok(dir)
    }

    fn upstream(&self, stage: &str, file: &str) -> PathBuf {
        self.stage_path(stage).join(file)
    }

    fn prompt_kit(&self) -> Result<PromptKit, CliError> {
        let p = &self.cfg.paths;
        let mut kit = PromptKit::default();
        if let Some(path) = &p.demos {
            kit.demos = prompt::load_demos(path)?;
        }
        if let Some(path) = &p.extra_demos {
            kit.extra_demos = prompt::load_demos(path)?;
        }
        if let Some(path) = &p.assertions {
            kit.assertions = prompt::load_assertions(path)?;
        }
        if let Some(path) = &p.embed_map {
            kit.embed_map = prompt::load_embed_map(path)?;
        }
        Ok(kit)
    }

    fn gateway(&self) -> Result<Gateway, CliError> {
        let g = &self.cfg.gateway;
        let backend: Box<dyn CompletionBackend> = match g.backend {
            BackendKind::Replay => Box::new(ReplayBackend),
            BackendKind::Mock => Box::new(ScriptedBackend::new().with_fallback(g.mock_text.clone())),
            BackendKind::Http => {
                let timeout = Duration::from_secs(g.timeout_secs);
                let mut http = HttpBackend::from_env(timeout)?;
                if let Some(url) = &g.base_url {
                    let key = std::env::var(aefs_core::gateway::API_KEY_ENV).unwrap_or_default();
                    http = HttpBackend::new(url.clone(), key, timeout);
                }
                Box::new(http)
            }
        };
        Ok(Gateway::new(backend)
            .with_cache(ResponseCache::new(self.cfg.paths.cache_dir.clone()))
            .with_retry(RetryPolicy { max_attempts: g.retries, ..RetryPolicy::default() })
            .with_max_tokens_ceiling(g.max_tokens_ceiling))
    }

    fn request(&self, prompt: String) -> GenerationRequest {
        let g = &self.cfg.gateway;
        GenerationRequest {
            prompt,
            model_id: g.model_id.clone(),
            temperature: g.temperature,
            max_tokens: g.max_tokens,
            stop: g.stop.clone(),
        }
    }

    /// Tagged inputs, or the given file.
    fn tagged_inputs(&self, file: Option<&Path>) -> Result<Vec<TestInput>, CliError> {
        match file {
            Some(f) => read_records(f),
            None => read_records(&self.upstream("tag", "inputs.jsonl")),
        }
    }
}

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let path = ctx
        .cfg
        .paths
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::usage("paths.corpus is not set"))?;
    let ingested = corpus::ingest(path, &ctx.cfg.columns)?;
    let manifest = CorpusManifest {
        source: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        records_ingested: ingested.records.len(),
        malformed_rows: ingested.malformed.len(),
        after_dedup: None,
        sample_seed: None,
        sample_size: None,
    };
    let dir = ctx.stage("ingest")?;
    dir.write("records.jsonl", &to_jsonl(&ingested.records))?;
    dir.write("malformed.jsonl", &to_jsonl(&ingested.malformed))?;
    dir.write("manifest.json", &to_json(&manifest))?;
    println!(
        "ingest: {} records, {} malformed rows -> {}",
        ingested.records.len(),
        ingested.malformed.len(),
        dir.path.display()
    );
    Ok(())
}

pub fn dedup(ctx: &Ctx) -> Result<(), CliError> {
    let records: Vec<RawRecord> = read_records(&ctx.upstream("ingest", "records.jsonl"))?;
    let mut manifest: CorpusManifest = read_json(&ctx.upstream("ingest", "manifest.json"))?;
    let unique = corpus::dedup(&records);
    manifest.after_dedup = Some(unique.len());
    let dir = ctx.stage("dedup")?;
    dir.write("inputs.jsonl", &to_jsonl(&unique))?;
    dir.write("manifest.json", &to_json(&manifest))?;
    println!("dedup: {} -> {} unique inputs", records.len(), unique.len());
    Ok(())
}

pub fn sample(ctx: &Ctx) -> Result<(), CliError> {
    let inputs: Vec<TestInput> = read_records(&ctx.upstream("dedup", "inputs.jsonl"))?;
    let mut manifest: CorpusManifest = read_json(&ctx.upstream("dedup", "manifest.json"))?;
    let s = &ctx.cfg.sampling;
    let picked = corpus::sample(&inputs, s.n, s.seed)?;
    manifest.sample_seed = Some(s.seed);
    manifest.sample_size = Some(picked.len());
    let dir = ctx.stage("sample")?;
    dir.write("inputs.jsonl", &to_jsonl(&picked))?;
    dir.write("manifest.json", &to_json(&manifest))?;
    println!("sample: {} of {} inputs (seed {})", picked.len(), inputs.len(), s.seed);
    Ok(())
}

pub fn tag(ctx: &Ctx) -> Result<(), CliError> {
    let inputs: Vec<TestInput> = read_records(&ctx.upstream("sample", "inputs.jsonl"))?;
    let manifest: CorpusManifest = read_json(&ctx.upstream("sample", "manifest.json"))?;
    let kit = ctx.prompt_kit()?;
    let tagged = corpus::tag_seen(&inputs, &kit.demos);
    let seen = tagged.iter().filter(|i| i.seen == Some(true)).count();
    let dir = ctx.stage("tag")?;
    dir.write("inputs.jsonl", &to_jsonl(&tagged))?;
    dir.write("manifest.json", &to_json(&manifest))?;
    println!("tag: {seen} seen, {} unseen", tagged.len() - seen);
    Ok(())
}

#[derive(Serialize)]
struct VerdictRecord<'a> {
    id: &'a str,
    state: &'a str,
    step: &'a str,
    tag: String,
    expert: Correctness,
    oracle: Option<Correctness>,
    reason: Option<Reason>,
    agrees: bool,
}

/// Judges every ingested record when no tagged sample exists yet.
pub fn judge(ctx: &Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let inputs = match file {
        Some(_) => ctx.tagged_inputs(file)?,
        None => {
            let tagged = ctx.upstream("tag", "inputs.jsonl");
            if tagged.exists() {
                read_records(&tagged)?
            } else {
                let records: Vec<RawRecord> = read_records(&ctx.upstream("ingest", "records.jsonl"))?;
                records.into_iter().map(|r| r.input).collect()
            }
        }
    };
    let mode = ctx.cfg.oracle_mode;
    let verdicts: Vec<VerdictRecord> = inputs
        .iter()
        .map(|i| {
            let v = judge_step(&i.equation(), &i.parsed_step(), mode).ok();
            VerdictRecord {
                id: &i.id,
                state: &i.state,
                step: &i.step,
                tag: i.tag().to_string(),
                expert: i.correctness,
                oracle: v.map(|v| v.correctness()),
                reason: v.map(|v| v.reason),
                agrees: v.is_some_and(|v| v.correctness() == i.correctness),
            }
        })
        .collect();
    let disagreements: Vec<Disagreement> = corpus::validate_against_oracle(&inputs, mode);
    let dir = ctx.stage("judge")?;
    dir.write("verdicts.jsonl", &to_jsonl(&verdicts))?;
    dir.write("disagreements.json", &to_json(&disagreements))?;
    println!("judge: {} inputs, {} oracle disagreements", inputs.len(), disagreements.len());
    Ok(())
}

fn resolve_inputs(ctx: &Ctx, input: Option<&str>) -> Result<Vec<TestInput>, CliError> {
    match input {
        Some(s) if Path::new(s).is_file() => read_records(Path::new(s)),
        Some(id) => {
            let all = ctx.tagged_inputs(None)?;
            let found: Vec<TestInput> = all.into_iter().filter(|i| i.id == id).collect();
            if found.is_empty() {
                return Err(CliError::data(format!("no tagged input with id `{id}`")).with_code("unknown_input"));
            }
            Ok(found)
        }
        None => ctx.tagged_inputs(None),
    }
}

pub fn prompt_build(ctx: &Ctx, input: Option<&str>) -> Result<(), CliError> {
    let inputs = resolve_inputs(ctx, input)?;
    let kit = ctx.prompt_kit()?;
    let mut files = BTreeMap::new();
    for i in &inputs {
        for &v in &ctx.cfg.variants {
            files.insert(format!("{}.{}.txt", slug(&i.id), v.key()), kit.build(v, i)?);
        }
    }
    let dir = ctx.stage("prompt")?;
    for (name, text) in &files {
        dir.write(name, text)?;
    }
    println!("prompt build: {} prompt files -> {}", files.len(), dir.path.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub stimulus_id: String,
    pub input_id: String,
    pub variant: PromptVariant,
    pub prompt_hash: String,
    pub text: String,
    pub finish_reason: FinishReason,
}

/// Generates every (input, variant) pair. Nothing is returned, and so
/// nothing written, unless all items succeed.
fn generate_all(
    ctx: &Ctx,
    inputs: &[TestInput],
    variants: &[PromptVariant],
) -> Result<Vec<GenerationRecord>, CliError> {
    let kit = ctx.prompt_kit()?;
    let gateway = ctx.gateway()?;
    let mut keys = Vec::new();
    let mut reqs = Vec::new();
    for i in inputs {
        for &v in variants {
            keys.push((i.id.clone(), v));
            reqs.push(ctx.request(kit.build(v, i)?));
        }
    }
    let results = gateway.batch_generate(&reqs, ctx.cfg.gateway.parallelism);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut kind = Kind::Data;
    let mut code = "generation_failed";
    for (((input_id, v), req), r) in keys.into_iter().zip(&reqs).zip(results) {
        let stimulus_id = evalkit::stimulus_id(&input_id, v);
        match r {
            Ok(g) => records.push(GenerationRecord {
                stimulus_id,
                input_id,
                variant: v,
                prompt_hash: g.prompt_hash,
                text: g.text,
                finish_reason: g.finish_reason,
            }),
            Err(e) => {
                let (k, c) = gateway_kind(&e);
                if k == Kind::Network {
                    kind = Kind::Network;
                }
                code = c;
                let hash = match &e {
                    GatewayError::ReplayMiss { hash } => hash.clone(),
                    _ => req.prompt_hash(),
                };
                failures.push(json!({ "stimulus_id": stimulus_id, "prompt_hash": hash, "error": e.to_string() }));
            }
        }
    }
    if !failures.is_empty() {
        let message = format!("{} of {} generations failed; no outputs written", failures.len(), reqs.len());
        return Err(CliError { kind, code, message, details: Some(json!({ "failures": failures })) });
    }
    Ok(records)
}

pub fn generate(ctx: &Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let inputs = ctx.tagged_inputs(file)?;
    let records = generate_all(ctx, &inputs, &ctx.cfg.variants)?;
    let dir = ctx.stage("generate")?;
    dir.write("generations.jsonl", &to_jsonl(&records))?;
    println!("generate: {} generations via {} backend", records.len(), backend_name(ctx));
    Ok(())
}

fn backend_name(ctx: &Ctx) -> &'static str {
    match ctx.cfg.gateway.backend {
        BackendKind::Http => "http",
        BackendKind::Replay => "replay",
        BackendKind::Mock => "mock",
    }
}

pub fn ratings_import(ctx: &Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let path = file
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.paths.ratings.clone())
        .ok_or_else(|| CliError::usage("no ratings file: pass --file or set paths.ratings"))?;
    let records = evalkit::load_ratings(&path)?;
    let means = evalkit::aggregate(&records)?;
    for id in means.keys() {
        evalkit::parse_stimulus_id(id)?;
    }
    let dir = ctx.stage("ratings")?;
    dir.write("ratings.jsonl", &to_jsonl(&records))?;
    dir.write("means.json", &to_json(&means))?;
    println!("ratings import: {} ratings over {} stimuli", records.len(), means.len());
    Ok(())
}

pub fn score(ctx: &Ctx) -> Result<(), CliError> {
    let means: BTreeMap<String, [f64; STATEMENTS]> = read_json(&ctx.upstream("ratings", "means.json"))?;
    let tagged = ctx.upstream("tag", "inputs.jsonl");
    let seen: BTreeMap<String, bool> = if tagged.exists() {
        read_records::<TestInput>(&tagged)?
            .into_iter()
            .filter_map(|i| i.seen.map(|s| (i.id, s)))
            .collect()
    } else {
        BTreeMap::new()
    };
    let m = &ctx.cfg.metrics;
    let scores = evalkit::score(&means, &seen, ScoreConfig { threshold: m.accuracy_threshold, formula: m.quality_formula })?;
    let dir = ctx.stage("score")?;
    dir.write("scores.jsonl", &to_jsonl(&scores))?;
    println!("score: {} stimuli scored", scores.len());
    Ok(())
}

fn load_scores(ctx: &Ctx, file: Option<&Path>) -> Result<Vec<StimulusScore>, CliError> {
    match file {
        Some(f) => read_records(f),
        None => read_records(&ctx.upstream("score", "scores.jsonl")),
    }
}

pub fn stats(ctx: &Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let scores = load_scores(ctx, file)?;
    let stats = evalkit::compute_stats(&scores)?;
    let dir = ctx.stage("stats")?;
    dir.write("stats.json", &to_json(&stats))?;
    for v in &stats.variants {
        println!(
            "{}: n = {}, accuracy M = {:.2} ± {:.2}, quality M = {:.2} ± {:.2}",
            v.variant.key(),
            v.accuracy.n,
            v.accuracy.mean,
            v.accuracy.sd_population,
            v.quality.mean,
            v.quality.sd_population
        );
    }
    for a in &stats.anova {
        let r = &a.result;
        println!("{}: F({}, {}) = {:.2}, p = {:.3}", a.metric, r.df1, r.df2, r.f, r.p);
    }
    if let Some(t) = &stats.interaction {
        let e = &t.interaction;
        println!("prompt x complexity: F({}, {}) = {:.2}, p = {:.3}", e.df, t.df_residual, e.f, e.p);
    }
    Ok(())
}

pub fn report(ctx: &Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let scores = load_scores(ctx, file)?;
    let (json, md) = evalkit::report(&scores)?;
    let dir = ctx.stage("report")?;
    dir.write("report.json", &json)?;
    dir.write("report.md", &md)?;
    println!("report: {}", dir.file("report.md").display());
    Ok(())
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

pub fn ablate(ctx: &Ctx, file: Option<&Path>, ids: &[String]) -> Result<(), CliError> {
    let mut inputs = ctx.tagged_inputs(file)?;
    if !ids.is_empty() {
        inputs.retain(|i| ids.contains(&i.id));
        if let Some(missing) = ids.iter().find(|id| !inputs.iter().any(|i| &i.id == *id)) {
            return Err(CliError::data(format!("no input with id `{missing}`")).with_code("unknown_input"));
        }
    }
    let records = generate_all(ctx, &inputs, &PromptVariant::ALL)?;
    let mut md = String::from("| input | state | step | correctness |");
    for v in PromptVariant::ALL {
        md.push_str(&format!(" {} |", v.label()));
    }
    md.push_str("\n|---|---|---|---|");
    md.push_str(&"---|".repeat(PromptVariant::ALL.len()));
    md.push('\n');
    for i in &inputs {
        md.push_str(&format!("| {} | {} | {} | {} |", cell(&i.id), cell(&i.state), cell(&i.step), i.correctness));
        for v in PromptVariant::ALL {
            let text = records
                .iter()
                .find(|r| r.input_id == i.id && r.variant == v)
                .map_or(String::new(), |r| cell(r.text.trim()));
            md.push_str(&format!(" {text} |"));
        }
        md.push('\n');
    }
    let dir = ctx.stage("ablate")?;
    dir.write("ablation.jsonl", &to_jsonl(&records))?;
    dir.write("ablation.md", &md)?;
    println!("ablate: {} inputs x {} variants", inputs.len(), PromptVariant::ALL.len());
    Ok(())
}

/// ingest -> dedup -> sample -> tag -> judge -> generate, then ratings,
/// scores and the report when a ratings file is configured.
pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    ingest(ctx)?;
    dedup(ctx)?;
    sample(ctx)?;
    tag(ctx)?;
    judge(ctx, None)?;
    generate(ctx, None)?;
    if ctx.cfg.paths.ratings.is_some() {
        ratings_import(ctx, None)?;
        score(ctx)?;
        stats(ctx, None)?;
        report(ctx, None)?;
    }
    Ok(())
}
