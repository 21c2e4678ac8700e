//! Run configuration: one JSON file, paths relative to the file, with
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use aefs_core::corpus::ColumnMap;
use aefs_core::evalkit::QualityFormula;
use aefs_core::gateway::{DEFAULT_MAX_TOKENS, DEFAULT_MAX_TOKENS_CEILING, DEFAULT_STOP};
use aefs_core::oracle::JudgeMode;
use aefs_core::prompt::PromptVariant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub demos: Option<PathBuf>,
    pub extra_demos: Option<PathBuf>,
    pub assertions: Option<PathBuf>,
    pub embed_map: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            demos: None,
            extra_demos: None,
            assertions: None,
            embed_map: None,
            ratings: None,
            cache_dir: "cache".into(),
            output_dir: "outputs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub n: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { n: 62, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    /// Falls back to the base-URL environment variable, then the public API.
    pub base_url: Option<String>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_tokens_ceiling: u32,
    pub stop: Vec<String>,
    pub parallelism: usize,
    pub retries: u32,
    pub timeout_secs: u64,
    /// Text returned by the mock backend for every prompt.
    pub mock_text: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: BackendKind::Replay,
            base_url: None,
            model_id: "gpt-3.5-turbo-instruct".into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_tokens_ceiling: DEFAULT_MAX_TOKENS_CEILING,
            stop: vec![DEFAULT_STOP.into()],
            parallelism: 4,
            retries: 5,
            timeout_secs: 60,
            mock_text: "Mock knowledge-building response.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metrics {
    pub accuracy_threshold: f64,
    pub quality_formula: QualityFormula,
}

impl Default for Metrics {
    fn default() -> Self {
        Metrics { accuracy_threshold: 4.0, quality_formula: QualityFormula::Default }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    pub paths: Paths,
    pub columns: ColumnMap,
    pub sampling: Sampling,
    pub gateway: GatewayConfig,
    pub metrics: Metrics,
    pub oracle_mode: JudgeMode,
    pub variants: Vec<PromptVariant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: None,
            paths: Paths::default(),
            columns: ColumnMap::default(),
            sampling: Sampling::default(),
            gateway: GatewayConfig::default(),
            metrics: Metrics::default(),
            oracle_mode: JudgeMode::Permissive,
            variants: vec![PromptVariant::TraditionalFs, PromptVariant::AssertionEnhanced],
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variants: Vec<PromptVariant>,
    pub backend: Option<BackendKind>,
    pub out: Option<PathBuf>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Loads `path` (or the defaults), makes every path absolute against the
    /// config file's directory, then applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let cwd = std::env::current_dir().map_err(|e| CliError::data(format!("cannot read working directory: {e}")))?;
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("invalid config {}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, cwd.join(dir))
            }
            None => (RunConfig::default(), cwd.clone()),
        };
        let paths = &mut cfg.paths;
        for p in [&mut paths.corpus, &mut paths.demos, &mut paths.extra_demos, &mut paths.assertions, &mut paths.embed_map, &mut paths.ratings]
            .into_iter()
            .flatten()
        {
            rebase(&base, p);
        }
        rebase(&base, &mut paths.cache_dir);
        rebase(&base, &mut paths.output_dir);

        if let Some(seed) = overrides.seed {
            cfg.sampling.seed = seed;
        }
        if !overrides.variants.is_empty() {
            cfg.variants = overrides.variants.clone();
        }
        if let Some(b) = overrides.backend {
            cfg.gateway.backend = b;
        }
        if let Some(out) = &overrides.out {
            cfg.paths.output_dir = cwd.join(out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sampling.n == 0 {
            return Err(CliError::usage("sampling.n must be at least 1"));
        }
        if self.gateway.parallelism == 0 {
            return Err(CliError::usage("gateway.parallelism must be at least 1"));
        }
        if self.gateway.retries == 0 {
            return Err(CliError::usage("gateway.retries counts attempts and must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(CliError::usage("at least one prompt variant is required"));
        }
        let p = &self.paths;
        for (name, path) in [
            ("corpus", &p.corpus),
            ("demos", &p.demos),
            ("extra_demos", &p.extra_demos),
            ("assertions", &p.assertions),
            ("embed_map", &p.embed_map),
            ("ratings", &p.ratings),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(CliError::usage(format!("paths.{name}: {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }

    /// Explicit id, or the first 12 hex digits of the config hash. Output
    /// and cache locations are left out so a moved checkout keeps its ids;
    /// the variant list and backend are left out so `--variant` and
    /// `--backend` reuse the outputs of earlier stages.
    pub fn run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        c.paths.cache_dir = PathBuf::new();
        c.variants.clear();
        c.gateway.backend = BackendKind::Replay;
        for p in [&mut c.paths.corpus, &mut c.paths.demos, &mut c.paths.extra_demos, &mut c.paths.assertions, &mut c.paths.embed_map, &mut c.paths.ratings]
            .into_iter()
            .flatten()
        {
            *p = p.file_name().map(PathBuf::from).unwrap_or_default();
        }
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..12].to_string()
    }

    /// Snapshot written into each stage directory; paths are shown relative
    /// to the output directory's parent where possible.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        let root = self.paths.output_dir.parent().map(Path::to_path_buf).unwrap_or_default();
        let rel = |p: &mut PathBuf| {
            if let Ok(r) = p.strip_prefix(&root) {
                *p = r.to_path_buf();
            }
        };
        for p in [&mut c.paths.corpus, &mut c.paths.demos, &mut c.paths.extra_demos, &mut c.paths.assertions, &mut c.paths.embed_map, &mut c.paths.ratings]
            .into_iter()
            .flatten()
        {
            rel(p);
        }
        rel(&mut c.paths.cache_dir);
        rel(&mut c.paths.output_dir);
        c.run_id = Some(self.run_id());
        serde_json::to_string_pretty(&c).expect("config serializes") + "\n"
    }
}
