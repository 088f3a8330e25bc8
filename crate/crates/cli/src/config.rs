//! Run configuration: a TOML file merged with command-line flags.
//!
//! ```toml
//! dataset = "corpus.jsonl"
//! input_type = "abstract"
//! provider = "learned"          # or "cache:embeddings.embc"
//! mode = "holdout"              # holdout | kfold:K | case1 | case2
//! seed = 1
//! out = "runs/toy"
//!
//! [model]
//! hidden_size = 64
//! ```
//!
//! Relative paths in the file resolve against the file's directory; paths
//! given as flags resolve against the working directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use highlights_core::corpus::InputType;
use highlights_core::embedding::CONTEXTUAL_DIM;
use highlights_core::model::ModelConfig;
use serde::{Deserialize, Serialize, Serializer};

/// How documents are divided into training and evaluation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One 80:10:10 split.
    Holdout,
    /// K folds; each fold is the test set of one model.
    KFold(usize),
    /// One model per subject cluster, each evaluated on its own cluster.
    Case1,
    /// One model over all clusters, evaluated per cluster.
    Case2,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Holdout => f.write_str("holdout"),
            Mode::KFold(k) => write!(f, "kfold:{k}"),
            Mode::Case1 => f.write_str("case1"),
            Mode::Case2 => f.write_str("case2"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "holdout" => Ok(Mode::Holdout),
            "case1" => Ok(Mode::Case1),
            "case2" => Ok(Mode::Case2),
            _ => match s.strip_prefix("kfold:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 2 => Ok(Mode::KFold(k)),
                Some(_) => Err(format!("`{s}`: the fold count must be an integer >= 2")),
                None => Err(format!(
                    "unknown mode `{s}` (expected holdout, kfold:K, case1 or case2)"
                )),
            },
        }
    }
}

/// Where source-side embeddings come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Learned,
    /// Precomputed contextual vectors in an embedding cache file.
    Cache(PathBuf),
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Learned => f.write_str("learned"),
            ProviderSpec::Cache(p) => write!(f, "cache:{}", p.display()),
        }
    }
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "learned" => Ok(ProviderSpec::Learned),
            _ => match s.strip_prefix("cache:") {
                Some(p) if !p.is_empty() => Ok(ProviderSpec::Cache(PathBuf::from(p))),
                _ => Err(format!("unknown provider `{s}` (expected learned or cache:PATH)")),
            },
        }
    }
}

/// Encoder used for BERTScore during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalEmbedding {
    pub dim: usize,
}

impl Default for EvalEmbedding {
    fn default() -> Self {
        Self { dim: CONTEXTUAL_DIM }
    }
}

impl fmt::Display for EvalEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "synthetic:{}", self.dim)
    }
}

impl FromStr for EvalEmbedding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let dim = match s {
            "synthetic" => CONTEXTUAL_DIM,
            _ => s
                .strip_prefix("synthetic:")
                .and_then(|d| d.parse().ok())
                .filter(|&d: &usize| d > 0)
                .ok_or_else(|| format!("unknown evaluation embedding `{s}` (expected synthetic[:DIM])"))?,
        };
        Ok(Self { dim })
    }
}

fn as_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Fully resolved settings shared by the pipeline commands.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(serialize_with = "as_display")]
    pub input_type: InputType,
    #[serde(serialize_with = "as_display")]
    pub provider: ProviderSpec,
    #[serde(serialize_with = "as_display")]
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub strict: bool,
    #[serde(serialize_with = "as_display")]
    pub eval_embedding: EvalEmbedding,
    pub model: ModelConfig,
}

impl RunConfig {
    /// Fail early when a referenced input file is missing.
    pub fn check_paths(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            bail!("no dataset given (use --dataset or set `dataset` in the config)");
        }
        if !self.dataset.is_file() {
            bail!("dataset {} does not exist", self.dataset.display());
        }
        if let ProviderSpec::Cache(p) = &self.provider {
            if !p.is_file() {
                bail!(
                    "embedding cache {} does not exist (build one with `highlights embed-cache`)",
                    p.display()
                );
            }
        }
        Ok(())
    }
}

/// On-disk form; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    input_type: Option<String>,
    provider: Option<String>,
    mode: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    strict: Option<bool>,
    eval_embedding: Option<String>,
    model: Option<ModelConfig>,
}

/// Flags shared by `stats`, `train`, `generate` and `evaluate`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// abstract | conclusion | introduction | abstract+conclusion | introduction+conclusion
    #[arg(long)]
    pub input_type: Option<InputType>,
    /// learned | cache:PATH
    #[arg(long)]
    pub provider: Option<ProviderSpec>,
    /// holdout | kfold:K | case1 | case2
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Abort on records lacking an abstract or highlights instead of dropping them.
    #[arg(long)]
    pub strict: bool,
    /// Encoder for BERTScore: synthetic[:DIM].
    #[arg(long)]
    pub eval_embedding: Option<EvalEmbedding>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub phase1_iters: Option<usize>,
    #[arg(long)]
    pub phase2_iters: Option<usize>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Learned embedding width (contextual runs take the cache width).
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Coverage-loss weight for phase 2.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Skip the coverage phase.
    #[arg(long)]
    pub no_coverage: bool,
}

impl ModelArgs {
    fn apply(&self, m: &mut ModelConfig) {
        let set = |dst: &mut usize, src: Option<usize>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut m.phase1_iters, self.phase1_iters);
        set(&mut m.phase2_iters, self.phase2_iters);
        set(&mut m.hidden_size, self.hidden_size);
        set(&mut m.emb_dim, self.emb_dim);
        set(&mut m.batch_size, self.batch_size);
        set(&mut m.beam_size, self.beam_size);
        set(&mut m.vocab_size, self.vocab_size);
        set(&mut m.checkpoint_every, self.checkpoint_every);
        if let Some(l) = self.lambda {
            m.lambda_coverage = l;
        }
        if self.no_coverage {
            m.use_coverage = false;
        }
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn parse_field<T: FromStr<Err = String>>(key: &str, v: Option<String>) -> Result<Option<T>> {
    v.map(|s| s.parse().map_err(|e: String| anyhow::anyhow!("config key `{key}`: {e}")))
        .transpose()
}

impl RunArgs {
    /// Merge the config file (if any) with the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let (file, base) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                let file: FileConfig = toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (file, base)
            }
            None => (FileConfig::default(), PathBuf::new()),
        };

        let file_provider = parse_field::<ProviderSpec>("provider", file.provider)?.map(|p| match p {
            ProviderSpec::Cache(path) => ProviderSpec::Cache(resolve(&base, path)),
            other => other,
        });
        let dataset = self
            .dataset
            .clone()
            .or_else(|| file.dataset.map(|p| resolve(&base, p)))
            .unwrap_or_default();
        let mut model = file.model.unwrap_or_default();
        self.model.apply(&mut model);

        Ok(RunConfig {
            dataset,
            input_type: self
                .input_type
                .or(parse_field("input_type", file.input_type)?)
                .unwrap_or(InputType::AbstractOnly),
            provider: self
                .provider
                .clone()
                .or(file_provider)
                .unwrap_or(ProviderSpec::Learned),
            mode: self.mode.or(parse_field("mode", file.mode)?).unwrap_or(Mode::Holdout),
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: self
                .out
                .clone()
                .or_else(|| file.out.map(|p| resolve(&base, p)))
                .unwrap_or_else(|| PathBuf::from("runs")),
            strict: self.strict || file.strict.unwrap_or(false),
            eval_embedding: self
                .eval_embedding
                .or(parse_field("eval_embedding", file.eval_embedding)?)
                .unwrap_or_default(),
            model,
        })
    }
}
