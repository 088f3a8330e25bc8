//! Steps shared by the commands: loading, experiment planning, encoding and
//! the on-disk artifact formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use highlights_core::corpus::{
    build_vocabulary, compose_input, encode_document, kfold_partitions, load_dataset, preprocess, split,
    stratified_split, Document, InputType, SplitRatios, Vocabulary, MAX_TARGET_TOKENS,
};
use highlights_core::embedding::{read_cache, CacheProvider, EmbeddingProvider, RecordKey};
use highlights_core::model::TrainingExample;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};

pub const MANIFEST: &str = "manifest.json";
pub const GENERATED: &str = "generated.tsv";
pub const REFERENCES: &str = "references.tsv";

/// Share of a k-fold training portion held out for validation.
const KFOLD_VAL_RATIOS: SplitRatios = SplitRatios {
    train: 0.9,
    val: 0.1,
    test: 0.0,
};

pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub dropped: usize,
    /// Documents lacking a section the input type needs.
    pub filtered: usize,
}

/// Load the dataset and keep documents that have every section `cfg.input_type` needs.
pub fn load_corpus(cfg: &RunConfig) -> Result<LoadedCorpus> {
    let report = load_dataset(&cfg.dataset, cfg.strict)?;
    let total = report.documents.len();
    let documents: Vec<Document> = report
        .documents
        .into_iter()
        .filter(|d| compose_input(d, cfg.input_type).is_ok())
        .collect();
    let loaded = LoadedCorpus {
        filtered: total - documents.len(),
        dropped: report.dropped.len(),
        documents,
    };
    if loaded.dropped > 0 {
        eprintln!("dropped {} records without abstract or highlights", loaded.dropped);
    }
    if loaded.filtered > 0 {
        eprintln!(
            "skipped {} documents lacking the {} input",
            loaded.filtered, cfg.input_type
        );
    }
    Ok(loaded)
}

/// One model to train and the document groups it is evaluated on.
pub struct ModelPlan {
    pub name: String,
    pub train: Vec<Document>,
    pub val: Vec<Document>,
    pub evals: Vec<(String, Vec<Document>)>,
}

fn subject_of(d: &Document) -> Result<&str> {
    d.subject
        .as_deref()
        .with_context(|| format!("document `{}` has no subject label; case1/case2 need one", d.id))
}

fn by_subject(docs: &[Document]) -> Result<BTreeMap<String, Vec<Document>>> {
    let mut groups: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in docs {
        groups.entry(subject_of(d)?.to_string()).or_default().push(d.clone());
    }
    Ok(groups)
}

/// Directory-safe form of a group label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

pub fn plan(mode: Mode, docs: &[Document], seed: u64) -> Result<Vec<ModelPlan>> {
    let ratios = SplitRatios::default();
    Ok(match mode {
        Mode::Holdout => {
            let s = split(docs, ratios, seed)?;
            vec![ModelPlan {
                name: "model".into(),
                train: s.train,
                val: s.val,
                evals: vec![("test".into(), s.test)],
            }]
        }
        Mode::KFold(k) => kfold_partitions(docs, k, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, (rest, test))| {
                let inner = split(&rest, KFOLD_VAL_RATIOS, seed)?;
                let name = format!("fold-{}", i + 1);
                Ok(ModelPlan {
                    name: name.clone(),
                    train: inner.train,
                    val: inner.val,
                    evals: vec![(name, test)],
                })
            })
            .collect::<Result<_>>()?,
        Mode::Case1 => by_subject(docs)?
            .into_iter()
            .map(|(subject, group)| {
                let s = split(&group, ratios, seed)
                    .with_context(|| format!("cannot split subject `{subject}`"))?;
                Ok(ModelPlan {
                    name: slug(&subject),
                    train: s.train,
                    val: s.val,
                    evals: vec![(subject, s.test)],
                })
            })
            .collect::<Result<_>>()?,
        Mode::Case2 => {
            by_subject(docs)?;
            let s = stratified_split(docs, ratios, seed)?;
            let evals = by_subject(&s.test)?.into_iter().collect();
            vec![ModelPlan {
                name: "model".into(),
                train: s.train,
                val: s.val,
                evals,
            }]
        }
    })
}

/// Vocabulary over training sources and targets.
pub fn training_vocabulary(docs: &[Document], it: InputType, size: usize) -> Result<Vocabulary> {
    let mut seqs = Vec::with_capacity(2 * docs.len());
    for d in docs {
        seqs.push(compose_input(d, it)?);
        seqs.push(preprocess(&d.highlights));
    }
    Ok(build_vocabulary(&seqs, size)?)
}

/// Reference highlights as the metrics see them.
pub fn reference_tokens(doc: &Document) -> Vec<String> {
    let mut t = preprocess(&doc.highlights);
    t.truncate(MAX_TARGET_TOKENS);
    t
}

/// Cache-backed provider whose static table averages over `docs`.
pub fn cache_provider(path: &Path, docs: &[Document], it: InputType) -> Result<CacheProvider> {
    let cache = read_cache(path, None)
        .with_context(|| format!("cannot read embedding cache {}", path.display()))?;
    let seqs = docs
        .iter()
        .map(|d| Ok((RecordKey::new(d.id.clone(), it), compose_input(d, it)?)))
        .collect::<Result<Vec<_>>>()?;
    CacheProvider::new(cache, seqs).with_context(|| {
        format!("embedding cache {} does not cover the training documents", path.display())
    })
}

pub fn encode_examples(
    docs: &[Document],
    it: InputType,
    vocab: &Vocabulary,
    cache: Option<&CacheProvider>,
) -> Result<Vec<TrainingExample>> {
    docs.iter()
        .map(|d| {
            let encoding = encode_document(d, it, vocab)?;
            let source_rows = match cache {
                Some(c) => {
                    let tokens = compose_input(d, it)?;
                    let rows = c
                        .embed_sequence(&tokens, Some(&RecordKey::new(d.id.clone(), it)))
                        .with_context(|| {
                            format!(
                                "document `{}`: rebuild the cache with `highlights embed-cache` for this dataset",
                                d.id
                            )
                        })?;
                    Some(rows)
                }
                None => None,
            };
            Ok(TrainingExample {
                id: d.id.clone(),
                encoding,
                source_rows,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    /// Relative to the output directory.
    pub checkpoint: PathBuf,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSet {
    pub group: String,
    pub model: String,
    pub test_ids: Vec<String>,
}

/// Written by `train`; tells `generate` which model decodes which documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub models: Vec<ModelEntry>,
    pub eval_sets: Vec<EvalSet>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read {} (run `highlights train` first)", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }
}

pub fn ids(docs: &[Document]) -> Vec<String> {
    docs.iter().map(|d| d.id.clone()).collect()
}

/// One line of a generated or reference file.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRow {
    pub id: String,
    pub group: String,
    pub text: String,
}

/// Write `id<TAB>group<TAB>text` rows after a `#`-prefixed JSON metadata line.
pub fn write_rows(path: &Path, meta: &serde_json::Value, rows: &[TextRow]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    writeln!(f, "# {meta}")?;
    for r in rows {
        for field in [&r.id, &r.group, &r.text] {
            if field.contains(['\t', '\n']) {
                bail!("field {field:?} contains a tab or newline");
            }
        }
        writeln!(f, "{}\t{}\t{}", r.id, r.group, r.text)?;
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<TextRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(group), Some(text)) => rows.push(TextRow {
                id: id.into(),
                group: group.into(),
                text: text.into(),
            }),
            _ => bail!("{}:{}: expected id, group and text separated by tabs", path.display(), i + 1),
        }
    }
    Ok(rows)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
