//! One function per subcommand.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use highlights_core::corpus::{compose_input, corpus_stats, encode_document, join_tokens, CorpusStats, Document, InputType, MAX_TARGET_TOKENS};
use highlights_core::embedding::{
    read_cache, write_cache, CacheProvider, CacheRecord, ContextualEncoder, EmbeddingCache, EmbeddingProvider,
    LiveProvider, RecordKey, SyntheticEncoder,
};
use highlights_core::energy::{carbon_footprint, session_report, EnergyParams, SessionLog};
use highlights_core::metrics::{evaluate_corpus, BertScoreNormalization, MetricReport};
use highlights_core::model::{decode_beam, train, Checkpoint, EmbeddingMode, LogRecord, Params, TrainHooks};
use highlights_core::{Tensor, CODE_VERSION};
use serde_json::json;

use crate::config::{Mode, ProviderSpec, RunConfig};
use crate::pipeline::{
    cache_provider, encode_examples, ids, load_corpus, plan, read_rows, reference_tokens, training_vocabulary,
    write_json, write_rows, EvalSet, Manifest, ModelEntry, TextRow, GENERATED, MANIFEST, REFERENCES,
};

/// Seed of the synthetic encoder used for BERTScore, fixed so scores do not
/// depend on the run seed.
const EVAL_ENCODER_SEED: u64 = 0;

fn meta(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "code_version": CODE_VERSION,
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec()) + "\n";
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    out += "\n";
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
        out += "\n";
    }
    out
}

pub fn stats(cfg: &RunConfig) -> Result<CorpusStats> {
    cfg.check_paths()?;
    let corpus = load_corpus(cfg)?;
    ensure!(!corpus.documents.is_empty(), "no usable documents in {}", cfg.dataset.display());
    let stats = corpus_stats(&corpus.documents, cfg.input_type)
        .with_context(|| format!("cannot compute statistics for {}", cfg.dataset.display()))?;
    let name = cfg
        .dataset
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    let table = format_table(&CorpusStats::HEADER, &[stats.row(&name).to_vec()]);
    print!("{table}");

    create_out(&cfg.out)?;
    let mut m = meta(cfg);
    fs::write(cfg.out.join("stats.txt"), format!("# {m}\n{table}"))?;
    m["dataset"] = json!(name);
    m["n_documents"] = json!(corpus.documents.len());
    m["dropped"] = json!(corpus.dropped);
    m["filtered"] = json!(corpus.filtered);
    m["stats"] = serde_json::to_value(&stats)?;
    write_json(&cfg.out.join("stats.json"), &m)?;
    Ok(stats)
}

/// Streams the training log and writes periodic checkpoints.
struct RunHooks<'a> {
    log: BufWriter<fs::File>,
    latest: PathBuf,
    template: &'a Checkpoint,
    start: Instant,
    iters_per_epoch: usize,
    epoch_ends: Vec<Duration>,
    error: Option<anyhow::Error>,
}

impl RunHooks<'_> {
    fn record(&mut self, r: Result<()>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e);
        }
    }
}

impl TrainHooks for RunHooks<'_> {
    fn on_iteration(&mut self, record: &LogRecord) {
        if record.iter.is_multiple_of(self.iters_per_epoch) {
            self.epoch_ends.push(self.start.elapsed());
        }
        let r = serde_json::to_string(record)
            .map_err(anyhow::Error::from)
            .and_then(|line| writeln!(self.log, "{line}").map_err(Into::into));
        self.record(r);
    }

    fn on_checkpoint(&mut self, iter: usize, phase: u8, params: &Params<f32>, val_loss: Option<f64>) {
        if let Some(v) = val_loss {
            eprintln!("  iter {iter:>6}  phase {phase}  val loss {v:.4}");
        }
        let mut ck = self.template.clone();
        ck.params = params.clone();
        ck.meta["iter"] = json!(iter);
        ck.meta["phase"] = json!(phase);
        ck.meta["val_loss"] = json!(val_loss);
        let r = ck.save(&self.latest).map_err(Into::into);
        self.record(r);
    }
}

pub fn run_train(cfg: &RunConfig) -> Result<Manifest> {
    cfg.check_paths()?;
    let corpus = load_corpus(cfg)?;
    ensure!(!corpus.documents.is_empty(), "no usable documents in {}", cfg.dataset.display());
    let plans = plan(cfg.mode, &corpus.documents, cfg.seed)?;
    create_out(&cfg.out)?;

    let mut manifest = Manifest {
        code_version: CODE_VERSION.into(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        models: Vec::new(),
        eval_sets: Vec::new(),
    };
    for p in &plans {
        ensure!(!p.train.is_empty(), "model `{}` has no training documents", p.name);
        eprintln!(
            "training `{}` on {} documents ({} validation)",
            p.name,
            p.train.len(),
            p.val.len()
        );
        let dir = cfg.out.join(&p.name);
        create_out(&dir)?;
        let checkpoint = train_one(cfg, &p.name, &p.train, &p.val, &dir)?;
        manifest.models.push(ModelEntry {
            name: p.name.clone(),
            checkpoint: Path::new(&p.name).join(checkpoint),
            train_ids: ids(&p.train),
            val_ids: ids(&p.val),
        });
        for (group, docs) in &p.evals {
            manifest.eval_sets.push(EvalSet {
                group: group.clone(),
                model: p.name.clone(),
                test_ids: ids(docs),
            });
        }
    }
    write_json(&cfg.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Train one model into `dir`; returns the checkpoint file name.
fn train_one(cfg: &RunConfig, name: &str, train_docs: &[Document], val_docs: &[Document], dir: &Path) -> Result<&'static str> {
    let it = cfg.input_type;
    let mut model = cfg.model.clone();
    let vocab = training_vocabulary(train_docs, it, model.vocab_size)?;
    let (cache, static_table) = match &cfg.provider {
        ProviderSpec::Learned => {
            model.embedding = EmbeddingMode::Learned;
            (None, None)
        }
        ProviderSpec::Cache(path) => {
            let provider = cache_provider(path, train_docs, it)?.with_vocabulary(vocab.clone());
            model.embedding = EmbeddingMode::Contextual;
            model.emb_dim = provider.dim();
            let table = provider.static_table(&vocab);
            (Some(provider), Some(table))
        }
    };
    let train_set = encode_examples(train_docs, it, &vocab, cache.as_ref())?;
    let val_set = encode_examples(val_docs, it, &vocab, cache.as_ref())?;
    let init = Params::init(&model, vocab.len(), static_table.as_ref(), cfg.seed)?;

    let mut template = Checkpoint::new(model.clone(), cfg.seed, vocab, init.clone());
    template.meta = json!({ "model": name, "input_type": it.as_str(), "mode": cfg.mode.to_string() });

    let mut log = BufWriter::new(fs::File::create(dir.join("train_log.jsonl"))?);
    let mut head = meta(cfg);
    head["model"] = json!(name);
    head["model_config"] = serde_json::to_value(&model)?;
    writeln!(log, "{}", json!({ "meta": head }))?;

    let batch = model.batch_size.min(train_set.len()).max(1);
    let mut hooks = RunHooks {
        log,
        latest: dir.join("latest.ckpt"),
        template: &template,
        start: Instant::now(),
        iters_per_epoch: train_set.len().div_ceil(batch),
        epoch_ends: Vec::new(),
        error: None,
    };
    let outcome = train(init, &model, &train_set, &val_set, cfg.seed, &mut hooks)
        .with_context(|| format!("training `{name}` failed"))?;
    let wall_clock = hooks.start.elapsed();
    if let Some(e) = hooks.error.take() {
        return Err(e.context("cannot write training artifacts"));
    }
    hooks.log.flush()?;

    let mut best = template.clone();
    best.params = outcome.best;
    best.meta["iter"] = json!(outcome.best_iter);
    best.meta["val_loss"] = json!(outcome.best_val_loss);
    best.save(dir.join("model.ckpt"))?;

    let last = outcome.log.last();
    let session = SessionLog {
        wall_clock,
        samples: Vec::new(),
        epoch_ends: hooks.epoch_ends,
    };
    let mut run = meta(cfg);
    run["model"] = json!(name);
    run["wall_clock_secs"] = json!(wall_clock.as_secs_f64());
    run["iterations"] = json!(outcome.log.len());
    run["iters_per_epoch"] = json!(hooks.iters_per_epoch);
    run["best_iter"] = json!(outcome.best_iter);
    run["best_val_loss"] = json!(outcome.best_val_loss);
    run["final_nll"] = json!(last.map(|r| r.nll));
    run["final_cov_loss"] = json!(last.map(|r| r.cov_loss));
    run["session"] = serde_json::to_value(&session)?;
    write_json(&dir.join("run.json"), &run)?;
    eprintln!(
        "  done in {:.1}s, final nll {:.4}",
        wall_clock.as_secs_f64(),
        last.map_or(f64::NAN, |r| r.nll)
    );
    Ok("model.ckpt")
}

pub fn generate(cfg: &RunConfig) -> Result<usize> {
    cfg.check_paths()?;
    let manifest = Manifest::load(&cfg.out)?;
    let corpus = load_corpus(cfg)?;
    let by_id: HashMap<&str, &Document> = corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let cache = match &cfg.provider {
        ProviderSpec::Cache(path) => Some(
            CacheProvider::new(read_cache(path, None)?, std::iter::empty())
                .with_context(|| format!("cannot read embedding cache {}", path.display()))?,
        ),
        ProviderSpec::Learned => None,
    };
    let max_len = cfg.model.max_decode_len.min(MAX_TARGET_TOKENS);
    let it = cfg.input_type;

    let mut generated = Vec::new();
    let mut references = Vec::new();
    let mut loaded: HashMap<&str, Checkpoint> = HashMap::new();
    for set in &manifest.eval_sets {
        if !loaded.contains_key(set.model.as_str()) {
            let entry = manifest
                .models
                .iter()
                .find(|m| m.name == set.model)
                .with_context(|| format!("manifest has no model `{}`", set.model))?;
            let path = cfg.out.join(&entry.checkpoint);
            let ck = Checkpoint::load(&path).with_context(|| format!("cannot load {}", path.display()))?;
            loaded.insert(&set.model, ck);
        }
        let ck = &loaded[set.model.as_str()];
        let contextual = ck.config.embedding == EmbeddingMode::Contextual;
        ensure!(
            !contextual || cache.is_some(),
            "model `{}` was trained on contextual embeddings; pass --provider cache:PATH",
            set.model
        );
        eprintln!("decoding {} documents of `{}`", set.test_ids.len(), set.group);
        for id in &set.test_ids {
            let doc = by_id.get(id.as_str()).with_context(|| {
                format!("id mismatch: document `{id}` listed in the manifest is not in {}", cfg.dataset.display())
            })?;
            let ex = encode_document(doc, it, &ck.vocab)?;
            let rows = match (&cache, contextual) {
                (Some(c), true) => {
                    let tokens = compose_input(doc, it)?;
                    Some(
                        c.embed_sequence(&tokens, Some(&RecordKey::new(id.clone(), it)))
                            .with_context(|| format!("document `{id}`"))?,
                    )
                }
                _ => None,
            };
            let out = decode_beam(&ck.params, &ex, rows.as_ref(), &ck.vocab, cfg.model.beam_size, max_len)?;
            generated.push(TextRow {
                id: id.clone(),
                group: set.group.clone(),
                text: join_tokens(&out.tokens),
            });
            references.push(TextRow {
                id: id.clone(),
                group: set.group.clone(),
                text: join_tokens(&reference_tokens(doc)),
            });
        }
    }
    let m = meta(cfg);
    write_rows(&cfg.out.join(GENERATED), &m, &generated)?;
    write_rows(&cfg.out.join(REFERENCES), &m, &references)?;
    Ok(generated.len())
}

/// Report rows in display order.
pub fn evaluate(cfg: &RunConfig, generated: &Path, references: &Path) -> Result<Vec<(String, MetricReport)>> {
    let gen = read_rows(generated)?;
    let refs = read_rows(references)?;
    ensure!(
        gen.len() == refs.len(),
        "alignment mismatch: {} has {} rows but {} has {}",
        generated.display(),
        gen.len(),
        references.display(),
        refs.len()
    );
    ensure!(!gen.is_empty(), "{} has no rows", generated.display());
    let mut groups: Vec<(String, Vec<(Vec<String>, Vec<String>)>)> = Vec::new();
    for (n, (g, r)) in gen.iter().zip(&refs).enumerate() {
        if g.id != r.id || g.group != r.group {
            bail!(
                "alignment mismatch at row {}: generated `{}` ({}) vs reference `{}` ({})",
                n + 1,
                g.id,
                g.group,
                r.id,
                r.group
            );
        }
        let pair = (tokens(&g.text), tokens(&r.text));
        match groups.iter_mut().find(|(name, _)| *name == g.group) {
            Some((_, pairs)) => pairs.push(pair),
            None => groups.push((g.group.clone(), vec![pair])),
        }
    }

    let provider = LiveProvider::new(Box::new(SyntheticEncoder::new(cfg.eval_embedding.dim, EVAL_ENCODER_SEED)));
    let norm = BertScoreNormalization::Standard;
    let mut rows = Vec::new();
    for (group, pairs) in &groups {
        rows.push((group.clone(), evaluate_corpus(pairs, &provider, norm)?));
    }
    match cfg.mode {
        Mode::KFold(_) => {
            let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
            rows.push(("mean".into(), MetricReport::mean(&reports)));
        }
        Mode::Case1 | Mode::Case2 => {
            let all: Vec<_> = groups.into_iter().flat_map(|(_, p)| p).collect();
            rows.push(("all".into(), evaluate_corpus(&all, &provider, norm)?));
        }
        Mode::Holdout => {}
    }

    let mut table = String::from(MetricReport::HEADER);
    table.push('\n');
    for (g, r) in &rows {
        table += &r.row(g);
        table.push('\n');
    }
    print!("{table}");

    create_out(&cfg.out)?;
    let m = meta(cfg);
    fs::write(cfg.out.join("report.txt"), format!("# {m}\n{table}"))?;
    let mut jsonl = format!("{}\n", json!({ "meta": m }));
    for (g, r) in &rows {
        let mut line = serde_json::Map::new();
        line.insert("group".into(), json!(g));
        line.insert("n".into(), json!(r.n_examples));
        for (k, v) in r.entries() {
            line.insert(k.into(), json!(v));
        }
        jsonl += &serde_json::Value::Object(line).to_string();
        jsonl.push('\n');
    }
    fs::write(cfg.out.join("report.jsonl"), jsonl)?;
    Ok(rows)
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

/// Load energy parameters from TOML or JSON (chosen by extension).
pub fn load_energy_params(path: &Path) -> Result<EnergyParams> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let params = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    Ok(params)
}

/// Footprint from explicit hours or from a training run's `run.json`.
pub fn carbon(params: Option<&Path>, hours: Option<f64>, run: Option<&Path>) -> Result<String> {
    let mut p = match params {
        Some(path) => load_energy_params(path).with_context(|| format!("invalid energy parameters {}", path.display()))?,
        None => EnergyParams::default(),
    };
    let report = match (hours, run) {
        (Some(_), Some(_)) => bail!("give either --hours or --run, not both"),
        (Some(h), None) => {
            p.hours = h;
            carbon_footprint(&p)?
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            let session: SessionLog = match value.get_mut("session") {
                Some(s) => serde_json::from_value(s.take())?,
                None => serde_json::from_value(value)?,
            };
            session_report(&session, &p)?
        }
        (None, None) => carbon_footprint(&p)?,
    };
    Ok(report.to_json_line())
}

/// Encode every document with `encoder` into a cache keyed by `it`.
pub fn build_cache(docs: &[Document], it: InputType, encoder: &dyn ContextualEncoder) -> Result<EmbeddingCache> {
    let mut cache = EmbeddingCache::new(encoder.dim());
    for d in docs {
        let tokens = compose_input(d, it)?;
        let enc = encoder.encode(&tokens);
        let dim = encoder.dim();
        let record = CacheRecord {
            sentence: enc.row(0).to_vec(),
            tokens: Tensor::from_vec(&[tokens.len(), dim], enc.data[dim..].to_vec()),
        };
        cache.insert(RecordKey::new(d.id.clone(), it), record)?;
    }
    Ok(cache)
}

pub fn embed_cache(cfg: &RunConfig, dim: usize, encoder_seed: u64, output: &Path) -> Result<usize> {
    cfg.check_paths()?;
    let corpus = load_corpus(cfg)?;
    let cache = build_cache(&corpus.documents, cfg.input_type, &SyntheticEncoder::new(dim, encoder_seed))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out(parent)?;
    }
    write_cache(output, &cache)?;
    Ok(cache.len())
}
