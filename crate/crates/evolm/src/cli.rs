//! Command-line pipeline: `ingest`, `tokenize`, `bpe-sweep`, `evolve`,
//! `analyze`, `report`.
//!
//! All verbs read one TOML or JSON config file; `--set key=value` overrides
//! individual existing keys. Artifacts flow through the store
//! (`EVOLM_STORE_ROOT` or `store.root`): `ingest` writes corpus splits,
//! `tokenize` opens a run with tokenizer and token streams, `evolve` fills
//! the run with generation records, `analyze` fits the normalized-loss
//! models across runs, and `report` renders per-run CSV tables and SVG
//! charts. Progress is streamed as line-oriented JSON on stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, build_regression_dataset, collect_observations, factor_table, fit_gamma_glm,
    generation_summary, hyperparameter_spearman, LossObservation, ModelFit,
};
use crate::corpus::{ingest_corpus, CorpusManifest, CorpusSplit, LanguageProfile};
use crate::evolve::{
    run_evolution, ArchCostModel, EvolutionConfig, EvolutionSink, EvolveError, GenerationRecord,
    MockFitness, SearchSpace, SimulationResult, TrainFitness,
};
use crate::model::{Chromosome, FitnessRecord, GeneBounds, TrainConfig};
use crate::report::{bar_chart, line_chart, Series};
use crate::store::{ArtifactKind, ArtifactStore, LocalStore, RunId, StoreError};
use crate::tokenizer::{
    bpe_vocab_sweep, load_external_tokenizer, read_stream, token_entropy,
    train_bpe, train_character_tokenizer, train_word_tokenizer, write_stream, EntropyAdjustment,
    TokenMethod, TokenizedCorpus, Tokenizer,
};

pub const STORE_ROOT_ENV: &str = "EVOLM_STORE_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad config ({key}): {msg}")]
    BadConfig { key: String, msg: String },
    #[error("missing prerequisite artifact: {name}")]
    MissingArtifact { name: String },
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadConfig { .. } => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Missing { run, kind, key } => CliError::MissingArtifact {
                name: format!("{key} ({kind:?}) in {run}"),
            },
            StoreError::RunNotFound(id) => CliError::MissingArtifact {
                name: format!("run {id}"),
            },
            other => CliError::Failure(other.to_string()),
        }
    }
}

macro_rules! impl_failure_from {
    ($($ty:ty),+) => {$(
        impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Failure(err.to_string())
            }
        }
    )+};
}

impl_failure_from!(
    crate::corpus::CorpusError,
    crate::tokenizer::TokenizerError,
    crate::tokenizer::SweepError,
    crate::model::ModelError,
    EvolveError,
    crate::analysis::AnalysisError,
    serde_json::Error
);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Ingest,
    Tokenize,
    BpeSweep,
    Evolve,
    Analyze,
    Report,
}

/// A parsed invocation: verb, config file, `key=value` overrides.
#[derive(Debug, Clone)]
pub struct Command {
    pub verb: Verb,
    pub config_path: PathBuf,
    pub overrides: Vec<String>,
}

// ---------------------------------------------------------------------------
// config file schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppConfig {
    corpus: CorpusSection,
    #[serde(default)]
    tokenize: TokenizeSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    evolve: EvolveSection,
    #[serde(default)]
    space: SpaceSection,
    #[serde(default)]
    analysis: AnalysisSection,
    #[serde(default)]
    store: StoreSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSection {
    name: String,
    root: Option<PathBuf>,
    #[serde(default = "default_language")]
    language: String,
    #[serde(default)]
    strip_comments: bool,
    #[serde(default = "default_split_ratio")]
    split_ratio: f64,
}

fn default_language() -> String {
    "coq".into()
}

fn default_split_ratio() -> f64 {
    0.8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TokenizeSection {
    method: String,
    bpe_vocab_size: usize,
    external_vocab: Option<PathBuf>,
    external_merges: Option<PathBuf>,
}

impl Default for TokenizeSection {
    fn default() -> Self {
        Self {
            method: "character".into(),
            bpe_vocab_size: 512,
            external_vocab: None,
            external_merges: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepSection {
    n_points: usize,
    iters: usize,
    n_boot: usize,
    adjustment: String,
    probe_n_embd: usize,
    probe_block_size: usize,
    seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_points: 10,
            iters: 1000,
            n_boot: 30,
            adjustment: "ratio".into(),
            probe_n_embd: 32,
            probe_block_size: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvolveSection {
    n_generations: usize,
    population_size: usize,
    elite_percent: f64,
    crossover_probability: f64,
    mutation_probability: f64,
    max_iters: usize,
    seed: u64,
    elitism: bool,
    eval_iters: usize,
    n_boot: usize,
    decay_lr: bool,
    warmup_iters: Option<usize>,
    lr_decay_iters: Option<usize>,
    mock_fitness: bool,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            n_generations: 15,
            population_size: 10,
            elite_percent: 0.2,
            crossover_probability: 0.5,
            mutation_probability: 0.5,
            max_iters: 1000,
            seed: 42,
            elitism: false,
            eval_iters: 10,
            n_boot: 30,
            decay_lr: true,
            warmup_iters: None,
            lr_decay_iters: None,
            mock_fitness: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpaceSection {
    preset: String,
    memory_budget_bytes: u64,
    vocab_upper_bound: usize,
    n_layer: Option<[usize; 2]>,
    n_head_choices: Option<Vec<usize>>,
    n_embd_log2: Option<[u32; 2]>,
    batch_log2: Option<[u32; 2]>,
    block_log2: Option<[u32; 2]>,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            memory_budget_bytes: 16 * 1024 * 1024 * 1024,
            vocab_upper_bound: 50_000,
            n_layer: None,
            n_head_choices: None,
            n_embd_log2: None,
            batch_log2: None,
            block_log2: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AnalysisSection {
    baseline_corpus: Option<String>,
    runs: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StoreSection {
    root: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// config loading and overrides

fn parse_config_value(path: &Path) -> Result<toml::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::BadConfig {
        key: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::BadConfig {
            key: path.display().to_string(),
            msg: format!("invalid JSON: {e}"),
        })
    } else {
        toml::from_str(&text).map_err(|e| CliError::BadConfig {
            key: path.display().to_string(),
            msg: format!("invalid TOML: {e}"),
        })
    }
}

fn toml_literal(raw: &str) -> toml::Value {
    let parsed: Option<toml::Value> = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| t.get("v").cloned());
    parsed.unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override; the key must already exist.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let Some((key, raw)) = spec.split_once('=') else {
        return Err(CliError::BadConfig {
            key: spec.to_string(),
            msg: "overrides must have the form key=value".into(),
        });
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = &mut *root;
    for part in &parts[..parts.len() - 1] {
        cur = cur.get_mut(part).ok_or_else(|| CliError::BadConfig {
            key: key.to_string(),
            msg: format!("section {part:?} not present in config"),
        })?;
    }
    let table = cur.as_table_mut().ok_or_else(|| CliError::BadConfig {
        key: key.to_string(),
        msg: "override path does not lead to a table".into(),
    })?;
    let last = parts[parts.len() - 1];
    let slot = table.get_mut(last).ok_or_else(|| CliError::BadConfig {
        key: key.to_string(),
        msg: "overrides must reference existing config keys".into(),
    })?;
    *slot = toml_literal(raw.trim());
    Ok(())
}

fn load_config(cmd: &Command) -> Result<AppConfig, CliError> {
    let mut value = parse_config_value(&cmd.config_path)?;
    for ov in &cmd.overrides {
        apply_override(&mut value, ov)?;
    }
    value.try_into().map_err(|e: toml::de::Error| CliError::BadConfig {
        key: cmd.config_path.display().to_string(),
        msg: e.to_string(),
    })
}

fn open_store(cfg: &AppConfig) -> Result<LocalStore, CliError> {
    let root = cfg
        .store
        .root
        .clone()
        .or_else(|| std::env::var_os(STORE_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("./evolm-store"));
    LocalStore::open(root).map_err(CliError::from)
}

fn parse_method(cfg: &AppConfig) -> Result<TokenMethod, CliError> {
    TokenMethod::from_str(&cfg.tokenize.method).map_err(|msg| CliError::BadConfig {
        key: "tokenize.method".into(),
        msg,
    })
}

fn build_space(cfg: &AppConfig) -> Result<SearchSpace, CliError> {
    let mut bounds = match cfg.space.preset.as_str() {
        "desk" => GeneBounds::desk_scale(),
        "table3" => GeneBounds::default(),
        other => {
            return Err(CliError::BadConfig {
                key: "space.preset".into(),
                msg: format!("unknown preset {other:?}; use \"desk\" or \"table3\""),
            })
        }
    };
    if let Some([lo, hi]) = cfg.space.n_layer {
        bounds.n_layer = (lo, hi);
    }
    if let Some(choices) = &cfg.space.n_head_choices {
        bounds.n_head_choices = choices.clone();
    }
    if let Some([lo, hi]) = cfg.space.n_embd_log2 {
        bounds.n_embd_log2 = (lo, hi);
    }
    if let Some([lo, hi]) = cfg.space.batch_log2 {
        bounds.batch_log2 = (lo, hi);
    }
    if let Some([lo, hi]) = cfg.space.block_log2 {
        bounds.block_log2 = (lo, hi);
    }
    let cost = ArchCostModel {
        vocab_upper_bound: cfg.space.vocab_upper_bound,
        bytes_per_param: 8,
    };
    SearchSpace::new(bounds, &cost, cfg.space.memory_budget_bytes).map_err(|e| {
        CliError::BadConfig {
            key: "space.memory_budget_bytes".into(),
            msg: e.to_string(),
        }
    })
}

fn evolution_config(cfg: &AppConfig) -> EvolutionConfig {
    EvolutionConfig {
        n_generations: cfg.evolve.n_generations,
        population_size: cfg.evolve.population_size,
        elite_percent: cfg.evolve.elite_percent,
        crossover_probability: cfg.evolve.crossover_probability,
        mutation_probability: cfg.evolve.mutation_probability,
        max_iters: cfg.evolve.max_iters,
        seed: cfg.evolve.seed,
        elitism: cfg.evolve.elitism,
    }
}

fn train_config(cfg: &AppConfig) -> TrainConfig {
    let max_iters = cfg.evolve.max_iters;
    TrainConfig {
        max_iters,
        eval_iters: cfg.evolve.eval_iters,
        n_boot: cfg.evolve.n_boot,
        warmup_iters: cfg.evolve.warmup_iters.unwrap_or(max_iters / 2),
        lr_decay_iters: cfg.evolve.lr_decay_iters.unwrap_or(max_iters),
        decay_lr: cfg.evolve.decay_lr,
        seed: cfg.evolve.seed,
    }
}

fn progress(event: serde_json::Value) {
    println!("{event}");
}

// ---------------------------------------------------------------------------
// persisted side metadata

#[derive(Debug, Serialize, Deserialize)]
struct EntropyInfo {
    corpus: String,
    method: String,
    vocab_size: usize,
    baseline_entropy_bits: f64,
}

const SIMULATION_JSON: &str = "simulation.json";
const ENTROPY_JSON: &str = "entropy.json";
const CONFIG_JSON: &str = "config.json";

// ---------------------------------------------------------------------------
// verbs

fn cmd_ingest(cfg: &AppConfig) -> Result<(), CliError> {
    let root = cfg.corpus.root.as_ref().ok_or_else(|| CliError::BadConfig {
        key: "corpus.root".into(),
        msg: "ingest needs the corpus root directory".into(),
    })?;
    let profile =
        LanguageProfile::by_name(&cfg.corpus.language).ok_or_else(|| CliError::BadConfig {
            key: "corpus.language".into(),
            msg: format!(
                "unknown language {:?}; built-ins: lean, coq, hol_light, hol4",
                cfg.corpus.language
            ),
        })?;
    let corpus = ingest_corpus(root, &profile, cfg.corpus.strip_comments)?;
    let split = crate::corpus::split_corpus(&corpus, cfg.corpus.split_ratio)?;
    let manifest = CorpusManifest::new(&cfg.corpus.name, &corpus, &split, cfg.corpus.strip_comments);

    let store = open_store(cfg)?;
    let name = &cfg.corpus.name;
    store.put_corpus_file(name, "train.txt", split.train_text.as_bytes(), true)?;
    store.put_corpus_file(name, "valid.txt", split.valid_text.as_bytes(), true)?;
    store.put_corpus_file(
        name,
        "manifest.json",
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
        true,
    )?;
    progress(serde_json::json!({
        "event": "ingested",
        "corpus": name,
        "files": manifest.file_count,
        "total_chars": manifest.total_chars,
        "train_chars": manifest.train_chars,
        "valid_chars": manifest.valid_chars,
        "sha256": manifest.content_sha256,
    }));
    Ok(())
}

fn load_split(store: &LocalStore, corpus: &str) -> Result<CorpusSplit, CliError> {
    let read = |name: &str| -> Result<String, CliError> {
        let bytes = store.get_corpus_file(corpus, name).map_err(|_| {
            CliError::MissingArtifact {
                name: format!("corpora/{corpus}/{name} (run `evolm ingest` first)"),
            }
        })?;
        String::from_utf8(bytes).map_err(|e| CliError::Failure(e.to_string()))
    };
    let train_text = read("train.txt")?;
    let valid_text = read("valid.txt")?;
    let manifest: Option<CorpusManifest> = store
        .get_corpus_file(corpus, "manifest.json")
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    Ok(CorpusSplit {
        split_ratio: manifest.map(|m| m.split_ratio).unwrap_or(0.8),
        train_text,
        valid_text,
    })
}

fn train_tokenizer(cfg: &AppConfig, full_text: &str) -> Result<Tokenizer, CliError> {
    match parse_method(cfg)? {
        TokenMethod::Character => Ok(train_character_tokenizer(full_text)?),
        TokenMethod::Word => Ok(train_word_tokenizer(full_text)?),
        TokenMethod::Bpe => Ok(train_bpe(full_text, cfg.tokenize.bpe_vocab_size)?),
        TokenMethod::External => {
            let (vocab, merges) = match (&cfg.tokenize.external_vocab, &cfg.tokenize.external_merges)
            {
                (Some(v), Some(m)) => (v, m),
                _ => {
                    return Err(CliError::BadConfig {
                        key: "tokenize.external_vocab".into(),
                        msg: "external method needs external_vocab and external_merges".into(),
                    })
                }
            };
            Ok(load_external_tokenizer(vocab, merges)?)
        }
    }
}

fn cmd_tokenize(cfg: &AppConfig) -> Result<(), CliError> {
    let method = parse_method(cfg)?;
    let store = open_store(cfg)?;
    let split = load_split(&store, &cfg.corpus.name)?;
    let full_text = format!("{}{}", split.train_text, split.valid_text);
    let tokenizer = train_tokenizer(cfg, &full_text)?;
    let data = TokenizedCorpus::build(&cfg.corpus.name, &tokenizer, &split)?;

    let run = RunId::new(&cfg.corpus.name, &method.to_string());
    store.create_run(&run)?;
    store.put(
        &run,
        ArtifactKind::Tokenizer,
        "tokenizer.json",
        tokenizer.to_json().as_bytes(),
        false,
    )?;
    let mut train_bin = Vec::new();
    write_stream(&mut train_bin, data.vocab_size, &data.train_ids)?;
    store.put(&run, ArtifactKind::Stream, "train.bin", &train_bin, false)?;
    let mut valid_bin = Vec::new();
    write_stream(&mut valid_bin, data.vocab_size, &data.valid_ids)?;
    store.put(&run, ArtifactKind::Stream, "valid.bin", &valid_bin, false)?;

    let info = EntropyInfo {
        corpus: cfg.corpus.name.clone(),
        method: method.to_string(),
        vocab_size: data.vocab_size,
        baseline_entropy_bits: data.baseline_entropy_bits,
    };
    store.put(
        &run,
        ArtifactKind::Meta,
        ENTROPY_JSON,
        serde_json::to_string_pretty(&info)?.as_bytes(),
        false,
    )?;
    let table2 = format!(
        "corpus,method,vocab_size,baseline_entropy_bits\n{},{},{},{:.6}\n",
        info.corpus, info.method, info.vocab_size, info.baseline_entropy_bits
    );
    store.put(
        &run,
        ArtifactKind::Report,
        "table2_entropy.csv",
        table2.as_bytes(),
        false,
    )?;
    progress(serde_json::json!({
        "event": "tokenized",
        "run": run.simulation_id,
        "corpus": info.corpus,
        "method": info.method,
        "vocab_size": info.vocab_size,
        "baseline_entropy_bits": info.baseline_entropy_bits,
        "train_tokens": data.train_ids.len(),
        "valid_tokens": data.valid_ids.len(),
    }));
    Ok(())
}

fn cmd_bpe_sweep(cfg: &AppConfig) -> Result<(), CliError> {
    let store = open_store(cfg)?;
    let split = load_split(&store, &cfg.corpus.name)?;
    let adjustment = match cfg.sweep.adjustment.as_str() {
        "ratio" => EntropyAdjustment::Ratio,
        "difference" => EntropyAdjustment::Difference,
        other => {
            return Err(CliError::BadConfig {
                key: "sweep.adjustment".into(),
                msg: format!("unknown adjustment {other:?}; use \"ratio\" or \"difference\""),
            })
        }
    };
    let probe = Chromosome::small(cfg.sweep.probe_n_embd, cfg.sweep.probe_block_size);
    let result = bpe_vocab_sweep(
        &split,
        cfg.sweep.n_points,
        &probe,
        cfg.sweep.iters,
        cfg.sweep.n_boot,
        adjustment,
        cfg.sweep.seed,
    )?;
    store.put_corpus_file(
        &cfg.corpus.name,
        "bpe_sweep.json",
        serde_json::to_string_pretty(&result)?.as_bytes(),
        true,
    )?;
    let mut elbow = String::from("vocab_size,adjusted_loss\n");
    for (size, loss) in result.vocab_sizes.iter().zip(&result.adjusted_losses) {
        let _ = writeln!(elbow, "{size},{loss:.6}");
    }
    store.put_corpus_file(&cfg.corpus.name, "bpe_sweep_elbow.csv", elbow.as_bytes(), true)?;
    progress(serde_json::json!({
        "event": "bpe_sweep_finished",
        "corpus": cfg.corpus.name,
        "vocab_sizes": result.vocab_sizes,
        "adjusted_losses": result.adjusted_losses,
        "selected_vocab_size": result.selected_vocab_size,
    }));
    Ok(())
}

/// Streams JSON progress and persists each generation before the next one
/// starts: individual records, the cumulative checkpoint CSV, then the event.
struct StoreSink<'a> {
    store: &'a LocalStore,
    run: &'a RunId,
    rows: String,
}

impl<'a> StoreSink<'a> {
    fn new(store: &'a LocalStore, run: &'a RunId) -> Self {
        Self {
            store,
            run,
            rows: String::from("run_id,generation,individual,iter,train_loss,valid_loss\n"),
        }
    }
}

impl EvolutionSink for StoreSink<'_> {
    fn on_generation_start(&mut self, generation: usize) {
        progress(serde_json::json!({
            "event": "generation_started",
            "run": self.run.simulation_id,
            "generation": generation,
        }));
    }

    fn on_individual(&mut self, generation: usize, index: usize, record: &FitnessRecord) {
        let best = if record.best_val_loss.is_finite() {
            serde_json::json!(record.best_val_loss)
        } else {
            serde_json::Value::Null
        };
        progress(serde_json::json!({
            "event": "individual_finished",
            "run": self.run.simulation_id,
            "generation": generation,
            "individual": index,
            "best_val_loss": best,
            "diverged": record.diverged,
        }));
    }

    fn on_generation_end(&mut self, record: &GenerationRecord) -> Result<(), EvolveError> {
        let sink_err = |e: CliError| EvolveError::Sink(e.to_string());
        for (idx, individual) in record.individuals.iter().enumerate() {
            let key = format!("g{}/individual_{}.json", record.generation_index, idx);
            let payload = serde_json::to_vec_pretty(individual)
                .map_err(|e| EvolveError::Sink(e.to_string()))?;
            self.store
                .put(self.run, ArtifactKind::Generation, &key, &payload, false)
                .map_err(CliError::from)
                .map_err(sink_err)?;
            for c in &individual.checkpoints {
                let _ = writeln!(
                    self.rows,
                    "{},{},{},{},{},{}",
                    self.run.simulation_id,
                    record.generation_index,
                    idx,
                    c.iter,
                    c.train_loss,
                    c.valid_loss
                );
            }
        }
        self.store
            .put(
                self.run,
                ArtifactKind::Checkpoints,
                "checkpoints.csv",
                self.rows.as_bytes(),
                true,
            )
            .map_err(CliError::from)
            .map_err(sink_err)?;
        let best = record.best().1;
        progress(serde_json::json!({
            "event": "generation_finished",
            "run": self.run.simulation_id,
            "generation": record.generation_index,
            "best_val_loss": if best.best_val_loss.is_finite() {
                serde_json::json!(best.best_val_loss)
            } else {
                serde_json::Value::Null
            },
        }));
        Ok(())
    }
}

fn load_tokenized_run(store: &LocalStore, run: &RunId) -> Result<TokenizedCorpus, CliError> {
    let train = store.get(run, ArtifactKind::Stream, "train.bin")?;
    let valid = store.get(run, ArtifactKind::Stream, "valid.bin")?;
    let (vocab_train, train_ids) = read_stream(train.as_slice())?;
    let (vocab_valid, valid_ids) = read_stream(valid.as_slice())?;
    if vocab_train != vocab_valid {
        return Err(CliError::Failure(format!(
            "stream vocab mismatch: train {vocab_train} vs valid {vocab_valid}"
        )));
    }
    let info: EntropyInfo = serde_json::from_slice(&store.get(run, ArtifactKind::Meta, ENTROPY_JSON)?)?;
    let method = TokenMethod::from_str(&info.method).map_err(CliError::Failure)?;
    // entropy over both splits, kept alongside the streams at tokenize time
    debug_assert!({
        let mut all = train_ids.clone();
        all.extend_from_slice(&valid_ids);
        (token_entropy(&all).unwrap() - info.baseline_entropy_bits).abs() < 1e-9
    });
    Ok(TokenizedCorpus {
        corpus_name: info.corpus,
        method,
        train_ids,
        valid_ids,
        vocab_size: vocab_train,
        baseline_entropy_bits: info.baseline_entropy_bits,
    })
}

fn cmd_evolve(cfg: &AppConfig) -> Result<(), CliError> {
    let store = open_store(cfg)?;
    let method = parse_method(cfg)?;
    let space = build_space(cfg)?;
    let evo_cfg = evolution_config(cfg);
    evo_cfg.validate().map_err(|e| CliError::BadConfig {
        key: "evolve".into(),
        msg: e.to_string(),
    })?;

    let sim = if cfg.evolve.mock_fitness {
        let run = RunId::new(&cfg.corpus.name, &method.to_string());
        store.create_run(&run)?;
        store.put(
            &run,
            ArtifactKind::Meta,
            CONFIG_JSON,
            serde_json::to_string_pretty(&evo_cfg)?.as_bytes(),
            false,
        )?;
        let mut sink = StoreSink::new(&store, &run);
        let sim = run_evolution(
            &evo_cfg,
            &space,
            &cfg.corpus.name,
            &method.to_string(),
            &MockFitness::default(),
            &mut sink,
        )?;
        store.put(
            &run,
            ArtifactKind::Meta,
            SIMULATION_JSON,
            serde_json::to_vec_pretty(&sim)?.as_slice(),
            false,
        )?;
        sim
    } else {
        let run = store
            .latest_run(&cfg.corpus.name, &method.to_string())?
            .ok_or_else(|| CliError::MissingArtifact {
                name: format!(
                    "tokenized run for corpus {:?} method {:?} (run `evolm tokenize` first)",
                    cfg.corpus.name, method
                ),
            })?;
        if !store.list(&run, ArtifactKind::Generation)?.is_empty() {
            return Err(CliError::Failure(format!(
                "run {} already holds generations; tokenize a fresh run first",
                run.simulation_id
            )));
        }
        let data = load_tokenized_run(&store, &run)?;
        let max_block = 1usize << space.bounds.block_log2.1;
        if data.train_ids.len() <= max_block || data.valid_ids.len() <= max_block {
            log::warn!(
                "streams ({} train / {} valid tokens) cannot feed block sizes up to {}; such individuals will diverge",
                data.train_ids.len(),
                data.valid_ids.len(),
                max_block
            );
        }
        store.put(
            &run,
            ArtifactKind::Meta,
            CONFIG_JSON,
            serde_json::to_string_pretty(&evo_cfg)?.as_bytes(),
            false,
        )?;
        let fitness = TrainFitness {
            data: &data,
            train_cfg: train_config(cfg),
        };
        let mut sink = StoreSink::new(&store, &run);
        let sim = run_evolution(
            &evo_cfg,
            &space,
            &cfg.corpus.name,
            &method.to_string(),
            &fitness,
            &mut sink,
        )?;
        store.put(
            &run,
            ArtifactKind::Meta,
            SIMULATION_JSON,
            serde_json::to_vec_pretty(&sim)?.as_slice(),
            false,
        )?;
        sim
    };

    let best = sim
        .generations
        .last()
        .map(|g| g.best().1.best_val_loss)
        .unwrap_or(f64::INFINITY);
    progress(serde_json::json!({
        "event": "evolution_finished",
        "corpus": sim.corpus_name,
        "method": sim.method,
        "generations": sim.generations.len(),
        "final_best_val_loss": if best.is_finite() {
            serde_json::json!(best)
        } else {
            serde_json::Value::Null
        },
    }));
    Ok(())
}

/// A completed run plus the side metadata analysis needs.
struct CompletedRun {
    run: RunId,
    sim: SimulationResult,
    entropy_bits: f64,
}

fn completed_runs(store: &LocalStore, cfg: &AppConfig) -> Result<Vec<CompletedRun>, CliError> {
    let candidates: Vec<RunId> = match &cfg.analysis.runs {
        Some(ids) => {
            let mut out = Vec::with_capacity(ids.len());
            for id in ids {
                out.push(store.find_run(id)?);
            }
            out
        }
        None => store.list_runs(None, None)?,
    };
    let mut out = Vec::new();
    for run in candidates {
        if !store.exists(&run, ArtifactKind::Meta, SIMULATION_JSON) {
            continue;
        }
        if !store.exists(&run, ArtifactKind::Meta, ENTROPY_JSON) {
            // mock-fitness runs have no tokenized corpus behind them
            log::warn!(
                "run {} has no entropy baseline; skipping it in analysis",
                run.simulation_id
            );
            continue;
        }
        let sim: SimulationResult =
            serde_json::from_slice(&store.get(&run, ArtifactKind::Meta, SIMULATION_JSON)?)?;
        let entropy: EntropyInfo =
            serde_json::from_slice(&store.get(&run, ArtifactKind::Meta, ENTROPY_JSON)?)?;
        out.push(CompletedRun {
            run,
            sim,
            entropy_bits: entropy.baseline_entropy_bits,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct NamedFit {
    response: String,
    model: String,
    fit: ModelFit,
}

const GEE_NOTE: &str = "note: the GEE models are approximated by Gamma GLMs with a Generation \
covariate (independence working correlation); cluster-robust standard errors are out of scope\n";

fn fit_suite(observations: &[LossObservation], baseline: &str) -> Result<Vec<NamedFit>, CliError> {
    let final_gen: Vec<LossObservation> = {
        let mut by_key: BTreeMap<(String, String), usize> = BTreeMap::new();
        for obs in observations {
            let e = by_key
                .entry((obs.corpus.clone(), obs.method.clone()))
                .or_insert(0);
            *e = (*e).max(obs.generation);
        }
        observations
            .iter()
            .filter(|o| by_key[&(o.corpus.clone(), o.method.clone())] == o.generation)
            .cloned()
            .collect()
    };

    let mut fits = Vec::new();
    let push_fits = |name: &str,
                         obs: &[LossObservation],
                         include_generation: bool,
                         weighted: bool,
                         fits: &mut Vec<NamedFit>|
     -> Result<(), CliError> {
        let ds = build_regression_dataset(obs, baseline, include_generation)?;
        for (response, values) in [
            ("Calibrated Validation Loss", &ds.calibrated),
            ("Shifted Information Gain", &ds.shifted_information_gain),
        ] {
            let weights = weighted.then_some(&ds.weights);
            let fit = fit_gamma_glm(&ds.design, values, weights, response, &ds.feature_names)?;
            fits.push(NamedFit {
                response: response.to_string(),
                model: name.to_string(),
                fit,
            });
        }
        Ok(())
    };

    push_fits("Wtd GLM ~ Gamma (final generation)", &final_gen, false, true, &mut fits)?;
    push_fits("GLM ~ Gamma + Generation (GEE substitute)", observations, true, false, &mut fits)?;
    push_fits(
        "Wtd GLM ~ Gamma + Generation (Wtd GEE substitute)",
        observations,
        true,
        true,
        &mut fits,
    )?;
    Ok(fits)
}

fn cmd_analyze(cfg: &AppConfig) -> Result<(), CliError> {
    let store = open_store(cfg)?;
    let runs = completed_runs(&store, cfg)?;
    if runs.is_empty() {
        return Err(CliError::MissingArtifact {
            name: "a completed run with simulation.json (run `evolm evolve` first)".into(),
        });
    }

    let mut observations: Vec<LossObservation> = Vec::new();
    for cr in &runs {
        observations.extend(collect_observations(&cr.sim, cr.entropy_bits));
    }
    if observations.is_empty() {
        return Err(CliError::Failure(
            "all individuals diverged; nothing to analyze".into(),
        ));
    }
    let hmin = observations
        .iter()
        .map(|o| o.entropy_bits)
        .fold(f64::INFINITY, f64::min);
    let baseline = cfg.analysis.baseline_corpus.clone().unwrap_or_else(|| {
        let mut corpora: Vec<&str> = observations.iter().map(|o| o.corpus.as_str()).collect();
        corpora.sort();
        corpora[0].to_string()
    });

    // per-observation normalized table
    let ds = build_regression_dataset(&observations, &baseline, true)?;
    let mut normalized = String::from(
        "corpus,method,generation,valid_loss_bits,train_loss_bits,entropy_bits,calibrated,information_gain,shifted_information_gain,weight\n",
    );
    for (i, o) in observations.iter().enumerate() {
        let _ = writeln!(
            normalized,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            o.corpus,
            o.method,
            o.generation,
            o.valid_loss_bits,
            o.train_loss_bits,
            o.entropy_bits,
            ds.calibrated[i],
            analysis::information_gain(o.valid_loss_bits, o.entropy_bits)?,
            ds.shifted_information_gain[i],
            ds.weights[i],
        );
    }

    let fits = fit_suite(&observations, &baseline)?;
    let mut factors = String::from("response,model,feature,factor,percent_change,ci_low,ci_high,p_value\n");
    for nf in &fits {
        for row in factor_table(&nf.fit) {
            let _ = writeln!(
                factors,
                "{},{},{},{:.6},{:.2},{:.6},{:.6},{:.6}",
                nf.response,
                nf.model,
                row.feature,
                row.factor,
                row.percent_change,
                row.ci95.0,
                row.ci95.1,
                row.p_value
            );
        }
    }

    let mut summary_csv = String::from(
        "run_id,corpus,method,generation,best_valid_loss_nats,mean_valid_loss_nats,mean_calibrated_loss_bits,mean_information_gain_bits,n_diverged\n",
    );
    for cr in &runs {
        for g in generation_summary(&cr.sim, cr.entropy_bits, hmin)? {
            let _ = writeln!(
                summary_csv,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                cr.run.simulation_id,
                cr.sim.corpus_name,
                cr.sim.method,
                g.generation,
                g.best_valid_loss,
                g.mean_valid_loss,
                g.mean_calibrated_loss,
                g.mean_information_gain,
                g.n_diverged
            );
        }
    }

    let shared = |name: &str, payload: &[u8]| store.put_shared_file("analysis", name, payload, true);
    shared("normalized.csv", normalized.as_bytes())?;
    shared("factors.csv", factors.as_bytes())?;
    shared("model_fits.json", serde_json::to_string_pretty(&fits)?.as_bytes())?;
    shared("generation_summary.csv", summary_csv.as_bytes())?;
    shared("notes.txt", GEE_NOTE.as_bytes())?;

    progress(serde_json::json!({
        "event": "analysis_finished",
        "runs": runs.iter().map(|r| r.run.simulation_id.clone()).collect::<Vec<_>>(),
        "observations": observations.len(),
        "baseline": baseline,
        "models": fits.len(),
        "pseudo_r2": fits.iter().map(|f| f.fit.pseudo_r2).collect::<Vec<_>>(),
    }));
    Ok(())
}

fn cmd_report(cfg: &AppConfig) -> Result<(), CliError> {
    let store = open_store(cfg)?;
    let runs = completed_runs(&store, cfg)?;
    if runs.is_empty() {
        return Err(CliError::MissingArtifact {
            name: "a completed run with simulation.json (run `evolm evolve` first)".into(),
        });
    }
    let hmin = runs
        .iter()
        .map(|r| r.entropy_bits)
        .fold(f64::INFINITY, f64::min);

    for cr in &runs {
        let sim = &cr.sim;
        let summaries = generation_summary(sim, cr.entropy_bits, hmin)?;

        // Fig. 1 analogue: valid/train ratio trajectories per generation.
        let ratio_series: Vec<Series> = summaries
            .iter()
            .map(|g| Series {
                name: format!("gen {}", g.generation),
                points: g
                    .mean_ratio_by_checkpoint
                    .iter()
                    .map(|&(it, r)| (it as f64, r))
                    .collect(),
            })
            .collect();
        let fig1 = line_chart(
            &format!("Validation/Training Loss Ratio — {} ({})", sim.corpus_name, sim.method),
            "training iteration",
            "valid/train loss ratio",
            &ratio_series,
        );

        // Fig. 2 analogue: mean validation loss trajectories per generation.
        let loss_series: Vec<Series> = sim
            .generations
            .iter()
            .map(|gen| {
                let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for record in gen.individuals.iter().filter(|r| !r.diverged) {
                    for c in &record.checkpoints {
                        by_iter.entry(c.iter).or_default().push(c.valid_loss);
                    }
                }
                Series {
                    name: format!("gen {}", gen.generation_index),
                    points: by_iter
                        .into_iter()
                        .map(|(it, v)| (it as f64, v.iter().sum::<f64>() / v.len() as f64))
                        .collect(),
                }
            })
            .collect();
        let fig2 = line_chart(
            &format!("Validation Loss across Generations — {} ({})", sim.corpus_name, sim.method),
            "training iteration",
            "validation loss (nats)",
            &loss_series,
        );

        // Figs. 3-4 analogues: hyperparameter Spearman correlations.
        let correlations = hyperparameter_spearman(sim);
        let loss_bars: Vec<(String, f64)> = correlations
            .iter()
            .map(|c| (c.hyperparameter.clone(), c.vs_valid_loss.unwrap_or(f64::NAN)))
            .collect();
        let gen_bars: Vec<(String, f64)> = correlations
            .iter()
            .map(|c| (c.hyperparameter.clone(), c.vs_generation.unwrap_or(f64::NAN)))
            .collect();
        let fig3 = bar_chart(
            &format!("Spearman: Hyperparameters vs Validation Loss — {}", sim.corpus_name),
            "rho",
            &loss_bars,
        );
        let fig4 = bar_chart(
            &format!("Spearman: Hyperparameters vs Generation — {}", sim.corpus_name),
            "rho",
            &gen_bars,
        );

        // Fig. 5 analogue: the calibration stages by generation.
        let observations = collect_observations(sim, cr.entropy_bits);
        let mut stage_points: [Vec<(f64, f64)>; 4] = Default::default();
        let mut by_gen: BTreeMap<usize, Vec<&LossObservation>> = BTreeMap::new();
        for o in &observations {
            by_gen.entry(o.generation).or_default().push(o);
        }
        for (gen, obs) in &by_gen {
            let n = obs.len() as f64;
            let mean =
                |f: &dyn Fn(&LossObservation) -> f64| obs.iter().map(|o| f(o)).sum::<f64>() / n;
            let original = mean(&|o| o.valid_loss_bits);
            let entropy_adj = mean(&|o| o.valid_loss_bits * (hmin / o.entropy_bits));
            let penalty_adj = mean(&|o| {
                let d = o.valid_loss_bits / o.train_loss_bits - 1.0;
                o.valid_loss_bits * (d * d).exp()
            });
            let full = mean(&|o| {
                let d = o.valid_loss_bits / o.train_loss_bits - 1.0;
                o.valid_loss_bits * (d * d).exp() * (hmin / o.entropy_bits)
            });
            for (k, v) in [original, entropy_adj, penalty_adj, full].into_iter().enumerate() {
                stage_points[k].push((*gen as f64, v));
            }
        }
        let stage_names = [
            "a) original",
            "b) entropy adjusted",
            "c) overfit-penalty adjusted",
            "d) final calibrated",
        ];
        let fig5_series: Vec<Series> = stage_names
            .iter()
            .zip(stage_points)
            .map(|(name, points)| Series {
                name: name.to_string(),
                points,
            })
            .collect();
        let fig5 = line_chart(
            &format!("Calibrated Validation Loss — {} ({})", sim.corpus_name, sim.method),
            "generation",
            "mean loss (bits)",
            &fig5_series,
        );

        let mut summary_csv = String::from(
            "generation,best_valid_loss_nats,mean_valid_loss_nats,mean_calibrated_loss_bits,mean_information_gain_bits,n_diverged\n",
        );
        for g in &summaries {
            let _ = writeln!(
                summary_csv,
                "{},{:.6},{:.6},{:.6},{:.6},{}",
                g.generation,
                g.best_valid_loss,
                g.mean_valid_loss,
                g.mean_calibrated_loss,
                g.mean_information_gain,
                g.n_diverged
            );
        }

        let put = |name: &str, payload: &str| {
            store.put(&cr.run, ArtifactKind::Report, name, payload.as_bytes(), true)
        };
        put("fig1_val_train_ratio.svg", &fig1)?;
        put("fig2_valid_loss.svg", &fig2)?;
        put("fig3_corr_vs_loss.svg", &fig3)?;
        put("fig4_corr_vs_generation.svg", &fig4)?;
        put("fig5_calibrated_loss.svg", &fig5)?;
        put("generation_summary.csv", &summary_csv)?;

        // Table 5 analogue rides along when analysis artifacts exist.
        if let Ok(factors) = store.get_shared_file("analysis", "factors.csv") {
            store.put(
                &cr.run,
                ArtifactKind::Report,
                "table5_factors.csv",
                &factors,
                true,
            )?;
        }
        progress(serde_json::json!({
            "event": "report_written",
            "run": cr.run.simulation_id,
            "reports": 6,
        }));
    }
    Ok(())
}

/// Dispatches one command; errors carry their exit code.
pub fn run_command(cmd: &Command) -> Result<(), CliError> {
    let cfg = load_config(cmd)?;
    match cmd.verb {
        Verb::Ingest => cmd_ingest(&cfg),
        Verb::Tokenize => cmd_tokenize(&cfg),
        Verb::BpeSweep => cmd_bpe_sweep(&cfg),
        Verb::Evolve => cmd_evolve(&cfg),
        Verb::Analyze => cmd_analyze(&cfg),
        Verb::Report => cmd_report(&cfg),
    }
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Parser)]
#[command(
    name = "evolm",
    about = "Benchmark corpus machine-learnability with evolved small GPTs"
)]
struct Cli {
    #[command(subcommand)]
    verb: VerbArg,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML or JSON config file
    #[arg(short, long)]
    config: PathBuf,
    /// Override an existing config key, e.g. --set evolve.seed=7
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum VerbArg {
    /// Ingest a source tree into cleaned train/valid splits plus a manifest
    Ingest(CommonArgs),
    /// Train a tokenizer, encode the corpus, record the entropy baseline
    Tokenize(CommonArgs),
    /// Sweep BPE vocabulary sizes and pick the stabilization elbow
    BpeSweep(CommonArgs),
    /// Run the evolutionary simulation
    Evolve {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the deterministic mock fitness instead of training models
        #[arg(long)]
        mock_fitness: bool,
    },
    /// Fit the normalized-loss regressions across completed runs
    Analyze(CommonArgs),
    /// Render stored runs as CSV tables and SVG charts
    Report(CommonArgs),
}

/// Binary entry point: parse args, run, map errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, common, extra) = match cli.verb {
        VerbArg::Ingest(c) => (Verb::Ingest, c, Vec::new()),
        VerbArg::Tokenize(c) => (Verb::Tokenize, c, Vec::new()),
        VerbArg::BpeSweep(c) => (Verb::BpeSweep, c, Vec::new()),
        VerbArg::Evolve { common, mock_fitness } => {
            let extra = if mock_fitness {
                vec!["evolve.mock_fitness=true".to_string()]
            } else {
                Vec::new()
            };
            (Verb::Evolve, common, extra)
        }
        VerbArg::Analyze(c) => (Verb::Analyze, c, Vec::new()),
        VerbArg::Report(c) => (Verb::Report, c, Vec::new()),
    };
    let mut overrides = common.set;
    overrides.extend(extra);
    let cmd = Command {
        verb,
        config_path: common.config,
        overrides,
    };
    match run_command(&cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("evolm: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_replaces_existing_keys_only() {
        let mut value: toml::Value = toml::from_str(
            "[corpus]\nname = \"demo\"\n[evolve]\nseed = 1\nelitism = false\n",
        )
        .unwrap();
        apply_override(&mut value, "evolve.seed=99").unwrap();
        apply_override(&mut value, "evolve.elitism=true").unwrap();
        assert_eq!(value["evolve"]["seed"].as_integer(), Some(99));
        assert_eq!(value["evolve"]["elitism"].as_bool(), Some(true));
        let err = apply_override(&mut value, "evolve.nonexistent=1").unwrap_err();
        match err {
            CliError::BadConfig { key, .. } => assert_eq!(key, "evolve.nonexistent"),
            other => panic!("expected BadConfig, got {other:?}"),
        }
        assert!(apply_override(&mut value, "no-equals-sign").is_err());
    }

    #[test]
    fn literal_parsing_handles_types() {
        assert_eq!(toml_literal("42").as_integer(), Some(42));
        assert_eq!(toml_literal("0.25").as_float(), Some(0.25));
        assert_eq!(toml_literal("true").as_bool(), Some(true));
        assert_eq!(toml_literal("word").as_str(), Some("word"));
        assert!(toml_literal("[1, 2]").as_array().is_some());
    }

    #[test]
    fn config_defaults_fill_in() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[corpus]\nname = \"demo\"\n[evolve]\nseed = 1\n").unwrap();
        let cmd = Command {
            verb: Verb::Ingest,
            config_path: path,
            overrides: vec!["evolve.seed=7".into()],
        };
        let cfg = load_config(&cmd).unwrap();
        assert_eq!(cfg.corpus.name, "demo");
        assert_eq!(cfg.evolve.seed, 7);
        assert_eq!(cfg.evolve.n_generations, 15);
        assert_eq!(cfg.corpus.split_ratio, 0.8);
    }

    #[test]
    fn json_configs_parse_too() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"corpus": {"name": "demo"}, "evolve": {"seed": 3}}"#,
        )
        .unwrap();
        let cmd = Command {
            verb: Verb::Evolve,
            config_path: path,
            overrides: vec![],
        };
        let cfg = load_config(&cmd).unwrap();
        assert_eq!(cfg.evolve.seed, 3);
    }

    #[test]
    fn unknown_config_keys_are_bad_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[corpus]\nname = \"demo\"\ntypo_key = 1\n").unwrap();
        let cmd = Command {
            verb: Verb::Ingest,
            config_path: path,
            overrides: vec![],
        };
        match load_config(&cmd) {
            Err(CliError::BadConfig { .. }) => {}
            other => panic!("expected BadConfig, got {other:?}"),
        }
    }

    #[test]
    fn exit_codes_match_contract() {
        assert_eq!(
            CliError::BadConfig { key: "k".into(), msg: "m".into() }.exit_code(),
            2
        );
        assert_eq!(
            CliError::MissingArtifact { name: "x".into() }.exit_code(),
            3
        );
        assert_eq!(CliError::Failure("f".into()).exit_code(), 1);
    }
}
