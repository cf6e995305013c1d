//! The `passorder` command line. Each subcommand reads and writes files in
//! fixed formats, so the output of one is the input of the next.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use passorder_core::autotune::{SearchBudget, SearchConfig, TuneError, TuneResult};
use passorder_core::dataset::{corpus_summary, split, DatasetError};
use passorder_core::eval::{code_quality, reports, summarize, CodeSample, EvalError, EvalRow};
use passorder_core::ir::DEFAULT_TOKEN_BUDGET;
use passorder_core::mini::generate_corpus;
use passorder_core::predict::{
    predict_always_oz, predict_retrieval, predict_top_frequency, BackupError, FrequencyTable, Prediction,
    RetrievalIndex,
};
use passorder_core::{
    Backend, BackendError, CompileOutcome, ErrorPatternTable, IrFunction, MiniBackend, NormalizedIr, PassList,
    PassVocabulary, Verdict,
};

use crate::config::{ConfigError, ConfigFile};
use crate::external::{load_predictions, CommandPredictor};
use crate::io::{read_jsonl, write_jsonl};
use crate::llvm::{locate_opt, parse_vocabulary, LlvmBackend, DEFAULT_TIMEOUT};
use crate::manifest::Manifest;
use crate::report::{write_tables, Summary, ROWS_FILE, SUMMARY_FILE};
use crate::{ingest, parallel};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const REJECTED_FILE: &str = "rejected.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const FAILED_FILE: &str = "failed.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const SINGLE_PASS_FILE: &str = "single_pass.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Evaluations per function when no budget is given.
pub const DEFAULT_BUDGET_EVALS: u64 = 1000;

/// Keyword accepted by `evaluate --predictions` instead of a file.
pub const ALWAYS_OZ: &str = "always-oz";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "passorder", version, about = "Pass-ordering autotuning, datasets and predictor evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mini,
    Llvm,
}

/// Settings shared by all subcommands. Each may also come from the config
/// file under the same name with `_` for `-`.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Path to `opt` (else PASSORDER_OPT, else PATH).
    #[arg(long, global = true)]
    pub opt_path: Option<PathBuf>,
    /// Per-invocation compiler timeout.
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
    /// Extra error-classification rules, `category<TAB>pattern` per line.
    #[arg(long, global = true)]
    pub patterns: Option<PathBuf>,
    /// LLVM pass vocabulary file replacing the built-in one.
    #[arg(long, global = true)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Split .ll modules into a function corpus.
    Ingest {
        /// Files or directories (searched recursively for *.ll).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Source dataset tag stored on every function.
        #[arg(long, default_value = "ingested")]
        dataset: String,
        /// Sequence budget; functions above half of it are dropped.
        #[arg(long)]
        token_limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search, minimize and broadcast pass lists for every function.
    Autotune {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "budget_seconds")]
        budget_evals: Option<u64>,
        #[arg(long)]
        budget_seconds: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render prompt/answer records from tuning results.
    Dataset {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        token_limit: Option<usize>,
        /// `name=fraction,...`; writes `<name>.jsonl` per part.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build single-pass translation records.
    SinglePassDataset {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated target passes (default: every non-meta pass).
        #[arg(long, allow_hyphen_values = true)]
        passes: Option<String>,
        /// File with one target pass per line.
        #[arg(long, conflicts_with = "passes")]
        passes_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        per_pass: usize,
        #[arg(long, default_value_t = 3)]
        max_prefix_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a baseline or external predictor over a corpus.
    Predict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        predictor: PredictorKind,
        /// Corpus the frequency and retrieval predictors learn from.
        #[arg(long)]
        train_corpus: Option<PathBuf>,
        /// Tuning results for the training corpus.
        #[arg(long)]
        train_results: Option<PathBuf>,
        /// Predictor command: prompt on stdin, answer on stdout.
        #[arg(long)]
        command: Option<String>,
        #[arg(long, default_value_t = 120)]
        predictor_timeout_secs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against -Oz.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Predictions file, or `always-oz`.
        #[arg(long)]
        predictions: String,
        /// Also compile -Oz for every non-Oz prediction and keep the better.
        #[arg(long)]
        oz_backup: bool,
        /// Tuning results, for the autotuner columns of the reports.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild summary and breakdown tables from evaluation rows.
    Report {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic mini-IR corpus.
    GenMiniCorpus {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    AlwaysOz,
    TopFrequency,
    Retrieval,
    Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Outputs were written but some functions failed.
    Partial,
}

/// Either backend behind one type.
#[derive(Debug, Clone)]
pub enum AnyBackend {
    Mini(MiniBackend),
    Llvm(LlvmBackend),
}

impl Backend for AnyBackend {
    fn name(&self) -> &str {
        match self {
            AnyBackend::Mini(b) => b.name(),
            AnyBackend::Llvm(b) => b.name(),
        }
    }
    fn list_passes(&self) -> Result<PassVocabulary, BackendError> {
        match self {
            AnyBackend::Mini(b) => b.list_passes(),
            AnyBackend::Llvm(b) => b.list_passes(),
        }
    }
    fn apply_pass_list(&self, ir: &NormalizedIr, passes: &PassList) -> Result<CompileOutcome, BackendError> {
        match self {
            AnyBackend::Mini(b) => b.apply_pass_list(ir, passes),
            AnyBackend::Llvm(b) => b.apply_pass_list(ir, passes),
        }
    }
    fn verify_ir(&self, ir: &str) -> Result<Verdict, BackendError> {
        match self {
            AnyBackend::Mini(b) => b.verify_ir(ir),
            AnyBackend::Llvm(b) => b.verify_ir(ir),
        }
    }
}

/// Maps an error to its exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        let bad_setting = matches!(
            cause.downcast_ref::<TuneError>(),
            Some(TuneError::InvalidBudget | TuneError::InvalidMaxLen)
        );
        if bad_setting || cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<clap::Error>().is_some() {
            return EXIT_CONFIG;
        }
        let backend = cause.downcast_ref::<BackendError>().is_some()
            || matches!(cause.downcast_ref::<TuneError>(), Some(TuneError::Backend(_)))
            || matches!(cause.downcast_ref::<DatasetError>(), Some(DatasetError::Backend(_)))
            || matches!(cause.downcast_ref::<EvalError>(), Some(EvalError::Backend(_)))
            || matches!(cause.downcast_ref::<BackupError>(), Some(BackupError::Backend(_)));
        if backend {
            return EXIT_BACKEND;
        }
    }
    EXIT_ERROR
}

/// Settings after merging flags over the config file.
struct Settings {
    file: ConfigFile,
    common: Common,
}

impl Settings {
    fn load(common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(Settings { file, common: common.clone() })
    }

    fn seed(&self) -> Result<u64> {
        Ok(self.file.or(self.common.seed, "seed")?.unwrap_or(0))
    }

    fn workers(&self) -> Result<usize> {
        let w = self
            .file
            .or(self.common.workers, "workers")?
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if w == 0 {
            return Err(ConfigError::BadValue { key: "workers".into(), value: "0".into() }.into());
        }
        Ok(w)
    }

    fn token_limit(&self, flag: Option<usize>) -> Result<usize> {
        Ok(self.file.or(flag, "token_limit")?.unwrap_or(DEFAULT_TOKEN_BUDGET))
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.file.get_str(key).map(PathBuf::from))
    }

    fn backend_kind(&self) -> Result<BackendKind> {
        if let Some(k) = self.common.backend {
            return Ok(k);
        }
        match self.file.get_str("backend") {
            None | Some("mini") => Ok(BackendKind::Mini),
            Some("llvm") => Ok(BackendKind::Llvm),
            Some(other) => Err(ConfigError::BadValue { key: "backend".into(), value: other.into() }.into()),
        }
    }

    fn backend(&self) -> Result<AnyBackend> {
        let mut patterns = ErrorPatternTable::default();
        if let Some(p) = self.path(&self.common.patterns, "patterns") {
            let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
            let extra = ErrorPatternTable::parse(&text).map_err(|e| ConfigError::BadValue {
                key: "patterns".into(),
                value: format!("{}: {e}", p.display()),
            })?;
            patterns.extend(extra);
        }
        match self.backend_kind()? {
            BackendKind::Mini => Ok(AnyBackend::Mini(MiniBackend::with_patterns(patterns))),
            BackendKind::Llvm => {
                let opt = locate_opt(self.path(&self.common.opt_path, "opt_path").as_deref())?;
                let timeout = self.file.or(self.common.timeout_secs, "timeout_secs")?.map(Duration::from_secs);
                let mut b = LlvmBackend::new(opt).with_patterns(patterns).with_timeout(timeout.unwrap_or(DEFAULT_TIMEOUT));
                if let Some(p) = self.path(&self.common.vocabulary, "vocabulary") {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                    let vocab = parse_vocabulary(&text).map_err(|e| ConfigError::BadValue {
                        key: "vocabulary".into(),
                        value: format!("{}: {e}", p.display()),
                    })?;
                    b = b.with_vocabulary(vocab);
                }
                Ok(AnyBackend::Llvm(b))
            }
        }
    }

    /// Config echoed into manifests: file values overlaid with flags.
    fn echo(&self, extra: &[(&str, String)]) -> BTreeMap<String, String> {
        let mut m = self.file.values().clone();
        let c = &self.common;
        let flags: [(&str, Option<String>); 7] = [
            ("backend", c.backend.map(|b| format!("{b:?}").to_lowercase())),
            ("opt_path", c.opt_path.as_ref().map(|p| p.display().to_string())),
            ("timeout_secs", c.timeout_secs.map(|v| v.to_string())),
            ("patterns", c.patterns.as_ref().map(|p| p.display().to_string())),
            ("vocabulary", c.vocabulary.as_ref().map(|p| p.display().to_string())),
            ("seed", c.seed.map(|v| v.to_string())),
            ("workers", c.workers.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        }
        for (k, v) in extra {
            m.insert((*k).to_string(), v.clone());
        }
        m
    }
}

fn manifest(settings: &Settings, command: &str, seed: Option<u64>, extra: &[(&str, String)], inputs: &[&Path]) -> Result<Manifest> {
    let mut m = Manifest::new(command, seed, settings.echo(extra));
    for p in inputs {
        if p.is_file() {
            m.add_input(p)?;
        }
    }
    Ok(m)
}

fn read_corpus(path: &Path) -> Result<Vec<IrFunction>> {
    let corpus: Vec<IrFunction> = read_jsonl(path)?;
    for f in &corpus {
        f.check_consistency().with_context(|| format!("{}: function '{}'", path.display(), f.id))?;
    }
    Ok(corpus)
}

fn read_results(path: &Path) -> Result<BTreeMap<String, TuneResult>> {
    let list: Vec<TuneResult> = read_jsonl(path)?;
    Ok(list.into_iter().map(|r| (r.function_id.clone(), r)).collect())
}

fn parse_split(spec: &str) -> Result<Vec<(String, f64)>> {
    spec.split(',')
        .map(|part| {
            let bad = || ConfigError::BadValue { key: "split".into(), value: part.to_string() };
            let (name, frac) = part.split_once('=').ok_or_else(bad)?;
            let frac: f64 = frac.trim().parse().map_err(|_| bad())?;
            let name = name.trim();
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(bad().into());
            }
            Ok((name.to_string(), frac))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<Status> {
    let settings = Settings::load(&cli.common)?;
    match cli.command {
        Cmd::GenMiniCorpus { n, out } => {
            if n == 0 {
                return Err(ConfigError::BadValue { key: "n".into(), value: "0".into() }.into());
            }
            let seed = settings.seed()?;
            let corpus = generate_corpus(n, seed);
            write_jsonl(&out.join(CORPUS_FILE), &corpus)?;
            let mut m = manifest(&settings, "gen-mini-corpus", Some(seed), &[("n", n.to_string())], &[])?;
            m.stats = serde_json::to_value(corpus_summary(&corpus))?;
            m.write(&out)?;
            info!("wrote {} functions", corpus.len());
            Ok(Status::Ok)
        }
        Cmd::Ingest { inputs, dataset, token_limit, out } => {
            let limit = settings.token_limit(token_limit)?;
            let (corpus, stats, rejected) = ingest::ingest(&inputs, &dataset, limit)?;
            write_jsonl(&out.join(CORPUS_FILE), &corpus)?;
            write_jsonl(&out.join(REJECTED_FILE), &rejected)?;
            let extra = [("dataset", dataset.clone()), ("token_limit", limit.to_string())];
            let files = ingest::collect_ll_files(&inputs)?;
            let paths: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
            let mut m = manifest(&settings, "ingest", None, &extra, &paths)?;
            m.stats = serde_json::json!({ "ingest": stats, "corpus": corpus_summary(&corpus) });
            m.write(&out)?;
            info!("kept {} of {} functions", stats.kept, stats.definitions);
            Ok(Status::Ok)
        }
        Cmd::Autotune { corpus: corpus_path, budget_evals, budget_seconds, max_len, out } => {
            let backend = settings.backend()?;
            let corpus = read_corpus(&corpus_path)?;
            let seed = settings.seed()?;
            // Flags beat the config file; evaluations beat seconds within each.
            let budget = match (budget_evals, budget_seconds) {
                (Some(n), _) => SearchBudget::Evaluations(n),
                (None, Some(s)) => SearchBudget::WallClock { seconds: s },
                (None, None) => match (settings.file.get("budget_evals")?, settings.file.get("budget_seconds")?) {
                    (Some(n), _) => SearchBudget::Evaluations(n),
                    (None, Some(s)) => SearchBudget::WallClock { seconds: s },
                    (None, None) => SearchBudget::Evaluations(DEFAULT_BUDGET_EVALS),
                },
            };
            let config =
                SearchConfig { max_len: settings.file.or(max_len, "max_len")?.unwrap_or(SearchConfig::default().max_len) };
            let (results, stats) =
                parallel::autotune_corpus(&corpus, &backend, budget, seed, config, settings.workers()?)?;
            write_jsonl(&out.join(RESULTS_FILE), results.values())?;
            write_jsonl(&out.join(FAILED_FILE), &stats.failed)?;
            let extra = [
                ("budget", serde_json::to_string(&budget)?),
                ("max_len", config.max_len.to_string()),
                ("backend", backend.name().to_string()),
            ];
            let mut m = manifest(&settings, "autotune", Some(seed), &extra, &[&corpus_path])?;
            m.stats = serde_json::to_value(&stats)?;
            m.write(&out)?;
            if stats.failed.is_empty() {
                Ok(Status::Ok)
            } else {
                warn!("{} functions failed their baseline", stats.failed.len());
                Ok(Status::Partial)
            }
        }
        Cmd::Dataset { corpus: corpus_path, results: results_path, token_limit, split: split_spec, out } => {
            let backend = settings.backend()?;
            let corpus = read_corpus(&corpus_path)?;
            let results = read_results(&results_path)?;
            let limit = settings.token_limit(token_limit)?;
            let seed = settings.seed()?;
            let workers = settings.workers()?;
            let ds = parallel::build_pass_dataset(&results, &corpus, &backend, limit, workers)?;
            write_jsonl(&out.join(DATASET_FILE), &ds.records)?;
            write_jsonl(&out.join(FAILED_FILE), &ds.failures)?;
            let mut split_stats = BTreeMap::new();
            if let Some(spec) = &split_spec {
                let parts = parse_split(spec)?;
                let fractions: Vec<f64> = parts.iter().map(|(_, f)| *f).collect();
                let subsets = split(&corpus, &fractions, seed).map_err(|e| ConfigError::BadValue {
                    key: "split".into(),
                    value: format!("{spec}: {e}"),
                })?;
                for ((name, _), subset) in parts.iter().zip(subsets) {
                    let ids: std::collections::BTreeSet<&str> = subset.iter().map(|f| f.id.as_str()).collect();
                    let recs: Vec<_> = ds.records.iter().filter(|r| ids.contains(r.function_id.as_str())).collect();
                    write_jsonl(&out.join(format!("{name}.jsonl")), recs)?;
                    split_stats.insert(name.clone(), subset.len());
                }
            }
            let truncated = ds.records.iter().filter(|r| r.truncated).count();
            let extra = [("token_limit", limit.to_string()), ("split", split_spec.clone().unwrap_or_default())];
            let mut m = manifest(&settings, "dataset", Some(seed), &extra, &[&corpus_path, &results_path])?;
            m.stats = serde_json::json!({
                "records": ds.records.len(),
                "failures": ds.failures.len(),
                "truncated": truncated,
                "split_functions": split_stats,
            });
            m.write(&out)?;
            Ok(if ds.failures.is_empty() { Status::Ok } else { Status::Partial })
        }
        Cmd::SinglePassDataset { corpus: corpus_path, passes, passes_file, per_pass, max_prefix_len, out } => {
            let backend = settings.backend()?;
            let vocab = backend.list_passes()?;
            let corpus = read_corpus(&corpus_path)?;
            let seed = settings.seed()?;
            let targets: Vec<String> = match (passes, &passes_file) {
                (Some(list), _) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                (None, Some(p)) => std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read {}", p.display()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_string)
                    .collect(),
                (None, None) => vocab.passes().to_vec(),
            };
            if let Some(bad) = targets.iter().find(|t| !vocab.contains(t)) {
                return Err(ConfigError::BadValue { key: "passes".into(), value: bad.clone() }.into());
            }
            let sets = parallel::build_single_pass_dataset(
                &corpus,
                &backend,
                &vocab,
                &targets,
                per_pass,
                max_prefix_len,
                seed,
                settings.workers()?,
            )?;
            write_jsonl(&out.join(SINGLE_PASS_FILE), sets.iter().flat_map(|s| &s.records))?;
            let shortfalls: BTreeMap<&str, usize> =
                sets.iter().filter_map(|s| s.shortfall.map(|n| (s.target_pass.as_str(), n))).collect();
            for (p, n) in &shortfalls {
                warn!("{p}: {n} records short of {per_pass}");
            }
            let extra = [
                ("per_pass", per_pass.to_string()),
                ("max_prefix_len", max_prefix_len.to_string()),
                ("passes", targets.join(",")),
            ];
            let mut inputs = vec![corpus_path.as_path()];
            inputs.extend(passes_file.as_deref());
            let mut m = manifest(&settings, "single-pass-dataset", Some(seed), &extra, &inputs)?;
            m.stats = serde_json::json!({
                "records": sets.iter().map(|s| s.records.len()).sum::<usize>(),
                "shortfall": shortfalls,
            });
            m.write(&out)?;
            Ok(Status::Ok)
        }
        Cmd::Predict { corpus: corpus_path, predictor, train_corpus, train_results, command, predictor_timeout_secs, out } => {
            let corpus = read_corpus(&corpus_path)?;
            let mut inputs: Vec<&Path> = vec![&corpus_path];
            let mut failures = 0usize;
            let predictions: Vec<Prediction> = match predictor {
                PredictorKind::AlwaysOz => corpus.iter().map(predict_always_oz).collect(),
                PredictorKind::TopFrequency | PredictorKind::Retrieval => {
                    let Some(results_path) = &train_results else {
                        return Err(ConfigError::BadValue { key: "train_results".into(), value: "missing".into() }.into());
                    };
                    inputs.push(results_path);
                    let results = read_results(results_path)?;
                    if predictor == PredictorKind::TopFrequency {
                        let table = FrequencyTable::from_results(results.values());
                        corpus.iter().map(|f| predict_top_frequency(f, &table)).collect::<Result<_, _>>()?
                    } else {
                        let Some(train_path) = &train_corpus else {
                            return Err(ConfigError::BadValue { key: "train_corpus".into(), value: "missing".into() }.into());
                        };
                        inputs.push(train_path);
                        let train = read_corpus(train_path)?;
                        let index = RetrievalIndex::from_results(&train, &results);
                        corpus.iter().map(|f| predict_retrieval(f, &index)).collect::<Result<_, _>>()?
                    }
                }
                PredictorKind::Command => {
                    let Some(spec) = &command else {
                        return Err(ConfigError::BadValue { key: "command".into(), value: "missing".into() }.into());
                    };
                    let vocab = settings.backend().ok().and_then(|b| b.list_passes().ok());
                    let p = CommandPredictor::parse(spec, Duration::from_secs(predictor_timeout_secs))?;
                    let pool = parallel::pool(settings.workers()?)?;
                    let outcomes: Vec<Result<Prediction>> = pool.install(|| {
                        use rayon::prelude::*;
                        corpus.par_iter().map(|f| p.predict(f, vocab.as_ref())).collect()
                    });
                    corpus
                        .iter()
                        .zip(outcomes)
                        .map(|(f, o)| {
                            o.unwrap_or_else(|e| {
                                warn!("{}: {e:#}", f.id);
                                failures += 1;
                                Prediction::parse_failed(f.id.clone())
                            })
                        })
                        .collect()
                }
            };
            write_jsonl(&out.join(PREDICTIONS_FILE), &predictions)?;
            let name = format!("{predictor:?}");
            let mut m = manifest(&settings, "predict", None, &[("predictor", name)], &inputs)?;
            m.stats = serde_json::json!({
                "predictions": predictions.len(),
                "parse_failures": predictions.iter().filter(|p| p.parse_failure).count(),
                "predictor_failures": failures,
            });
            m.write(&out)?;
            Ok(if failures == 0 { Status::Ok } else { Status::Partial })
        }
        Cmd::Evaluate { corpus: corpus_path, predictions: pred_arg, oz_backup, results, out } => {
            let backend = settings.backend()?;
            let corpus = read_corpus(&corpus_path)?;
            let mut inputs: Vec<&Path> = vec![&corpus_path];
            let pred_path = PathBuf::from(&pred_arg);
            let predictions: BTreeMap<String, Prediction> = if pred_arg == ALWAYS_OZ && !pred_path.exists() {
                corpus.iter().map(|f| (f.id.clone(), predict_always_oz(f))).collect()
            } else {
                inputs.push(&pred_path);
                let vocab = backend.list_passes()?;
                load_predictions(&pred_path, Some(&vocab))?
            };
            let tuned = match &results {
                Some(p) => {
                    inputs.push(p);
                    read_results(p)?
                }
                None => BTreeMap::new(),
            };
            let eval = parallel::evaluate_predictions(&predictions, &corpus, &backend, oz_backup, settings.workers()?)?;
            write_jsonl(&out.join(ROWS_FILE), &eval.rows)?;
            let mut summary = Summary::default();
            summary.add_eval(&eval.summary);
            summary.push("skipped", eval.skipped.len());
            let samples = code_samples(&corpus, &predictions, &backend)?;
            if !samples.is_empty() {
                summary.add_code_quality(&code_quality(&samples, &backend)?);
            }
            let scored: Vec<Prediction> =
                corpus.iter().filter_map(|f| predictions.get(&f.id)).cloned().collect();
            let bundle = reports(&eval.rows, &scored, &tuned);
            summary.add_bundle(&bundle);
            summary.write(&out.join(SUMMARY_FILE))?;
            write_tables(&out, &bundle)?;
            for (id, why) in &eval.skipped {
                warn!("{id}: skipped, baseline failed: {why}");
            }
            let extra = [("oz_backup", oz_backup.to_string()), ("predictions", pred_arg.clone())];
            let mut m = manifest(&settings, "evaluate", None, &extra, &inputs)?;
            m.stats = serde_json::to_value(&eval.summary)?;
            m.write(&out)?;
            Ok(if eval.skipped.is_empty() { Status::Ok } else { Status::Partial })
        }
        Cmd::Report { rows: rows_path, predictions, results, out } => {
            let rows: Vec<EvalRow> = read_jsonl(&rows_path)?;
            let mut inputs: Vec<&Path> = vec![&rows_path];
            let preds: Vec<Prediction> = match &predictions {
                Some(p) => {
                    inputs.push(p);
                    load_predictions(p, None)?.into_values().collect()
                }
                None => Vec::new(),
            };
            let tuned = match &results {
                Some(p) => {
                    inputs.push(p);
                    read_results(p)?
                }
                None => BTreeMap::new(),
            };
            let s = summarize(&rows)?;
            let bundle = reports(&rows, &preds, &tuned);
            let mut summary = Summary::default();
            summary.add_eval(&s);
            summary.add_bundle(&bundle);
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            summary.write(&out.join(SUMMARY_FILE))?;
            write_tables(&out, &bundle)?;
            let mut m = manifest(&settings, "report", None, &[], &inputs)?;
            m.stats = serde_json::to_value(&s)?;
            m.write(&out)?;
            Ok(Status::Ok)
        }
    }
}

/// Predictions that carry generated code, paired with what the backend
/// makes of the same pass list.
fn code_samples<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    predictions: &BTreeMap<String, Prediction>,
    backend: &B,
) -> Result<Vec<CodeSample>> {
    let mut out = Vec::new();
    for f in corpus {
        let Some(p) = predictions.get(&f.id) else { continue };
        let Some(code) = &p.predicted_code else { continue };
        match backend.apply_pass_list(&f.normalized_text, &p.pass_list)? {
            CompileOutcome::Success { optimized_ir, .. } => out.push(CodeSample {
                function_id: f.id.clone(),
                generated: code.clone(),
                reference: optimized_ir,
                predicted_output_count: p.predicted_output_count,
            }),
            CompileOutcome::Failure { error_message, .. } => {
                warn!("{}: no reference for generated code: {error_message}", f.id);
            }
        }
    }
    Ok(out)
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::Partial) => EXIT_PARTIAL,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_argument() {
        assert_eq!(parse_split("train=0.8,test=0.2").unwrap(), [("train".into(), 0.8), ("test".into(), 0.2)]);
        assert!(parse_split("train").is_err());
        assert!(parse_split("a/b=1").is_err());
        assert!(parse_split("x=half").is_err());
    }

    #[test]
    fn exit_codes() {
        let cfg: anyhow::Error = ConfigError::UnknownKey("x".into()).into();
        assert_eq!(exit_code(&cfg), EXIT_CONFIG);
        let be: anyhow::Error = BackendError::Unavailable("no opt".into()).into();
        assert_eq!(exit_code(&be), EXIT_BACKEND);
        let tune: anyhow::Error = TuneError::Backend(BackendError::Timeout { seconds: 1 }).into();
        assert_eq!(exit_code(&tune.context("autotune")), EXIT_BACKEND);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), EXIT_ERROR);
    }

    #[test]
    fn bad_arguments_are_config_errors() {
        assert_eq!(main_with_args(["passorder", "autotune", "--bogus"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["passorder", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_opt_is_backend_error() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        write_jsonl(&corpus, &generate_corpus(1, 0)).unwrap();
        let code = main_with_args([
            "passorder".as_ref(),
            "autotune".as_ref(),
            "--backend".as_ref(),
            "llvm".as_ref(),
            "--opt-path".as_ref(),
            dir.path().join("no-such-opt").as_os_str(),
            "--corpus".as_ref(),
            corpus.as_os_str(),
            "--out".as_ref(),
            dir.path().join("o").as_os_str(),
        ] as [&std::ffi::OsStr; 10]);
        assert_eq!(code, EXIT_BACKEND);
    }
}
