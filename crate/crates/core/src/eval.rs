//! Evaluation metrics: overall improvement, per-function rows and their
//! summary, MAPE, sentence BLEU, code-quality metrics and report
//! breakdowns.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::autotune::TuneResult;
use crate::backend::{Backend, BackendError, CompileOutcome, ErrorCategory, PassList, Verdict};
use crate::ir::{count_instructions, normalize, tokenize, IrFunction, NormalizedIr};
use crate::predict::{oz_count, with_oz_backup, BackupError, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("total predicted instruction count is zero")]
    ZeroDenominator,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("actual value at index {0} is zero")]
    ZeroActual(usize),
    #[error("no values")]
    Empty,
    #[error("reference text is empty")]
    EmptyReference,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Percentage by which the predicted total undercuts the `-Oz` total,
/// relative to the predicted total.
pub fn overall_improvement(sum_oz: u64, sum_predicted: u64) -> Result<f64, EvalError> {
    if sum_predicted == 0 {
        return Err(EvalError::ZeroDenominator);
    }
    Ok((sum_oz as f64 - sum_predicted as f64) / sum_predicted as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalRow {
    pub function_id: String,
    pub source_dataset: String,
    pub unopt_count: usize,
    pub oz_count: usize,
    pub predicted_count: usize,
    /// `oz_count - predicted_count`.
    pub delta: i64,
    /// The list whose count was scored.
    pub pass_list: PassList,
    pub additional_compilations: u64,
    /// The predicted list failed to compile and was scored as `-Oz`.
    pub predicted_failed: bool,
    pub parse_failure: bool,
    /// No prediction was supplied; scored as `-Oz`.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSummary {
    pub functions: usize,
    pub functions_improved: usize,
    pub functions_regressed: usize,
    pub functions_unchanged: usize,
    pub instructions_saved: u64,
    pub instructions_regressed: u64,
    pub additional_compilations: u64,
    pub sum_oz: u64,
    pub sum_predicted: u64,
    pub overall_improvement: f64,
    pub failed_predictions: usize,
    pub parse_failures: usize,
    pub missing_predictions: usize,
}

pub fn summarize(rows: &[EvalRow]) -> Result<EvalSummary, EvalError> {
    let improved = rows.iter().filter(|r| r.delta > 0).count();
    let regressed = rows.iter().filter(|r| r.delta < 0).count();
    let sum_oz: u64 = rows.iter().map(|r| r.oz_count as u64).sum();
    let sum_predicted: u64 = rows.iter().map(|r| r.predicted_count as u64).sum();
    Ok(EvalSummary {
        functions: rows.len(),
        functions_improved: improved,
        functions_regressed: regressed,
        functions_unchanged: rows.len() - improved - regressed,
        instructions_saved: rows.iter().map(|r| r.delta.max(0) as u64).sum(),
        instructions_regressed: rows.iter().map(|r| (-r.delta).max(0) as u64).sum(),
        additional_compilations: rows.iter().map(|r| r.additional_compilations).sum(),
        sum_oz,
        sum_predicted,
        overall_improvement: overall_improvement(sum_oz, sum_predicted)?,
        failed_predictions: rows.iter().filter(|r| r.predicted_failed).count(),
        parse_failures: rows.iter().filter(|r| r.parse_failure).count(),
        missing_predictions: rows.iter().filter(|r| r.missing).count(),
    })
}

/// Scores one function. A missing prediction is scored as `-Oz`.
pub fn evaluate_one<B: Backend + ?Sized>(
    func: &IrFunction,
    prediction: Option<&Prediction>,
    backend: &B,
    use_oz_backup: bool,
) -> Result<EvalRow, BackupError> {
    let oz = oz_count(&func.normalized_text, backend)?;
    let flag = backend.baseline_flag();
    let oz_list = PassList::single(flag);
    let predicted = prediction.map_or(&oz_list, |p| &p.pass_list);
    let extra = prediction.map_or(0, |p| p.extra_compilations);
    let (pass_list, count, additional, failed) = if use_oz_backup {
        let c = with_oz_backup(predicted, &func.normalized_text, backend, Some(oz))?;
        (c.pass_list, c.count, c.additional_compilations, c.predicted_failed)
    } else if predicted.is_exactly(flag) {
        (oz_list.clone(), oz, 0, false)
    } else {
        match backend.apply_pass_list(&func.normalized_text, predicted) {
            Ok(CompileOutcome::Success { instruction_count, .. }) => (predicted.clone(), instruction_count, 0, false),
            Ok(CompileOutcome::Failure { .. })
            | Err(BackendError::Timeout { .. } | BackendError::InvalidPassList(_)) => (oz_list.clone(), oz, 0, true),
            Err(e) => return Err(e.into()),
        }
    };
    Ok(EvalRow {
        function_id: func.id.clone(),
        source_dataset: func.source_dataset.clone(),
        unopt_count: func.instruction_count,
        oz_count: oz,
        predicted_count: count,
        delta: oz as i64 - count as i64,
        pass_list,
        additional_compilations: additional + extra,
        predicted_failed: failed,
        parse_failure: prediction.is_some_and(|p| p.parse_failure),
        missing: prediction.is_none(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
    /// Functions whose `-Oz` baseline failed; they have no row.
    pub skipped: Vec<(String, String)>,
}

/// Scores every corpus function against `predictions` (keyed by id).
pub fn evaluate_predictions<B: Backend + ?Sized>(
    predictions: &BTreeMap<String, Prediction>,
    corpus: &[IrFunction],
    backend: &B,
    use_oz_backup: bool,
) -> Result<Evaluation, EvalError> {
    let mut rows = Vec::with_capacity(corpus.len());
    let mut skipped = Vec::new();
    for func in corpus {
        match evaluate_one(func, predictions.get(&func.id), backend, use_oz_backup) {
            Ok(r) => rows.push(r),
            Err(BackupError::BaselineFailed(m)) => skipped.push((func.id.clone(), m)),
            Err(BackupError::Backend(e)) => return Err(e.into()),
        }
    }
    Ok(Evaluation { summary: summarize(&rows)?, rows, skipped })
}

/// Mean absolute percentage error.
pub fn mape(predicted: &[u64], actual: &[u64]) -> Result<f64, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (i, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
        if a == 0 {
            return Err(EvalError::ZeroActual(i));
        }
        total += p.abs_diff(a) as f64 / a as f64 * 100.0;
    }
    Ok(total / actual.len() as f64)
}

/// Floor for a zero n-gram precision.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_ORDER: usize = 4;

fn ngrams<'t, 'a>(tokens: &'t [&'a str], n: usize) -> BTreeMap<&'t [&'a str], usize> {
    let mut m = BTreeMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU over IR tokens: clipped 1- to 4-gram precisions with
/// uniform weights, a brevity penalty when the candidate is shorter, and
/// zero precisions floored at [`BLEU_EPSILON`]. An order for which neither
/// text has any n-gram is vacuously exact.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if c.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_ORDER {
        let (cg, rg) = (ngrams(&c, n), ngrams(&r, n));
        let total: usize = cg.values().sum();
        let p = if total == 0 {
            if rg.is_empty() { 1.0 } else { BLEU_EPSILON }
        } else {
            let clipped: usize = cg.iter().map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0))).sum();
            if clipped == 0 { BLEU_EPSILON } else { clipped as f64 / total as f64 }
        };
        log_sum += libm::log(p);
    }
    let bp = if c.len() < r.len() { libm::exp(1.0 - r.len() as f64 / c.len() as f64) } else { 1.0 };
    Ok((bp * libm::exp(log_sum / BLEU_ORDER as f64)).clamp(0.0, 1.0))
}

/// One generated code sample with its compiler-produced reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSample {
    pub function_id: String,
    pub generated: String,
    pub reference: NormalizedIr,
    pub predicted_output_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CodeQualityMetrics {
    pub samples: usize,
    pub bleu: f64,
    pub compile_rate: f64,
    pub exact_match_rate: f64,
    pub error_histogram: BTreeMap<ErrorCategory, usize>,
    /// `None` when no sample carries a predicted count.
    pub output_count_mape: Option<f64>,
}

pub fn code_quality<B: Backend + ?Sized>(samples: &[CodeSample], backend: &B) -> Result<CodeQualityMetrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut histogram: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let (mut compiled, mut exact, mut bleu_sum) = (0usize, 0usize, 0.0);
    let (mut pred, mut actual) = (Vec::new(), Vec::new());
    for s in samples {
        match backend.verify_ir(&s.generated)? {
            Verdict::Valid => compiled += 1,
            Verdict::Invalid { category, .. } => *histogram.entry(category).or_insert(0) += 1,
        }
        let generated = normalize(&s.generated);
        if generated == s.reference {
            exact += 1;
            bleu_sum += 1.0;
        } else {
            bleu_sum += bleu(generated.as_str(), s.reference.as_str())?;
        }
        if let Some(p) = s.predicted_output_count {
            let a = count_instructions(&s.reference)
                .map_err(|e| EvalError::Backend(BackendError::Invocation(alloc::format!("reference: {e}"))))?;
            pred.push(p as u64);
            actual.push(a as u64);
        }
    }
    let n = samples.len() as f64;
    Ok(CodeQualityMetrics {
        samples: samples.len(),
        bleu: bleu_sum / n,
        compile_rate: compiled as f64 / n,
        exact_match_rate: exact as f64 / n,
        error_histogram: histogram,
        output_count_mape: if pred.is_empty() { None } else { Some(mape(&pred, &actual)?) },
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PassFrequencyRow {
    pub pass: String,
    /// Percentage of predicted lists containing the pass.
    pub predictor_pct: f64,
    /// Percentage of tuned lists containing the pass.
    pub autotuner_pct: f64,
}

fn presence(lists: &[PassList]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for l in lists {
        let distinct: BTreeSet<&str> = l.items().iter().map(String::as_str).collect();
        for p in distinct {
            *m.entry(p).or_insert(0) += 1;
        }
    }
    m
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 { 0.0 } else { k as f64 / n as f64 * 100.0 }
}

/// How often each pass appears in predicted and tuned lists, ordered by
/// decreasing autotuner frequency, then predictor frequency, then name.
pub fn pass_frequency(predicted: &[PassList], tuned: &[PassList]) -> Vec<PassFrequencyRow> {
    let (pp, tp) = (presence(predicted), presence(tuned));
    let names: BTreeSet<&str> = pp.keys().chain(tp.keys()).copied().collect();
    let mut rows: Vec<(usize, usize, PassFrequencyRow)> = names
        .into_iter()
        .map(|name| {
            let (a, b) = (pp.get(name).copied().unwrap_or(0), tp.get(name).copied().unwrap_or(0));
            let row = PassFrequencyRow {
                pass: String::from(name),
                predictor_pct: pct(a, predicted.len()),
                autotuner_pct: pct(b, tuned.len()),
            };
            (b, a, row)
        })
        .collect();
    // Compare raw counts so the order is exact.
    rows.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.cmp(&x.1)).then(x.2.pass.cmp(&y.2.pass)));
    rows.into_iter().map(|(_, _, r)| r).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LengthDistribution {
    /// Length → number of lists.
    pub histogram: BTreeMap<usize, usize>,
    pub mean: f64,
    pub max: usize,
}

pub fn length_distribution(lists: &[PassList]) -> LengthDistribution {
    let mut histogram = BTreeMap::new();
    for l in lists {
        *histogram.entry(l.len()).or_insert(0) += 1;
    }
    let total: usize = lists.iter().map(PassList::len).sum();
    LengthDistribution {
        histogram,
        mean: if lists.is_empty() { 0.0 } else { total as f64 / lists.len() as f64 },
        max: lists.iter().map(PassList::len).max().unwrap_or(0),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupRow {
    pub group: String,
    pub functions: usize,
    pub sum_oz: u64,
    pub sum_predicted: u64,
    /// `None` for a zero predicted total.
    pub overall_improvement: Option<f64>,
}

fn group_rows<K: Ord, F: Fn(&EvalRow) -> K, L: Fn(&K) -> String>(rows: &[EvalRow], key: F, label: L) -> Vec<GroupRow> {
    let mut groups: BTreeMap<K, (usize, u64, u64)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(key(r)).or_insert((0, 0, 0));
        g.0 += 1;
        g.1 += r.oz_count as u64;
        g.2 += r.predicted_count as u64;
    }
    groups
        .into_iter()
        .map(|(k, (functions, sum_oz, sum_predicted))| GroupRow {
            group: label(&k),
            functions,
            sum_oz,
            sum_predicted,
            overall_improvement: overall_improvement(sum_oz, sum_predicted).ok(),
        })
        .collect()
}

pub fn improvement_by_dataset(rows: &[EvalRow]) -> Vec<GroupRow> {
    group_rows(rows, |r| r.source_dataset.clone(), String::clone)
}

/// Lower edge of the power-of-two bucket holding `count` (0 for 0).
pub fn size_bucket(count: usize) -> usize {
    if count == 0 { 0 } else { 1 << (usize::BITS - 1 - count.leading_zeros()) }
}

/// Groups by unoptimized size into `[2^k, 2^(k+1))` buckets, labelled
/// `lo-hi` with `hi` inclusive.
pub fn improvement_by_size(rows: &[EvalRow]) -> Vec<GroupRow> {
    group_rows(rows, |r| size_bucket(r.unopt_count), |&lo| {
        if lo == 0 { String::from("0") } else { alloc::format!("{}-{}", lo, lo * 2 - 1) }
    })
}

/// Distinct predicted lists that no tuning result holds.
pub fn novel_lists<'a, I>(predicted: &[PassList], tuned: I) -> usize
where
    I: IntoIterator<Item = &'a TuneResult>,
{
    let known: BTreeSet<&PassList> = tuned.into_iter().map(|r| &r.best_pass_list).collect();
    predicted.iter().collect::<BTreeSet<_>>().into_iter().filter(|l| !known.contains(l)).count()
}

/// Rows whose scored count is strictly below the tuned count.
pub fn beats_autotuner(rows: &[EvalRow], tuned: &BTreeMap<String, TuneResult>) -> usize {
    rows.iter()
        .filter(|r| tuned.get(&r.function_id).is_some_and(|t| r.predicted_count < t.best_count))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub pass_frequency: Vec<PassFrequencyRow>,
    pub predicted_lengths: LengthDistribution,
    pub tuned_lengths: LengthDistribution,
    pub by_dataset: Vec<GroupRow>,
    pub by_size: Vec<GroupRow>,
    pub novel_lists: usize,
    pub beats_autotuner: usize,
}

/// All breakdowns for one evaluation. Predicted lists are the lists
/// the predictor emitted, before any backup.
pub fn reports(rows: &[EvalRow], predictions: &[Prediction], tuned: &BTreeMap<String, TuneResult>) -> ReportBundle {
    let predicted: Vec<PassList> = predictions.iter().map(|p| p.pass_list.clone()).collect();
    let tuned_lists: Vec<PassList> = tuned.values().map(|t| t.best_pass_list.clone()).collect();
    ReportBundle {
        pass_frequency: pass_frequency(&predicted, &tuned_lists),
        predicted_lengths: length_distribution(&predicted),
        tuned_lengths: length_distribution(&tuned_lists),
        by_dataset: improvement_by_dataset(rows),
        by_size: improvement_by_size(rows),
        novel_lists: novel_lists(&predicted, tuned.values()),
        beats_autotuner: beats_autotuner(rows, tuned),
    }
}
