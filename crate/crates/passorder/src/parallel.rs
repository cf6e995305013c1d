//! Worker-pool versions of the corpus-level operations. Results match the
//! sequential versions in `passorder_core` exactly: every per-function task
//! is independent and outputs are merged in corpus order.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;

use passorder_core::autotune::{
    broadcast_into, tune_function, unique_best_lists, BroadcastReport, Clock, CorpusStats, SearchBudget,
    SearchConfig, TuneError, TuneResult,
};
use passorder_core::backend::PassVocabulary;
use passorder_core::dataset::{build_pass_record, build_single_pass_for, DatasetError, PassDataset, SinglePassSet};
use passorder_core::eval::{evaluate_one, summarize, EvalError, Evaluation};
use passorder_core::predict::{BackupError, Prediction};
use passorder_core::{derive_seed, Backend, IrFunction};

/// Seconds since construction.
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

/// Search and minimize every function on the pool, then one broadcast
/// round, also on the pool.
pub fn autotune_corpus<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    backend: &B,
    budget: SearchBudget,
    seed: u64,
    config: SearchConfig,
    workers: usize,
) -> Result<(BTreeMap<String, TuneResult>, CorpusStats), TuneError> {
    if corpus.is_empty() {
        return Err(TuneError::EmptyCorpus);
    }
    let pool = pool(workers).map_err(|e| TuneError::Backend(passorder_core::BackendError::Invocation(e.to_string())))?;
    pool.install(|| {
        let tuned: Vec<Result<TuneResult, TuneError>> = corpus
            .par_iter()
            .map(|f| {
                let clock = SystemClock::new();
                let clock = matches!(budget, SearchBudget::WallClock { .. }).then_some(&clock as &dyn Clock);
                tune_function(f, backend, budget, derive_seed(seed, &f.id), config, clock)
            })
            .collect();
        let mut results = BTreeMap::new();
        let mut failed = Vec::new();
        for r in tuned {
            match r {
                Ok(r) => {
                    results.insert(r.function_id.clone(), r);
                }
                Err(TuneError::BaselineFailed { function_id, .. }) => failed.push(function_id),
                Err(e) => return Err(e),
            }
        }
        let report = broadcast(&mut results, corpus, backend)?;
        let stats = CorpusStats::from_results(corpus.len(), &results, failed, report);
        Ok((results, stats))
    })
}

fn broadcast<B: Backend + ?Sized>(
    results: &mut BTreeMap<String, TuneResult>,
    corpus: &[IrFunction],
    backend: &B,
) -> Result<BroadcastReport, TuneError> {
    let candidates = unique_best_lists(results.values());
    let by_id: BTreeMap<&str, &IrFunction> = corpus.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut entries: Vec<&mut TuneResult> = results.values_mut().collect();
    let changed: Vec<Result<bool, TuneError>> = entries
        .par_iter_mut()
        .map(|r| {
            let f = by_id.get(r.function_id.as_str()).ok_or_else(|| TuneError::UnknownFunction(r.function_id.clone()))?;
            broadcast_into(r, f, &candidates, backend)
        })
        .collect();
    let mut updated = 0;
    for c in changed {
        updated += usize::from(c?);
    }
    Ok(BroadcastReport { candidates: candidates.len(), updated })
}

pub fn evaluate_predictions<B: Backend + ?Sized>(
    predictions: &BTreeMap<String, Prediction>,
    corpus: &[IrFunction],
    backend: &B,
    use_oz_backup: bool,
    workers: usize,
) -> Result<Evaluation> {
    let scored: Vec<_> = pool(workers)?.install(|| {
        corpus
            .par_iter()
            .map(|f| (f, evaluate_one(f, predictions.get(&f.id), backend, use_oz_backup)))
            .collect()
    });
    let mut rows = Vec::with_capacity(corpus.len());
    let mut skipped = Vec::new();
    for (f, r) in scored {
        match r {
            Ok(row) => rows.push(row),
            Err(BackupError::BaselineFailed(m)) => skipped.push((f.id.clone(), m)),
            Err(BackupError::Backend(e)) => return Err(EvalError::from(e).into()),
        }
    }
    Ok(Evaluation { summary: summarize(&rows)?, rows, skipped })
}

pub fn build_pass_dataset<B: Backend + ?Sized>(
    results: &BTreeMap<String, TuneResult>,
    corpus: &[IrFunction],
    backend: &B,
    token_budget: usize,
    workers: usize,
) -> Result<PassDataset> {
    let built: Vec<_> = pool(workers)?.install(|| {
        corpus
            .par_iter()
            .filter_map(|f| results.get(&f.id).map(|r| build_pass_record(f, r, backend, token_budget)))
            .collect()
    });
    let mut out = PassDataset::default();
    for b in built {
        match b {
            Ok(r) => out.records.push(r),
            Err(f) => out.failures.push(f),
        }
    }
    for id in results.keys().filter(|id| !corpus.iter().any(|f| &f.id == *id)) {
        out.failures.push(passorder_core::dataset::RecordFailure {
            function_id: id.clone(),
            reason: "function not in corpus".to_string(),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn build_single_pass_dataset<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    backend: &B,
    vocab: &PassVocabulary,
    passes: &[String],
    per_pass: usize,
    max_prefix_len: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<SinglePassSet>> {
    let sets: Vec<Result<SinglePassSet, DatasetError>> = pool(workers)?.install(|| {
        passes
            .par_iter()
            .map(|p| build_single_pass_for(corpus, backend, vocab, p, per_pass, max_prefix_len, seed))
            .collect()
    });
    Ok(sets.into_iter().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use passorder_core::autotune;
    use passorder_core::dataset;
    use passorder_core::ir::DEFAULT_TOKEN_BUDGET;
    use passorder_core::mini::generate_corpus;
    use passorder_core::{eval, MiniBackend};

    #[test]
    fn parallel_matches_sequential() {
        let b = MiniBackend::new();
        let corpus = generate_corpus(12, 5);
        let budget = SearchBudget::Evaluations(30);
        let cfg = SearchConfig::default();
        let seq = autotune::autotune_corpus(&corpus, &b, budget, 3, cfg, None).unwrap();
        let par = autotune_corpus(&corpus, &b, budget, 3, cfg, 4).unwrap();
        assert_eq!(seq, par);

        let ds_seq = dataset::build_pass_dataset(&seq.0, &corpus, &b, DEFAULT_TOKEN_BUDGET);
        let ds_par = build_pass_dataset(&seq.0, &corpus, &b, DEFAULT_TOKEN_BUDGET, 4).unwrap();
        assert_eq!(ds_seq, ds_par);

        let preds = BTreeMap::new();
        let e_seq = eval::evaluate_predictions(&preds, &corpus, &b, true).unwrap();
        let e_par = evaluate_predictions(&preds, &corpus, &b, true, 3).unwrap();
        assert_eq!(e_seq, e_par);
    }

    #[test]
    fn wall_clock_budget_terminates() {
        let b = MiniBackend::new();
        let corpus = generate_corpus(2, 1);
        let (results, _) =
            autotune_corpus(&corpus, &b, SearchBudget::WallClock { seconds: 0.05 }, 1, SearchConfig::default(), 2)
                .unwrap();
        assert_eq!(results.len(), 2);
    }
}
