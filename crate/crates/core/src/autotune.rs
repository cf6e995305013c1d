//! Random-search autotuner with pass-list minimization and one
//! aggregate-and-broadcast round across the corpus.
//!
//! Every search starts from the baseline meta-flag, so a tuned result is
//! never worse than `-Oz`. Candidates are compared by instruction count,
//! then by length, then lexicographically.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompileOutcome, PassList, PassVocabulary, DEFAULT_MAX_LEN};
use crate::eval::overall_improvement;
use crate::ir::{IrFunction, NormalizedIr};
use crate::seed::derive_seed;

/// Wall-clock search time per function used for the reference corpus.
pub const REFERENCE_SECONDS: f64 = 780.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SearchBudget {
    /// Search until this many seconds have elapsed on the supplied clock.
    WallClock { seconds: f64 },
    /// Evaluate this many candidate lists beyond the baseline.
    Evaluations(u64),
}

impl SearchBudget {
    fn check(&self) -> Result<(), TuneError> {
        match *self {
            SearchBudget::WallClock { seconds } if !(seconds > 0.0 && seconds.is_finite()) => {
                Err(TuneError::InvalidBudget)
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_len: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { max_len: DEFAULT_MAX_LEN }
    }
}

/// Monotonic time source for wall-clock budgets.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuneResult {
    pub function_id: String,
    pub baseline_pass_list: PassList,
    pub baseline_count: usize,
    pub best_pass_list: PassList,
    pub best_count: usize,
    /// Compilations spent in search and broadcast.
    pub evaluations_used: u64,
    /// Compilations that failed or timed out; included in `evaluations_used`.
    pub failed_evaluations: u64,
    /// Compilations spent minimizing, kept out of the search budget.
    pub minimize_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend vocabulary is empty")]
    EmptyVocabulary,
    #[error("baseline {flag} failed to compile '{function_id}': {message}")]
    BaselineFailed { function_id: String, flag: String, message: String },
    #[error("pass list '{list}' does not compile on '{function_id}'")]
    ListFailed { function_id: String, list: String },
    #[error("a wall-clock budget needs a clock")]
    NeedsClock,
    #[error("search budget must be positive and finite")]
    InvalidBudget,
    #[error("maximum pass-list length must be at least 1")]
    InvalidMaxLen,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no function with id '{0}' in the corpus")]
    UnknownFunction(String),
}

/// Memoizing compile wrapper. Timeouts count as failed evaluations.
struct Evaluator<'a, B: Backend + ?Sized> {
    backend: &'a B,
    ir: &'a NormalizedIr,
    cache: BTreeMap<PassList, Option<usize>>,
    evaluations: u64,
    failures: u64,
}

impl<'a, B: Backend + ?Sized> Evaluator<'a, B> {
    fn new(backend: &'a B, ir: &'a NormalizedIr) -> Self {
        Evaluator { backend, ir, cache: BTreeMap::new(), evaluations: 0, failures: 0 }
    }

    fn eval(&mut self, list: &PassList) -> Result<Option<usize>, TuneError> {
        if let Some(hit) = self.cache.get(list) {
            return Ok(*hit);
        }
        self.evaluations += 1;
        let count = match self.backend.apply_pass_list(self.ir, list) {
            Ok(CompileOutcome::Success { instruction_count, .. }) => Some(instruction_count),
            Ok(CompileOutcome::Failure { .. }) | Err(BackendError::Timeout { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        if count.is_none() {
            self.failures += 1;
        }
        self.cache.insert(list.clone(), count);
        Ok(count)
    }
}

fn better(count: usize, list: &PassList, best_count: usize, best: &PassList) -> bool {
    (count, list.len(), list) < (best_count, best.len(), best)
}

fn sample(rng: &mut ChaCha8Rng, vocab: &PassVocabulary, names: &[&str], max_len: usize) -> PassList {
    let len = rng.gen_range(1..=max_len);
    loop {
        let items: Vec<&str> = (0..len).map(|_| names[rng.gen_range(0..names.len())]).collect();
        let repeated_meta = items
            .iter()
            .enumerate()
            .any(|(i, n)| vocab.is_meta(n) && items[..i].contains(n));
        if !repeated_meta {
            return PassList::new(items);
        }
    }
}

fn baseline_of<B: Backend + ?Sized>(
    func: &IrFunction,
    backend: &B,
    ev: &mut Evaluator<'_, B>,
) -> Result<(PassList, usize), TuneError> {
    let baseline = PassList::single(backend.baseline_flag());
    match ev.eval(&baseline)? {
        Some(c) => Ok((baseline, c)),
        None => {
            let message = match backend.apply_pass_list(&func.normalized_text, &baseline) {
                Ok(CompileOutcome::Failure { error_message, .. }) => error_message,
                Ok(CompileOutcome::Success { .. }) => String::from("unknown failure"),
                Err(e) => alloc::format!("{e}"),
            };
            Err(TuneError::BaselineFailed {
                function_id: func.id.clone(),
                flag: String::from(backend.baseline_flag()),
                message,
            })
        }
    }
}

fn search_with<B: Backend + ?Sized>(
    func: &IrFunction,
    backend: &B,
    ev: &mut Evaluator<'_, B>,
    budget: SearchBudget,
    seed: u64,
    config: SearchConfig,
    clock: Option<&dyn Clock>,
) -> Result<TuneResult, TuneError> {
    budget.check()?;
    if config.max_len == 0 {
        return Err(TuneError::InvalidMaxLen);
    }
    let vocab = backend.list_passes()?;
    if vocab.is_empty() {
        return Err(TuneError::EmptyVocabulary);
    }
    let clock_start = match budget {
        SearchBudget::WallClock { .. } => Some(clock.ok_or(TuneError::NeedsClock)?.now_secs()),
        SearchBudget::Evaluations(_) => None,
    };
    let names: Vec<&str> = vocab.names().collect();
    let space = vocab.list_space_size(config.max_len).unwrap_or(u128::MAX);

    let (baseline, baseline_count) = baseline_of(func, backend, ev)?;
    let (mut best, mut best_count) = (baseline.clone(), baseline_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra: u64 = 0;
    // Lists within max_len already tried, e.g. the baseline.
    let mut tried = ev.cache.keys().filter(|k| k.len() <= config.max_len).count() as u128;
    loop {
        let exhausted = match budget {
            SearchBudget::Evaluations(n) => extra >= n,
            SearchBudget::WallClock { seconds } => {
                let now = clock.expect("checked above").now_secs();
                now - clock_start.expect("set for wall clock") >= seconds
            }
        };
        if exhausted || tried >= space {
            break;
        }
        let candidate = sample(&mut rng, &vocab, &names, config.max_len);
        if ev.cache.contains_key(&candidate) {
            continue;
        }
        extra += 1;
        tried += 1;
        if let Some(count) = ev.eval(&candidate)? {
            if better(count, &candidate, best_count, &best) {
                best = candidate;
                best_count = count;
            }
        }
    }
    Ok(TuneResult {
        function_id: func.id.clone(),
        baseline_pass_list: baseline,
        baseline_count,
        best_pass_list: best,
        best_count,
        evaluations_used: ev.evaluations,
        failed_evaluations: ev.failures,
        minimize_evaluations: 0,
    })
}

/// Random search from the baseline. Distinct candidates are sampled by
/// drawing a length uniformly in `1..=max_len` and then each pass uniformly;
/// lists repeating a meta-flag are redrawn. Search stops when the budget is
/// spent or every list within `max_len` has been tried.
pub fn random_search<B: Backend + ?Sized>(
    func: &IrFunction,
    backend: &B,
    budget: SearchBudget,
    seed: u64,
    config: SearchConfig,
    clock: Option<&dyn Clock>,
) -> Result<TuneResult, TuneError> {
    let mut ev = Evaluator::new(backend, &func.normalized_text);
    search_with(func, backend, &mut ev, budget, seed, config, clock)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minimized {
    pub pass_list: PassList,
    pub count: usize,
    pub evaluations: u64,
}

fn minimize_with<B: Backend + ?Sized>(
    func: &IrFunction,
    ev: &mut Evaluator<'_, B>,
    list: &PassList,
    seed: u64,
) -> Result<Minimized, TuneError> {
    let before = ev.evaluations;
    let mut count = ev.eval(list)?.ok_or_else(|| TuneError::ListFailed {
        function_id: func.id.clone(),
        list: alloc::format!("{list}"),
    })?;
    let mut current = list.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A single remaining pass is kept: a list is never minimized to empty.
    while current.len() > 1 {
        let mut order: Vec<usize> = (0..current.len()).collect();
        order.shuffle(&mut rng);
        let mut kept = false;
        for pos in order {
            let candidate = current.without(pos);
            if let Some(c) = ev.eval(&candidate)? {
                if c <= count {
                    current = candidate;
                    count = c;
                    kept = true;
                    break;
                }
            }
        }
        if !kept {
            break;
        }
    }
    Ok(Minimized { pass_list: current, count, evaluations: ev.evaluations - before })
}

/// Removes randomly chosen passes while the instruction count does not
/// increase, until a full sweep over the remaining positions removes
/// nothing. The result is 1-minimal for lists of two or more passes.
pub fn minimize_pass_list<B: Backend + ?Sized>(
    func: &IrFunction,
    backend: &B,
    list: &PassList,
    seed: u64,
) -> Result<Minimized, TuneError> {
    let mut ev = Evaluator::new(backend, &func.normalized_text);
    minimize_with(func, &mut ev, list, seed)
}

/// Search followed by minimization, sharing one compile cache.
pub fn tune_function<B: Backend + ?Sized>(
    func: &IrFunction,
    backend: &B,
    budget: SearchBudget,
    seed: u64,
    config: SearchConfig,
    clock: Option<&dyn Clock>,
) -> Result<TuneResult, TuneError> {
    let mut ev = Evaluator::new(backend, &func.normalized_text);
    let mut result = search_with(func, backend, &mut ev, budget, seed, config, clock)?;
    let failures_before = ev.failures;
    let min = minimize_with(func, &mut ev, &result.best_pass_list, derive_seed(seed, "minimize"))?;
    debug_assert!(min.count <= result.best_count);
    result.best_pass_list = min.pass_list;
    result.best_count = min.count;
    result.minimize_evaluations = min.evaluations;
    result.failed_evaluations += ev.failures - failures_before;
    Ok(result)
}

/// The distinct best lists across all results.
pub fn unique_best_lists<'a, I>(results: I) -> BTreeSet<PassList>
where
    I: IntoIterator<Item = &'a TuneResult>,
{
    results.into_iter().map(|r| r.best_pass_list.clone()).collect()
}

/// Tries each candidate list on one function, skipping lists it already
/// holds, and adopts the best strict improvement. Returns whether the result
/// changed.
pub fn broadcast_into<B: Backend + ?Sized>(
    result: &mut TuneResult,
    func: &IrFunction,
    candidates: &BTreeSet<PassList>,
    backend: &B,
) -> Result<bool, TuneError> {
    let mut ev = Evaluator::new(backend, &func.normalized_text);
    let mut winner: Option<(usize, &PassList)> = None;
    for list in candidates {
        if *list == result.best_pass_list || *list == result.baseline_pass_list {
            continue;
        }
        let Some(count) = ev.eval(list)? else { continue };
        if count < result.best_count {
            let take = match winner {
                None => true,
                Some((wc, wl)) => better(count, list, wc, wl),
            };
            if take {
                winner = Some((count, list));
            }
        }
    }
    result.evaluations_used += ev.evaluations;
    result.failed_evaluations += ev.failures;
    if let Some((count, list)) = winner {
        result.best_pass_list = list.clone();
        result.best_count = count;
        Ok(true)
    } else {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BroadcastReport {
    pub candidates: usize,
    pub updated: usize,
}

/// One aggregate-and-broadcast round: every distinct best list is tried on
/// every other function.
pub fn broadcast<B: Backend + ?Sized>(
    results: &mut BTreeMap<String, TuneResult>,
    corpus: &[IrFunction],
    backend: &B,
) -> Result<BroadcastReport, TuneError> {
    let candidates = unique_best_lists(results.values());
    let by_id: BTreeMap<&str, &IrFunction> = corpus.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut updated = 0;
    for (id, result) in results.iter_mut() {
        let func = by_id.get(id.as_str()).ok_or_else(|| TuneError::UnknownFunction(id.clone()))?;
        if broadcast_into(result, func, &candidates, backend)? {
            updated += 1;
        }
    }
    Ok(BroadcastReport { candidates: candidates.len(), updated })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorpusStats {
    pub functions: usize,
    pub tuned: usize,
    /// Functions whose baseline did not compile; they have no result.
    pub failed: Vec<String>,
    pub total_evaluations: u64,
    pub mean_evaluations: f64,
    pub total_minimize_evaluations: u64,
    pub broadcast_candidates: usize,
    pub broadcast_updates: usize,
    pub baseline_total: u64,
    pub best_total: u64,
    /// Improvement of tuned counts over the baseline, in percent.
    pub overall_improvement: Option<f64>,
}

impl CorpusStats {
    pub fn from_results(
        functions: usize,
        results: &BTreeMap<String, TuneResult>,
        failed: Vec<String>,
        report: BroadcastReport,
    ) -> Self {
        let total_evaluations: u64 = results.values().map(|r| r.evaluations_used).sum();
        let baseline_total: u64 = results.values().map(|r| r.baseline_count as u64).sum();
        let best_total: u64 = results.values().map(|r| r.best_count as u64).sum();
        CorpusStats {
            functions,
            tuned: results.len(),
            failed,
            total_evaluations,
            mean_evaluations: if results.is_empty() {
                0.0
            } else {
                total_evaluations as f64 / results.len() as f64
            },
            total_minimize_evaluations: results.values().map(|r| r.minimize_evaluations).sum(),
            broadcast_candidates: report.candidates,
            broadcast_updates: report.updated,
            baseline_total,
            best_total,
            overall_improvement: overall_improvement(baseline_total, best_total).ok(),
        }
    }
}

/// Tunes every function (search, then minimize), then runs one broadcast
/// round. Per-function seeds derive from `seed` and the function id.
pub fn autotune_corpus<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    backend: &B,
    budget: SearchBudget,
    seed: u64,
    config: SearchConfig,
    clock: Option<&dyn Clock>,
) -> Result<(BTreeMap<String, TuneResult>, CorpusStats), TuneError> {
    if corpus.is_empty() {
        return Err(TuneError::EmptyCorpus);
    }
    let mut results = BTreeMap::new();
    let mut failed = Vec::new();
    for func in corpus {
        match tune_function(func, backend, budget, derive_seed(seed, &func.id), config, clock) {
            Ok(r) => {
                results.insert(func.id.clone(), r);
            }
            Err(TuneError::BaselineFailed { function_id, .. }) => failed.push(function_id),
            Err(e) => return Err(e),
        }
    }
    let report = broadcast(&mut results, corpus, backend)?;
    let stats = CorpusStats::from_results(corpus.len(), &results, failed, report);
    Ok((results, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini::{generate_corpus, passes, MiniBackend};
    use crate::OZ;
    use core::cell::Cell;

    fn func(id: &str, text: &str) -> IrFunction {
        IrFunction::new(id, "test", text).unwrap()
    }

    /// A dead multiply fed by a promotable slot.
    const PHASED: &str = "define i32 @f(i32 %x) {\n%p = alloca i32\nstore i32 6, i32* %p\n%v = load i32, i32* %p\n%k = mul i32 %v, 7\n%d = add i32 %k, %x\n%u = add i32 %x, 1\nret i32 %u\n}";

    fn brute_force_min(f: &IrFunction, b: &MiniBackend, max_len: usize) -> usize {
        let vocab = b.list_passes().unwrap();
        let names: Vec<&str> = vocab.names().collect();
        let mut best = usize::MAX;
        let mut frontier: Vec<Vec<&str>> = alloc::vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for list in &frontier {
                for n in &names {
                    if vocab.is_meta(n) && list.contains(n) {
                        continue;
                    }
                    let mut l = list.clone();
                    l.push(n);
                    let c = b.apply_pass_list(&f.normalized_text, &PassList::new(l.iter().copied())).unwrap();
                    best = best.min(c.count().unwrap());
                    next.push(l);
                }
            }
            frontier = next;
        }
        best
    }

    #[test]
    fn zero_budget_returns_baseline() {
        let b = MiniBackend::new();
        let f = func("p", PHASED);
        let r = random_search(&f, &b, SearchBudget::Evaluations(0), 1, SearchConfig::default(), None).unwrap();
        assert_eq!(r.best_pass_list, PassList::single(OZ));
        assert_eq!(r.best_count, r.baseline_count);
        assert_eq!(r.evaluations_used, 1);
    }

    #[test]
    fn exhaustive_budget_matches_enumeration() {
        let b = MiniBackend::new();
        let f = func("p", PHASED);
        let cfg = SearchConfig { max_len: 3 };
        let space = MiniBackend::vocabulary().list_space_size(3).unwrap() as u64;
        let r = random_search(&f, &b, SearchBudget::Evaluations(space), 3, cfg, None).unwrap();
        let oracle = brute_force_min(&f, &b, 3);
        assert_eq!(r.best_count, oracle);
        // Only the live add and the ret can remain.
        assert_eq!(oracle, 2);
        let manual = PassList::new([passes::MEM2REG, passes::CONSTFOLD, passes::DCE]);
        assert_eq!(b.apply_pass_list(&f.normalized_text, &manual).unwrap().count(), Some(2));
        assert_eq!(r.evaluations_used as u128, MiniBackend::vocabulary().list_space_size(3).unwrap());
    }

    #[test]
    fn search_is_deterministic() {
        let b = MiniBackend::new();
        let f = func("p", PHASED);
        let run = |s| random_search(&f, &b, SearchBudget::Evaluations(40), s, SearchConfig::default(), None).unwrap();
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn wall_clock_budget_uses_clock() {
        struct Ticks(Cell<f64>);
        impl Clock for Ticks {
            fn now_secs(&self) -> f64 {
                let t = self.0.get();
                self.0.set(t + 1.0);
                t
            }
        }
        let b = MiniBackend::new();
        let f = func("p", PHASED);
        let budget = SearchBudget::WallClock { seconds: 10.0 };
        assert_eq!(
            random_search(&f, &b, budget, 1, SearchConfig::default(), None).unwrap_err(),
            TuneError::NeedsClock
        );
        let clock = Ticks(Cell::new(0.0));
        let r = random_search(&f, &b, budget, 1, SearchConfig::default(), Some(&clock)).unwrap();
        // Start reading at t=0, then one reading per loop iteration until t >= 10.
        assert_eq!(r.evaluations_used, 1 + 9);
        assert_eq!(
            random_search(&f, &b, SearchBudget::WallClock { seconds: 0.0 }, 1, SearchConfig::default(), Some(&clock))
                .unwrap_err(),
            TuneError::InvalidBudget
        );
    }

    #[test]
    fn minimize_drops_redundant_repeat() {
        let b = MiniBackend::new();
        let f = func("n", "define i32 @f(i32 %x) {\n%a = add i32 %x, 0\n%b = mul i32 %a, 1\nret i32 %b\n}");
        let list = PassList::new([passes::INSTCOMBINE, passes::INSTCOMBINE]);
        let m = minimize_pass_list(&f, &b, &list, 0).unwrap();
        assert_eq!(m.pass_list, PassList::single(passes::INSTCOMBINE));
        assert_eq!(m.count, 1);
    }

    #[test]
    fn minimize_keeps_one_minimal_list() {
        let b = MiniBackend::new();
        // Promotion exposes the constant; folding then removes the multiply.
        let f = func("c", "define i32 @f(i32 %x) {\n%p = alloca i32\nstore i32 6, i32* %p\n%v = load i32, i32* %p\n%k = mul i32 %v, 7\n%r = add i32 %k, %x\nret i32 %r\n}");
        let list = PassList::new([passes::MEM2REG, passes::CONSTFOLD]);
        for seed in 0..8 {
            let m = minimize_pass_list(&f, &b, &list, seed).unwrap();
            assert_eq!(m.pass_list, list);
            assert_eq!(m.count, 2);
        }
    }

    #[test]
    fn minimize_rejects_failing_list() {
        let b = MiniBackend::new();
        let f = IrFunction {
            normalized_text: crate::ir::normalize("define i32 @f() {\nret i32 %nope\n}"),
            ..func("bad", "define i32 @f() {\nret i32 0\n}")
        };
        assert!(matches!(
            minimize_pass_list(&f, &b, &PassList::single(OZ), 0),
            Err(TuneError::ListFailed { .. })
        ));
        assert!(matches!(
            random_search(&f, &b, SearchBudget::Evaluations(3), 0, SearchConfig::default(), None),
            Err(TuneError::BaselineFailed { .. })
        ));
    }

    #[test]
    fn broadcast_shares_a_winning_list() {
        let b = MiniBackend::new();
        // Three-step chain that -Oz cannot finish in its two rounds: a
        // constant branch guards a promotable slot whose value feeds
        // another constant branch.
        let a = func("a", PHASED);
        let bfn = func("b", "define i32 @g(i32 %y) {\n%p = alloca i32\nstore i32 2, i32* %p\n%v = load i32, i32* %p\n%k = mul i32 %v, 3\n%d = add i32 %k, %y\n%u = add i32 %y, 5\nret i32 %u\n}");
        let corpus = alloc::vec![a.clone(), bfn.clone()];
        let winning = PassList::new([passes::MEM2REG, passes::CONSTFOLD, passes::DCE]);
        let mut results = BTreeMap::new();
        let oz = PassList::single(OZ);
        let base = |f: &IrFunction| b.apply_pass_list(&f.normalized_text, &oz).unwrap().count().unwrap();
        results.insert(
            String::from("a"),
            TuneResult {
                function_id: "a".into(),
                baseline_pass_list: oz.clone(),
                baseline_count: base(&a),
                best_pass_list: winning.clone(),
                best_count: 1,
                evaluations_used: 0,
                failed_evaluations: 0,
                minimize_evaluations: 0,
            },
        );
        // Pretend b's search found nothing better than its unoptimized form.
        let b_unopt = bfn.instruction_count;
        results.insert(
            String::from("b"),
            TuneResult {
                function_id: "b".into(),
                baseline_pass_list: oz.clone(),
                baseline_count: b_unopt,
                best_pass_list: PassList::single(passes::GVN),
                best_count: b_unopt,
                evaluations_used: 0,
                failed_evaluations: 0,
                minimize_evaluations: 0,
            },
        );
        let report = broadcast(&mut results, &corpus, &b).unwrap();
        assert_eq!(report.candidates, 2);
        assert_eq!(results["b"].best_pass_list, winning);
        assert_eq!(results["b"].best_count, 2);
        // a tried gvn-lite once (not better); b tried the winning list once.
        assert_eq!(results["a"].evaluations_used, 1);
        assert_eq!(results["b"].evaluations_used, 1);
        assert_eq!(results["a"].best_pass_list, winning);
    }

    #[test]
    fn broadcast_on_optimal_corpus_changes_nothing() {
        let b = MiniBackend::new();
        let corpus = generate_corpus(4, 3);
        let (mut results, _) =
            autotune_corpus(&corpus, &b, SearchBudget::Evaluations(30), 1, SearchConfig::default(), None).unwrap();
        let before = results.clone();
        broadcast(&mut results, &corpus, &b).unwrap();
        for (id, r) in &results {
            assert_eq!(r.best_count, before[id].best_count);
            assert_eq!(r.best_pass_list, before[id].best_pass_list);
        }
    }

    #[test]
    fn one_function_corpus_equals_search_plus_minimize() {
        let b = MiniBackend::new();
        let f = func("p", PHASED);
        let budget = SearchBudget::Evaluations(25);
        let (results, stats) =
            autotune_corpus(core::slice::from_ref(&f), &b, budget, 4, SearchConfig::default(), None).unwrap();
        let direct = tune_function(&f, &b, budget, derive_seed(4, "p"), SearchConfig::default(), None).unwrap();
        assert_eq!(results["p"], direct);
        assert_eq!(stats.tuned, 1);
        assert_eq!(stats.broadcast_updates, 0);
        assert!(stats.overall_improvement.unwrap() >= 0.0);
    }

    #[test]
    fn corpus_failures_are_reported_not_fatal() {
        let b = MiniBackend::new();
        let mut corpus = generate_corpus(2, 1);
        corpus[1].normalized_text = crate::ir::normalize("define i32 @f() {\nret i32 %nope\n}");
        let (results, stats) =
            autotune_corpus(&corpus, &b, SearchBudget::Evaluations(5), 1, SearchConfig::default(), None).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(stats.failed, [corpus[1].id.clone()]);
        assert_eq!(
            autotune_corpus(&[], &b, SearchBudget::Evaluations(5), 1, SearchConfig::default(), None).unwrap_err(),
            TuneError::EmptyCorpus
        );
    }
}
