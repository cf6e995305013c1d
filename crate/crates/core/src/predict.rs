//! Baseline predictors and the `-Oz` backup wrapper.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::autotune::TuneResult;
use crate::backend::{Backend, BackendError, CompileOutcome, PassList, PassVocabulary};
use crate::dataset::parse_answer;
use crate::ir::{tokenize, IrFunction, NormalizedIr};
use crate::OZ;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub function_id: String,
    pub pass_list: PassList,
    #[cfg_attr(feature = "serde", serde(default))]
    pub predicted_input_count: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub predicted_output_count: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub predicted_code: Option<String>,
    /// Compilations spent producing this prediction.
    #[cfg_attr(feature = "serde", serde(default))]
    pub extra_compilations: u64,
    /// The predictor's answer did not parse; `pass_list` fell back to `-Oz`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub parse_failure: bool,
}

impl Prediction {
    pub fn of_list(function_id: impl Into<String>, pass_list: PassList) -> Self {
        Prediction {
            function_id: function_id.into(),
            pass_list,
            predicted_input_count: None,
            predicted_output_count: None,
            predicted_code: None,
            extra_compilations: 0,
            parse_failure: false,
        }
    }

    pub fn parse_failed(function_id: impl Into<String>) -> Self {
        Prediction { parse_failure: true, ..Prediction::of_list(function_id, PassList::single(OZ)) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("frequency table is empty")]
    EmptyTable,
    #[error("retrieval index is empty")]
    EmptyIndex,
}

pub fn predict_always_oz(func: &IrFunction) -> Prediction {
    Prediction::of_list(func.id.clone(), PassList::single(OZ))
}

/// How often each list was the best found for a function.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<PassList, usize>,
}

impl FrequencyTable {
    pub fn from_results<'a, I>(results: I) -> Self
    where
        I: IntoIterator<Item = &'a TuneResult>,
    {
        let mut counts = BTreeMap::new();
        for r in results {
            *counts.entry(r.best_pass_list.clone()).or_insert(0) += 1;
        }
        FrequencyTable { counts }
    }

    pub fn counts(&self) -> &BTreeMap<PassList, usize> {
        &self.counts
    }

    /// Most frequent list; ties go to the lexicographically smaller list.
    pub fn top(&self) -> Option<(&PassList, usize)> {
        // BTreeMap iterates in ascending order, so the first maximum wins.
        self.counts.iter().fold(None, |best, (l, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
    }
}

pub fn predict_top_frequency(func: &IrFunction, table: &FrequencyTable) -> Result<Prediction, PredictError> {
    let (list, _) = table.top().ok_or(PredictError::EmptyTable)?;
    Ok(Prediction::of_list(func.id.clone(), list.clone()))
}

type Bag = BTreeMap<String, u64>;

fn bag(text: &str) -> Bag {
    let mut b = Bag::new();
    for t in tokenize(text) {
        *b.entry(String::from(t)).or_insert(0) += 1;
    }
    b
}

/// Multiset Jaccard similarity as an exact fraction `(Σ min, Σ max)`.
fn jaccard_parts(a: &Bag, b: &Bag) -> (u64, u64) {
    let (mut inter, mut union) = (0, 0);
    for (t, &x) in a {
        let y = b.get(t).copied().unwrap_or(0);
        inter += x.min(y);
        union += x.max(y);
    }
    union += b.iter().filter(|(t, _)| !a.contains_key(*t)).map(|(_, &y)| y).sum::<u64>();
    (inter, union)
}

/// Multiset Jaccard similarity of the token bags of two texts. Two empty
/// texts are identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    match jaccard_parts(&bag(a), &bag(b)) {
        (_, 0) => 1.0,
        (i, u) => i as f64 / u as f64,
    }
}

/// Nearest-neighbour lookup over tuned functions.
#[derive(Debug, Clone, Default)]
pub struct RetrievalIndex {
    entries: Vec<(String, Bag, PassList)>,
}

impl RetrievalIndex {
    /// Indexes `(function, best list)` pairs. Entries are kept sorted by id.
    pub fn new<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a IrFunction, &'a PassList)>,
    {
        let mut entries: Vec<_> = pairs
            .into_iter()
            .map(|(f, l)| (f.id.clone(), bag(f.normalized_text.as_str()), l.clone()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        RetrievalIndex { entries }
    }

    /// Indexes every corpus function that has a tuning result.
    pub fn from_results(corpus: &[IrFunction], results: &BTreeMap<String, TuneResult>) -> Self {
        Self::new(corpus.iter().filter_map(|f| results.get(&f.id).map(|r| (f, &r.best_pass_list))))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most similar entry as `(id, similarity, list)`; ties go to the
    /// smaller id.
    pub fn nearest(&self, ir: &NormalizedIr) -> Option<(&str, f64, &PassList)> {
        let q = bag(ir.as_str());
        let mut best: Option<(usize, (u64, u64))> = None;
        for (i, (_, b, _)) in self.entries.iter().enumerate() {
            let (n, d) = match jaccard_parts(&q, b) {
                (_, 0) => (1, 1),
                p => p,
            };
            // n/d > bn/bd, compared without rounding.
            let better = match best {
                None => true,
                Some((_, (bn, bd))) => u128::from(n) * u128::from(bd) > u128::from(bn) * u128::from(d),
            };
            if better {
                best = Some((i, (n, d)));
            }
        }
        best.map(|(i, (n, d))| {
            let (id, _, l) = &self.entries[i];
            (id.as_str(), n as f64 / d as f64, l)
        })
    }
}

pub fn predict_retrieval(func: &IrFunction, index: &RetrievalIndex) -> Result<Prediction, PredictError> {
    let (_, _, list) = index.nearest(&func.normalized_text).ok_or(PredictError::EmptyIndex)?;
    Ok(Prediction::of_list(func.id.clone(), list.clone()))
}

/// Reads a predictor's answer text. Anything that is not a well-formed
/// answer, or that names passes outside `vocab`, becomes a flagged `-Oz`
/// prediction.
pub fn parse_prediction_answer(function_id: &str, text: &str, vocab: Option<&PassVocabulary>) -> Prediction {
    let Ok(p) = parse_answer(text.trim_start()) else {
        return Prediction::parse_failed(function_id);
    };
    if let Some(v) = vocab {
        if p.pass_list.validate(v, None).is_err() {
            return Prediction::parse_failed(function_id);
        }
    }
    let code = p.code.trim_end();
    Prediction {
        function_id: String::from(function_id),
        pass_list: p.pass_list,
        predicted_input_count: Some(p.input_count),
        predicted_output_count: Some(p.output_count),
        predicted_code: (!code.is_empty()).then(|| String::from(code)),
        extra_compilations: 0,
        parse_failure: false,
    }
}

/// Checks a bare pass list against `vocab`, flagging it as a parse failure
/// if invalid.
pub fn prediction_from_list(function_id: &str, list: PassList, vocab: Option<&PassVocabulary>) -> Prediction {
    let ok = !list.is_empty() && vocab.is_none_or(|v| list.validate(v, None).is_ok());
    if ok {
        Prediction::of_list(function_id, list)
    } else {
        Prediction::parse_failed(function_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackupChoice {
    pub pass_list: PassList,
    pub count: usize,
    pub additional_compilations: u64,
    /// The predicted list did not compile.
    pub predicted_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackupError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("baseline -Oz failed to compile: {0}")]
    BaselineFailed(String),
}

/// Count of `-Oz` on `ir`.
pub fn oz_count<B: Backend + ?Sized>(ir: &NormalizedIr, backend: &B) -> Result<usize, BackupError> {
    match backend.apply_pass_list(ir, &PassList::single(backend.baseline_flag()))? {
        CompileOutcome::Success { instruction_count, .. } => Ok(instruction_count),
        CompileOutcome::Failure { error_message, .. } => Err(BackupError::BaselineFailed(error_message)),
    }
}

/// Keeps the better of the predicted list and `-Oz`, preferring `-Oz` on
/// ties. The `-Oz` compilation is the baseline; any other prediction costs
/// one additional compilation, even when it fails.
pub fn with_oz_backup<B: Backend + ?Sized>(
    predicted: &PassList,
    ir: &NormalizedIr,
    backend: &B,
    baseline_count: Option<usize>,
) -> Result<BackupChoice, BackupError> {
    let flag = backend.baseline_flag();
    let oz = match baseline_count {
        Some(c) => c,
        None => oz_count(ir, backend)?,
    };
    let fallback = |failed| BackupChoice {
        pass_list: PassList::single(flag),
        count: oz,
        additional_compilations: u64::from(!predicted.is_exactly(flag)),
        predicted_failed: failed,
    };
    if predicted.is_exactly(flag) {
        return Ok(fallback(false));
    }
    let count = match backend.apply_pass_list(ir, predicted) {
        Ok(CompileOutcome::Success { instruction_count, .. }) => instruction_count,
        Ok(CompileOutcome::Failure { .. }) | Err(BackendError::Timeout { .. } | BackendError::InvalidPassList(_)) => {
            return Ok(fallback(true))
        }
        Err(e) => return Err(e.into()),
    };
    if count < oz {
        Ok(BackupChoice { pass_list: predicted.clone(), count, additional_compilations: 1, predicted_failed: false })
    } else {
        Ok(fallback(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini::{passes, MiniBackend};

    fn func(id: &str, text: &str) -> IrFunction {
        IrFunction::new(id, "t", text).unwrap()
    }

    fn result(id: &str, list: &[&str]) -> TuneResult {
        TuneResult {
            function_id: id.into(),
            baseline_pass_list: PassList::single(OZ),
            baseline_count: 1,
            best_pass_list: PassList::new(list.iter().copied()),
            best_count: 1,
            evaluations_used: 1,
            failed_evaluations: 0,
            minimize_evaluations: 0,
        }
    }

    const F: &str = "define i32 @f() {\nret i32 0\n}";

    #[test]
    fn always_oz() {
        let p = predict_always_oz(&func("a", F));
        assert_eq!(p.pass_list, PassList::single(OZ));
        assert_eq!(p.extra_compilations, 0);
    }

    #[test]
    fn top_frequency_majority_and_ties() {
        let f = func("q", F);
        // 932 of 1000 functions best with -Oz.
        let mut rs: Vec<TuneResult> = (0..932).map(|i| result(&alloc::format!("o{i}"), &[OZ])).collect();
        rs.extend((0..68).map(|i| result(&alloc::format!("d{i}"), &["-dce"])));
        let t = FrequencyTable::from_results(&rs);
        assert_eq!(predict_top_frequency(&f, &t).unwrap().pass_list, PassList::single(OZ));

        let single = FrequencyTable::from_results([&result("x", &["-gvn"])]);
        assert_eq!(predict_top_frequency(&f, &single).unwrap().pass_list, PassList::single("-gvn"));

        let tie = FrequencyTable::from_results([&result("x", &["-gvn"]), &result("y", &["-dce"])]);
        assert_eq!(predict_top_frequency(&f, &tie).unwrap().pass_list, PassList::single("-dce"));

        assert_eq!(predict_top_frequency(&f, &FrequencyTable::default()), Err(PredictError::EmptyTable));
    }

    #[test]
    fn jaccard_by_hand() {
        // Bags {a:2, b:1} and {a:1, c:1}: min sum 1, max sum 2+1+1 = 4.
        assert_eq!(jaccard("a a b", "a c"), 0.25);
        assert_eq!(jaccard("x y", "y x"), 1.0);
        assert_eq!(jaccard("", ""), 1.0);
        assert_eq!(jaccard("x", ""), 0.0);
    }

    #[test]
    fn retrieval_picks_nearest() {
        // Query defines t0..t9; A reuses nine of those names, B only one.
        let query_words: Vec<String> = (0..10).map(|i| alloc::format!("t{i}")).collect();
        let mk = |id: &str, words: &[String]| {
            let body = words.iter().map(|w| alloc::format!("%{w} = add i32 0, 0")).collect::<Vec<_>>().join("\n");
            func(id, &alloc::format!("define void @f() {{\n{body}\nret void\n}}"))
        };
        let q = mk("q", &query_words);
        let mut a_words = query_words[..9].to_vec();
        a_words.push("z".into());
        let mut b_words = query_words[..1].to_vec();
        b_words.extend((0..9).map(|i| alloc::format!("w{i}")));
        let (a, b) = (mk("a", &a_words), mk("b", &b_words));
        let (la, lb) = (PassList::single("-dce"), PassList::single("-gvn"));
        let idx = RetrievalIndex::new([(&a, &la), (&b, &lb)]);
        assert_eq!(predict_retrieval(&q, &idx).unwrap().pass_list, la);
        assert_eq!(predict_retrieval(&a, &idx).unwrap().pass_list, la);
        assert_eq!(predict_retrieval(&b, &idx).unwrap().pass_list, lb);

        let one = RetrievalIndex::new([(&b, &lb)]);
        assert_eq!(predict_retrieval(&q, &one).unwrap().pass_list, lb);
        // Identical texts under two ids: the smaller id wins.
        let twin = mk("a0", &a_words);
        let tied = RetrievalIndex::new([(&a, &la), (&twin, &lb)]);
        assert_eq!(tied.nearest(&q.normalized_text).unwrap().0, "a");
        assert_eq!(predict_retrieval(&q, &RetrievalIndex::default()), Err(PredictError::EmptyIndex));
    }

    #[test]
    fn external_answer_parsing() {
        let p = parse_prediction_answer(
            "x",
            "Run passes -instcombine -simplifycfg to reduce instruction count from 14 to 7:",
            None,
        );
        assert_eq!(p.pass_list, PassList::new(["-instcombine", "-simplifycfg"]));
        assert_eq!((p.predicted_input_count, p.predicted_output_count), (Some(14), Some(7)));
        assert_eq!(p.predicted_code, None);
        assert!(!p.parse_failure);

        let bad = parse_prediction_answer("x", "I think -O3 is nice", None);
        assert!(bad.parse_failure);
        assert_eq!(bad.pass_list, PassList::single(OZ));

        let vocab = MiniBackend::vocabulary();
        let unknown = parse_prediction_answer("x", "Run passes -licm to reduce instruction count from 3 to 2:", Some(&vocab));
        assert!(unknown.parse_failure);
        assert!(prediction_from_list("x", PassList::single(OZ), Some(&vocab)) == Prediction::of_list("x", PassList::single(OZ)));
        assert!(prediction_from_list("x", PassList::empty(), None).parse_failure);
    }

    const IDENT: &str = "define i32 @f(i32 %a) {\n%b = add i32 %a, 0\n%p = alloca i32\nret i32 %b\n}";

    #[test]
    fn backup_rules() {
        let b = MiniBackend::new();
        let f = func("f", IDENT);
        let oz = oz_count(&f.normalized_text, &b).unwrap();
        assert_eq!(oz, 1);

        let same = with_oz_backup(&PassList::single(OZ), &f.normalized_text, &b, None).unwrap();
        assert_eq!((same.count, same.additional_compilations), (1, 0));

        let worse = with_oz_backup(&PassList::single(passes::GVN), &f.normalized_text, &b, Some(oz)).unwrap();
        assert_eq!(worse.pass_list, PassList::single(OZ));
        assert_eq!((worse.count, worse.additional_compilations), (1, 1));

        let equal = PassList::new([passes::INSTCOMBINE, passes::DCE]);
        let tie = with_oz_backup(&equal, &f.normalized_text, &b, Some(oz)).unwrap();
        assert_eq!(tie.pass_list, PassList::single(OZ));

        let bad = with_oz_backup(&PassList::single("-licm"), &f.normalized_text, &b, Some(oz)).unwrap();
        assert!(bad.predicted_failed);
        assert_eq!((bad.count, bad.additional_compilations), (1, 1));
    }

    #[test]
    fn backup_takes_strictly_better_list() {
        let b = MiniBackend::new();
        // Pretend -Oz reached only 3.
        let f = func("f", IDENT);
        let l = PassList::new([passes::INSTCOMBINE, passes::DCE]);
        let c = with_oz_backup(&l, &f.normalized_text, &b, Some(3)).unwrap();
        assert_eq!((c.pass_list, c.count, c.additional_compilations), (l, 1, 1));
    }
}
