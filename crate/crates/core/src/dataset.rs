//! Prompt/answer corpora: pass-ordering records built from tuning results,
//! single-pass translation records, deduplication and splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autotune::TuneResult;
use crate::backend::{Backend, BackendError, CompileOutcome, PassList, PassVocabulary};
use crate::ir::{estimate_tokens, IrFunction, NormalizedIr};
use crate::seed::derive_seed;

const ANSWER_HEAD: &str = "Run passes ";
const ANSWER_MID: &str = " to reduce instruction count from ";
const SINGLE_HEAD: &str = "Optimize the following LLVM-IR using ";

/// Renders the answer text: a header line naming the passes and counts,
/// a blank line, then the optimized IR.
pub fn render_answer(pass_list: &PassList, input_count: usize, output_count: usize, code: &str) -> String {
    format!("{ANSWER_HEAD}{pass_list}{ANSWER_MID}{input_count} to {output_count}:\n\n{code}")
}

/// Prompt for translating IR through exactly one pass.
pub fn render_single_pass_prompt(pass: &str, ir: &str) -> String {
    format!("{SINGLE_HEAD}{pass}:\n\n{ir}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub pass_list: PassList,
    pub input_count: usize,
    pub output_count: usize,
    /// Empty when the answer has only a header line.
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerParseError {
    #[error("answer does not start with '{ANSWER_HEAD}'")]
    MissingHeader,
    #[error("answer header does not name any passes")]
    EmptyPassList,
    #[error("malformed instruction counts in answer header")]
    BadCounts,
    #[error("answer header must be followed by a blank line")]
    MissingBlankLine,
}

/// Inverse of [`render_answer`].
pub fn parse_answer(text: &str) -> Result<ParsedAnswer, AnswerParseError> {
    let (header, rest) = match text.find('\n') {
        Some(i) => (&text[..i], Some(&text[i + 1..])),
        None => (text, None),
    };
    let header = header.strip_suffix('\r').unwrap_or(header);
    let body = header.strip_prefix(ANSWER_HEAD).ok_or(AnswerParseError::MissingHeader)?;
    let body = body.strip_suffix(':').ok_or(AnswerParseError::BadCounts)?;
    let mid = body.rfind(ANSWER_MID).ok_or(AnswerParseError::BadCounts)?;
    let pass_list = PassList::parse(&body[..mid]);
    if pass_list.is_empty() {
        return Err(AnswerParseError::EmptyPassList);
    }
    let counts = &body[mid + ANSWER_MID.len()..];
    let (a, b) = counts.split_once(" to ").ok_or(AnswerParseError::BadCounts)?;
    let parse_count = |s: &str| {
        if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
            return Err(AnswerParseError::BadCounts);
        }
        s.parse::<usize>().map_err(|_| AnswerParseError::BadCounts)
    };
    let (input_count, output_count) = (parse_count(a)?, parse_count(b)?);
    let code = match rest {
        None | Some("") => String::new(),
        Some(r) => String::from(r.strip_prefix('\n').ok_or(AnswerParseError::MissingBlankLine)?),
    };
    Ok(ParsedAnswer { pass_list, input_count, output_count, code })
}

/// Target pass and IR of a single-pass prompt.
pub fn parse_single_pass_prompt(text: &str) -> Option<(&str, &str)> {
    let rest = text.strip_prefix(SINGLE_HEAD)?;
    let (header, ir) = rest.split_once(":\n\n")?;
    (!header.is_empty() && !header.contains(char::is_whitespace)).then_some((header, ir))
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PassOrderingRecord {
    pub function_id: String,
    pub prompt: String,
    pub answer: String,
    pub pass_list: PassList,
    pub input_count: usize,
    pub output_count: usize,
    /// Prompt plus answer exceed the token budget.
    pub truncated: bool,
}

impl PassOrderingRecord {
    pub fn new(
        function_id: impl Into<String>,
        prompt: &NormalizedIr,
        pass_list: PassList,
        input_count: usize,
        output_count: usize,
        optimized: &NormalizedIr,
        token_budget: usize,
    ) -> Self {
        let prompt = String::from(prompt.as_str());
        let answer = render_answer(&pass_list, input_count, output_count, optimized.as_str());
        let truncated = estimate_tokens(&prompt) + estimate_tokens(&answer) > token_budget;
        PassOrderingRecord {
            function_id: function_id.into(),
            prompt,
            answer,
            pass_list,
            input_count,
            output_count,
            truncated,
        }
    }

    /// Optimized code carried by the answer.
    pub fn optimized_code(&self) -> &str {
        self.answer.split_once("\n\n").map_or("", |(_, c)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SinglePassRecord {
    pub function_id: String,
    pub target_pass: String,
    pub prefix_passes: PassList,
    pub prompt: String,
    pub answer: String,
}

/// A record that could not be built, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecordFailure {
    pub function_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("records per pass must be at least 1")]
    ZeroPerPass,
    #[error("'{0}' is not a pass of the backend vocabulary")]
    UnknownPass(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Keeps the first function per distinct normalized text, dropping any
/// whose text also occurs in `exclude`.
pub fn dedup(corpus: &[IrFunction], exclude: Option<&[IrFunction]>) -> Vec<IrFunction> {
    let mut seen: BTreeSet<&str> = exclude
        .unwrap_or_default()
        .iter()
        .map(|f| f.normalized_text.as_str())
        .collect();
    corpus
        .iter()
        .filter(|f| seen.insert(f.normalized_text.as_str()))
        .cloned()
        .collect()
}

/// Compiles the best list of one tuning result into a record.
pub fn build_pass_record<B: Backend + ?Sized>(
    func: &IrFunction,
    result: &TuneResult,
    backend: &B,
    token_budget: usize,
) -> Result<PassOrderingRecord, RecordFailure> {
    let fail = |reason: String| RecordFailure { function_id: func.id.clone(), reason };
    match backend.apply_pass_list(&func.normalized_text, &result.best_pass_list) {
        Ok(CompileOutcome::Success { optimized_ir, instruction_count }) => Ok(PassOrderingRecord::new(
            func.id.clone(),
            &func.normalized_text,
            result.best_pass_list.clone(),
            func.instruction_count,
            instruction_count,
            &optimized_ir,
            token_budget,
        )),
        Ok(CompileOutcome::Failure { error_category, error_message }) => {
            Err(fail(format!("{error_category}: {error_message}")))
        }
        Err(e) => Err(fail(format!("{e}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassDataset {
    pub records: Vec<PassOrderingRecord>,
    pub failures: Vec<RecordFailure>,
}

/// One record per tuning result, in corpus order. Results whose function
/// is missing from the corpus are reported as failures.
pub fn build_pass_dataset<B: Backend + ?Sized>(
    results: &BTreeMap<String, TuneResult>,
    corpus: &[IrFunction],
    backend: &B,
    token_budget: usize,
) -> PassDataset {
    let mut out = PassDataset::default();
    let mut used = BTreeSet::new();
    for func in corpus {
        if let Some(result) = results.get(&func.id) {
            used.insert(func.id.as_str());
            match build_pass_record(func, result, backend, token_budget) {
                Ok(r) => out.records.push(r),
                Err(f) => out.failures.push(f),
            }
        }
    }
    for id in results.keys().filter(|id| !used.contains(id.as_str())) {
        out.failures.push(RecordFailure { function_id: id.clone(), reason: String::from("function not in corpus") });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinglePassSet {
    pub target_pass: String,
    pub records: Vec<SinglePassRecord>,
    /// Set when fewer than the requested number of unique records were found.
    pub shortfall: Option<usize>,
}

/// Attempts per requested record before giving up on uniqueness.
pub const ATTEMPTS_PER_RECORD: usize = 50;

fn success_ir<B: Backend + ?Sized>(
    backend: &B,
    ir: &NormalizedIr,
    list: &PassList,
) -> Result<Option<NormalizedIr>, BackendError> {
    match backend.apply_pass_list(ir, list) {
        Ok(CompileOutcome::Success { optimized_ir, .. }) => Ok(Some(optimized_ir)),
        Ok(CompileOutcome::Failure { .. }) | Err(BackendError::Timeout { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Samples `per_pass` unique records for one target pass. Each record runs
/// a random prefix of non-meta passes (length uniform in
/// `0..=max_prefix_len`) on a random function, then the target pass.
pub fn build_single_pass_for<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    backend: &B,
    vocab: &PassVocabulary,
    target: &str,
    per_pass: usize,
    max_prefix_len: usize,
    seed: u64,
) -> Result<SinglePassSet, DatasetError> {
    if per_pass == 0 {
        return Err(DatasetError::ZeroPerPass);
    }
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    if !vocab.contains(target) {
        return Err(DatasetError::UnknownPass(String::from(target)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, target));
    let target_list = PassList::single(target);
    let mut prompts = BTreeSet::new();
    let mut records = Vec::new();
    for _ in 0..per_pass.saturating_mul(ATTEMPTS_PER_RECORD) {
        if records.len() == per_pass {
            break;
        }
        let func = &corpus[rng.gen_range(0..corpus.len())];
        let len = rng.gen_range(0..=max_prefix_len);
        let prefix = PassList::new((0..len).map(|_| vocab.passes()[rng.gen_range(0..vocab.passes().len())].as_str()));
        let Some(input) = success_ir(backend, &func.normalized_text, &prefix)? else { continue };
        let prompt = render_single_pass_prompt(target, input.as_str());
        if prompts.contains(&prompt) {
            continue;
        }
        let Some(output) = success_ir(backend, &input, &target_list)? else { continue };
        if !backend.verify_ir(output.as_str())?.is_valid() {
            continue;
        }
        prompts.insert(prompt.clone());
        records.push(SinglePassRecord {
            function_id: func.id.clone(),
            target_pass: String::from(target),
            prefix_passes: prefix,
            prompt,
            answer: output.into_string(),
        });
    }
    let shortfall = (records.len() < per_pass).then(|| per_pass - records.len());
    Ok(SinglePassSet { target_pass: String::from(target), records, shortfall })
}

/// [`build_single_pass_for`] over every target pass, in the given order.
pub fn build_single_pass_dataset<B: Backend + ?Sized>(
    corpus: &[IrFunction],
    backend: &B,
    passes: &[String],
    per_pass: usize,
    max_prefix_len: usize,
    seed: u64,
) -> Result<Vec<SinglePassSet>, DatasetError> {
    let vocab = backend.list_passes()?;
    passes
        .iter()
        .map(|p| build_single_pass_for(corpus, backend, &vocab, p, per_pass, max_prefix_len, seed))
        .collect()
}

/// Part sizes for `n` items by the largest-remainder rule; ties go to the
/// earlier part.
pub fn split_sizes(n: usize, fractions: &[f64]) -> Result<Vec<usize>, DatasetError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| f.is_nan() || *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadFractions(fractions.to_vec()));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let mut left = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - sizes[a] as f64, exact[b] - sizes[b] as f64);
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    Ok(sizes)
}

/// Seeded disjoint partition covering the corpus. Each part keeps corpus
/// order.
pub fn split(corpus: &[IrFunction], fractions: &[f64], seed: u64) -> Result<Vec<Vec<IrFunction>>, DatasetError> {
    let sizes = split_sizes(corpus.len(), fractions)?;
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let mut chosen = idx[start..start + size].to_vec();
        chosen.sort_unstable();
        parts.push(chosen.into_iter().map(|i| corpus[i].clone()).collect());
        start += size;
    }
    Ok(parts)
}

/// Corpus statistics: function count, instruction total, text size and
/// token estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorpusSummary {
    pub functions: usize,
    pub unoptimized_instructions: u64,
    pub text_bytes: u64,
    pub token_estimate: u64,
}

pub fn corpus_summary(corpus: &[IrFunction]) -> CorpusSummary {
    corpus.iter().fold(CorpusSummary::default(), |mut s, f| {
        s.functions += 1;
        s.unoptimized_instructions += f.instruction_count as u64;
        s.text_bytes += f.normalized_text.as_str().len() as u64;
        s.token_estimate += f.token_estimate as u64;
        s
    })
}
