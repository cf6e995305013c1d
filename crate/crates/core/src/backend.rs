//! The compiler abstraction: pass vocabularies, pass lists, compile outcomes
//! and diagnostic classification.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::ir::NormalizedIr;

/// Default cap on pass-list length during search.
pub const DEFAULT_MAX_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabularyError {
    #[error("vocabulary has no passes")]
    NoPasses,
    #[error("vocabulary has no meta-flags")]
    NoMetaFlags,
    #[error("'{0}' listed twice")]
    Duplicate(String),
}

/// The passes a backend accepts, plus the meta-flags that expand to a
/// built-in pipeline and may occur at most once per list.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PassVocabulary {
    passes: Vec<String>,
    meta_flags: Vec<String>,
}

impl PassVocabulary {
    pub fn new<P, M>(passes: P, meta_flags: M) -> Result<Self, VocabularyError>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        M: IntoIterator,
        M::Item: Into<String>,
    {
        let passes: Vec<String> = passes.into_iter().map(Into::into).collect();
        let meta_flags: Vec<String> = meta_flags.into_iter().map(Into::into).collect();
        if passes.is_empty() {
            return Err(VocabularyError::NoPasses);
        }
        if meta_flags.is_empty() {
            return Err(VocabularyError::NoMetaFlags);
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for name in passes.iter().chain(&meta_flags) {
            if !seen.insert(name.as_str()) {
                return Err(VocabularyError::Duplicate(name.clone()));
            }
        }
        Ok(PassVocabulary { passes, meta_flags })
    }

    pub fn passes(&self) -> &[String] {
        &self.passes
    }

    pub fn meta_flags(&self) -> &[String] {
        &self.meta_flags
    }

    /// Passes followed by meta-flags; the sampling alphabet of the autotuner.
    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.passes.iter().chain(&self.meta_flags).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.passes.len() + self.meta_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, name: &str) -> bool {
        self.is_pass(name) || self.is_meta(name)
    }

    pub fn is_pass(&self, name: &str) -> bool {
        self.passes.iter().any(|p| p == name)
    }

    pub fn is_meta(&self, name: &str) -> bool {
        self.meta_flags.iter().any(|p| p == name)
    }

    /// Number of distinct valid lists with length in `1..=max_len`, or
    /// `None` when it does not fit in a `u128`.
    pub fn list_space_size(&self, max_len: usize) -> Option<u128> {
        let p = self.passes.len() as u128;
        let m = self.meta_flags.len();
        let mut total: u128 = 0;
        for len in 1..=max_len {
            // Choose k positions for distinct meta-flags, fill the rest with passes.
            for k in 0..=m.min(len) {
                let positions = binomial(len as u128, k as u128)?;
                let mut arrangements: u128 = 1;
                for j in 0..k {
                    arrangements = arrangements.checked_mul((m - j) as u128)?;
                }
                let fill = p.checked_pow((len - k) as u32)?;
                let term = positions.checked_mul(arrangements)?.checked_mul(fill)?;
                total = total.checked_add(term)?;
            }
        }
        Some(total)
    }
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul(n - i)? / (i + 1);
    }
    Some(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PassListError {
    #[error("'{0}' is not in the pass vocabulary")]
    UnknownPass(String),
    #[error("meta-flag '{0}' occurs more than once")]
    RepeatedMetaFlag(String),
    #[error("pass list has {len} entries, the maximum is {max}")]
    TooLong { len: usize, max: usize },
}

/// An ordered sequence of pass names. Ordering is lexicographic over the
/// names, which the autotuner uses as its last tie-breaker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PassList(Vec<String>);

impl PassList {
    pub fn new<I>(items: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        PassList(items.into_iter().map(Into::into).collect())
    }

    pub fn single(name: &str) -> Self {
        PassList(alloc::vec![name.to_owned()])
    }

    pub fn empty() -> Self {
        PassList(Vec::new())
    }

    pub fn items(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_exactly(&self, name: &str) -> bool {
        self.0.len() == 1 && self.0[0] == name
    }

    pub fn without(&self, index: usize) -> PassList {
        let mut items = self.0.clone();
        items.remove(index);
        PassList(items)
    }

    pub fn validate(&self, vocab: &PassVocabulary, max_len: Option<usize>) -> Result<(), PassListError> {
        if let Some(max) = max_len {
            if self.0.len() > max {
                return Err(PassListError::TooLong { len: self.0.len(), max });
            }
        }
        for (i, name) in self.0.iter().enumerate() {
            if !vocab.contains(name) {
                return Err(PassListError::UnknownPass(name.clone()));
            }
            if vocab.is_meta(name) && self.0[..i].contains(name) {
                return Err(PassListError::RepeatedMetaFlag(name.clone()));
            }
        }
        Ok(())
    }

    /// Parses a whitespace-separated list.
    pub fn parse(text: &str) -> Self {
        PassList(text.split_whitespace().map(ToString::to_string).collect())
    }
}

impl fmt::Display for PassList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(p)?;
        }
        Ok(())
    }
}

/// Compile-error categories for model-generated code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ErrorCategory {
    TypeError,
    ForwardReference,
    UndefinedValue,
    InvalidRedefinition,
    SyntaxError,
    InvalidConstant,
    UndefinedFunction,
    IndexError,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 9] = [
        ErrorCategory::TypeError,
        ErrorCategory::ForwardReference,
        ErrorCategory::UndefinedValue,
        ErrorCategory::InvalidRedefinition,
        ErrorCategory::SyntaxError,
        ErrorCategory::InvalidConstant,
        ErrorCategory::UndefinedFunction,
        ErrorCategory::IndexError,
        ErrorCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::TypeError => "type_error",
            ErrorCategory::ForwardReference => "forward_reference",
            ErrorCategory::UndefinedValue => "undefined_value",
            ErrorCategory::InvalidRedefinition => "invalid_redefinition",
            ErrorCategory::SyntaxError => "syntax_error",
            ErrorCategory::InvalidConstant => "invalid_constant",
            ErrorCategory::UndefinedFunction => "undefined_function",
            ErrorCategory::IndexError => "index_error",
            ErrorCategory::Other => "other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown error category '{0}'")]
pub struct UnknownCategory(pub String);

impl FromStr for ErrorCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternTableError {
    #[error("line {line}: expected '<category>\\t<pattern>'")]
    Malformed { line: usize },
    #[error("line {line}: {source}")]
    Category { line: usize, source: UnknownCategory },
}

/// Ordered first-match table from diagnostic substrings to categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorPatternTable {
    rules: Vec<(ErrorCategory, String)>,
}

const DEFAULT_PATTERNS: &str = include_str!("../data/error_patterns.tsv");

impl Default for ErrorPatternTable {
    fn default() -> Self {
        ErrorPatternTable::parse(DEFAULT_PATTERNS).expect("built-in pattern table parses")
    }
}

impl ErrorPatternTable {
    /// Parses `category<TAB>pattern` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, PatternTableError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (cat, pat) = line
                .split_once('\t')
                .ok_or(PatternTableError::Malformed { line: line_no })?;
            let category = cat
                .trim()
                .parse()
                .map_err(|source| PatternTableError::Category { line: line_no, source })?;
            if pat.is_empty() {
                return Err(PatternTableError::Malformed { line: line_no });
            }
            rules.push((category, pat.to_lowercase()));
        }
        Ok(ErrorPatternTable { rules })
    }

    pub fn rules(&self) -> &[(ErrorCategory, String)] {
        &self.rules
    }

    /// Appends rules after the existing ones.
    pub fn extend(&mut self, other: ErrorPatternTable) {
        self.rules.extend(other.rules);
    }

    pub fn classify(&self, diagnostic: &str) -> ErrorCategory {
        let lowered = diagnostic.to_lowercase();
        self.rules
            .iter()
            .find(|(_, pat)| lowered.contains(pat.as_str()))
            .map_or(ErrorCategory::Other, |(cat, _)| *cat)
    }
}

/// Result of applying a pass list.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "status", rename_all = "snake_case"))]
pub enum CompileOutcome {
    Success {
        optimized_ir: NormalizedIr,
        instruction_count: usize,
    },
    Failure {
        error_category: ErrorCategory,
        error_message: String,
    },
}

impl CompileOutcome {
    pub fn count(&self) -> Option<usize> {
        match self {
            CompileOutcome::Success { instruction_count, .. } => Some(*instruction_count),
            CompileOutcome::Failure { .. } => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, CompileOutcome::Success { .. })
    }
}

/// Result of verifying IR text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid { category: ErrorCategory, message: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("compiler timed out after {seconds} s")]
    Timeout { seconds: u64 },
    #[error("invalid pass list: {0}")]
    InvalidPassList(#[from] PassListError),
    #[error("compiler invocation failed: {0}")]
    Invocation(String),
}

/// A compiler that can apply pass lists to IR.
///
/// Implementations are immutable after construction and are shared across
/// worker threads.
pub trait Backend: Sync {
    fn name(&self) -> &str;

    fn list_passes(&self) -> Result<PassVocabulary, BackendError>;

    /// Applies `passes` in order. An empty list returns the input unchanged.
    /// Invalid input IR yields [`CompileOutcome::Failure`], not an error.
    fn apply_pass_list(&self, ir: &NormalizedIr, passes: &PassList) -> Result<CompileOutcome, BackendError>;

    fn verify_ir(&self, ir: &str) -> Result<Verdict, BackendError>;

    /// Name of the baseline meta-flag.
    fn baseline_flag(&self) -> &str {
        crate::OZ
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn list_passes(&self) -> Result<PassVocabulary, BackendError> {
        (**self).list_passes()
    }
    fn apply_pass_list(&self, ir: &NormalizedIr, passes: &PassList) -> Result<CompileOutcome, BackendError> {
        (**self).apply_pass_list(ir, passes)
    }
    fn verify_ir(&self, ir: &str) -> Result<Verdict, BackendError> {
        (**self).verify_ir(ir)
    }
    fn baseline_flag(&self) -> &str {
        (**self).baseline_flag()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mini_vocab() -> PassVocabulary {
        PassVocabulary::new(["-a", "-b", "-c", "-d", "-e", "-f"], ["-Oz"]).unwrap()
    }

    #[test]
    fn vocabulary_rejects_overlap_and_empty() {
        assert_eq!(
            PassVocabulary::new(["-a", "-Oz"], ["-Oz"]).unwrap_err(),
            VocabularyError::Duplicate("-Oz".into())
        );
        assert_eq!(PassVocabulary::new(Vec::<String>::new(), ["-Oz"]).unwrap_err(), VocabularyError::NoPasses);
        assert_eq!(PassVocabulary::new(["-a"], Vec::<String>::new()).unwrap_err(), VocabularyError::NoMetaFlags);
    }

    #[test]
    fn space_size_matches_enumeration() {
        let v = mini_vocab();
        // Brute force: all sequences over 7 names, at most one -Oz.
        let names: Vec<&str> = v.names().collect();
        let mut count = 0u128;
        let mut stack: Vec<Vec<&str>> = vec![vec![]];
        while let Some(list) = stack.pop() {
            if !list.is_empty() {
                count += 1;
            }
            if list.len() == 3 {
                continue;
            }
            for n in &names {
                if *n == "-Oz" && list.contains(n) {
                    continue;
                }
                let mut next = list.clone();
                next.push(n);
                stack.push(next);
            }
        }
        assert_eq!(count, 379);
        assert_eq!(v.list_space_size(3), Some(count));
        assert_eq!(v.list_space_size(0), Some(0));
    }

    #[test]
    fn pass_list_validation() {
        let v = mini_vocab();
        assert!(PassList::new(["-a", "-Oz", "-a"]).validate(&v, Some(12)).is_ok());
        assert_eq!(
            PassList::new(["-Oz", "-a", "-Oz"]).validate(&v, None),
            Err(PassListError::RepeatedMetaFlag("-Oz".into()))
        );
        assert_eq!(
            PassList::new(["-zz"]).validate(&v, None),
            Err(PassListError::UnknownPass("-zz".into()))
        );
        assert_eq!(
            PassList::new(["-a", "-b"]).validate(&v, Some(1)),
            Err(PassListError::TooLong { len: 2, max: 1 })
        );
    }

    #[test]
    fn pass_list_ordering_is_lexicographic() {
        assert!(PassList::new(["-a", "-b"]) < PassList::new(["-a", "-c"]));
        assert!(PassList::new(["-a"]) < PassList::new(["-a", "-a"]));
        assert_eq!(PassList::parse(" -a  -b ").to_string(), "-a -b");
    }

    #[test]
    fn classifies_sample_diagnostics() {
        let t = ErrorPatternTable::default();
        assert_eq!(
            t.classify("error: '%15' defined with type 'i32' but expected 'i1'"),
            ErrorCategory::TypeError
        );
        assert_eq!(
            t.classify("error: floating point constant invalid for type"),
            ErrorCategory::InvalidConstant
        );
        assert_eq!(t.classify("error: constant expression type mismatch"), ErrorCategory::TypeError);
        assert_eq!(t.classify("error: use of undefined value '%x'"), ErrorCategory::UndefinedValue);
        assert_eq!(t.classify("error: use of undefined value '@g'"), ErrorCategory::UndefinedFunction);
        assert_eq!(
            t.classify("error: multiple definition of local value named 'x'"),
            ErrorCategory::InvalidRedefinition
        );
        assert_eq!(t.classify("error: expected instruction opcode"), ErrorCategory::SyntaxError);
        assert_eq!(t.classify("Instruction does not dominate all uses!"), ErrorCategory::ForwardReference);
        assert_eq!(t.classify("error: invalid getelementptr indices"), ErrorCategory::IndexError);
        assert_eq!(t.classify("something else entirely"), ErrorCategory::Other);
    }

    #[test]
    fn pattern_table_parse_errors() {
        assert_eq!(
            ErrorPatternTable::parse("type_error no tab").unwrap_err(),
            PatternTableError::Malformed { line: 1 }
        );
        assert!(matches!(
            ErrorPatternTable::parse("# c\nbogus\tx").unwrap_err(),
            PatternTableError::Category { line: 2, .. }
        ));
        let mut t = ErrorPatternTable::parse("index_error\tzzz").unwrap();
        t.extend(ErrorPatternTable::parse("other\tyyy").unwrap());
        assert_eq!(t.rules().len(), 2);
        assert_eq!(t.classify("ZZZ"), ErrorCategory::IndexError);
    }

    #[test]
    fn category_names_round_trip() {
        for c in ErrorCategory::ALL {
            assert_eq!(c.as_str().parse::<ErrorCategory>().unwrap(), c);
        }
    }
}
