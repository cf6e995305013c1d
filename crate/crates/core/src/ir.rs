//! IR text handling shared by every other module: the normalization lexer,
//! line-based instruction counting and the token estimate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Characters per token measured for the reference tokenizer on LLVM-IR.
pub const CHARS_PER_TOKEN: f64 = 2.02;

/// Default sequence budget shared by a prompt and its answer.
pub const DEFAULT_TOKEN_BUDGET: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("malformed function: {0}")]
    MalformedFunction(String),
    #[error("expected exactly one function definition, found {0}")]
    FunctionCount(usize),
    #[error("empty IR text")]
    Empty,
}

/// IR text after [`normalize`]: one item per line, no indentation, single
/// spaces between tokens, no comments, debug metadata or attribute groups.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct NormalizedIr {
    text: String,
}

impl NormalizedIr {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }

    /// Wraps text that is already known to be normalized, e.g. the output of
    /// a printer that emits the normalized form directly.
    ///
    /// Debug builds check the fixed-point property.
    pub fn from_normalized(text: String) -> Self {
        debug_assert_eq!(normalize(&text).text, text);
        NormalizedIr { text }
    }

    pub fn instruction_count(&self) -> Result<usize, IrError> {
        count_instructions(self)
    }
}

impl fmt::Display for NormalizedIr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl AsRef<str> for NormalizedIr {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// One normalized function with its provenance and size measures.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IrFunction {
    pub id: String,
    pub source_dataset: String,
    pub raw_text: String,
    pub normalized_text: NormalizedIr,
    pub instruction_count: usize,
    pub token_estimate: usize,
}

impl IrFunction {
    pub fn new(
        id: impl Into<String>,
        source_dataset: impl Into<String>,
        raw_text: impl Into<String>,
    ) -> Result<Self, IrError> {
        let raw_text = raw_text.into();
        if raw_text.trim().is_empty() {
            return Err(IrError::Empty);
        }
        let normalized_text = normalize(&raw_text);
        let defines = count_definitions(normalized_text.as_str());
        if defines != 1 {
            return Err(IrError::FunctionCount(defines));
        }
        let instruction_count = count_instructions(&normalized_text)?;
        let token_estimate = estimate_tokens(normalized_text.as_str());
        Ok(IrFunction {
            id: id.into(),
            source_dataset: source_dataset.into(),
            raw_text,
            normalized_text,
            instruction_count,
            token_estimate,
        })
    }

    /// Re-derives the normalized text and counts from `raw_text` and checks
    /// they match the stored fields.
    pub fn check_consistency(&self) -> Result<(), IrError> {
        let fresh = IrFunction::new(self.id.clone(), self.source_dataset.clone(), self.raw_text.clone())?;
        if fresh.normalized_text != self.normalized_text
            || fresh.instruction_count != self.instruction_count
            || fresh.token_estimate != self.token_estimate
        {
            return Err(IrError::MalformedFunction(alloc::format!(
                "stored fields of '{}' disagree with its raw text",
                self.id
            )));
        }
        Ok(())
    }
}

/// Splits one line into whitespace-separated words, keeping quoted strings
/// intact and cutting at a `;` comment.
fn line_words(line: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        if in_string {
            if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                start.get_or_insert(i);
            }
            ';' => {
                if let Some(s) = start.take() {
                    words.push(&line[s..i]);
                }
                return words;
            }
            c if c.is_whitespace() => {
                if let Some(s) = start.take() {
                    words.push(&line[s..i]);
                }
            }
            _ => {
                start.get_or_insert(i);
            }
        }
    }
    if let Some(s) = start {
        words.push(&line[s..]);
    }
    words
}

fn is_attribute_ref(word: &str) -> bool {
    let digits = word.strip_prefix('#').unwrap_or("");
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// `!dbg`, `!tbaa`, `!llvm.loop`: a named metadata attachment kind.
fn is_metadata_kind(word: &str) -> bool {
    word.strip_prefix('!')
        .and_then(|rest| rest.chars().next())
        .is_some_and(|c| c.is_ascii_alphabetic())
}

fn normalize_line(line: &str) -> Option<String> {
    let words = line_words(line);
    let first = *words.first()?;
    if first.starts_with('!') {
        return None;
    }
    if first == "attributes" && words.get(1).is_some_and(|w| w.starts_with('#')) {
        return None;
    }
    if words.iter().any(|w| w.contains("@llvm.dbg.")) {
        return None;
    }

    let words: Vec<&str> = words.into_iter().filter(|w| !is_attribute_ref(w)).collect();
    let mut kept: Vec<String> = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        if is_metadata_kind(w) && words.get(i + 1).is_some_and(|n| n.starts_with('!')) {
            if let Some(prev) = kept.last_mut() {
                if prev == "," {
                    kept.pop();
                } else if prev.ends_with(',') {
                    prev.pop();
                }
            }
            i += 2;
            continue;
        }
        kept.push(w.to_string());
        i += 1;
    }
    let attribute_group = kept.len() > 1 && kept[0] == "attributes" && kept[1].starts_with('#');
    if kept.is_empty() || kept[0].starts_with('!') || attribute_group {
        None
    } else {
        Some(kept.join(" "))
    }
}

/// Normalizes IR text.
///
/// Comments, debug metadata, `#N` attribute references and attribute group
/// lines are removed; indentation is stripped and horizontal whitespace runs
/// collapse to one space outside string literals. Lines are kept, except
/// ones left empty.
pub fn normalize(raw: &str) -> NormalizedIr {
    let mut out = String::with_capacity(raw.len());
    for line in raw.lines() {
        if let Some(l) = normalize_line(line) {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&l);
        }
    }
    NormalizedIr { text: out }
}

fn count_definitions(text: &str) -> usize {
    text.lines().filter(|l| l.starts_with("define ")).count()
}

/// Net `[`/`]` depth change of a line, ignoring string contents.
fn bracket_delta(line: &str) -> i64 {
    let mut depth = 0;
    let mut in_string = false;
    for c in line.chars() {
        match c {
            '"' => in_string = !in_string,
            '[' if !in_string => depth += 1,
            ']' if !in_string => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// Counts instruction lines inside function bodies.
///
/// Labels, `define` headers and closing braces do not count. An instruction
/// whose operand list spans several lines (a `switch` table) counts once.
pub fn count_instructions(ir: &NormalizedIr) -> Result<usize, IrError> {
    count_instruction_lines(ir.as_str())
}

pub(crate) fn count_instruction_lines(text: &str) -> Result<usize, IrError> {
    let mut count = 0;
    let mut in_body = false;
    let mut depth: i64 = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !in_body {
            if line.starts_with("define ") {
                if !line.ends_with('{') {
                    return Err(IrError::MalformedFunction(alloc::format!(
                        "line {}: function header without opening brace",
                        n + 1
                    )));
                }
                in_body = true;
                depth = 0;
            } else if line == "}" {
                return Err(IrError::MalformedFunction(alloc::format!(
                    "line {}: closing brace outside a function body",
                    n + 1
                )));
            }
            continue;
        }
        if line.starts_with("define ") {
            return Err(IrError::MalformedFunction(alloc::format!(
                "line {}: function definition inside a function body",
                n + 1
            )));
        }
        if depth > 0 {
            depth += bracket_delta(line);
            continue;
        }
        if line == "}" {
            in_body = false;
            continue;
        }
        if line.ends_with(':') {
            continue;
        }
        count += 1;
        depth = bracket_delta(line).max(0);
    }
    if in_body {
        return Err(IrError::MalformedFunction("unterminated function body".to_string()));
    }
    Ok(count)
}

/// `ceil(chars / 2.02)`, computed in integers so it is exact.
pub fn estimate_tokens(text: &str) -> usize {
    let chars = text.chars().count();
    (chars * 100).div_ceil(202)
}

fn is_punct(c: char) -> bool {
    matches!(c, ',' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | '=' | '*' | ':')
}

/// Splits IR text into lexer tokens: identifiers and literals, single
/// punctuation characters, and whole string literals. Used by the text
/// similarity metrics.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut in_string = false;
    for (i, c) in text.char_indices() {
        if in_string {
            if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
            start.get_or_insert(i);
        } else if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(&text[s..i]);
            }
        } else if is_punct(c) {
            if let Some(s) = start.take() {
                tokens.push(&text[s..i]);
            }
            tokens.push(&text[i..i + c.len_utf8()]);
        } else {
            start.get_or_insert(i);
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_comment_and_collapses_whitespace() {
        assert_eq!(normalize("  %a = add i32 %x, 1   ; incr").as_str(), "%a = add i32 %x, 1");
    }

    #[test]
    fn strips_debug_attachment() {
        assert_eq!(normalize("store i32 0, i32* %p, !dbg !7").as_str(), "store i32 0, i32* %p");
        assert_eq!(
            normalize("%v = load i32, i32* %p, align 4, !tbaa !3, !dbg !9").as_str(),
            "%v = load i32, i32* %p, align 4"
        );
    }

    #[test]
    fn strips_metadata_and_attribute_lines() {
        let raw = "; ModuleID = 'x.c'\n\
                   define dso_local i32 @f(i32 %0) #0 !dbg !7 {\n\
                   \x20 call void @llvm.dbg.value(metadata i32 %0, metadata !12, metadata !DIExpression()), !dbg !13\n\
                   \x20 ret i32 %0, !dbg !14\n\
                   }\n\
                   \n\
                   attributes #0 = { noinline nounwind }\n\
                   !llvm.module.flags = !{!0}\n\
                   !0 = !{i32 2, !\"Dwarf Version\", i32 4}\n";
        assert_eq!(
            normalize(raw).as_str(),
            "define dso_local i32 @f(i32 %0) {\nret i32 %0\n}"
        );
    }

    #[test]
    fn keeps_string_contents() {
        let raw = "@.str = private constant [8 x i8] c\"a  b ; c\\00\", align 1 ; tail";
        assert_eq!(
            normalize(raw).as_str(),
            "@.str = private constant [8 x i8] c\"a  b ; c\\00\", align 1"
        );
    }

    #[test]
    fn counts_instruction_lines() {
        let ir = normalize("define i32 @f() {\nret i32 0\n}");
        assert_eq!(count_instructions(&ir).unwrap(), 1);

        let ir = normalize(
            "define i32 @f(i32 %a) {\n%1 = alloca i32\nstore i32 %a, i32* %1\n%2 = load i32, i32* %1\nret i32 %2\n}",
        );
        assert_eq!(count_instructions(&ir).unwrap(), 4);

        let ir = normalize("define void @f() {\nbr label %7\n7:\nret void\n}");
        assert_eq!(count_instructions(&ir).unwrap(), 2);
    }

    #[test]
    fn multi_line_switch_counts_once() {
        let ir = normalize(
            "define void @f(i32 %x) {\nswitch i32 %x, label %d [\n  i32 1, label %a\n  i32 2, label %d\n]\na:\nret void\nd:\nret void\n}",
        );
        assert_eq!(count_instructions(&ir).unwrap(), 3);
    }

    #[test]
    fn unbalanced_braces_are_malformed() {
        assert!(count_instructions(&normalize("define i32 @f() {\nret i32 0")).is_err());
        assert!(count_instructions(&normalize("ret i32 0\n}")).is_err());
        assert!(count_instructions(&normalize("define i32 @f() {\ndefine i32 @g() {\n}\n}")).is_err());
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens(&"x".repeat(202)), 100);
        assert_eq!(estimate_tokens(&"x".repeat(203)), 101);
        assert_eq!(estimate_tokens("x"), 1);
        // 2 KB of prompt plus 2 KB of answer fill roughly the 2,048-token window.
        let both_halves = estimate_tokens(&"x".repeat(2048)) * 2;
        assert!((2000..=2048).contains(&both_halves), "{both_halves}");
    }

    #[test]
    fn function_record_requires_one_definition() {
        assert_eq!(IrFunction::new("a", "d", "   ").unwrap_err(), IrError::Empty);
        assert_eq!(
            IrFunction::new("a", "d", "define i32 @f() {\nret i32 0\n}\ndefine i32 @g() {\nret i32 1\n}")
                .unwrap_err(),
            IrError::FunctionCount(2)
        );
        let f = IrFunction::new("a", "d", "define i32 @f() {\n  ret i32 0 ; x\n}").unwrap();
        assert_eq!(f.instruction_count, 1);
        assert_eq!(f.token_estimate, estimate_tokens(f.normalized_text.as_str()));
        f.check_consistency().unwrap();
    }

    #[test]
    fn lexer_tokens() {
        assert_eq!(
            tokenize("%a = add i32 %x, 1"),
            ["%a", "=", "add", "i32", "%x", ",", "1"]
        );
        assert_eq!(tokenize("c\"a b\", x"), ["c\"a b\"", ",", "x"]);
    }

    fn ir_like() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            Just("define i32 @f(i32 %0) #0 {".to_string()),
            Just("}".to_string()),
            Just("  %1 = add nsw i32 %0, 1".to_string()),
            Just("\t\tstore i32 %1, i32* %p, align 4, !dbg !12".to_string()),
            Just("; comment only".to_string()),
            Just("attributes #0 = { nounwind }".to_string()),
            Just("!7 = !{}".to_string()),
            Just("".to_string()),
            Just("@s = constant [3 x i8] c\"; #0\"".to_string()),
            "[ -~\t]{0,40}",
        ];
        proptest::collection::vec(piece, 0..12).prop_map(|v| v.join("\n"))
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in ir_like()) {
            let once = normalize(&raw);
            let twice = normalize(once.as_str());
            prop_assert_eq!(&once, &twice);
            for line in once.as_str().lines() {
                prop_assert!(!line.starts_with(char::is_whitespace));
                prop_assert!(!line.is_empty());
            }
        }

        #[test]
        fn counting_stable_under_renormalization(raw in ir_like()) {
            let once = normalize(&raw);
            let twice = normalize(once.as_str());
            prop_assert_eq!(count_instructions(&once), count_instructions(&twice));
        }

        #[test]
        fn token_estimate_monotone(a in 0usize..5000, b in 0usize..5000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(estimate_tokens(&"y".repeat(lo)) <= estimate_tokens(&"y".repeat(hi)));
        }
    }
}
