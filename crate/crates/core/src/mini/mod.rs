//! Hermetic mini-IR compiler.
//!
//! A textual subset of LLVM-IR (i1/i32/i64; alloca, load, store, add, sub,
//! mul, icmp eq/ne/slt, br, ret) with six small passes and an `-Oz`
//! meta-flag. Small enough to enumerate pass lists exhaustively, yet passes
//! enable one another, so ordering matters.

pub mod cfg;
pub mod generate;
pub mod interp;
pub mod passes;
pub mod syntax;
pub mod verify;

use alloc::format;
use alloc::string::String;

use crate::backend::{
    Backend, BackendError, CompileOutcome, ErrorCategory, ErrorPatternTable, PassList, PassVocabulary, Verdict,
};
use crate::ir::{count_instructions, normalize, NormalizedIr};
use crate::OZ;

pub use generate::{generate_corpus, generate_function, MINI_DATASET};
pub use syntax::{parse_function, Function};

/// The in-process mini-IR backend.
#[derive(Debug, Clone, Default)]
pub struct MiniBackend {
    patterns: ErrorPatternTable,
}

impl MiniBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_patterns(patterns: ErrorPatternTable) -> Self {
        MiniBackend { patterns }
    }

    pub fn vocabulary() -> PassVocabulary {
        PassVocabulary::new(passes::PASSES, [OZ]).expect("mini vocabulary is well-formed")
    }

    /// Parses and verifies, classifying any diagnostic.
    pub fn compile(&self, text: &str) -> Result<Function, (ErrorCategory, String)> {
        let f = parse_function(text).map_err(|e| {
            let msg = format!("line {}: error: {}", e.line, e.message);
            (self.patterns.classify(&e.message), msg)
        })?;
        verify::verify(&f).map_err(|m| (self.patterns.classify(&m), format!("error: {m}")))?;
        Ok(f)
    }

    /// Applies `passes` to a parsed function in place. Names must already be
    /// validated against [`MiniBackend::vocabulary`].
    pub fn optimize(f: &mut Function, passes: &PassList) {
        for name in passes.items() {
            if name == OZ {
                passes::run_oz(f);
            } else {
                passes::run_pass(name, f).expect("validated pass name");
            }
        }
    }
}

impl Backend for MiniBackend {
    fn name(&self) -> &str {
        "mini"
    }

    fn list_passes(&self) -> Result<PassVocabulary, BackendError> {
        Ok(Self::vocabulary())
    }

    fn apply_pass_list(&self, ir: &NormalizedIr, passes: &PassList) -> Result<CompileOutcome, BackendError> {
        passes.validate(&Self::vocabulary(), None)?;
        let mut f = match self.compile(ir.as_str()) {
            Ok(f) => f,
            Err((error_category, error_message)) => {
                return Ok(CompileOutcome::Failure { error_category, error_message })
            }
        };
        let optimized_ir = if passes.is_empty() {
            ir.clone()
        } else {
            Self::optimize(&mut f, passes);
            normalize(&f.print())
        };
        let instruction_count = count_instructions(&optimized_ir)
            .map_err(|e| BackendError::Invocation(format!("printer produced malformed IR: {e}")))?;
        Ok(CompileOutcome::Success { optimized_ir, instruction_count })
    }

    fn verify_ir(&self, ir: &str) -> Result<Verdict, BackendError> {
        Ok(match self.compile(ir) {
            Ok(_) => Verdict::Valid,
            Err((category, message)) => Verdict::Invalid { category, message },
        })
    }
}
