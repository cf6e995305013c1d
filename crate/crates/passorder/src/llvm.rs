//! Backend that shells out to LLVM's `opt`.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use passorder_core::backend::VocabularyError;
use passorder_core::ir::{count_instructions, normalize, NormalizedIr};
use passorder_core::{Backend, BackendError, CompileOutcome, ErrorPatternTable, PassList, PassVocabulary, Verdict};
use wait_timeout::ChildExt;

/// Environment variable naming the `opt` executable.
pub const OPT_ENV: &str = "PASSORDER_OPT";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

const LLVM10_VOCAB: &str = include_str!("../data/llvm10_passes.txt");

/// Parses a vocabulary file: one name per line, `#` comments, and a
/// `[meta]` line after which names are meta-flags.
pub fn parse_vocabulary(text: &str) -> Result<PassVocabulary, VocabularyError> {
    let (mut passes, mut metas) = (Vec::new(), Vec::new());
    let mut in_meta = false;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[meta]" {
            in_meta = true;
        } else if in_meta {
            metas.push(line);
        } else {
            passes.push(line);
        }
    }
    PassVocabulary::new(passes, metas)
}

/// The bundled LLVM 10 vocabulary: 122 passes and six meta-flags.
pub fn llvm10_vocabulary() -> PassVocabulary {
    parse_vocabulary(LLVM10_VOCAB).expect("bundled vocabulary is well-formed")
}

/// Finds `opt`: an explicit path, then `$PASSORDER_OPT`, then `opt` on `PATH`.
pub fn locate_opt(explicit: Option<&Path>) -> Result<PathBuf, BackendError> {
    if let Some(p) = explicit {
        return if p.is_file() {
            Ok(p.to_path_buf())
        } else {
            Err(BackendError::Unavailable(format!("optimizer '{}' does not exist", p.display())))
        };
    }
    if let Some(p) = std::env::var_os(OPT_ENV).filter(|p| !p.is_empty()) {
        return locate_opt(Some(Path::new(&p)));
    }
    std::env::var_os("PATH")
        .iter()
        .flat_map(std::env::split_paths)
        .map(|dir| dir.join("opt"))
        .find(|p| p.is_file())
        .ok_or_else(|| BackendError::Unavailable(format!("no 'opt' on PATH and {OPT_ENV} is unset")))
}

#[derive(Debug, Clone)]
pub struct LlvmBackend {
    opt: PathBuf,
    timeout: Duration,
    vocab: PassVocabulary,
    patterns: ErrorPatternTable,
}

struct Run {
    success: bool,
    stderr: String,
    output: Option<String>,
}

impl LlvmBackend {
    pub fn new(opt: PathBuf) -> Self {
        LlvmBackend { opt, timeout: DEFAULT_TIMEOUT, vocab: llvm10_vocabulary(), patterns: ErrorPatternTable::default() }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_vocabulary(mut self, vocab: PassVocabulary) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn with_patterns(mut self, patterns: ErrorPatternTable) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn opt_path(&self) -> &Path {
        &self.opt
    }

    /// Runs `opt -S <flags> in.ll -o out.ll` in a fresh temporary directory.
    fn run(&self, ir: &str, flags: &[String]) -> Result<Run, BackendError> {
        let io = |e: std::io::Error| BackendError::Invocation(e.to_string());
        let dir = tempfile::tempdir().map_err(io)?;
        let (input, output) = (dir.path().join("in.ll"), dir.path().join("out.ll"));
        std::fs::write(&input, ir).map_err(io)?;
        let mut child = Command::new(&self.opt)
            .arg("-S")
            .args(flags)
            .arg(&input)
            .arg("-o")
            .arg(&output)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::Unavailable(format!("cannot run '{}': {e}", self.opt.display())))?;
        // Drain stderr on a thread so a chatty child cannot block on a full pipe.
        let mut pipe = child.stderr.take().expect("stderr is piped");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = pipe.read_to_string(&mut s);
            s
        });
        let status = match child.wait_timeout(self.timeout).map_err(io)? {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BackendError::Timeout { seconds: self.timeout.as_secs() });
            }
        };
        let stderr = reader.join().unwrap_or_default();
        let output = if status.success() { Some(std::fs::read_to_string(&output).map_err(io)?) } else { None };
        Ok(Run { success: status.success(), stderr, output })
    }

    fn failure(&self, stderr: &str) -> (passorder_core::ErrorCategory, String) {
        let message = first_diagnostic(stderr);
        (self.patterns.classify(&message), message)
    }
}

/// The first line mentioning `error:`, else the first non-empty line.
pub fn first_diagnostic(stderr: &str) -> String {
    let lines = || stderr.lines().map(str::trim).filter(|l| !l.is_empty());
    lines()
        .find(|l| l.contains("error:"))
        .or_else(|| lines().next())
        .unwrap_or("optimizer failed without a diagnostic")
        .to_string()
}

impl Backend for LlvmBackend {
    fn name(&self) -> &str {
        "llvm"
    }

    fn list_passes(&self) -> Result<PassVocabulary, BackendError> {
        Ok(self.vocab.clone())
    }

    fn apply_pass_list(&self, ir: &NormalizedIr, passes: &PassList) -> Result<CompileOutcome, BackendError> {
        passes.validate(&self.vocab, None)?;
        let run = self.run(ir.as_str(), passes.items())?;
        match run.output {
            Some(text) if run.success => {
                let optimized_ir = if passes.is_empty() { ir.clone() } else { normalize(&text) };
                let instruction_count = count_instructions(&optimized_ir)
                    .map_err(|e| BackendError::Invocation(format!("unreadable optimizer output: {e}")))?;
                Ok(CompileOutcome::Success { optimized_ir, instruction_count })
            }
            _ => {
                let (error_category, error_message) = self.failure(&run.stderr);
                Ok(CompileOutcome::Failure { error_category, error_message })
            }
        }
    }

    fn verify_ir(&self, ir: &str) -> Result<Verdict, BackendError> {
        // opt parses and verifies its input before running any pass.
        let run = self.run(ir, &[])?;
        Ok(if run.success {
            Verdict::Valid
        } else {
            let (category, message) = self.failure(&run.stderr);
            Verdict::Invalid { category, message }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use passorder_core::OZ;

    #[test]
    fn bundled_vocabulary_shape() {
        let v = llvm10_vocabulary();
        assert_eq!(v.passes().len(), 122);
        assert_eq!(v.meta_flags(), ["-O0", "-O1", "-O2", "-O3", "-Oz", "-Os"]);
        assert!(v.is_pass("-name-anon-globals"));
        assert!(v.is_meta(OZ));
    }

    #[test]
    fn vocabulary_file_syntax() {
        let v = parse_vocabulary("# c\n-a\n\n-b\n[meta]\n-M\n").unwrap();
        assert_eq!(v.passes(), ["-a", "-b"]);
        assert_eq!(v.meta_flags(), ["-M"]);
        assert!(parse_vocabulary("-a\n-a\n[meta]\n-M\n").is_err());
    }

    #[test]
    fn diagnostics_pick_error_line() {
        let s = "warning: x\nopt: in.ll:2:1: error: use of undefined value '%x'\n  ret i32 %x\n";
        assert_eq!(first_diagnostic(s), "opt: in.ll:2:1: error: use of undefined value '%x'");
        assert_eq!(first_diagnostic("\n\nsomething broke\n"), "something broke");
        assert_eq!(first_diagnostic(""), "optimizer failed without a diagnostic");
    }

    #[test]
    fn missing_explicit_path_is_unavailable() {
        let err = locate_opt(Some(Path::new("/nonexistent/opt"))).unwrap_err();
        assert!(matches!(err, BackendError::Unavailable(_)));
    }
}
