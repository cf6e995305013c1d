//! External predictors: a command that reads a prompt on stdin and writes
//! an answer on stdout, or a JSON Lines file of precomputed predictions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use wait_timeout::ChildExt;

use passorder_core::predict::{parse_prediction_answer, prediction_from_list, Prediction};
use passorder_core::{IrFunction, PassList, PassVocabulary};

use crate::io::read_jsonl;

/// One line of a predictions file: an answer text or a bare pass list.
#[derive(Debug, Clone, Deserialize)]
pub struct PredictionLine {
    pub function_id: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub pass_list: Option<Vec<String>>,
}

/// Reads a predictions file keyed by function id. Lines may also be full
/// [`Prediction`] records as written by `passorder predict`.
pub fn load_predictions(path: &Path, vocab: Option<&PassVocabulary>) -> Result<BTreeMap<String, Prediction>> {
    let lines: Vec<serde_json::Value> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for (i, v) in lines.into_iter().enumerate() {
        let where_ = || format!("{}:{}", path.display(), i + 1);
        let p = if v.get("extra_compilations").is_some() || v.get("parse_failure").is_some() {
            serde_json::from_value::<Prediction>(v).with_context(where_)?
        } else {
            let line: PredictionLine = serde_json::from_value(v).with_context(where_)?;
            match (line.answer, line.pass_list) {
                (Some(a), _) => parse_prediction_answer(&line.function_id, &a, vocab),
                (None, Some(l)) => prediction_from_list(&line.function_id, PassList::new(l), vocab),
                (None, None) => bail!("{}: needs 'answer' or 'pass_list'", where_()),
            }
        };
        if out.insert(p.function_id.clone(), p).is_some() {
            bail!("{}: duplicate function id", where_());
        }
    }
    Ok(out)
}

/// A predictor run as a child process per function.
#[derive(Debug, Clone)]
pub struct CommandPredictor {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl CommandPredictor {
    /// Splits a command line on whitespace.
    pub fn parse(spec: &str, timeout: Duration) -> Result<Self> {
        let mut parts = spec.split_whitespace();
        let program = parts.next().context("empty predictor command")?;
        Ok(CommandPredictor { program: program.into(), args: parts.map(str::to_string).collect(), timeout })
    }

    /// Raw answer text for one prompt.
    pub fn answer(&self, prompt: &str) -> Result<String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .with_context(|| format!("cannot run predictor '{}'", self.program.display()))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let prompt = prompt.to_string();
        let writer = std::thread::spawn(move || {
            // A predictor may exit without reading everything.
            let _ = stdin.write_all(prompt.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let status = match child.wait_timeout(self.timeout)? {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                bail!("predictor timed out after {} s", self.timeout.as_secs());
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        if !status.success() {
            bail!("predictor exited with {status}");
        }
        Ok(out)
    }

    pub fn predict(&self, func: &IrFunction, vocab: Option<&PassVocabulary>) -> Result<Prediction> {
        let answer = self.answer(func.normalized_text.as_str())?;
        Ok(parse_prediction_answer(&func.id, &answer, vocab))
    }
}
