//! Splitting `.ll` modules into one-function corpus entries.
//!
//! Each entry keeps the module-level lines of its source (datalayout,
//! triple, types, globals, declarations) and turns every other definition
//! into a declaration, so the function still parses on its own.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use passorder_core::dataset::dedup;
use passorder_core::IrFunction;

/// Linkage keywords that a declaration may not carry.
const LINKAGES: &[&str] = &[
    "private",
    "internal",
    "available_externally",
    "linkonce",
    "linkonce_odr",
    "weak",
    "weak_odr",
    "common",
    "appending",
];

/// One `define` found in a module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub name: String,
    /// Header line through closing brace.
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitModule {
    /// Lines outside any function body, in order.
    pub module_lines: Vec<String>,
    pub definitions: Vec<Definition>,
}

/// Name of the function defined or declared by `header`, without the `@`.
pub fn function_name(header: &str) -> Option<String> {
    let at = header.find('@')?;
    let rest = &header[at + 1..];
    if let Some(quoted) = rest.strip_prefix('"') {
        let end = quoted.find('"')?;
        return Some(format!("\"{}\"", &quoted[..end]));
    }
    let end = rest.find('(')?;
    Some(rest[..end].to_string())
}

pub fn split_module(text: &str) -> SplitModule {
    let mut out = SplitModule::default();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            Some((_, body)) => {
                body.push(line);
                if trimmed == "}" {
                    let (name, body) = current.take().expect("inside a body");
                    out.definitions.push(Definition { name, text: body.join("\n") });
                }
            }
            None if trimmed.starts_with("define ") => {
                let name = function_name(trimmed).unwrap_or_default();
                current = Some((name, vec![line]));
            }
            None => out.module_lines.push(line.to_string()),
        }
    }
    // An unterminated body is kept so the function constructor reports it.
    if let Some((name, body)) = current {
        out.definitions.push(Definition { name, text: body.join("\n") });
    }
    out
}

/// Index just past the parenthesis closing the parameter list.
fn params_end(header: &str) -> Option<usize> {
    let at = header.find('@')?;
    let open = at + header[at..].find('(')?;
    let mut depth = 0usize;
    let mut in_string = false;
    for (i, c) in header[open..].char_indices() {
        match c {
            '"' => in_string = !in_string,
            '(' if !in_string => depth += 1,
            ')' if !in_string => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// `declare` line for a definition header: linkage and everything after
/// the parameter list are dropped.
pub fn declaration_for(header: &str) -> Option<String> {
    let header = header.trim();
    let rest = header.strip_prefix("define ")?;
    let end = params_end(header)? - "define ".len();
    let words: Vec<&str> = rest[..end].split(' ').filter(|w| !w.is_empty() && !LINKAGES.contains(w)).collect();
    Some(format!("declare {}", words.join(" ")))
}

/// One self-contained module per definition in `text`.
pub fn functions_in_module(text: &str) -> Vec<(String, String)> {
    let split = split_module(text);
    let module = split.module_lines.join("\n");
    split
        .definitions
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut parts = vec![module.clone()];
            for (j, other) in split.definitions.iter().enumerate() {
                if i != j && other.name != d.name {
                    if let Some(decl) = other.text.lines().next().and_then(declaration_for) {
                        parts.push(decl);
                    }
                }
            }
            parts.push(d.text.clone());
            let joined = parts.into_iter().filter(|p| !p.trim().is_empty()).collect::<Vec<_>>().join("\n");
            (d.name.clone(), joined + "\n")
        })
        .collect()
}

/// `.ll` files under `inputs`: files as given, directories recursively,
/// each directory's entries in sorted order.
pub fn collect_ll_files(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, PathBuf)>) -> Result<()> {
        let mut entries = std::fs::read_dir(dir)
            .with_context(|| format!("cannot read {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if p.extension().is_some_and(|e| e == "ll") {
                let rel = p.strip_prefix(root).unwrap_or(&p).to_path_buf();
                out.push((p, rel));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, input, &mut out)?;
        } else if input.exists() {
            let name = input.file_name().map(PathBuf::from).unwrap_or_default();
            out.push((input.clone(), name));
        } else {
            anyhow::bail!("no such input {}", input.display());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub files: usize,
    pub definitions: usize,
    pub malformed: usize,
    pub over_token_limit: usize,
    pub duplicates: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejected {
    pub id: String,
    pub reason: String,
}

/// Reads modules, splits them, drops functions whose token estimate exceeds
/// half of `token_limit` (the prompt half of a sequence) and duplicates.
pub fn ingest(
    inputs: &[PathBuf],
    dataset: &str,
    token_limit: usize,
) -> Result<(Vec<IrFunction>, IngestStats, Vec<Rejected>)> {
    let files = collect_ll_files(inputs)?;
    let mut stats = IngestStats { files: files.len(), ..Default::default() };
    let mut rejected = Vec::new();
    let mut kept = Vec::new();
    for (path, rel) in &files {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let stem = rel.with_extension("");
        let stem = stem.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/");
        for (name, module) in functions_in_module(&text) {
            stats.definitions += 1;
            let id = format!("{dataset}/{stem}/{}", name.trim_matches('"'));
            match IrFunction::new(id.clone(), dataset, module) {
                Ok(f) if f.token_estimate * 2 > token_limit => {
                    stats.over_token_limit += 1;
                    rejected.push(Rejected { id, reason: format!("{} tokens", f.token_estimate) });
                }
                Ok(f) => kept.push(f),
                Err(e) => {
                    stats.malformed += 1;
                    rejected.push(Rejected { id, reason: e.to_string() });
                }
            }
        }
    }
    let unique = dedup(&kept, None);
    stats.duplicates = kept.len() - unique.len();
    stats.kept = unique.len();
    Ok((unique, stats, rejected))
}
