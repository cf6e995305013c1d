#![allow(dead_code)]

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use passorder::llvm::locate_opt;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_passorder")
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Runs the binary with logging silenced.
pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

/// Argument loop shared by the stub optimizers: sets `$in`, `$out` and
/// `$flags`.
pub const STUB_ARGS: &str = r#"in=""; out=""; flags=""
while [ $# -gt 0 ]; do
  case "$1" in
    -S) shift ;;
    -o) out="$2"; shift 2 ;;
    -*) flags="$flags $1"; shift ;;
    *) in="$1"; shift ;;
  esac
done
"#;

/// `opt` stand-in over clang: understands `-Oz` and no flags (verify).
pub const CLANG_SHIM: &str = r#"lvl=-O0
for f in $flags; do
  case "$f" in
    -Oz) lvl=-Oz ;;
    *) echo "error: shim does not support $f" >&2; exit 2 ;;
  esac
done
exec clang -Wno-override-module -x ir $lvl -Xclang -disable-O0-optnone -S -emit-llvm "$in" -o "$out"
"#;

/// A real optimizer if one is configured, else a clang shim when clang is
/// installed. The flag tells which.
pub fn optimizer(dir: &Path) -> Option<(PathBuf, bool)> {
    if let Ok(p) = locate_opt(None) {
        return Some((p, true));
    }
    let clang = Command::new("clang").arg("--version").output().ok()?;
    clang.status.success().then(|| (script(dir, "opt", &format!("{STUB_ARGS}{CLANG_SHIM}")), false))
}
