//! Report files: `summary.txt` (one `key=value` per line) and one CSV per
//! breakdown.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use passorder_core::eval::{CodeQualityMetrics, EvalSummary, GroupRow, ReportBundle};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const PASS_FREQUENCY_FILE: &str = "pass_frequency.csv";
pub const LENGTHS_FILE: &str = "lengths.csv";
pub const BY_DATASET_FILE: &str = "by_dataset.csv";
pub const BY_SIZE_FILE: &str = "by_size.csv";
pub const ROWS_FILE: &str = "rows.jsonl";

/// Ordered `key=value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn add_eval(&mut self, s: &EvalSummary) {
        self.push("functions", s.functions);
        self.push("functions_improved", s.functions_improved);
        self.push("functions_regressed", s.functions_regressed);
        self.push("functions_unchanged", s.functions_unchanged);
        self.push("instructions_saved", s.instructions_saved);
        self.push("instructions_regressed", s.instructions_regressed);
        self.push("additional_compilations", s.additional_compilations);
        self.push("sum_oz", s.sum_oz);
        self.push("sum_predicted", s.sum_predicted);
        self.push("overall_improvement_pct", format!("{:.4}", s.overall_improvement));
        self.push("failed_predictions", s.failed_predictions);
        self.push("parse_failures", s.parse_failures);
        self.push("missing_predictions", s.missing_predictions);
    }

    pub fn add_code_quality(&mut self, q: &CodeQualityMetrics) {
        self.push("code_samples", q.samples);
        self.push("bleu", format!("{:.6}", q.bleu));
        self.push("compile_rate", format!("{:.6}", q.compile_rate));
        self.push("exact_match_rate", format!("{:.6}", q.exact_match_rate));
        for (cat, n) in &q.error_histogram {
            self.push(&format!("errors.{}", cat.as_str()), n);
        }
        if let Some(m) = q.output_count_mape {
            self.push("output_count_mape", format!("{m:.6}"));
        }
    }

    pub fn add_bundle(&mut self, b: &ReportBundle) {
        self.push("predicted_length_mean", format!("{:.4}", b.predicted_lengths.mean));
        self.push("predicted_length_max", b.predicted_lengths.max);
        self.push("tuned_length_mean", format!("{:.4}", b.tuned_lengths.mean));
        self.push("tuned_length_max", b.tuned_lengths.max);
        self.push("novel_lists", b.novel_lists);
        self.push("beats_autotuner", b.beats_autotuner);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
        for (k, v) in &self.0 {
            writeln!(w, "{k}={v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut s = Summary::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').with_context(|| format!("{}: bad line '{line}'", path.display()))?;
            s.push(k, v);
        }
        Ok(s)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn write_groups(path: &Path, rows: &[GroupRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["group", "functions", "sum_oz", "sum_predicted", "overall_improvement_pct"])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.functions.to_string(),
            r.sum_oz.to_string(),
            r.sum_predicted.to_string(),
            pct(r.overall_improvement),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four breakdown CSVs into `dir`.
pub fn write_tables(dir: &Path, b: &ReportBundle) -> Result<()> {
    let path = dir.join(PASS_FREQUENCY_FILE);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["pass", "predictor_pct", "autotuner_pct"])?;
    for r in &b.pass_frequency {
        w.write_record([r.pass.clone(), format!("{:.4}", r.predictor_pct), format!("{:.4}", r.autotuner_pct)])?;
    }
    w.flush()?;

    let path = dir.join(LENGTHS_FILE);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["length", "predicted", "autotuner"])?;
    let lengths: BTreeSet<usize> =
        b.predicted_lengths.histogram.keys().chain(b.tuned_lengths.histogram.keys()).copied().collect();
    for len in lengths {
        let p = b.predicted_lengths.histogram.get(&len).copied().unwrap_or(0);
        let t = b.tuned_lengths.histogram.get(&len).copied().unwrap_or(0);
        w.write_record([len.to_string(), p.to_string(), t.to_string()])?;
    }
    w.flush()?;

    write_groups(&dir.join(BY_DATASET_FILE), &b.by_dataset)?;
    write_groups(&dir.join(BY_SIZE_FILE), &b.by_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use passorder_core::eval::{reports, EvalRow};
    use passorder_core::predict::Prediction;
    use passorder_core::{PassList, OZ};
    use std::collections::BTreeMap;

    fn row(id: &str, ds: &str, unopt: usize, oz: usize, pred: usize) -> EvalRow {
        EvalRow {
            function_id: id.into(),
            source_dataset: ds.into(),
            unopt_count: unopt,
            oz_count: oz,
            predicted_count: pred,
            delta: oz as i64 - pred as i64,
            pass_list: PassList::single(OZ),
            additional_compilations: 0,
            predicted_failed: false,
            parse_failure: false,
            missing: false,
        }
    }

    #[test]
    fn summary_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SUMMARY_FILE);
        let mut s = Summary::default();
        s.push("a", 1);
        s.push("b", "x=y");
        s.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a=1\nb=x=y\n");
        assert_eq!(Summary::read(&path).unwrap(), s);
    }

    #[test]
    fn tables_have_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [row("a", "d1", 5, 4, 4), row("b", "d2", 12, 10, 8)];
        let preds = [Prediction::of_list("a", PassList::single(OZ)), Prediction::of_list("b", PassList::single(OZ))];
        let bundle = reports(&rows, &preds, &BTreeMap::new());
        write_tables(dir.path(), &bundle).unwrap();
        let freq = std::fs::read_to_string(dir.path().join(PASS_FREQUENCY_FILE)).unwrap();
        assert_eq!(freq, "pass,predictor_pct,autotuner_pct\n-Oz,100.0000,0.0000\n");
        let by_ds = std::fs::read_to_string(dir.path().join(BY_DATASET_FILE)).unwrap();
        assert_eq!(
            by_ds,
            "group,functions,sum_oz,sum_predicted,overall_improvement_pct\nd1,1,4,4,0.0000\nd2,1,10,8,25.0000\n"
        );
        let by_size = std::fs::read_to_string(dir.path().join(BY_SIZE_FILE)).unwrap();
        assert!(by_size.contains("4-7,1,4,4,0.0000\n"));
        assert!(by_size.contains("8-15,1,10,8,25.0000\n"));
        let lengths = std::fs::read_to_string(dir.path().join(LENGTHS_FILE)).unwrap();
        assert_eq!(lengths, "length,predicted,autotuner\n1,2,0\n");
    }
}
