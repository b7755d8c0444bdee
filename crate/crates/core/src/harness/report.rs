use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{read_run_logs, ProfileLog};
use super::sweep::{sweep_svg, SweepRow};
use crate::profiler::curves_svg;
use crate::error::{bail, Result};
use crate::profiler::sample_std;

/// `mean ± std` of one metric over the successful seeds of a condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(MetricSummary { mean, std: sample_std(values, mean), count: values.len() })
    }

    pub fn display(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// One row of the summary table: all seeds sharing a name and mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub mode: String,
    pub seeds: usize,
    pub failed: usize,
    pub test_accuracy: Option<MetricSummary>,
    pub label_precision: Option<MetricSummary>,
    pub label_recall: Option<MetricSummary>,
}

/// Everything `report` rendered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub conditions: Vec<ConditionSummary>,
    pub sweep_chart: bool,
    pub profile_chart: bool,
}

/// Summarises every run log below `dir` into `summary.md` and
/// `summary.csv`, and redraws `sweep.svg` / `profile.svg` when the sweep or
/// profile outputs are present. Rendering depends only on those inputs, so
/// an unchanged directory renders identically.
pub fn report(dir: &Path) -> Result<ReportOutput> {
    if !dir.is_dir() {
        bail!(Config, "results directory {} does not exist", dir.display());
    }
    let logs = read_run_logs(dir)?;
    let sweep_csv = dir.join("sweep.csv");
    let profile_json = dir.join("profile.json");
    if logs.is_empty() && !sweep_csv.is_file() && !profile_json.is_file() {
        bail!(Config, "no run logs, sweep or profile results found in {}", dir.display());
    }
    let mut out = ReportOutput::default();
    if !logs.is_empty() {
        out.conditions = summarise(logs);
        fs::write(dir.join("summary.md"), render_markdown(&out.conditions))?;
        fs::write(dir.join("summary.csv"), render_csv(&out.conditions)?)?;
    }
    if sweep_csv.is_file() {
        let (parameter, rows) = read_sweep_csv(&sweep_csv)?;
        fs::write(dir.join("sweep.svg"), sweep_svg(&parameter, &rows))?;
        out.sweep_chart = true;
    }
    if profile_json.is_file() {
        let log: ProfileLog = serde_json::from_str(&fs::read_to_string(&profile_json)?)?;
        fs::write(dir.join("profile.svg"), curves_svg(&log.curves))?;
        out.profile_chart = true;
    }
    Ok(out)
}

fn summarise(logs: Vec<super::RunLog>) -> Vec<ConditionSummary> {
    let mut groups: BTreeMap<(String, String), Vec<_>> = BTreeMap::new();
    for log in logs {
        groups.entry((log.name.clone(), log.mode.as_str().to_string())).or_default().push(log.result);
    }
    groups
        .into_iter()
        .map(|((condition, mode), results)| {
            let ok: Vec<_> = results.iter().filter(|r| r.succeeded()).collect();
            let metric = |f: &dyn Fn(&super::RunResult) -> Option<f64>| {
                MetricSummary::from_values(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            ConditionSummary {
                condition,
                mode,
                seeds: results.len(),
                failed: results.len() - ok.len(),
                test_accuracy: metric(&|r| r.test_accuracy),
                label_precision: metric(&|r| r.label_precision),
                label_recall: metric(&|r| r.label_recall),
            }
        })
        .collect()
}

fn read_sweep_csv(path: &Path) -> Result<(String, Vec<SweepRow>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut parameter = String::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| field(i).parse::<f64>().ok();
        parameter = field(0);
        let raw = field(1);
        rows.push(SweepRow {
            value: serde_json::from_str(&raw).unwrap_or(serde_json::Value::String(raw)),
            mean: num(2),
            std: num(3),
            runs: field(4).parse().unwrap_or(0),
            failed: field(5).parse().unwrap_or(0),
            is_best: field(6) == "true",
        });
    }
    Ok((parameter, rows))
}

fn cell(m: &Option<MetricSummary>) -> String {
    m.as_ref().map_or_else(|| "n/a".to_string(), MetricSummary::display)
}

pub fn render_markdown(rows: &[ConditionSummary]) -> String {
    let mut out = String::from("| condition | mode | seeds | failed | test accuracy | label precision | label recall |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.condition,
            r.mode,
            r.seeds,
            r.failed,
            cell(&r.test_accuracy),
            cell(&r.label_precision),
            cell(&r.label_recall)
        );
    }
    out
}

pub fn render_csv(rows: &[ConditionSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "condition",
        "mode",
        "seeds",
        "failed",
        "accuracy_mean",
        "accuracy_std",
        "precision_mean",
        "precision_std",
        "recall_mean",
        "recall_std",
    ])?;
    let split = |m: &Option<MetricSummary>| match m {
        Some(m) => [format!("{:.6}", m.mean), format!("{:.6}", m.std)],
        None => [String::new(), String::new()],
    };
    for r in rows {
        let mut rec = vec![r.condition.clone(), r.mode.clone(), r.seeds.to_string(), r.failed.to_string()];
        for m in [&r.test_accuracy, &r.label_precision, &r.label_recall] {
            rec.extend(split(m));
        }
        w.write_record(rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_formats_mean_and_sample_std() {
        let m = MetricSummary::from_values(&[0.9, 0.8, 0.7, 0.8, 0.8]).unwrap();
        assert!((m.mean - 0.8).abs() < 1e-12);
        assert!((m.std - (0.02f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(m.display(), "0.8000 ± 0.0707");
        assert!(MetricSummary::from_values(&[]).is_none());
        assert_eq!(MetricSummary::from_values(&[0.5]).unwrap().std, 0.0);
    }

    #[test]
    fn empty_or_missing_dirs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(dir.path()).unwrap_err().is_validation());
        assert!(report(&dir.path().join("missing")).is_err());
    }
}
