use std::fs;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::run::{prepare_output_dir, run_validated, RunResult};
use crate::error::{bail, Result};
use crate::plot::{line_chart, Series};
use crate::profiler::sample_std;

/// Replaces the value at a dotted path such as `pes.stage_epochs.1`.
/// Every segment must already exist; numeric segments index arrays.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    if path.is_empty() {
        bail!(Config, "empty parameter path");
    }
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => match map.get_mut(seg) {
                Some(v) => v,
                None => bail!(Config, "unknown parameter path {path:?}: no field {seg:?}"),
            },
            Value::Array(items) => {
                let len = items.len();
                match seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)) {
                    Some(v) => v,
                    None => bail!(Config, "unknown parameter path {path:?}: {seg:?} does not index an array of {len}"),
                }
            }
            _ => bail!(Config, "unknown parameter path {path:?}: {seg:?} below a scalar"),
        };
    }
    *cur = value;
    Ok(())
}

/// `base` with `parameter` set to `value`, its own output subdirectory and
/// a name recording the setting.
pub fn sweep_point(base: &ExperimentConfig, parameter: &str, value: &Value) -> Result<ExperimentConfig> {
    let mut doc = serde_json::to_value(base)?;
    set_path(&mut doc, parameter, value.clone())?;
    let mut cfg: ExperimentConfig = serde_json::from_value(doc)?;
    let label = format!("{parameter}={}", value_label(value));
    cfg.name = format!("{}-{label}", base.name);
    cfg.output_dir = base.output_dir.join(&label);
    cfg.validate()?;
    Ok(cfg)
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Seed aggregate of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: Value,
    pub mean: Option<f64>,
    /// Sample standard deviation over successful seeds.
    pub std: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    pub is_best: bool,
}

pub fn aggregate(value: Value, results: &[RunResult]) -> SweepRow {
    let acc: Vec<f64> = results.iter().filter_map(|r| r.test_accuracy).collect();
    let mean = (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64);
    SweepRow {
        value,
        mean,
        std: mean.map(|m| sample_std(&acc, m)),
        runs: acc.len(),
        failed: results.len() - acc.len(),
        is_best: false,
    }
}

/// Marks the highest mean; the first such value wins ties.
pub fn mark_best(rows: &mut [SweepRow]) {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(m) = r.mean {
            if best.is_none_or(|b| m > rows[b].mean.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(i);
            }
        }
    }
    rows.iter_mut().enumerate().for_each(|(i, r)| r.is_best = Some(i) == best);
}

/// Runs `base` once per value of `parameter`. All points are validated
/// before any training. Writes `sweep.csv` and `sweep.svg` into the base
/// output directory, each point's run logs into a subdirectory.
pub fn sweep(base: &ExperimentConfig, parameter: &str, values: &[Value], overwrite: bool) -> Result<Vec<SweepRow>> {
    base.validate()?;
    if values.is_empty() {
        bail!(Config, "a sweep needs at least one value");
    }
    let points: Vec<ExperimentConfig> =
        values.iter().map(|v| sweep_point(base, parameter, v)).collect::<Result<_>>()?;
    prepare_output_dir(&base.output_dir, overwrite)?;
    let mut rows = Vec::with_capacity(points.len());
    for (cfg, v) in points.iter().zip(values) {
        rows.push(aggregate(v.clone(), &run_validated(cfg)?));
    }
    mark_best(&mut rows);
    write_sweep_csv(parameter, &rows, fs::File::create(base.output_dir.join("sweep.csv"))?)?;
    fs::write(base.output_dir.join("sweep.svg"), sweep_svg(parameter, &rows))?;
    Ok(rows)
}

/// `parameter,value,mean,std,runs,failed,is_best`.
pub fn write_sweep_csv<W: Write>(parameter: &str, rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["parameter", "value", "mean", "std", "runs", "failed", "is_best"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            parameter.to_string(),
            value_label(&r.value),
            fmt(r.mean),
            fmt(r.std),
            r.runs.to_string(),
            r.failed.to_string(),
            r.is_best.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean accuracy against the swept value; non-numeric values are plotted
/// at their position.
pub fn sweep_svg(parameter: &str, rows: &[SweepRow]) -> String {
    let points = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((r.value.as_f64().unwrap_or(i as f64), r.mean?)))
        .collect();
    let marker = rows.iter().enumerate().find(|(_, r)| r.is_best).map(|(i, r)| r.value.as_f64().unwrap_or(i as f64));
    line_chart(
        &format!("Sweep over {parameter}"),
        parameter,
        "mean test accuracy",
        &[Series { label: "mean accuracy".into(), points, marker }],
    )
}
