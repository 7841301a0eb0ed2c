//! Summaries of finished runs: final metrics per layer and a cross-task
//! comparison of hidden-layer φ.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::{hidden_phi_tail, tail_mean, RunRecord, Task};
use crate::measure::EIResult;

/// Fraction of final checkpoints averaged for φ.
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub task: Task,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub layer: usize,
    pub final_epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub result: EIResult,
    /// `ei − ei_parts` of the final checkpoint.
    pub phi: Option<f64>,
    /// Mean `ei − ei_parts` over the last tenth of checkpoints.
    pub phi_tail_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPhi {
    pub task: Task,
    pub runs: usize,
    /// Mean over runs of the run's hidden-layer φ tail mean.
    pub hidden_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub layers: Vec<LayerSummary>,
    /// Present when more than one task is summarized.
    pub comparison: Vec<TaskPhi>,
}

fn phi_of(r: &EIResult) -> Option<f64> {
    r.ei.map(|ei| ei - r.ei_parts)
}

pub fn build_report(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::EmptyData("run records"));
    }
    let mut layers = Vec::new();
    let mut per_task: BTreeMap<&'static str, (Task, Vec<f64>)> = BTreeMap::new();
    for rec in records {
        let last = rec
            .checkpoints
            .last()
            .ok_or(Error::EmptyData("run record checkpoints"))?;
        for (layer, r) in last.layers.iter().enumerate() {
            layers.push(LayerSummary {
                task: rec.spec.task,
                seed: rec.seed(),
                widths: rec.spec.widths.clone(),
                layer,
                final_epoch: last.epoch,
                train_loss: last.train_loss,
                test_loss: last.test_loss,
                test_accuracy: last.test_accuracy,
                result: *r,
                phi: phi_of(r),
                phi_tail_mean: tail_mean(rec, TAIL_FRACTION, |cp| cp.layers.get(layer).and_then(phi_of)),
            });
        }
        let entry = per_task
            .entry(rec.spec.task.name())
            .or_insert((rec.spec.task, Vec::new()));
        if let Some(p) = hidden_phi_tail(rec) {
            entry.1.push(p);
        }
    }
    let comparison = if per_task.len() > 1 {
        per_task
            .into_values()
            .filter(|(_, v)| !v.is_empty())
            .map(|(task, v)| TaskPhi {
                task,
                runs: v.len(),
                hidden_phi: v.iter().sum::<f64>() / v.len() as f64,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Report { layers, comparison })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(report: &Report, mut out: W) -> Result<()> {
    writeln!(out, "# ei-probe schema report v{}", crate::record::SCHEMA_VERSION)
        .map_err(|e| Error::Config(format!("writing report: {e}")))?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Config(format!("writing report: {e}"));
    w.write_record([
        "task",
        "seed",
        "layer",
        "final_epoch",
        "train_loss",
        "test_loss",
        "test_accuracy",
        "ei",
        "ei_parts",
        "sensitivity",
        "degeneracy",
        "phi",
        "phi_tail_mean",
    ])
    .map_err(err)?;
    for s in &report.layers {
        w.write_record([
            s.task.to_string(),
            s.seed.to_string(),
            s.layer.to_string(),
            s.final_epoch.to_string(),
            s.train_loss.to_string(),
            s.test_loss.to_string(),
            s.test_accuracy.to_string(),
            opt(s.result.ei),
            s.result.ei_parts.to_string(),
            s.result.sensitivity.to_string(),
            opt(s.result.degeneracy),
            opt(s.phi),
            opt(s.phi_tail_mean),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing report: {e}")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn report_text(report: &Report) -> String {
    let mut s = String::new();
    let mut current: Option<(Task, u64)> = None;
    for l in &report.layers {
        if current != Some((l.task, l.seed)) {
            current = Some((l.task, l.seed));
            let _ = writeln!(
                s,
                "{} seed {} {:?}: epoch {}, train loss {:.5}, test loss {:.5}, test accuracy {:.3}",
                l.task, l.seed, l.widths, l.final_epoch, l.train_loss, l.test_loss, l.test_accuracy
            );
            let _ = writeln!(
                s,
                "  {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                "layer", "ei", "parts", "sens", "deg", "phi", "phi_end"
            );
        }
        let _ = writeln!(
            s,
            "  {:>5} {:>8} {:>8.4} {:>8.4} {:>8} {:>8} {:>8}",
            l.layer,
            fmt_opt(l.result.ei),
            l.result.ei_parts,
            l.result.sensitivity,
            fmt_opt(l.result.degeneracy),
            fmt_opt(l.phi),
            fmt_opt(l.phi_tail_mean)
        );
    }
    if !report.comparison.is_empty() {
        let parts: Vec<String> = report
            .comparison
            .iter()
            .map(|c| format!("{} {:.4} ({} runs)", c.task, c.hidden_phi, c.runs))
            .collect();
        let _ = writeln!(
            s,
            "mean hidden-layer phi over the last 10% of checkpoints: {}",
            parts.join(" vs ")
        );
    }
    s
}
