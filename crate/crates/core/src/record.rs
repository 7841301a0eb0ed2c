//! On-disk formats for run records, sweeps and causal-plane series.
//!
//! Run records are JSON lines: a header object carrying the schema name,
//! version and experiment spec, then one checkpoint object per line. CSV
//! outputs start with a `# ei-probe schema <name> v<version>` comment line
//! followed by a header row. Field names are listed in `docs/schema.md`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convergence::TracePoint;
use crate::error::{Error, Result};
use crate::harness::{CausalPlanePoint, Checkpoint, ExperimentSpec, Manifold, RunRecord};

pub const SCHEMA_VERSION: u32 = 1;
pub const RUN_SCHEMA: &str = "ei-probe-run";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    spec: ExperimentSpec,
}

fn csv_err(context: &str, e: csv::Error) -> Error {
    Error::Config(format!("{context}: {e}"))
}

pub fn write_run_jsonl<W: Write>(record: &RunRecord, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Config(format!("writing run record: {e}"));
    let header = Header {
        schema: RUN_SCHEMA.into(),
        version: SCHEMA_VERSION,
        spec: record.spec.clone(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(out, "{line}").map_err(io)?;
    for cp in &record.checkpoints {
        let line = serde_json::to_string(cp).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_run_jsonl<R: BufRead>(input: R, source_name: &str) -> Result<RunRecord> {
    let mut offset = 0u64;
    let mut header: Option<Header> = None;
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::parse(source_name, offset, e.to_string()))?;
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let v: serde_json::Value =
                    serde_json::from_str(&line).map_err(|e| Error::parse(source_name, at, format!("header: {e}")))?;
                if v.get("schema").and_then(|s| s.as_str()) != Some(RUN_SCHEMA) {
                    return Err(Error::parse(
                        source_name,
                        at,
                        format!("header does not declare schema {RUN_SCHEMA}"),
                    ));
                }
                let version = v.get("version").and_then(|s| s.as_u64()).unwrap_or(0) as u32;
                if version != SCHEMA_VERSION {
                    return Err(Error::UnsupportedVersion {
                        what: "run record schema",
                        found: version,
                        expected: SCHEMA_VERSION,
                    });
                }
                header =
                    Some(serde_json::from_value(v).map_err(|e| Error::parse(source_name, at, format!("header: {e}")))?);
            }
            Some(_) => {
                let cp: Checkpoint = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(source_name, at, format!("checkpoint: {e}")))?;
                if checkpoints.last().is_some_and(|p| p.epoch >= cp.epoch) {
                    return Err(Error::parse(source_name, at, "checkpoints out of epoch order"));
                }
                checkpoints.push(cp);
            }
        }
    }
    let header = header.ok_or_else(|| Error::parse(source_name, 0, "missing header line"))?;
    Ok(RunRecord {
        spec: header.spec,
        checkpoints,
    })
}

pub fn save_run(record: &RunRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_run_jsonl(record, BufWriter::new(f))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunRecord> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_run_jsonl(BufReader::new(f), &path.display().to_string())
}

fn schema_line<W: Write>(out: &mut W, name: &str) -> Result<()> {
    writeln!(out, "# ei-probe schema {name} v{SCHEMA_VERSION}")
        .map_err(|e| Error::Config(format!("writing {name}: {e}")))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per checkpoint and layer.
pub fn write_run_csv<W: Write>(record: &RunRecord, mut out: W) -> Result<()> {
    schema_line(&mut out, "run")?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e| csv_err("writing run csv", e);
    w.write_record([
        "task",
        "seed",
        "epoch",
        "layer",
        "train_loss",
        "test_loss",
        "test_accuracy",
        "ei",
        "ei_parts",
        "sensitivity",
        "degeneracy",
        "phi",
        "samples",
        "bins",
        "perturbation_seed",
    ])
    .map_err(err)?;
    for cp in &record.checkpoints {
        for (layer, r) in cp.layers.iter().enumerate() {
            w.write_record([
                record.spec.task.to_string(),
                record.seed().to_string(),
                cp.epoch.to_string(),
                layer.to_string(),
                cp.train_loss.to_string(),
                cp.test_loss.to_string(),
                cp.test_accuracy.to_string(),
                opt(r.ei),
                r.ei_parts.to_string(),
                r.sensitivity.to_string(),
                opt(r.degeneracy),
                opt(r.phi),
                r.samples_used.to_string(),
                r.bins.to_string(),
                r.seed.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("writing run csv: {e}")))
}

pub fn write_sweep_csv<W: Write>(curve: &[(f64, f64)], mut out: W) -> Result<()> {
    schema_line(&mut out, "sweep-edge")?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e| csv_err("writing sweep csv", e);
    w.write_record(["w", "ei"]).map_err(err)?;
    for (x, v) in curve {
        w.write_record([x.to_string(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing sweep csv: {e}")))
}

pub fn write_manifold_csv<W: Write>(m: &Manifold, mut out: W) -> Result<()> {
    schema_line(&mut out, "sweep-manifold")?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e| csv_err("writing manifold csv", e);
    w.write_record(["w_a", "w_b", "ei", "sensitivity", "degeneracy"])
        .map_err(err)?;
    for (i, a) in m.w_a.iter().enumerate() {
        for (j, b) in m.w_b.iter().enumerate() {
            w.write_record([
                a.to_string(),
                b.to_string(),
                m.ei.get(i, j).to_string(),
                m.sensitivity.get(i, j).to_string(),
                m.degeneracy.get(i, j).to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Config(format!("writing manifold csv: {e}")))
}

pub fn write_plane_csv<W: Write>(paths: &[Vec<CausalPlanePoint>], mut out: W) -> Result<()> {
    schema_line(&mut out, "plane")?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e| csv_err("writing plane csv", e);
    w.write_record(["layer", "epoch", "degeneracy", "sensitivity"])
        .map_err(err)?;
    for p in paths.iter().flatten() {
        w.write_record([
            p.layer_index.to_string(),
            p.epoch.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing plane csv: {e}")))
}

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut out: W) -> Result<()> {
    schema_line(&mut out, "converge")?;
    crate::convergence::write_trace_csv(trace, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Task;
    use crate::measure::EIResult;

    fn record() -> RunRecord {
        let r = EIResult {
            ei: Some(0.5),
            ei_parts: 0.25,
            sensitivity: 0.75,
            degeneracy: Some(0.25),
            phi: Some(0.25),
            samples_used: 100,
            bins: 8,
            seed: 3,
        };
        let wide = EIResult {
            ei: None,
            degeneracy: None,
            phi: None,
            ..r
        };
        RunRecord {
            spec: ExperimentSpec::canonical(Task::Mnist5),
            checkpoints: (0..3)
                .map(|k| Checkpoint {
                    epoch: k * 5,
                    train_loss: 0.1 / (k + 1) as f64,
                    test_loss: 0.2,
                    test_accuracy: 0.5,
                    layers: vec![wide, r, r],
                })
                .collect(),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let rec = record();
        let mut buf = Vec::new();
        write_run_jsonl(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"version\":1"));
        assert_eq!(read_run_jsonl(&buf[..], "t").unwrap(), rec);
    }

    #[test]
    fn jsonl_version_and_order_checks() {
        let mut buf = Vec::new();
        write_run_jsonl(&record(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(
            read_run_jsonl(bumped.as_bytes(), "t"),
            Err(Error::UnsupportedVersion { found: 7, .. })
        ));
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        assert!(matches!(
            read_run_jsonl(lines.join("\n").as_bytes(), "t"),
            Err(Error::Parse { .. })
        ));
        assert!(read_run_jsonl(&b""[..], "t").is_err());
    }

    #[test]
    fn run_csv_rows_and_absent_fields() {
        let mut buf = Vec::new();
        write_run_csv(&record(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# ei-probe schema run v1"));
        assert_eq!(lines.len(), 2 + 9);
        assert!(lines[2].starts_with("mnist5,0,0,0,"));
        assert!(lines[2].contains(",,0.25,0.75,,,"));
    }

    #[test]
    fn sweep_csv_layout() {
        let mut buf = Vec::new();
        write_sweep_csv(&[(0.0, 0.0), (0.5, 1.25)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# ei-probe schema sweep-edge v1\nw,ei\n0,0\n0.5,1.25\n"
        );
    }

    proptest::proptest! {
        #[test]
        fn jsonl_floats_survive_bit_exact(ei in proptest::num::f64::NORMAL, loss in 0.0f64..1.0) {
            let mut rec = record();
            rec.checkpoints[1].train_loss = loss;
            rec.checkpoints[1].layers[1].ei = Some(ei);
            let mut buf = Vec::new();
            write_run_jsonl(&rec, &mut buf).unwrap();
            let back = read_run_jsonl(&buf[..], "t").unwrap();
            proptest::prop_assert_eq!(back.checkpoints[1].train_loss.to_bits(), loss.to_bits());
            proptest::prop_assert_eq!(back.checkpoints[1].layers[1].ei.map(f64::to_bits), Some(ei.to_bits()));
        }
    }
}
