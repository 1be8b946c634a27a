use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{EvaluateRole, ExperimentConfig, Paradigm, SCHEMA_VERSION};
use super::pipeline::{run_experiment, Evaluation, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{write_report_files, REPORT_CSV_HEADER};
use crate::raster::write_geotiff;

pub const TOOL_NAME: &str = "habitat-cd";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    paradigm: Paradigm,
    evaluate_role: EvaluateRole,
    evaluations: &'a [Evaluation],
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct FileHash {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: Tool,
    paradigm: Paradigm,
    config_sha256: String,
    seeds: &'a std::collections::BTreeMap<String, u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_json(result: &RunResult, cfg: &ExperimentConfig) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ReportFile {
        schema_version: SCHEMA_VERSION,
        paradigm: result.paradigm,
        evaluate_role: cfg.split.evaluate_role,
        evaluations: &result.evaluations,
    })?;
    s.push('\n');
    Ok(s)
}

/// Per-evaluation report rows prefixed by `scenario,task`.
pub fn report_csv(result: &RunResult) -> Result<String> {
    let header: Vec<&str> = ["scenario", "task"].into_iter().chain(REPORT_CSV_HEADER).collect();
    let rows = result.evaluations.iter().flat_map(|e| {
        e.report.csv_rows().into_iter().map(move |r| {
            let mut row = vec![e.scenario.clone(), e.task.to_string()];
            row.extend(r);
            row
        })
    });
    csv_string(&header, rows)
}

/// Long-format confusion counts of every evaluation.
pub fn confusion_csv(result: &RunResult) -> Result<String> {
    let rows = result.evaluations.iter().flat_map(|e| {
        let k = e.confusion.k();
        (0..k * k).map(move |i| {
            vec![
                e.scenario.clone(),
                e.task.to_string(),
                (i / k).to_string(),
                (i % k).to_string(),
                e.confusion.get(i / k, i % k).to_string(),
            ]
        })
    });
    csv_string(&["scenario", "task", "reference", "predicted", "count"], rows)
}

pub fn ablation_csv(result: &RunResult) -> Result<Option<String>> {
    let Some(rows) = &result.ablation else {
        return Ok(None);
    };
    let header = [
        "level",
        "modalities",
        "change_oa",
        "change_macro_iou",
        "change_macro_f1",
        "segmentation_oa",
        "segmentation_macro_iou",
        "segmentation_macro_f1",
    ];
    let rows = rows.iter().map(|r| {
        let modalities: Vec<String> = r.modalities.iter().map(|t| t.to_string()).collect();
        vec![
            r.level.clone(),
            modalities.join("+"),
            r.change_oa.to_string(),
            r.change_macro_iou.to_string(),
            r.change_macro_f1.to_string(),
            r.segmentation_oa.to_string(),
            r.segmentation_macro_iou.to_string(),
            r.segmentation_macro_f1.to_string(),
        ]
    });
    csv_string(&header, rows).map(Some)
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io_at(path, e))
}

/// Writes reports, the change map and the manifest into `out`. Everything
/// written here is a pure function of the config and its inputs.
pub fn write_outputs(result: &RunResult, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io_at(out, e))?;
    let mut produced: Vec<PathBuf> = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        write(&out.join(name), body)?;
        produced.push(PathBuf::from(name));
        Ok(())
    };
    put("report.json", report_json(result, cfg)?)?;
    put("report.csv", report_csv(result)?)?;
    put("confusion.csv", confusion_csv(result)?)?;
    if let Some(body) = ablation_csv(result)? {
        put("ablation.csv", body)?;
    }
    write_geotiff(&result.change_map, &out.join("change_map.tif"))?;
    produced.push(PathBuf::from("change_map.tif"));
    for e in &result.evaluations {
        let rel = Path::new("evaluations").join(&e.scenario).join(e.task.to_string());
        write_report_files(&out.join(&rel), &e.report, &e.confusion)?;
        for f in ["report.json", "report.csv", "confusion.csv"] {
            produced.push(rel.join(f));
        }
    }

    let inputs = result
        .inputs
        .iter()
        .map(|i| {
            Ok(FileHash {
                role: i.role.clone(),
                path: i.path.display().to_string(),
                sha256: sha256_file(&i.resolved)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = produced
        .iter()
        .map(|p| {
            Ok(FileHash {
                role: "output".into(),
                path: p.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(&out.join(p))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: Tool {
            name: TOOL_NAME,
            version: TOOL_VERSION,
        },
        paradigm: result.paradigm,
        config_sha256: sha256_hex(cfg.to_json_string()?.as_bytes()),
        seeds: &result.seeds,
        inputs,
        outputs,
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    write(&out.join("run_manifest.json"), body)
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Runs `cfg` and writes all outputs to `out`. Wall-clock information goes
/// to `run.log` only, so the other files are reproducible byte for byte.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<RunResult> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = run_experiment(cfg).and_then(|r| write_outputs(&r, cfg, out).map(|_| r));
    let status = match &outcome {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("error (exit {}): {e}", e.exit_code()),
    };
    if std::fs::create_dir_all(out).is_ok() {
        let log = format!(
            "paradigm={}\nstarted_unix={:.3}\nelapsed_seconds={:.3}\nstatus={status}\n",
            cfg.paradigm,
            unix_seconds(started),
            clock.elapsed().as_secs_f64()
        );
        // The log is informational; failing to write it must not mask the run outcome.
        let _ = std::fs::write(out.join("run.log"), log);
    }
    outcome
}
