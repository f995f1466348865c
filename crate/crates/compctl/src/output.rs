//! CSV writers and atomic file output. Numbers carry 17 significant digits
//! so files round-trip exactly and are byte-stable across runs.

use std::io::Write;
use std::path::Path;

use compctl_core::freq::FreqPoint;
use compctl_core::sim::Trace;
use serde_json::Value;

use crate::error::{AppError, AppResult};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().flexible(true).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> AppResult<Vec<u8>> {
    w.into_inner().map_err(|e| AppError::format("csv", e.error()))
}

fn csv_err(e: csv::Error) -> AppError {
    AppError::format("csv", e)
}

/// Header and rows for one trace. `dims` are `(n, m, p)`; the `wprime`
/// columns are empty for controllers without a synthetic disturbance. A
/// failed rollout ends with a `failure` row.
pub fn trace_csv(trace: &Trace, dims: (usize, usize, usize)) -> AppResult<Vec<u8>> {
    let (n, m, p) = dims;
    let mut w = writer();
    let mut header = vec!["t".to_string()];
    header.extend((0..p).map(|i| format!("w_{i}")));
    header.extend((0..n).map(|i| format!("wprime_{i}")));
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.push("step_cost".into());
    header.push("cum_cost".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in &trace.rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.w.iter().map(|v| num(*v)));
        match &r.wprime {
            Some(wp) => rec.extend(wp.iter().map(|v| num(*v))),
            None => rec.extend((0..n).map(|_| String::new())),
        }
        rec.extend(r.x.iter().map(|v| num(*v)));
        rec.extend(r.u.iter().map(|v| num(*v)));
        rec.push(num(r.step_cost));
        rec.push(num(r.cum_cost));
        w.write_record(&rec).map_err(csv_err)?;
    }
    if let Some(f) = &trace.failure {
        let message = match f {
            compctl_core::sim::Failure::Synthesis { message, .. } => message.clone(),
            _ => String::new(),
        };
        let mut rec = vec!["failure".to_string(), f.code().to_string(), f.step().to_string(), message];
        rec.resize(header.len(), String::new());
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn freq_csv(rows: &[(String, Vec<FreqPoint>)]) -> AppResult<Vec<u8>> {
    let mut w = writer();
    w.write_record(["controller", "omega", "sigma_max_TK", "per_freq_cr"]).map_err(csv_err)?;
    for (name, pts) in rows {
        for pt in pts {
            w.write_record([name.clone(), num(pt.omega), num(pt.sigma_max), opt_num(pt.per_freq_cr)]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json serializes");
    s.push(b'\n');
    s
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| AppError::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| AppError::io(path, e))?;
    tmp.persist(path).map_err(|e| AppError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> AppResult<String> {
    std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}
