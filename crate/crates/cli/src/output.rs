//! Result persistence: atomic file writes, per-run JSONL traces, CSV tables.
//!
//! Every file is written to a `.tmp` sibling and renamed into place, so an
//! interrupted command never leaves a torn file behind. Field layouts are
//! documented in `docs/output-schema.md`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use boggn_core::RunRecord64;

use crate::CliError;

/// Write `bytes` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = match path.extension() {
        Some(ext) => {
            let mut e = ext.to_os_string();
            e.push(".tmp");
            path.with_extension(e)
        }
        None => path.with_extension("tmp"),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(CliError::runtime_io)?;
        }
    }
    {
        let mut f = fs::File::create(&tmp).map_err(CliError::runtime_io)?;
        f.write_all(bytes).map_err(CliError::runtime_io)?;
        f.sync_all().map_err(CliError::runtime_io)?;
    }
    fs::rename(&tmp, path).map_err(CliError::runtime_io)?;
    Ok(())
}

/// Serialize run records as one JSON object per line.
pub fn records_to_jsonl(records: &[RunRecord64]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)
            .map_err(|e| CliError::Runtime(format!("serialize record: {e}")))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Parse a JSONL trace produced by [`records_to_jsonl`].
pub fn records_from_jsonl(bytes: &[u8]) -> Result<Vec<RunRecord64>, CliError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CliError::Runtime(format!("trace is not utf-8: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord64 = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("trace line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Metadata archived next to each experiment's results; `compare` uses it to
/// refuse mixing benchmarks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub benchmark: String,
    pub strategy: String,
    pub gamma: f64,
    pub budget: usize,
    pub n_init: usize,
    pub replications: usize,
    pub seed_base: u64,
    pub noise_sigma: f64,
}

pub fn write_meta(dir: &Path, meta: &RunMeta) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(meta)
        .map_err(|e| CliError::Runtime(format!("serialize meta: {e}")))?;
    bytes.push(b'\n');
    write_atomic(&dir.join("meta.json"), &bytes)
}

pub fn read_meta(dir: &Path) -> Result<RunMeta, CliError> {
    let path = dir.join("meta.json");
    let bytes =
        fs::read(&path).map_err(|e| CliError::Runtime(format!("read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Runtime(format!("parse {}: {e}", path.display())))
}

/// Path of the trace file for one replication seed.
pub fn run_file(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("run-{seed}.jsonl"))
}

/// All trace files in a run directory, ordered by seed.
pub fn list_run_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut with_seed: Vec<(u64, PathBuf)> = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Runtime(format!("read dir {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(CliError::runtime_io)?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if let Some(seed) = name
            .strip_prefix("run-")
            .and_then(|rest| rest.strip_suffix(".jsonl"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            with_seed.push((seed, path));
        }
    }
    with_seed.sort_by_key(|(seed, _)| *seed);
    Ok(with_seed.into_iter().map(|(_, p)| p).collect())
}

/// Render a numeric CSV with the given header; floats use the shortest
/// round-trip representation.
pub fn csv_bytes(header: &str, rows: &[Vec<CsvField>]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for field in row {
            if !first {
                out.push(',');
            }
            first = false;
            match field {
                CsvField::Int(v) => out.push_str(&v.to_string()),
                CsvField::Float(v) => out.push_str(&format_float(*v)),
                CsvField::Str(s) => out.push_str(s),
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum CsvField {
    Int(u64),
    Float(f64),
    Str(String),
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Linear-interpolation quantile (R type 7) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
    if v.len() == 1 {
        return v[0];
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("boggn-out-test-{}", std::process::id()));
        let path = dir.join("file.csv");
        write_atomic(&path, b"one\n").unwrap();
        write_atomic(&path, b"two\n").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two\n");
        assert!(!path.with_extension("csv.tmp").exists());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn jsonl_round_trip_preserves_bits() {
        let rec = RunRecord64 {
            iteration: 2,
            x: vec![0.1 + 0.2, -1.5e-300],
            y: 0.30000000000000004,
            tau: 1.0 / 3.0,
            best_so_far: -1.0316284534898774,
            regret: 5e-324,
            evidence: Some(-12.75),
            seed: 77,
            wall_time_s: 9.0,
        };
        let bytes = records_to_jsonl(std::slice::from_ref(&rec)).unwrap();
        let back = records_from_jsonl(&bytes).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].y.to_bits(), rec.y.to_bits());
        assert_eq!(back[0].regret.to_bits(), rec.regret.to_bits());
        for (a, b) in back[0].x.iter().zip(&rec.x) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // re-serialization is byte-identical
        let again = records_to_jsonl(&back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.4), 7.0);
    }

    #[test]
    fn run_files_sort_by_seed() {
        let dir = std::env::temp_dir().join(format!("boggn-seeds-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        for seed in [10u64, 2, 33] {
            fs::write(run_file(&dir, seed), b"").unwrap();
        }
        fs::write(dir.join("summary.csv"), b"").unwrap();
        let files = list_run_files(&dir).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["run-2.jsonl", "run-10.jsonl", "run-33.jsonl"]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
