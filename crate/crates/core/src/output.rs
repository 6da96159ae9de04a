//! Run directories: per-snapshot CSVs, time series, `μ` history, summary and
//! manifest JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::ScenarioConfig;
use crate::solver::{RunOutput, StopReason};
use crate::state::GeometricState;

/// Version of the CSV columns and JSON schemas written here.
pub const FORMAT_VERSION: u32 = 1;

pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SERIES_FILE: &str = "series.csv";
pub const HISTORY_FILE: &str = "mu_history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VALIDATION_FILE: &str = "validation.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// `git describe` of the build, if known.
    pub git_describe: Option<String>,
    pub crate_version: String,
    /// Wall-clock start and end, seconds since the Unix epoch.
    pub wall_start: f64,
    pub wall_end: f64,
    pub t_start: f64,
    pub t_stop: f64,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub scenario: ScenarioConfig,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

/// Seconds since the Unix epoch.
pub fn wall_clock() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Column names of a snapshot CSV.
pub fn snapshot_header(state: &GeometricState) -> Vec<String> {
    let mut h = vec!["t".to_string(), "u".to_string()];
    for i in 1..state.dim() {
        h.push(format!("theta{}", i + 1));
    }
    h.extend(state.layout.field_names());
    h
}

/// Writes one row per node; torus coordinates of `x` are unwrapped.
pub fn write_snapshot(path: &Path, state: &GeometricState) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(snapshot_header(state))?;
    let l = state.layout;
    let mut row: Vec<String> = Vec::with_capacity(l.stride + state.dim() + 1);
    for node in 0..state.len() {
        row.clear();
        let (k, m) = state.grid.split(node);
        row.push(state.t.to_string());
        row.push(state.grid.u(k).to_string());
        row.extend(state.grid.theta(m).iter().map(f64::to_string));
        row.extend(state.unwrapped_x(node).iter().map(f64::to_string));
        row.extend(state.slot(node)[l.psi..].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-step time series.
pub fn write_series(path: &Path, output: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &output.summary.series {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `μ` and `Lμ` per node, one sample every `every` steps plus the last.
pub fn write_history(path: &Path, output: &RunOutput, every: usize) -> Result<()> {
    let h = &output.history;
    let grid = &output.snapshots[0].grid;
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string(), "node".to_string(), "u".to_string()];
    for i in 1..grid.dim {
        head.push(format!("theta{}", i + 1));
    }
    head.push("mu".into());
    head.push("lmu".into());
    w.write_record(&head)?;
    let every = every.max(1);
    let last = h.len().saturating_sub(1);
    for s in (0..h.len()).filter(|&s| s % every == 0 || s == last) {
        for node in 0..h.nodes {
            let (k, m) = grid.split(node);
            let mut row = vec![h.times[s].to_string(), node.to_string(), grid.u(k).to_string()];
            row.extend(grid.theta(m).iter().map(f64::to_string));
            row.push(h.mu_at(s, node).to_string());
            row.push(h.lmu_at(s, node).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Writes a complete run directory and returns its manifest.
pub fn write_run(
    dir: &Path,
    scenario: &ScenarioConfig,
    output: &RunOutput,
    git_describe: Option<&str>,
    wall_start: f64,
) -> Result<Manifest> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    let mut files = Vec::new();
    for (i, snap) in output.snapshots.iter().enumerate() {
        let rel = PathBuf::from(SNAPSHOT_DIR).join(format!("snapshot_{i:05}.csv"));
        write_snapshot(&dir.join(&rel), snap)?;
        files.push(rel.to_string_lossy().into_owned());
    }
    write_series(&dir.join(SERIES_FILE), output)?;
    files.push(SERIES_FILE.into());
    write_history(&dir.join(HISTORY_FILE), output, scenario.solver.snapshot_every)?;
    files.push(HISTORY_FILE.into());
    write_json(&dir.join(SUMMARY_FILE), &output.summary)?;
    files.push(SUMMARY_FILE.into());

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        git_describe: git_describe.map(str::to_string),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        wall_start,
        wall_end: wall_clock(),
        t_start: output.snapshots.first().map_or(0.0, |s| s.t),
        t_stop: output.summary.t_stop,
        stop_reason: output.summary.stop_reason,
        steps: output.summary.steps,
        scenario: scenario.clone(),
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::burgers_sine;

    #[test]
    fn run_directory_is_complete_and_readable() {
        let mut cfg = burgers_sine(0.1, 32);
        cfg.solver.snapshot_every = 40;
        let out = cfg.simulate().unwrap().output;
        let dir = tempfile::tempdir().unwrap();
        let m = write_run(dir.path(), &cfg, &out, Some("v0-test"), wall_clock()).unwrap();
        assert_eq!(m.files.len(), out.snapshots.len() + 3);
        for f in &m.files {
            assert!(dir.path().join(f).is_file(), "{f}");
        }

        let mut r = csv::Reader::from_path(dir.path().join(&m.files[0])).unwrap();
        let head: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
        assert_eq!(head, ["t", "u", "x1", "psi", "mu", "xi1", "Xi1"]);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), out.snapshots[0].len());
        let mu: f64 = rows[5][4].parse().unwrap();
        assert_eq!(mu, out.snapshots[0].mu(5));

        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.scenario, cfg);
        assert_eq!(back.stop_reason, StopReason::MuFloor);

        let series = csv::Reader::from_path(dir.path().join(SERIES_FILE))
            .unwrap()
            .records()
            .count();
        assert_eq!(series, out.summary.series.len());
    }
}
