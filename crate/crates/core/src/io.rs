//! Run-directory layout and round-trip CSV/JSON emission.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::pde::PdeStepRecord;
use crate::types::{DensitySnapshot, FrontierPath, RegimeLabel};

pub const FRONTIER_FILE: &str = "frontier.csv";
pub const REGIMES_FILE: &str = "regimes.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FITS_FILE: &str = "fits.json";
pub const PDE_STEPS_FILE: &str = "pde_steps.csv";

/// Shortest decimal that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::parse(path, format!("line {line}: {s:?}: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Rows of a headed CSV file, checked against `header`.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::parse(path, "empty file"))?;
    if head.split(',').collect::<Vec<_>>() != header {
        return Err(Error::parse(path, format!("expected header {:?}, found {head:?}", header.join(","))));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::parse(path, format!("line {}: expected {} fields", i + 2, header.len())));
            }
            cells.iter().map(|c| parse_f64(path, i + 2, c)).collect()
        })
        .collect()
}

pub fn frontier_csv(frontier: &FrontierPath) -> String {
    csv(
        &["t", "lambda", "alive_mass", "d_lambda"],
        (0..frontier.len()).map(|i| {
            let d = if i == 0 { 0.0 } else { frontier.values[i] - frontier.values[i - 1] };
            vec![fmt_f64(frontier.times[i]), fmt_f64(frontier.values[i]), fmt_f64(frontier.mass[i]), fmt_f64(d)]
        }),
    )
}

pub fn write_frontier(path: &Path, frontier: &FrontierPath) -> Result<()> {
    write_text(path, &frontier_csv(frontier))
}

pub fn read_frontier(path: &Path) -> Result<FrontierPath> {
    let rows = read_csv(path, &["t", "lambda", "alive_mass", "d_lambda"])?;
    let mut f = FrontierPath::default();
    for r in rows {
        f.times.push(r[0]);
        f.values.push(r[1]);
        f.mass.push(r[2]);
    }
    Ok(f)
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{}.csv", fmt_f64(t))
}

pub fn write_snapshot(dir: &Path, snapshot: &DensitySnapshot) -> Result<PathBuf> {
    let path = dir.join(snapshot_file_name(snapshot.t));
    let text = csv(&["x", "p"], (0..snapshot.len()).map(|i| vec![fmt_f64(snapshot.x(i)), fmt_f64(snapshot.values[i])]));
    write_text(&path, &text)?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<DensitySnapshot> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let t = name
        .strip_prefix("snapshot_")
        .and_then(|s| s.strip_suffix(".csv"))
        .ok_or_else(|| Error::parse(path, "snapshot file name must be snapshot_<t>.csv"))?;
    let t = parse_f64(path, 0, t)?;
    let rows = read_csv(path, &["x", "p"])?;
    if rows.len() < 2 {
        return Err(Error::parse(path, "snapshot needs at least two rows"));
    }
    let dx = rows[1][0] - rows[0][0];
    Ok(DensitySnapshot::new(t, dx, rows.into_iter().map(|r| r[1]).collect()))
}

/// Snapshot files of a run directory, sorted by time.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<(f64, PathBuf)> = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(t) = name.strip_prefix("snapshot_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(t) = t.parse::<f64>() {
                found.push((t, path));
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// One row of the regimes table; `label` is `None` when the fit was inconclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub t: f64,
    pub label: Option<RegimeLabel>,
}

pub fn regimes_csv(rows: &[RegimeRow]) -> String {
    csv(
        &["t", "regime", "rho0", "slope_ratio"],
        rows.iter().map(|r| match &r.label {
            Some(l) => vec![fmt_f64(r.t), l.regime.as_str().to_string(), fmt_f64(l.rho_at_zero), fmt_f64(l.slope_ratio)],
            None => vec![fmt_f64(r.t), "inconclusive".into(), "NaN".into(), "NaN".into()],
        }),
    )
}

pub fn write_regimes(path: &Path, rows: &[RegimeRow]) -> Result<()> {
    write_text(path, &regimes_csv(rows))
}

pub fn write_pde_steps(path: &Path, steps: &[PdeStepRecord]) -> Result<()> {
    let text = csv(
        &["t", "lambda_dot", "inner_iters", "blowup_flag"],
        steps.iter().map(|s| {
            vec![fmt_f64(s.t), fmt_f64(s.lambda_dot), s.inner_iters.to_string(), u8::from(s.blowup_flag).to_string()]
        }),
    );
    write_text(path, &text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Config,
    pub versions: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("supercool".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), "1".to_string());
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            versions,
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
