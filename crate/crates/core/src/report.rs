//! Per-step metrics, run summaries and their CSV/TOML files.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::Mode;
use crate::error::Result;
use crate::mesh_fem::Mesh;
use crate::scenarios::GaussianTruth;

/// Numerical results of one step; everything here is deterministic for a fixed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub time: f64,
    /// Nodal 2-norm of the stitched estimate.
    pub spatial_norm: f64,
    pub truth_norm: f64,
    pub spatial_error: f64,
    pub schwarz_iters: usize,
    pub probe_est: f64,
    pub probe_truth: f64,
    /// NaN in forward mode.
    pub probe_bound: f64,
}

/// Wall-clock split of one step; kept apart from [`MetricsRow`] because it is not reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub step: usize,
    pub assembly_ms: f64,
    pub riccati_ms: f64,
    pub filter_ms: f64,
    pub exchange_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub steps: usize,
    pub subdomains: usize,
    pub estimation_error: f64,
    pub containment: f64,
    pub mean_schwarz_iters: f64,
    pub max_schwarz_iters: usize,
    pub assembly_ms: f64,
    pub riccati_ms: f64,
    pub filter_ms: f64,
    pub exchange_ms: f64,
    pub wall_ms: f64,
}

fn trapezoid(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    if v.len() < 2 {
        return v.first().copied().unwrap_or(0.0);
    }
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// `∫‖û − u‖ dt / ∫‖u‖ dt` by the trapezoidal rule over the recorded steps.
pub fn estimation_error(rows: &[MetricsRow]) -> f64 {
    trapezoid(rows.iter().map(|r| r.spatial_error)) / trapezoid(rows.iter().map(|r| r.truth_norm))
}

/// Fraction of steps after the initial one whose probe error lies within the bound.
pub fn containment(rows: &[MetricsRow]) -> f64 {
    let tail: Vec<_> = rows.iter().filter(|r| r.step > 0).collect();
    if tail.is_empty() || tail.iter().any(|r| r.probe_bound.is_nan()) {
        return f64::NAN;
    }
    tail.iter()
        .filter(|r| (r.probe_est - r.probe_truth).abs() <= r.probe_bound)
        .count() as f64
        / tail.len() as f64
}

pub fn summarize(
    mode: Mode,
    subdomains: usize,
    rows: &[MetricsRow],
    timings: &[TimingRow],
    wall_ms: f64,
) -> Summary {
    let iters: Vec<usize> = rows
        .iter()
        .filter(|r| r.step > 0)
        .map(|r| r.schwarz_iters)
        .collect();
    Summary {
        mode,
        steps: rows.len().saturating_sub(1),
        subdomains,
        estimation_error: estimation_error(rows),
        containment: containment(rows),
        mean_schwarz_iters: iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
        max_schwarz_iters: iters.iter().copied().max().unwrap_or(0),
        assembly_ms: timings.iter().map(|t| t.assembly_ms).sum(),
        riccati_ms: timings.iter().map(|t| t.riccati_ms).sum(),
        filter_ms: timings.iter().map(|t| t.filter_ms).sum(),
        exchange_ms: timings.iter().map(|t| t.exchange_ms).sum(),
        wall_ms,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let s = std::fs::read_to_string(path)?;
    toml::from_str(&s).map_err(|e| crate::error::Error::Config(format!("{}: {e}", path.display())))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `metrics.csv`, `timings.csv`, `summary.toml` and a human-readable `summary.txt` into `dir`.
pub fn write_run(
    dir: &Path,
    metrics: &[MetricsRow],
    timings: &[TimingRow],
    summary: &Summary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("metrics.csv"), metrics)?;
    write_csv(&dir.join("timings.csv"), timings)?;
    let s = toml::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(dir.join("summary.toml"), s)?;
    std::fs::write(dir.join("summary.txt"), summary_table(&[("run", summary)]))?;
    Ok(())
}

/// One `x,y,estimate,truth` CSV per snapshot under `dir/fields/`.
pub fn write_snapshots(
    dir: &Path,
    mesh: &Mesh,
    snapshots: &[(usize, Vec<f64>)],
    dt: f64,
    truth: &GaussianTruth,
) -> Result<()> {
    if snapshots.is_empty() {
        return Ok(());
    }
    let fdir = dir.join("fields");
    std::fs::create_dir_all(&fdir)?;
    for (step, field) in snapshots {
        let mut w = csv::Writer::from_path(fdir.join(format!("step_{step:06}.csv")))?;
        w.write_record(["x", "y", "estimate", "truth"])?;
        let t = *step as f64 * dt;
        for (k, v) in field.iter().enumerate() {
            let p = mesh.coords(k);
            w.serialize((p[0], p[1], v, truth.value(t, p)))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Plain-text table, one row per run.
pub fn summary_table(rows: &[(&str, &Summary)]) -> String {
    let mut out = format!(
        "{:<22} {:>6} {:>9} {:>9} {:>8} {:>11} {:>11}\n",
        "run", "steps", "e_e [%]", "contain", "iters", "riccati_s", "wall_s"
    );
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<22} {:>6} {:>9.2} {:>9.3} {:>8.2} {:>11.2} {:>11.2}\n",
            name,
            s.steps,
            100.0 * s.estimation_error,
            s.containment,
            s.mean_schwarz_iters,
            s.riccati_ms / 1e3,
            s.wall_ms / 1e3
        ));
    }
    out
}
