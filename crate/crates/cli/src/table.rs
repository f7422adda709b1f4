//! CSV writers. Floats use Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`.
//!
//! Trajectory columns: `t, x0..x{n-1}, u0.., y0.., w0.., v0.., stage_cost`.
//! The last row (`t = T`) carries the final state and the terminal cost;
//! its control, measurement and disturbance cells are empty.

use std::path::Path;

use regretctl_core::sim::{ComparisonTable, Trajectory};

use crate::error::{CliError, CliResult};

fn write_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> CliResult<()> {
    let to_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(&header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn named(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{prefix}{i}"))
}

pub fn trajectory_rows(traj: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let n = traj.x[0].len();
    let m = traj.u.first().map_or(0, |u| u.len());
    let p = traj.y.first().map_or(0, |y| y.len());
    let nw = traj.w.first().map_or(0, |w| w.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(named("x", n))
        .chain(named("u", m))
        .chain(named("y", p))
        .chain(named("w", nw))
        .chain(named("v", p))
        .chain(std::iter::once("stage_cost".to_string()))
        .collect();
    let horizon = traj.u.len();
    let rows = (0..=horizon)
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(traj.x[t].iter().map(f64::to_string));
            if t < horizon {
                for v in [&traj.u[t], &traj.y[t], &traj.w[t], &traj.v[t]] {
                    row.extend(v.iter().map(f64::to_string));
                }
            } else {
                row.extend(std::iter::repeat_n(String::new(), m + 2 * p + nw));
            }
            row.push(traj.stage_costs[t].to_string());
            row
        })
        .collect();
    (header, rows)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let (header, rows) = trajectory_rows(traj);
    write_rows(path, header, rows)
}

pub const COMPARISON_HEADER: [&str; 12] = [
    "label",
    "origin",
    "causal",
    "gamma",
    "replications",
    "mean_cost",
    "max_cost",
    "mean_regret",
    "max_regret",
    "max_regret_ratio",
    "bound_checks",
    "bound_violations",
];

pub fn comparison_rows(table: &ComparisonTable, gammas: &[Option<f64>]) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .zip(gammas)
        .map(|(r, g)| {
            vec![
                r.label.clone(),
                r.origin.as_str().to_string(),
                r.causal.to_string(),
                g.map(|g| g.to_string()).unwrap_or_default(),
                table.replications.to_string(),
                r.mean_cost.to_string(),
                r.max_cost.to_string(),
                r.mean_regret.to_string(),
                r.max_regret.to_string(),
                r.max_regret_ratio.to_string(),
                r.bound_checks.to_string(),
                r.bound_violations.to_string(),
            ]
        })
        .collect()
}

pub fn write_comparison(path: &Path, table: &ComparisonTable, gammas: &[Option<f64>]) -> CliResult<()> {
    let header = COMPARISON_HEADER.iter().map(|s| s.to_string()).collect();
    write_rows(path, header, comparison_rows(table, gammas))
}
