//! System configuration files.
//!
//! ```json
//! {
//!   "horizon": 10,
//!   "lti": { "A": [[1.0]], "Bu": [[1.0]], "Bw": [[1.0]], "C": [[1.0]],
//!            "Q": [[1.0]], "QT": [[1.0]], "R": [[1.0]] },
//!   "labels": { "name": "integrator" }
//! }
//! ```
//!
//! `time_varying` replaces `lti` with per-step lists: `A`, `Bu`, `Bw`, `C`
//! and `R` have `horizon` entries, `Q` has `horizon − 1` (steps `1..T-1`).
//! Matrices are row-major lists of rows.

use std::collections::BTreeMap;
use std::path::Path;

use regretctl_core::lifting::{LtiMatrices, SystemMatrices};
use regretctl_core::nalgebra::DMatrix;
use regretctl_core::SystemInstance;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub type RowMajor = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtiConfig {
    #[serde(rename = "A")]
    pub a: RowMajor,
    #[serde(rename = "Bu")]
    pub b_u: RowMajor,
    #[serde(rename = "Bw")]
    pub b_w: RowMajor,
    #[serde(rename = "C")]
    pub c: RowMajor,
    #[serde(rename = "Q")]
    pub q: RowMajor,
    #[serde(rename = "QT")]
    pub q_t: RowMajor,
    #[serde(rename = "R")]
    pub r: RowMajor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeVaryingConfig {
    #[serde(rename = "A")]
    pub a: Vec<RowMajor>,
    #[serde(rename = "Bu")]
    pub b_u: Vec<RowMajor>,
    #[serde(rename = "Bw")]
    pub b_w: Vec<RowMajor>,
    #[serde(rename = "C")]
    pub c: Vec<RowMajor>,
    #[serde(rename = "Q")]
    pub q: Vec<RowMajor>,
    #[serde(rename = "QT")]
    pub q_t: RowMajor,
    #[serde(rename = "R")]
    pub r: Vec<RowMajor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lti: Option<LtiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_varying: Option<TimeVaryingConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

/// Parsed configuration, validated instance and content digest.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub config: SystemConfig,
    pub system: SystemInstance,
    pub digest: String,
}

pub fn matrix(rows: &RowMajor, field: &str) -> CliResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Input(format!("{field}: matrix must be nonempty")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Input(format!(
            "{field}: row {i} has {} entries, row 0 has {c}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_row_major(m: &DMatrix<f64>) -> RowMajor {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sequence(items: &[RowMajor], field: &str, expected: usize) -> CliResult<Vec<DMatrix<f64>>> {
    if items.len() != expected {
        return Err(CliError::Input(format!(
            "time_varying.{field} has {} entries, expected {expected}",
            items.len()
        )));
    }
    items
        .iter()
        .enumerate()
        .map(|(t, m)| matrix(m, &format!("time_varying.{field}[{t}]")))
        .collect()
}

impl SystemConfig {
    /// SHA-256 of the canonical JSON of the horizon and model matrices.
    /// Labels and formatting do not enter the digest.
    pub fn digest(&self) -> String {
        let canonical = SystemConfig { labels: BTreeMap::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn instance(&self) -> CliResult<SystemInstance> {
        let t = self.horizon;
        if t == 0 {
            return Err(CliError::Input("horizon: must be at least 1".into()));
        }
        let built = match (&self.lti, &self.time_varying) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CliError::Input("exactly one of `lti` and `time_varying` must be present".into()))
            }
            (Some(l), None) => {
                let q = matrix(&l.q, "lti.Q")?;
                SystemInstance::lti(
                    t,
                    &LtiMatrices {
                        a: matrix(&l.a, "lti.A")?,
                        b_u: matrix(&l.b_u, "lti.Bu")?,
                        b_w: matrix(&l.b_w, "lti.Bw")?,
                        c: matrix(&l.c, "lti.C")?,
                        state_cost: q,
                        terminal_cost: matrix(&l.q_t, "lti.QT")?,
                        control_cost: matrix(&l.r, "lti.R")?,
                    },
                )
            }
            (None, Some(v)) => SystemInstance::new(SystemMatrices {
                a: sequence(&v.a, "A", t)?,
                b_u: sequence(&v.b_u, "Bu", t)?,
                b_w: sequence(&v.b_w, "Bw", t)?,
                c: sequence(&v.c, "C", t)?,
                state_cost: sequence(&v.q, "Q", t - 1)?,
                terminal_cost: matrix(&v.q_t, "time_varying.QT")?,
                control_cost: sequence(&v.r, "R", t)?,
            }),
        };
        built.map_err(|e| CliError::Input(format!("invalid system: {e}")))
    }
}

pub fn parse_system(text: &str) -> CliResult<LoadedSystem> {
    let config: SystemConfig =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("system schema: {e}")))?;
    let system = config.instance()?;
    let digest = config.digest();
    Ok(LoadedSystem { config, system, digest })
}

pub fn load_system_config(path: &Path) -> CliResult<LoadedSystem> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_system(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}
