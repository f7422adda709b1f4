//! Controller, instance and disturbance files.
//!
//! Controller:
//!
//! ```json
//! { "format_version": 1, "origin": "regret_optimal", "label": "regret-optimal",
//!   "causal": true, "dims": { "n": 2, "m": 1, "p": 1, "n_w": 2, "horizon": 10 },
//!   "gamma_opt": 0.83, "youla_Q": [[...], ...], "system_digest": "3f2a..." }
//! ```
//!
//! `youla_Q` is `(m·T) × (p·T)`, row-major, in normalized control
//! coordinates. Instance: `{ "w": [...], "v": [...], "ratio": 0.69 }` with
//! `ratio` optional. Disturbance: `{ "kind": ..., "seed": 7, "normalize_to": 1.0 }`
//! plus the kind's parameters:
//!
//! - `gaussian`: `sigma_w`, `sigma_v`
//! - `sinusoid`: `freq`, `amp_w`, `amp_v`, `phase`
//! - `constant`: `w` (length `n_w`), `v` (length `p`)
//! - `worst_case`: `target`, `benchmark`, each a controller file path
//!   (relative to the disturbance file) or `noncausal-h2` / `causal-h2`
//! - `switching`: `segments`, a list of `{ "start", "end", "spec" }` with
//!   half-open step ranges partitioning `[0, T)`

use std::path::{Path, PathBuf};

use regretctl_core::benchmark::{synth_causal_h2, synth_noncausal_h2};
use regretctl_core::nalgebra::DVector;
use regretctl_core::sim::{DisturbanceKind, DisturbanceSpec, Segment};
use regretctl_core::{Causality, Controller, Instance, LiftedSystem, Origin};
use serde::{Deserialize, Serialize};

use crate::config::{matrix, to_row_major, LoadedSystem, RowMajor};
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub n_w: usize,
    pub horizon: usize,
}

impl FileDims {
    pub fn of(loaded: &LoadedSystem) -> Self {
        let d = loaded.system.dims();
        FileDims { n: d.state, m: d.control, p: d.measurement, n_w: d.disturbance, horizon: loaded.system.horizon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub format_version: u32,
    pub origin: String,
    pub label: String,
    pub causal: bool,
    pub dims: FileDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_opt: Option<f64>,
    #[serde(rename = "youla_Q")]
    pub youla_q: RowMajor,
    pub system_digest: String,
}

impl ControllerFile {
    pub fn from_controller(c: &Controller, loaded: &LoadedSystem) -> Self {
        ControllerFile {
            format_version: FORMAT_VERSION,
            origin: c.origin.as_str().to_string(),
            label: c.label.clone(),
            causal: c.is_causal(),
            dims: FileDims::of(loaded),
            gamma_opt: c.gamma,
            youla_q: to_row_major(c.youla().data()),
            system_digest: loaded.digest.clone(),
        }
    }

    /// Rebuild the controller, checking version, digest, dimensions and causality.
    pub fn into_controller(self, loaded: &LoadedSystem, lift: &LiftedSystem, force: bool) -> CliResult<Controller> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Input(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.system_digest != loaded.digest && !force {
            return Err(CliError::Input(format!(
                "system_digest {} does not match the system ({}); pass --force to override",
                self.system_digest, loaded.digest
            )));
        }
        let dims = FileDims::of(loaded);
        if self.dims != dims {
            return Err(CliError::Input(format!("dims {:?} do not match the system {dims:?}", self.dims)));
        }
        let origin = Origin::parse(&self.origin)
            .ok_or_else(|| CliError::Input(format!("origin: unknown value `{}`", self.origin)))?;
        let q = matrix(&self.youla_q, "youla_Q")?;
        let zero = lift.zero_youla();
        if q.shape() != zero.data().shape() {
            return Err(CliError::Input(format!(
                "youla_Q is {}x{}, expected {}x{}",
                q.nrows(),
                q.ncols(),
                zero.data().nrows(),
                zero.data().ncols()
            )));
        }
        let q = zero.with_data(q).map_err(|e| CliError::at("youla_Q", e))?;
        let causality = if self.causal { Causality::Causal } else { Causality::Noncausal };
        let mut c = Controller::new(q, causality, origin, self.label).map_err(|e| CliError::at("youla_Q", e))?;
        c.gamma = self.gamma_opt;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance, ratio: Option<f64>) -> Self {
        InstanceFile { w: inst.w.iter().copied().collect(), v: inst.v.iter().copied().collect(), ratio }
    }

    pub fn instance(&self) -> CliResult<Instance> {
        Instance::new(DVector::from_vec(self.w.clone()), DVector::from_vec(self.v.clone()))
            .map_err(|e| CliError::at("instance", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub start: usize,
    pub end: usize,
    pub spec: DisturbanceFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceFile {
    Gaussian {
        sigma_w: f64,
        sigma_v: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
    Sinusoid {
        freq: f64,
        amp_w: f64,
        amp_v: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
    Constant {
        w: Vec<f64>,
        v: Vec<f64>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
    WorstCase {
        target: String,
        benchmark: String,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
    Switching {
        segments: Vec<SegmentFile>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
}

/// What a disturbance file needs to resolve controller references.
pub struct Resolver<'a> {
    pub loaded: &'a LoadedSystem,
    pub lift: &'a LiftedSystem,
    pub base_dir: PathBuf,
    pub force: bool,
}

impl Resolver<'_> {
    fn controller(&self, reference: &str) -> CliResult<Controller> {
        match reference {
            "noncausal-h2" => synth_noncausal_h2(self.lift).map_err(|e| CliError::at("noncausal-h2", e)),
            "causal-h2" => synth_causal_h2(self.lift).map_err(|e| CliError::at("causal-h2", e)),
            path => load_controller(&self.base_dir.join(path), self.loaded, self.lift, self.force),
        }
    }
}

impl DisturbanceFile {
    fn seed_and_norm(&self) -> (Option<u64>, Option<f64>) {
        match self {
            DisturbanceFile::Gaussian { seed, normalize_to, .. }
            | DisturbanceFile::Sinusoid { seed, normalize_to, .. }
            | DisturbanceFile::Constant { seed, normalize_to, .. }
            | DisturbanceFile::WorstCase { seed, normalize_to, .. }
            | DisturbanceFile::Switching { seed, normalize_to, .. } => (*seed, *normalize_to),
        }
    }

    /// Resolve into a spec; `seed_override` replaces the top-level seed.
    pub fn resolve(&self, r: &Resolver<'_>, seed_override: Option<u64>) -> CliResult<DisturbanceSpec> {
        let (seed, normalize_to) = self.seed_and_norm();
        let kind = match self {
            DisturbanceFile::Gaussian { sigma_w, sigma_v, .. } => {
                DisturbanceKind::Gaussian { sigma_w: *sigma_w, sigma_v: *sigma_v }
            }
            DisturbanceFile::Sinusoid { freq, amp_w, amp_v, phase, .. } => {
                DisturbanceKind::Sinusoid { freq: *freq, amp_w: *amp_w, amp_v: *amp_v, phase: *phase }
            }
            DisturbanceFile::Constant { w, v, .. } => DisturbanceKind::Constant {
                w: DVector::from_vec(w.clone()),
                v: DVector::from_vec(v.clone()),
            },
            DisturbanceFile::WorstCase { target, benchmark, .. } => DisturbanceKind::WorstCase {
                target: Box::new(r.controller(target)?),
                benchmark: Box::new(r.controller(benchmark)?),
            },
            DisturbanceFile::Switching { segments, .. } => DisturbanceKind::Switching(
                segments
                    .iter()
                    .map(|s| {
                        Ok(Segment { start: s.start, end: s.end, spec: s.spec.resolve(r, None)? })
                    })
                    .collect::<CliResult<Vec<_>>>()?,
            ),
        };
        Ok(DisturbanceSpec { kind, seed: seed_override.or(seed).unwrap_or(0), normalize_to })
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {what} schema: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("file types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_controller(path: &Path, loaded: &LoadedSystem, lift: &LiftedSystem, force: bool) -> CliResult<Controller> {
    let file: ControllerFile = read_json(path, "controller")?;
    file.into_controller(loaded, lift, force).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}
