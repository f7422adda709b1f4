//! Time-domain simulation, disturbance generation and scenario comparison.
//!
//! Causal controllers are stepped through the original (unnormalized)
//! system; noncausal ones are only ever evaluated in operator form, since
//! their measurements depend on the future.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;

use crate::benchmark::{noncausal_h2_youla, Controller, Origin};
use crate::blockops::BlockMatrix;
use crate::error::{Error, Result};
use crate::lifting::{evaluate_cost, Instance, LiftedSystem, SystemInstance};
use crate::regret::worst_case_instance;

/// States, controls and costs of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_T`
    pub x: Vec<DVector<f64>>,
    /// Physical controls `u_0..u_{T-1}`.
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// `x_tᵀQ_t x_t + u_tᵀR_t u_t` for `t = 0..T-1`, then `x_TᵀQ_T x_T`.
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

fn quad(m: &nalgebra::DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Step `x_{t+1} = A_t x_t + B_{u,t} u_t + B_{w,t} w_t` under `u = K y`.
///
/// `k` acts on measurements and returns normalized controls `S_t u_t`
/// (`S_tᵀS_t = R_t`), the coordinates every Youla parameter lives in.
pub fn simulate_closed_loop(sys: &SystemInstance, k: &BlockMatrix, inst: &Instance) -> Result<Trajectory> {
    let horizon = sys.horizon();
    let dims = sys.dims();
    let (n, m, nw, p) = (dims.state, dims.control, dims.disturbance, dims.measurement);
    if k.rows().count() != horizon
        || k.cols().count() != horizon
        || k.rows().sizes().iter().any(|&s| s != m)
        || k.cols().sizes().iter().any(|&s| s != p)
    {
        return Err(Error::Structure(format!(
            "feedback must have {horizon} blocks of {m}x{p}"
        )));
    }
    if !k.is_causal()? {
        return Err(Error::Structure(
            "feedback is noncausal; simulate noncausal controllers via evaluate_cost only".into(),
        ));
    }
    if inst.w.len() != nw * horizon || inst.v.len() != p * horizon {
        return Err(Error::Structure(format!(
            "instance has |w| = {}, |v| = {}; expected {} and {}",
            inst.w.len(),
            inst.v.len(),
            nw * horizon,
            p * horizon
        )));
    }

    let mut x = Vec::with_capacity(horizon + 1);
    let mut u = Vec::with_capacity(horizon);
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut w = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(horizon + 1);
    x.push(DVector::zeros(n));

    for t in 0..horizon {
        let wt = inst.w_at(t, nw).into_owned();
        let vt = inst.v_at(t, p).into_owned();
        let xt = &x[t];
        y.push(sys.c(t) * xt + &vt);
        let mut normalized = DVector::zeros(m);
        for (s, ys) in y.iter().enumerate() {
            normalized += k.block(t, s) * ys;
        }
        let ut = sys.denormalize_control(t, &normalized);
        let state_term = if t == 0 { 0.0 } else { quad(sys.state_cost(t), xt) };
        stage_costs.push(state_term + quad(sys.control_cost(t), &ut));
        let next = sys.a(t) * xt + sys.b_u(t) * &ut + sys.b_w(t) * &wt;
        x.push(next);
        u.push(ut);
        w.push(wt);
        v.push(vt);
    }
    stage_costs.push(quad(sys.state_cost(horizon), &x[horizon]));
    let total_cost = stage_costs.iter().sum();
    Ok(Trajectory { x, u, y, w, v, stage_costs, total_cost })
}

/// Simulate a causal controller given in Youla form.
pub fn simulate_controller(
    sys: &SystemInstance,
    lift: &LiftedSystem,
    controller: &Controller,
    inst: &Instance,
) -> Result<Trajectory> {
    if !controller.youla().is_causal()? {
        return Err(Error::Structure(
            "controller is noncausal; simulate noncausal controllers via evaluate_cost only".into(),
        ));
    }
    simulate_closed_loop(sys, &controller.feedback(lift)?, inst)
}

/// One interval `[start, end)` of a switching disturbance.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub spec: DisturbanceSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    /// Independent normal entries.
    Gaussian { sigma_w: f64, sigma_v: f64 },
    /// `amp·sin(2π·freq·t + phase + i·π/2)` on coordinate `i`.
    Sinusoid { freq: f64, amp_w: f64, amp_v: f64, phase: f64 },
    /// The same `w_t`, `v_t` at every step.
    Constant { w: DVector<f64>, v: DVector<f64> },
    /// Unit-energy maximizer of the regret of `target` against `benchmark`.
    WorstCase { target: Box<Controller>, benchmark: Box<Controller> },
    /// Sub-generators on consecutive intervals covering the horizon.
    Switching(Vec<Segment>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub seed: u64,
    /// Rescale `[w; v]` to this energy.
    pub normalize_to: Option<f64>,
}

impl DisturbanceSpec {
    pub fn new(kind: DisturbanceKind, seed: u64) -> Self {
        Self { kind, seed, normalize_to: None }
    }

    pub fn normalized(mut self, energy: f64) -> Self {
        self.normalize_to = Some(energy);
        self
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child `index` of `seed`, e.g. one replication or one segment.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Standard normal keyed by `(seed, stream, t, coord)`; no state is carried.
fn normal_at(seed: u64, stream: u64, t: usize, coord: usize) -> f64 {
    let h = splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ t as u64) ^ coord as u64);
    let to_unit = |bits: u64| ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    let u1 = to_unit(splitmix(h ^ 1));
    let u2 = to_unit(splitmix(h ^ 2));
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Deterministic instance for `spec`.
pub fn gen_disturbance(lift: &LiftedSystem, spec: &DisturbanceSpec) -> Result<Instance> {
    generate(lift, spec, spec.seed)
}

fn generate(lift: &LiftedSystem, spec: &DisturbanceSpec, seed: u64) -> Result<Instance> {
    let horizon = lift.horizon();
    let dims = lift.dims();
    let (nw, p) = (dims.disturbance, dims.measurement);
    let mut inst = match &spec.kind {
        DisturbanceKind::Gaussian { sigma_w, sigma_v } => {
            if !(*sigma_w >= 0.0 && *sigma_v >= 0.0) {
                return Err(Error::Input("gaussian standard deviations must be nonnegative".into()));
            }
            let w = DVector::from_fn(nw * horizon, |i, _| sigma_w * normal_at(seed, 0, i / nw, i % nw));
            let v = DVector::from_fn(p * horizon, |i, _| sigma_v * normal_at(seed, 1, i / p, i % p));
            Instance::new(w, v)?
        }
        DisturbanceKind::Sinusoid { freq, amp_w, amp_v, phase } => {
            let wave = |t: usize, i: usize| libm::sin(2.0 * PI * freq * t as f64 + phase + 0.5 * PI * i as f64);
            let w = DVector::from_fn(nw * horizon, |i, _| amp_w * wave(i / nw, i % nw));
            let v = DVector::from_fn(p * horizon, |i, _| amp_v * wave(i / p, i % p));
            Instance::new(w, v)?
        }
        DisturbanceKind::Constant { w, v } => {
            if w.len() != nw || v.len() != p {
                return Err(Error::Input(format!(
                    "constant disturbance needs |w| = {nw} and |v| = {p}, got {} and {}",
                    w.len(),
                    v.len()
                )));
            }
            let ws = DVector::from_fn(nw * horizon, |i, _| w[i % nw]);
            let vs = DVector::from_fn(p * horizon, |i, _| v[i % p]);
            Instance::new(ws, vs)?
        }
        DisturbanceKind::WorstCase { target, benchmark } => {
            worst_case_instance(lift, target.youla(), benchmark.youla())?.0
        }
        DisturbanceKind::Switching(segments) => {
            check_segments(segments, horizon)?;
            let mut out = Instance::zeros(lift);
            for (idx, seg) in segments.iter().enumerate() {
                let sub_seed = splitmix(derive_seed(seed, idx as u64) ^ seg.spec.seed);
                let sub = generate(lift, &seg.spec, sub_seed)?;
                let (ws, we) = (seg.start * nw, seg.end * nw);
                let (vs, ve) = (seg.start * p, seg.end * p);
                out.w.rows_mut(ws, we - ws).copy_from(&sub.w.rows(ws, we - ws));
                out.v.rows_mut(vs, ve - vs).copy_from(&sub.v.rows(vs, ve - vs));
            }
            out
        }
    };
    if let Some(target) = spec.normalize_to {
        if !(target >= 0.0) || !target.is_finite() {
            return Err(Error::Input(format!("normalize_to must be a nonnegative energy, got {target}")));
        }
        let energy = inst.energy();
        if energy > 0.0 {
            inst = inst.scaled(libm::sqrt(target / energy));
        }
    }
    Ok(inst)
}

fn check_segments(segments: &[Segment], horizon: usize) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::Input("switching disturbance needs at least one segment".into()));
    }
    let mut cursor = 0;
    for (i, seg) in segments.iter().enumerate() {
        if seg.start != cursor {
            return Err(Error::Input(format!(
                "segment {i} starts at {} but the previous one ends at {cursor} (segments must be contiguous)",
                seg.start
            )));
        }
        if seg.end <= seg.start {
            return Err(Error::Input(format!("segment {i} is empty or reversed")));
        }
        cursor = seg.end;
    }
    if cursor != horizon {
        return Err(Error::Input(format!(
            "segments cover [0, {cursor}) but the horizon is {horizon}"
        )));
    }
    Ok(())
}

/// Per-instance outcome for one controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSample {
    pub replication: usize,
    /// `‖w‖² + ‖v‖²`
    pub energy: f64,
    pub cost: f64,
    /// `cost − cost(K_nc)` on the same instance.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub origin: Origin,
    pub causal: bool,
    pub mean_cost: f64,
    pub max_cost: f64,
    pub mean_regret: f64,
    pub max_regret: f64,
    /// Largest `regret / energy` over instances with positive energy.
    pub max_regret_ratio: f64,
    /// Instances checked against the certified bound `γ²‖z‖²`.
    pub bound_checks: usize,
    pub bound_violations: usize,
    pub samples: Vec<ScenarioSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub replications: usize,
}

/// Relative slack on the certified regret bound.
pub const BOUND_SLACK: f64 = 1e-6;
/// Relative agreement required between simulated and operator-form costs.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// Evaluate every controller on `replications` instances drawn from `spec`.
///
/// Replication `r` uses seed `derive_seed(spec.seed, r)`. Regret is measured
/// against the H₂-optimal noncausal controller; controllers carrying a
/// certified level (`gamma`) of origin `RegretOptimal` are checked against
/// `regret ≤ γ²‖z‖²(1 + BOUND_SLACK)` on every instance.
pub fn run_scenario(
    sys: &SystemInstance,
    lift: &LiftedSystem,
    controllers: &[Controller],
    spec: &DisturbanceSpec,
    replications: usize,
) -> Result<ComparisonTable> {
    if controllers.is_empty() {
        return Err(Error::Input("a scenario needs at least one controller".into()));
    }
    if replications == 0 {
        return Err(Error::Input("replications must be at least 1".into()));
    }
    let q_nc = lift.zero_youla().with_data(noncausal_h2_youla(lift)?)?;
    let feedbacks = controllers
        .iter()
        .map(|c| {
            lift.check_youla(c.youla())?;
            if c.youla().is_causal()? {
                c.feedback(lift).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples: Vec<Vec<ScenarioSample>> = alloc::vec![Vec::with_capacity(replications); controllers.len()];
    for r in 0..replications {
        let seed = derive_seed(spec.seed, r as u64);
        let inst = generate(lift, spec, seed)?;
        let energy = inst.energy();
        let benchmark_cost = evaluate_cost(lift, &q_nc, &inst)?;
        for (ci, c) in controllers.iter().enumerate() {
            let operator_cost = evaluate_cost(lift, c.youla(), &inst)?;
            let cost = match &feedbacks[ci] {
                Some(k) => {
                    let simulated = simulate_closed_loop(sys, k, &inst)?.total_cost;
                    let tol = CROSS_CHECK_TOL * operator_cost.max(simulated) + 1e-14 * energy;
                    if libm::fabs(simulated - operator_cost) > tol {
                        return Err(Error::Numerical(format!(
                            "controller '{}': simulated cost {simulated:e} disagrees with operator cost {operator_cost:e}",
                            c.label
                        )));
                    }
                    simulated
                }
                None => operator_cost,
            };
            samples[ci].push(ScenarioSample { replication: r, energy, cost, regret: cost - benchmark_cost });
        }
    }

    let rows = controllers
        .iter()
        .zip(samples)
        .map(|(c, samples)| summarize(c, samples))
        .collect();
    Ok(ComparisonTable { rows, replications })
}

fn summarize(c: &Controller, samples: Vec<ScenarioSample>) -> ComparisonRow {
    let count = samples.len() as f64;
    let mut row = ComparisonRow {
        label: c.label.clone(),
        origin: c.origin,
        causal: c.youla().is_causal().unwrap_or(false),
        mean_cost: samples.iter().map(|s| s.cost).sum::<f64>() / count,
        max_cost: samples.iter().map(|s| s.cost).fold(f64::NEG_INFINITY, f64::max),
        mean_regret: samples.iter().map(|s| s.regret).sum::<f64>() / count,
        max_regret: samples.iter().map(|s| s.regret).fold(f64::NEG_INFINITY, f64::max),
        max_regret_ratio: samples
            .iter()
            .filter(|s| s.energy > 0.0)
            .map(|s| s.regret / s.energy)
            .fold(0.0, f64::max),
        bound_checks: 0,
        bound_violations: 0,
        samples: Vec::new(),
    };
    if let (Origin::RegretOptimal, Some(gamma)) = (c.origin, c.gamma) {
        let level = gamma * gamma;
        row.bound_checks = samples.len();
        row.bound_violations = samples
            .iter()
            .filter(|s| s.regret > level * s.energy * (1.0 + BOUND_SLACK))
            .count();
    }
    row.samples = samples;
    row
}
