//! Regret-optimal causal control against the H₂-optimal clairvoyant benchmark.
//!
//! Write `a = L w + v` and `b = w − Lᵀ v`; these coordinates are orthogonal
//! with `‖z‖² = aᵀ(I + LLᵀ)⁻¹a + bᵀ(I + LᵀL)⁻¹b`. The regret of `Q` against
//! `Q_nc` is `aᵀΔᵀTΔa + 2 aᵀΔᵀFᵀG V⁻¹ b` with `Δ = Q − Q_nc`, and maximizing
//! over `b` shows that regret stays below `γ²‖z‖²` exactly when
//!
//! ```text
//! Δᵀ P_γ Δ ⪯ γ² (I + LLᵀ)⁻¹,    P_γ = I + FᵀF + γ⁻² FᵀG (I + LᵀL)⁻¹ GᵀF.
//! ```
//!
//! With lower-triangular `EᵀE = P_γ` and `DDᵀ = I + LLᵀ` this reads
//! `‖E Q D − E Q_nc D‖₂ ≤ γ`. `Q ↦ E Q D` maps causal to causal and back, so
//! the level is feasible iff the Nehari problem for the anticausal part of
//! `E Q_nc D` is feasible at `γ`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::benchmark::{noncausal_h2_youla, synth_causal_h2, Causality, Controller, Origin};
use crate::blockops::{
    causal_split, chol_forward, chol_reverse, lower_solve_left, lower_solve_right, spd_solve,
    spectral_extremes, symmetrize, BlockMatrix, SpectralMode,
};
use crate::error::{Error, Result};
use crate::lifting::{transfer_operator, Instance, LiftedSystem};
use crate::nehari::{nehari_suboptimal, NehariResult};

/// `𝒯_Qᵀ𝒯_Q − 𝒯_{Q0}ᵀ𝒯_{Q0}`: `zᵀRz = cost(Q, z) − cost(Q0, z)`.
pub fn regret_operator(lift: &LiftedSystem, q: &BlockMatrix, q0: &BlockMatrix) -> Result<DMatrix<f64>> {
    let t = transfer_operator(lift, q)?;
    let t0 = transfer_operator(lift, q0)?;
    let mut r = t.transpose() * &t - t0.transpose() * &t0;
    symmetrize(&mut r);
    Ok(r)
}

/// Level-independent data for the feasibility test.
#[derive(Debug, Clone)]
pub struct RegretProblem<'a> {
    lift: &'a LiftedSystem,
    q_nc: DMatrix<f64>,
    // FᵀG (I + LᵀL)⁻¹ GᵀF
    cross: DMatrix<f64>,
    // D Dᵀ = I + LLᵀ
    d: DMatrix<f64>,
}

/// Result of the fixed-level test.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelOutcome {
    Feasible { youla: BlockMatrix, nehari_norm: f64 },
    Infeasible { hankel_norm: f64, split: usize },
}

impl<'a> RegretProblem<'a> {
    pub fn new(lift: &'a LiftedSystem) -> Result<Self> {
        let q_nc = noncausal_h2_youla(lift)?;
        let gtf = lift.g().data().transpose() * lift.f().data();
        let dw = chol_forward(lift.gram_w())?;
        let mut cross = gtf.transpose() * spd_solve(&dw, &gtf)?;
        symmetrize(&mut cross);
        let d = chol_forward(lift.gram_y())?;
        Ok(Self { lift, q_nc, cross, d })
    }

    pub fn lift(&self) -> &LiftedSystem {
        self.lift
    }

    /// Youla parameter of the H₂-optimal noncausal benchmark.
    pub fn q_nc(&self) -> &DMatrix<f64> {
        &self.q_nc
    }

    /// `P_γ = I + FᵀF + γ⁻² FᵀG (I + LᵀL)⁻¹ GᵀF`.
    pub fn weight(&self, gamma: f64) -> DMatrix<f64> {
        let mut p = self.lift.gram_u() + &self.cross * (1.0 / (gamma * gamma));
        symmetrize(&mut p);
        p
    }

    /// Lower-triangular `E` with `EᵀE = P_γ`.
    pub fn left_factor(&self, gamma: f64) -> Result<DMatrix<f64>> {
        chol_reverse(&self.weight(gamma))
    }

    /// Lower-triangular `D` with `DDᵀ = I + LLᵀ`.
    pub fn right_factor(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `E (Q − Q_nc) D`; its norm is below `γ` iff the regret of `Q` is below `γ²`.
    pub fn scaled_gap(&self, q: &BlockMatrix, gamma: f64) -> Result<DMatrix<f64>> {
        self.lift.check_youla(q)?;
        let e = self.left_factor(gamma)?;
        Ok(&e * (q.data() - &self.q_nc) * &self.d)
    }

    pub fn solve_level(&self, gamma: f64) -> Result<LevelOutcome> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Input(format!("level must be positive, got {gamma}")));
        }
        let e = self.left_factor(gamma)?;
        let target = self.lift.zero_youla().with_data(&e * &self.q_nc * &self.d)?;
        let split = causal_split(&target)?;
        match nehari_suboptimal(&split.anticausal, gamma)? {
            NehariResult::Infeasible(v) => Ok(LevelOutcome::Infeasible {
                hankel_norm: v.hankel_block_norm,
                split: v.split,
            }),
            NehariResult::Feasible(sol) => {
                let z = sol.x.data() + split.causal.data();
                let q = lower_solve_right(&lower_solve_left(&e, &z)?, &self.d)?;
                let youla = self.lift.zero_youla().with_data(q)?;
                if !youla.is_causal()? {
                    return Err(Error::Numerical("recovered Youla parameter lost causality".into()));
                }
                Ok(LevelOutcome::Feasible { youla, nehari_norm: sol.achieved_norm })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Suboptimal {
    /// Causal controller whose regret never exceeds `γ²‖z‖²`.
    Feasible(Controller),
    Infeasible { level: f64, hankel_norm: f64 },
}

/// Causal controller with regret at most `γ²(‖w‖² + ‖v‖²)` against the
/// noncausal H₂ benchmark, if one exists.
pub fn regret_suboptimal(lift: &LiftedSystem, gamma: f64) -> Result<Suboptimal> {
    let problem = RegretProblem::new(lift)?;
    match problem.solve_level(gamma)? {
        LevelOutcome::Feasible { youla, .. } => {
            let c = Controller::new(youla, Causality::Causal, Origin::RegretOptimal, "regret-suboptimal")?;
            Ok(Suboptimal::Feasible(c.with_gamma(gamma)))
        }
        LevelOutcome::Infeasible { hankel_norm, .. } => {
            Ok(Suboptimal::Infeasible { level: gamma, hankel_norm })
        }
    }
}

/// Top eigenvector of the regret operator, as an instance, and its ratio.
pub fn worst_case_instance(lift: &LiftedSystem, q: &BlockMatrix, q0: &BlockMatrix) -> Result<(Instance, f64)> {
    let r = regret_operator(lift, q, q0)?;
    let ext = spectral_extremes(&r, SpectralMode::SymmetricEig)?;
    Ok((Instance::from_stacked(&ext.max_vector, lift.w_partition().total()), ext.max))
}

/// Outcome of the bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    /// Smallest level certified feasible.
    pub gamma_opt: f64,
    pub controller: Controller,
    /// The benchmark the regret is measured against.
    pub benchmark: Controller,
    /// `λ_max` of the regret operator at `controller`.
    pub certificate_lambda_max: f64,
    /// `(γ, feasible)` in evaluation order.
    pub bisection_trace: Vec<(f64, bool)>,
    /// Unit-energy instance attaining `certificate_lambda_max`.
    pub worst_case: Instance,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Bisection on the regret level.
///
/// Starts from `[0, √λ_max(causal-H₂ regret) + abs_tol]` (returning the
/// causal-H₂ controller outright when that level is within `abs_tol` of 0)
/// and stops once
/// `γ_hi − γ_lo ≤ max(rel_tol·γ_hi / 2, abs_tol)`, which bounds the relative
/// gap of the squared level (the regret bound itself) by `rel_tol`.
pub fn synth_regret_optimal(lift: &LiftedSystem, rel_tol: f64, abs_tol: f64) -> Result<SynthesisReport> {
    if !(rel_tol > 0.0 && rel_tol <= 0.1) {
        return Err(Error::Input(format!("rel_tol must lie in (0, 0.1], got {rel_tol}")));
    }
    if !(abs_tol > 0.0) || !abs_tol.is_finite() {
        return Err(Error::Input(format!("abs_tol must be positive, got {abs_tol}")));
    }
    let problem = RegretProblem::new(lift)?;
    let q_nc = lift.zero_youla().with_data(problem.q_nc().clone())?;
    let benchmark = Controller::new(q_nc.clone(), Causality::Noncausal, Origin::H2Noncausal, "noncausal-h2")?;

    let warm = synth_causal_h2(lift)?;
    let warm_regret = spectral_extremes(&regret_operator(lift, warm.youla(), &q_nc)?, SpectralMode::SymmetricEig)?.max;
    let warm_level = libm::sqrt(warm_regret.max(0.0));
    if warm_level <= abs_tol {
        // regret is never negative, so the bracket [0, warm_level] is already closed
        let (worst_case, certificate) = worst_case_instance(lift, warm.youla(), &q_nc)?;
        let controller = Controller::new(warm.youla().clone(), Causality::Causal, Origin::RegretOptimal, "regret-optimal")?
            .with_gamma(warm_level);
        return Ok(SynthesisReport {
            gamma_opt: warm_level,
            controller,
            benchmark,
            certificate_lambda_max: certificate,
            bisection_trace: Vec::new(),
            worst_case,
            rel_tol,
            abs_tol,
        });
    }
    let mut hi = warm_level + abs_tol;
    let mut trace = Vec::new();

    let mut best = None;
    for _ in 0..64 {
        match feasible_at(&problem, hi)? {
            Some(q) => {
                trace.push((hi, true));
                best = Some(q);
                break;
            }
            None => {
                trace.push((hi, false));
                hi *= 2.0;
            }
        }
    }
    let mut best = best.ok_or_else(|| Error::Numerical("no feasible regret level found".into()))?;
    let mut lo = 0.0_f64;

    while hi - lo > (0.5 * rel_tol * hi).max(abs_tol) {
        let mid = 0.5 * (lo + hi);
        match feasible_at(&problem, mid)? {
            Some(q) => {
                trace.push((mid, true));
                hi = mid;
                best = q;
            }
            None => {
                trace.push((mid, false));
                lo = mid;
            }
        }
    }

    let (mut worst_case, mut certificate) = worst_case_instance(lift, &best, &q_nc)?;
    if warm_regret < certificate {
        // the warm start already sits inside the bisection bracket
        best = warm.youla().clone();
        (worst_case, certificate) = worst_case_instance(lift, &best, &q_nc)?;
    }
    let controller = Controller::new(best, Causality::Causal, Origin::RegretOptimal, "regret-optimal")?.with_gamma(hi);
    Ok(SynthesisReport {
        gamma_opt: hi,
        controller,
        benchmark,
        certificate_lambda_max: certificate,
        bisection_trace: trace,
        worst_case,
        rel_tol,
        abs_tol,
    })
}

/// Fixed-level test for the bisection. A level whose completion is too
/// ill-conditioned to certify counts as infeasible.
fn feasible_at(problem: &RegretProblem<'_>, gamma: f64) -> Result<Option<BlockMatrix>> {
    match problem.solve_level(gamma) {
        Ok(LevelOutcome::Feasible { youla, .. }) => Ok(Some(youla)),
        Ok(LevelOutcome::Infeasible { .. }) => Ok(None),
        Err(Error::Numerical(_)) | Err(Error::NotPositiveDefinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
