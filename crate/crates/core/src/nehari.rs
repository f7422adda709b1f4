//! Finite-horizon Nehari problem: approximate a strictly anticausal `W` by
//! a causal `X` in spectral norm.
//!
//! The optimal distance is the largest "Hankel" block
//! `W[block rows 0..k, block cols k..T]` over splits `k = 1..T-1`. A
//! solution at any level above it is built column by column, right to
//! left, each column being a single central Parrott completion.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::blockops::{below_level, causal_split, parrott_central, spectral_norm, BlockMatrix};
use crate::error::{Error, Result};

/// Relative slack allowed on `‖X − W‖` above the requested level.
pub const ACHIEVED_SLACK: f64 = 1e-8;

/// Norms of every Hankel block of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelProfile {
    /// `block_norms[k - 1]` is the norm at split `k`, for `k = 1..T-1`.
    pub block_norms: Vec<f64>,
    pub norm: f64,
    /// Split attaining `norm`; `None` when there are no splits (`T = 1`).
    pub split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NehariSolution {
    /// Exactly causal approximant.
    pub x: BlockMatrix,
    /// `‖X − W‖₂`.
    pub achieved_norm: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariViolation {
    pub level: f64,
    /// Split whose Hankel block exceeds the level.
    pub split: usize,
    pub hankel_block_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NehariResult {
    Feasible(NehariSolution),
    Infeasible(NehariViolation),
}

impl NehariResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, NehariResult::Feasible(_))
    }

    pub fn solution(&self) -> Option<&NehariSolution> {
        match self {
            NehariResult::Feasible(s) => Some(s),
            NehariResult::Infeasible(_) => None,
        }
    }
}

fn require_anticausal(w: &BlockMatrix) -> Result<()> {
    if !w.is_strictly_anticausal()? {
        return Err(Error::Structure("Nehari data must be strictly anticausal".into()));
    }
    Ok(())
}

pub fn hankel_profile(w: &BlockMatrix) -> Result<HankelProfile> {
    require_anticausal(w)?;
    let t = w.rows().count();
    let mut block_norms = Vec::with_capacity(t.saturating_sub(1));
    let mut norm = 0.0;
    let mut split = None;
    for k in 1..t {
        let r = w.rows().span(0..k);
        let c = w.cols().span(k..t);
        let block = w.data().view((r.start, c.start), (r.len(), c.len())).into_owned();
        let s = spectral_norm(&block)?;
        block_norms.push(s);
        if split.is_none() || s > norm {
            norm = s;
            split = Some(k);
        }
    }
    Ok(HankelProfile { block_norms, norm, split })
}

/// `min { ‖X − W‖₂ : X causal }`.
pub fn hankel_norm(w: &BlockMatrix) -> Result<f64> {
    Ok(hankel_profile(w)?.norm)
}

/// Find a causal `X` with `‖X − W‖₂ ≤ gamma`, or report the violated split.
pub fn nehari_suboptimal(w: &BlockMatrix, gamma: f64) -> Result<NehariResult> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Input(format!("level must be positive, got {gamma}")));
    }
    let profile = hankel_profile(w)?;
    if let Some(k) = profile.split {
        if below_level(gamma, profile.norm) {
            return Ok(NehariResult::Infeasible(NehariViolation {
                level: gamma,
                split: k,
                hankel_block_norm: profile.norm,
            }));
        }
    }
    let x = sweep(w, gamma)?;
    let achieved_norm = spectral_norm(&(x.data() - w.data()))?;
    if achieved_norm > gamma.max(profile.norm) * (1.0 + ACHIEVED_SLACK) {
        return Err(Error::Numerical(format!(
            "completion reached ‖X − W‖ = {achieved_norm:e} at level {gamma:e}; retry with a larger margin"
        )));
    }
    Ok(NehariResult::Feasible(NehariSolution { x, achieved_norm, level: gamma }))
}

/// Right-to-left central completion of `Y = X − W`.
///
/// At column `j` the unknown is `Y[rows j.., col j]`; the rows above are the
/// fixed `−W[0..j, j..]` and the columns to the right were completed at the
/// previous step. Permuting columns puts the unknown in the bottom-right
/// corner of `[[A, B], [C, ?]]` with `A = Y[0..j, j+1..]`, `B = Y[0..j, j]`
/// and `C = Y[j.., j+1..]`.
fn sweep(w: &BlockMatrix, gamma: f64) -> Result<BlockMatrix> {
    let rp = w.rows();
    let cp = w.cols();
    let t = rp.count();
    let (nr, nc) = (rp.total(), cp.total());
    let mut y: DMatrix<f64> = -w.data();
    for j in (0..t).rev() {
        let r0 = rp.offset(j);
        let c0 = cp.offset(j);
        let c1 = cp.offset(j + 1);
        let a = y.view((0, c1), (r0, nc - c1)).into_owned();
        let b = y.view((0, c0), (r0, c1 - c0)).into_owned();
        let c = y.view((r0, c1), (nr - r0, nc - c1)).into_owned();
        let x = parrott_central(&a, &b, &c, gamma)?;
        y.view_mut((r0, c0), (nr - r0, c1 - c0)).copy_from(&x);
    }
    // the lower blocks of Y are the free entries of X; W vanishes there
    Ok(causal_split(&w.with_data(y)?)?.causal)
}

/// Solve at `hankel_norm(W)·(1 + rel_tol)`; the zero matrix when `W = 0`.
pub fn nehari_optimal(w: &BlockMatrix, rel_tol: f64) -> Result<NehariResult> {
    if !(rel_tol > 0.0 && rel_tol <= 0.1) {
        return Err(Error::Input(format!("rel_tol must lie in (0, 0.1], got {rel_tol}")));
    }
    let h = hankel_norm(w)?;
    if h == 0.0 {
        let x = BlockMatrix::zeros(w.rows().clone(), w.cols().clone());
        return Ok(NehariResult::Feasible(NehariSolution { x, achieved_norm: 0.0, level: 0.0 }));
    }
    nehari_suboptimal(w, h * (1.0 + rel_tol))
}
