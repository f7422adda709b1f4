//! Controllers in Youla form and the offline (clairvoyant) benchmarks.

use alloc::format;
use alloc::string::String;

use nalgebra::DMatrix;

use crate::blockops::{
    causal_split, chol_forward, chol_reverse, lower_solve_left, lower_solve_right,
    lower_transpose_solve_left, lower_transpose_solve_right, spd_solve, spectral_extremes,
    BlockMatrix, SpectralMode,
};
use crate::error::{Error, Result};
use crate::lifting::{evaluate_cost, Instance, LiftedSystem};
use crate::regret::regret_operator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Causality {
    Causal,
    Noncausal,
}

/// How a controller was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    H2Noncausal,
    H2Causal,
    RegretOptimal,
    Custom,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::H2Noncausal => "h2_noncausal",
            Origin::H2Causal => "h2_causal",
            Origin::RegretOptimal => "regret_optimal",
            Origin::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "h2_noncausal" => Origin::H2Noncausal,
            "h2_causal" => Origin::H2Causal,
            "regret_optimal" => Origin::RegretOptimal,
            "custom" => Origin::Custom,
            _ => return None,
        })
    }
}

/// A linear measurement-feedback policy stored by its Youla parameter
/// `Q = K (I − J K)⁻¹`, in normalized control coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    youla: BlockMatrix,
    causality: Causality,
    pub origin: Origin,
    pub label: String,
    /// Regret level certified at synthesis, when there is one.
    pub gamma: Option<f64>,
}

impl Controller {
    /// Fails when `causality` is `Causal` but `youla` has anticausal entries.
    pub fn new(youla: BlockMatrix, causality: Causality, origin: Origin, label: impl Into<String>) -> Result<Self> {
        if causality == Causality::Causal && !youla.is_causal()? {
            return Err(Error::Structure("controller declared causal has anticausal entries".into()));
        }
        Ok(Self { youla, causality, origin, label: label.into(), gamma: None })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn youla(&self) -> &BlockMatrix {
        &self.youla
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn is_causal(&self) -> bool {
        self.causality == Causality::Causal
    }

    /// Feedback operator `K = (I + Q J)⁻¹ Q`, the inverse of `Q = K (I − J K)⁻¹`.
    pub fn feedback(&self, lift: &LiftedSystem) -> Result<BlockMatrix> {
        lift.check_youla(&self.youla)?;
        let q = self.youla.data();
        let mut m = q * lift.j().data();
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        let k = if self.youla.is_causal()? {
            // Q J is strictly lower triangular, so I + Q J is unit lower triangular
            lower_solve_left(&m, q)?
        } else {
            m.lu()
                .solve(q)
                .ok_or_else(|| Error::Numerical("I + QJ is singular; the feedback form does not exist".into()))?
        };
        self.youla.with_data(k)
    }
}

/// `B M⁻¹` for a general square `M`.
fn right_solve_general(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.transpose()
        .lu()
        .solve(&b.transpose())
        .map(|x| x.transpose())
        .ok_or_else(|| Error::Numerical("I − JK is singular; the Youla form does not exist".into()))
}

/// Youla parameter `Q = K (I − J K)⁻¹` of a feedback operator.
pub fn youla_from_feedback(lift: &LiftedSystem, k: &BlockMatrix) -> Result<BlockMatrix> {
    lift.check_youla(k)?;
    let kd = k.data();
    let mut m = -(lift.j().data() * kd);
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0;
    }
    let q = if k.is_causal()? {
        lower_solve_right(kd, &m)?
    } else {
        right_solve_general(kd, &m)?
    };
    k.with_data(q)
}

/// `−(I + FᵀF)⁻¹ FᵀG Lᵀ (I + LLᵀ)⁻¹`.
pub(crate) fn noncausal_h2_youla(lift: &LiftedSystem) -> Result<DMatrix<f64>> {
    let cross = lift.f().data().transpose() * lift.g().data() * lift.l().data().transpose();
    let du = chol_forward(lift.gram_u())?;
    let dy = chol_forward(lift.gram_y())?;
    let left = spd_solve(&du, &cross)?;
    Ok(-spd_solve(&dy, &left.transpose())?.transpose())
}

/// The clairvoyant controller minimizing `‖𝒯‖_F` over all Youla parameters.
pub fn synth_noncausal_h2(lift: &LiftedSystem) -> Result<Controller> {
    let q = lift.zero_youla().with_data(noncausal_h2_youla(lift)?)?;
    Controller::new(q, Causality::Noncausal, Origin::H2Noncausal, "noncausal-h2")
}

/// The causal controller minimizing `‖𝒯‖_F`.
///
/// With `EᵀE = I + FᵀF` and `DDᵀ = I + LLᵀ` both lower triangular,
/// `‖𝒯‖_F² = const + ‖E Q D − Ŵ‖_F²` where `Ŵ = −E⁻ᵀ FᵀG Lᵀ D⁻ᵀ`, and
/// `Q ↦ E Q D` preserves causality both ways, so the optimum keeps the
/// causal part of `Ŵ`.
pub fn synth_causal_h2(lift: &LiftedSystem) -> Result<Controller> {
    let e = chol_reverse(lift.gram_u())?;
    let d = chol_forward(lift.gram_y())?;
    let cross = lift.f().data().transpose() * lift.g().data() * lift.l().data().transpose();
    let w_hat = -lower_transpose_solve_right(&lower_transpose_solve_left(&e, &cross)?, &d)?;
    let split = causal_split(&lift.zero_youla().with_data(w_hat)?)?;
    let q = lower_solve_right(&lower_solve_left(&e, split.causal.data())?, &d)?;
    let q = lift.zero_youla().with_data(q)?;
    Controller::new(q, Causality::Causal, Origin::H2Causal, "causal-h2")
}

/// Two instances on which two controllers trade places.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessPair {
    /// Unit-energy instance where the first controller is strictly cheaper.
    pub inst_1: Instance,
    /// Unit-energy instance where the second controller is strictly cheaper.
    pub inst_2: Instance,
    /// `(cost₂ − cost₁ on inst_1, cost₁ − cost₂ on inst_2)`, both positive.
    pub margins: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dominance {
    Witness(WitnessPair),
    /// The cost difference vanishes (within tolerance) on every instance.
    Tie,
    /// The first controller is never worse, up to tolerance.
    FirstDominatesOrTies,
    /// The second controller is never worse, up to tolerance.
    SecondDominatesOrTies,
}

/// Relative eigenvalue tolerance used to classify ties and semidefiniteness.
pub const DOMINANCE_TOL: f64 = 1e-10;

/// Look for instances on which `c1` and `c2` each win.
///
/// The cost gap `Δ = 𝒯₂ᵀ𝒯₂ − 𝒯₁ᵀ𝒯₁` is indefinite exactly when such a pair
/// exists; its extremal eigenvectors are the witnesses.
pub fn dominance_witness(lift: &LiftedSystem, c1: &Controller, c2: &Controller) -> Result<Dominance> {
    let delta = regret_operator(lift, c2.youla(), c1.youla())?;
    let ext = spectral_extremes(&delta, SpectralMode::SymmetricEig)?;
    let scale = libm::fabs(ext.max).max(libm::fabs(ext.min));
    if scale == 0.0 {
        return Ok(Dominance::Tie);
    }
    let tol = DOMINANCE_TOL * scale;
    let beats_somewhere = ext.max > tol;
    let loses_somewhere = ext.min < -tol;
    if !beats_somewhere && !loses_somewhere {
        return Ok(Dominance::Tie);
    }
    if !loses_somewhere {
        return Ok(Dominance::FirstDominatesOrTies);
    }
    if !beats_somewhere {
        return Ok(Dominance::SecondDominatesOrTies);
    }
    let w_len = lift.w_partition().total();
    let inst_1 = Instance::from_stacked(&ext.max_vector, w_len);
    let inst_2 = Instance::from_stacked(&ext.min_vector, w_len);
    let m1 = evaluate_cost(lift, c2.youla(), &inst_1)? - evaluate_cost(lift, c1.youla(), &inst_1)?;
    let m2 = evaluate_cost(lift, c1.youla(), &inst_2)? - evaluate_cost(lift, c2.youla(), &inst_2)?;
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::Numerical(format!(
            "witness margins ({m1:e}, {m2:e}) lost sign under direct cost evaluation"
        )));
    }
    Ok(Dominance::Witness(WitnessPair { inst_1, inst_2, margins: (m1, m2) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{lift_system, LtiMatrices, SystemInstance};
    use nalgebra::dmatrix;

    fn lift(horizon: usize) -> LiftedSystem {
        let sys = SystemInstance::lti(
            horizon,
            &LtiMatrices {
                a: dmatrix![1.0, 0.2; -0.3, 0.9],
                b_u: dmatrix![0.0; 1.0],
                b_w: dmatrix![1.0, 0.0; 0.5, 1.0],
                c: dmatrix![1.0, 0.5],
                state_cost: DMatrix::identity(2, 2),
                terminal_cost: dmatrix![2.0, 0.0; 0.0, 1.0],
                control_cost: dmatrix![0.5],
            },
        )
        .unwrap();
        lift_system(&sys).unwrap()
    }

    #[test]
    fn single_step_benchmarks_vanish() {
        let lift = lift(1);
        let nc = synth_noncausal_h2(&lift).unwrap();
        assert!(nc.youla().data().iter().all(|&x| x == 0.0));
        assert!(nc.feedback(&lift).unwrap().data().iter().all(|&x| x == 0.0));
        let c = synth_causal_h2(&lift).unwrap();
        assert!(c.youla().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn causal_h2_is_causal() {
        let lift = lift(5);
        let c = synth_causal_h2(&lift).unwrap();
        assert!(c.youla().is_causal().unwrap());
        assert!(c.feedback(&lift).unwrap().is_causal().unwrap());
    }

    #[test]
    fn feedback_round_trip() {
        let lift = lift(5);
        let c = synth_causal_h2(&lift).unwrap();
        let k = c.feedback(&lift).unwrap();
        let q = youla_from_feedback(&lift, &k).unwrap();
        let scale = c.youla().data().norm();
        assert!((q.data() - c.youla().data()).norm() <= 1e-10 * scale);
    }

    #[test]
    fn identical_controllers_tie() {
        let lift = lift(3);
        let nc = synth_noncausal_h2(&lift).unwrap();
        assert_eq!(dominance_witness(&lift, &nc, &nc).unwrap(), Dominance::Tie);
    }

    #[test]
    fn declared_causal_must_be_causal() {
        let lift = lift(3);
        let nc = synth_noncausal_h2(&lift).unwrap();
        let err = Controller::new(nc.youla().clone(), Causality::Causal, Origin::Custom, "x");
        assert!(matches!(err, Err(Error::Structure(_))));
    }
}
