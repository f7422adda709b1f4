//! Finite-horizon state-space data and its lifted operator form.
//!
//! With `x₀ = 0` and the control normalized so that `R_t = I`, the whole
//! horizon is described by
//!
//! ```text
//! s = F u + G w        (regulated output, s_t = Q_t^{1/2} x_t, t = 1..T)
//! y = J u + L w + v    (measurements, t = 0..T-1)
//! ```
//!
//! and a controller with Youla parameter `Q` (`u = Q (L w + v)`) has cost
//! `‖s‖² + ‖u‖² = ‖𝒯 [w; v]‖²` with `𝒯 = [[F Q L + G, F Q], [Q L, Q]]`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::blockops::{
    chol_forward, ensure_finite, frobenius, lower_solve_left, spd_solve, symmetric_root, symmetrize,
    BlockMatrix, BlockPartition,
};
use crate::error::{Error, Result};

/// Dimensions shared by every step of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// `n`
    pub state: usize,
    /// `m`
    pub control: usize,
    /// `n_w`
    pub disturbance: usize,
    /// `p`
    pub measurement: usize,
}

/// Per-step matrices of a time-varying system.
///
/// `a`, `b_u`, `b_w`, `c` and `control_cost` hold one entry per step
/// `t = 0..T-1`; `state_cost` holds `Q_1..Q_{T-1}` (the cost on `x₀ = 0` is
/// irrelevant) and `terminal_cost` is `Q_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: Vec<DMatrix<f64>>,
    pub b_u: Vec<DMatrix<f64>>,
    pub b_w: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub state_cost: Vec<DMatrix<f64>>,
    pub terminal_cost: DMatrix<f64>,
    pub control_cost: Vec<DMatrix<f64>>,
}

/// Time-invariant shorthand, expanded over the horizon by [`SystemInstance::lti`].
#[derive(Debug, Clone, PartialEq)]
pub struct LtiMatrices {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub state_cost: DMatrix<f64>,
    pub terminal_cost: DMatrix<f64>,
    pub control_cost: DMatrix<f64>,
}

/// A validated finite-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance {
    horizon: usize,
    dims: Dims,
    m: SystemMatrices,
    // r_tᵀ r_t = Q_t, indexed t-1 for t = 1..T
    state_roots: Vec<DMatrix<f64>>,
    // S_tᵀ S_t = R_t, upper triangular
    control_roots: Vec<DMatrix<f64>>,
}

fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize, name: &str, t: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Input(format!(
            "{name}[{t}] has shape {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, &format!("{name}[{t}]"))
}

/// Factor `r` with `rᵀ r = q` for symmetric PSD `q`.
fn psd_root(q: &DMatrix<f64>, name: &str, t: usize) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let scale = frobenius(q).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if libm::fabs(q[(i, j)] - q[(j, i)]) > 1e-10 * scale {
                return Err(Error::Input(format!("{name}[{t}] is not symmetric")));
            }
        }
    }
    if let Ok(d) = chol_forward(q) {
        return Ok(d.transpose());
    }
    let mut sym = q.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical(format!("eigensolver failed on {name}[{t}]")))?;
    let mut root = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-12 * scale {
            return Err(Error::Input(format!(
                "{name}[{t}] is not positive semidefinite (eigenvalue {lam:e})"
            )));
        }
        let s = if lam > 1e-14 * scale { libm::sqrt(lam) } else { 0.0 };
        root.row_mut(k).copy_from(&(eig.eigenvectors.column(k).transpose() * s));
    }
    Ok(root)
}

impl SystemInstance {
    pub fn new(m: SystemMatrices) -> Result<Self> {
        let horizon = m.a.len();
        if horizon == 0 {
            return Err(Error::Input("horizon must be at least 1".into()));
        }
        for (name, len) in [
            ("Bu", m.b_u.len()),
            ("Bw", m.b_w.len()),
            ("C", m.c.len()),
            ("R", m.control_cost.len()),
        ] {
            if len != horizon {
                return Err(Error::Input(format!(
                    "{name} has {len} steps, expected {horizon}"
                )));
            }
        }
        if m.state_cost.len() != horizon - 1 {
            return Err(Error::Input(format!(
                "Q has {} steps, expected {} (t = 1..T-1)",
                m.state_cost.len(),
                horizon - 1
            )));
        }
        let n = m.a[0].nrows();
        let dims = Dims {
            state: n,
            control: m.b_u[0].ncols(),
            disturbance: m.b_w[0].ncols(),
            measurement: m.c[0].nrows(),
        };
        if n == 0 || dims.control == 0 || dims.disturbance == 0 || dims.measurement == 0 {
            return Err(Error::Input(format!("all dimensions must be positive, got {dims:?}")));
        }
        for t in 0..horizon {
            check_shape(&m.a[t], n, n, "A", t)?;
            check_shape(&m.b_u[t], n, dims.control, "Bu", t)?;
            check_shape(&m.b_w[t], n, dims.disturbance, "Bw", t)?;
            check_shape(&m.c[t], dims.measurement, n, "C", t)?;
            check_shape(&m.control_cost[t], dims.control, dims.control, "R", t)?;
        }
        for (i, q) in m.state_cost.iter().enumerate() {
            check_shape(q, n, n, "Q", i + 1)?;
        }
        check_shape(&m.terminal_cost, n, n, "QT", horizon)?;

        let mut state_roots = Vec::with_capacity(horizon);
        for (i, q) in m.state_cost.iter().enumerate() {
            state_roots.push(psd_root(q, "Q", i + 1)?);
        }
        state_roots.push(psd_root(&m.terminal_cost, "QT", horizon)?);

        let mut control_roots = Vec::with_capacity(horizon);
        for (t, r) in m.control_cost.iter().enumerate() {
            let d = chol_forward(r).map_err(|e| {
                Error::Input(format!("R[{t}] is not positive definite ({e})"))
            })?;
            control_roots.push(d.transpose());
        }
        Ok(Self { horizon, dims, m, state_roots, control_roots })
    }

    pub fn lti(horizon: usize, s: &LtiMatrices) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Input("horizon must be at least 1".into()));
        }
        Self::new(SystemMatrices {
            a: alloc::vec![s.a.clone(); horizon],
            b_u: alloc::vec![s.b_u.clone(); horizon],
            b_w: alloc::vec![s.b_w.clone(); horizon],
            c: alloc::vec![s.c.clone(); horizon],
            state_cost: alloc::vec![s.state_cost.clone(); horizon - 1],
            terminal_cost: s.terminal_cost.clone(),
            control_cost: alloc::vec![s.control_cost.clone(); horizon],
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn matrices(&self) -> &SystemMatrices {
        &self.m
    }

    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.m.a[t]
    }

    pub fn b_u(&self, t: usize) -> &DMatrix<f64> {
        &self.m.b_u[t]
    }

    pub fn b_w(&self, t: usize) -> &DMatrix<f64> {
        &self.m.b_w[t]
    }

    pub fn c(&self, t: usize) -> &DMatrix<f64> {
        &self.m.c[t]
    }

    pub fn control_cost(&self, t: usize) -> &DMatrix<f64> {
        &self.m.control_cost[t]
    }

    /// `Q_t` for `t = 1..=T` (`t = T` is the terminal cost).
    pub fn state_cost(&self, t: usize) -> &DMatrix<f64> {
        assert!(t >= 1 && t <= self.horizon, "state cost index {t} outside 1..={}", self.horizon);
        if t == self.horizon {
            &self.m.terminal_cost
        } else {
            &self.m.state_cost[t - 1]
        }
    }

    /// `r` with `rᵀ r = Q_t`, for `t = 1..=T`.
    pub fn state_root(&self, t: usize) -> &DMatrix<f64> {
        &self.state_roots[t - 1]
    }

    /// Upper-triangular `S_t` with `S_tᵀ S_t = R_t`; normalized control is `S_t u_t`.
    pub fn control_root(&self, t: usize) -> &DMatrix<f64> {
        &self.control_roots[t]
    }

    /// Physical control `u_t` from its normalized value `S_t u_t`.
    pub fn denormalize_control(&self, t: usize, normalized: &DVector<f64>) -> DVector<f64> {
        self.control_roots[t]
            .solve_upper_triangular(normalized)
            .expect("control root has a positive diagonal")
    }
}

/// Stacked disturbance and measurement noise over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub w: DVector<f64>,
    pub v: DVector<f64>,
}

impl Instance {
    pub fn new(w: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if !w.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::Input("instance contains non-finite entries".into()));
        }
        Ok(Self { w, v })
    }

    pub fn zeros(lift: &LiftedSystem) -> Self {
        Self {
            w: DVector::zeros(lift.w_partition().total()),
            v: DVector::zeros(lift.y_partition().total()),
        }
    }

    /// `z = [w; v]`.
    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.w.len() + self.v.len());
        z.rows_mut(0, self.w.len()).copy_from(&self.w);
        z.rows_mut(self.w.len(), self.v.len()).copy_from(&self.v);
        z
    }

    pub fn from_stacked(z: &DVector<f64>, w_len: usize) -> Self {
        Self {
            w: z.rows(0, w_len).into_owned(),
            v: z.rows(w_len, z.len() - w_len).into_owned(),
        }
    }

    /// `‖w‖² + ‖v‖²`.
    pub fn energy(&self) -> f64 {
        self.w.norm_squared() + self.v.norm_squared()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { w: &self.w * c, v: &self.v * c }
    }

    /// `w_t` as a slice view.
    pub fn w_at(&self, t: usize, n_w: usize) -> nalgebra::DVectorView<'_, f64> {
        self.w.rows(t * n_w, n_w)
    }

    pub fn v_at(&self, t: usize, p: usize) -> nalgebra::DVectorView<'_, f64> {
        self.v.rows(t * p, p)
    }
}

/// Operators `F, G, J, L` and the Gramians `I + FᵀF`, `I + LLᵀ`, `I + LᵀL`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    horizon: usize,
    dims: Dims,
    f: BlockMatrix,
    g: BlockMatrix,
    j: BlockMatrix,
    l: BlockMatrix,
    gram_u: DMatrix<f64>,
    gram_y: DMatrix<f64>,
    gram_w: DMatrix<f64>,
}

fn gram_plus_identity(m: &DMatrix<f64>, left: bool) -> Result<DMatrix<f64>> {
    let mut g = if left { m * m.transpose() } else { m.transpose() * m };
    for i in 0..g.nrows() {
        g[(i, i)] += 1.0;
    }
    symmetrize(&mut g);
    chol_forward(&g)?;
    Ok(g)
}

/// Build the lifted operators of `sys`.
pub fn lift_system(sys: &SystemInstance) -> Result<LiftedSystem> {
    let t_len = sys.horizon;
    let Dims { state: n, control: m, disturbance: nw, measurement: p } = sys.dims;
    let s_part = BlockPartition::uniform(n, t_len)?;
    let u_part = BlockPartition::uniform(m, t_len)?;
    let w_part = BlockPartition::uniform(nw, t_len)?;
    let y_part = BlockPartition::uniform(p, t_len)?;

    let mut f = DMatrix::zeros(n * t_len, m * t_len);
    let mut g = DMatrix::zeros(n * t_len, nw * t_len);
    let mut j = DMatrix::zeros(p * t_len, m * t_len);
    let mut l = DMatrix::zeros(p * t_len, nw * t_len);

    for k in 0..t_len {
        // Φ(t, k+1) B_k, starting at t = k + 1
        let mut resp_u = lower_solve_right_upper(sys.b_u(k), sys.control_root(k))?;
        let mut resp_w = sys.b_w(k).clone();
        for t in (k + 1)..=t_len {
            let root = sys.state_root(t);
            f.view_mut(((t - 1) * n, k * m), (n, m)).copy_from(&(root * &resp_u));
            g.view_mut(((t - 1) * n, k * nw), (n, nw)).copy_from(&(root * &resp_w));
            if t < t_len {
                let c = sys.c(t);
                j.view_mut((t * p, k * m), (p, m)).copy_from(&(c * &resp_u));
                l.view_mut((t * p, k * nw), (p, nw)).copy_from(&(c * &resp_w));
                resp_u = sys.a(t) * resp_u;
                resp_w = sys.a(t) * resp_w;
            }
        }
    }

    let gram_u = gram_plus_identity(&f, false)?;
    let gram_y = gram_plus_identity(&l, true)?;
    let gram_w = gram_plus_identity(&l, false)?;
    Ok(LiftedSystem {
        horizon: t_len,
        dims: sys.dims,
        f: BlockMatrix::new(s_part.clone(), u_part.clone(), f)?,
        g: BlockMatrix::new(s_part, w_part.clone(), g)?,
        j: BlockMatrix::new(y_part.clone(), u_part, j)?,
        l: BlockMatrix::new(y_part, w_part, l)?,
        gram_u,
        gram_y,
        gram_w,
    })
}

/// `B S⁻¹` for upper-triangular `S`.
fn lower_solve_right_upper(b: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // X S = B  <=>  Sᵀ Xᵀ = Bᵀ with Sᵀ lower
    Ok(lower_solve_left(&s.transpose(), &b.transpose())?.transpose())
}

impl LiftedSystem {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn f(&self) -> &BlockMatrix {
        &self.f
    }

    pub fn g(&self) -> &BlockMatrix {
        &self.g
    }

    pub fn j(&self) -> &BlockMatrix {
        &self.j
    }

    pub fn l(&self) -> &BlockMatrix {
        &self.l
    }

    /// `I + FᵀF`
    pub fn gram_u(&self) -> &DMatrix<f64> {
        &self.gram_u
    }

    /// `I + L Lᵀ`
    pub fn gram_y(&self) -> &DMatrix<f64> {
        &self.gram_y
    }

    /// `I + LᵀL`
    pub fn gram_w(&self) -> &DMatrix<f64> {
        &self.gram_w
    }

    /// `I + F Fᵀ`, built on demand.
    pub fn gram_s(&self) -> DMatrix<f64> {
        let f = self.f.data();
        let mut s = f * f.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += 1.0;
        }
        symmetrize(&mut s);
        s
    }

    pub fn u_partition(&self) -> &BlockPartition {
        self.f.cols()
    }

    pub fn y_partition(&self) -> &BlockPartition {
        self.l.rows()
    }

    pub fn w_partition(&self) -> &BlockPartition {
        self.l.cols()
    }

    pub fn s_partition(&self) -> &BlockPartition {
        self.f.rows()
    }

    /// Length of a stacked instance `[w; v]`.
    pub fn instance_len(&self) -> usize {
        self.w_partition().total() + self.y_partition().total()
    }

    /// All-zero Youla parameter with the right partitions.
    pub fn zero_youla(&self) -> BlockMatrix {
        BlockMatrix::zeros(self.u_partition().clone(), self.y_partition().clone())
    }

    pub(crate) fn check_youla(&self, q: &BlockMatrix) -> Result<()> {
        if q.rows() != self.u_partition() || q.cols() != self.y_partition() {
            return Err(Error::Structure(format!(
                "Youla parameter must map {} measurement entries to {} controls, got {}x{}",
                self.y_partition().total(),
                self.u_partition().total(),
                q.data().nrows(),
                q.data().ncols()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_instance(&self, inst: &Instance) -> Result<()> {
        if inst.w.len() != self.w_partition().total() || inst.v.len() != self.y_partition().total() {
            return Err(Error::Structure(format!(
                "instance has |w| = {}, |v| = {}; expected {} and {}",
                inst.w.len(),
                inst.v.len(),
                self.w_partition().total(),
                self.y_partition().total()
            )));
        }
        Ok(())
    }
}

/// `𝒯 = [[F Q L + G, F Q], [Q L, Q]]`, mapping `[w; v]` to `[s; u]`.
pub fn transfer_operator(lift: &LiftedSystem, q: &BlockMatrix) -> Result<DMatrix<f64>> {
    lift.check_youla(q)?;
    let (f, g, l, q) = (lift.f.data(), lift.g.data(), lift.l.data(), q.data());
    let (ns, nu) = (f.nrows(), f.ncols());
    let (nw, nv) = (l.ncols(), l.nrows());
    let fq = f * q;
    let ql = q * l;
    let mut t = DMatrix::zeros(ns + nu, nw + nv);
    t.view_mut((0, 0), (ns, nw)).copy_from(&(&fq * l + g));
    t.view_mut((0, nw), (ns, nv)).copy_from(&fq);
    t.view_mut((ns, 0), (nu, nw)).copy_from(&ql);
    t.view_mut((ns, nw), (nu, nv)).copy_from(q);
    Ok(t)
}

/// Cost `‖s‖² + ‖u‖²` of the controller with Youla parameter `q` on `inst`.
///
/// Valid for causal and noncausal `q` alike; the terminal cost enters
/// through the last block of `s`.
pub fn evaluate_cost(lift: &LiftedSystem, q: &BlockMatrix, inst: &Instance) -> Result<f64> {
    lift.check_youla(q)?;
    lift.check_instance(inst)?;
    let a = lift.l.data() * &inst.w + &inst.v;
    let u = q.data() * a;
    let s = lift.f.data() * &u + lift.g.data() * &inst.w;
    Ok(s.norm_squared() + u.norm_squared())
}

/// Clairvoyant full-information optimum `u* = −(I + FᵀF)⁻¹ FᵀG w` and its cost.
pub fn fullinfo_offline_oracle(lift: &LiftedSystem, w: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if w.len() != lift.w_partition().total() {
        return Err(Error::Structure(format!(
            "disturbance has length {}, expected {}",
            w.len(),
            lift.w_partition().total()
        )));
    }
    let f = lift.f.data();
    let gw = lift.g.data() * w;
    let rhs = -(f.transpose() * &gw);
    let d = chol_forward(&lift.gram_u)?;
    let u = spd_solve(&d, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?.column(0).into_owned();
    let s = f * &u + gw;
    let cost = s.norm_squared() + u.norm_squared();
    Ok((u, cost))
}

/// The orthogonal transforms θ and ψ built from symmetric square roots.
#[derive(Debug, Clone)]
pub struct ThetaPsi {
    pub theta: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    gram_u_root: DMatrix<f64>,
    gram_u_inv_root: DMatrix<f64>,
    gram_y_root: DMatrix<f64>,
    gram_y_inv_root: DMatrix<f64>,
    gram_s_inv_root: DMatrix<f64>,
    gram_w_inv_root: DMatrix<f64>,
}

impl ThetaPsi {
    pub fn new(lift: &LiftedSystem) -> Result<Self> {
        let f = lift.f.data();
        let l = lift.l.data();
        let (ns, nu) = f.shape();
        let (ny, nw) = l.shape();
        let gram_s_inv_root = symmetric_root(&lift.gram_s(), true)?;
        let gram_u_inv_root = symmetric_root(&lift.gram_u, true)?;
        let gram_w_inv_root = symmetric_root(&lift.gram_w, true)?;
        let gram_y_inv_root = symmetric_root(&lift.gram_y, true)?;

        // diag(S^{-1/2}, T^{-1/2}) [[I, -F], [Fᵀ, I]]
        let mut theta = DMatrix::zeros(ns + nu, ns + nu);
        theta.view_mut((0, 0), (ns, ns)).copy_from(&gram_s_inv_root);
        theta.view_mut((0, ns), (ns, nu)).copy_from(&(-(&gram_s_inv_root * f)));
        theta.view_mut((ns, 0), (nu, ns)).copy_from(&(&gram_u_inv_root * f.transpose()));
        theta.view_mut((ns, ns), (nu, nu)).copy_from(&gram_u_inv_root);

        // [[I, Lᵀ], [-L, I]] diag(V^{-1/2}, U^{-1/2})
        let mut psi = DMatrix::zeros(nw + ny, nw + ny);
        psi.view_mut((0, 0), (nw, nw)).copy_from(&gram_w_inv_root);
        psi.view_mut((0, nw), (nw, ny)).copy_from(&(l.transpose() * &gram_y_inv_root));
        psi.view_mut((nw, 0), (ny, nw)).copy_from(&(-(l * &gram_w_inv_root)));
        psi.view_mut((nw, nw), (ny, ny)).copy_from(&gram_y_inv_root);

        Ok(Self {
            theta,
            psi,
            gram_u_root: symmetric_root(&lift.gram_u, false)?,
            gram_u_inv_root,
            gram_y_root: symmetric_root(&lift.gram_y, false)?,
            gram_y_inv_root,
            gram_s_inv_root,
            gram_w_inv_root,
        })
    }

    /// `θ 𝒯 ψ` for Youla parameter `q`.
    pub fn transform(&self, lift: &LiftedSystem, q: &BlockMatrix) -> Result<DMatrix<f64>> {
        Ok(&self.theta * transfer_operator(lift, q)? * &self.psi)
    }

    /// Closed form of `θ 𝒯 ψ`: only the (2, 2) block involves `q`.
    pub fn closed_form(&self, lift: &LiftedSystem, q: &BlockMatrix) -> Result<DMatrix<f64>> {
        lift.check_youla(q)?;
        let f = lift.f.data();
        let g = lift.g.data();
        let l = lift.l.data();
        let (ns, nu) = f.shape();
        let (ny, nw) = l.shape();
        let ftg = f.transpose() * g;
        let mut out = DMatrix::zeros(ns + nu, nw + ny);
        out.view_mut((0, 0), (ns, nw))
            .copy_from(&(&self.gram_s_inv_root * g * &self.gram_w_inv_root));
        out.view_mut((0, nw), (ns, ny))
            .copy_from(&(&self.gram_s_inv_root * g * l.transpose() * &self.gram_y_inv_root));
        out.view_mut((ns, 0), (nu, nw))
            .copy_from(&(&self.gram_u_inv_root * &ftg * &self.gram_w_inv_root));
        out.view_mut((ns, nw), (nu, ny)).copy_from(
            &(&self.gram_u_root * q.data() * &self.gram_y_root
                + &self.gram_u_inv_root * &ftg * l.transpose() * &self.gram_y_inv_root),
        );
        Ok(out)
    }
}

/// Residuals of the θ/ψ simplification, relative to `max(1, ‖𝒯‖_F)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPsiReport {
    pub theta_orthogonality: f64,
    pub psi_orthogonality: f64,
    pub identity_residual: f64,
}

impl ThetaPsiReport {
    pub fn max_residual(&self) -> f64 {
        self.theta_orthogonality.max(self.psi_orthogonality).max(self.identity_residual)
    }
}

pub fn theta_psi_identity(lift: &LiftedSystem, q: &BlockMatrix) -> Result<ThetaPsiReport> {
    let tp = ThetaPsi::new(lift)?;
    let eye = |n: usize| DMatrix::<f64>::identity(n, n);
    let theta_orthogonality = (tp.theta.transpose() * &tp.theta - eye(tp.theta.nrows())).amax();
    let psi_orthogonality = (tp.psi.transpose() * &tp.psi - eye(tp.psi.nrows())).amax();
    let direct = tp.transform(lift, q)?;
    let closed = tp.closed_form(lift, q)?;
    let scale = frobenius(&transfer_operator(lift, q)?).max(1.0);
    Ok(ThetaPsiReport {
        theta_orthogonality,
        psi_orthogonality,
        identity_residual: (direct - closed).amax() / scale,
    })
}
