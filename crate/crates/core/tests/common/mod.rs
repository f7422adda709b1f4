//! Random problem generators and brute-force oracles shared by the
//! integration tests. Nothing here calls into the synthesis code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regretctl_core::benchmark::{Causality, Controller, Origin};
use regretctl_core::lifting::{lift_system, LiftedSystem, SystemInstance, SystemMatrices};
use regretctl_core::{BlockMatrix, Instance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub nw: usize,
    pub horizon: usize,
}

pub fn random_shape(rng: &mut impl Rng, max_dim: usize, min_t: usize, max_t: usize) -> Shape {
    Shape {
        n: rng.gen_range(1..=max_dim),
        m: rng.gen_range(1..=max_dim),
        p: rng.gen_range(1..=max_dim),
        nw: rng.gen_range(1..=max_dim),
        horizon: rng.gen_range(min_t..=max_t),
    }
}

/// PSD with random rank (possibly zero when `allow_zero`).
fn random_psd(rng: &mut impl Rng, n: usize, allow_zero: bool) -> DMatrix<f64> {
    let lo = if allow_zero { 0 } else { 1 };
    let rank = rng.gen_range(lo..=n);
    let x = uniform(rng, n, rank);
    &x * x.transpose()
}

/// Time-varying system with `‖A_t‖_F ≤ 1.2`, PSD state weights and
/// `R_t ⪰ 0.3 I`.
pub fn random_system(rng: &mut impl Rng, s: Shape) -> SystemInstance {
    let t = s.horizon;
    let mut a = Vec::new();
    let mut b_u = Vec::new();
    let mut b_w = Vec::new();
    let mut c = Vec::new();
    let mut control_cost = Vec::new();
    for _ in 0..t {
        let am = uniform(rng, s.n, s.n);
        let scale = 1.2 / am.norm().max(1e-3);
        a.push(am * scale.min(1.0));
        b_u.push(uniform(rng, s.n, s.m));
        b_w.push(uniform(rng, s.n, s.nw));
        c.push(uniform(rng, s.p, s.n));
        control_cost.push(random_psd(rng, s.m, true) + DMatrix::identity(s.m, s.m) * 0.3);
    }
    let state_cost = (1..t).map(|_| random_psd(rng, s.n, true)).collect();
    let terminal_cost = random_psd(rng, s.n, false);
    SystemInstance::new(SystemMatrices { a, b_u, b_w, c, state_cost, terminal_cost, control_cost }).unwrap()
}

pub fn random_lift(rng: &mut impl Rng, s: Shape) -> (SystemInstance, LiftedSystem) {
    let sys = random_system(rng, s);
    let lift = lift_system(&sys).unwrap();
    (sys, lift)
}

pub fn random_youla(rng: &mut impl Rng, lift: &LiftedSystem, causal: bool, scale: f64) -> BlockMatrix {
    let z = lift.zero_youla();
    let mut d = uniform(rng, z.data().nrows(), z.data().ncols()) * scale;
    if causal {
        let rows = z.rows().clone();
        let cols = z.cols().clone();
        for i in 0..rows.count() {
            for j in (i + 1)..cols.count() {
                let (r, c) = (rows.range(i), cols.range(j));
                d.view_mut((r.start, c.start), (r.len(), c.len())).fill(0.0);
            }
        }
    }
    z.with_data(d).unwrap()
}

pub fn random_controller(rng: &mut impl Rng, lift: &LiftedSystem, causal: bool, scale: f64) -> Controller {
    let q = random_youla(rng, lift, causal, scale);
    let kind = if causal { Causality::Causal } else { Causality::Noncausal };
    Controller::new(q, kind, Origin::Custom, "random").unwrap()
}

pub fn random_instance(rng: &mut impl Rng, lift: &LiftedSystem) -> Instance {
    let nw = lift.w_partition().total();
    let ny = lift.y_partition().total();
    Instance::new(uniform_vec(rng, nw), uniform_vec(rng, ny)).unwrap()
}

/// Step the physical recursion for normalized controls `ũ` (`u_t = S_t⁻¹ũ_t`).
/// Returns the stacked measurements and the quadratic cost.
pub fn open_loop(sys: &SystemInstance, u_norm: &DVector<f64>, w: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, f64) {
    let d = sys.dims();
    let t_max = sys.horizon();
    let mut x = DVector::zeros(d.state);
    let mut y = DVector::zeros(d.measurement * t_max);
    let mut cost = 0.0;
    for t in 0..t_max {
        let ut_norm = u_norm.rows(t * d.control, d.control).into_owned();
        let s = sys.control_root(t);
        let ut = s.clone().lu().solve(&ut_norm).unwrap();
        let wt = w.rows(t * d.disturbance, d.disturbance).into_owned();
        let vt = v.rows(t * d.measurement, d.measurement);
        y.rows_mut(t * d.measurement, d.measurement).copy_from(&(sys.c(t) * &x + vt));
        if t > 0 {
            cost += x.dot(&(sys.state_cost(t) * &x));
        }
        cost += ut.dot(&(sys.control_cost(t) * &ut));
        x = sys.a(t) * &x + sys.b_u(t) * &ut + sys.b_w(t) * &wt;
    }
    cost += x.dot(&(sys.state_cost(t_max) * &x));
    (y, cost)
}

/// Cost of a causal Youla parameter by stepping the loop `ũ = Q (y − J ũ)`
/// through `open_loop`-style recursion: `ũ_t = Σ_{k≤t} Q[t,k] ŷ_k`, where `ŷ`
/// is the measurement of the system driven by `w`, `v` and zero control
/// (`a = L w + v`).
pub fn youla_cost_by_steps(sys: &SystemInstance, q: &BlockMatrix, inst: &Instance) -> f64 {
    let zero = DVector::zeros(sys.dims().control * sys.horizon());
    let (a, _) = open_loop(sys, &zero, &inst.w, &inst.v);
    let u = q.data() * a;
    open_loop(sys, &u, &inst.w, &inst.v).1
}

/// `min ‖𝒯(Q)‖_F²` over `Q` supported on `mask`, by vectorized least squares.
///
/// `𝒯(Q) = [[F Q L + G, F Q], [Q L, Q]]` is affine in `vec(Q)`; each free
/// entry contributes one column of the design matrix.
pub fn frobenius_ls(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    l: &DMatrix<f64>,
    mask: &dyn Fn(usize, usize) -> bool,
) -> (DMatrix<f64>, f64) {
    let (ns, nu) = f.shape();
    let (ny, nw) = l.shape();
    let (rows, cols) = (ns + nu, nw + ny);
    let free: Vec<(usize, usize)> = (0..ny)
        .flat_map(|j| (0..nu).map(move |i| (i, j)))
        .filter(|&(i, j)| mask(i, j))
        .collect();
    let mut b = DMatrix::zeros(rows, cols);
    b.view_mut((0, 0), (ns, nw)).copy_from(g);
    let b = DVector::from_column_slice(b.as_slice());
    let mut a = DMatrix::zeros(rows * cols, free.len());
    for (k, &(i, j)) in free.iter().enumerate() {
        let mut e = DMatrix::zeros(rows, cols);
        let fi = f.column(i);
        let lj = l.row(j);
        e.view_mut((0, 0), (ns, nw)).copy_from(&(fi * lj));
        e.view_mut((0, nw + j), (ns, 1)).copy_from(&fi);
        e.view_mut((ns + i, 0), (1, nw)).copy_from(&lj);
        e[(ns + i, nw + j)] = 1.0;
        a.column_mut(k).copy_from_slice(e.as_slice());
    }
    let normal = a.transpose() * &a;
    let rhs = -(a.transpose() * &b);
    let x = normal.cholesky().expect("design matrix has full column rank").solve(&rhs);
    let value = (&a * &x + &b).norm_squared();
    let mut q = DMatrix::zeros(nu, ny);
    for (k, &(i, j)) in free.iter().enumerate() {
        q[(i, j)] = x[k];
    }
    (q, value)
}

/// `λ_max` by power iteration on `M + shift·I` (shift makes it PSD).
pub fn power_lambda_max(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let shift = m.abs().column_sum().amax();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    x.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let y = m * &x + &x * shift;
        lambda = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            break;
        }
        x = y / norm;
    }
    lambda - shift
}

fn top_sigma_sq(y: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(y.transpose() * y).eigenvalues.max()
}

/// Smoothed `σ_max²(W − X)` over lower-triangular `X` and its gradient:
/// `μ log Σ exp(λ_i/μ)` of the eigenvalues of `YᵀY`, `Y = W − X`.
fn smoothed(w: &DMatrix<f64>, free: &[(usize, usize)], x: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
    let mut y = w.clone();
    for (k, &(i, j)) in free.iter().enumerate() {
        y[(i, j)] -= x[k];
    }
    let eig = SymmetricEigen::new(y.transpose() * &y);
    let top = eig.eigenvalues.max();
    let weights = eig.eigenvalues.map(|l| ((l - top) / mu).exp());
    let z = weights.sum();
    let value = top + mu * z.ln();
    let mut gm = DMatrix::zeros(w.ncols(), w.ncols());
    for (k, wk) in weights.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        gm += (wk / z) * v * v.transpose();
    }
    let full = -2.0 * &y * gm;
    let grad = DVector::from_iterator(free.len(), free.iter().map(|&(i, j)| full[(i, j)]));
    (value, grad)
}

fn bfgs(
    w: &DMatrix<f64>,
    free: &[(usize, usize)],
    mut x: DVector<f64>,
    mu: f64,
    iters: usize,
) -> DVector<f64> {
    let n = x.len();
    let mut h = DMatrix::<f64>::identity(n, n);
    let (mut fx, mut gx) = smoothed(w, free, &x, mu);
    for _ in 0..iters {
        if gx.norm() < 1e-15 {
            break;
        }
        let mut dir = -(&h * &gx);
        if dir.dot(&gx) >= 0.0 {
            h = DMatrix::identity(n, n);
            dir = -gx.clone();
        }
        let mut step = 1.0;
        let slope = dir.dot(&gx);
        let (xn, fxn, gxn) = loop {
            let xn = &x + &dir * step;
            let (fxn, gxn) = smoothed(w, free, &xn, mu);
            if fxn <= fx + 1e-4 * step * slope || step < 1e-20 {
                break (xn, fxn, gxn);
            }
            step *= 0.5;
        };
        if fxn >= fx {
            break;
        }
        let s = &xn - &x;
        let yv = &gxn - &gx;
        let sy = s.dot(&yv);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * yv.transpose();
            let right = &eye - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        x = xn;
        fx = fxn;
        gx = gxn;
    }
    x
}

/// `min σ_max(W − X)` over lower-triangular `X` (scalar blocks) by
/// multi-restart BFGS on a smoothed objective with continuation.
pub fn nehari_brute_force(w: &DMatrix<f64>, restarts: usize, rng: &mut impl Rng) -> f64 {
    let t = w.nrows();
    let free: Vec<(usize, usize)> = (0..t).flat_map(|j| (j..t).map(move |i| (i, j))).collect();
    let scale = top_sigma_sq(w).max(1e-12);
    let mut best = f64::INFINITY;
    for r in 0..restarts {
        let mut x = if r == 0 {
            DVector::zeros(free.len())
        } else {
            uniform_vec(rng, free.len()) * scale.sqrt()
        };
        let mut mu = scale;
        while mu > scale * 1e-13 {
            x = bfgs(w, &free, x, mu, 200);
            mu *= 0.1;
        }
        let mut y = w.clone();
        for (k, &(i, j)) in free.iter().enumerate() {
            y[(i, j)] -= x[k];
        }
        best = best.min(top_sigma_sq(&y).max(0.0).sqrt());
    }
    best
}

pub fn random_problem(rng: &mut impl Rng, max_dim: usize, min_t: usize, max_t: usize) -> (SystemInstance, LiftedSystem) {
    let shape = random_shape(rng, max_dim, min_t, max_t);
    random_lift(rng, shape)
}
