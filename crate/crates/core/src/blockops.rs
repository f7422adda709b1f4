//! Block-partitioned dense matrices and the factorizations built on them.
//!
//! Blocks index time steps `t = 0..T-1`. A matrix is *causal* when every
//! block above the block diagonal is zero and *strictly anticausal* when
//! every block on or below it is zero. Triangular factors are computed on
//! the scalar level; a scalar lower-triangular matrix is block lower
//! triangular for every conforming partition, so factors are shared freely.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

const EIGEN_MAX_ITER: usize = 100_000;

/// Sizes of consecutive blocks along one matrix dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Structure("a partition needs at least one block".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Structure(format!("block {i} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `count` blocks of identical `size`.
    pub fn uniform(size: usize, count: usize) -> Result<Self> {
        Self::new(alloc::vec![size; count])
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Scalar index range of one block.
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    /// Scalar index range covering the contiguous blocks `blocks`.
    pub fn span(&self, blocks: Range<usize>) -> Range<usize> {
        self.offsets[blocks.start]..self.offsets[blocks.end]
    }
}

/// Dense matrix together with its row and column block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    rows: BlockPartition,
    cols: BlockPartition,
    data: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn new(rows: BlockPartition, cols: BlockPartition, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != rows.total() || data.ncols() != cols.total() {
            return Err(Error::Structure(format!(
                "data is {}x{} but partitions describe {}x{}",
                data.nrows(),
                data.ncols(),
                rows.total(),
                cols.total()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: BlockPartition, cols: BlockPartition) -> Self {
        let data = DMatrix::zeros(rows.total(), cols.total());
        Self { rows, cols, data }
    }

    /// Same partitions as `self`, new entries.
    pub fn with_data(&self, data: DMatrix<f64>) -> Result<Self> {
        Self::new(self.rows.clone(), self.cols.clone(), data)
    }

    pub fn rows(&self) -> &BlockPartition {
        &self.rows
    }

    pub fn cols(&self) -> &BlockPartition {
        &self.cols
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        let r = self.rows.range(i);
        let c = self.cols.range(j);
        self.data.view((r.start, c.start), (r.len(), c.len()))
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            data: self.data.transpose(),
        }
    }

    fn require_square_blocks(&self) -> Result<()> {
        if self.rows.count() != self.cols.count() {
            return Err(Error::Structure(format!(
                "causality needs equal block counts, got {} row blocks and {} column blocks",
                self.rows.count(),
                self.cols.count()
            )));
        }
        Ok(())
    }

    /// True when every strictly upper block is exactly zero.
    pub fn is_causal(&self) -> Result<bool> {
        self.require_square_blocks()?;
        let t = self.rows.count();
        for i in 0..t {
            for j in (i + 1)..t {
                if self.block(i, j).iter().any(|&x| x != 0.0) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// True when every block on or below the diagonal is exactly zero.
    pub fn is_strictly_anticausal(&self) -> Result<bool> {
        self.require_square_blocks()?;
        let t = self.rows.count();
        for i in 0..t {
            for j in 0..=i {
                if self.block(i, j).iter().any(|&x| x != 0.0) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// True when every block on or above the diagonal is exactly zero.
    pub fn is_strictly_causal(&self) -> Result<bool> {
        self.require_square_blocks()?;
        let t = self.rows.count();
        for i in 0..t {
            for j in i..t {
                if self.block(i, j).iter().any(|&x| x != 0.0) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// `causal + anticausal` reproduces the split matrix exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalSplit {
    pub causal: BlockMatrix,
    pub anticausal: BlockMatrix,
}

/// Split into the block lower triangle (diagonal included) and the strict
/// block upper triangle.
pub fn causal_split(m: &BlockMatrix) -> Result<CausalSplit> {
    m.require_square_blocks()?;
    let t = m.rows.count();
    let mut causal = m.data.clone();
    let mut anticausal = DMatrix::zeros(m.data.nrows(), m.data.ncols());
    for i in 0..t {
        let r = m.rows.range(i);
        // columns strictly right of block column i
        let c = m.cols.span((i + 1)..t);
        if c.is_empty() {
            continue;
        }
        anticausal
            .view_mut((r.start, c.start), (r.len(), c.len()))
            .copy_from(&m.data.view((r.start, c.start), (r.len(), c.len())));
        causal.view_mut((r.start, c.start), (r.len(), c.len())).fill(0.0);
    }
    Ok(CausalSplit {
        causal: m.with_data(causal)?,
        anticausal: m.with_data(anticausal)?,
    })
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} contains non-finite entries")))
    }
}

fn ensure_symmetric(m: &DMatrix<f64>, rel_tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Structure(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = frobenius(m);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if libm::fabs(m[(i, j)] - m[(j, i)]) > rel_tol * scale {
                return Err(Error::Input(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Lower-triangular `D` with positive diagonal and `D Dᵀ = M`.
pub fn chol_forward(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(m, "matrix")?;
    ensure_symmetric(m, 1e-12, "matrix")?;
    let n = m.nrows();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= d[(j, k)] * d[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let djj = libm::sqrt(pivot);
        d[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= d[(i, k)] * d[(j, k)];
            }
            d[(i, j)] = s / djj;
        }
    }
    Ok(d)
}

fn reverse_both(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(r, c, |i, j| m[(r - 1 - i, c - 1 - j)])
}

/// Lower-triangular `E` with positive diagonal and `Eᵀ E = M`.
///
/// Obtained by factoring the order-reversed matrix forward and undoing the
/// reversal; this is the unique such factor.
pub fn chol_reverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let reversed = reverse_both(m);
    let d = chol_forward(&reversed).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::NotPositiveDefinite {
            pivot: n - 1 - pivot,
            value,
        },
        other => other,
    })?;
    Ok(reverse_both(&d.transpose()))
}

/// `L⁻¹ B` for lower-triangular `L`.
pub fn lower_solve_left(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

/// `L⁻ᵀ B` for lower-triangular `L`.
pub fn lower_transpose_solve_left(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.tr_solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

/// `B L⁻¹` for lower-triangular `L`.
pub fn lower_solve_right(b: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // X L = B  <=>  Lᵀ Xᵀ = Bᵀ
    Ok(lower_transpose_solve_left(l, &b.transpose())?.transpose())
}

/// `B L⁻ᵀ` for lower-triangular `L`.
pub fn lower_transpose_solve_right(b: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(lower_solve_left(l, &b.transpose())?.transpose())
}

/// `M⁻¹ B` for symmetric positive-definite `M` with forward factor `D`.
pub fn spd_solve(d: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lower_transpose_solve_left(d, &lower_solve_left(d, b)?)
}

/// Outcome of a one-block norm completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Completed(DMatrix<f64>),
    /// One of the fixed borders already exceeds the level.
    Infeasible { row_norm: f64, col_norm: f64 },
}

/// Relative tolerance on feasibility tests: a level `γ` is infeasible only
/// when `γ < norm·(1 − FEASIBILITY_MARGIN)`.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

/// True when `gamma` is infeasible against a lower-bounding `norm`.
pub fn below_level(gamma: f64, norm: f64) -> bool {
    gamma < norm * (1.0 - FEASIBILITY_MARGIN)
}

/// Central completion of `[[A, B], [C, X]]` to spectral norm at most `gamma`.
///
/// Infeasible iff `gamma` falls below `‖[A B]‖` or `‖[A; C]‖` (see
/// [`below_level`]). Other corner positions reduce to this one by
/// transposing or permuting block rows and columns.
pub fn parrott_complete(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    gamma: f64,
) -> Result<Completion> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Input(format!("level must be positive, got {gamma}")));
    }
    if a.nrows() != b.nrows() || a.ncols() != c.ncols() {
        return Err(Error::Structure(format!(
            "incompatible corner shapes A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    for (m, what) in [(a, "A"), (b, "B"), (c, "C")] {
        ensure_finite(m, what)?;
    }
    let row_norm = spectral_norm(&hstack(a, b))?;
    let col_norm = spectral_norm(&vstack(a, c))?;
    if below_level(gamma, row_norm) || below_level(gamma, col_norm) {
        return Ok(Completion::Infeasible { row_norm, col_norm });
    }
    parrott_central(a, b, c, gamma).map(Completion::Completed)
}

/// `X = −C (γ²I − AᵀA)⁻¹ Aᵀ B`, evaluated through the smaller Gram matrix.
/// Assumes `‖A‖ < γ`; border norms are not checked.
pub(crate) fn parrott_central(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 || b.ncols() == 0 || c.nrows() == 0 {
        return Ok(DMatrix::zeros(c.nrows(), b.ncols()));
    }
    let g2 = gamma * gamma;
    let fail = |e: Error| match e {
        Error::NotPositiveDefinite { .. } => Error::Numerical(format!(
            "γ²I − AᵀA is numerically singular at level {gamma:e}; retry with a larger margin above the optimal level"
        )),
        other => other,
    };
    if q <= p {
        let mut gram = -(a.transpose() * a);
        for i in 0..q {
            gram[(i, i)] += g2;
        }
        symmetrize(&mut gram);
        let d = chol_forward(&gram).map_err(fail)?;
        let z = spd_solve(&d, &(a.transpose() * b))?;
        Ok(-(c * z))
    } else {
        let mut gram = -(a * a.transpose());
        for i in 0..p {
            gram[(i, i)] += g2;
        }
        symmetrize(&mut gram);
        let d = chol_forward(&gram).map_err(fail)?;
        let z = spd_solve(&d, b)?;
        Ok(-((c * a.transpose()) * z))
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub(crate) fn vstack(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + c.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), c.nrows()).copy_from(c);
    out
}

fn sym_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let mut gram = if c <= r { m.transpose() * m } else { m * m.transpose() };
    symmetrize(&mut gram);
    let vals = sym_eigen(gram)?.eigenvalues;
    let top = vals.iter().copied().fold(0.0_f64, f64::max);
    Ok(libm::sqrt(top))
}

/// Which extremal quantities [`spectral_extremes`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMode {
    /// Extreme eigenvalues of the symmetric part, with eigenvectors.
    SymmetricEig,
    /// Extreme singular values, with right singular vectors.
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub min_vector: DVector<f64>,
    pub max_vector: DVector<f64>,
}

/// Flip the sign so the largest-magnitude entry is positive.
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 0..v.len() {
        if libm::fabs(v[i]) > libm::fabs(v[best]) {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

pub fn spectral_extremes(m: &DMatrix<f64>, mode: SpectralMode) -> Result<Extremes> {
    ensure_finite(m, "matrix")?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Err(Error::Structure("spectral extremes of an empty matrix".into()));
    }
    match mode {
        SpectralMode::SymmetricEig => {
            ensure_symmetric(m, 1e-10, "matrix")?;
            let mut sym = m.clone();
            symmetrize(&mut sym);
            let eig = sym_eigen(sym)?;
            let (imin, imax) = arg_extremes(eig.eigenvalues.as_slice());
            Ok(Extremes {
                min: eig.eigenvalues[imin],
                max: eig.eigenvalues[imax],
                min_vector: canonical_sign(eig.eigenvectors.column(imin).into_owned()),
                max_vector: canonical_sign(eig.eigenvectors.column(imax).into_owned()),
            })
        }
        SpectralMode::Singular => {
            let svd = SVD::try_new(m.clone(), false, true, f64::EPSILON, EIGEN_MAX_ITER)
                .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
            let v_t = svd
                .v_t
                .ok_or_else(|| Error::Numerical("SVD returned no singular vectors".into()))?;
            let (imin, imax) = arg_extremes(svd.singular_values.as_slice());
            // a wide matrix has a nontrivial null space: σ_min = 0
            let (min, min_vector) = if c > r {
                let basis = null_vector(&v_t);
                (0.0, basis)
            } else {
                (svd.singular_values[imin], v_t.row(imin).transpose())
            };
            Ok(Extremes {
                min,
                max: svd.singular_values[imax],
                min_vector: canonical_sign(min_vector),
                max_vector: canonical_sign(v_t.row(imax).transpose()),
            })
        }
    }
}

/// Unit vector orthogonal to every row of `v_t` (requires fewer rows than columns).
fn null_vector(v_t: &DMatrix<f64>) -> DVector<f64> {
    let n = v_t.ncols();
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let proj = v_t.transpose() * (v_t * &e);
        let r = e - proj;
        let nr = r.norm();
        if nr > 1e-6 {
            return r / nr;
        }
    }
    DVector::zeros(n)
}

fn arg_extremes(vals: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v < vals[imin] {
            imin = i;
        }
        if v > vals[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Symmetric PSD square root (or its inverse) via eigen-decomposition.
///
/// Eigenvalues below `1e-14·λ_max` are clamped to zero for the root; the
/// inverse root requires a positive-definite input.
pub fn symmetric_root(m: &DMatrix<f64>, inverse: bool) -> Result<DMatrix<f64>> {
    ensure_symmetric(m, 1e-10, "matrix")?;
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym_eigen(sym)?;
    let top = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let mut scaled = eig.eigenvectors.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let factor = if inverse {
            if !(lam > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: k, value: lam });
            }
            1.0 / libm::sqrt(lam)
        } else if lam <= 1e-14 * top {
            0.0
        } else {
            libm::sqrt(lam)
        };
        scaled.column_mut(k).scale_mut(factor);
    }
    let mut root = &scaled * eig.eigenvectors.transpose();
    symmetrize(&mut root);
    Ok(root)
}
