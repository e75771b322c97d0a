//! Small dense complex linear algebra for the verification suite.
//!
//! Storage and products come from `nalgebra`; the Hermitian eigensolver is a
//! cyclic complex Jacobi iteration, which is accurate for the tiny, often
//! rank-deficient PSD matrices used here. Everything else (square roots,
//! trace and sup norms, fidelity, purification) is built on it. States may
//! carry a trace other than 1: the Choi states below have trace `d`.

use crate::entropy::Probability;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hermiticity tolerance, relative to `max(1, max |h_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_TOL` are accepted as round-off and clipped to 0.
pub const PSD_TOL: f64 = 1e-10;
/// Column orthonormality tolerance for isometries.
pub const ISOMETRY_TOL: f64 = 1e-10;
/// Eigenvalues below `RANK_FLOOR * λ_max` are treated as exact zeros when
/// taking square roots.
pub const RANK_FLOOR: f64 = 1e-13;

const JACOBI_MAX_SWEEPS: usize = 80;

pub const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

const ZERO: Complex64 = c(0.0, 0.0);
const ONE: Complex64 = c(1.0, 0.0);

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
}

/// Controlled-NOT on `n_qubits` qubits (qubit 0 is the most significant bit).
pub fn cnot(n_qubits: usize, control: usize, target: usize) -> CMatrix {
    let dim = 1usize << n_qubits;
    let cbit = 1usize << (n_qubits - 1 - control);
    let tbit = 1usize << (n_qubits - 1 - target);
    let mut m = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let row = if col & cbit != 0 { col ^ tbit } else { col };
        m[(row, col)] = ONE;
    }
    m
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Kronecker product with an overflow guard on the dimensions.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(cc)) if r.checked_mul(cc).is_some() => Ok(a.kronecker(b)),
        _ => Err(Error::Dimension(format!(
            "kron of {}x{} and {}x{} overflows",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        ))),
    }
}

/// Kronecker product of a list of matrices, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> Result<CMatrix> {
    let mut acc = CMatrix::identity(1, 1);
    for f in factors {
        acc = kron(&acc, f)?;
    }
    Ok(acc)
}

/// A state vector. Unnormalized kets are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    pub amplitudes: CVector,
}

impl Ket {
    pub fn new(amplitudes: CVector) -> Self {
        Ket { amplitudes }
    }

    pub fn from_slice(amps: &[Complex64]) -> Self {
        Ket::new(CVector::from_column_slice(amps))
    }

    /// Computational basis vector `|index⟩` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Ket::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn kron(&self, other: &Ket) -> Result<Ket> {
        if self.dim().checked_mul(other.dim()).is_none() {
            return Err(Error::Dimension("ket dimension overflows".into()));
        }
        Ok(Ket::new(self.amplitudes.kronecker(&other.amplitudes)))
    }

    pub fn apply(&self, op: &CMatrix) -> Result<Ket> {
        if op.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator with {} columns applied to ket of dimension {}",
                op.ncols(),
                self.dim()
            )));
        }
        Ok(Ket::new(op * &self.amplitudes))
    }

    /// `|self⟩⟨self|`; its trace is the squared norm.
    pub fn projector(&self) -> DensityOp {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityOp::trusted(m)
    }
}

/// The four Bell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bell {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

pub fn bell(which: Bell) -> Ket {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b, cc, d) = match which {
        Bell::PhiPlus => (h, 0.0, 0.0, h),
        Bell::PhiMinus => (h, 0.0, 0.0, -h),
        Bell::PsiPlus => (0.0, h, h, 0.0),
        Bell::PsiMinus => (0.0, h, -h, 0.0),
    };
    Ket::from_slice(&[c(a, 0.0), c(b, 0.0), c(cc, 0.0), c(d, 0.0)])
}

/// A Hermitian positive semidefinite operator. The trace is whatever the
/// construction gave it and is exposed as [`DensityOp::trace_scale`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    matrix: CMatrix,
    trace_scale: f64,
}

impl DensityOp {
    /// Validate Hermiticity and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "density operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let eig = hermitian_eig(&matrix)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self::trusted(matrix))
    }

    /// Wrap a matrix that is PSD by construction (e.g. `A A†`), only
    /// symmetrizing away round-off.
    pub(crate) fn trusted(matrix: CMatrix) -> Self {
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        let trace_scale = matrix.trace().re;
        DensityOp {
            matrix,
            trace_scale,
        }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::trusted(identity(d).scale(1.0 / d as f64))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace_scale(&self) -> f64 {
        self.trace_scale
    }

    /// Copy rescaled to unit trace.
    pub fn normalized(&self) -> DensityOp {
        Self::trusted(self.matrix.unscale(self.trace_scale))
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, ket: &Ket) -> f64 {
        ket.amplitudes.dotc(&(&self.matrix * &ket.amplitudes)).re
    }

    /// Conjugation `U ρ U†`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<DensityOp> {
        if u.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "conjugating a dimension-{} state by a {}x{} operator",
                self.dim(),
                u.nrows(),
                u.ncols()
            )));
        }
        Ok(Self::trusted(u * &self.matrix * u.adjoint()))
    }

    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<DensityOp> {
        partial_trace_matrix(&self.matrix, dims, keep).map(Self::trusted)
    }
}

/// Trace out every subsystem not listed in `keep`.
///
/// `dims` lists the subsystem dimensions with the first one most significant.
/// The kept subsystems appear in the output in their original order.
pub fn partial_trace(rho: &DensityOp, dims: &[usize], keep: &[usize]) -> Result<DensityOp> {
    rho.partial_trace(dims, keep)
}

pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.nrows() != total {
        return Err(Error::Dimension(format!(
            "subsystem dimensions {dims:?} do not multiply to {}",
            m.nrows()
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Dimension(format!("keep set {keep:?} out of range")));
    }
    let mut keep_mask = vec![false; dims.len()];
    for &k in keep {
        keep_mask[k] = true;
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|&i| keep_mask[i]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|&i| !keep_mask[i]).collect();
    let dk: usize = kept.iter().map(|&i| dims[i]).product();
    let dt: usize = traced.iter().map(|&i| dims[i]).product();

    // Row-major strides of the full index.
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |subsystems: &[usize], count: usize| -> Vec<usize> {
        (0..count)
            .map(|mut idx| {
                let mut off = 0;
                for &s in subsystems.iter().rev() {
                    off += (idx % dims[s]) * strides[s];
                    idx /= dims[s];
                }
                off
            })
            .collect()
    };
    let kept_off = offsets(&kept, dk);
    let traced_off = offsets(&traced, dt);

    let mut out = CMatrix::zeros(dk, dk);
    for (a, &ka) in kept_off.iter().enumerate() {
        for (b, &kb) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += m[(ka + t, kb + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation first removes the phase of the pivot `a_pq` and then applies
/// the real symmetric Jacobi rotation. Sweeps stop when the off-diagonal
/// Frobenius norm falls below `1e-13` (relative to the full norm once that
/// exceeds 1).
pub fn hermitian_eig(h: &CMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = max_abs(h).max(1.0);
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(dev));
    }

    let n = h.nrows();
    let mut a = (h + h.adjoint()).scale(0.5);
    let mut v = identity(n);
    let fro = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = 1e-13 * fro.max(1.0);
    let off_norm = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    let mut last = off_norm(&a);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if last <= target * 1e-2 || last == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                let ph_conj = phase.conj();
                // G = [[c, s], [-s e^{-iφ}, c e^{-iφ}]] acting on columns p, q.
                let g_pp = c(cs, 0.0);
                let g_pq = c(sn, 0.0);
                let g_qp = ph_conj * (-sn);
                let g_qq = ph_conj * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
        last = off_norm(&a);
    }
    if !converged && last > target {
        return Err(Error::NoConvergence {
            iterations: JACOBI_MAX_SWEEPS,
            last_change: last,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| v[(r, order[col])]);
    Ok(HermitianEigen { values, vectors })
}

/// Singular values via the Hermitian dilation `[[0, M], [M†, 0]]`, whose
/// eigenvalues are `±σ_i` (padded with zeros).
fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let (r, cc) = m.shape();
    let mut dil = CMatrix::zeros(r + cc, r + cc);
    dil.view_mut((0, r), (r, cc)).copy_from(m);
    dil.view_mut((r, 0), (cc, r)).copy_from(&m.adjoint());
    let eig = hermitian_eig(&dil)?;
    let k = r.min(cc);
    Ok(eig.values.iter().take(k).map(|&x| x.max(0.0)).collect())
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if m.is_square() && hermitian_deviation(m) <= HERMITIAN_TOL * max_abs(m).max(1.0) {
        let eig = hermitian_eig(m)?;
        return Ok(eig.values.iter().map(|x| x.abs()).sum());
    }
    Ok(singular_values(m)?.iter().sum())
}

/// Largest singular value.
pub fn sup_norm(m: &CMatrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    if m.is_square() && hermitian_deviation(m) <= HERMITIAN_TOL * max_abs(m).max(1.0) {
        let eig = hermitian_eig(m)?;
        return Ok(eig.values.iter().fold(0.0, |acc, x| acc.max(x.abs())));
    }
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

fn clipped(values: &[f64]) -> Vec<f64> {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = RANK_FLOOR * top;
    values
        .iter()
        .map(|&x| if x <= floor { 0.0 } else { x })
        .collect()
}

/// Principal square root of a PSD operator.
pub fn sqrt_psd(rho: &DensityOp) -> Result<CMatrix> {
    let eig = hermitian_eig(rho.matrix())?;
    let vals = clipped(&eig.values);
    let root = HermitianEigen {
        values: vals,
        vectors: eig.vectors,
    };
    Ok(root.map(f64::sqrt))
}

/// Root fidelity `‖√ρ0 √ρ1‖_tr`. For trace-`d` inputs the result scales by `d`.
pub fn fidelity_root(rho0: &DensityOp, rho1: &DensityOp) -> Result<f64> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::Dimension(format!(
            "fidelity between dimensions {} and {}",
            rho0.dim(),
            rho1.dim()
        )));
    }
    let m = sqrt_psd(rho0)? * sqrt_psd(rho1)?;
    trace_norm(&m)
}

/// Purification as a `d × env_dim` matrix `A` with `A A† = ρ`.
fn purification_matrix(rho: &DensityOp, env_dim: usize) -> Result<CMatrix> {
    let eig = hermitian_eig(rho.matrix())?;
    let vals = clipped(&eig.values);
    let rank = vals.iter().filter(|&&x| x > 0.0).count();
    if env_dim < rank {
        return Err(Error::EnvironmentTooSmall { env_dim, rank });
    }
    let d = rho.dim();
    let mut a = CMatrix::zeros(d, env_dim);
    for (e, &lam) in vals.iter().enumerate().take(rank) {
        let s = lam.sqrt();
        for i in 0..d {
            a[(i, e)] = eig.vectors[(i, e)] * s;
        }
    }
    Ok(a)
}

/// Flatten `A` (system × environment) into a ket on `S ⊗ E`.
fn ket_from_matrix(a: &CMatrix) -> Ket {
    let (d, m) = a.shape();
    Ket::new(CVector::from_fn(d * m, |k, _| a[(k / m, k % m)]))
}

/// A pure state on `S ⊗ E` whose reduced state on `S` is `rho`.
/// Its squared norm equals the trace of `rho`.
pub fn purify(rho: &DensityOp, env_dim: usize) -> Result<Ket> {
    purification_matrix(rho, env_dim).map(|a| ket_from_matrix(&a))
}

/// Purifications of `rho0` and `rho1` on `S ⊗ E` with maximal real overlap.
///
/// The environment of the first purification is rotated by the polar factor
/// of the cross-overlap matrix `A1† A0`, which makes `⟨ket1|ket0⟩` real and
/// equal to its trace norm, i.e. the root fidelity.
pub fn uhlmann_pair(rho0: &DensityOp, rho1: &DensityOp, env_dim: usize) -> Result<(Ket, Ket)> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::Dimension("purified states differ in dimension".into()));
    }
    let (t0, t1) = (rho0.trace_scale(), rho1.trace_scale());
    if (t0 - t1).abs() > 1e-10 * t0.abs().max(t1.abs()).max(1.0) {
        return Err(Error::Dimension(format!(
            "trace normalizations differ: {t0} vs {t1}"
        )));
    }
    let a0 = purification_matrix(rho0, env_dim)?;
    let a1 = purification_matrix(rho1, env_dim)?;
    let cross = a1.adjoint() * &a0;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let w = v_t.adjoint() * u.adjoint();
    Ok((ket_from_matrix(&(a0 * w)), ket_from_matrix(&a1)))
}

/// An isometric embedding of a `d_in`-dimensional system into `T ⊗ E`.
/// Rows are indexed `t * env_dim + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: CMatrix,
    env_dim: usize,
}

impl Isometry {
    pub fn new(matrix: CMatrix, env_dim: usize) -> Result<Self> {
        if env_dim == 0 || matrix.nrows() % env_dim != 0 {
            return Err(Error::Dimension(format!(
                "{} output rows do not split over an environment of dimension {env_dim}",
                matrix.nrows()
            )));
        }
        if matrix.nrows() < matrix.ncols() {
            return Err(Error::NotIsometry(f64::INFINITY));
        }
        let gram = matrix.adjoint() * &matrix;
        let dev = max_abs_diff(&gram, &identity(matrix.ncols()));
        if dev > ISOMETRY_TOL {
            return Err(Error::NotIsometry(dev));
        }
        Ok(Isometry { matrix, env_dim })
    }

    /// Isometry with no environment.
    pub fn plain(matrix: CMatrix) -> Result<Self> {
        Self::new(matrix, 1)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn d_in(&self) -> usize {
        self.matrix.ncols()
    }

    /// Dimension of the output system `T`, excluding the environment.
    pub fn d_out(&self) -> usize {
        self.matrix.nrows() / self.env_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// The channel `ρ ↦ tr_E(U ρ U†)`.
    pub fn apply_channel(&self, rho: &DensityOp) -> Result<DensityOp> {
        rho.conjugate(&self.matrix)?
            .partial_trace(&[self.d_out(), self.env_dim], &[0])
    }
}

/// `(I ⊗ U)|Φ̃⟩⟨Φ̃|(I ⊗ U)†` with the environment traced out, where
/// `|Φ̃⟩ = Σ_i |i⟩|i⟩` has squared norm `d_in`. The result lives on `R ⊗ T`
/// and has trace `d_in`.
pub fn choi_of_isometry(u: &Isometry) -> DensityOp {
    let (d, t, e) = (u.d_in(), u.d_out(), u.env_dim());
    let psi = CMatrix::from_fn(d * t, e, |row, env| {
        let (i, tt) = (row / t, row % t);
        u.matrix[(tt * e + env, i)]
    });
    DensityOp::trusted(&psi * psi.adjoint())
}

/// Read a dilation off a purification `|Φ̃'⟩` of a Choi state on
/// `R ⊗ T ⊗ E`: `U|j⟩ = (⟨j|_R ⊗ I)|Φ̃'⟩`.
pub fn dilation_from_purification(
    purification: &Ket,
    d_in: usize,
    d_out: usize,
    env_dim: usize,
) -> Result<Isometry> {
    if purification.dim() != d_in * d_out * env_dim {
        return Err(Error::Dimension(format!(
            "purification of dimension {} does not split as {d_in}x{d_out}x{env_dim}",
            purification.dim()
        )));
    }
    let block = d_out * env_dim;
    let m = CMatrix::from_fn(block, d_in, |row, j| purification.amplitudes[j * block + row]);
    Isometry::new(m, env_dim)
}

/// A channel given by Kraus operators, checked for trace preservation.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    kraus: Vec<CMatrix>,
}

impl Channel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::Dimension("channel needs at least one Kraus operator".into()))?;
        let (dout, din) = first.shape();
        if kraus.iter().any(|k| k.shape() != (dout, din)) {
            return Err(Error::Dimension("Kraus operators differ in shape".into()));
        }
        let sum = kraus
            .iter()
            .fold(CMatrix::zeros(din, din), |acc, k| acc + k.adjoint() * k);
        let dev = max_abs_diff(&sum, &identity(din));
        if dev > 1e-10 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(Channel { kraus })
    }

    pub fn identity(d: usize) -> Self {
        Channel {
            kraus: vec![identity(d)],
        }
    }

    /// Qubit depolarizing-type channel: each of X, Y, Z with probability `q/3`.
    pub fn depolarizing(q: f64) -> Result<Self> {
        Probability::named("q", q)?;
        let k0 = identity(2).scale((1.0 - q).sqrt());
        let s = (q / 3.0).sqrt();
        Channel::new(vec![
            k0,
            pauli_x().scale(s),
            pauli_y().scale(s),
            pauli_z().scale(s),
        ])
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn d_in(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn apply(&self, rho: &DensityOp) -> Result<DensityOp> {
        if rho.dim() != self.d_in() {
            return Err(Error::Dimension("channel input dimension mismatch".into()));
        }
        let m = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(self.d_out(), self.d_out()), |acc, k| {
                acc + k * rho.matrix() * k.adjoint()
            });
        Ok(DensityOp::trusted(m))
    }

    /// Unnormalized Choi state `I ⊗ E(|Φ̃⟩⟨Φ̃|)` on `R ⊗ T`, trace `d_in`.
    pub fn choi(&self) -> DensityOp {
        let (d, t) = (self.d_in(), self.d_out());
        let mut m = CMatrix::zeros(d * t, d * t);
        for k in &self.kraus {
            for i in 0..d {
                for j in 0..d {
                    for tt in 0..t {
                        for u in 0..t {
                            m[(i * t + tt, j * t + u)] += k[(tt, i)] * k[(u, j)].conj();
                        }
                    }
                }
            }
        }
        DensityOp::trusted(m)
    }

    /// Stinespring isometry `Σ_k K_k ⊗ |k⟩_E`.
    pub fn stinespring(&self) -> Isometry {
        let r = self.kraus.len();
        let (t, d) = (self.d_out(), self.d_in());
        let m = CMatrix::from_fn(t * r, d, |row, i| self.kraus[row % r][(row / r, i)]);
        Isometry {
            matrix: m,
            env_dim: r,
        }
    }
}

/// Probability of `X = −1` on a coin in `(|Ψ0⟩|0⟩ + |Ψ1⟩|1⟩)/√2`:
/// `¼‖Ψ0 − Ψ1‖² = ½(1 − Re⟨Ψ1|Ψ0⟩)`. Both forms are evaluated and must agree.
pub fn coin_x_minus_prob(ket0: &Ket, ket1: &Ket) -> Result<Probability> {
    if ket0.dim() != ket1.dim() {
        return Err(Error::Dimension("coin branches differ in dimension".into()));
    }
    for k in [ket0, ket1] {
        let n = k.norm_sqr();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(n));
        }
    }
    let diff: f64 = ket0
        .amplitudes
        .iter()
        .zip(ket1.amplitudes.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let by_norm = 0.25 * diff;
    let by_overlap = 0.5 * (1.0 - ket1.inner(ket0).re);
    if (by_norm - by_overlap).abs() > 1e-12 {
        return Err(Error::NotNormalized(ket0.norm_sqr()));
    }
    Ok(Probability::saturating(by_norm))
}

/// Seeded random states, unitaries and channels for the verification suite.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im).scale(std::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
    }

    /// Haar-random unitary from the QR decomposition of a Ginibre matrix.
    pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
        let qr = ginibre(d, d, rng).qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..d {
            let rjj = r[(j, j)];
            let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
            for i in 0..d {
                q[(i, j)] *= ph;
            }
        }
        q
    }

    /// First `d_in` columns of a Haar unitary on `d_out`.
    pub fn isometry_matrix<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> CMatrix {
        unitary(d_out, rng).columns(0, d_in).into_owned()
    }

    pub fn ket<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Ket {
        let v = CVector::from_fn(d, |_, _| gaussian(rng));
        let n = v.norm();
        Ket::new(v.unscale(n))
    }

    /// Unit-trace density operator of the given rank.
    pub fn density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityOp {
        let g = ginibre(d, rank, rng);
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        DensityOp::trusted(m.unscale(tr))
    }

    /// Random Hermitian matrix with Gaussian entries.
    pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
        let g = ginibre(d, d, rng);
        (&g + g.adjoint()).scale(0.5)
    }

    /// Random channel with `n_kraus` Kraus operators, cut from a random isometry.
    pub fn channel<R: Rng + ?Sized>(d_in: usize, d_out: usize, n_kraus: usize, rng: &mut R) -> Channel {
        let v = isometry_matrix(d_in, d_out * n_kraus, rng);
        let kraus = (0..n_kraus)
            .map(|k| CMatrix::from_fn(d_out, d_in, |t, i| v[(t * n_kraus + k, i)]))
            .collect();
        Channel::new(kraus).expect("cut from an isometry")
    }

    /// `exp(i·strength·G)` for a random Hermitian `G` of unit sup norm.
    pub fn near_identity<R: Rng + ?Sized>(d: usize, strength: f64, rng: &mut R) -> CMatrix {
        let g = hermitian(d, rng);
        let eig = hermitian_eig(&g).expect("random Hermitian");
        let top = eig.values.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
        let n = eig.values.len();
        let mut scaled = eig.vectors.clone();
        for j in 0..n {
            let ph = Complex64::from_polar(1.0, strength * eig.values[j] / top);
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * eig.vectors.adjoint()
    }
}
