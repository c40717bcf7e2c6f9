//! Dense linear algebra used throughout the solvers.
//!
//! Real symmetric matrices carry the density matrices, multipliers and
//! Hamiltonian terms; complex Hermitian matrices only appear as Fourier
//! blocks of the translation-invariant dual variable.
//!
//! Composite indices of a bipartite space `Q1 ⊗ Q2` are row-major:
//! `(p, s) ↦ p * m2 + s`. Partial traces, embeddings and Kronecker products
//! all share this convention.

mod dft;
mod eigen;

pub use dft::{block_dft_forward, block_dft_inverse, lattice_points};
pub use eigen::{eigen_backend, reference_eigen, EigenScalar};

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type SymMatrix = DMatrix<f64>;
pub type HermMatrix = DMatrix<Complex64>;

/// Relative asymmetry accepted before an eigendecomposition.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Tensor structure of a matrix acting on `C^m1 ⊗ C^m2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BipartiteShape {
    pub m1: usize,
    pub m2: usize,
}

impl BipartiteShape {
    pub fn new(m1: usize, m2: usize) -> Self {
        Self { m1, m2 }
    }

    pub fn square(m: usize) -> Self {
        Self { m1: m, m2: m }
    }

    pub fn dim(&self) -> usize {
        self.m1 * self.m2
    }

    fn check(&self, r: &SymMatrix) -> Result<()> {
        if !r.is_square() || r.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, shape {}x{} needs dimension {}",
                r.nrows(),
                r.ncols(),
                self.m1,
                self.m2,
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Largest entry modulus.
pub fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermitian symmetry, `max |a_pq - conj(a_qp)|`.
pub fn asymmetry<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for q in 0..n {
        for p in q..n {
            let d = (a[(p, q)].clone() - a[(q, p)].clone().conjugate()).modulus();
            worst = worst.max(d);
        }
    }
    worst
}

/// `(a + a†) / 2`.
pub fn hermitian_part<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.adjoint()) * T::from_real(0.5)
}

fn validate_hermitian<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.clone().is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * max_abs(a) {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric: asymmetry {asym:e}"
        )));
    }
    Ok(())
}

/// Eigendecomposition of the Hermitian part of `a`.
pub fn hermitian_eigen<T: EigenScalar>(a: &DMatrix<T>) -> Result<SymmetricEigen<T, nalgebra::Dyn>> {
    validate_hermitian(a)?;
    let dim = a.nrows();
    T::backend_eigen(hermitian_part(a)).ok_or(Error::Numerical { dim })
}

/// Frobenius-norm projection onto the positive semidefinite cone.
///
/// Negative eigenvalues of the (symmetrized) argument are clamped to zero.
/// Works for real symmetric and complex Hermitian input alike.
pub fn psd_project<T: EigenScalar>(s: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = hermitian_eigen(s)?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(hermitian_part(s));
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&k| eig.eigenvalues[k] > 0.0)
        .collect();
    let n = s.nrows();
    if keep.is_empty() {
        return Ok(DMatrix::zeros(n, n));
    }
    // V_+ diag(sqrt λ_+) times its adjoint.
    let mut w = DMatrix::<T>::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let scale = T::from_real(eig.eigenvalues[k].sqrt());
        w.set_column(c, &(eig.eigenvectors.column(k) * scale));
    }
    let out = T::gram(&w);
    Ok(hermitian_part(&out))
}

/// Smallest eigenvalue of the Hermitian part of `a`.
pub fn min_eigenvalue<T: EigenScalar>(a: &DMatrix<T>) -> Result<f64> {
    let eig = hermitian_eigen(a)?;
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// `Tr_2`: trace out the second factor, `out[p][q] = Σ_s R[(p,s)][(q,s)]`.
pub fn partial_trace_second(r: &SymMatrix, shape: BipartiteShape) -> Result<SymMatrix> {
    shape.check(r)?;
    let BipartiteShape { m1, m2 } = shape;
    Ok(SymMatrix::from_fn(m1, m1, |p, q| {
        (0..m2).map(|s| r[(p * m2 + s, q * m2 + s)]).sum()
    }))
}

/// `Tr_1`: trace out the first factor, `out[p][q] = Σ_s R[(s,p)][(s,q)]`.
pub fn partial_trace_first(r: &SymMatrix, shape: BipartiteShape) -> Result<SymMatrix> {
    shape.check(r)?;
    let BipartiteShape { m1, m2 } = shape;
    Ok(SymMatrix::from_fn(m2, m2, |p, q| {
        (0..m1).map(|s| r[(s * m2 + p, s * m2 + q)]).sum()
    }))
}

/// Adjoint of [`partial_trace_second`]: `Y ↦ Y ⊗ I_m2`.
pub fn embed_second(y: &SymMatrix, shape: BipartiteShape) -> Result<SymMatrix> {
    if y.nrows() != shape.m1 || y.ncols() != shape.m1 {
        return Err(Error::InvalidInput(format!(
            "embed_second expects {0}x{0}, got {1}x{2}",
            shape.m1,
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(y.kronecker(&SymMatrix::identity(shape.m2, shape.m2)))
}

/// Adjoint of [`partial_trace_first`]: `Y ↦ I_m1 ⊗ Y`.
pub fn embed_first(y: &SymMatrix, shape: BipartiteShape) -> Result<SymMatrix> {
    if y.nrows() != shape.m2 || y.ncols() != shape.m2 {
        return Err(Error::InvalidInput(format!(
            "embed_first expects {0}x{0}, got {1}x{2}",
            shape.m2,
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(SymMatrix::identity(shape.m1, shape.m1).kronecker(y))
}

/// The map `R ↦ μR + ν (Tr_2 R) ⊗ I + ν I ⊗ (Tr_1 R)`.
pub fn pair_quadratic_forward(
    r: &SymMatrix,
    shape: BipartiteShape,
    mu: f64,
    nu: f64,
) -> Result<SymMatrix> {
    let left = embed_second(&partial_trace_second(r, shape)?, shape)?;
    let right = embed_first(&partial_trace_first(r, shape)?, shape)?;
    Ok(r * mu + (left + right) * nu)
}

/// Solves `μR + ν (Tr_2 R) ⊗ I + ν I ⊗ (Tr_1 R) = B` for `R`.
///
/// `B` is split orthogonally into its `I ⊗ I` component, the traceless
/// `Y ⊗ I` and `I ⊗ Z` parts and the remainder annihilated by both partial
/// traces; these are eigenspaces of the map with eigenvalues `μ + ν(m1+m2)`,
/// `μ + ν m2`, `μ + ν m1` and `μ`.
pub fn pair_quadratic_inverse(
    b: &SymMatrix,
    shape: BipartiteShape,
    mu: f64,
    nu: f64,
) -> Result<SymMatrix> {
    if !(mu.is_finite() && mu > 0.0) || !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "pair inverse needs mu > 0 and nu >= 0, got mu={mu}, nu={nu}"
        )));
    }
    shape.check(b)?;
    let BipartiteShape { m1, m2 } = shape;
    let (f1, f2) = (m1 as f64, m2 as f64);

    let c = b.trace() / (f1 * f2);
    let mut y = partial_trace_second(b, shape)? / f2;
    let mut z = partial_trace_first(b, shape)? / f1;
    for p in 0..m1 {
        y[(p, p)] -= c;
    }
    for p in 0..m2 {
        z[(p, p)] -= c;
    }

    let y_full = embed_second(&y, shape)?;
    let z_full = embed_first(&z, shape)?;
    let n = shape.dim();
    let mut w = b - &y_full - &z_full;
    for p in 0..n {
        w[(p, p)] -= c;
    }

    let mut out = w / mu + (y_full / (mu + nu * f2)) + (z_full / (mu + nu * f1));
    let c_out = c / (mu + nu * (f1 + f2));
    for p in 0..n {
        out[(p, p)] += c_out;
    }
    Ok(out)
}

/// Frobenius inner product of two real matrices.
pub fn frobenius_dot(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.dot(b)
}

/// Swaps the tensor factors: `(A ⊗ B) ↦ (B ⊗ A)` on a `shape` matrix.
pub fn swap_factors(r: &SymMatrix, shape: BipartiteShape) -> Result<SymMatrix> {
    shape.check(r)?;
    let BipartiteShape { m1, m2 } = shape;
    let idx = |p: usize| (p % m2) * m1 + p / m2;
    let mut out = SymMatrix::zeros(r.nrows(), r.ncols());
    for c in 0..r.ncols() {
        for row in 0..r.nrows() {
            out[(idx(row), idx(c))] = r[(row, c)];
        }
    }
    Ok(out)
}
