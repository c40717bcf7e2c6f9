//! The coarse-grained problem data shared by both solvers and the oracle.

use std::collections::BTreeMap;

use super::lattice::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, max_abs, SymMatrix};

/// Whether cluster operators commute across clusters (spins) or pick up
/// Jordan–Wigner strings (spinless fermions).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Statistics {
    Spin,
    Fermion,
}

/// Operators `O_α` on a single cluster space used to build the moment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBasis {
    local_dim: usize,
    ops: Vec<SymMatrix>,
    matrix_units: bool,
}

impl OperatorBasis {
    /// A custom basis; every operator must be `local_dim × local_dim`.
    pub fn custom(local_dim: usize, ops: Vec<SymMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidInput("operator basis is empty".into()));
        }
        if let Some(bad) = ops.iter().position(|o| o.shape() != (local_dim, local_dim)) {
            return Err(Error::InvalidInput(format!(
                "basis operator {bad} is not {local_dim}x{local_dim}"
            )));
        }
        let matrix_units = ops == complete_basis(local_dim).ops;
        Ok(Self {
            local_dim,
            ops,
            matrix_units,
        })
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[SymMatrix] {
        &self.ops
    }

    /// True for the `m²` matrix units in p-major order.
    pub fn is_matrix_units(&self) -> bool {
        self.matrix_units
    }
}

/// The matrix units `E_pq`, ordered p-major (`α = p·m + q`).
pub fn complete_basis(m: usize) -> OperatorBasis {
    let mut ops = Vec::with_capacity(m * m);
    for p in 0..m {
        for q in 0..m {
            let mut e = SymMatrix::zeros(m, m);
            e[(p, q)] = 1.0;
            ops.push(e);
        }
    }
    OperatorBasis {
        local_dim: m,
        ops,
        matrix_units: true,
    }
}

/// `H = Σ_γ H_γ + Σ_{γ<δ} H_γδ` on a clustered lattice.
///
/// `h_pair` only stores nonzero terms; a missing key means the pair is not
/// coupled but still carries relaxation variables.
#[derive(Clone, Debug)]
pub struct ClusterProblem {
    pub clustering: ClusterDecomposition,
    pub local_dim: usize,
    pub h_single: Vec<SymMatrix>,
    pub h_pair: BTreeMap<(usize, usize), SymMatrix>,
    pub basis: OperatorBasis,
    pub translation_invariant: bool,
    pub statistics: Statistics,
}

impl ClusterProblem {
    pub fn n_clusters(&self) -> usize {
        self.h_single.len()
    }

    pub fn n_sites(&self) -> usize {
        self.clustering.lattice().n_sites()
    }

    pub fn pair_term(&self, gamma: usize, delta: usize) -> Option<&SymMatrix> {
        self.h_pair.get(&(gamma, delta))
    }

    /// Checks dimensions and symmetry of every term.
    pub fn validate(&self) -> Result<()> {
        let m = self.local_dim;
        if self.h_single.len() != self.clustering.n_clusters() {
            return Err(Error::InvalidInput(format!(
                "{} single-cluster terms for {} clusters",
                self.h_single.len(),
                self.clustering.n_clusters()
            )));
        }
        if self.basis.local_dim() != m {
            return Err(Error::InvalidInput(
                "basis dimension differs from local_dim".into(),
            ));
        }
        for (g, h) in self.h_single.iter().enumerate() {
            check_term(h, m, &format!("H_{g}"))?;
        }
        for (&(g, d), h) in &self.h_pair {
            if g >= d || d >= self.n_clusters() {
                return Err(Error::InvalidInput(format!("bad pair key ({g}, {d})")));
            }
            check_term(h, m * m, &format!("H_{g},{d}"))?;
        }
        Ok(())
    }

    /// Largest deviation of the terms from `H_γδ = H_{0,δ−γ}`, `H_γ = H_0`.
    pub fn translation_residue(&self) -> f64 {
        let c = &self.clustering;
        let mut worst = 0.0f64;
        for h in &self.h_single[1..] {
            worst = worst.max(max_abs(&(h - &self.h_single[0])));
        }
        let zero = SymMatrix::zeros(self.local_dim.pow(2), self.local_dim.pow(2));
        for g in 0..self.n_clusters() {
            for d in g + 1..self.n_clusters() {
                let disp = c.displacement(g, d);
                let here = self.pair_term(g, d).unwrap_or(&zero);
                let there = self.pair_term(0, disp).unwrap_or(&zero);
                worst = worst.max(max_abs(&(here - there)));
            }
        }
        worst
    }

    /// Scale used by divergence detection: the largest term norm, at least 1.
    pub fn hamiltonian_scale(&self) -> f64 {
        self.h_single
            .iter()
            .chain(self.h_pair.values())
            .map(|h| h.norm())
            .fold(1.0, f64::max)
    }
}

fn check_term(h: &SymMatrix, dim: usize, name: &str) -> Result<()> {
    if h.shape() != (dim, dim) {
        return Err(Error::InvalidInput(format!(
            "{name} is {}x{}, expected {dim}x{dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|x| !x.is_finite()) || asymmetry(h) > 1e-12 * max_abs(h).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "{name} is not finite and symmetric"
        )));
    }
    Ok(())
}

/// Accumulates cluster-level terms while a model is assembled.
pub(crate) struct TermSink {
    pub clustering: ClusterDecomposition,
    pub m: usize,
    pub h_single: Vec<SymMatrix>,
    pub h_pair: BTreeMap<(usize, usize), SymMatrix>,
}

impl TermSink {
    pub fn new(clustering: &ClusterDecomposition) -> Self {
        let m = clustering.local_dim();
        Self {
            clustering: clustering.clone(),
            m,
            h_single: vec![SymMatrix::zeros(m, m); clustering.n_clusters()],
            h_pair: BTreeMap::new(),
        }
    }

    pub fn add_single(&mut self, gamma: usize, term: &SymMatrix) {
        self.h_single[gamma] += term;
    }

    pub fn add_pair(&mut self, gamma: usize, delta: usize, term: &SymMatrix) {
        debug_assert!(gamma < delta);
        let n = self.m * self.m;
        *self
            .h_pair
            .entry((gamma, delta))
            .or_insert_with(|| SymMatrix::zeros(n, n)) += term;
    }

    pub fn finish(self, statistics: Statistics) -> Result<ClusterProblem> {
        let mut h_pair = self.h_pair;
        h_pair.retain(|_, h| max_abs(h) > 0.0);
        let periodic = self.clustering.lattice().is_periodic();
        let mut problem = ClusterProblem {
            basis: complete_basis(self.m),
            local_dim: self.m,
            clustering: self.clustering,
            h_single: self.h_single,
            h_pair,
            translation_invariant: false,
            statistics,
        };
        problem.validate()?;
        problem.translation_invariant = periodic && problem.translation_residue() < 1e-12;
        Ok(problem)
    }
}
