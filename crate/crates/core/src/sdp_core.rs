//! Problem-level pieces shared by both solvers: the moment matrix `G`, the
//! effective Hamiltonians under a dual `X`, the primal objective and the
//! feasibility error.
//!
//! Cluster pairs `i < j` are stored in lexicographic order (see
//! [`pair_list`]). With the matrix-unit basis `O_(pq) = E_pq` the moment
//! blocks have closed forms:
//!
//! * `G_ii[(pq),(rs)] = δ_pr ρ_i[s,q]`
//! * `G_ij[(pq),(rs)] = σ ρ_ij[(p,s),(q,r)]`, `G_ji = G_ijᵀ`
//!
//! where `σ = (-1)^{|p|(|r|+|s|)}` for fermions (`|x|` the occupation
//! parity of basis state `x`) and `σ = 1` for spins.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fermion_models::{jw_pair_observables, parity_flags, JwObservables, PairOrdering};
use crate::linalg::{
    hermitian_part, partial_trace_first, partial_trace_second, BipartiteShape, SymMatrix,
};
use crate::spin_models::{ClusterDecomposition, ClusterProblem, OperatorBasis, Statistics};

/// Products of basis operators beyond this many entries are refused.
const DENSE_MOMENT_CAP: usize = 1 << 26;

/// Number of unordered cluster pairs.
pub fn pair_count(n_clusters: usize) -> usize {
    n_clusters * n_clusters.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in [`pair_list`].
pub fn pair_index(i: usize, j: usize, n_clusters: usize) -> usize {
    debug_assert!(i < j && j < n_clusters);
    i * (2 * n_clusters - i - 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)`, `i < j`, lexicographically.
pub fn pair_list(n_clusters: usize) -> Vec<(usize, usize)> {
    (0..n_clusters)
        .flat_map(|i| (i + 1..n_clusters).map(move |j| (i, j)))
        .collect()
}

/// Copy of block `(i, j)` of a matrix made of `n × n` blocks.
pub fn block(x: &SymMatrix, i: usize, j: usize, n: usize) -> SymMatrix {
    x.view((i * n, j * n), (n, n)).into_owned()
}

/// Site and pair density matrices of the full (non-reduced) representation.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalSet {
    pub rho_single: Vec<SymMatrix>,
    /// Indexed like [`pair_list`].
    pub rho_pair: Vec<SymMatrix>,
}

impl MarginalSet {
    /// `ρ_i = I/m`, `ρ_ij = I/m²`.
    pub fn uniform(n_clusters: usize, m: usize) -> Self {
        Self {
            rho_single: vec![SymMatrix::identity(m, m) / m as f64; n_clusters],
            rho_pair: vec![
                SymMatrix::identity(m * m, m * m) / (m * m) as f64;
                pair_count(n_clusters)
            ],
        }
    }

    /// `ρ_ij = ρ_i ⊗ ρ_j`.
    pub fn product(rho_single: Vec<SymMatrix>) -> Self {
        let rho_pair = pair_list(rho_single.len())
            .into_iter()
            .map(|(i, j)| rho_single[i].kronecker(&rho_single[j]))
            .collect();
        Self {
            rho_single,
            rho_pair,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.rho_single.len()
    }

    pub fn pair(&self, i: usize, j: usize) -> &SymMatrix {
        &self.rho_pair[pair_index(i, j, self.n_clusters())]
    }

    fn check(&self, m: usize) -> Result<()> {
        let nc = self.n_clusters();
        if self.rho_pair.len() != pair_count(nc) {
            return Err(Error::InvalidState(format!(
                "{} pair marginals for {nc} clusters",
                self.rho_pair.len()
            )));
        }
        if self.rho_single.iter().any(|r| r.shape() != (m, m))
            || self.rho_pair.iter().any(|r| r.shape() != (m * m, m * m))
        {
            return Err(Error::InvalidState(format!(
                "marginal dimensions do not match local dimension {m}"
            )));
        }
        Ok(())
    }
}

/// Translation-reduced marginals: `ρ_0` and `ρ_{0,j}` for every displacement
/// `j ≠ 0`, stored at index `j - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TiMarginals {
    pub rho0: SymMatrix,
    pub rho_pair: Vec<SymMatrix>,
}

impl TiMarginals {
    pub fn uniform(n_clusters: usize, m: usize) -> Self {
        Self {
            rho0: SymMatrix::identity(m, m) / m as f64,
            rho_pair: vec![SymMatrix::identity(m * m, m * m) / (m * m) as f64; n_clusters - 1],
        }
    }

    /// Full marginal set with `ρ_γ = ρ_0` and `ρ_γδ = ρ_{0,δ−γ}`.
    pub fn expand(&self, clustering: &ClusterDecomposition) -> MarginalSet {
        let nc = clustering.n_clusters();
        MarginalSet {
            rho_single: vec![self.rho0.clone(); nc],
            rho_pair: pair_list(nc)
                .into_iter()
                .map(|(g, d)| self.rho_pair[clustering.displacement(g, d) - 1].clone())
                .collect(),
        }
    }
}

/// Global dual `X` and the local multipliers of the general solver.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub x: SymMatrix,
    pub lambda_pair: Vec<SymMatrix>,
    /// Multipliers of `Tr_2 ρ_ij = ρ_i`, stored `m × m`.
    pub lambda_left: Vec<SymMatrix>,
    /// Multipliers of `Tr_1 ρ_ij = ρ_j`, stored `m × m`.
    pub lambda_right: Vec<SymMatrix>,
}

impl DualState {
    /// `X = I`, all multipliers zero.
    pub fn initial(n_clusters: usize, m: usize, n: usize) -> Self {
        let np = pair_count(n_clusters);
        Self {
            x: SymMatrix::identity(n_clusters * n, n_clusters * n),
            lambda_pair: vec![SymMatrix::zeros(m * m, m * m); np],
            lambda_left: vec![SymMatrix::zeros(m, m); np],
            lambda_right: vec![SymMatrix::zeros(m, m); np],
        }
    }
}

/// Dual state of the translation-invariant solver: first block row of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct TiDualState {
    pub x_row: Vec<SymMatrix>,
    pub lambda_pair: Vec<SymMatrix>,
    pub lambda_left: Vec<SymMatrix>,
    pub lambda_right: Vec<SymMatrix>,
}

impl TiDualState {
    pub fn initial(n_clusters: usize, m: usize, n: usize) -> Self {
        let mut x_row = vec![SymMatrix::zeros(n, n); n_clusters];
        x_row[0] = SymMatrix::identity(n, n);
        Self {
            x_row,
            lambda_pair: vec![SymMatrix::zeros(m * m, m * m); n_clusters - 1],
            lambda_left: vec![SymMatrix::zeros(m, m); n_clusters - 1],
            lambda_right: vec![SymMatrix::zeros(m, m); n_clusters - 1],
        }
    }
}

/// Explicit operator products `O_α^T O_β` and `O_α^T ⊗ O_β` (index `α·n + β`).
#[derive(Clone, Debug)]
pub struct DenseMoments {
    pub n: usize,
    pub m: usize,
    pub site_products: Vec<SymMatrix>,
    pub pair_products: Vec<SymMatrix>,
}

impl DenseMoments {
    pub fn from_basis(basis: &OperatorBasis) -> Result<Self> {
        let (n, m) = (basis.len(), basis.local_dim());
        if n * n * m.pow(4) > DENSE_MOMENT_CAP {
            return Err(Error::InvalidInput(format!(
                "explicit moments for {n} operators of dimension {m} are too large"
            )));
        }
        let ops = basis.ops();
        let mut site_products = Vec::with_capacity(n * n);
        let mut pair_products = Vec::with_capacity(n * n);
        for a in ops {
            let at = a.transpose();
            for b in ops {
                site_products.push(&at * b);
                pair_products.push(at.kronecker(b));
            }
        }
        Ok(Self {
            n,
            m,
            site_products,
            pair_products,
        })
    }
}

impl From<JwObservables> for DenseMoments {
    fn from(o: JwObservables) -> Self {
        Self {
            n: o.n,
            m: o.m,
            site_products: o.site_products,
            pair_products: o.pair_products,
        }
    }
}

/// How moment blocks and effective terms are evaluated.
#[derive(Clone, Debug)]
pub enum Moments {
    /// Closed forms for the complete matrix-unit basis; `parity` holds the
    /// odd flags of the cluster basis states for fermions.
    MatrixUnits { m: usize, parity: Option<Vec<bool>> },
    /// Explicit operator products for arbitrary bases.
    Dense(DenseMoments),
}

/// `Tr[P ρ]` without assuming symmetry of `P`.
fn trace_product(p: &SymMatrix, rho: &SymMatrix) -> f64 {
    p.dot(&rho.transpose())
}

impl Moments {
    /// Fast path when the problem uses matrix units, explicit products otherwise.
    pub fn for_problem(problem: &ClusterProblem) -> Result<Self> {
        if problem.basis.is_matrix_units() {
            let m = problem.local_dim;
            let parity = match problem.statistics {
                Statistics::Spin => None,
                Statistics::Fermion => Some(parity_flags(problem.clustering.sites_per_cluster())),
            };
            Ok(Moments::MatrixUnits { m, parity })
        } else {
            Self::dense_for(problem)
        }
    }

    /// Always builds the explicit products (used to cross-check the closed forms).
    pub fn dense_for(problem: &ClusterProblem) -> Result<Self> {
        match problem.statistics {
            Statistics::Spin => Ok(Moments::Dense(DenseMoments::from_basis(&problem.basis)?)),
            Statistics::Fermion => {
                let c = &problem.clustering;
                let obs =
                    jw_pair_observables(c, &PairOrdering::from_clustering(c), &problem.basis)?;
                Ok(Moments::Dense(obs.into()))
            }
        }
    }

    /// Number of basis operators per cluster.
    pub fn n(&self) -> usize {
        match self {
            Moments::MatrixUnits { m, .. } => m * m,
            Moments::Dense(d) => d.n,
        }
    }

    pub fn local_dim(&self) -> usize {
        match self {
            Moments::MatrixUnits { m, .. } => *m,
            Moments::Dense(d) => d.m,
        }
    }

    fn sign(parity: &Option<Vec<bool>>, p: usize, r: usize, s: usize) -> f64 {
        match parity {
            Some(par) if par[p] && (par[r] != par[s]) => -1.0,
            _ => 1.0,
        }
    }

    /// `G_ii[α,β] = Tr[O_α^T O_β ρ_i]`.
    pub fn site_block(&self, rho: &SymMatrix) -> SymMatrix {
        match self {
            Moments::MatrixUnits { m, .. } => {
                let m = *m;
                let mut g = SymMatrix::zeros(m * m, m * m);
                for p in 0..m {
                    for q in 0..m {
                        for s in 0..m {
                            g[(p * m + q, p * m + s)] = rho[(s, q)];
                        }
                    }
                }
                g
            }
            Moments::Dense(d) => SymMatrix::from_fn(d.n, d.n, |a, b| {
                trace_product(&d.site_products[a * d.n + b], rho)
            }),
        }
    }

    /// `G_ij[α,β] = Tr[(O_α^T ⊗ O_β) ρ_ij]` (Jordan–Wigner lifted for fermions).
    pub fn pair_block(&self, rho: &SymMatrix) -> SymMatrix {
        match self {
            Moments::MatrixUnits { m, parity } => {
                let m = *m;
                let mut g = SymMatrix::zeros(m * m, m * m);
                for r in 0..m {
                    for s in 0..m {
                        let col = r * m + s;
                        for p in 0..m {
                            let sig = Self::sign(parity, p, r, s);
                            for q in 0..m {
                                g[(p * m + q, col)] = sig * rho[(p * m + s, q * m + r)];
                            }
                        }
                    }
                }
                g
            }
            Moments::Dense(d) => SymMatrix::from_fn(d.n, d.n, |a, b| {
                trace_product(&d.pair_products[a * d.n + b], rho)
            }),
        }
    }

    /// `Σ_αβ X_αβ O_α^T O_β`, symmetrized.
    pub fn site_effective(&self, x: &SymMatrix) -> SymMatrix {
        match self {
            Moments::MatrixUnits { m, .. } => {
                let m = *m;
                let out = SymMatrix::from_fn(m, m, |q, s| {
                    (0..m).map(|p| x[(p * m + q, p * m + s)]).sum()
                });
                hermitian_part(&out)
            }
            Moments::Dense(d) => {
                let mut out = SymMatrix::zeros(d.m, d.m);
                for (k, prod) in d.site_products.iter().enumerate() {
                    let c = x[(k / d.n, k % d.n)];
                    if c != 0.0 {
                        out += prod * c;
                    }
                }
                hermitian_part(&out)
            }
        }
    }

    /// `K + Kᵀ` with `K = Σ_αβ X_αβ (O_α^T ⊗ O_β)`.
    pub fn pair_effective(&self, x: &SymMatrix) -> SymMatrix {
        let k = match self {
            Moments::MatrixUnits { m, parity } => {
                let m = *m;
                let mut k = SymMatrix::zeros(m * m, m * m);
                for r in 0..m {
                    for s in 0..m {
                        let col = r * m + s;
                        for p in 0..m {
                            let sig = Self::sign(parity, p, r, s);
                            for q in 0..m {
                                k[(q * m + r, p * m + s)] = sig * x[(p * m + q, col)];
                            }
                        }
                    }
                }
                k
            }
            Moments::Dense(d) => {
                let mut k = SymMatrix::zeros(d.m * d.m, d.m * d.m);
                for (idx, prod) in d.pair_products.iter().enumerate() {
                    let c = x[(idx / d.n, idx % d.n)];
                    if c != 0.0 {
                        k += prod * c;
                    }
                }
                k
            }
        };
        &k + k.transpose()
    }
}

/// Assembles the full `(M·n) × (M·n)` moment matrix.
pub fn assemble_g(moments: &Moments, marginals: &MarginalSet) -> Result<SymMatrix> {
    let m = moments.local_dim();
    marginals.check(m)?;
    let nc = marginals.n_clusters();
    let n = moments.n();
    let mut g = SymMatrix::zeros(nc * n, nc * n);
    for (i, rho) in marginals.rho_single.iter().enumerate() {
        g.view_mut((i * n, i * n), (n, n))
            .copy_from(&moments.site_block(rho));
    }
    let blocks: Vec<SymMatrix> = marginals
        .rho_pair
        .par_iter()
        .map(|rho| moments.pair_block(rho))
        .collect();
    for ((i, j), b) in pair_list(nc).into_iter().zip(blocks) {
        g.view_mut((j * n, i * n), (n, n)).copy_from(&b.transpose());
        g.view_mut((i * n, j * n), (n, n)).copy_from(&b);
    }
    Ok(hermitian_part(&g))
}

/// `[G_00, G_01, …]`: the first block row for translation-reduced marginals.
pub fn ti_g_row(moments: &Moments, marginals: &TiMarginals) -> Vec<SymMatrix> {
    std::iter::once(moments.site_block(&marginals.rho0))
        .chain(marginals.rho_pair.iter().map(|r| moments.pair_block(r)))
        .collect()
}

/// `H_i' = H_i − Σ (X_ii)_αβ O_α^T O_β` and
/// `H_ij' = H_ij − [Σ (X_ij)_αβ O_α^T ⊗ O_β + transpose]`.
///
/// The pair formula subtracts from the pair term `H_ij`; reading it as
/// starting from `H_i` would not be dimensionally consistent.
pub fn effective_hamiltonians(
    problem: &ClusterProblem,
    moments: &Moments,
    x: &SymMatrix,
) -> Result<(Vec<SymMatrix>, Vec<SymMatrix>)> {
    let nc = problem.n_clusters();
    let n = moments.n();
    if x.shape() != (nc * n, nc * n) {
        return Err(Error::InvalidInput(format!(
            "dual is {}x{}, expected {}",
            x.nrows(),
            x.ncols(),
            nc * n
        )));
    }
    let singles = (0..nc)
        .into_par_iter()
        .map(|i| &problem.h_single[i] - moments.site_effective(&block(x, i, i, n)))
        .collect();
    let mm = problem.local_dim * problem.local_dim;
    let pairs = pair_list(nc)
        .into_par_iter()
        .map(|(i, j)| {
            let eff = moments.pair_effective(&block(x, i, j, n));
            match problem.pair_term(i, j) {
                Some(h) => h - eff,
                None => -eff,
            }
        })
        .collect::<Vec<SymMatrix>>();
    debug_assert!(pairs.iter().all(|p| p.nrows() == mm));
    Ok((singles, pairs))
}

/// `Σ_i Tr[H_i ρ_i] + Σ_{i<j} Tr[H_ij ρ_ij]` (total, not per site).
pub fn primal_energy(problem: &ClusterProblem, marginals: &MarginalSet) -> f64 {
    let nc = problem.n_clusters();
    let single: f64 = problem
        .h_single
        .iter()
        .zip(&marginals.rho_single)
        .map(|(h, r)| trace_product(h, r))
        .sum();
    let pair: f64 = problem
        .h_pair
        .iter()
        .map(|(&(i, j), h)| trace_product(h, &marginals.rho_pair[pair_index(i, j, nc)]))
        .sum();
    single + pair
}

/// Energy per site of translation-reduced marginals:
/// `(Tr[H_0 ρ_0] + ½ Σ_{j≠0} Tr[H_0j ρ_0j]) / L`.
pub fn ti_energy_per_site(problem: &ClusterProblem, marginals: &TiMarginals) -> f64 {
    let mut e = trace_product(&problem.h_single[0], &marginals.rho0);
    for (k, rho) in marginals.rho_pair.iter().enumerate() {
        if let Some(h) = problem.pair_term(0, k + 1) {
            e += 0.5 * trace_product(h, rho);
        }
    }
    e / problem.clustering.sites_per_cluster() as f64
}

fn pair_violation(
    rho_pair: &SymMatrix,
    aux: &SymMatrix,
    left: &SymMatrix,
    right: &SymMatrix,
) -> Result<f64> {
    let m = left.nrows();
    let shape = BipartiteShape::square(m);
    let a1 = partial_trace_second(rho_pair, shape)? - left;
    let a2 = partial_trace_first(rho_pair, shape)? - right;
    Ok(a1.norm_squared() + a2.norm_squared() + (rho_pair - aux).norm_squared())
}

/// Root-mean-square constraint violation per cluster pair:
/// `sqrt(2/(M(M−1)) Σ_{i<j} T_ij)` with
/// `T_ij = ‖Tr_2 ρ_ij − ρ_i‖² + ‖Tr_1 ρ_ij − ρ_j‖² + ‖ρ_ij − ρ̃_ij‖²`.
/// On translation-invariant states this equals [`ti_feasibility_error`].
pub fn feasibility_error(marginals: &MarginalSet, aux: &[SymMatrix]) -> Result<f64> {
    let nc = marginals.n_clusters();
    if nc < 2 {
        return Ok(0.0);
    }
    if aux.len() != marginals.rho_pair.len() {
        return Err(Error::InvalidState(
            "auxiliary and pair counts differ".into(),
        ));
    }
    let mut total = 0.0;
    for (k, (i, j)) in pair_list(nc).into_iter().enumerate() {
        total += pair_violation(
            &marginals.rho_pair[k],
            &aux[k],
            &marginals.rho_single[i],
            &marginals.rho_single[j],
        )?;
    }
    Ok((2.0 * total / (nc * (nc - 1)) as f64).sqrt())
}

/// `sqrt(1/(M−1) Σ_{j≠0} T_0j)` for translation-reduced marginals.
pub fn ti_feasibility_error(marginals: &TiMarginals, aux: &[SymMatrix]) -> Result<f64> {
    let np = marginals.rho_pair.len();
    if np == 0 {
        return Ok(0.0);
    }
    if aux.len() != np {
        return Err(Error::InvalidState(
            "auxiliary and pair counts differ".into(),
        ));
    }
    let mut total = 0.0;
    for (rho, t) in marginals.rho_pair.iter().zip(aux) {
        total += pair_violation(rho, t, &marginals.rho0, &marginals.rho0)?;
    }
    Ok((total / np as f64).sqrt())
}
