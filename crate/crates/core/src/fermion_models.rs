//! Spinless fermions through the Jordan–Wigner transformation.
//!
//! Mode `p` of an ordering acts as `Z^{⊗p} ⊗ [[0,0],[1,0]] ⊗ I`, occupied
//! meaning bit 1 of the corresponding factor. A single cluster uses its
//! row-major site order `κ_γ`; a cluster pair `γ < δ` uses `κ_γδ`, the modes
//! of `γ` followed by those of `δ`. An operator `B` on cluster `δ` then reads
//! `P_γ^{parity(B)} ⊗ B` inside the pair, where `P_γ` is the parity of `γ`.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::spin_models::{
    ClusterDecomposition, ClusterProblem, Lattice, OperatorBasis, Statistics, TermSink,
};

/// Creation operator of the mode at (0-based) position `pos` among `n_modes`.
pub fn jw_creation(n_modes: usize, pos: usize) -> Result<SymMatrix> {
    if pos >= n_modes {
        return Err(Error::InvalidInput(format!(
            "mode position {pos} out of range for {n_modes} modes"
        )));
    }
    let raise = SymMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let z = SymMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let mut out = SymMatrix::identity(1, 1);
    for _ in 0..pos {
        out = out.kronecker(&z);
    }
    out = out.kronecker(&raise);
    let rest = 1 << (n_modes - pos - 1);
    Ok(out.kronecker(&SymMatrix::identity(rest, rest)))
}

/// Odd-parity flags of the occupation basis states of `n_modes` modes.
pub fn parity_flags(n_modes: usize) -> Vec<bool> {
    (0..1usize << n_modes)
        .map(|s| s.count_ones() % 2 == 1)
        .collect()
}

/// Diagonal parity operator `(-1)^N`.
pub fn parity_operator(n_modes: usize) -> SymMatrix {
    let d: Vec<f64> = parity_flags(n_modes)
        .into_iter()
        .map(|odd| if odd { -1.0 } else { 1.0 })
        .collect();
    SymMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
}

/// Splits an operator into its parity-even and parity-odd parts.
pub fn parity_parts(op: &SymMatrix) -> (SymMatrix, SymMatrix) {
    let n = op.nrows();
    let mut even = SymMatrix::zeros(n, n);
    let mut odd = SymMatrix::zeros(n, n);
    for c in 0..op.ncols() {
        for r in 0..n {
            if (r.count_ones() + c.count_ones()) % 2 == 0 {
                even[(r, c)] = op[(r, c)];
            } else {
                odd[(r, c)] = op[(r, c)];
            }
        }
    }
    (even, odd)
}

/// Creation operators for an ordered list of mode labels (lattice sites).
#[derive(Clone, Debug)]
pub struct JordanWignerContext {
    ordering: Vec<usize>,
    creators: Vec<SymMatrix>,
}

impl JordanWignerContext {
    pub fn new(ordering: Vec<usize>) -> Result<Self> {
        let mut seen = ordering.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ordering.len() || ordering.is_empty() {
            return Err(Error::InvalidInput(format!(
                "mode ordering {ordering:?} is not a bijection"
            )));
        }
        let n = ordering.len();
        let creators = (0..n).map(|p| jw_creation(n, p)).collect::<Result<_>>()?;
        Ok(Self { ordering, creators })
    }

    pub fn n_modes(&self) -> usize {
        self.ordering.len()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn position(&self, label: usize) -> Option<usize> {
        self.ordering.iter().position(|&l| l == label)
    }

    pub fn creation(&self, label: usize) -> Result<&SymMatrix> {
        let p = self
            .position(label)
            .ok_or_else(|| Error::InvalidInput(format!("mode {label} not in this ordering")))?;
        Ok(&self.creators[p])
    }

    pub fn annihilation(&self, label: usize) -> Result<SymMatrix> {
        Ok(self.creation(label)?.transpose())
    }

    pub fn number(&self, label: usize) -> Result<SymMatrix> {
        let c = self.creation(label)?;
        Ok(c * c.transpose())
    }

    /// `-(a_i† a_j + a_j† a_i)`.
    pub fn hopping(&self, i: usize, j: usize) -> Result<SymMatrix> {
        let (ci, cj) = (self.creation(i)?, self.creation(j)?);
        let t = ci * cj.transpose();
        Ok(-(&t + t.transpose()))
    }

    /// `(n_i - 1/2)(n_j - 1/2)`.
    pub fn density_density(&self, i: usize, j: usize) -> Result<SymMatrix> {
        let dim = 1 << self.n_modes();
        let half = SymMatrix::identity(dim, dim) * 0.5;
        Ok((self.number(i)? - &half) * (self.number(j)? - &half))
    }
}

/// The orderings `κ_γ` and `κ_γδ` of a cluster decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairOrdering {
    kappa_single: Vec<Vec<usize>>,
}

impl PairOrdering {
    /// Row-major site order inside each cluster.
    pub fn from_clustering(clustering: &ClusterDecomposition) -> Self {
        Self {
            kappa_single: clustering.clusters().to_vec(),
        }
    }

    pub fn single(&self, gamma: usize) -> &[usize] {
        &self.kappa_single[gamma]
    }

    /// `κ_γδ`: modes of `γ` first, then those of `δ`.
    pub fn pair(&self, gamma: usize, delta: usize) -> Vec<usize> {
        let mut out = self.kappa_single[gamma].clone();
        out.extend_from_slice(&self.kappa_single[delta]);
        out
    }
}

/// Lifted basis products used for the fermionic moment matrix.
///
/// With congruent clusters and row-major orderings the products do not
/// depend on which clusters are involved, so one set serves every pair.
#[derive(Clone, Debug)]
pub struct JwObservables {
    /// `J_γ(O_α)^T J_γ(O_β)` at index `α·n + β`.
    pub site_products: Vec<SymMatrix>,
    /// `J_γδ(O_α)^T J_γδ(O_β)` with `O_α` on `γ`, `O_β` on `δ`, at `α·n + β`.
    pub pair_products: Vec<SymMatrix>,
    pub n: usize,
    pub m: usize,
}

/// Products of Jordan–Wigner lifted basis operators for G assembly.
pub fn jw_pair_observables(
    clustering: &ClusterDecomposition,
    orderings: &PairOrdering,
    basis: &OperatorBasis,
) -> Result<JwObservables> {
    let m = clustering.local_dim();
    let l = clustering.sites_per_cluster();
    if basis.local_dim() != m {
        return Err(Error::InvalidInput(format!(
            "basis acts on dimension {}, clusters have dimension {m}",
            basis.local_dim()
        )));
    }
    if (0..clustering.n_clusters()).any(|g| orderings.single(g) != clustering.sites(g)) {
        return Err(Error::InvalidInput(
            "orderings do not follow the cluster site order".into(),
        ));
    }
    let n = basis.len();
    let ops = basis.ops();
    let id = SymMatrix::identity(m, m);
    let parity = parity_operator(l);
    let mut site_products = Vec::with_capacity(n * n);
    let mut pair_products = Vec::with_capacity(n * n);
    let firsts: Vec<SymMatrix> = ops.iter().map(|o| o.transpose().kronecker(&id)).collect();
    let seconds: Vec<SymMatrix> = ops
        .iter()
        .map(|o| {
            let (even, odd) = parity_parts(o);
            id.kronecker(&even) + parity.kronecker(&odd)
        })
        .collect();
    for a in 0..n {
        for b in 0..n {
            site_products.push(ops[a].transpose() * &ops[b]);
            pair_products.push(&firsts[a] * &seconds[b]);
        }
    }
    Ok(JwObservables {
        site_products,
        pair_products,
        n,
        m,
    })
}

/// Spinless fermions with nearest-neighbour hopping and density interaction.
///
/// Short range: `Σ_<ij> [-(a_i†a_j + h.c.) + U (n_i-½)(n_j-½)]`.
/// Long range: hopping on bonds plus `U Σ_{i≠j} (n_i-½)(n_j-½) / d(i,j)`,
/// the sum running over ordered pairs and `d` the minimum-image distance.
pub fn build_spinless(
    lattice: &Lattice,
    u: f64,
    clustering: &ClusterDecomposition,
    long_range: bool,
) -> Result<ClusterProblem> {
    if clustering.lattice() != lattice {
        return Err(Error::InvalidConfig(
            "clustering was built for a different lattice".into(),
        ));
    }
    if !u.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "interaction U={u} is not finite"
        )));
    }
    let orderings = PairOrdering::from_clustering(clustering);
    let singles: Vec<JordanWignerContext> = (0..clustering.n_clusters())
        .map(|g| JordanWignerContext::new(orderings.single(g).to_vec()))
        .collect::<Result<_>>()?;
    let mut sink = TermSink::new(clustering);

    let add = |a: usize, b: usize, hop: bool, w: f64, sink: &mut TermSink| -> Result<()> {
        let (ga, _) = clustering.owner(a);
        let (gb, _) = clustering.owner(b);
        let build = |ctx: &JordanWignerContext| -> Result<SymMatrix> {
            let mut t = ctx.density_density(a, b)? * w;
            if hop {
                t += ctx.hopping(a, b)?;
            }
            Ok(t)
        };
        if ga == gb {
            let t = build(&singles[ga])?;
            sink.add_single(ga, &t);
        } else {
            let (g, d) = (ga.min(gb), ga.max(gb));
            let ctx = JordanWignerContext::new(orderings.pair(g, d))?;
            let t = build(&ctx)?;
            sink.add_pair(g, d, &t);
        }
        Ok(())
    };

    if long_range {
        let bonds = lattice.bonds();
        let n = lattice.n_sites();
        for a in 0..n {
            for b in a + 1..n {
                // both orders (a,b) and (b,a) of the interaction sum
                let w = 2.0 * u / lattice.distance(a, b);
                let hop = bonds.binary_search(&(a, b)).is_ok();
                add(a, b, hop, w, &mut sink)?;
            }
        }
    } else {
        for (a, b) in lattice.bonds() {
            add(a, b, true, u, &mut sink)?;
        }
    }
    sink.finish(Statistics::Fermion)
}
