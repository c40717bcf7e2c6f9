//! Lattice geometry, cluster coarse-graining and the spin-½ models.
//!
//! Transverse-field Ising: `H = -Σ_<ij> Z_i Z_j - h Σ_i X_i`.
//! Heisenberg antiferromagnet: `H = Σ_<ij> (X_i X_j + Y_i Y_j + Z_i Z_j)`.
//!
//! Every term is lifted into its cluster space by Kronecker products;
//! bonds inside a cluster go to `H_γ`, bonds between clusters `γ < δ` go to
//! `H_γδ` with cluster `γ` as the first tensor factor.

mod lattice;
mod problem;

pub use lattice::{ClusterDecomposition, Lattice, MAX_CLUSTER_SITES};
pub(crate) use problem::TermSink;
pub use problem::{complete_basis, ClusterProblem, OperatorBasis, Statistics};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Real 2×2 single-site operators.
pub mod pauli {
    use crate::linalg::SymMatrix;

    pub fn x() -> SymMatrix {
        SymMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn z() -> SymMatrix {
        SymMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// `Y_r = i σ^y = [[0, 1], [-1, 0]]`, so that `σ^y ⊗ σ^y = -Y_r ⊗ Y_r`.
    pub fn y_real() -> SymMatrix {
        SymMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }
}

/// `I^{⊗pos} ⊗ op ⊗ I^{⊗(n-pos-1)}` for a 2×2 `op`.
pub fn lift_site(op: &SymMatrix, pos: usize, n_sites: usize) -> SymMatrix {
    let left = SymMatrix::identity(1 << pos, 1 << pos);
    let right_dim = 1 << (n_sites - pos - 1);
    left.kronecker(op)
        .kronecker(&SymMatrix::identity(right_dim, right_dim))
}

/// A bond operator `Σ_t c_t A_t ⊗ B_t` between two sites.
type BondTerm = [(f64, SymMatrix, SymMatrix)];

fn check_clustering(lattice: &Lattice, clustering: &ClusterDecomposition) -> Result<()> {
    if clustering.lattice() != lattice {
        return Err(Error::InvalidConfig(
            "clustering was built for a different lattice".into(),
        ));
    }
    Ok(())
}

fn add_field(sink: &mut TermSink, site: usize, coef: f64, op: &SymMatrix) {
    let l = sink.clustering.sites_per_cluster();
    let (g, pos) = sink.clustering.owner(site);
    let term = lift_site(op, pos, l) * coef;
    sink.add_single(g, &term);
}

fn add_bond(sink: &mut TermSink, a: usize, b: usize, terms: &BondTerm) {
    let l = sink.clustering.sites_per_cluster();
    let (ga, pa) = sink.clustering.owner(a);
    let (gb, pb) = sink.clustering.owner(b);
    if ga == gb {
        for (c, oa, ob) in terms {
            let t = lift_site(oa, pa, l) * lift_site(ob, pb, l) * *c;
            sink.add_single(ga, &t);
        }
        return;
    }
    // first tensor factor belongs to the lower cluster index
    let ((g1, p1, first), (g2, p2, second)) = if ga < gb {
        ((ga, pa, 0), (gb, pb, 1))
    } else {
        ((gb, pb, 1), (ga, pa, 0))
    };
    for t in terms {
        let ops = [&t.1, &t.2];
        let lifted = lift_site(ops[first], p1, l).kronecker(&lift_site(ops[second], p2, l)) * t.0;
        sink.add_pair(g1, g2, &lifted);
    }
}

/// Transverse-field Ising model on `lattice` coarse-grained by `clustering`.
pub fn build_tfi(
    lattice: &Lattice,
    h: f64,
    clustering: &ClusterDecomposition,
) -> Result<ClusterProblem> {
    check_clustering(lattice, clustering)?;
    if !h.is_finite() {
        return Err(Error::InvalidConfig(format!("field h={h} is not finite")));
    }
    let mut sink = TermSink::new(clustering);
    let zz = [(-1.0, pauli::z(), pauli::z())];
    for (a, b) in lattice.bonds() {
        add_bond(&mut sink, a, b, &zz);
    }
    if h != 0.0 {
        for site in 0..lattice.n_sites() {
            add_field(&mut sink, site, -h, &pauli::x());
        }
    }
    sink.finish(Statistics::Spin)
}

/// Antiferromagnetic Heisenberg model (unit coupling, Pauli normalization).
pub fn build_afh(lattice: &Lattice, clustering: &ClusterDecomposition) -> Result<ClusterProblem> {
    check_clustering(lattice, clustering)?;
    let mut sink = TermSink::new(clustering);
    let heis = [
        (1.0, pauli::x(), pauli::x()),
        (-1.0, pauli::y_real(), pauli::y_real()),
        (1.0, pauli::z(), pauli::z()),
    ];
    for (a, b) in lattice.bonds() {
        add_bond(&mut sink, a, b, &heis);
    }
    sink.finish(Statistics::Spin)
}
