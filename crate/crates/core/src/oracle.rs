//! Exact reference energies and marginals.
//!
//! The global Hamiltonian is assembled from exactly the cluster terms the
//! solvers see. Global basis states are indexed with cluster 0 most
//! significant, so for fermions the global Jordan–Wigner order runs cluster
//! by cluster. A pair term written in the `κ_γδ` ordering then picks up the
//! parity of the clusters strictly between `γ` and `δ` on its `δ`-odd part,
//! and the parity of the clusters before `γ` on its odd part overall.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fermion_models::parity_flags;
use crate::linalg::{hermitian_eigen, SymMatrix};
use crate::sdp_core::{pair_list, MarginalSet};
use crate::spin_models::{ClusterDecomposition, ClusterProblem, Lattice, Statistics};

/// Largest Hilbert dimension diagonalized densely (a 2^12 matrix is 128 MiB).
pub const DENSE_CAP: usize = 1 << 12;
/// Largest Hilbert dimension accepted by the matrix-free Lanczos solver.
pub const LANCZOS_CAP: usize = 1 << 22;

/// Nonzero entries of a symmetric term, stored by row: `rows[s] = [(t, value)]`.
#[derive(Clone, Debug)]
struct SparseTerm {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseTerm {
    fn new(h: &SymMatrix) -> Self {
        let rows = (0..h.nrows())
            .map(|s| {
                (0..h.ncols())
                    .filter(|&t| h[(s, t)] != 0.0)
                    .map(|t| (t, h[(s, t)]))
                    .collect()
            })
            .collect();
        Self { rows }
    }
}

/// Matrix-free global Hamiltonian of a [`ClusterProblem`].
#[derive(Clone, Debug)]
pub struct GlobalHamiltonian {
    n_clusters: usize,
    m: usize,
    dim: usize,
    singles: Vec<(usize, SparseTerm)>,
    pairs: Vec<(usize, usize, SparseTerm)>,
    /// Odd-parity flags of cluster states; `None` for spins.
    parity: Option<Vec<bool>>,
}

impl GlobalHamiltonian {
    pub fn new(problem: &ClusterProblem, cap: usize) -> Result<Self> {
        let nc = problem.n_clusters();
        let m = problem.local_dim;
        let dim = (m as u128).checked_pow(nc as u32).unwrap_or(u128::MAX);
        if dim > cap as u128 {
            return Err(Error::OracleTooLarge {
                dim: usize::try_from(dim).unwrap_or(usize::MAX),
                cap,
            });
        }
        let singles = problem
            .h_single
            .iter()
            .enumerate()
            .filter(|(_, h)| h.iter().any(|&x| x != 0.0))
            .map(|(g, h)| (g, SparseTerm::new(h)))
            .collect();
        let pairs = problem
            .h_pair
            .iter()
            .map(|(&(g, d), h)| (g, d, SparseTerm::new(h)))
            .collect();
        let parity = match problem.statistics {
            Statistics::Spin => None,
            Statistics::Fermion => Some(parity_flags(problem.clustering.sites_per_cluster())),
        };
        Ok(Self {
            n_clusters: nc,
            m,
            dim: dim as usize,
            singles,
            pairs,
            parity,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn stride(&self, gamma: usize) -> usize {
        self.m.pow((self.n_clusters - 1 - gamma) as u32)
    }

    fn digit(&self, idx: usize, gamma: usize) -> usize {
        (idx / self.stride(gamma)) % self.m
    }

    /// Parity of the clusters with indices in `range`, for state `idx`.
    fn parity_of(&self, idx: usize, range: std::ops::Range<usize>) -> bool {
        match &self.parity {
            None => false,
            Some(p) => range.fold(false, |acc, c| acc ^ p[self.digit(idx, c)]),
        }
    }

    fn odd(&self, s: usize) -> bool {
        self.parity.as_ref().is_some_and(|p| p[s])
    }

    /// Sign of a pair-term matrix element `⟨s_γ s_δ| · |t_γ t_δ⟩` in state `idx`.
    fn pair_sign(
        &self,
        idx: usize,
        g: usize,
        d: usize,
        s: (usize, usize),
        t: (usize, usize),
    ) -> f64 {
        if self.parity.is_none() {
            return 1.0;
        }
        let delta_odd = self.odd(s.1) ^ self.odd(t.1);
        let all_odd = self.odd(s.0) ^ self.odd(t.0) ^ delta_odd;
        let flip =
            (delta_odd && self.parity_of(idx, g + 1..d)) ^ (all_odd && self.parity_of(idx, 0..g));
        if flip {
            -1.0
        } else {
            1.0
        }
    }

    fn single_sign(&self, idx: usize, g: usize, s: usize, t: usize) -> f64 {
        if (self.odd(s) ^ self.odd(t)) && self.parity_of(idx, 0..g) {
            -1.0
        } else {
            1.0
        }
    }

    /// Row `b` of `H v`.
    fn apply_row(&self, b: usize, v: &[f64]) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for (g, term) in &self.singles {
            let sg = self.stride(*g);
            let s = (b / sg) % m;
            let base = b - s * sg;
            for &(t, h) in &term.rows[s] {
                acc += h * self.single_sign(b, *g, s, t) * v[base + t * sg];
            }
        }
        for (g, d, term) in &self.pairs {
            let (sg, sd) = (self.stride(*g), self.stride(*d));
            let (s0, s1) = ((b / sg) % m, (b / sd) % m);
            let base = b - s0 * sg - s1 * sd;
            for &(t, h) in &term.rows[s0 * m + s1] {
                let (t0, t1) = (t / m, t % m);
                let sign = self.pair_sign(b, *g, *d, (s0, s1), (t0, t1));
                acc += h * sign * v[base + t0 * sg + t1 * sd];
            }
        }
        acc
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        out.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = self.apply_row(c * 4096 + k, v);
            }
        });
    }

    /// `⟨v|H|v⟩ / ⟨v|v⟩`.
    pub fn rayleigh_quotient(&self, v: &[f64]) -> f64 {
        let mut hv = vec![0.0; self.dim];
        self.apply(v, &mut hv);
        dot(v, &hv) / dot(v, v)
    }

    /// The full matrix (only sensible for small dimensions).
    pub fn to_dense(&self) -> SymMatrix {
        let mut h = SymMatrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        let mut col = vec![0.0; self.dim];
        for c in 0..self.dim {
            e[c] = 1.0;
            self.apply(&e, &mut col);
            h.set_column(c, &DVector::from_column_slice(&col));
            e[c] = 0.0;
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Ground state by dense diagonalization.
pub fn ground_energy_dense(problem: &ClusterProblem) -> Result<(f64, DVector<f64>)> {
    let h = GlobalHamiltonian::new(problem, DENSE_CAP)?;
    let eig = hermitian_eigen(&h.to_dense())?;
    let (k, e0) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::Numerical { dim: h.dim })?;
    Ok((e0, eig.eigenvectors.column(k).into_owned()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosConfig {
    /// Krylov vectors kept before a restart.
    pub krylov_dim: usize,
    /// Target residual `‖Hx − θx‖`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            krylov_dim: 40,
            tol: 1e-9,
            max_restarts: 200,
            seed: 0x1a2c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub energy: f64,
    /// `‖Hx − Ex‖` of the returned unit vector.
    pub residual: f64,
    pub converged: bool,
    /// Matrix-vector products used.
    pub matvecs: usize,
    pub vector: DVector<f64>,
}

/// Lowest eigenpair by restarted Lanczos with full reorthogonalization.
///
/// Each cycle builds up to `krylov_dim` orthonormal Krylov vectors and
/// restarts from the Ritz vector. Runs that exhaust `max_restarts` return
/// their best estimate with `converged = false`.
pub fn ground_energy_lanczos(
    problem: &ClusterProblem,
    config: &LanczosConfig,
) -> Result<LanczosResult> {
    let h = GlobalHamiltonian::new(problem, LANCZOS_CAP)?;
    lanczos(&h, config)
}

pub fn lanczos(h: &GlobalHamiltonian, config: &LanczosConfig) -> Result<LanczosResult> {
    if config.krylov_dim < 2 || config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::InvalidConfig(
            "Lanczos needs krylov_dim >= 2 and a positive tolerance".into(),
        ));
    }
    let n = h.dim;
    let kmax = config.krylov_dim.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut matvecs = 0;
    let mut best = (f64::INFINITY, f64::INFINITY);

    for _ in 0..=config.max_restarts {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut alpha = Vec::with_capacity(kmax);
        let mut beta: Vec<f64> = Vec::with_capacity(kmax);
        let mut w = vec![0.0; n];
        let mut ritz = (0.0, vec![1.0]);
        for k in 0..kmax {
            h.apply(&basis[k], &mut w);
            matvecs += 1;
            alpha.push(dot(&w, &basis[k]));
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    axpy(-c, q, &mut w);
                }
            }
            let b = dot(&w, &w).sqrt();
            ritz = lowest_ritz(&alpha, &beta);
            let estimate = b * ritz.1[k].abs();
            if estimate < config.tol * 0.1 || b < 1e-14 || k + 1 == kmax {
                break;
            }
            beta.push(b);
            let mut next = w.clone();
            next.iter_mut().for_each(|v| *v /= b);
            basis.push(next);
        }
        // Ritz vector and its true residual
        let mut y = vec![0.0; n];
        for (q, c) in basis.iter().zip(&ritz.1) {
            axpy(*c, q, &mut y);
        }
        normalize(&mut y);
        h.apply(&y, &mut w);
        matvecs += 1;
        let theta = dot(&y, &w);
        axpy(-theta, &y, &mut w);
        let residual = dot(&w, &w).sqrt();
        x = y;
        best = (theta, residual);
        if residual < config.tol {
            return Ok(LanczosResult {
                energy: theta,
                residual,
                converged: true,
                matvecs,
                vector: DVector::from_vec(x),
            });
        }
    }
    Ok(LanczosResult {
        energy: best.0,
        residual: best.1,
        converged: false,
        matvecs,
        vector: DVector::from_vec(x),
    })
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Lowest eigenpair of the tridiagonal matrix with diagonal `alpha` and
/// off-diagonal `beta` (one shorter).
fn lowest_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = SymMatrix::from_fn(k, k, |r, c| {
        if r == c {
            alpha[r]
        } else if r.abs_diff(c) == 1 {
            beta[r.min(c)]
        } else {
            0.0
        }
    });
    let eig = crate::linalg::reference_eigen(t).expect("tridiagonal eigensolve");
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    (
        theta,
        eig.eigenvectors.column(idx).iter().copied().collect(),
    )
}

/// Cluster marginals `ρ_i`, `ρ_ij` of the pure state `v`.
///
/// For fermions the entries carry the same string signs as the
/// Hamiltonian, so `primal_energy` of the result equals `⟨v|H|v⟩`.
pub fn exact_marginals(v: &DVector<f64>, problem: &ClusterProblem) -> Result<MarginalSet> {
    let h = GlobalHamiltonian::new(problem, LANCZOS_CAP)?;
    if v.len() != h.dim {
        return Err(Error::InvalidInput(format!(
            "state has length {}, expected {}",
            v.len(),
            h.dim
        )));
    }
    let m = h.m;
    let nc = h.n_clusters;
    let v = v.as_slice();

    let rho_single = (0..nc)
        .into_par_iter()
        .map(|g| {
            let sg = h.stride(g);
            let mut rho = SymMatrix::zeros(m, m);
            for b in 0..h.dim {
                if v[b] == 0.0 {
                    continue;
                }
                let s = (b / sg) % m;
                let base = b - s * sg;
                for t in 0..m {
                    rho[(t, s)] += h.single_sign(b, g, s, t) * v[base + t * sg] * v[b];
                }
            }
            rho
        })
        .collect();

    let rho_pair = pair_list(nc)
        .into_par_iter()
        .map(|(g, d)| {
            let (sg, sd) = (h.stride(g), h.stride(d));
            let mut rho = SymMatrix::zeros(m * m, m * m);
            for b in 0..h.dim {
                if v[b] == 0.0 {
                    continue;
                }
                let (s0, s1) = ((b / sg) % m, (b / sd) % m);
                let base = b - s0 * sg - s1 * sd;
                for t0 in 0..m {
                    for t1 in 0..m {
                        let sign = h.pair_sign(b, g, d, (s0, s1), (t0, t1));
                        rho[(t0 * m + t1, s0 * m + s1)] +=
                            sign * v[base + t0 * sg + t1 * sd] * v[b];
                    }
                }
            }
            rho
        })
        .collect();
    Ok(MarginalSet {
        rho_single,
        rho_pair,
    })
}

/// Ground energy of the noninteracting spinless fermion model: the sum of
/// the negative eigenvalues of the hopping matrix (`−1` on every bond).
pub fn free_fermion_energy(lattice: &Lattice) -> Result<f64> {
    let n = lattice.n_sites();
    let mut t = SymMatrix::zeros(n, n);
    for (a, b) in lattice.bonds() {
        t[(a, b)] -= 1.0;
        t[(b, a)] -= 1.0;
    }
    let eig = hermitian_eigen(&t)?;
    Ok(eig.eigenvalues.iter().filter(|&&l| l < 0.0).sum())
}

/// Whether [`ground_energy_dense`] accepts problems of this size.
pub fn dense_feasible(clustering: &ClusterDecomposition) -> bool {
    (clustering.local_dim() as f64).powi(clustering.n_clusters() as i32) <= DENSE_CAP as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermion_models::build_spinless;
    use crate::linalg::min_eigenvalue;
    use crate::sdp_core::{assemble_g, primal_energy, Moments};
    use crate::spin_models::{build_afh, build_tfi, lift_site, pauli};

    fn chain(n: usize, periodic: bool, cluster: usize) -> (Lattice, ClusterDecomposition) {
        let lat = Lattice::new(vec![n, 1], periodic).unwrap();
        let c = ClusterDecomposition::new(&lat, &[cluster, 1]).unwrap();
        (lat, c)
    }

    /// Global TFI Hamiltonian from Kronecker products of Pauli matrices.
    fn kron_tfi(n: usize, h: f64) -> SymMatrix {
        let lat = Lattice::periodic(&[n, 1]).unwrap();
        let mut out = SymMatrix::zeros(1 << n, 1 << n);
        for (a, b) in lat.bonds() {
            out -= lift_site(&pauli::z(), a, n) * lift_site(&pauli::z(), b, n);
        }
        for s in 0..n {
            out -= lift_site(&pauli::x(), s, n) * h;
        }
        out
    }

    #[test]
    fn small_spectra() {
        // a single site: H = −σˣ
        let (lat, c) = chain(1, false, 1);
        let p = build_tfi(&lat, 1.0, &c).unwrap();
        assert!((ground_energy_dense(&p).unwrap().0 + 1.0).abs() < 1e-14);
        // one Heisenberg bond
        let (lat, c) = chain(2, false, 1);
        let p = build_afh(&lat, &c).unwrap();
        assert!((ground_energy_dense(&p).unwrap().0 + 3.0).abs() < 1e-12);
    }

    #[test]
    fn assembled_hamiltonian_matches_kronecker_products() {
        let want = kron_tfi(6, 0.7);
        for cluster in [1, 2, 3] {
            let (lat, c) = chain(6, true, cluster);
            let p = build_tfi(&lat, 0.7, &c).unwrap();
            let got = GlobalHamiltonian::new(&p, DENSE_CAP).unwrap().to_dense();
            assert!((got - &want).norm() < 1e-12, "cluster {cluster}");
        }
    }

    #[test]
    fn fermion_signs_match_a_global_jordan_wigner_build() {
        use crate::fermion_models::JordanWignerContext;
        for long_range in [false, true] {
            let n = 6;
            let (lat, _) = chain(n, true, 1);
            let jw = JordanWignerContext::new((0..n).collect()).unwrap();
            let mut want = SymMatrix::zeros(1 << n, 1 << n);
            let u = 0.8;
            for (a, b) in lat.bonds() {
                want += jw.hopping(a, b).unwrap();
                if !long_range {
                    want += jw.density_density(a, b).unwrap() * u;
                }
            }
            if long_range {
                for a in 0..n {
                    for b in 0..n {
                        if a != b {
                            want += jw.density_density(a, b).unwrap() * (u / lat.distance(a, b));
                        }
                    }
                }
            }
            for cluster in [1, 2, 3] {
                let (lat, c) = chain(n, true, cluster);
                let p = build_spinless(&lat, u, &c, long_range).unwrap();
                let got = GlobalHamiltonian::new(&p, DENSE_CAP).unwrap().to_dense();
                assert!(
                    (got - &want).norm() < 1e-12,
                    "cluster {cluster}, long range {long_range}"
                );
            }
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let (lat, c) = chain(10, true, 1);
        let p = build_tfi(&lat, 1.0, &c).unwrap();
        let dense = ground_energy_dense(&p).unwrap().0;
        let lz = ground_energy_lanczos(&p, &LanczosConfig::default()).unwrap();
        assert!(lz.converged && lz.residual < 1e-9);
        assert!(
            (lz.energy - dense).abs() < 1e-10,
            "{} vs {dense}",
            lz.energy
        );
        // relabelling the clusters is a similarity transform
        let (lat, c) = chain(10, true, 2);
        let p2 = build_tfi(&lat, 1.0, &c).unwrap();
        let lz2 = ground_energy_lanczos(&p2, &LanczosConfig::default()).unwrap();
        assert!((lz2.energy - dense).abs() < 1e-10);
    }

    #[test]
    fn free_fermions() {
        let lat = Lattice::open(&[2, 1]).unwrap();
        assert!((free_fermion_energy(&lat).unwrap() + 1.0).abs() < 1e-14);
        let lat = Lattice::periodic(&[4, 1]).unwrap();
        assert!((free_fermion_energy(&lat).unwrap() + 2.0).abs() < 1e-14);

        let (lat, c) = chain(8, true, 1);
        let p = build_spinless(&lat, 0.0, &c, false).unwrap();
        let lz = ground_energy_lanczos(&p, &LanczosConfig::default()).unwrap();
        assert!((lz.energy - free_fermion_energy(&lat).unwrap()).abs() < 1e-10);
        let (lat, c) = chain(8, true, 2);
        let p = build_spinless(&lat, 0.0, &c, false).unwrap();
        let lz = ground_energy_lanczos(&p, &LanczosConfig::default()).unwrap();
        assert!((lz.energy - free_fermion_energy(&lat).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn marginal_examples() {
        // |00⟩ on two sites
        let (lat, c) = chain(2, false, 1);
        let p = build_tfi(&lat, 1.0, &c).unwrap();
        let mut v = DVector::zeros(4);
        v[0] = 1.0;
        let ms = exact_marginals(&v, &p).unwrap();
        let mut e = SymMatrix::zeros(4, 4);
        e[(0, 0)] = 1.0;
        assert_eq!(ms.rho_pair[0], e);

        // singlet
        let mut v = DVector::zeros(4);
        v[1] = 0.5f64.sqrt();
        v[2] = -(0.5f64.sqrt());
        let ms = exact_marginals(&v, &p).unwrap();
        let proj = &v * v.transpose();
        assert!((&ms.rho_pair[0] - proj).norm() < 1e-15);
        for r in &ms.rho_single {
            assert!((r - SymMatrix::identity(2, 2) * 0.5).norm() < 1e-15);
        }
    }

    #[test]
    fn exact_marginals_are_feasible_and_reproduce_the_energy() {
        let (l1, c1) = chain(6, true, 1);
        let (l2, c2) = chain(6, true, 2);
        let cases = [
            build_tfi(&l1, 1.0, &c1).unwrap(),
            build_afh(&l2, &c2).unwrap(),
            build_spinless(&l1, 1.5, &c1, false).unwrap(),
            build_spinless(&l2, 1.5, &c2, true).unwrap(),
        ];
        for p in &cases {
            let (e0, v) = ground_energy_dense(p).unwrap();
            let ms = exact_marginals(&v, p).unwrap();
            assert!((primal_energy(p, &ms) - e0).abs() < 1e-10);
            let g = assemble_g(&Moments::for_problem(p).unwrap(), &ms).unwrap();
            assert!(min_eigenvalue(&g).unwrap() > -1e-9);
            for r in &ms.rho_pair {
                assert!(min_eigenvalue(r).unwrap() > -1e-12);
                assert!((r.trace() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rayleigh_quotients_bound_the_ground_energy() {
        let (lat, c) = chain(8, true, 2);
        let p = build_afh(&lat, &c).unwrap();
        let h = GlobalHamiltonian::new(&p, DENSE_CAP).unwrap();
        let e0 = ground_energy_dense(&p).unwrap().0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let v: Vec<f64> = (0..h.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(h.rayleigh_quotient(&v) >= e0 - 1e-12);
        }
    }

    #[test]
    fn size_caps() {
        let (lat, c) = chain(14, true, 1);
        let p = build_tfi(&lat, 1.0, &c).unwrap();
        assert!(matches!(
            ground_energy_dense(&p),
            Err(Error::OracleTooLarge { .. })
        ));
        assert!(!dense_feasible(&c));
    }
}
