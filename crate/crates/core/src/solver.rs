//! ADMM with interleaved projected dual ascent for the general (not
//! translation-reduced) relaxation.
//!
//! One iteration runs six phases in order: effective Hamiltonians, pair
//! marginals, auxiliary projections, site marginals, local multipliers and
//! the global dual. Loops inside a phase are independent across pairs or
//! clusters and run on the rayon pool.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    embed_first, embed_second, pair_quadratic_inverse, partial_trace_first, partial_trace_second,
    psd_project, BipartiteShape, SymMatrix,
};
use crate::sdp_core::{
    assemble_g, effective_hamiltonians, feasibility_error, pair_list, primal_energy, DualState,
    MarginalSet, Moments,
};
use crate::spin_models::ClusterProblem;

/// Energies beyond this multiple of the Hamiltonian scale count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Penalty on `ρ_ij = ρ̃_ij`.
    pub mu: f64,
    /// Penalty on the partial-trace constraints.
    pub nu: f64,
    /// Dual step on `X`.
    pub eps: f64,
    /// Step schedule `ε_t = ε / (1 + eps_decay · t)`; zero keeps it fixed.
    pub eps_decay: f64,
    pub max_iters: usize,
    /// Per-site energy change regarded as converged.
    pub energy_tol: f64,
    /// Consecutive iterations below `energy_tol` needed to stop; zero
    /// disables the stopping rule.
    pub patience: usize,
    /// Primal/local-dual sweeps per update of `X` (1 is the practical scheme).
    pub inner_iters: usize,
    pub seed: u64,
    /// Translation-invariant solver only: also average in the `Tr_1`/`Λ^(2)`
    /// terms when updating `ρ_0`.
    pub symmetrized_site_update: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 10.0,
            nu: 10.0,
            eps: 2.0,
            eps_decay: 0.0,
            max_iters: 10_000,
            energy_tol: 1e-6,
            patience: 50,
            inner_iters: 1,
            seed: 0,
            symmetrized_site_update: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive(self.mu, "mu")?;
        positive(self.nu, "nu")?;
        positive(self.eps, "eps")?;
        if !(self.eps_decay.is_finite() && self.eps_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_decay must be non-negative, got {}",
                self.eps_decay
            )));
        }
        if self.energy_tol.is_nan() || self.energy_tol < 0.0 {
            return Err(Error::InvalidConfig(
                "energy_tol must be non-negative".into(),
            ));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidConfig(
                "inner_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Dual step at (0-based) iteration `t`.
    pub fn step_size(&self, t: usize) -> f64 {
        self.eps / (1.0 + self.eps_decay * t as f64)
    }
}

/// One line of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub iter: usize,
    pub energy_per_site: f64,
    pub energy_delta: f64,
    pub feas_error: f64,
    /// Cumulative wall-clock time of the run, in milliseconds.
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The energy change stayed below tolerance for `patience` iterations.
    Converged,
    MaxIters,
}

/// Full primal, auxiliary and dual variables of the general solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub marginals: MarginalSet,
    /// `ρ̃_ij`, indexed like the pair marginals.
    pub aux: Vec<SymMatrix>,
    pub duals: DualState,
    /// Completed iterations.
    pub iteration: usize,
    pub history: Vec<ConvergenceRecord>,
}

impl SolverState {
    /// Multipliers zero, `ρ_i = I/m`, `ρ̃_ij = ρ_ij = I/m²`, `X = I`.
    pub fn initial(n_clusters: usize, m: usize, n: usize) -> Self {
        let marginals = MarginalSet::uniform(n_clusters, m);
        Self {
            aux: marginals.rho_pair.clone(),
            marginals,
            duals: DualState::initial(n_clusters, m, n),
            iteration: 0,
            history: Vec::new(),
        }
    }
}

fn check_clusters(n_clusters: usize) -> Result<()> {
    if n_clusters < 2 {
        return Err(Error::InvalidConfig(format!(
            "the relaxation needs at least two clusters, got {n_clusters}"
        )));
    }
    Ok(())
}

/// `ρ_ij ← (μ + νA₁*A₁ + νA₂*A₂)⁻¹ (μρ̃ + A₁*[νρ_i − Λ¹] + A₂*[νρ_j − Λ²] + Λ − H'_ij)`.
pub fn update_pair_marginals(
    state: &mut SolverState,
    h_pair: &[SymMatrix],
    config: &SolverConfig,
) -> Result<()> {
    let nc = state.marginals.n_clusters();
    let m = state.marginals.rho_single[0].nrows();
    let shape = BipartiteShape::square(m);
    let (mu, nu) = (config.mu, config.nu);
    let singles = &state.marginals.rho_single;
    let aux = &state.aux;
    let duals = &state.duals;
    let updated: Vec<SymMatrix> = pair_list(nc)
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let rhs = (|| {
                let left = embed_second(&(&singles[i] * nu - &duals.lambda_left[k]), shape)?;
                let right = embed_first(&(&singles[j] * nu - &duals.lambda_right[k]), shape)?;
                let b = &aux[k] * mu + left + right + &duals.lambda_pair[k] - &h_pair[k];
                pair_quadratic_inverse(&b, shape, mu, nu)
            })();
            rhs.map_err(|e| e.at_pair(i, j))
        })
        .collect::<Result<_>>()?;
    state.marginals.rho_pair = updated;
    Ok(())
}

/// `ρ̃_ij ← Π(ρ_ij − Λ_ij/μ)`.
pub fn update_aux(state: &mut SolverState, config: &SolverConfig) -> Result<()> {
    let nc = state.marginals.n_clusters();
    let mu = config.mu;
    let rho = &state.marginals.rho_pair;
    let lambda = &state.duals.lambda_pair;
    state.aux = pair_list(nc)
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| psd_project(&(&rho[k] - &lambda[k] / mu)).map_err(|e| e.at_pair(i, j)))
        .collect::<Result<_>>()?;
    Ok(())
}

fn partial_traces(rho_pair: &[SymMatrix], m: usize) -> Result<Vec<(SymMatrix, SymMatrix)>> {
    let shape = BipartiteShape::square(m);
    rho_pair
        .par_iter()
        .map(|r| {
            Ok((
                partial_trace_second(r, shape)?,
                partial_trace_first(r, shape)?,
            ))
        })
        .collect()
}

/// Closed-form trace-constrained least squares for every `ρ_i`.
pub fn update_site_marginals(
    state: &mut SolverState,
    h_single: &[SymMatrix],
    config: &SolverConfig,
) -> Result<()> {
    let nc = state.marginals.n_clusters();
    check_clusters(nc)?;
    let m = state.marginals.rho_single[0].nrows();
    let nu = config.nu;
    let traces = partial_traces(&state.marginals.rho_pair, m)?;
    let mut acc: Vec<SymMatrix> = h_single.iter().map(|h| -h).collect();
    for (k, (i, j)) in pair_list(nc).into_iter().enumerate() {
        let (t1, t2) = &traces[k];
        acc[i] += t1 * nu + &state.duals.lambda_left[k];
        acc[j] += t2 * nu + &state.duals.lambda_right[k];
    }
    let scale = 1.0 / (nu * (nc - 1) as f64);
    for (rho, a) in state.marginals.rho_single.iter_mut().zip(acc) {
        *rho = finish_site(a * scale, m);
    }
    Ok(())
}

/// `ρ' + z I` with `z = (1 − Tr ρ')/m`.
pub(crate) fn finish_site(mut rho: SymMatrix, m: usize) -> SymMatrix {
    let z = (1.0 - rho.trace()) / m as f64;
    for p in 0..m {
        rho[(p, p)] += z;
    }
    rho
}

/// `Λ += μ(ρ̃ − ρ)`, `Λ¹ += ν(A₁ρ_ij − ρ_i)`, `Λ² += ν(A₂ρ_ij − ρ_j)`.
pub fn update_local_duals(state: &mut SolverState, config: &SolverConfig) -> Result<()> {
    let nc = state.marginals.n_clusters();
    let m = state.marginals.rho_single[0].nrows();
    let (mu, nu) = (config.mu, config.nu);
    let traces = partial_traces(&state.marginals.rho_pair, m)?;
    let singles = &state.marginals.rho_single;
    for (k, (i, j)) in pair_list(nc).into_iter().enumerate() {
        state.duals.lambda_pair[k] += (&state.aux[k] - &state.marginals.rho_pair[k]) * mu;
        state.duals.lambda_left[k] += (&traces[k].0 - &singles[i]) * nu;
        state.duals.lambda_right[k] += (&traces[k].1 - &singles[j]) * nu;
    }
    Ok(())
}

/// Projected ascent step `X ← Π(X − ε G)` on the partial dual.
///
/// The dual objective has gradient `−G` in `X`, so ascent moves against
/// `G`; at a fixed point `G ⪰ 0` and `⟨X, G⟩ = 0`.
pub fn update_global_dual(state: &mut SolverState, moments: &Moments, eps: f64) -> Result<()> {
    let g = assemble_g(moments, &state.marginals)?;
    state.duals.x = psd_project(&(&state.duals.x - g * eps))?;
    Ok(())
}

/// A solver that advances one iteration at a time.
pub trait Iterate {
    fn step(&mut self) -> Result<ConvergenceRecord>;
    fn history(&self) -> &[ConvergenceRecord];
    fn config(&self) -> &SolverConfig;
    /// Completed iterations.
    fn iteration(&self) -> usize;
}

/// True once the last `patience` records all moved less than `energy_tol`.
pub fn has_converged(history: &[ConvergenceRecord], config: &SolverConfig) -> bool {
    config.patience > 0
        && history.len() >= config.patience
        && history[history.len() - config.patience..]
            .iter()
            .all(|r| r.energy_delta.abs() < config.energy_tol)
}

/// Steps until convergence or `max_iters`, handing each record to `observe`.
pub fn run_to_completion<S: Iterate>(
    solver: &mut S,
    mut observe: impl FnMut(&S, &ConvergenceRecord) -> Result<()>,
) -> Result<StopReason> {
    loop {
        if has_converged(solver.history(), solver.config()) {
            return Ok(StopReason::Converged);
        }
        if solver.iteration() >= solver.config().max_iters {
            return Ok(StopReason::MaxIters);
        }
        let rec = solver.step()?;
        observe(solver, &rec)?;
    }
}

pub(crate) fn check_divergence(energy: f64, scale: f64, iteration: usize) -> Result<()> {
    if !energy.is_finite() || energy.abs() > DIVERGENCE_FACTOR * scale {
        return Err(Error::Divergence { iteration, energy });
    }
    Ok(())
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct SolveOutcome<S> {
    pub energy_per_site: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub state: S,
}

/// Driver for the general solver.
pub struct AdmmSolver<'a> {
    problem: &'a ClusterProblem,
    moments: Moments,
    config: SolverConfig,
    state: SolverState,
    scale: f64,
    clock: Instant,
    clock_offset: f64,
    last_energy: f64,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(problem: &'a ClusterProblem, config: SolverConfig) -> Result<Self> {
        let moments = Moments::for_problem(problem)?;
        let state = SolverState::initial(problem.n_clusters(), problem.local_dim, moments.n());
        Self::with_state(problem, config, moments, state)
    }

    /// Resumes from an existing state (for example a checkpoint).
    pub fn with_state(
        problem: &'a ClusterProblem,
        config: SolverConfig,
        moments: Moments,
        state: SolverState,
    ) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        check_clusters(problem.n_clusters())?;
        let n = moments.n();
        let nc = problem.n_clusters();
        if state.duals.x.nrows() != nc * n || state.marginals.n_clusters() != nc {
            return Err(Error::InvalidState(
                "state does not match the problem".into(),
            ));
        }
        let last_energy = match state.history.last() {
            Some(r) => r.energy_per_site,
            None => primal_energy(problem, &state.marginals) / problem.n_sites() as f64,
        };
        let clock_offset = state.history.last().map_or(0.0, |r| r.wall_ms);
        Ok(Self {
            problem,
            moments,
            config,
            state,
            scale: problem.hamiltonian_scale(),
            clock: Instant::now(),
            clock_offset,
            last_energy,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn energy_per_site(&self) -> f64 {
        self.last_energy
    }
}

impl Iterate for AdmmSolver<'_> {
    fn step(&mut self) -> Result<ConvergenceRecord> {
        let cfg = &self.config;
        let (h_single, h_pair) =
            effective_hamiltonians(self.problem, &self.moments, &self.state.duals.x)?;
        for _ in 0..cfg.inner_iters {
            update_pair_marginals(&mut self.state, &h_pair, cfg)?;
            update_aux(&mut self.state, cfg)?;
            update_site_marginals(&mut self.state, &h_single, cfg)?;
            update_local_duals(&mut self.state, cfg)?;
        }
        let eps = cfg.step_size(self.state.iteration);
        update_global_dual(&mut self.state, &self.moments, eps)?;

        let iter = self.state.iteration + 1;
        let energy =
            primal_energy(self.problem, &self.state.marginals) / self.problem.n_sites() as f64;
        check_divergence(energy, self.scale, iter)?;
        let rec = ConvergenceRecord {
            iter,
            energy_per_site: energy,
            energy_delta: energy - self.last_energy,
            feas_error: feasibility_error(&self.state.marginals, &self.state.aux)?,
            wall_ms: self.clock_offset + self.clock.elapsed().as_secs_f64() * 1e3,
        };
        self.last_energy = energy;
        self.state.iteration = iter;
        self.state.history.push(rec);
        Ok(rec)
    }

    fn history(&self) -> &[ConvergenceRecord] {
        &self.state.history
    }

    fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn iteration(&self) -> usize {
        self.state.iteration
    }
}

/// Runs the general solver from the standard initial point.
pub fn solve(problem: &ClusterProblem, config: &SolverConfig) -> Result<SolveOutcome<SolverState>> {
    let mut solver = AdmmSolver::new(problem, config.clone())?;
    let stop = run_to_completion(&mut solver, |_, _| Ok(()))?;
    Ok(SolveOutcome {
        energy_per_site: solver.energy_per_site(),
        iterations: solver.state.iteration,
        stop,
        state: solver.into_state(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_dot, min_eigenvalue, reference_eigen};
    use crate::sdp_core::{pair_count, pair_index};
    use crate::spin_models::{build_tfi, ClusterDecomposition, Lattice};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = SymMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    fn density(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = SymMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = &a * a.transpose();
        let t = p.trace();
        p / t
    }

    fn random_state(nc: usize, m: usize, rng: &mut ChaCha8Rng) -> SolverState {
        let mut st = SolverState::initial(nc, m, m * m);
        for r in st.marginals.rho_single.iter_mut() {
            *r = density(m, rng);
        }
        let np = st.marginals.rho_pair.len();
        for k in 0..np {
            st.marginals.rho_pair[k] = density(m * m, rng);
            st.aux[k] = density(m * m, rng);
            st.duals.lambda_pair[k] = sym(m * m, rng);
            st.duals.lambda_left[k] = sym(m, rng);
            st.duals.lambda_right[k] = sym(m, rng);
        }
        st
    }

    fn tfi(n: usize, h: f64, cluster: usize) -> ClusterProblem {
        let lat = Lattice::periodic(&[n, 1]).unwrap();
        let c = ClusterDecomposition::new(&lat, &[cluster, 1]).unwrap();
        build_tfi(&lat, h, &c).unwrap()
    }

    /// Per-pair augmented Lagrangian whose minimizer the pair update returns.
    #[allow(clippy::too_many_arguments)]
    fn pair_objective(
        r: &SymMatrix,
        st: &SolverState,
        k: usize,
        i: usize,
        j: usize,
        h: &SymMatrix,
        mu: f64,
        nu: f64,
    ) -> f64 {
        let shape = BipartiteShape::square(st.marginals.rho_single[0].nrows());
        let d = &st.aux[k] - r;
        let a1 = partial_trace_second(r, shape).unwrap() - &st.marginals.rho_single[i];
        let a2 = partial_trace_first(r, shape).unwrap() - &st.marginals.rho_single[j];
        frobenius_dot(h, r)
            + frobenius_dot(&st.duals.lambda_pair[k], &d)
            + 0.5 * mu * d.norm_squared()
            + frobenius_dot(&st.duals.lambda_left[k], &a1)
            + 0.5 * nu * a1.norm_squared()
            + frobenius_dot(&st.duals.lambda_right[k], &a2)
            + 0.5 * nu * a2.norm_squared()
    }

    /// Terms of the augmented Lagrangian that depend on `ρ_i`.
    fn site_objective(rho: &SymMatrix, i: usize, st: &SolverState, h: &SymMatrix, nu: f64) -> f64 {
        let nc = st.marginals.n_clusters();
        let shape = BipartiteShape::square(rho.nrows());
        let mut f = frobenius_dot(h, rho);
        for (k, (a, b)) in pair_list(nc).into_iter().enumerate() {
            let (t, lam) = if a == i {
                (
                    partial_trace_second(&st.marginals.rho_pair[k], shape).unwrap(),
                    &st.duals.lambda_left[k],
                )
            } else if b == i {
                (
                    partial_trace_first(&st.marginals.rho_pair[k], shape).unwrap(),
                    &st.duals.lambda_right[k],
                )
            } else {
                continue;
            };
            let d = t - rho;
            f += frobenius_dot(lam, &d) + 0.5 * nu * d.norm_squared();
        }
        f
    }

    #[test]
    fn pair_update_matches_dense_solve() {
        let cfg = SolverConfig {
            mu: 1.0,
            nu: 1.0,
            ..Default::default()
        };
        let mut st = SolverState::initial(2, 2, 4);
        st.aux[0] = SymMatrix::zeros(4, 4);
        update_pair_marginals(&mut st, &[SymMatrix::zeros(4, 4)], &cfg).unwrap();
        assert!((&st.marginals.rho_pair[0] - SymMatrix::identity(4, 4) / 5.0).norm() < 1e-14);

        // the same update as an explicit 16×16 linear system
        let shape = BipartiteShape::square(2);
        let op = |r: &SymMatrix| -> SymMatrix {
            let t1 = partial_trace_second(r, shape).unwrap();
            let t2 = partial_trace_first(r, shape).unwrap();
            r * cfg.mu
                + embed_second(&t1, shape).unwrap() * cfg.nu
                + embed_first(&t2, shape).unwrap() * cfg.nu
        };
        let mut dense = DMatrix::<f64>::zeros(16, 16);
        for c in 0..16 {
            let mut e = SymMatrix::zeros(4, 4);
            e[c] = 1.0;
            dense.set_column(c, &DVector::from_column_slice(op(&e).as_slice()));
        }
        let half = SymMatrix::identity(2, 2) * 0.5;
        let rhs = embed_second(&half, shape).unwrap() + embed_first(&half, shape).unwrap();
        let sol = dense
            .lu()
            .solve(&DVector::from_column_slice(rhs.as_slice()))
            .unwrap();
        let sol = SymMatrix::from_column_slice(4, 4, sol.as_slice());
        assert!((&st.marginals.rho_pair[0] - sol).norm() < 1e-12);
    }

    #[test]
    fn pair_update_reproduces_a_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SolverConfig {
            mu: 2.0,
            nu: 3.0,
            ..Default::default()
        };
        let shape = BipartiteShape::square(2);
        let mut st = random_state(2, 2, &mut rng);
        let h = sym(4, &mut rng);
        let target = density(4, &mut rng);
        // choose ρ̃ so that `target` satisfies the first-order condition
        let lhs = crate::linalg::pair_quadratic_forward(&target, shape, cfg.mu, cfg.nu).unwrap();
        let rest = embed_second(
            &(&st.marginals.rho_single[0] * cfg.nu - &st.duals.lambda_left[0]),
            shape,
        )
        .unwrap()
            + embed_first(
                &(&st.marginals.rho_single[1] * cfg.nu - &st.duals.lambda_right[0]),
                shape,
            )
            .unwrap()
            + &st.duals.lambda_pair[0]
            - &h;
        st.aux[0] = (lhs - rest) / cfg.mu;
        update_pair_marginals(&mut st, std::slice::from_ref(&h), &cfg).unwrap();
        assert!((&st.marginals.rho_pair[0] - &target).norm() < 1e-12);
    }

    #[test]
    fn pair_update_minimizes_its_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SolverConfig {
            mu: 10.0,
            nu: 10.0,
            ..Default::default()
        };
        let mut st = random_state(3, 2, &mut rng);
        let h: Vec<SymMatrix> = (0..3).map(|_| sym(4, &mut rng)).collect();
        update_pair_marginals(&mut st, &h, &cfg).unwrap();
        for (k, (i, j)) in pair_list(3).into_iter().enumerate() {
            let r = &st.marginals.rho_pair[k];
            let best = pair_objective(r, &st, k, i, j, &h[k], cfg.mu, cfg.nu);
            for _ in 0..100 {
                let probe = r + sym(4, &mut rng) * 0.05;
                assert!(
                    pair_objective(&probe, &st, k, i, j, &h[k], cfg.mu, cfg.nu) >= best - 1e-12
                );
            }
        }
    }

    #[test]
    fn aux_update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SolverConfig::default();
        let mut st = random_state(2, 2, &mut rng);
        st.duals.lambda_pair[0] = SymMatrix::zeros(4, 4);
        update_aux(&mut st, &cfg).unwrap();
        assert!((&st.aux[0] - &st.marginals.rho_pair[0]).norm() < 1e-12);

        st.marginals.rho_pair[0] = -SymMatrix::identity(4, 4);
        update_aux(&mut st, &cfg).unwrap();
        assert_eq!(st.aux[0], SymMatrix::zeros(4, 4));

        let mut st = random_state(2, 2, &mut rng);
        st.marginals.rho_pair[0] = sym(4, &mut rng);
        update_aux(&mut st, &cfg).unwrap();
        let c = &st.marginals.rho_pair[0] - &st.duals.lambda_pair[0] / cfg.mu;
        let best = (&st.aux[0] - &c).norm();
        assert!(min_eigenvalue(&st.aux[0]).unwrap() >= -1e-12);
        for _ in 0..100 {
            let probe = psd_project(&(&st.aux[0] + sym(4, &mut rng) * 0.1)).unwrap();
            assert!((&probe - &c).norm() >= best - 1e-12);
        }
    }

    #[test]
    fn site_update_examples() {
        let cfg = SolverConfig::default();
        let mut st = SolverState::initial(3, 4, 16);
        for r in st.marginals.rho_pair.iter_mut() {
            *r = SymMatrix::zeros(16, 16);
        }
        update_site_marginals(&mut st, &vec![SymMatrix::zeros(4, 4); 3], &cfg).unwrap();
        for r in &st.marginals.rho_single {
            assert!((r - SymMatrix::identity(4, 4) / 4.0).norm() < 1e-15);
        }

        let mut single = SolverState::initial(1, 2, 4);
        assert!(matches!(
            update_site_marginals(&mut single, &[SymMatrix::zeros(2, 2)], &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn site_update_has_unit_trace_and_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = SolverConfig {
            nu: 3.0,
            ..Default::default()
        };
        let mut st = random_state(4, 2, &mut rng);
        let h: Vec<SymMatrix> = (0..4).map(|_| sym(2, &mut rng)).collect();
        update_site_marginals(&mut st, &h, &cfg).unwrap();
        for (i, rho) in st.marginals.rho_single.iter().enumerate() {
            assert!((rho.trace() - 1.0).abs() < 1e-14);
            let best = site_objective(rho, i, &st, &h[i], cfg.nu);
            for _ in 0..100 {
                let mut d = sym(2, &mut rng);
                let t = d.trace() / 2.0;
                for p in 0..2 {
                    d[(p, p)] -= t;
                }
                let probe = rho + d * 0.1;
                assert!((probe.trace() - 1.0).abs() < 1e-14);
                assert!(site_objective(&probe, i, &st, &h[i], cfg.nu) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn local_dual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = SolverConfig {
            mu: 2.0,
            nu: 5.0,
            ..Default::default()
        };

        // product state with ρ̃ = ρ is feasible
        let a = density(2, &mut rng);
        let b = density(2, &mut rng);
        let mut st = SolverState::initial(2, 2, 4);
        st.marginals = MarginalSet::product(vec![a, b]);
        st.aux = st.marginals.rho_pair.clone();
        st.duals.lambda_left[0] = sym(2, &mut rng);
        let before = st.duals.clone();
        update_local_duals(&mut st, &cfg).unwrap();
        for (x, y) in st.duals.lambda_left.iter().zip(&before.lambda_left) {
            assert!((x - y).norm() < 1e-15);
        }
        assert!(st.duals.lambda_pair[0].norm() == 0.0);
        assert!(st.duals.lambda_right[0].norm() < 1e-15);

        // loop oracle
        let mut st = random_state(2, 3, &mut rng);
        let mut want = st.duals.clone();
        for p in 0..9 {
            for q in 0..9 {
                want.lambda_pair[0][(p, q)] +=
                    cfg.mu * (st.aux[0][(p, q)] - st.marginals.rho_pair[0][(p, q)]);
            }
        }
        for p in 0..3 {
            for q in 0..3 {
                let (mut t1, mut t2) = (0.0, 0.0);
                for s in 0..3 {
                    t1 += st.marginals.rho_pair[0][(p * 3 + s, q * 3 + s)];
                    t2 += st.marginals.rho_pair[0][(s * 3 + p, s * 3 + q)];
                }
                want.lambda_left[0][(p, q)] += cfg.nu * (t1 - st.marginals.rho_single[0][(p, q)]);
                want.lambda_right[0][(p, q)] += cfg.nu * (t2 - st.marginals.rho_single[1][(p, q)]);
            }
        }
        update_local_duals(&mut st, &cfg).unwrap();
        assert!((&st.duals.lambda_pair[0] - &want.lambda_pair[0]).norm() < 1e-13);
        assert!((&st.duals.lambda_left[0] - &want.lambda_left[0]).norm() < 1e-13);
        assert!((&st.duals.lambda_right[0] - &want.lambda_right[0]).norm() < 1e-13);
    }

    #[test]
    fn global_dual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let problem = tfi(3, 1.0, 1);
        let moments = Moments::for_problem(&problem).unwrap();
        let mut st = random_state(3, 2, &mut rng);
        st.duals.x = psd_project(&sym(12, &mut rng)).unwrap();
        let x0 = st.duals.x.clone();
        update_global_dual(&mut st, &moments, 0.0).unwrap();
        assert!((&st.duals.x - &x0).norm() < 1e-12);

        // X = 0: a negative semidefinite G is reflected, a PSD one is cut to zero
        let mut st = SolverState::initial(3, 2, 4);
        let g = assemble_g(&moments, &st.marginals).unwrap();
        assert!(min_eigenvalue(&g).unwrap() > -1e-12);
        st.duals.x = SymMatrix::zeros(12, 12);
        update_global_dual(&mut st, &moments, 2.0).unwrap();
        assert!(st.duals.x.norm() < 1e-12);
        for r in st
            .marginals
            .rho_single
            .iter_mut()
            .chain(st.marginals.rho_pair.iter_mut())
        {
            *r = -&*r;
        }
        st.duals.x = SymMatrix::zeros(12, 12);
        update_global_dual(&mut st, &moments, 2.0).unwrap();
        assert!((&st.duals.x - &g * 2.0).norm() < 1e-12);

        // against a second eigensolver
        let mut st = random_state(3, 2, &mut rng);
        st.duals.x = psd_project(&sym(12, &mut rng)).unwrap();
        let g = assemble_g(&moments, &st.marginals).unwrap();
        let arg = &st.duals.x - &g * 0.7;
        let eig = reference_eigen(arg.clone()).unwrap();
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let want =
            &eig.eigenvectors * SymMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        update_global_dual(&mut st, &moments, 0.7).unwrap();
        assert!((&st.duals.x - want).norm() < 1e-10);
        assert!(min_eigenvalue(&st.duals.x).unwrap() >= -1e-8 * st.duals.x.norm());
    }

    #[test]
    fn invariants_hold_along_a_run() {
        let problem = tfi(6, 1.0, 1);
        let cfg = SolverConfig {
            max_iters: 30,
            patience: 0,
            ..Default::default()
        };
        let mut s = AdmmSolver::new(&problem, cfg).unwrap();
        for _ in 0..30 {
            s.step().unwrap();
            let st = s.state();
            for a in &st.aux {
                assert!(min_eigenvalue(a).unwrap() >= -1e-10);
            }
            for r in &st.marginals.rho_single {
                assert!((r.trace() - 1.0).abs() < 1e-13);
            }
            let x = &st.duals.x;
            assert!(min_eigenvalue(x).unwrap() >= -1e-8 * x.norm().max(1.0));
        }
    }

    #[test]
    fn pair_updates_do_not_depend_on_scheduling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SolverConfig::default();
        let base = random_state(5, 2, &mut rng);
        let h: Vec<SymMatrix> = (0..pair_count(5)).map(|_| sym(4, &mut rng)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let mut st = base.clone();
            pool.install(|| update_pair_marginals(&mut st, &h, &cfg))
                .unwrap();
            st.marginals.rho_pair
        };
        let one = run(1);
        let many = run(4);
        for (a, b) in one.iter().zip(&many) {
            assert!((a - b).norm() < 1e-13);
        }
        // one pair at a time, in reverse order
        for k in (0..pair_count(5)).rev() {
            let (i, j) = pair_list(5)[k];
            let mut solo = SolverState::initial(2, 2, 4);
            solo.marginals.rho_single = vec![
                base.marginals.rho_single[i].clone(),
                base.marginals.rho_single[j].clone(),
            ];
            solo.aux = vec![base.aux[k].clone()];
            solo.duals.lambda_pair = vec![base.duals.lambda_pair[k].clone()];
            solo.duals.lambda_left = vec![base.duals.lambda_left[k].clone()];
            solo.duals.lambda_right = vec![base.duals.lambda_right[k].clone()];
            update_pair_marginals(&mut solo, std::slice::from_ref(&h[k]), &cfg).unwrap();
            assert!((&solo.marginals.rho_pair[0] - &one[k]).norm() < 1e-13);
        }
    }

    #[test]
    fn one_iteration_preserves_translation_invariance() {
        let problem = tfi(4, 0.7, 1);
        let mut s = AdmmSolver::new(&problem, SolverConfig::default()).unwrap();
        for _ in 0..3 {
            s.step().unwrap();
        }
        let st = s.state();
        let nc = 4;
        for (i, j) in pair_list(nc) {
            let reference = &st.marginals.rho_pair[pair_index(0, j - i, nc)];
            assert!(
                (st.marginals.pair(i, j) - reference).norm() < 1e-12,
                "pair ({i},{j})"
            );
        }
        for r in &st.marginals.rho_single {
            assert!((r - &st.marginals.rho_single[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_at_zero_field() {
        let cfg = SolverConfig::default();
        // two sites share a single bond
        let out = solve(&tfi(2, 0.0, 1), &cfg).unwrap();
        assert!(
            (out.energy_per_site * 2.0 + 1.0).abs() < 1e-5,
            "{}",
            out.energy_per_site
        );
        let out = solve(&tfi(4, 0.0, 1), &cfg).unwrap();
        assert!(
            (out.energy_per_site + 1.0).abs() < 1e-5,
            "{}",
            out.energy_per_site
        );
        assert_eq!(out.stop, StopReason::Converged);
    }

    #[test]
    fn reference_inner_loop_agrees_with_practical_scheme() {
        let problem = tfi(3, 1.0, 1);
        let practical = SolverConfig {
            max_iters: 4000,
            patience: 0,
            ..Default::default()
        };
        let reference = SolverConfig {
            inner_iters: 25,
            max_iters: 1500,
            patience: 0,
            ..Default::default()
        };
        let a = solve(&problem, &practical).unwrap().energy_per_site;
        let b = solve(&problem, &reference).unwrap().energy_per_site;
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn runs_are_deterministic() {
        let problem = tfi(6, 1.0, 1);
        let cfg = SolverConfig {
            max_iters: 40,
            ..Default::default()
        };
        let a = solve(&problem, &cfg).unwrap();
        let b = solve(&problem, &cfg).unwrap();
        assert_eq!(a.state.marginals, b.state.marginals);
        assert_eq!(a.state.duals, b.state.duals);
        for (x, y) in a.state.history.iter().zip(&b.state.history) {
            assert_eq!(
                (x.energy_per_site, x.energy_delta, x.feas_error),
                (y.energy_per_site, y.energy_delta, y.feas_error)
            );
        }
    }

    #[test]
    fn stopping_rule_and_divergence_guard() {
        let cfg = SolverConfig {
            patience: 3,
            energy_tol: 1e-6,
            ..Default::default()
        };
        let rec = |d: f64| ConvergenceRecord {
            iter: 0,
            energy_per_site: 0.0,
            energy_delta: d,
            feas_error: 0.0,
            wall_ms: 0.0,
        };
        assert!(!has_converged(&[rec(1.0), rec(0.0), rec(0.0)], &cfg));
        assert!(has_converged(
            &[rec(1.0), rec(0.0), rec(0.0), rec(-1e-7)],
            &cfg
        ));
        let off = SolverConfig {
            patience: 0,
            ..cfg.clone()
        };
        assert!(!has_converged(&[rec(0.0); 10], &off));

        assert!(check_divergence(5.0, 1.0, 1).is_ok());
        assert!(matches!(
            check_divergence(2e6, 1.0, 7),
            Err(Error::Divergence { iteration: 7, .. })
        ));
        assert!(check_divergence(f64::NAN, 1.0, 1).is_err());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let problem = tfi(4, 1.0, 1);
        for cfg in [
            SolverConfig {
                mu: 0.0,
                ..Default::default()
            },
            SolverConfig {
                nu: -1.0,
                ..Default::default()
            },
            SolverConfig {
                eps: f64::NAN,
                ..Default::default()
            },
            SolverConfig {
                inner_iters: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                solve(&problem, &cfg),
                Err(Error::InvalidConfig(_))
            ));
        }
    }
}
