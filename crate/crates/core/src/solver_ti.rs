//! Translation-invariant variant of the solver.
//!
//! Only `ρ_0`, the pair marginals `ρ_{0,j}` for every displacement `j ≠ 0`
//! and the first block row `X_{0,j}` of the dual are stored. The dual's
//! projection uses the block Fourier transform: a block-circulant `X` is
//! block-diagonal in momentum space, so each Fourier block is projected
//! separately and transformed back.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, block_dft_forward, block_dft_inverse, embed_first, embed_second, hermitian_part,
    max_abs, pair_quadratic_inverse, partial_trace_first, partial_trace_second, psd_project,
    BipartiteShape, HermMatrix, SymMatrix, SYMMETRY_TOL,
};
use crate::sdp_core::{
    ti_energy_per_site, ti_feasibility_error, ti_g_row, Moments, TiDualState, TiMarginals,
};
use crate::solver::{
    check_divergence, finish_site, run_to_completion, ConvergenceRecord, Iterate, SolveOutcome,
    SolverConfig,
};
use crate::spin_models::ClusterProblem;

/// Imaginary residue tolerated after the inverse transform, relative to the
/// largest real entry (with a floor of one).
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// Reduced primal, auxiliary and dual variables.
#[derive(Clone, Debug, PartialEq)]
pub struct TiState {
    pub marginals: TiMarginals,
    /// `ρ̃_{0,j}` at index `j − 1`.
    pub aux: Vec<SymMatrix>,
    pub duals: TiDualState,
    pub iteration: usize,
    pub history: Vec<ConvergenceRecord>,
}

impl TiState {
    pub fn initial(n_clusters: usize, m: usize, n: usize) -> Self {
        let marginals = TiMarginals::uniform(n_clusters, m);
        Self {
            aux: marginals.rho_pair.clone(),
            marginals,
            duals: TiDualState::initial(n_clusters, m, n),
            iteration: 0,
            history: Vec::new(),
        }
    }
}

fn to_complex(a: &SymMatrix) -> HermMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

fn negate_index(k: &[usize], grid: &[usize]) -> usize {
    k.iter()
        .zip(grid)
        .fold(0, |acc, (&c, &g)| acc * g + (g - c) % g)
}

/// `X ← Π(X − εG)` for a block-circulant `X` given by its first block row.
///
/// Blocks are indexed row-major over the cluster grid `grid`. Each Fourier
/// block is Hermitized (erroring on asymmetry above [`SYMMETRY_TOL`]) and
/// projected; only one block of each conjugate pair `{k, −k}` is
/// eigendecomposed.
pub fn update_x_ti(
    x_row: &[SymMatrix],
    g_row: &[SymMatrix],
    eps: f64,
    grid: &[usize],
) -> Result<Vec<SymMatrix>> {
    let total: usize = grid.iter().product();
    if x_row.len() != total || g_row.len() != total {
        return Err(Error::InvalidInput(format!(
            "block rows of length {} and {} for a grid of {total}",
            x_row.len(),
            g_row.len()
        )));
    }
    let shifted: Vec<HermMatrix> = x_row
        .iter()
        .zip(g_row)
        .map(|(x, g)| to_complex(&(x - g * eps)))
        .collect();
    let hat = block_dft_forward(&shifted, grid)?;
    let points = crate::linalg::lattice_points(grid);

    let projected: Vec<(usize, HermMatrix)> = points
        .par_iter()
        .enumerate()
        .filter(|(k, pt)| negate_index(pt, grid) >= *k)
        .map(|(k, _)| {
            let h = &hat[k];
            let asym = asymmetry(h);
            let tol = SYMMETRY_TOL * max_abs(h).max(1.0);
            if asym > tol {
                return Err(Error::BrokenSymmetry {
                    residue: asym,
                    tolerance: tol,
                });
            }
            let h = hermitian_part(h);
            let y = if negate_index(&points[k], grid) == k {
                // self-conjugate momentum: the block is real symmetric
                to_complex(&psd_project(&h.map(|z| z.re))?)
            } else {
                psd_project(&h)?
            };
            Ok((k, y))
        })
        .collect::<Result<_>>()?;

    let mut y_blocks: Vec<HermMatrix> = vec![HermMatrix::zeros(0, 0); total];
    for (k, y) in projected {
        let kbar = negate_index(&points[k], grid);
        if kbar != k {
            y_blocks[kbar] = y.conjugate();
        }
        y_blocks[k] = y;
    }
    let back = block_dft_inverse(&y_blocks, grid)?;
    back.iter()
        .map(|b| {
            let re = b.map(|z| z.re);
            let im = b.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            let tol = IMAG_RESIDUE_TOL * max_abs(&re).max(1.0);
            if im > tol {
                return Err(Error::BrokenSymmetry {
                    residue: im,
                    tolerance: tol,
                });
            }
            Ok(re)
        })
        .collect()
}

/// Driver for the translation-invariant solver.
pub struct TiSolver<'a> {
    problem: &'a ClusterProblem,
    moments: Moments,
    config: SolverConfig,
    state: TiState,
    h_pair: Vec<SymMatrix>,
    scale: f64,
    clock: Instant,
    clock_offset: f64,
    last_energy: f64,
}

impl<'a> TiSolver<'a> {
    pub fn new(problem: &'a ClusterProblem, config: SolverConfig) -> Result<Self> {
        let moments = Moments::for_problem(problem)?;
        let state = TiState::initial(problem.n_clusters(), problem.local_dim, moments.n());
        Self::with_state(problem, config, moments, state)
    }

    pub fn with_state(
        problem: &'a ClusterProblem,
        config: SolverConfig,
        moments: Moments,
        state: TiState,
    ) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        if !problem.translation_invariant {
            return Err(Error::InvalidConfig(
                "the translation-invariant solver needs a periodic, translation-invariant problem"
                    .into(),
            ));
        }
        let nc = problem.n_clusters();
        if nc < 2 {
            return Err(Error::InvalidConfig(format!(
                "the relaxation needs at least two clusters, got {nc}"
            )));
        }
        if state.duals.x_row.len() != nc || state.marginals.rho_pair.len() != nc - 1 {
            return Err(Error::InvalidState(
                "state does not match the problem".into(),
            ));
        }
        let mm = problem.local_dim * problem.local_dim;
        let h_pair = (1..nc)
            .map(|j| {
                problem
                    .pair_term(0, j)
                    .cloned()
                    .unwrap_or_else(|| SymMatrix::zeros(mm, mm))
            })
            .collect();
        let last_energy = match state.history.last() {
            Some(r) => r.energy_per_site,
            None => ti_energy_per_site(problem, &state.marginals),
        };
        let clock_offset = state.history.last().map_or(0.0, |r| r.wall_ms);
        Ok(Self {
            problem,
            moments,
            config,
            state,
            h_pair,
            scale: problem.hamiltonian_scale(),
            clock: Instant::now(),
            clock_offset,
            last_energy,
        })
    }

    pub fn state(&self) -> &TiState {
        &self.state
    }

    pub fn into_state(self) -> TiState {
        self.state
    }

    pub fn energy_per_site(&self) -> f64 {
        self.last_energy
    }

    fn primal_sweep(&mut self, h0: &SymMatrix, h_pair: &[SymMatrix]) -> Result<()> {
        let cfg = &self.config;
        let (mu, nu) = (cfg.mu, cfg.nu);
        let m = self.problem.local_dim;
        let shape = BipartiteShape::square(m);
        let st = &mut self.state;
        let np = st.marginals.rho_pair.len();

        let rho0 = st.marginals.rho0.clone();
        let duals = &st.duals;
        let aux = &st.aux;
        st.marginals.rho_pair = (0..np)
            .into_par_iter()
            .map(|k| {
                let left = embed_second(&(&rho0 * nu - &duals.lambda_left[k]), shape)?;
                let right = embed_first(&(&rho0 * nu - &duals.lambda_right[k]), shape)?;
                let b = &aux[k] * mu + left + right + &duals.lambda_pair[k] - &h_pair[k];
                pair_quadratic_inverse(&b, shape, mu, nu).map_err(|e| e.at_pair(0, k + 1))
            })
            .collect::<Result<_>>()?;

        let rho = &st.marginals.rho_pair;
        st.aux = (0..np)
            .into_par_iter()
            .map(|k| {
                psd_project(&(&rho[k] - &duals.lambda_pair[k] / mu))
                    .map_err(|e| e.at_pair(0, k + 1))
            })
            .collect::<Result<_>>()?;

        let traces: Vec<(SymMatrix, SymMatrix)> = rho
            .par_iter()
            .map(|r| {
                Ok((
                    partial_trace_second(r, shape)?,
                    partial_trace_first(r, shape)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut acc = -h0;
        for (k, (t1, t2)) in traces.iter().enumerate() {
            if cfg.symmetrized_site_update {
                acc += (t1 * nu + &duals.lambda_left[k] + t2 * nu + &duals.lambda_right[k]) * 0.5;
            } else {
                acc += t1 * nu + &duals.lambda_left[k];
            }
        }
        st.marginals.rho0 = finish_site(acc / (nu * np as f64), m);

        let rho0 = &st.marginals.rho0;
        for (k, (t1, t2)) in traces.iter().enumerate() {
            st.duals.lambda_pair[k] += (&st.aux[k] - &rho[k]) * mu;
            st.duals.lambda_left[k] += (t1 - rho0) * nu;
            st.duals.lambda_right[k] += (t2 - rho0) * nu;
        }
        Ok(())
    }
}

impl Iterate for TiSolver<'_> {
    fn step(&mut self) -> Result<ConvergenceRecord> {
        let x_row = &self.state.duals.x_row;
        let h0 = &self.problem.h_single[0] - self.moments.site_effective(&x_row[0]);
        let h_pair: Vec<SymMatrix> = self
            .h_pair
            .par_iter()
            .enumerate()
            .map(|(k, h)| h - self.moments.pair_effective(&x_row[k + 1]))
            .collect();
        for _ in 0..self.config.inner_iters {
            self.primal_sweep(&h0, &h_pair)?;
        }
        let g_row = ti_g_row(&self.moments, &self.state.marginals);
        let eps = self.config.step_size(self.state.iteration);
        self.state.duals.x_row = update_x_ti(
            &self.state.duals.x_row,
            &g_row,
            eps,
            self.problem.clustering.grid(),
        )?;

        let iter = self.state.iteration + 1;
        let energy = ti_energy_per_site(self.problem, &self.state.marginals);
        check_divergence(energy, self.scale, iter)?;
        let rec = ConvergenceRecord {
            iter,
            energy_per_site: energy,
            energy_delta: energy - self.last_energy,
            feas_error: ti_feasibility_error(&self.state.marginals, &self.state.aux)?,
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

/// Runs the translation-invariant solver from the standard initial point.
pub fn solve_ti(problem: &ClusterProblem, config: &SolverConfig) -> Result<SolveOutcome<TiState>> {
    let mut solver = TiSolver::new(problem, config.clone())?;
    let stop = run_to_completion(&mut solver, |_, _| Ok(()))?;
    Ok(SolveOutcome {
        energy_per_site: solver.energy_per_site(),
        iterations: solver.state.iteration,
        stop,
        state: solver.into_state(),
    })
}
