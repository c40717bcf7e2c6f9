//! Run configuration: command-line flags override a TOML file, which
//! overrides the defaults. The resolved [`RunConfig`] is echoed into every
//! `result.json`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use varembed_core::fermion_models::build_spinless;
use varembed_core::spin_models::{build_afh, build_tfi};
use varembed_core::{ClusterDecomposition, ClusterProblem, Lattice, SolverConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Transverse-field Ising, `−Σ ZZ − h Σ X`.
    Tfi,
    /// Antiferromagnetic Heisenberg, `Σ (XX + YY + ZZ)`.
    Afh,
    /// Spinless fermions with nearest-neighbour interaction `U`.
    Sf,
    /// Spinless fermions with `U / distance` interaction between all pairs.
    Lrsf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    General,
    Ti,
}

/// Every setting as an optional value, shared by the flag parser and the
/// config file.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Lattice extents, e.g. `20x1`.
    #[arg(long)]
    pub lattice: Option<String>,
    /// Cluster extents, e.g. `2x1`.
    #[arg(long)]
    pub cluster: Option<String>,
    /// Periodic boundary conditions (default true).
    #[arg(long)]
    pub periodic: Option<bool>,
    /// Transverse field of the TFI model.
    #[arg(long)]
    pub h: Option<f64>,
    /// Interaction strength of the fermion models.
    #[arg(long = "u", short = 'U')]
    pub u: Option<f64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Maximum number of iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eps_decay: Option<f64>,
    /// Per-site energy change regarded as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iterations below `tol` before stopping; 0 runs all `iters`.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Primal sweeps per dual update.
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub symmetrized_site_update: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also compute the exact ground energy (dense or Lanczos).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub oracle: Option<bool>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write `checkpoint.bin` every this many iterations (0 = off).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub resume_from: Option<PathBuf>,
}

impl PartialConfig {
    pub fn from_toml_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Values present in `self` win over those in `base`.
    pub fn over(self, base: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($($f:ident),*) => { PartialConfig { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            model,
            lattice,
            cluster,
            periodic,
            h,
            u,
            solver,
            iters,
            mu,
            nu,
            eps,
            eps_decay,
            tol,
            patience,
            inner_iters,
            symmetrized_site_update,
            seed,
            threads,
            oracle,
            output_dir,
            checkpoint_every,
            resume_from
        )
    }
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub lattice: String,
    pub cluster: String,
    pub periodic: bool,
    pub h: f64,
    pub u: f64,
    pub solver: SolverKind,
    pub iters: usize,
    pub mu: f64,
    pub nu: f64,
    pub eps: f64,
    pub eps_decay: f64,
    pub tol: f64,
    pub patience: usize,
    pub inner_iters: usize,
    pub symmetrized_site_update: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub oracle: bool,
    pub output_dir: PathBuf,
    pub checkpoint_every: usize,
    pub resume_from: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(p: PartialConfig) -> CliResult<Self> {
        let d = SolverConfig::default();
        let cfg = RunConfig {
            model: p
                .model
                .ok_or_else(|| CliError::Config("--model is required".into()))?,
            lattice: p
                .lattice
                .ok_or_else(|| CliError::Config("--lattice is required".into()))?,
            cluster: p.cluster.unwrap_or_else(|| "1x1".into()),
            periodic: p.periodic.unwrap_or(true),
            h: p.h.unwrap_or(1.0),
            u: p.u.unwrap_or(1.0),
            solver: p.solver.unwrap_or(SolverKind::General),
            iters: p.iters.unwrap_or(d.max_iters),
            mu: p.mu.unwrap_or(d.mu),
            nu: p.nu.unwrap_or(d.nu),
            eps: p.eps.unwrap_or(d.eps),
            eps_decay: p.eps_decay.unwrap_or(d.eps_decay),
            tol: p.tol.unwrap_or(d.energy_tol),
            patience: p.patience.unwrap_or(d.patience),
            inner_iters: p.inner_iters.unwrap_or(d.inner_iters),
            symmetrized_site_update: p.symmetrized_site_update.unwrap_or(false),
            seed: p.seed.unwrap_or(d.seed),
            threads: p.threads,
            oracle: p.oracle.unwrap_or(false),
            output_dir: p.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            checkpoint_every: p.checkpoint_every.unwrap_or(0),
            resume_from: p.resume_from,
        };
        cfg.solver_config().validate()?;
        if cfg.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            mu: self.mu,
            nu: self.nu,
            eps: self.eps,
            eps_decay: self.eps_decay,
            max_iters: self.iters,
            energy_tol: self.tol,
            patience: self.patience,
            inner_iters: self.inner_iters,
            seed: self.seed,
            symmetrized_site_update: self.symmetrized_site_update,
        }
    }

    pub fn lattice(&self) -> CliResult<Lattice> {
        let dims = Lattice::parse_dims(&self.lattice)?;
        Ok(Lattice::new(dims, self.periodic)?)
    }

    /// The model parameter relevant to `model` (`h` or `U`).
    pub fn parameter(&self) -> f64 {
        match self.model {
            Model::Tfi => self.h,
            Model::Afh => 0.0,
            Model::Sf | Model::Lrsf => self.u,
        }
    }

    pub fn build_problem(&self) -> CliResult<ClusterProblem> {
        let lattice = self.lattice()?;
        let shape = Lattice::parse_dims(&self.cluster)?;
        let clustering = ClusterDecomposition::new(&lattice, &shape)?;
        let problem = match self.model {
            Model::Tfi => build_tfi(&lattice, self.h, &clustering)?,
            Model::Afh => build_afh(&lattice, &clustering)?,
            Model::Sf => build_spinless(&lattice, self.u, &clustering, false)?,
            Model::Lrsf => build_spinless(&lattice, self.u, &clustering, true)?,
        };
        if self.solver == SolverKind::Ti && !problem.translation_invariant {
            return Err(CliError::Config(
                "--solver ti needs a periodic lattice with a translation-invariant Hamiltonian"
                    .into(),
            ));
        }
        Ok(problem)
    }
}
