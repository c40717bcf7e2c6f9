//! A single solver run with its output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use varembed_core::oracle::{
    dense_feasible, ground_energy_dense, ground_energy_lanczos, LanczosConfig,
};
use varembed_core::sdp_core::{feasibility_error, ti_feasibility_error, Moments};
use varembed_core::solver::has_converged;
use varembed_core::{
    AdmmSolver, ClusterProblem, ConvergenceRecord, Iterate, SolverState, StopReason, TiSolver,
    TiState,
};

use crate::checkpoint::{self, Snapshot};
use crate::config::{RunConfig, SolverKind};
use crate::error::{CliError, CliResult};

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const RESULT_FILE: &str = "result.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CSV_HEADER: &str = "iter,energy_per_site,energy_delta,feas_error,wall_ms";

/// Progress is logged every this many iterations.
const LOG_EVERY: usize = 500;

/// Contents of `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub config: RunConfig,
    pub n_sites: usize,
    pub n_clusters: usize,
    pub local_dim: usize,
    pub energy_per_site: f64,
    pub iterations_run: usize,
    /// `"converged"` or `"max_iters"`.
    pub stop_reason: String,
    pub final_feas_error: f64,
    pub oracle_energy_per_site: Option<f64>,
    /// `"dense"` or `"lanczos"`.
    pub oracle_method: Option<String>,
    pub oracle_residual: Option<f64>,
    /// Oracle minus relaxation energy per site.
    pub relaxation_error_per_site: Option<f64>,
    /// Whether the relaxation stayed below the oracle (slack `1e-6` per site).
    pub lower_bound_ok: Option<bool>,
    pub wall_ms: f64,
    pub code_version: String,
    pub eigen_backend: String,
    pub problem_fingerprint: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn format_record(r: &ConvergenceRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.iter, r.energy_per_site, r.energy_delta, r.feas_error, r.wall_ms
    )
}

struct CsvLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvLog {
    fn create(path: PathBuf, history: &[ConvergenceRecord]) -> CliResult<Self> {
        let file = File::create(&path).map_err(CliError::io(&path))?;
        let mut log = CsvLog {
            path,
            out: BufWriter::new(file),
        };
        log.line(CSV_HEADER)?;
        for r in history {
            log.line(&format_record(r))?;
        }
        Ok(log)
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.out, "{s}").map_err(CliError::io(&self.path))
    }

    fn flush(&mut self) -> CliResult<()> {
        self.out.flush().map_err(CliError::io(&self.path))
    }
}

struct Driven {
    energy_per_site: f64,
    stop: StopReason,
    snapshot: Snapshot,
}

fn drive<S: Iterate>(
    solver: &mut S,
    energy: impl Fn(&S) -> f64,
    snapshot: impl Fn(&S) -> Snapshot,
    cfg: &RunConfig,
    fp: &[u8; 32],
    csv: &mut CsvLog,
) -> CliResult<Driven> {
    let ckpt = cfg.output_dir.join(CHECKPOINT_FILE);
    let stop = loop {
        if has_converged(solver.history(), solver.config()) {
            break StopReason::Converged;
        }
        if solver.iteration() >= solver.config().max_iters {
            break StopReason::MaxIters;
        }
        let rec = solver.step()?;
        csv.line(&format_record(&rec))?;
        if rec.iter % LOG_EVERY == 0 {
            log::info!(
                "iter {:>6}  E/site {:.10}  dE {:+.3e}  feas {:.3e}",
                rec.iter,
                rec.energy_per_site,
                rec.energy_delta,
                rec.feas_error
            );
        }
        if cfg.checkpoint_every > 0 && rec.iter % cfg.checkpoint_every == 0 {
            csv.flush()?;
            checkpoint::save(&ckpt, &snapshot(solver), fp)?;
        }
    };
    csv.flush()?;
    let snap = snapshot(solver);
    if cfg.checkpoint_every > 0 {
        checkpoint::save(&ckpt, &snap, fp)?;
    }
    Ok(Driven {
        energy_per_site: energy(solver),
        stop,
        snapshot: snap,
    })
}

fn initial_snapshot(
    cfg: &RunConfig,
    problem: &ClusterProblem,
    fp: &[u8; 32],
) -> CliResult<Snapshot> {
    if let Some(path) = &cfg.resume_from {
        log::info!("resuming from {}", path.display());
        return checkpoint::load(path, fp, problem);
    }
    let n = problem.basis.len();
    Ok(match cfg.solver {
        SolverKind::General => Snapshot::General(SolverState::initial(
            problem.n_clusters(),
            problem.local_dim,
            n,
        )),
        SolverKind::Ti => {
            Snapshot::Ti(TiState::initial(problem.n_clusters(), problem.local_dim, n))
        }
    })
}

fn final_feas(snapshot: &Snapshot) -> CliResult<f64> {
    if let Some(r) = snapshot.history().last() {
        return Ok(r.feas_error);
    }
    Ok(match snapshot {
        Snapshot::General(s) => feasibility_error(&s.marginals, &s.aux)?,
        Snapshot::Ti(s) => ti_feasibility_error(&s.marginals, &s.aux)?,
    })
}

/// Runs the configured solver, writing `convergence.csv`, `result.json`
/// and (if enabled) `checkpoint.bin` into the output directory.
pub fn run(cfg: &RunConfig) -> CliResult<ResultRecord> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cfg.threads {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
    };
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> CliResult<ResultRecord> {
    let started = Instant::now();
    let problem = cfg.build_problem()?;
    let fp = checkpoint::fingerprint(&problem, cfg.solver);
    std::fs::create_dir_all(&cfg.output_dir).map_err(CliError::io(&cfg.output_dir))?;
    let snapshot = initial_snapshot(cfg, &problem, &fp)?;
    let mut csv = CsvLog::create(cfg.output_dir.join(CONVERGENCE_FILE), snapshot.history())?;
    let moments = Moments::for_problem(&problem)?;
    let sc = cfg.solver_config();

    let driven = match snapshot {
        Snapshot::General(state) => {
            let mut s = AdmmSolver::with_state(&problem, sc, moments, state)?;
            drive(
                &mut s,
                |s| s.energy_per_site(),
                |s| Snapshot::General(s.state().clone()),
                cfg,
                &fp,
                &mut csv,
            )?
        }
        Snapshot::Ti(state) => {
            let mut s = TiSolver::with_state(&problem, sc, moments, state)?;
            drive(
                &mut s,
                |s| s.energy_per_site(),
                |s| Snapshot::Ti(s.state().clone()),
                cfg,
                &fp,
                &mut csv,
            )?
        }
    };

    let n_sites = problem.n_sites();
    let (oracle, method, residual) = if cfg.oracle {
        let (e0, method, residual) = oracle_energy(&problem)?;
        (Some(e0 / n_sites as f64), Some(method.to_owned()), residual)
    } else {
        (None, None, None)
    };
    let relax = oracle.map(|o| o - driven.energy_per_site);
    let record = ResultRecord {
        config: cfg.clone(),
        n_sites,
        n_clusters: problem.n_clusters(),
        local_dim: problem.local_dim,
        energy_per_site: driven.energy_per_site,
        iterations_run: driven.snapshot.iteration(),
        stop_reason: match driven.stop {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
        }
        .into(),
        final_feas_error: final_feas(&driven.snapshot)?,
        oracle_energy_per_site: oracle,
        oracle_method: method,
        oracle_residual: residual,
        relaxation_error_per_site: relax,
        lower_bound_ok: relax.map(|r| r >= -1e-6),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        code_version: env!("CARGO_PKG_VERSION").into(),
        eigen_backend: varembed_core::linalg::eigen_backend().into(),
        problem_fingerprint: hex(&fp),
    };
    if record.lower_bound_ok == Some(false) {
        log::warn!(
            "relaxation energy exceeds the oracle by {:.3e} per site",
            -relax.unwrap_or(0.0)
        );
    }
    write_json(&cfg.output_dir.join(RESULT_FILE), &record)?;
    Ok(record)
}

/// Exact ground energy: dense when small enough, Lanczos otherwise.
pub fn oracle_energy(problem: &ClusterProblem) -> CliResult<(f64, &'static str, Option<f64>)> {
    if dense_feasible(&problem.clustering) {
        let (e0, _) = ground_energy_dense(problem)?;
        return Ok((e0, "dense", None));
    }
    let res = ground_energy_lanczos(problem, &LanczosConfig::default())?;
    if !res.converged {
        log::warn!("Lanczos stopped with residual {:.3e}", res.residual);
    }
    Ok((res.energy, "lanczos", Some(res.residual)))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}
