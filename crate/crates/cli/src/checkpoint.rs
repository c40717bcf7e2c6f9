//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `VEMBCKPT` |
//! | 4     | format version (`u32`, currently 1) |
//! | 1     | state kind: 0 general, 1 translation-invariant |
//! | 32    | SHA-256 fingerprint of the problem |
//! | 8     | completed iterations (`u64`) |
//! | 8     | history length `n` (`u64`), then `n` records of `u64` iter and four `f64` |
//! | 8     | matrix count (`u64`), then per matrix: rows, cols (`u64`) and column-major `f64` data |
//! | 32    | SHA-256 of everything above |
//!
//! The matrices are stored in a fixed order per kind, see [`Snapshot`].

use std::path::Path;

use sha2::{Digest, Sha256};
use varembed_core::sdp_core::{DualState, MarginalSet, TiDualState, TiMarginals};
use varembed_core::{
    ClusterProblem, ConvergenceRecord, SolverState, Statistics, SymMatrix, TiState,
};

use crate::config::SolverKind;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"VEMBCKPT";
pub const VERSION: u32 = 1;

/// State of either solver.
#[derive(Clone, Debug, PartialEq)]
pub enum Snapshot {
    General(SolverState),
    Ti(TiState),
}

impl Snapshot {
    fn kind(&self) -> u8 {
        match self {
            Snapshot::General(_) => 0,
            Snapshot::Ti(_) => 1,
        }
    }

    pub fn iteration(&self) -> usize {
        match self {
            Snapshot::General(s) => s.iteration,
            Snapshot::Ti(s) => s.iteration,
        }
    }

    pub fn history(&self) -> &[ConvergenceRecord] {
        match self {
            Snapshot::General(s) => &s.history,
            Snapshot::Ti(s) => &s.history,
        }
    }

    /// General: `ρ_i`, `ρ_ij`, `ρ̃_ij`, `X`, `Λ_ij`, `Λ¹_ij`, `Λ²_ij`.
    /// Translation-invariant: `ρ_0`, `ρ_0j`, `ρ̃_0j`, `X_0j`, `Λ`, `Λ¹`, `Λ²`.
    fn groups(&self) -> Vec<Vec<&SymMatrix>> {
        match self {
            Snapshot::General(s) => vec![
                s.marginals.rho_single.iter().collect(),
                s.marginals.rho_pair.iter().collect(),
                s.aux.iter().collect(),
                vec![&s.duals.x],
                s.duals.lambda_pair.iter().collect(),
                s.duals.lambda_left.iter().collect(),
                s.duals.lambda_right.iter().collect(),
            ],
            Snapshot::Ti(s) => vec![
                vec![&s.marginals.rho0],
                s.marginals.rho_pair.iter().collect(),
                s.aux.iter().collect(),
                s.duals.x_row.iter().collect(),
                s.duals.lambda_pair.iter().collect(),
                s.duals.lambda_left.iter().collect(),
                s.duals.lambda_right.iter().collect(),
            ],
        }
    }
}

/// Hash of everything that defines the optimization problem and the
/// variable layout.
pub fn fingerprint(problem: &ClusterProblem, solver: SolverKind) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"varembed-problem-v1");
    h.update([match solver {
        SolverKind::General => 0u8,
        SolverKind::Ti => 1,
    }]);
    h.update([match problem.statistics {
        Statistics::Spin => 0u8,
        Statistics::Fermion => 1,
    }]);
    for v in [problem.n_clusters(), problem.local_dim, problem.basis.len()] {
        h.update((v as u64).to_le_bytes());
    }
    h.update(
        problem
            .clustering
            .lattice()
            .dims()
            .iter()
            .flat_map(|d| (*d as u64).to_le_bytes())
            .collect::<Vec<_>>(),
    );
    h.update(
        problem
            .clustering
            .shape()
            .iter()
            .flat_map(|d| (*d as u64).to_le_bytes())
            .collect::<Vec<_>>(),
    );
    for m in &problem.h_single {
        hash_matrix(&mut h, m);
    }
    for ((g, d), m) in &problem.h_pair {
        h.update((*g as u64).to_le_bytes());
        h.update((*d as u64).to_le_bytes());
        hash_matrix(&mut h, m);
    }
    h.finalize().into()
}

fn hash_matrix(h: &mut Sha256, m: &SymMatrix) {
    for x in m.iter() {
        h.update(x.to_le_bytes());
    }
}

pub fn encode(snapshot: &Snapshot, fingerprint: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(snapshot.kind());
    out.extend_from_slice(fingerprint);
    out.extend_from_slice(&(snapshot.iteration() as u64).to_le_bytes());
    let hist = snapshot.history();
    out.extend_from_slice(&(hist.len() as u64).to_le_bytes());
    for r in hist {
        out.extend_from_slice(&(r.iter as u64).to_le_bytes());
        for x in [r.energy_per_site, r.energy_delta, r.feas_error, r.wall_ms] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let groups = snapshot.groups();
    let count: usize = groups.iter().map(Vec::len).sum();
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for m in groups.into_iter().flatten() {
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for x in m.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CliError::Checkpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> CliResult<usize> {
        usize::try_from(self.u64()?).map_err(|_| CliError::Checkpoint("length overflow".into()))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Parses and verifies a checkpoint against the expected problem.
pub fn decode(bytes: &[u8], expected: &[u8; 32], problem: &ClusterProblem) -> CliResult<Snapshot> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CliError::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let actual: [u8; 32] = Sha256::digest(body).into();
    if actual.as_slice() != digest {
        return Err(CliError::Checkpoint(
            "checksum mismatch (truncated or corrupted file)".into(),
        ));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CliError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let kind = r.take(1)?[0];
    if r.take(32)? != expected.as_slice() {
        return Err(CliError::Checkpoint(
            "problem fingerprint differs from the checkpoint; refusing to resume".into(),
        ));
    }
    let iteration = r.usize()?;
    let n_hist = r.usize()?;
    let mut history = Vec::with_capacity(n_hist.min(1 << 20));
    for _ in 0..n_hist {
        history.push(ConvergenceRecord {
            iter: r.usize()?,
            energy_per_site: r.f64()?,
            energy_delta: r.f64()?,
            feas_error: r.f64()?,
            wall_ms: r.f64()?,
        });
    }
    let count = r.usize()?;
    let mut mats = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let (rows, cols) = (r.usize()?, r.usize()?);
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| CliError::Checkpoint("matrix size overflow".into()))?;
        let data = (0..len).map(|_| r.f64()).collect::<CliResult<Vec<_>>>()?;
        mats.push(SymMatrix::from_vec(rows, cols, data));
    }
    if r.pos != body.len() {
        return Err(CliError::Checkpoint("trailing bytes".into()));
    }

    let nc = problem.n_clusters();
    let m = problem.local_dim;
    let bad = || CliError::Checkpoint("matrix layout does not match the problem".into());
    let mut it = mats.into_iter();
    let mut grab = |k: usize, dim: usize| -> CliResult<Vec<SymMatrix>> {
        let v: Vec<SymMatrix> = it.by_ref().take(k).collect();
        if v.len() != k || v.iter().any(|x| x.shape() != (dim, dim)) {
            return Err(bad());
        }
        Ok(v)
    };
    let np = nc * (nc - 1) / 2;
    let snapshot = match kind {
        0 => {
            let rho_single = grab(nc, m)?;
            let rho_pair = grab(np, m * m)?;
            let aux = grab(np, m * m)?;
            let xdim = nc * problem.basis.len();
            let x = grab(1, xdim)?.pop().ok_or_else(bad)?;
            let lambda_pair = grab(np, m * m)?;
            let lambda_left = grab(np, m)?;
            let lambda_right = grab(np, m)?;
            Snapshot::General(SolverState {
                marginals: MarginalSet {
                    rho_single,
                    rho_pair,
                },
                aux,
                duals: DualState {
                    x,
                    lambda_pair,
                    lambda_left,
                    lambda_right,
                },
                iteration,
                history,
            })
        }
        1 => {
            let rho0 = grab(1, m)?.pop().ok_or_else(bad)?;
            let rho_pair = grab(nc - 1, m * m)?;
            let aux = grab(nc - 1, m * m)?;
            let x_row = grab(nc, problem.basis.len())?;
            let lambda_pair = grab(nc - 1, m * m)?;
            let lambda_left = grab(nc - 1, m)?;
            let lambda_right = grab(nc - 1, m)?;
            Snapshot::Ti(TiState {
                marginals: TiMarginals { rho0, rho_pair },
                aux,
                duals: TiDualState {
                    x_row,
                    lambda_pair,
                    lambda_left,
                    lambda_right,
                },
                iteration,
                history,
            })
        }
        k => return Err(CliError::Checkpoint(format!("unknown state kind {k}"))),
    };
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(snapshot)
}

/// Writes atomically through a temporary file in the same directory.
pub fn save(path: &Path, snapshot: &Snapshot, fingerprint: &[u8; 32]) -> CliResult<()> {
    let tmp = path.with_extension("bin.tmp");
    std::fs::write(&tmp, encode(snapshot, fingerprint)).map_err(CliError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn load(path: &Path, fingerprint: &[u8; 32], problem: &ClusterProblem) -> CliResult<Snapshot> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes, fingerprint, problem)
}
