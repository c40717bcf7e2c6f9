//! End-to-end use of the public API through the crate-root re-exports.

use varembed_core::oracle::{exact_marginals, ground_energy_dense};
use varembed_core::sdp_core::{assemble_g, feasibility_error, primal_energy, Moments};
use varembed_core::spin_models::{build_afh, build_tfi};
use varembed_core::{
    solve, solve_ti, AdmmSolver, ClusterDecomposition, Error, Iterate, Lattice, SolverConfig,
    StopReason,
};

fn ring(n: usize, cluster: usize) -> (Lattice, ClusterDecomposition) {
    let l = Lattice::periodic(&[n, 1]).unwrap();
    let c = ClusterDecomposition::new(&l, &[cluster, 1]).unwrap();
    (l, c)
}

#[test]
fn exact_state_is_feasible_and_bounds_the_relaxation() {
    let (l, c) = ring(6, 2);
    let p = build_afh(&l, &c).unwrap();
    let (e0, v) = ground_energy_dense(&p).unwrap();
    let marg = exact_marginals(&v, &p).unwrap();
    assert!((primal_energy(&p, &marg) - e0).abs() < 1e-9);
    let g = assemble_g(&Moments::for_problem(&p).unwrap(), &marg).unwrap();
    let min = g.symmetric_eigenvalues().min();
    assert!(min > -1e-9, "moment matrix eigenvalue {min}");

    let out = solve(&p, &SolverConfig::default()).unwrap();
    assert!(out.energy_per_site <= e0 / 6.0 + 1e-6);
    assert_eq!(out.stop, StopReason::Converged);
    let feas = feasibility_error(&out.state.marginals, &out.state.aux).unwrap();
    // the stopping rule watches the energy only
    assert!(feas < 1e-3, "feasibility {feas:e}");
}

#[test]
fn stepping_by_hand_matches_solve() {
    let (l, c) = ring(8, 2);
    let p = build_tfi(&l, 0.7, &c).unwrap();
    let cfg = SolverConfig {
        max_iters: 40,
        patience: 0,
        ..SolverConfig::default()
    };
    let mut s = AdmmSolver::new(&p, cfg.clone()).unwrap();
    for _ in 0..40 {
        s.step().unwrap();
    }
    let out = solve(&p, &cfg).unwrap();
    assert_eq!(s.energy_per_site(), out.energy_per_site);
    let strip = |h: &[varembed_core::ConvergenceRecord]| -> Vec<(usize, f64, f64)> {
        h.iter()
            .map(|r| (r.iter, r.energy_per_site, r.feas_error))
            .collect()
    };
    assert_eq!(strip(s.history()), strip(&out.state.history));
}

#[test]
fn ti_solver_rejects_open_chains() {
    let l = Lattice::open(&[6, 1]).unwrap();
    let c = ClusterDecomposition::new(&l, &[1, 1]).unwrap();
    let p = build_tfi(&l, 1.0, &c).unwrap();
    assert!(matches!(
        solve_ti(&p, &SolverConfig::default()),
        Err(Error::InvalidConfig(_))
    ));
}
