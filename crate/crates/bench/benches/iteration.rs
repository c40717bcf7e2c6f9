use criterion::{criterion_group, criterion_main, Criterion};
use varembed_bench::tfi_chain;
use varembed_core::{AdmmSolver, Iterate, SolverConfig, TiSolver};

fn config() -> SolverConfig {
    SolverConfig {
        patience: 0,
        max_iters: usize::MAX,
        ..SolverConfig::default()
    }
}

fn general(c: &mut Criterion) {
    let problem = tfi_chain(20, 2, 1.0);
    let mut solver = AdmmSolver::new(&problem, config()).unwrap();
    c.bench_function("general_step_tfi20_2x1", |b| {
        b.iter(|| solver.step().unwrap())
    });
}

fn translation_invariant(c: &mut Criterion) {
    let mut g = c.benchmark_group("ti_step");
    g.sample_size(20);
    for (n, cluster) in [(100, 1), (100, 2), (20, 4)] {
        let problem = tfi_chain(n, cluster, 1.0);
        let mut solver = TiSolver::new(&problem, config()).unwrap();
        g.bench_function(format!("tfi{n}_{cluster}x1"), |b| {
            b.iter(|| solver.step().unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, general, translation_invariant);
criterion_main!(benches);
