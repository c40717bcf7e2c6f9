//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varembed_core::linalg::SymMatrix;
use varembed_core::spin_models::build_tfi;
use varembed_core::{ClusterDecomposition, ClusterProblem, Lattice};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

/// First block row of a random symmetric block-circulant matrix.
pub fn circulant_row(blocks: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<SymMatrix> {
    let mut row = vec![SymMatrix::zeros(n, n); blocks];
    for j in 0..=blocks / 2 {
        if j == 0 || 2 * j == blocks {
            row[j] = random_sym(n, rng);
        } else {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            row[blocks - j] = a.transpose();
            row[j] = a;
        }
    }
    row
}

/// Periodic TFI chain of `n` sites cut into clusters of `cluster` sites.
pub fn tfi_chain(n: usize, cluster: usize, h: f64) -> ClusterProblem {
    let lattice = Lattice::periodic(&[n, 1]).expect("valid lattice");
    let clustering = ClusterDecomposition::new(&lattice, &[cluster, 1]).expect("valid clusters");
    build_tfi(&lattice, h, &clustering).expect("valid model")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulant_row_is_symmetric_under_reflection() {
        let row = circulant_row(5, 3, &mut rng(1));
        for j in 1..5 {
            assert_eq!(row[5 - j], row[j].transpose());
        }
        assert_eq!(row[0], row[0].transpose());
    }
}
