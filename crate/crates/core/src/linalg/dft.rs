//! Entrywise discrete Fourier transforms of block families indexed by a
//! periodic lattice, with unitary `1/sqrt(N)` normalization.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::HermMatrix;
use crate::error::{Error, Result};

/// Row-major multi-indices of a lattice with extents `dims`.
pub fn lattice_points(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut coords = vec![0; dims.len()];
            for axis in (0..dims.len()).rev() {
                coords[axis] = idx % dims[axis];
                idx /= dims[axis];
            }
            coords
        })
        .collect()
}

/// `X̂_k = N^{-1/2} Σ_j exp(-2πi j·k / M) X_j` over the lattice `dims`.
pub fn block_dft_forward(blocks: &[HermMatrix], dims: &[usize]) -> Result<Vec<HermMatrix>> {
    transform(blocks, dims, FftDirection::Forward)
}

/// Inverse of [`block_dft_forward`] (conjugate kernel, same normalization).
pub fn block_dft_inverse(blocks: &[HermMatrix], dims: &[usize]) -> Result<Vec<HermMatrix>> {
    transform(blocks, dims, FftDirection::Inverse)
}

fn transform(blocks: &[HermMatrix], dims: &[usize], dir: FftDirection) -> Result<Vec<HermMatrix>> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total == 0 || blocks.len() != total {
        return Err(Error::InvalidInput(format!(
            "{} blocks do not match lattice {:?}",
            blocks.len(),
            dims
        )));
    }
    let (r, c) = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != (r, c)) {
        return Err(Error::InvalidInput("ragged block dimensions".into()));
    }
    let nn = r * c;
    let mut data: Vec<Complex64> = Vec::with_capacity(total * nn);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }

    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..dims.len() {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let fft = planner.plan_fft(len, dir);
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                for e in 0..nn {
                    for (t, slot) in buf.iter_mut().enumerate() {
                        *slot = data[(base + t * inner) * nn + e];
                    }
                    fft.process(&mut buf);
                    for (t, v) in buf.iter().enumerate() {
                        data[(base + t * inner) * nn + e] = *v;
                    }
                }
            }
        }
    }

    let scale = 1.0 / (total as f64).sqrt();
    Ok(data
        .chunks_exact(nn)
        .map(|chunk| HermMatrix::from_column_slice(r, c, chunk) * Complex64::new(scale, 0.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen, SymMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_blocks(count: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<HermMatrix> {
        (0..count)
            .map(|_| {
                HermMatrix::from_fn(n, n, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect()
    }

    /// Direct O(N^2) sum over the lattice.
    fn naive_dft(blocks: &[HermMatrix], dims: &[usize], sign: f64) -> Vec<HermMatrix> {
        let pts = lattice_points(dims);
        let norm = 1.0 / (pts.len() as f64).sqrt();
        pts.iter()
            .map(|k| {
                let mut acc = HermMatrix::zeros(blocks[0].nrows(), blocks[0].ncols());
                for (j, b) in pts.iter().zip(blocks) {
                    let phase: f64 = j
                        .iter()
                        .zip(k)
                        .zip(dims)
                        .map(|((&ja, &ka), &m)| (ja * ka) as f64 / m as f64)
                        .sum();
                    acc += b * Complex64::from_polar(norm, sign * 2.0 * PI * phase);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn two_point_transform() {
        let a = HermMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        let b = HermMatrix::identity(2, 2);
        let out = block_dft_forward(&[a.clone(), b.clone()], &[2]).unwrap();
        let s = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        assert!((&out[0] - (&a + &b) * s).norm() < 1e-15);
        assert!((&out[1] - (&a - &b) * s).norm() < 1e-15);
    }

    #[test]
    fn matches_naive_sum_in_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = [3, 4];
        let blocks = random_blocks(12, 2, &mut rng);
        let fast = block_dft_forward(&blocks, &dims).unwrap();
        let slow = naive_dft(&blocks, &dims, -1.0);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).norm() < 1e-12);
        }
        let back = block_dft_inverse(&fast, &dims).unwrap();
        for (b, o) in back.iter().zip(&blocks) {
            assert!((b - o).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_m8() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blocks = random_blocks(8, 3, &mut rng);
        let back = block_dft_inverse(&block_dft_forward(&blocks, &[8]).unwrap(), &[8]).unwrap();
        for (b, o) in back.iter().zip(&blocks) {
            assert!((b - o).norm() < 1e-12);
        }
    }

    #[test]
    fn ragged_blocks_rejected() {
        let blocks = vec![HermMatrix::zeros(2, 2), HermMatrix::zeros(3, 3)];
        assert!(block_dft_forward(&blocks, &[2]).is_err());
        assert!(block_dft_forward(&blocks[..1], &[2]).is_err());
    }

    #[test]
    fn block_circulant_spectrum_is_union_of_fourier_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (4usize, 3usize);
        // first block row of a symmetric block-circulant matrix: C_{-j} = C_j^T
        let mut row: Vec<SymMatrix> = vec![SymMatrix::zeros(n, n); m];
        for j in 0..=m / 2 {
            let a = SymMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            if j == 0 || 2 * j == m {
                row[j] = (&a + a.transpose()) * 0.5;
            } else {
                row[m - j] = a.transpose();
                row[j] = a;
            }
        }
        let mut dense = SymMatrix::zeros(m * n, m * n);
        for i in 0..m {
            for j in 0..m {
                dense
                    .view_mut((i * n, j * n), (n, n))
                    .copy_from(&row[(j + m - i) % m]);
            }
        }
        let mut dense_eigs: Vec<f64> = hermitian_eigen(&dense)
            .unwrap()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        dense_eigs.sort_by(f64::total_cmp);

        let blocks: Vec<HermMatrix> = row
            .iter()
            .map(|b| b.map(|x| Complex64::new(x, 0.0)))
            .collect();
        let hat = block_dft_forward(&blocks, &[m]).unwrap();
        let scale = Complex64::new((m as f64).sqrt(), 0.0);
        let mut block_eigs: Vec<f64> = hat
            .iter()
            .flat_map(|h| {
                hermitian_eigen(&(h * scale))
                    .unwrap()
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect();
        block_eigs.sort_by(f64::total_cmp);
        for (a, b) in dense_eigs.iter().zip(&block_eigs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // conjugate pairs and Hermiticity
        for k in 1..m {
            assert!((&hat[m - k] - hat[k].conjugate()).norm() < 1e-12);
            assert!((&hat[k] - hat[k].adjoint()).norm() < 1e-12);
        }
    }
}
