//! Shared oracle helpers for the integration tests. Everything here stays
//! independent of the library's own numerical paths: the matrix exponential
//! is plain scaling-and-squaring Taylor, eigen-oracles come from LAPACK.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Matrix exponential by scaling-and-squaring on the Taylor series. Fine for
/// the small dense matrices used in tests.
pub fn expm_taylor(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    // 1-norm based scaling
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm1 > 0.25 {
        (norm1 / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2.0f64.powi(squarings as i32);
    let b = a.mapv(|c| c / scale);

    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..200 {
        term = term.dot(&b) / C64::new(k as f64, 0.0);
        result += &term;
        let tnorm: f64 = term.iter().map(|c| c.norm()).sum();
        if tnorm < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Seeded random Hermitian, unit-trace, positive-semidefinite matrix
/// (`G G† / tr`).
pub fn random_density(n: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            g[[i, j]] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    let mut rho = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += g[[i, k]] * g[[j, k]].conj();
            }
            rho[[i, j]] = acc;
        }
    }
    let trace: C64 = rho.diag().sum();
    rho.mapv(|c| c / trace.re)
}

/// Worst pairing distance of a greedy nearest-neighbour matching between two
/// equal-size eigenvalue multisets. Safe here because predicted clusters are
/// far narrower than the spacing between distinct clusters.
pub fn greedy_match_max_dev(predicted: &[C64], actual: &[C64]) -> f64 {
    assert_eq!(predicted.len(), actual.len());
    let mut remaining: Vec<C64> = actual.to_vec();
    let mut worst = 0.0f64;
    for p in predicted {
        let (idx, dist) = remaining
            .iter()
            .enumerate()
            .map(|(i, a)| (i, (p - a).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty");
        worst = worst.max(dist);
        remaining.swap_remove(idx);
    }
    worst
}
