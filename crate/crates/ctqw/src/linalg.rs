//! Minimal dense linear algebra for Hermitian matrices.
//!
//! The production code only ever needs eigenvalues of small Hermitian
//! matrices (positivity checks on density matrices), so a cyclic Jacobi
//! sweep is plenty: deterministic, dependency-free, and accurate to close to
//! machine precision for the `N ≲ 200` sizes used here. Everything heavier
//! (general complex eigenproblems) lives in the test suites, backed by
//! LAPACK, so it stays independent of this code path.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Eigenvalues of a Hermitian matrix, ascending, via cyclic Jacobi rotations.
///
/// The input is symmetrised as `(a + a†)/2` first so that tiny Hermiticity
/// violations (at the caller's tolerance) do not break the rotation algebra.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[[0, 0]].re];
    }

    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]].conj());
        }
    }

    let scale: f64 = m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    let tol = f64::EPSILON * scale;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.norm_sqr() == 0.0 {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let abs = apq.norm();
                // phase factor turning the pivot real, then a real 2x2 rotation:
                // M <- R† M R with R[[p,p]]=c, R[[p,q]]=-s*e^{iφ},
                // R[[q,p]]=s*e^{-iφ}, R[[q,q]]=c, tan(2θ) = 2|a_pq|/(a_pp - a_qq)
                let phase = apq / abs;
                let theta = 0.5 * (2.0 * abs).atan2(app - aqq);
                let (s, c) = theta.sin_cos();
                let sm = phase.conj() * s; // s e^{-iφ}
                let sp = phase * s; // s e^{+iφ}

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = mkp * c + mkq * sm;
                    m[[k, q]] = -mkp * sp + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = mpk * c + mqk * sp;
                    m[[q, k]] = -mpk * sm + mqk * c;
                }
            }
        }
    }

    let mut evals: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    evals.sort_by(f64::total_cmp);
    evals
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(a: &Array2<C64>) -> f64 {
    hermitian_eigenvalues(a)[0]
}
