//! Cross-checks of the spectral formulas and propagators against independent
//! dense-matrix oracles (Taylor matrix exponentials, LAPACK eigensolvers).

mod common;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, UPLO};
use num_complex::Complex64 as C64;

use common::{expm_taylor, greedy_match_max_dev, random_density};
use ctqw::evolve::{
    coherent_amplitude, classical_probability, integrate_master, quantum_probability,
    DensityMatrix, IntegrateOptions, perturbative_distribution,
};
use ctqw::linalg::hermitian_eigenvalues;
use ctqw::network::{hamiltonian_preset, laplacian, NetworkSpec, Preset};
use ctqw::spectral::{
    liouvillian_dense, liouville_spectrum, momentum_eigenvalue, momentum_mode_vector,
    predicted_liouvillian_eigenvalues,
};

#[test]
fn bloch_energies_match_dense_diagonalization() {
    for &(n, l) in &[(8usize, 3usize), (13, 5), (24, 2)] {
        let spec = NetworkSpec::unit(n, l).unwrap();
        let h = hamiltonian_preset(n, l, Preset::Section2).unwrap();
        let (dense, _) = h.entries().eigh(UPLO::Lower).unwrap();
        let mut formula = ctqw::spectral::bloch_system(&spec).energies().to_vec();
        formula.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&formula) {
            assert!((a - b).abs() < 1e-10, "N={n} l={l}: {a} vs {b}");
        }
    }
}

#[test]
fn coherent_amplitude_matches_matrix_exponential() {
    let spec = NetworkSpec::unit(8, 3).unwrap();
    let h = hamiltonian_preset(8, 3, Preset::Section2).unwrap();
    for &t in &[1.0, 2.5] {
        let u = expm_taylor(&h.entries().mapv(|c| c * C64::new(0.0, -t)));
        for k in 0..8 {
            for j in 0..8 {
                let want = u[[k, j]];
                let got = coherent_amplitude(&spec, k, j, t);
                assert!((got - want).norm() < 1e-10, "t={t} ({k},{j}): {got} vs {want}");
                let p = quantum_probability(&spec, k, j, t);
                assert!((p - want.norm_sqr()).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn classical_probability_matches_matrix_exponential() {
    let spec = NetworkSpec::unit(6, 2).unwrap();
    let gamma_rate = 1.0;
    let t = 0.7;
    let transfer = laplacian(&spec).entries().mapv(|c| c * gamma_rate * t);
    let propagator = expm_taylor(&transfer);
    for k in 0..6 {
        for j in 0..6 {
            let want = propagator[[k, j]].re;
            let got = classical_probability(&spec, gamma_rate, k, j, t);
            assert!((got - want).abs() < 1e-10, "({k},{j}): {got} vs {want}");
        }
    }
}

#[test]
fn dense_generator_action_matches_elementwise_master_equation() {
    // the printed equation, evaluated entry by entry with the z = 0 terms
    // kept in the sum (they cancel identically)
    let n = 6;
    let l = 2isize;
    let gamma = 0.05;
    let spec = NetworkSpec::new(n, l as usize, 0.25).unwrap();
    let op = liouvillian_dense(&spec, gamma).unwrap();
    let rho = random_density(n, 0xC0FFEE);
    let flat = Array1::from_iter(rho.iter().cloned());
    let applied = op.dot(&flat);

    for j in 0..n {
        for k in 0..n {
            let mut band = C64::new(0.0, 0.0);
            for z in -l..=l {
                let kz = (k as isize + z).rem_euclid(n as isize) as usize;
                let jz = (j as isize + z).rem_euclid(n as isize) as usize;
                band += rho[[j, kz]] - rho[[jz, k]];
            }
            let mut want = C64::new(0.0, 0.25) * band;
            if j != k {
                want -= gamma * rho[[j, k]];
            }
            let got = applied[j * n + k];
            assert!((got - want).norm() < 1e-12, "({j},{k}): {got} vs {want}");
        }
    }
}

#[test]
fn generator_acts_on_momentum_modes_with_positive_sign() {
    // resolves the global sign: the coherent generator multiplies V^{(m,n)}
    // by +i λ_(m,n) in this flattening convention
    for &(n, l) in &[(5usize, 2usize), (8, 3), (12, 1)] {
        let spec = NetworkSpec::with_preset(n, l, Preset::Gurvitz).unwrap();
        let op = liouvillian_dense(&spec, 0.0).unwrap();
        let spectrum = liouville_spectrum(&spec, 0.0);
        assert_eq!(spectrum.sign(), 1.0);
        for m in 0..n {
            for k in 0..n {
                let v = momentum_mode_vector(n, m, k);
                let lhs = op.dot(&v);
                let lambda = momentum_eigenvalue(n, l, m, k);
                let plus: f64 = lhs
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| (a - C64::new(0.0, lambda) * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(plus < 1e-10, "N={n} l={l} ({m},{k}): residual {plus:e}");
                if lambda.abs() > 1e-6 {
                    let minus: f64 = lhs
                        .iter()
                        .zip(v.iter())
                        .map(|(a, b)| (a + C64::new(0.0, lambda) * b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    assert!(minus > 1e-3, "opposite sign would also fit at ({m},{k})");
                }
            }
        }
    }
}

#[test]
fn momentum_modes_are_orthonormal() {
    let n = 16;
    let modes: Vec<_> = (0..n)
        .flat_map(|m| (0..n).map(move |k| (m, k)))
        .map(|(m, k)| momentum_mode_vector(n, m, k))
        .collect();
    for (i, a) in modes.iter().enumerate() {
        for (j, b) in modes.iter().enumerate() {
            let inner: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!(
                (inner - C64::new(want, 0.0)).norm() < 1e-12,
                "modes {i},{j}: {inner}"
            );
        }
    }
}

#[test]
fn dense_generator_eigenvalues_match_first_order_prediction() {
    // spot checks of the full-grid acceptance sweep, including a point with
    // accidental degeneracies (6,2) and an l = 1 point with quadruples
    for &(n, l, gamma) in &[
        (6usize, 2usize, 0.01),
        (8, 3, 0.01),
        (8, 1, 0.01),
        (9, 2, 0.0),
    ] {
        let spec = NetworkSpec::with_preset(n, l, Preset::Gurvitz).unwrap();
        let (dense, _) = liouvillian_dense(&spec, gamma).unwrap().eig().unwrap();
        let predicted = predicted_liouvillian_eigenvalues(&spec, gamma);
        let dev = greedy_match_max_dev(&predicted, dense.as_slice().unwrap());
        let tol = (5.0 * gamma * gamma * n as f64).max(1e-9);
        assert!(dev <= tol, "N={n} l={l} Γ={gamma}: dev {dev:e} vs tol {tol:e}");
    }
}

#[test]
fn master_integration_matches_dense_propagation() {
    // independent route: expm((iL+U)t) applied to the flattened initial state
    let n = 5;
    let spec = NetworkSpec::with_preset(n, 2, Preset::Gurvitz).unwrap();
    let gamma = 0.05;
    let t = 3.0;
    let op = liouvillian_dense(&spec, gamma).unwrap();
    let propagator = expm_taylor(&op.mapv(|c| c * t));
    let rho0 = DensityMatrix::pure_node(n, 0).unwrap();
    let flat0 = Array1::from_iter(rho0.entries().iter().cloned());
    let flat_t = propagator.dot(&flat0);

    let run = integrate_master(&spec, gamma, &rho0, t, &IntegrateOptions::with_stride(t)).unwrap();
    for j in 0..n {
        for k in 0..n {
            let want = flat_t[j * n + k];
            let got = run.final_state.entries()[[j, k]];
            assert!((got - want).norm() < 1e-9, "({j},{k}): {got} vs {want}");
        }
    }
}

#[test]
fn pure_dephasing_damps_coherences_at_exactly_gamma() {
    // with the coherent part transformed away the generator is the site-basis
    // dephasing alone: off-diagonals shrink by e^{-Γt}, populations freeze
    let n = 6;
    let spec = NetworkSpec::with_preset(n, 2, Preset::Gurvitz).unwrap();
    let gamma = 0.08;
    let with = liouvillian_dense(&spec, gamma).unwrap();
    let without = liouvillian_dense(&spec, 0.0).unwrap();
    let dephasing = &with - &without;
    let t = 4.0;
    let propagator = expm_taylor(&dephasing.mapv(|c| c * t));
    let rho = random_density(n, 0xDECAF);
    let flat = Array1::from_iter(rho.iter().cloned());
    let out = propagator.dot(&flat);
    let damp = (-gamma * t).exp();
    for j in 0..n {
        for k in 0..n {
            let want = if j == k { rho[[j, k]] } else { rho[[j, k]] * damp };
            let got = out[j * n + k];
            assert!((got - want).norm() < 1e-12, "({j},{k})");
        }
    }
}

#[test]
fn purity_never_increases_from_a_superposition_state() {
    let n = 6;
    let spec = NetworkSpec::with_preset(n, 2, Preset::Gurvitz).unwrap();
    let mut psi = Array2::<C64>::zeros((n, n));
    // equal superposition of two nodes: genuine initial coherence
    for (a, b) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
        psi[[a, b]] = C64::new(0.5, 0.0);
    }
    let mut state = DensityMatrix::from_matrix(psi).unwrap();
    let opts = IntegrateOptions::with_stride(2.0);
    let mut last = state.purity();
    assert!((last - 1.0).abs() < 1e-12);
    for _ in 0..10 {
        let run = integrate_master(&spec, 0.08, &state, 2.0, &opts).unwrap();
        state = run.final_state;
        let p = state.purity();
        assert!(p <= last + 1e-10, "purity rose from {last} to {p}");
        last = p;
    }
    // coherence weight + population weight stays the purity decomposition
    let back = state.purity() - state.diagonal().iter().map(|p| p * p).sum::<f64>();
    assert!((back - state.coherence_weight()).abs() < 1e-12);
}

#[test]
fn jacobi_eigenvalues_match_lapack() {
    for n in [3usize, 7, 12, 20] {
        let rho = random_density(n, 41 + n as u64);
        let mine = hermitian_eigenvalues(&rho);
        let (lapack, _) = rho.eigh(UPLO::Lower).unwrap();
        for (a, b) in mine.iter().zip(lapack.iter()) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn perturbative_distribution_tracks_exact_linearly_in_gamma() {
    // fixed short horizon: the closed form's error is O(Γ), so halving Γ
    // roughly halves the worst diagonal discrepancy
    let n = 10;
    let spec = NetworkSpec::with_preset(n, 2, Preset::Gurvitz).unwrap();
    let rho0 = DensityMatrix::pure_node(n, 0).unwrap();
    let t = 20.0;
    let mut errs = Vec::new();
    for &gamma in &[0.005, 0.0025, 0.00125] {
        let run =
            integrate_master(&spec, gamma, &rho0, t, &IntegrateOptions::with_stride(t)).unwrap();
        let exact = run.final_state.diagonal();
        let pert = perturbative_distribution(&spec, gamma, t).unwrap();
        let err = exact
            .iter()
            .zip(&pert)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errs.push(err);
    }
    for w in errs.windows(2) {
        let ratio = w[1] / w[0];
        assert!(
            (0.3..=0.7).contains(&ratio),
            "halving ratio {ratio} outside [0.3, 0.7]; errors {errs:?}"
        );
    }
}
