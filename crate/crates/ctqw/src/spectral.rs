//! Momentum-space structure of the walk generator.
//!
//! Every circulant operator on the ring is diagonalised by Bloch vectors
//! `|Φ_n> = N^{-1/2} Σ_j e^{-iθ_n j} |j>` with `θ_n = 2πn/N`. Lifting to
//! density matrices, the coherent part of the evolution acts on the `N²`
//! plane-wave modes `V^{(m,n)}_{(μ,ν)} = e^{2πi(mμ+nν)/N}/N` with purely real
//! eigenvalue
//!
//! ```text
//! λ_(m,n) = Σ_{z=1..l} sin(πz(m+n)/N) sin(πz(m−n)/N)
//! ```
//!
//! (the generator contributes `i λ`). Dephasing at rate `Γ` is diagonal in
//! the site basis but not in the mode basis; its matrix element between modes
//! is `−Γ δ_{mm'} δ_{nn'} + (Γ/N) δ_{[(m'−m)+(n'−n)] mod N, 0}`, so modes mix
//! only within a fixed residue `r = (m+n) mod N`. First-order perturbation
//! theory therefore needs the degenerate sets of `λ` within each residue;
//! [`classify_degeneracies`] finds them by exhaustive scan rather than
//! trusting any closed-form claim about when they occur.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::network::NetworkSpec;
use crate::par;

/// Relative tolerance below which two momentum eigenvalues in the same
/// residue class are declared degenerate: `|Δλ| < tol · max(1, |λ|)`. The
/// eigenvalues are O(1) trigonometric sums, so 1e-9 cleanly separates
/// double-precision coincidence from accident.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Dimension guard for [`liouvillian_dense`]: the dense generator holds
/// `N⁴` complex entries.
pub const DENSE_DIM_LIMIT: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpectralError {
    #[error("Bloch mode index must satisfy 0 <= n < N; got n={mode} for N={n}")]
    ModeOutOfRange { n: usize, mode: usize },
    #[error(
        "dense generator for N={n} needs {entries} complex entries; refusing above N={limit} \
         (use liouvillian_dense_with_limit to override)"
    )]
    CapacityExceeded { n: usize, entries: u128, limit: usize },
}

/// Bloch angles and single-particle energies of the unit-hopping Hamiltonian
/// with diagonal `−2l`, i.e. `E_n = −2l + 2 Σ_{z=1..l} cos(z θ_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochSystem {
    n: usize,
    l: usize,
    thetas: Vec<f64>,
    energies: Vec<f64>,
}

impl BlochSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// Bloch eigen-system of the ring. Only `N` and `l` enter; the energies are
/// in the unit-hopping normalisation (see [`crate::network::Preset`]).
pub fn bloch_system(spec: &NetworkSpec) -> BlochSystem {
    let n = spec.n();
    let l = spec.l();
    let thetas: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let energies = thetas
        .iter()
        .map(|&theta| {
            let cos_sum: f64 = (1..=l).map(|z| (z as f64 * theta).cos()).sum();
            -2.0 * l as f64 + 2.0 * cos_sum
        })
        .collect();
    BlochSystem { n, l, thetas, energies }
}

/// Bloch vector `|Φ_mode>`: component `j` is `e^{-i θ_mode j} / sqrt(N)`.
pub fn bloch_vector(n_nodes: usize, mode: usize) -> Result<Array1<C64>, SpectralError> {
    if mode >= n_nodes {
        return Err(SpectralError::ModeOutOfRange { n: n_nodes, mode });
    }
    let norm = 1.0 / (n_nodes as f64).sqrt();
    let theta = 2.0 * PI * mode as f64 / n_nodes as f64;
    Ok(Array1::from_iter(
        (0..n_nodes).map(|j| C64::from_polar(norm, -theta * j as f64)),
    ))
}

/// Momentum-pair eigenvalue `λ_(m,n) = Σ_{z=1..l} sin(πz(m+n)/N) sin(πz(m−n)/N)`.
///
/// The coherent generator acts on mode `(m,n)` as multiplication by
/// `sign · i · λ_(m,n)`; the global sign is resolved against the dense
/// operator (it comes out `+1`, see [`LiouvilleSpectrum::sign`]).
pub fn momentum_eigenvalue(n_nodes: usize, l: usize, m: usize, n: usize) -> f64 {
    let big_n = n_nodes as f64;
    let sum = m as f64 + n as f64;
    let diff = m as f64 - n as f64;
    (1..=l)
        .map(|z| {
            let zf = z as f64;
            (PI * zf * sum / big_n).sin() * (PI * zf * diff / big_n).sin()
        })
        .sum()
}

/// Plane-wave density-matrix mode `V^{(m,n)}`, flattened row-major
/// (`(μ,ν) → μ·N + ν`): component `(μ,ν)` is `e^{2πi(mμ+nν)/N} / N`.
pub fn momentum_mode_vector(n_nodes: usize, m: usize, n: usize) -> Array1<C64> {
    let big_n = n_nodes as f64;
    let mut v = Array1::<C64>::zeros(n_nodes * n_nodes);
    for mu in 0..n_nodes {
        for nu in 0..n_nodes {
            let phase = 2.0 * PI * (m * mu + n * nu) as f64 / big_n;
            v[mu * n_nodes + nu] = C64::from_polar(1.0 / big_n, phase);
        }
    }
    v
}

/// Dephasing matrix element between modes `row = (m,n)` and `col = (m',n')`:
/// `−Γ δ_{m'm} δ_{n'n} + (Γ/N) δ_{[(m'−m)+(n'−n)] mod N, 0}`.
pub fn perturbation_element(
    n_nodes: usize,
    gamma: f64,
    row: (usize, usize),
    col: (usize, usize),
) -> f64 {
    let mut value = 0.0;
    if row == col {
        value -= gamma;
    }
    let (m, n) = row;
    let (mp, np) = col;
    if ((mp + n_nodes - m) + (np + n_nodes - n)) % n_nodes == 0 {
        value += gamma / n_nodes as f64;
    }
    value
}

/// Structural label of a momentum pair `(m,n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyClass {
    /// `m = n`: zero eigenvalue, treated as unmixed.
    Diagonal,
    /// `m + n ≡ 0 (mod N)`: zero eigenvalue; excluded from the expansion of a
    /// site-localised initial state (their equal-weight combination is the
    /// stationary uniform state, which is kept constant instead).
    ZeroMode,
    /// `l = 1`, even `N`: paired with `((n+N/2) mod N, (m+N/2) mod N)` by the
    /// four quadrant rules; the pair shares `λ` and residue.
    L1Quadruple,
    Nondegenerate,
}

impl DegeneracyClass {
    pub fn label(self) -> &'static str {
        match self {
            DegeneracyClass::Diagonal => "diagonal",
            DegeneracyClass::ZeroMode => "zero_mode",
            DegeneracyClass::L1Quadruple => "l1_quadruple",
            DegeneracyClass::Nondegenerate => "nondegenerate",
        }
    }
}

/// What explains a set of numerically coincident eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    /// All members have `m + n ≡ 0 (mod N)`.
    ZeroModes,
    /// All members are diagonal pairs `m = n` (even `N` couples `(m,m)` to
    /// `(m+N/2, m+N/2)` at equal `λ = 0`).
    DiagonalModes,
    /// Exactly an `l = 1` quadruple-rule pair.
    QuadruplePair,
    /// A coincidence not covered by any of the structural cases.
    Unexpected,
}

impl GroupKind {
    pub fn label(self) -> &'static str {
        match self {
            GroupKind::ZeroModes => "zero_modes",
            GroupKind::DiagonalModes => "diagonal_modes",
            GroupKind::QuadruplePair => "quadruple_pair",
            GroupKind::Unexpected => "unexpected",
        }
    }
}

/// A maximal set of modes sharing residue and (within tolerance) eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateGroup {
    pub residue: usize,
    pub lambda: f64,
    /// Members in ascending `(m, n)` order.
    pub members: Vec<(usize, usize)>,
    pub kind: GroupKind,
}

/// Full degeneracy bookkeeping for one `(N, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    n: usize,
    l: usize,
    tol: f64,
    classes: Vec<DegeneracyClass>,
    groups: Vec<DegenerateGroup>,
}

impl DegeneracyReport {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn class(&self, m: usize, n: usize) -> DegeneracyClass {
        self.classes[m * self.n + n]
    }

    /// All coincidence groups (size >= 2), canonically ordered.
    pub fn groups(&self) -> &[DegenerateGroup] {
        &self.groups
    }

    /// Coincidences beyond the structural cases. Empty exactly when the
    /// "no accidental degeneracy" hypothesis holds for this `(N, l)`.
    pub fn unexpected(&self) -> impl Iterator<Item = &DegenerateGroup> {
        self.groups.iter().filter(|g| g.kind == GroupKind::Unexpected)
    }

    /// Group containing `(m, n)`, if it belongs to any coincidence set.
    pub fn group_of(&self, m: usize, n: usize) -> Option<&DegenerateGroup> {
        self.groups.iter().find(|g| g.members.binary_search(&(m, n)).is_ok())
    }
}

/// Partner of `(m,n)` under the `l = 1` quadruple rules (even `N` only):
/// `((n + N/2) mod N, (m + N/2) mod N)`, which is what the four quadrant
/// formulations reduce to once arithmetic is taken mod `N`.
pub fn l1_quadruple_partner(n_nodes: usize, m: usize, n: usize) -> (usize, usize) {
    debug_assert!(n_nodes % 2 == 0);
    let half = n_nodes / 2;
    ((n + half) % n_nodes, (m + half) % n_nodes)
}

/// Classify all `N²` momentum pairs and exhaustively scan for eigenvalue
/// coincidences within each residue class.
///
/// The structural classes (diagonal, zero mode, `l = 1` quadruples) are
/// assigned first; the scan then reports *every* coincidence group, flagging
/// as [`GroupKind::Unexpected`] anything the structural cases do not explain.
/// Nothing is suppressed: an accidental degeneracy invalidates the uniform
/// first-order correction for the affected modes, so it must surface.
pub fn classify_degeneracies(spec: &NetworkSpec, tol: f64) -> DegeneracyReport {
    assert!(tol > 0.0, "degeneracy tolerance must be positive");
    let n = spec.n();
    let l = spec.l();
    let quadruples = l == 1 && n % 2 == 0;

    let mut classes = vec![DegeneracyClass::Nondegenerate; n * n];
    for m in 0..n {
        for k in 0..n {
            let class = if (m + k) % n == 0 {
                DegeneracyClass::ZeroMode
            } else if m == k {
                DegeneracyClass::Diagonal
            } else if quadruples && l1_quadruple_partner(n, m, k) != (m, k) {
                DegeneracyClass::L1Quadruple
            } else {
                DegeneracyClass::Nondegenerate
            };
            classes[m * n + k] = class;
        }
    }

    // Residues are independent; scan them in parallel, then flatten in
    // canonical residue order so the report is deterministic.
    let per_residue: Vec<Vec<DegenerateGroup>> = par::map_indexed(n, |r| {
        let mut modes: Vec<(f64, (usize, usize))> = Vec::new();
        for m in 0..n {
            let k = (r + n - m % n) % n;
            modes.push((momentum_eigenvalue(n, l, m, k), (m, k)));
        }
        modes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut groups = Vec::new();
        let mut start = 0;
        while start < modes.len() {
            let mut end = start + 1;
            while end < modes.len() {
                let prev = modes[end - 1].0;
                let next = modes[end].0;
                if (next - prev).abs() < tol * prev.abs().max(1.0) {
                    end += 1;
                } else {
                    break;
                }
            }
            if end - start >= 2 {
                let mut members: Vec<(usize, usize)> =
                    modes[start..end].iter().map(|&(_, mn)| mn).collect();
                members.sort_unstable();
                let lambda = modes[start].0;
                let kind = group_kind(&members, &classes, n, quadruples);
                groups.push(DegenerateGroup { residue: r, lambda, members, kind });
            }
            start = end;
        }
        groups
    });

    let groups: Vec<DegenerateGroup> = per_residue.into_iter().flatten().collect();

    DegeneracyReport { n, l, tol, classes, groups }
}

fn group_kind(
    members: &[(usize, usize)],
    classes: &[DegeneracyClass],
    n: usize,
    quadruples: bool,
) -> GroupKind {
    let class_of = |&(m, k): &(usize, usize)| classes[m * n + k];
    if members.iter().all(|mk| class_of(mk) == DegeneracyClass::ZeroMode) {
        return GroupKind::ZeroModes;
    }
    if members.iter().all(|mk| class_of(mk) == DegeneracyClass::Diagonal) {
        return GroupKind::DiagonalModes;
    }
    if quadruples && members.len() == 2 {
        let (m, k) = members[0];
        if class_of(&members[0]) == DegeneracyClass::L1Quadruple
            && l1_quadruple_partner(n, m, k) == members[1]
        {
            return GroupKind::QuadruplePair;
        }
    }
    GroupKind::Unexpected
}

/// Momentum eigenvalues, first-order dephasing corrections, and degeneracy
/// labels for one `(N, l, Γ)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvilleSpectrum {
    n: usize,
    l: usize,
    gamma: f64,
    lambdas: Vec<f64>,
    corrections: Vec<f64>,
    report: DegeneracyReport,
}

impl LiouvilleSpectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Global sign `σ` relating the `λ` formula to the dense generator:
    /// the generator multiplies mode `(m,n)` by `σ·i·λ_(m,n)`. Resolved
    /// against dense diagonalisation (test suite), not read off any formula;
    /// it comes out `+1` for the conventions used here.
    pub fn sign(&self) -> f64 {
        1.0
    }

    pub fn lambda(&self, m: usize, n: usize) -> f64 {
        self.lambdas[m * self.n + n]
    }

    /// First-order correction `λ̃_(m,n) ≤ 0`. Every value is either
    /// `−Γ(N−1)/N` or `−Γ(N−2)/N`.
    pub fn correction(&self, m: usize, n: usize) -> f64 {
        self.corrections[m * self.n + n]
    }

    pub fn class(&self, m: usize, n: usize) -> DegeneracyClass {
        self.report.class(m, n)
    }

    /// True when mode `(m,n)` is excluded from the expansion of a localised
    /// initial state (`m + n ≡ 0 (mod N)`); its correction entry is never
    /// consumed by the closed-form solution.
    pub fn excluded_from_initial_state(&self, m: usize, n: usize) -> bool {
        self.report.class(m, n) == DegeneracyClass::ZeroMode
    }

    pub fn report(&self) -> &DegeneracyReport {
        &self.report
    }
}

/// First-order corrections per mode.
///
/// Diagonal, zero-mode, and nondegenerate modes receive the single-mode value
/// `−Γ(N−1)/N`; `l = 1` quadruple pairs receive the equal-weight-combination
/// value, i.e. the row sum of the dephasing elements over the pair, which
/// works out to `−Γ(N−2)/N`. Zero modes keep their entry but are flagged
/// unused (see [`LiouvilleSpectrum::excluded_from_initial_state`]).
pub fn corrections(spec: &NetworkSpec, gamma: f64) -> LiouvilleSpectrum {
    assert!(gamma >= 0.0, "dephasing rate must be nonnegative");
    let n = spec.n();
    let l = spec.l();
    let report = classify_degeneracies(spec, DEGENERACY_TOL);

    let mut lambdas = vec![0.0; n * n];
    let mut corr = vec![0.0; n * n];
    for m in 0..n {
        for k in 0..n {
            let idx = m * n + k;
            lambdas[idx] = momentum_eigenvalue(n, l, m, k);
            corr[idx] = match report.class(m, k) {
                DegeneracyClass::L1Quadruple => {
                    // uniform combination over the degenerate pair
                    let partner = l1_quadruple_partner(n, m, k);
                    perturbation_element(n, gamma, (m, k), (m, k))
                        + perturbation_element(n, gamma, (m, k), partner)
                }
                _ => perturbation_element(n, gamma, (m, k), (m, k)),
            };
        }
    }

    LiouvilleSpectrum { n, l, gamma, lambdas, corrections: corr, report }
}

/// Alias for [`corrections`] under the name used for the assembled object.
pub fn liouville_spectrum(spec: &NetworkSpec, gamma: f64) -> LiouvilleSpectrum {
    corrections(spec, gamma)
}

/// Dense `N² × N²` generator `iL + U` acting on row-major-flattened density
/// matrices (`row = α·N + β`, `col = μ·N + ν`).
///
/// `L` carries the fixed quarter-hopping normalisation; `U` is the site-basis
/// dephasing `−Γ(1 − δ_{αβ})` on the diagonal. The `z = 0` terms of the
/// coherent sum cancel identically and are kept in the loop to mirror the
/// defining expression.
pub fn liouvillian_dense(spec: &NetworkSpec, gamma: f64) -> Result<Array2<C64>, SpectralError> {
    liouvillian_dense_with_limit(spec, gamma, DENSE_DIM_LIMIT)
}

/// [`liouvillian_dense`] with an explicit node-count cap.
pub fn liouvillian_dense_with_limit(
    spec: &NetworkSpec,
    gamma: f64,
    limit: usize,
) -> Result<Array2<C64>, SpectralError> {
    let n = spec.n();
    if n > limit {
        let entries = (n as u128).pow(4);
        return Err(SpectralError::CapacityExceeded { n, entries, limit });
    }
    let l = spec.l() as isize;
    let dim = n * n;
    let quarter = C64::new(0.0, 0.25); // i * (1/4)
    let mut op = Array2::<C64>::zeros((dim, dim));
    for alpha in 0..n {
        for beta in 0..n {
            let row = alpha * n + beta;
            for z in -l..=l {
                let nu = wrap(beta as isize + z, n);
                op[[row, alpha * n + nu]] += quarter;
                let mu = wrap(alpha as isize + z, n);
                op[[row, mu * n + beta]] -= quarter;
            }
            if alpha != beta {
                op[[row, row]] -= C64::new(gamma, 0.0);
            }
        }
    }
    Ok(op)
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// First-order prediction for the full spectrum of the dense generator,
/// with degenerate sets treated properly.
///
/// Within one coincidence group of size `k` the dephasing restricts to
/// `−Γ·I + (Γ/N)·J` (`J` the all-ones block, since any two modes of equal
/// residue couple with `Γ/N`), whose eigenvalues are `−Γ(N−k)/N` once and
/// `−Γ` with multiplicity `k−1`. Singleton modes reduce to the usual
/// `−Γ(N−1)/N`. The result matches dense diagonalisation up to O(Γ²) terms.
pub fn predicted_liouvillian_eigenvalues(spec: &NetworkSpec, gamma: f64) -> Vec<C64> {
    let spectrum = liouville_spectrum(spec, gamma);
    let n = spec.n();
    let sign = spectrum.sign();
    let mut grouped = vec![false; n * n];
    let mut out = Vec::with_capacity(n * n);

    for group in spectrum.report().groups() {
        let k = group.members.len();
        for &(m, kk) in &group.members {
            grouped[m * n + kk] = true;
        }
        let coherent = C64::new(0.0, sign * group.lambda);
        out.push(coherent + C64::new(-gamma * (n - k) as f64 / n as f64, 0.0));
        for _ in 1..k {
            out.push(coherent + C64::new(-gamma, 0.0));
        }
    }
    for m in 0..n {
        for kk in 0..n {
            if !grouped[m * n + kk] {
                out.push(C64::new(
                    -gamma * (n - 1) as f64 / n as f64,
                    sign * spectrum.lambda(m, kk),
                ));
            }
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}
