//! Ring-lattice topology and the matrices derived from it.
//!
//! A one-dimensional regular network is a ring of `N` nodes in which node `j`
//! is bonded to `j ± 1, …, j ± l` (mod `N`). Requiring `2l < N` keeps the
//! graph simple: no self-loops, no doubled bonds, degree exactly `2l`
//! everywhere. All matrices built here are circulant, so every spectral
//! quantity downstream depends on `i − j` only through `(i − j) mod N`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("node count must satisfy N >= 3, got N={0}")]
    TooFewNodes(usize),
    #[error("l must satisfy 1 <= l <= floor((N-1)/2); got l={l} for N={n}")]
    RangeOutOfBounds { n: usize, l: usize },
    #[error("hopping amplitude must satisfy hopping > 0")]
    NonPositiveHopping,
}

/// Hamiltonian normalisation conventions used throughout the crate.
///
/// Two conventions are in play and they are *not* rescalings of each other's
/// clock alone:
///
/// - `Section2`: hopping `1` per bond with diagonal `−2l`, so the Bloch
///   spectrum is `E_n = −2l + 2 Σ_{z=1..l} cos(z θ_n)` with `E_0 = 0`.
/// - `Gurvitz`: hopping `1/4` per bond with zero diagonal; this is the
///   normalisation the dephasing master equation is written in.
///
/// A constant diagonal commutes out of density-matrix dynamics, so the two
/// differ physically only by the factor 4 in the hopping, i.e. by a factor 4
/// in the clock. That factor is always tracked explicitly via
/// [`Preset::time_scale`], never folded in silently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Section2,
    Gurvitz,
}

impl Preset {
    pub fn hopping(self) -> f64 {
        match self {
            Preset::Section2 => 1.0,
            Preset::Gurvitz => 0.25,
        }
    }

    pub fn diagonal_shift(self, l: usize) -> f64 {
        match self {
            Preset::Section2 => -2.0 * l as f64,
            Preset::Gurvitz => 0.0,
        }
    }

    /// Factor converting one time unit of this preset into the quarter-hopping
    /// (`Gurvitz`) clock: `t_gurvitz = time_scale() * t_preset`.
    pub fn time_scale(self) -> f64 {
        4.0 * self.hopping()
    }

    pub fn label(self) -> &'static str {
        match self {
            Preset::Section2 => "section2",
            Preset::Gurvitz => "gurvitz",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "section2" => Ok(Preset::Section2),
            "gurvitz" => Ok(Preset::Gurvitz),
            other => Err(format!("unknown preset `{other}` (expected section2|gurvitz)")),
        }
    }
}

/// Validated ring-lattice parameters: `N` nodes, coupling range `l`, and the
/// bond amplitude applied to every edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    n: usize,
    l: usize,
    hopping: f64,
}

impl NetworkSpec {
    pub fn new(n: usize, l: usize, hopping: f64) -> Result<Self, NetworkError> {
        if n < 3 {
            return Err(NetworkError::TooFewNodes(n));
        }
        if l < 1 || 2 * l >= n {
            return Err(NetworkError::RangeOutOfBounds { n, l });
        }
        if !(hopping > 0.0) {
            return Err(NetworkError::NonPositiveHopping);
        }
        Ok(NetworkSpec { n, l, hopping })
    }

    /// Unit-hopping spec, the natural input for the spectral formulas.
    pub fn unit(n: usize, l: usize) -> Result<Self, NetworkError> {
        Self::new(n, l, 1.0)
    }

    /// Spec whose hopping amplitude comes from `preset`.
    pub fn with_preset(n: usize, l: usize, preset: Preset) -> Result<Self, NetworkError> {
        Self::new(n, l, preset.hopping())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Every node has exactly `2l` neighbours.
    pub fn degree(&self) -> usize {
        2 * self.l
    }

    /// True when `(i − j) mod N` lands within the coupling range.
    pub fn bonded(&self, i: usize, j: usize) -> bool {
        let d = (i + self.n - j % self.n) % self.n;
        d >= 1 && (d <= self.l || d >= self.n - self.l)
    }
}

/// Dense complex matrix that is Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: Array2<C64>,
}

impl HermitianMatrix {
    /// Wraps `entries`, checking `entries[i][j] == conj(entries[j][i])`
    /// exactly (the builders in this module only ever produce real integer
    /// entries, so exact equality is the right test).
    pub(crate) fn from_entries(entries: Array2<C64>) -> Self {
        let dim = entries.nrows();
        debug_assert_eq!(dim, entries.ncols());
        debug_assert!((0..dim)
            .all(|i| (0..dim).all(|j| entries[[i, j]] == entries[[j, i]].conj())));
        HermitianMatrix { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.entries
    }
}

/// Adjacency matrix: `A[i][j] = 1` iff nodes `i` and `j` are bonded, zero
/// diagonal, row sums all `2l`. Built in integer arithmetic and embedded into
/// complex entries afterwards.
pub fn adjacency(spec: &NetworkSpec) -> HermitianMatrix {
    build_circulant(spec, |bonded, diag| if diag { 0 } else { i64::from(bonded) })
}

/// Graph Laplacian `L = A − D` with `D[j][j] = degree(j) = 2l`. Row sums are
/// exactly zero.
pub fn laplacian(spec: &NetworkSpec) -> HermitianMatrix {
    let deg = spec.degree() as i64;
    build_circulant(spec, move |bonded, diag| {
        if diag {
            -deg
        } else {
            i64::from(bonded)
        }
    })
}

/// Hamiltonian with the spec's hopping on every bond and `diagonal_shift` on
/// the diagonal.
pub fn hamiltonian(spec: &NetworkSpec, diagonal_shift: f64) -> HermitianMatrix {
    let n = spec.n();
    let h = spec.hopping();
    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                m[[i, j]] = C64::new(diagonal_shift, 0.0);
            } else if spec.bonded(i, j) {
                m[[i, j]] = C64::new(h, 0.0);
            }
        }
    }
    HermitianMatrix::from_entries(m)
}

/// Hamiltonian in one of the two named normalisations (see [`Preset`]).
pub fn hamiltonian_preset(n: usize, l: usize, preset: Preset) -> Result<HermitianMatrix, NetworkError> {
    let spec = NetworkSpec::with_preset(n, l, preset)?;
    Ok(hamiltonian(&spec, preset.diagonal_shift(l)))
}

fn build_circulant<F>(spec: &NetworkSpec, entry: F) -> HermitianMatrix
where
    F: Fn(bool, bool) -> i64,
{
    let n = spec.n();
    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = entry(spec.bonded(i, j), i == j);
            if v != 0 {
                m[[i, j]] = C64::new(v as f64, 0.0);
            }
        }
    }
    HermitianMatrix::from_entries(m)
}
