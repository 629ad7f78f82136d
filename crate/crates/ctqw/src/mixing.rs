//! Convergence of the walker's distribution to uniform.
//!
//! The distance convention throughout is `‖P − Q‖ = Σ_i |P_i − Q_i|` with
//! *no* factor 1/2, range `[0, 2]`, so the analytic statements
//!
//! ```text
//! Σ_j |P_j(t) − 1/N| ≤ N e^{−Γ(N−1)t/N}
//! M_inst,ε ≤ (1/Γ) ln(N/ε) [1 + 1/(N−1)]
//! M_ave,ε ≥ N/(Γ ε)
//! ```
//!
//! are checkable literally. Empirical mixing times are measured on sampled
//! trajectories, refined through the dense evaluator when one is available;
//! coherent total-variation curves oscillate, so both the first crossing and
//! the permanent crossing are supported and every report states which one it
//! used.

use thiserror::Error;

use crate::evolve::{DenseDistribution, Trajectory};

/// Normalisation slack accepted on distance inputs.
pub const TV_INPUT_NORM_TOL: f64 = 1e-6;
/// Relative time precision of crossing refinement.
pub const CROSSING_TIME_PRECISION: f64 = 1e-6;
/// Ratio of the geometric scan grid used for average mixing times.
pub const AVERAGE_SCAN_RATIO: f64 = 1.05;
/// Linear substeps inserted around an average-mixing crossing.
pub const AVERAGE_SCAN_REFINE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixingError {
    #[error("distributions have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("distribution sums to {sum}, more than {tol:e} away from 1")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("bound is infinite at gamma = 0")]
    InfiniteBound,
    #[error("gamma must be nonnegative and finite, got {0}")]
    BadGamma(f64),
    #[error("averaging horizon {tau} exceeds the trajectory horizon {horizon}")]
    HorizonExceeded { tau: f64, horizon: f64 },
    #[error("time must be nonnegative and finite, got {0}")]
    BadTime(f64),
}

fn check_epsilon(epsilon: f64) -> Result<(), MixingError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(MixingError::BadEpsilon(epsilon))
    }
}

fn check_normalized(p: &[f64]) -> Result<(), MixingError> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() <= TV_INPUT_NORM_TOL {
        Ok(())
    } else {
        Err(MixingError::NotNormalized { sum, tol: TV_INPUT_NORM_TOL })
    }
}

/// Total-variation distance `Σ_i |P_i − Q_i|` (no 1/2), range `[0, 2]`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, MixingError> {
    if p.len() != q.len() {
        return Err(MixingError::LengthMismatch { left: p.len(), right: q.len() });
    }
    check_normalized(p)?;
    check_normalized(q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// `Σ_j |P_j − 1/N|` without input validation; the workhorse for scans.
pub fn tv_to_uniform(p: &[f64]) -> f64 {
    let uniform = 1.0 / p.len() as f64;
    p.iter().map(|&x| (x - uniform).abs()).sum()
}

/// Decay envelope `N e^{−Γ(N−1)t/N}` dominating `Σ_j |P_j(t) − 1/N|` on
/// first-order trajectories.
pub fn tv_envelope(n: usize, gamma: f64, t: f64) -> f64 {
    n as f64 * (-gamma * (n as f64 - 1.0) / n as f64 * t).exp()
}

/// Which notion of "first time below ε" a search uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingMode {
    /// Earliest instant the distance dips below ε, even if it later rises.
    FirstCrossing,
    /// Earliest instant after which the distance stays below ε at every
    /// later sample.
    PermanentCrossing,
}

impl CrossingMode {
    pub fn label(self) -> &'static str {
        match self {
            CrossingMode::FirstCrossing => "first",
            CrossingMode::PermanentCrossing => "permanent",
        }
    }
}

impl std::str::FromStr for CrossingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(CrossingMode::FirstCrossing),
            "permanent" => Ok(CrossingMode::PermanentCrossing),
            other => Err(format!("unknown mode `{other}` (expected first|permanent)")),
        }
    }
}

/// Result of an empirical mixing-time search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingOutcome {
    Reached {
        time: f64,
        /// Time uncertainty of the reported crossing: the refinement width
        /// when dense output was available, otherwise the local sample
        /// spacing.
        resolution: f64,
    },
    /// The condition never held up to the horizon; carries the distance at
    /// the last sample rather than extrapolating.
    NotReached { final_tv: f64 },
}

impl MixingOutcome {
    pub fn time(&self) -> Option<f64> {
        match *self {
            MixingOutcome::Reached { time, .. } => Some(time),
            MixingOutcome::NotReached { .. } => None,
        }
    }
}

/// First instant the sampled distribution is within ε of uniform in total
/// variation, under the chosen crossing mode.
///
/// Sample-grid hits are refined by bisection on `dense` (when given) down to
/// relative time precision [`CROSSING_TIME_PRECISION`].
pub fn instantaneous_mixing_time(
    trajectory: &Trajectory,
    dense: Option<&dyn DenseDistribution>,
    epsilon: f64,
    mode: CrossingMode,
) -> Result<MixingOutcome, MixingError> {
    check_epsilon(epsilon)?;
    let times = trajectory.times();
    let tv: Vec<f64> = trajectory.distributions().iter().map(|d| tv_to_uniform(d)).collect();

    let crossing_index = match mode {
        CrossingMode::FirstCrossing => tv.iter().position(|&d| d < epsilon),
        CrossingMode::PermanentCrossing => {
            match tv.iter().rposition(|&d| d >= epsilon) {
                None => Some(0),
                Some(last_bad) if last_bad + 1 < tv.len() => Some(last_bad + 1),
                Some(_) => None,
            }
        }
    };

    let Some(idx) = crossing_index else {
        return Ok(MixingOutcome::NotReached { final_tv: *tv.last().expect("nonempty") });
    };
    if idx == 0 {
        // below ε from the start (ε > 2 − 2/N at t = 0)
        return Ok(MixingOutcome::Reached { time: times[0], resolution: 0.0 });
    }

    let (mut lo, mut hi) = (times[idx - 1], times[idx]);
    if let Some(model) = dense {
        while hi - lo > CROSSING_TIME_PRECISION * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if tv_to_uniform(&model.at(mid)) < epsilon {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(MixingOutcome::Reached { time: hi, resolution: hi - lo })
    } else {
        Ok(MixingOutcome::Reached { time: hi, resolution: hi - lo })
    }
}

/// Analytic ceiling `(1/Γ) ln(N/ε) [1 + 1/(N−1)]` on the instantaneous
/// mixing time; independent of the coupling range.
pub fn instantaneous_bound(n: usize, gamma: f64, epsilon: f64) -> Result<f64, MixingError> {
    check_epsilon(epsilon)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(MixingError::BadGamma(gamma));
    }
    if gamma == 0.0 {
        return Err(MixingError::InfiniteBound);
    }
    let nf = n as f64;
    Ok((nf / epsilon).ln() / gamma * (1.0 + 1.0 / (nf - 1.0)))
}

/// The corresponding ceiling for the plain cycle,
/// `(1/Γ) ln(N/ε) [1 + 2/(N−2)]`; strictly larger for `N > 3`.
pub fn cycle_instantaneous_bound(n: usize, gamma: f64, epsilon: f64) -> Result<f64, MixingError> {
    check_epsilon(epsilon)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(MixingError::BadGamma(gamma));
    }
    if gamma == 0.0 {
        return Err(MixingError::InfiniteBound);
    }
    let nf = n as f64;
    Ok((nf / epsilon).ln() / gamma * (1.0 + 2.0 / (nf - 2.0)))
}

/// Widest quadrature panel handed to Richardson refinement; the momentum
/// eigenvalues are O(l), so one time unit spans at most a few oscillation
/// periods and the refinement converges within a few doublings.
const QUAD_PANEL_WIDTH: f64 = 1.0;
const QUAD_MAX_LEVELS: usize = 9;
const QUAD_REL_TOL: f64 = 1e-10;

/// Incremental integrator of a trajectory's distribution over `[0, t]`,
/// advanced monotonically. With a dense evaluator every advance is a
/// composite trapezoid over panels of at most [`QUAD_PANEL_WIDTH`], each
/// Richardson-refined until stable; without one it is the plain trapezoid on
/// the stored sample grid with linear interpolation at the cut point.
struct RunningAverager<'a> {
    trajectory: &'a Trajectory,
    dense: Option<&'a dyn DenseDistribution>,
    t_acc: f64,
    value_acc: Vec<f64>,
    integral: Vec<f64>,
    /// Next stored sample with time > `t_acc` (sample-grid path only).
    cursor: usize,
}

impl<'a> RunningAverager<'a> {
    fn new(trajectory: &'a Trajectory, dense: Option<&'a dyn DenseDistribution>) -> Self {
        RunningAverager {
            trajectory,
            dense,
            t_acc: 0.0,
            value_acc: trajectory.distribution(0).to_vec(),
            integral: vec![0.0; trajectory.dim()],
            cursor: 1,
        }
    }

    /// `(1/τ) ∫_0^τ P dt`; `τ = 0` degenerates to `P(0)`. Calls must be
    /// nondecreasing in `τ`.
    fn average_at(&mut self, tau: f64) -> Vec<f64> {
        if tau == 0.0 {
            return self.trajectory.distribution(0).to_vec();
        }
        debug_assert!(tau >= self.t_acc, "averager must advance monotonically");
        match self.dense {
            Some(model) => self.advance_dense(model, tau),
            None => self.advance_grid(tau),
        }
        self.integral.iter().map(|v| v / tau).collect()
    }

    fn advance_dense(&mut self, model: &dyn DenseDistribution, tau: f64) {
        while self.t_acc < tau {
            let end = (self.t_acc + QUAD_PANEL_WIDTH).min(tau);
            let right = model.at(end);
            refined_panel(
                &mut self.integral,
                model,
                self.t_acc,
                end,
                &self.value_acc,
                &right,
            );
            self.t_acc = end;
            self.value_acc = right;
        }
    }

    fn advance_grid(&mut self, tau: f64) {
        let times = self.trajectory.times();
        let dists = self.trajectory.distributions();
        let dim = self.trajectory.dim();
        while self.cursor < times.len() && times[self.cursor] <= tau {
            let h = times[self.cursor] - self.t_acc;
            for j in 0..dim {
                self.integral[j] += 0.5 * h * (self.value_acc[j] + dists[self.cursor][j]);
            }
            self.t_acc = times[self.cursor];
            self.value_acc = dists[self.cursor].clone();
            self.cursor += 1;
        }
        if tau > self.t_acc && self.cursor < times.len() {
            // partial interval: linear interpolation is the best the bare
            // grid offers
            let (a, b) = (times[self.cursor - 1], times[self.cursor]);
            let w = (tau - a) / (b - a);
            let cut: Vec<f64> = dists[self.cursor - 1]
                .iter()
                .zip(&dists[self.cursor])
                .map(|(p, q)| p * (1.0 - w) + q * w)
                .collect();
            let h = tau - self.t_acc;
            for j in 0..dim {
                self.integral[j] += 0.5 * h * (self.value_acc[j] + cut[j]);
            }
            self.t_acc = tau;
            self.value_acc = cut;
        }
    }
}

/// Trapezoid on one panel `[a, b]`, bisected with Richardson extrapolation
/// until the extrapolated value moves less than [`QUAD_REL_TOL`]·(b−a).
fn refined_panel(
    integral: &mut [f64],
    model: &dyn DenseDistribution,
    a: f64,
    b: f64,
    left: &[f64],
    right: &[f64],
) {
    let dim = left.len();
    let mut trap: Vec<f64> = (0..dim).map(|j| 0.5 * (b - a) * (left[j] + right[j])).collect();
    let mut best = trap.clone();
    for level in 1..=QUAD_MAX_LEVELS {
        // trapezoid halving: new points are the midpoints of the current grid
        let pieces = 1usize << level;
        let h = (b - a) / pieces as f64;
        let mut mid_sum = vec![0.0f64; dim];
        for i in 0..pieces / 2 {
            let p = model.at(a + h * (2 * i + 1) as f64);
            for j in 0..dim {
                mid_sum[j] += p[j];
            }
        }
        let new_trap: Vec<f64> = (0..dim).map(|j| 0.5 * trap[j] + h * mid_sum[j]).collect();
        // Richardson step (Simpson-equivalent)
        let refined: Vec<f64> = (0..dim)
            .map(|j| (4.0 * new_trap[j] - trap[j]) / 3.0)
            .collect();
        let delta = best
            .iter()
            .zip(&refined)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        trap = new_trap;
        best = refined;
        if delta < QUAD_REL_TOL * (b - a).max(1e-6) {
            break;
        }
    }
    for j in 0..dim {
        integral[j] += best[j];
    }
}

/// Time-averaged distribution `(1/τ) ∫_0^τ P_j(t) dt`.
///
/// Composite trapezoid, Richardson-refined through the dense evaluator when
/// one is available (see [`RunningAverager`]); plain trapezoid on the sample
/// grid otherwise. `τ = 0` degenerates to `P(0)`.
pub fn average_distribution(
    trajectory: &Trajectory,
    dense: Option<&dyn DenseDistribution>,
    tau: f64,
) -> Result<Vec<f64>, MixingError> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(MixingError::BadTime(tau));
    }
    let horizon = trajectory.horizon();
    if tau > horizon * (1.0 + 1e-12) {
        return Err(MixingError::HorizonExceeded { tau, horizon });
    }
    Ok(RunningAverager::new(trajectory, dense).average_at(tau))
}

/// Outcome of the average-mixing scan plus the grid it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageMixingResult {
    pub outcome: MixingOutcome,
    /// Number of scan points evaluated.
    pub scan_points: usize,
}

/// Smallest scanned `T` such that the running average `P̄(τ)` stays within ε
/// of uniform for every scanned `τ > T` up to `horizon`.
///
/// The scan runs on a geometric grid (ratio [`AVERAGE_SCAN_RATIO`]) because
/// horizons scale like `N/(Γε)`; the interval containing the crossing is then
/// re-scanned linearly with [`AVERAGE_SCAN_REFINE`] substeps. The running
/// integral is accumulated incrementally over the scan grid (trapezoid on
/// scan intervals, dense-refined when available).
pub fn average_mixing_time(
    trajectory: &Trajectory,
    dense: Option<&dyn DenseDistribution>,
    epsilon: f64,
    horizon: f64,
) -> Result<AverageMixingResult, MixingError> {
    check_epsilon(epsilon)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(MixingError::BadTime(horizon));
    }
    if horizon > trajectory.horizon() * (1.0 + 1e-12) {
        return Err(MixingError::HorizonExceeded { tau: horizon, horizon: trajectory.horizon() });
    }

    let grid = geometric_grid(horizon);
    let tv = running_average_tv(trajectory, dense, &grid);
    let scan_points = grid.len();

    // t = 0+ counts as "from the start" when even the earliest averages pass
    let last_bad = tv.iter().rposition(|&d| d >= epsilon);
    let Some(last_bad) = last_bad else {
        return Ok(AverageMixingResult {
            outcome: MixingOutcome::Reached { time: 0.0, resolution: grid[0] },
            scan_points,
        });
    };
    if last_bad + 1 >= grid.len() {
        return Ok(AverageMixingResult {
            outcome: MixingOutcome::NotReached { final_tv: tv[tv.len() - 1] },
            scan_points,
        });
    }

    // linear refinement inside the bracketing interval
    let (lo, hi) = (grid[last_bad], grid[last_bad + 1]);
    let step = (hi - lo) / AVERAGE_SCAN_REFINE as f64;
    let fine: Vec<f64> = (1..=AVERAGE_SCAN_REFINE)
        .map(|i| lo + step * i as f64)
        .collect();
    let fine_tv = running_average_tv(trajectory, dense, &fine);
    let total_points = scan_points + fine.len();
    let crossing = fine_tv.iter().rposition(|&d| d >= epsilon);
    let (time, resolution) = match crossing {
        None => (fine[0], step),
        Some(i) if i + 1 < fine.len() => (fine[i + 1], step),
        Some(_) => (hi, step),
    };
    Ok(AverageMixingResult {
        outcome: MixingOutcome::Reached { time, resolution },
        scan_points: total_points,
    })
}

fn geometric_grid(horizon: f64) -> Vec<f64> {
    let t0 = horizon * 1e-4;
    let mut grid = vec![t0];
    loop {
        let next = grid.last().unwrap() * AVERAGE_SCAN_RATIO;
        if next >= horizon {
            break;
        }
        grid.push(next);
    }
    grid.push(horizon);
    grid
}

/// TV-to-uniform of the running average at each requested time (ascending).
/// The underlying integral is accumulated once across the whole sequence.
fn running_average_tv(
    trajectory: &Trajectory,
    dense: Option<&dyn DenseDistribution>,
    times: &[f64],
) -> Vec<f64> {
    let mut averager = RunningAverager::new(trajectory, dense);
    times
        .iter()
        .map(|&tau| tv_to_uniform(&averager.average_at(tau)))
        .collect()
}

/// Analytic floor `N/(Γε)` on the average mixing time, valid in the
/// `ΓT ≫ 1` regime. Computed and reported alongside the empirical scan; the
/// two are never asserted against each other.
pub fn average_lower_bound(n: usize, gamma: f64, epsilon: f64) -> Result<f64, MixingError> {
    check_epsilon(epsilon)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(MixingError::BadGamma(gamma));
    }
    if gamma == 0.0 {
        return Err(MixingError::InfiniteBound);
    }
    Ok(n as f64 / (gamma * epsilon))
}

/// Everything measured and computed for one `(N, l, Γ, ε)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub n: usize,
    pub l: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub mode: CrossingMode,
    pub horizon: f64,
    pub m_inst_empirical: MixingOutcome,
    /// `None` when Γ = 0 (the bound diverges).
    pub m_inst_bound: Option<f64>,
    pub m_inst_cycle_bound: Option<f64>,
    pub m_ave_empirical: MixingOutcome,
    pub m_ave_scan_points: usize,
    pub m_ave_lower_bound: Option<f64>,
    /// Samples where `Σ|P − 1/N|` exceeded the decay envelope by more than
    /// 1e-9. Expected to be zero on first-order trajectories; informational
    /// for the other sources.
    pub tv_envelope_violations: usize,
}

/// Assemble a full report from one trajectory.
pub fn mixing_report(
    trajectory: &Trajectory,
    dense: Option<&dyn DenseDistribution>,
    n: usize,
    l: usize,
    gamma: f64,
    epsilon: f64,
    mode: CrossingMode,
) -> Result<MixingReport, MixingError> {
    check_epsilon(epsilon)?;
    let horizon = trajectory.horizon();
    let m_inst_empirical = instantaneous_mixing_time(trajectory, dense, epsilon, mode)?;
    let m_ave = average_mixing_time(trajectory, dense, epsilon, horizon)?;
    let violations = trajectory
        .times()
        .iter()
        .zip(trajectory.distributions())
        .filter(|(&t, dist)| tv_to_uniform(dist) > tv_envelope(n, gamma, t) + 1e-9)
        .count();
    let finite = gamma > 0.0;
    Ok(MixingReport {
        n,
        l,
        gamma,
        epsilon,
        mode,
        horizon,
        m_inst_empirical,
        m_inst_bound: finite.then(|| instantaneous_bound(n, gamma, epsilon).expect("gamma > 0")),
        m_inst_cycle_bound: finite
            .then(|| cycle_instantaneous_bound(n, gamma, epsilon).expect("gamma > 0")),
        m_ave_empirical: m_ave.outcome,
        m_ave_scan_points: m_ave.scan_points,
        m_ave_lower_bound: finite.then(|| average_lower_bound(n, gamma, epsilon).expect("gamma > 0")),
        tv_envelope_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{sample_model, sample_times, PerturbativeModel, Source, Trajectory};
    use crate::network::NetworkSpec;

    #[test]
    fn tv_distance_reference_values() {
        let p = [1.0, 0.0, 0.0, 0.0];
        let q = [0.25; 4];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &q).unwrap() - 1.5).abs() < 1e-15);
        let r = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(tv_distance(&p, &r).unwrap(), 2.0);
        assert!(matches!(
            tv_distance(&p, &[0.5, 0.5]),
            Err(MixingError::LengthMismatch { .. })
        ));
        assert!(matches!(
            tv_distance(&[0.9, 0.0, 0.0, 0.0], &q),
            Err(MixingError::NotNormalized { .. })
        ));
    }

    #[test]
    fn tv_distance_is_a_metric_up_to_convention() {
        // symmetric, zero iff equal, triangle inequality on seeded triples
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let mut make = |len: usize| {
                let raw: Vec<f64> = (0..len).map(|_| next() + 1e-3).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect::<Vec<_>>()
            };
            let (p, q, r) = (make(6), make(6), make(6));
            let pq = tv_distance(&p, &q).unwrap();
            let qp = tv_distance(&q, &p).unwrap();
            assert!((pq - qp).abs() < 1e-15);
            let pr = tv_distance(&p, &r).unwrap();
            let rq = tv_distance(&r, &q).unwrap();
            assert!(pq <= pr + rq + 1e-12);
        }
        let p = [0.5, 0.25, 0.25];
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn envelope_reference_values() {
        assert_eq!(tv_envelope(7, 0.3, 0.0), 7.0);
        assert_eq!(tv_envelope(5, 0.0, 123.0), 5.0);
        let v = tv_envelope(100, 0.01, 1000.0);
        assert!((v - 100.0 * (-9.9f64).exp()).abs() < 1e-15);
        assert!((v - 5.0174682056175375e-3).abs() < 1e-12, "{v:e}");
    }

    #[test]
    fn instantaneous_bound_reference_values() {
        let b = instantaneous_bound(100, 0.01, 0.1).unwrap();
        assert!((b - 697.7530584830441).abs() < 1e-9, "{b}");
        // 1/Γ proportionality
        let b2 = instantaneous_bound(100, 0.02, 0.1).unwrap();
        assert!((b - 2.0 * b2).abs() < 1e-9);
        assert!(matches!(
            instantaneous_bound(100, 0.0, 0.1),
            Err(MixingError::InfiniteBound)
        ));
        assert!(matches!(
            instantaneous_bound(100, 0.01, 1.5),
            Err(MixingError::BadEpsilon(_))
        ));
    }

    #[test]
    fn cycle_bound_dominates() {
        let c = cycle_instantaneous_bound(100, 0.01, 0.1).unwrap();
        assert!((c - 704.8729876512384).abs() < 1e-9, "{c}");
        for n in 4..=100 {
            let reg = instantaneous_bound(n, 0.01, 0.1).unwrap();
            let cyc = cycle_instantaneous_bound(n, 0.01, 0.1).unwrap();
            assert!(cyc > reg, "N={n}");
        }
        // both approach (1/Γ) ln(N/ε) from above as N grows
        let base = (1e6f64 / 0.1).ln() / 0.01;
        let reg = instantaneous_bound(1_000_000, 0.01, 0.1).unwrap();
        let cyc = cycle_instantaneous_bound(1_000_000, 0.01, 0.1).unwrap();
        assert!((reg / base - 1.0).abs() < 1e-5);
        assert!((cyc / base - 1.0).abs() < 1e-5);
        assert!((cyc / reg - 1.0).abs() < 1e-5);
    }

    #[test]
    fn average_lower_bound_reference_values() {
        let v = average_lower_bound(100, 0.001, 0.01).unwrap();
        assert!((v - 1.0e7).abs() < 1e-3, "{v}");
        let w = average_lower_bound(8, 0.0125, 0.1).unwrap();
        assert!((w - 6400.0).abs() < 1e-9, "{w}");
        // linear in N, inverse in Γ and ε
        let a = average_lower_bound(10, 0.001, 0.1).unwrap();
        assert!((average_lower_bound(20, 0.001, 0.1).unwrap() - 2.0 * a).abs() < 1e-6);
        assert!((average_lower_bound(10, 0.002, 0.1).unwrap() - a / 2.0).abs() < 1e-6);
        assert!((average_lower_bound(10, 0.001, 0.2).unwrap() - a / 2.0).abs() < 1e-6);
        assert!(matches!(
            average_lower_bound(10, 0.0, 0.1),
            Err(MixingError::InfiniteBound)
        ));
    }

    fn uniform_trajectory(n: usize, len: usize) -> Trajectory {
        let times: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let dists = vec![vec![1.0 / n as f64; n]; len];
        Trajectory::new(times, dists, Source::Classical, 1.0).unwrap()
    }

    #[test]
    fn instantaneous_zero_when_epsilon_exceeds_initial_distance() {
        let n = 4;
        let spec = NetworkSpec::unit(10, 2).unwrap();
        let _ = spec;
        let mut dists = vec![vec![0.0; n]; 3];
        dists[0][0] = 1.0;
        dists[1] = vec![0.25; 4];
        dists[2] = vec![0.25; 4];
        let traj = Trajectory::new(vec![0.0, 1.0, 2.0], dists, Source::Classical, 1.0).unwrap();
        // tv at t=0 is 1.5; any ε above that crosses immediately
        let out = instantaneous_mixing_time(&traj, None, 0.99, CrossingMode::FirstCrossing)
            .unwrap();
        assert!(matches!(out, MixingOutcome::Reached { time, .. } if time == 1.0));
        // ε > 2 - 2/N means even the δ-distribution qualifies
        let traj0 = uniform_trajectory(4, 2);
        let out = instantaneous_mixing_time(&traj0, None, 0.5, CrossingMode::FirstCrossing)
            .unwrap();
        assert!(matches!(out, MixingOutcome::Reached { time, .. } if time == 0.0));
    }

    #[test]
    fn permanent_crossing_skips_transient_dips() {
        let n = 4;
        let uni = vec![0.25; n];
        let peaked = vec![0.55, 0.15, 0.15, 0.15]; // tv = 0.6
        let dists = vec![peaked.clone(), uni.clone(), peaked.clone(), uni.clone(), uni.clone()];
        let times = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let traj = Trajectory::new(times, dists, Source::Classical, 1.0).unwrap();
        let first = instantaneous_mixing_time(&traj, None, 0.5, CrossingMode::FirstCrossing)
            .unwrap();
        assert!(matches!(first, MixingOutcome::Reached { time, .. } if time == 1.0));
        let perm =
            instantaneous_mixing_time(&traj, None, 0.5, CrossingMode::PermanentCrossing).unwrap();
        assert!(matches!(perm, MixingOutcome::Reached { time, .. } if time == 3.0));

        // a trajectory that stays peaked never reaches ε below its tv
        let stuck = Trajectory::new(
            vec![0.0, 1.0, 2.0],
            vec![peaked.clone(), peaked.clone(), peaked],
            Source::Classical,
            1.0,
        )
        .unwrap();
        for mode in [CrossingMode::FirstCrossing, CrossingMode::PermanentCrossing] {
            let out = instantaneous_mixing_time(&stuck, None, 0.5, mode).unwrap();
            assert!(
                matches!(out, MixingOutcome::NotReached { final_tv } if (final_tv - 0.6).abs() < 1e-12),
                "{mode:?}"
            );
        }
        // a trailing violation defeats the permanent mode but not the first
        let tail = Trajectory::new(
            vec![0.0, 1.0],
            vec![uni.clone(), vec![0.55, 0.15, 0.15, 0.15]],
            Source::Classical,
            1.0,
        )
        .unwrap();
        let first = instantaneous_mixing_time(&tail, None, 0.5, CrossingMode::FirstCrossing)
            .unwrap();
        assert!(matches!(first, MixingOutcome::Reached { time, .. } if time == 0.0));
        let perm =
            instantaneous_mixing_time(&tail, None, 0.5, CrossingMode::PermanentCrossing).unwrap();
        assert!(matches!(perm, MixingOutcome::NotReached { .. }));
    }

    #[test]
    fn perturbative_crossing_respects_analytic_bound() {
        let spec = NetworkSpec::unit(10, 2).unwrap();
        let gamma = 0.01;
        let epsilon = 0.1;
        let model = PerturbativeModel::new(&spec, gamma, 0).unwrap();
        let bound = instantaneous_bound(10, gamma, epsilon).unwrap();
        let times = sample_times(1.2 * bound, bound / 400.0).unwrap();
        let traj = sample_model(&model, &times).unwrap();
        let out = instantaneous_mixing_time(&traj, Some(&model), epsilon, CrossingMode::FirstCrossing)
            .unwrap();
        match out {
            MixingOutcome::Reached { time, .. } => {
                assert!(time <= bound, "empirical {time} vs bound {bound}")
            }
            MixingOutcome::NotReached { final_tv } => {
                panic!("should cross below ε, final tv {final_tv}")
            }
        }
    }

    #[test]
    fn average_distribution_degenerate_cases() {
        let traj = uniform_trajectory(5, 4);
        let avg = average_distribution(&traj, None, 3.0).unwrap();
        assert!(avg.iter().all(|&x| (x - 0.2).abs() < 1e-12));
        let at_zero = average_distribution(&traj, None, 0.0).unwrap();
        assert_eq!(at_zero, traj.distribution(0));
        assert!(matches!(
            average_distribution(&traj, None, 10.0),
            Err(MixingError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn average_mixing_monotone_in_epsilon() {
        let spec = NetworkSpec::unit(10, 2).unwrap();
        let model = PerturbativeModel::new(&spec, 0.01, 0).unwrap();
        let times = sample_times(4000.0, 10.0).unwrap();
        let traj = sample_model(&model, &times).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.05, 0.1, 0.2, 0.4] {
            let res = average_mixing_time(&traj, Some(&model), eps, 4000.0).unwrap();
            let t = res.outcome.time().expect("reached");
            assert!(t <= last + 1e-9, "ε={eps}: {t} > {last}");
            last = t;
        }
    }

    #[test]
    fn already_uniform_trajectory_mixes_at_zero() {
        let traj = uniform_trajectory(6, 8);
        let res = average_mixing_time(&traj, None, 0.3, 7.0).unwrap();
        assert!(matches!(res.outcome, MixingOutcome::Reached { time, .. } if time == 0.0));
    }

    #[test]
    fn report_assembles_all_fields() {
        let spec = NetworkSpec::unit(8, 2).unwrap();
        let gamma = 0.005;
        let model = PerturbativeModel::new(&spec, gamma, 0).unwrap();
        let bound = instantaneous_bound(8, gamma, 0.1).unwrap();
        let times = sample_times(1.5 * bound, bound / 300.0).unwrap();
        let traj = sample_model(&model, &times).unwrap();
        let report =
            mixing_report(&traj, Some(&model), 8, 2, gamma, 0.1, CrossingMode::FirstCrossing)
                .unwrap();
        assert_eq!(report.tv_envelope_violations, 0);
        assert!(report.m_inst_bound.unwrap() > 0.0);
        assert!(report.m_inst_cycle_bound.unwrap() > report.m_inst_bound.unwrap());
        assert!(report.m_ave_lower_bound.unwrap() > 0.0);
        assert!(report.m_inst_empirical.time().is_some());
    }
}
