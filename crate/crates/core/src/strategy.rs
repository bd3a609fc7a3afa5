//! The (risk, trade-off) decision-strategy space and automatic order weights.
//!
//! A feasible point `(r, t)` lies under the parabola `t = 4r(1 - r)`. Its order
//! weights come from a normal density truncated to `[0, 1]` whose mean is `r`
//! and whose standard deviation is `t / √12`, so `t = 1` is the uniform density
//! and uniform order weights `1/n`. The density is integrated over `n` equal
//! bins of `[0, 1]`.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

/// Slack on the parabola test.
pub const FEASIBILITY_SLACK: f64 = 1e-12;
/// Largest scale accepted for the parent normal.
pub const SIGMA_MAX: f64 = 1e3;
/// Smallest scale explored by the moment solver.
pub const SIGMA_MIN: f64 = 1e-6;
/// Location bracket explored by the moment solver.
pub const MU_BRACKET: (f64, f64) = (-50.0, 51.0);
/// Mean and standard deviation must be matched to this absolute accuracy.
pub const MOMENT_TOLERANCE: f64 = 1e-6;
/// Iteration cap for each bisection loop.
pub const MAX_BISECTIONS: usize = 200;
/// Default number of design points.
pub const DEFAULT_DESIGN_SIZE: usize = 1000;

const SQRT_12: f64 = 3.464_101_615_137_754_6;

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyError {
    OutOfUnitSquare {
        r: f64,
        t: f64,
    },
    InfeasibleStrategy {
        r: f64,
        t: f64,
    },
    /// The point is a corner or lies on the `t = 0` edge; it has no generating density.
    DegeneratePoint {
        r: f64,
        t: f64,
    },
    DegenerateSigma(f64),
    /// No truncated normal within the parameter bounds reaches the target moments.
    NoSolution {
        r: f64,
        t: f64,
    },
    Unconverged {
        r: f64,
        t: f64,
    },
    TooFewCriteria(usize),
    InvalidWeights(&'static str),
}

impl fmt::Display for StrategyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyError::OutOfUnitSquare { r, t } => {
                write!(f, "(r={r}, t={t}) lies outside the unit square")
            }
            StrategyError::InfeasibleStrategy { r, t } => {
                write!(f, "(r={r}, t={t}) lies above the parabola t = 4r(1-r)")
            }
            StrategyError::DegeneratePoint { r, t } => {
                write!(
                    f,
                    "(r={r}, t={t}) has no generating density (t = 0 or r at a bound)"
                )
            }
            StrategyError::DegenerateSigma(s) => {
                write!(f, "truncated normal scale {s} must lie in (0, {SIGMA_MAX}]")
            }
            StrategyError::NoSolution { r, t } => write!(
                f,
                "no truncated normal on [0,1] has mean {r} and standard deviation {}",
                t / SQRT_12
            ),
            StrategyError::Unconverged { r, t } => {
                write!(f, "moment matching did not converge for (r={r}, t={t})")
            }
            StrategyError::TooFewCriteria(n) => write!(f, "need at least 2 order weights, got {n}"),
            StrategyError::InvalidWeights(why) => write!(f, "invalid order weights: {why}"),
        }
    }
}

impl core::error::Error for StrategyError {}

impl StrategyError {
    /// True for failures of the numerical solver (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            StrategyError::NoSolution { .. } | StrategyError::Unconverged { .. }
        )
    }
}

/// A `(risk, trade-off)` coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionPoint {
    pub r: f64,
    pub t: f64,
}

impl DecisionPoint {
    pub const RISK_AVERSE: DecisionPoint = DecisionPoint { r: 0.0, t: 0.0 };
    pub const RISK_TAKING: DecisionPoint = DecisionPoint { r: 1.0, t: 0.0 };
    pub const FULL_TRADE_OFF: DecisionPoint = DecisionPoint { r: 0.5, t: 1.0 };

    pub fn new(r: f64, t: f64) -> Self {
        DecisionPoint { r, t }
    }

    pub fn feasible(&self) -> Result<bool, StrategyError> {
        feasible(*self)
    }
}

/// `t <= 4r(1-r)` (with [`FEASIBILITY_SLACK`]). Errors outside `[0,1]²`.
pub fn feasible(p: DecisionPoint) -> Result<bool, StrategyError> {
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !in_unit(p.r) || !in_unit(p.t) {
        return Err(StrategyError::OutOfUnitSquare { r: p.r, t: p.t });
    }
    Ok(p.t <= 4.0 * p.r * (1.0 - p.r) + FEASIBILITY_SLACK)
}

/// A normal `N(mu, sigma²)` truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalSpec {
    mu: f64,
    sigma: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, StrategyError> {
        if !(sigma > 0.0 && sigma <= SIGMA_MAX) || !mu.is_finite() {
            return Err(StrategyError::DegenerateSigma(sigma));
        }
        Ok(TruncatedNormalSpec { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn standardized_bounds(&self) -> (f64, f64) {
        (-self.mu / self.sigma, (1.0 - self.mu) / self.sigma)
    }
}

/// Mean and standard deviation of the truncated density.
pub fn truncnorm_moments(spec: &TruncatedNormalSpec) -> (f64, f64) {
    moments_unchecked(spec.mu, spec.sigma)
}

fn moments_unchecked(mu: f64, sigma: f64) -> (f64, f64) {
    let (a, b) = (-mu / sigma, (1.0 - mu) / sigma);
    let (m, v) = normal::interval_moments(a, b);
    (mu + sigma * m, sigma * libm::sqrt(v))
}

/// Location matching `target_mean` at scale `sigma`, if it lies in [`MU_BRACKET`].
fn solve_location(target_mean: f64, sigma: f64) -> Option<f64> {
    let (mut lo, mut hi) = MU_BRACKET;
    if moments_unchecked(lo, sigma).0 > target_mean || moments_unchecked(hi, sigma).0 < target_mean
    {
        return None;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = moments_unchecked(mid, sigma).0;
        if m == target_mean {
            return Some(mid);
        }
        if m < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Finds the truncated normal with mean `r` and standard deviation `t / √12`.
///
/// Requires a feasible point with `0 < r < 1` and `t > 0`. Points `r > 1/2` are
/// solved through their mirror image `1 - r` so that mirrored points yield
/// exactly mirrored densities.
pub fn solve_generating_distribution(
    p: DecisionPoint,
) -> Result<TruncatedNormalSpec, StrategyError> {
    if !feasible(p)? {
        return Err(StrategyError::InfeasibleStrategy { r: p.r, t: p.t });
    }
    if p.t <= 0.0 || p.r <= 0.0 || p.r >= 1.0 {
        return Err(StrategyError::DegeneratePoint { r: p.r, t: p.t });
    }
    if p.r > 0.5 {
        let mirrored = solve_lower_half(1.0 - p.r, p.t).map_err(|e| match e {
            StrategyError::NoSolution { .. } => StrategyError::NoSolution { r: p.r, t: p.t },
            StrategyError::Unconverged { .. } => StrategyError::Unconverged { r: p.r, t: p.t },
            other => other,
        })?;
        return TruncatedNormalSpec::new(1.0 - mirrored.mu, mirrored.sigma);
    }
    solve_lower_half(p.r, p.t)
}

fn solve_lower_half(r: f64, t: f64) -> Result<TruncatedNormalSpec, StrategyError> {
    let target_std = t / SQRT_12;
    let no_solution = StrategyError::NoSolution { r, t };
    // std at a given scale with the location solved for the target mean;
    // None past the scale where the mean is no longer reachable.
    let std_at = |sigma: f64| solve_location(r, sigma).map(|mu| (mu, moments_unchecked(mu, sigma)));

    let accept = |mu: f64, sigma: f64, (mean, std): (f64, f64)| {
        if (mean - r).abs() <= MOMENT_TOLERANCE && (std - target_std).abs() <= MOMENT_TOLERANCE {
            TruncatedNormalSpec::new(mu, sigma).ok()
        } else {
            None
        }
    };

    let Some((mu0, m0)) = std_at(SIGMA_MIN) else {
        return Err(no_solution);
    };
    if m0.1 >= target_std {
        return accept(mu0, SIGMA_MIN, m0).ok_or(no_solution);
    }
    if let Some((mu, m)) = std_at(SIGMA_MAX) {
        if m.1 <= target_std {
            // Spread saturates at the uniform limit.
            return accept(mu, SIGMA_MAX, m).ok_or(no_solution);
        }
    }

    // Bisection on ln(sigma): std below target => grow, above or unreachable => shrink.
    let (mut lo, mut hi) = (libm::log(SIGMA_MIN), libm::log(SIGMA_MAX));
    let mut hi_reachable = std_at(SIGMA_MAX).is_some();
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match std_at(libm::exp(mid)) {
            Some((_, (_, std))) if std < target_std => lo = mid,
            Some(_) => {
                hi = mid;
                hi_reachable = true;
            }
            None => {
                hi = mid;
                hi_reachable = false;
            }
        }
    }
    for sigma in [libm::exp(lo), libm::exp(hi)] {
        if let Some((mu, m)) = std_at(sigma) {
            if let Some(spec) = accept(mu, sigma, m) {
                return Ok(spec);
            }
        }
    }
    if hi_reachable {
        Err(StrategyError::Unconverged { r, t })
    } else {
        // The spread needed sits beyond the largest scale at which the mean is attainable.
        Err(no_solution)
    }
}

/// Order weights: non-negative and summing to one. Position `j` weighs the
/// `j`-th lowest criterion value of a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderWeights {
    w: Vec<f64>,
    provenance: Option<DecisionPoint>,
}

impl OrderWeights {
    /// Hand-specified weights; they must sum to 1 within 1e-9 and are renormalized.
    pub fn new(w: Vec<f64>) -> Result<Self, StrategyError> {
        if w.len() < 2 {
            return Err(StrategyError::TooFewCriteria(w.len()));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(StrategyError::InvalidWeights(
                "entries must be finite and non-negative",
            ));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(StrategyError::InvalidWeights("entries must sum to 1"));
        }
        Ok(OrderWeights {
            w: w.into_iter().map(|x| x / total).collect(),
            provenance: None,
        })
    }

    pub fn uniform(n: usize) -> Result<Self, StrategyError> {
        if n < 2 {
            return Err(StrategyError::TooFewCriteria(n));
        }
        Ok(OrderWeights {
            w: alloc::vec![1.0 / n as f64; n],
            provenance: None,
        })
    }

    /// All mass on the 1-based `position`.
    pub fn unit(n: usize, position: usize) -> Result<Self, StrategyError> {
        if n < 2 {
            return Err(StrategyError::TooFewCriteria(n));
        }
        if position == 0 || position > n {
            return Err(StrategyError::InvalidWeights("unit position out of range"));
        }
        let mut w = alloc::vec![0.0; n];
        w[position - 1] = 1.0;
        Ok(OrderWeights {
            w,
            provenance: None,
        })
    }

    fn with_provenance(mut self, p: DecisionPoint) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn provenance(&self) -> Option<DecisionPoint> {
        self.provenance
    }
}

/// Integrates the truncated density over the bins `[(j-1)/n, j/n]`.
pub fn discretize(spec: &TruncatedNormalSpec, n: usize) -> Result<OrderWeights, StrategyError> {
    if n < 2 {
        return Err(StrategyError::TooFewCriteria(n));
    }
    let (a, b) = spec.standardized_bounds();
    let edges: Vec<f64> = (0..=n)
        .map(|j| match j {
            0 => a,
            j if j == n => b,
            j => (j as f64 / n as f64 - spec.mu) / spec.sigma,
        })
        .collect();
    let masses = normal::bin_masses(&edges);
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(StrategyError::InvalidWeights(
            "density has no mass on [0, 1]",
        ));
    }
    Ok(OrderWeights {
        w: masses.into_iter().map(|m| m / total).collect(),
        provenance: None,
    })
}

/// Order weights for a feasible decision point.
///
/// `t = 0` puts all the mass on the bin holding `r` (bin `min(⌊rn⌋ + 1, n)`),
/// so `(0, 0)` and `(1, 0)` give the min and max operators. `t = 1` is the
/// parabola vertex and gives the uniform weights exactly. Everything else goes
/// through [`solve_generating_distribution`] and [`discretize`].
pub fn generate_weights(p: DecisionPoint, n: usize) -> Result<OrderWeights, StrategyError> {
    if n < 2 {
        return Err(StrategyError::TooFewCriteria(n));
    }
    if !feasible(p)? {
        return Err(StrategyError::InfeasibleStrategy { r: p.r, t: p.t });
    }
    if p.t == 0.0 || p.r == 0.0 || p.r == 1.0 {
        let bin = ((p.r * n as f64) as usize + 1).min(n);
        return Ok(OrderWeights::unit(n, bin)?.with_provenance(p));
    }
    if p.t >= 1.0 - FEASIBILITY_SLACK {
        return Ok(OrderWeights::uniform(n)?.with_provenance(p));
    }
    let spec = solve_generating_distribution(p)?;
    Ok(discretize(&spec, n)?.with_provenance(p))
}

/// Centre of mass of the weights over bin midpoints `(2j - 1) / 2n`.
pub fn empirical_risk(w: &OrderWeights) -> f64 {
    let n = w.len() as f64;
    w.as_slice()
        .iter()
        .enumerate()
        .map(|(j, wj)| wj * (2.0 * j as f64 + 1.0) / (2.0 * n))
        .sum()
}

/// A reproducible list of feasible decision points.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalDesign {
    pub points: Vec<DecisionPoint>,
    pub seed: u64,
    /// Candidates drawn from the unit square to obtain `points`.
    pub draws: u64,
}

impl ExperimentalDesign {
    /// The three vertices: min, max and weighted linear combination.
    pub fn corners() -> Self {
        ExperimentalDesign {
            points: alloc::vec![
                DecisionPoint::RISK_AVERSE,
                DecisionPoint::RISK_TAKING,
                DecisionPoint::FULL_TRADE_OFF
            ],
            seed: 0,
            draws: 0,
        }
    }

    pub fn from_points(points: Vec<DecisionPoint>) -> Result<Self, StrategyError> {
        for p in &points {
            if !feasible(*p)? {
                return Err(StrategyError::InfeasibleStrategy { r: p.r, t: p.t });
            }
        }
        Ok(ExperimentalDesign {
            points,
            seed: 0,
            draws: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.points.len() as f64 / self.draws as f64
    }
}

/// Rejection sampling of `m` points uniformly under the parabola.
pub fn sample_design(m: usize, seed: u64) -> ExperimentalDesign {
    sample_design_with(m, seed, |_| true)
}

/// As [`sample_design`], additionally rejecting feasible points for which
/// `accept` returns false. One generator is consumed sequentially, two
/// uniforms (r then t) per candidate.
pub fn sample_design_with<F>(m: usize, seed: u64, mut accept: F) -> ExperimentalDesign
where
    F: FnMut(DecisionPoint) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(m);
    let mut draws = 0u64;
    while points.len() < m {
        let r: f64 = rng.random();
        let t: f64 = rng.random();
        draws += 1;
        let p = DecisionPoint { r, t };
        if p.t <= 4.0 * p.r * (1.0 - p.r) && accept(p) {
            points.push(p);
        }
    }
    ExperimentalDesign {
        points,
        seed,
        draws,
    }
}
