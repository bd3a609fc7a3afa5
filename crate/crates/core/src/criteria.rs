//! Criterion preparation from a land-use / land-cover (LU/LC) map, an expert
//! capacity matrix and biophysical modifier layers.
//!
//! A criterion cell is computed as
//! `suitability = 1 - mean_expert_score(class) / S_max * modifier_factor`:
//! the modifier scales the ecosystem-service capacity, and suitability for
//! urban use is its complement.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::grid::{GridError, Raster};

pub const DEFAULT_SCORE_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PrepError {
    UnknownClass(i64),
    UnknownService(String),
    MissingScore { class: i64, service: String },
    InvalidClassCode(f64),
    ScoreOutOfRange { score: f64, max: f64 },
    InvalidScoreMax(f64),
    NoExperts,
    OutOfRange(f64),
    UnknownCategory(i64),
    InvalidFactor(f64),
    InvalidBreakpoints,
    AllInvalid,
    NegativeValue { cell: usize, value: f64 },
    NegativeDistance(f64),
    InvalidVotes { count: u32, total: u32 },
    ZeroWeight(String),
    Alignment,
    Grid(GridError),
}

impl fmt::Display for PrepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrepError::UnknownClass(c) => write!(f, "unknown LU/LC class {c}"),
            PrepError::UnknownService(s) => write!(f, "unknown ecosystem service `{s}`"),
            PrepError::MissingScore { class, service } => {
                write!(f, "no expert scored class {class} for `{service}`")
            }
            PrepError::InvalidClassCode(v) => write!(f, "class code {v} is not an integer"),
            PrepError::ScoreOutOfRange { score, max } => {
                write!(f, "score {score} outside [0, {max}]")
            }
            PrepError::InvalidScoreMax(m) => write!(f, "score scale maximum {m} must be > 0"),
            PrepError::NoExperts => write!(f, "capacity matrix holds no expert scores"),
            PrepError::OutOfRange(v) => write!(f, "capacity {v} outside [0, 1]"),
            PrepError::UnknownCategory(c) => write!(f, "category {c} has no factor"),
            PrepError::InvalidFactor(v) => write!(f, "factor {v} outside [0, 1]"),
            PrepError::InvalidBreakpoints => {
                write!(
                    f,
                    "distance breakpoints need 0 < d1 < d2 and floor in [0, 1]"
                )
            }
            PrepError::AllInvalid => write!(f, "modifier raster has no valid cell"),
            PrepError::NegativeValue { cell, value } => {
                write!(f, "cell {cell} holds negative value {value}")
            }
            PrepError::NegativeDistance(d) => write!(f, "distance {d} is negative"),
            PrepError::InvalidVotes { count, total } => {
                write!(f, "{count} votes out of {total} experts")
            }
            PrepError::ZeroWeight(s) => write!(f, "service `{s}` received no votes"),
            PrepError::Alignment => write!(f, "modifier raster is not aligned with the LU/LC map"),
            PrepError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for PrepError {}

impl From<GridError> for PrepError {
    fn from(e: GridError) -> Self {
        PrepError::Grid(e)
    }
}

/// Expert scores of each LU/LC class's capacity to supply each service.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityMatrix {
    score_max: f64,
    scores: BTreeMap<(i64, String), Vec<f64>>,
    classes: BTreeSet<i64>,
    services: BTreeSet<String>,
    experts: BTreeSet<String>,
}

impl CapacityMatrix {
    pub fn new(score_max: f64) -> Result<Self, PrepError> {
        if !(score_max > 0.0 && score_max.is_finite()) {
            return Err(PrepError::InvalidScoreMax(score_max));
        }
        Ok(CapacityMatrix {
            score_max,
            scores: BTreeMap::new(),
            classes: BTreeSet::new(),
            services: BTreeSet::new(),
            experts: BTreeSet::new(),
        })
    }

    pub fn insert(
        &mut self,
        expert: &str,
        class: i64,
        service: &str,
        score: f64,
    ) -> Result<(), PrepError> {
        if !(0.0..=self.score_max).contains(&score) {
            return Err(PrepError::ScoreOutOfRange {
                score,
                max: self.score_max,
            });
        }
        self.scores
            .entry((class, service.to_string()))
            .or_default()
            .push(score);
        self.classes.insert(class);
        self.services.insert(service.to_string());
        self.experts.insert(expert.to_string());
        Ok(())
    }

    pub fn score_max(&self) -> f64 {
        self.score_max
    }

    pub fn expert_count(&self) -> usize {
        self.experts.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = i64> + '_ {
        self.classes.iter().copied()
    }

    pub fn services(&self) -> impl Iterator<Item = &str> {
        self.services.iter().map(String::as_str)
    }
}

/// Mean expert score for `(class, service)` rescaled to `[0, 1]`.
pub fn mean_expert_score(m: &CapacityMatrix, class: i64, service: &str) -> Result<f64, PrepError> {
    if m.experts.is_empty() {
        return Err(PrepError::NoExperts);
    }
    if !m.services.contains(service) {
        return Err(PrepError::UnknownService(service.to_string()));
    }
    if !m.classes.contains(&class) {
        return Err(PrepError::UnknownClass(class));
    }
    let scores =
        m.scores
            .get(&(class, service.to_string()))
            .ok_or_else(|| PrepError::MissingScore {
                class,
                service: service.to_string(),
            })?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok((mean / m.score_max).clamp(0.0, 1.0))
}

/// Urban suitability from a service capacity: `1 - capacity`.
pub fn invert_to_suitability(capacity: f64) -> Result<f64, PrepError> {
    if !(0.0..=1.0).contains(&capacity) {
        return Err(PrepError::OutOfRange(capacity));
    }
    Ok(1.0 - capacity)
}

/// Factor lookup for a categorical biophysical layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalTable {
    factors: BTreeMap<i64, f64>,
}

impl CategoricalTable {
    pub fn new(entries: impl IntoIterator<Item = (i64, f64)>) -> Result<Self, PrepError> {
        let factors: BTreeMap<i64, f64> = entries.into_iter().collect();
        if let Some(&bad) = factors.values().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(PrepError::InvalidFactor(bad));
        }
        Ok(CategoricalTable { factors })
    }

    /// Soil quality, category 1 (most fertile) to 16 (salted): `1 - 0.05 (k - 1)`.
    pub fn soil_quality() -> Self {
        CategoricalTable {
            factors: (1..=16).map(|k| (k, 1.0 - 0.05 * (k - 1) as f64)).collect(),
        }
    }

    /// Protected or ecologically important habitat: 1 inside (code 1), 0.75 outside (code 0).
    pub fn protected_areas() -> Self {
        CategoricalTable {
            factors: [(0, 0.75), (1, 1.0)].into_iter().collect(),
        }
    }

    /// Flooding hazard codes from [`FloodHazard::code`].
    pub fn flooding_hazard() -> Self {
        CategoricalTable {
            factors: FloodHazard::ALL
                .iter()
                .map(|h| (h.code(), h.factor()))
                .collect(),
        }
    }

    /// Fire hazard codes from [`FireHazard::code`].
    pub fn fire_hazard() -> Self {
        CategoricalTable {
            factors: FireHazard::ALL
                .iter()
                .map(|h| (h.code(), h.factor()))
                .collect(),
        }
    }

    pub fn categories(&self) -> impl Iterator<Item = i64> + '_ {
        self.factors.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloodHazard {
    High,
    Medium,
    None,
}

impl FloodHazard {
    pub const ALL: [FloodHazard; 3] = [FloodHazard::High, FloodHazard::Medium, FloodHazard::None];

    /// Raster code: 1 high, 2 medium, 3 none.
    pub fn code(self) -> i64 {
        match self {
            FloodHazard::High => 1,
            FloodHazard::Medium => 2,
            FloodHazard::None => 3,
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            FloodHazard::High => 1.0,
            FloodHazard::Medium => 0.5,
            FloodHazard::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FireHazard {
    VeryHigh,
    High,
    Medium,
    Low,
    VeryLow,
    None,
}

impl FireHazard {
    pub const ALL: [FireHazard; 6] = [
        FireHazard::VeryHigh,
        FireHazard::High,
        FireHazard::Medium,
        FireHazard::Low,
        FireHazard::VeryLow,
        FireHazard::None,
    ];

    /// Raster code: 1 (very high) to 6 (none).
    pub fn code(self) -> i64 {
        FireHazard::ALL.iter().position(|&h| h == self).unwrap() as i64 + 1
    }

    /// 1.0 for very high, 0.1 less per category, 0.5 for none: fire risk never vanishes.
    pub fn factor(self) -> f64 {
        1.0 - 0.1 * (self.code() - 1) as f64
    }
}

/// Breakpoints of the road-distance accessibility factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBreakpoints {
    pub near: f64,
    pub far: f64,
    pub floor: f64,
}

impl Default for DistanceBreakpoints {
    fn default() -> Self {
        DistanceBreakpoints {
            near: 300.0,
            far: 1000.0,
            floor: 0.5,
        }
    }
}

impl DistanceBreakpoints {
    pub fn new(near: f64, far: f64, floor: f64) -> Result<Self, PrepError> {
        if !(near > 0.0 && near < far && far.is_finite() && (0.0..=1.0).contains(&floor)) {
            return Err(PrepError::InvalidBreakpoints);
        }
        Ok(DistanceBreakpoints { near, far, floor })
    }
}

/// How a biophysical layer modulates the expert score cell by cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ModifierRule {
    Categorical(CategoricalTable),
    /// `min(1, value / (0.98 · max))`.
    Continuous98,
    PiecewiseDistance(DistanceBreakpoints),
}

pub fn categorical_factor(table: &CategoricalTable, class: i64) -> Result<f64, PrepError> {
    table
        .factors
        .get(&class)
        .copied()
        .ok_or(PrepError::UnknownCategory(class))
}

/// Rescales a non-negative raster so that 98 % of its valid maximum maps to 1.
pub fn continuous_98(values: &Raster) -> Result<Raster, PrepError> {
    let mut max = f64::NEG_INFINITY;
    for cell in 0..values.len() {
        if let Some(v) = values.get(cell) {
            if v < 0.0 {
                return Err(PrepError::NegativeValue { cell, value: v });
            }
            max = max.max(v);
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(PrepError::AllInvalid);
    }
    let scale = 0.98 * max;
    let out = (0..values.len())
        .map(|cell| match values.get(cell) {
            Some(_) if scale == 0.0 => 1.0,
            Some(v) => (v / scale).min(1.0),
            None => values.meta().nodata_value,
        })
        .collect();
    Ok(Raster::new(*values.meta(), out)?)
}

/// 1 up to `near`, linear down to `floor` at `far`, then `floor`.
pub fn road_distance_factor(d: f64, bp: &DistanceBreakpoints) -> Result<f64, PrepError> {
    if d < 0.0 || d.is_nan() {
        return Err(PrepError::NegativeDistance(d));
    }
    Ok(if d <= bp.near {
        1.0
    } else if d >= bp.far {
        bp.floor
    } else {
        1.0 - (1.0 - bp.floor) * (d - bp.near) / (bp.far - bp.near)
    })
}

/// Votes for one service.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertVotes {
    pub service: String,
    pub count: u32,
    pub total: u32,
    /// Replaces the vote ratio when set (e.g. a criterion fixed to 1 by consensus).
    pub override_weight: Option<f64>,
}

/// `count / total`, or the override. Zero weights are rejected.
pub fn criterion_weight_from_votes(votes: &ExpertVotes) -> Result<f64, PrepError> {
    if let Some(w) = votes.override_weight {
        if !(w > 0.0 && w <= 1.0) {
            return Err(PrepError::InvalidFactor(w));
        }
        return Ok(w);
    }
    if votes.total == 0 || votes.count > votes.total {
        return Err(PrepError::InvalidVotes {
            count: votes.count,
            total: votes.total,
        });
    }
    if votes.count == 0 {
        return Err(PrepError::ZeroWeight(votes.service.clone()));
    }
    Ok(votes.count as f64 / votes.total as f64)
}

fn class_code(v: f64) -> Result<i64, PrepError> {
    if !v.is_finite() || libm::trunc(v) != v || v.abs() > 9.0e15 {
        return Err(PrepError::InvalidClassCode(v));
    }
    Ok(v as i64)
}

/// Per-cell factors of a modifier layer. Nodata propagates.
pub fn modifier_factors(rule: &ModifierRule, layer: &Raster) -> Result<Raster, PrepError> {
    match rule {
        ModifierRule::Continuous98 => continuous_98(layer),
        ModifierRule::Categorical(table) => {
            let mut out = Vec::with_capacity(layer.len());
            for cell in 0..layer.len() {
                out.push(match layer.get(cell) {
                    Some(v) => categorical_factor(table, class_code(v)?)?,
                    None => layer.meta().nodata_value,
                });
            }
            Ok(Raster::new(*layer.meta(), out)?)
        }
        ModifierRule::PiecewiseDistance(bp) => {
            let mut out = Vec::with_capacity(layer.len());
            for cell in 0..layer.len() {
                out.push(match layer.get(cell) {
                    Some(d) => road_distance_factor(d, bp)?,
                    None => layer.meta().nodata_value,
                });
            }
            Ok(Raster::new(*layer.meta(), out)?)
        }
    }
}

/// One criterion layer: `1 - mean score · factor` per cell, nodata where the
/// LU/LC map or the modifier is nodata. The output uses the LU/LC frame.
pub fn build_criterion(
    luc: &Raster,
    m: &CapacityMatrix,
    service: &str,
    modifier: Option<(&ModifierRule, &Raster)>,
) -> Result<Raster, PrepError> {
    if !m.services.contains(service) {
        return Err(PrepError::UnknownService(service.to_string()));
    }
    let factors = match modifier {
        Some((rule, layer)) => {
            if !luc.meta().aligned_with(layer.meta()) {
                return Err(PrepError::Alignment);
            }
            Some(modifier_factors(rule, layer)?)
        }
        None => None,
    };
    let nodata = luc.meta().nodata_value;
    let mut class_scores: BTreeMap<i64, f64> = BTreeMap::new();
    let mut out = Vec::with_capacity(luc.len());
    for cell in 0..luc.len() {
        let Some(code) = luc.get(cell) else {
            out.push(nodata);
            continue;
        };
        let factor = match &factors {
            Some(f) => match f.get(cell) {
                Some(x) => x,
                None => {
                    out.push(nodata);
                    continue;
                }
            },
            None => 1.0,
        };
        let class = class_code(code)?;
        let score = match class_scores.get(&class) {
            Some(&s) => s,
            None => {
                let s = mean_expert_score(m, class, service)?;
                class_scores.insert(class, s);
                s
            }
        };
        out.push(invert_to_suitability(score * factor)?);
    }
    Ok(Raster::new(*luc.meta(), out)?)
}
