//! Ordered weighted averaging over criterion stacks.
//!
//! For a pixel with criterion values `z`, criterion weights `v` and order
//! weights `w`, let `(j)` index the criteria by ascending value. Then
//!
//! ```text
//! OWA = Σ_j  v_(j) w_j z_(j)  /  Σ_k v_(k) w_k
//! ```
//!
//! The ordering depends only on the stack, so it is computed once
//! ([`rank_pixels`]) and shared by every order-weight vector of a design.

use alloc::vec::Vec;
use core::fmt;

use crate::grid::{CriterionStack, CriterionWeights, GridError, Raster};
use crate::strategy::{DecisionPoint, OrderWeights};

#[derive(Debug, Clone, PartialEq)]
pub enum OwaError {
    LengthMismatch {
        values: usize,
        criterion_weights: usize,
        order_weights: usize,
    },
    CacheMismatch,
    OutputLength {
        expected: usize,
        found: usize,
    },
    Grid(GridError),
}

impl fmt::Display for OwaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OwaError::LengthMismatch {
                values,
                criterion_weights,
                order_weights,
            } => write!(
                f,
                "length mismatch: {values} values, {criterion_weights} criterion weights, \
                 {order_weights} order weights"
            ),
            OwaError::CacheMismatch => {
                write!(f, "pixel ordering cache was built from another stack")
            }
            OwaError::OutputLength { expected, found } => {
                write!(f, "output buffer holds {found} pixels, expected {expected}")
            }
            OwaError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for OwaError {}

impl From<GridError> for OwaError {
    fn from(e: GridError) -> Self {
        OwaError::Grid(e)
    }
}

/// Per valid pixel, the criterion indices sorted by ascending value with ties
/// broken by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPermutationCache {
    criteria: usize,
    cells: usize,
    // valid pixel p occupies order[p * criteria..(p + 1) * criteria]
    order: Vec<u16>,
}

impl PixelPermutationCache {
    pub fn criterion_count(&self) -> usize {
        self.criteria
    }

    pub fn pixel_count(&self) -> usize {
        self.order.len() / self.criteria
    }

    /// Ascending criterion order of valid pixel `p` (0-based criterion indices).
    pub fn permutation(&self, p: usize) -> &[u16] {
        &self.order[p * self.criteria..(p + 1) * self.criteria]
    }

    fn matches(&self, stack: &CriterionStack) -> bool {
        self.criteria == stack.criterion_count()
            && self.cells == stack.meta().cell_count()
            && self.pixel_count() == stack.valid_cells().len()
    }
}

fn argsort_into(z: &[f64], out: &mut Vec<u16>) {
    let start = out.len();
    out.extend(0..z.len() as u16);
    // stable: equal values keep ascending criterion index
    out[start..].sort_by(|&a, &b| z[a as usize].total_cmp(&z[b as usize]));
}

/// Stable ascending argsort of every valid pixel.
pub fn rank_pixels(stack: &CriterionStack) -> PixelPermutationCache {
    let criteria = stack.criterion_count();
    assert!(criteria <= u16::MAX as usize, "at most 65535 criteria");
    let mut order = Vec::with_capacity(stack.valid_cells().len() * criteria);
    let mut z = Vec::with_capacity(criteria);
    for &cell in stack.valid_cells() {
        z.clear();
        z.extend(stack.pixel_values(cell));
        argsort_into(&z, &mut order);
    }
    PixelPermutationCache {
        criteria,
        cells: stack.meta().cell_count(),
        order,
    }
}

#[inline]
fn aggregate<F: Fn(usize) -> f64>(order: &[u16], v: &[f64], w: &[f64], z: F) -> f64 {
    let den: f64 = order
        .iter()
        .zip(w)
        .map(|(&k, &wj)| v[k as usize] * wj)
        .sum();
    // normalizing each coefficient first keeps unit order weights exact
    order
        .iter()
        .zip(w)
        .filter(|(_, &wj)| wj != 0.0)
        .map(|(&k, &wj)| (v[k as usize] * wj / den) * z(k as usize))
        .sum()
}

/// OWA of one pixel.
pub fn owa_value(z: &[f64], v: &CriterionWeights, w: &OrderWeights) -> Result<f64, OwaError> {
    if z.len() != v.len() || z.len() != w.len() {
        return Err(OwaError::LengthMismatch {
            values: z.len(),
            criterion_weights: v.len(),
            order_weights: w.len(),
        });
    }
    let mut order = Vec::with_capacity(z.len());
    argsort_into(z, &mut order);
    Ok(aggregate(&order, v.as_slice(), w.as_slice(), |k| z[k]))
}

/// Writes the OWA of every valid pixel, in mask order, into `out`.
pub fn compute_map_into(
    stack: &CriterionStack,
    cache: &PixelPermutationCache,
    w: &OrderWeights,
    out: &mut [f64],
) -> Result<(), OwaError> {
    if !cache.matches(stack) {
        return Err(OwaError::CacheMismatch);
    }
    let n = stack.criterion_count();
    if w.len() != n {
        return Err(OwaError::LengthMismatch {
            values: n,
            criterion_weights: n,
            order_weights: w.len(),
        });
    }
    let cells = stack.valid_cells();
    if out.len() != cells.len() {
        return Err(OwaError::OutputLength {
            expected: cells.len(),
            found: out.len(),
        });
    }
    let layers = stack.layers();
    let v = stack.weights().as_slice();
    for (p, (slot, &cell)) in out.iter_mut().zip(cells).enumerate() {
        *slot = aggregate(cache.permutation(p), v, w.as_slice(), |k| {
            layers[k].value(cell)
        });
    }
    Ok(())
}

/// Where a suitability map came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Point(DecisionPoint),
    Weights(OrderWeights),
}

/// An OWA output aligned with its stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SuitabilityMap {
    pub raster: Raster,
    pub provenance: Provenance,
}

/// Full-raster OWA map with the stack's invalid cells set to `nodata`.
pub fn compute_map(
    stack: &CriterionStack,
    cache: &PixelPermutationCache,
    w: &OrderWeights,
    nodata: f64,
) -> Result<SuitabilityMap, OwaError> {
    let mut values = alloc::vec![0.0; stack.valid_cells().len()];
    compute_map_into(stack, cache, w, &mut values)?;
    let raster = stack.expand(&values, nodata)?;
    let provenance = match w.provenance() {
        Some(p) => Provenance::Point(p),
        None => Provenance::Weights(w.clone()),
    };
    Ok(SuitabilityMap { raster, provenance })
}
