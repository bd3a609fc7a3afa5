//! Standard normal helpers that stay accurate when a whole interval sits far
//! out in one tail.
//!
//! Quantities for an interval `[a, b]` with `a >= 0` are computed relative to
//! `φ(a)` through the Mills ratio `R(x) = Q(x) / φ(x)`, so masses around 1e-300
//! and below never underflow to 0/0. Intervals with `b <= 0` are mirrored.

use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this the Mills ratio switches to its continued fraction.
const MILLS_SWITCH: f64 = 25.0;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Upper tail `Q(x) = 1 - Φ(x)`.
pub fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `Q(x) / φ(x)` for `x >= 0`; `R(+inf) = 0`.
pub fn mills_ratio(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < MILLS_SWITCH {
        // erfc(x/√2) / (2 φ(x)) = √(π/2) · erfcx(x/√2)
        return upper_tail(x) / pdf(x);
    }
    // Laplace continued fraction R(x) = 1/(x+1/(x+2/(x+3/(x+...)))).
    let mut tail = x;
    for k in (1..=40).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// `exp(-(y² - x²) / 2)` for `y >= x >= 0`, i.e. `φ(y) / φ(x)`.
fn pdf_ratio(x: f64, y: f64) -> f64 {
    if y == f64::INFINITY {
        return 0.0;
    }
    libm::exp(-0.5 * (y - x) * (y + x))
}

/// Mean and variance of a standard normal restricted to `[a, b]`, `a < b`.
pub fn interval_moments(a: f64, b: f64) -> (f64, f64) {
    debug_assert!(a < b);
    if b <= 0.0 {
        let (m, v) = interval_moments(-b, -a);
        return (-m, v);
    }
    let (mean, second) = if a >= 0.0 {
        let e = pdf_ratio(a, b);
        let bterm = if b == f64::INFINITY { 0.0 } else { b * e };
        let scaled_mass = mills_ratio(a) - e * mills_ratio(b);
        ((1.0 - e) / scaled_mass, 1.0 + (a - bterm) / scaled_mass)
    } else {
        let mass = 0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2));
        let (pa, pb) = (pdf(a), pdf(b));
        let aterm = if a == f64::NEG_INFINITY { 0.0 } else { a * pa };
        let bterm = if b == f64::INFINITY { 0.0 } else { b * pb };
        ((pa - pb) / mass, 1.0 + (aterm - bterm) / mass)
    };
    (mean, (second - mean * mean).max(0.0))
}

/// Relative probability masses of the consecutive bins delimited by the
/// increasing `edges`. The returned masses share an arbitrary common scale.
pub fn bin_masses(edges: &[f64]) -> Vec<f64> {
    debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
    let first = edges[0];
    let last = edges[edges.len() - 1];
    if last <= 0.0 {
        let mirrored: Vec<f64> = edges.iter().rev().map(|e| -e).collect();
        let mut masses = bin_masses(&mirrored);
        masses.reverse();
        return masses;
    }
    if first >= 0.0 {
        // Q(e) / φ(first), decreasing in e.
        let scaled: Vec<f64> = edges
            .iter()
            .map(|&e| pdf_ratio(first, e) * mills_ratio(e))
            .collect();
        return scaled.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    }
    let cdf: Vec<f64> = edges
        .iter()
        .map(|&e| 0.5 * libm::erf(e * FRAC_1_SQRT_2))
        .collect();
    cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
}
