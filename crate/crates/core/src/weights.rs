//! Per-channel weighing factors.
//!
//! The day-time (red filter) and low-sun (blue filter) rules produce a raw
//! triple whose red weight is the remainder `1 - (w_b + w_g)`, so the raw sum
//! is one by construction even when components leave `[0, 1]`.
//! [`normalize_clamp`] turns a raw triple into a usable [`WeightTriple`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::ChannelStats;
use crate::num::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("all weights are non-positive after clamping; use the default conversion")]
    DegenerateWeights,
    #[error("blend fraction {0} is outside [0, 1]")]
    OutOfRangeT(f64),
}

/// Coefficients of the fixed default conversion, as published: they sum to
/// 0.9, not 1, and are never normalized in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultTriple {
    pub w_r: f64,
    pub w_g: f64,
    pub w_b: f64,
}

pub const DEFAULT_TRIPLE: DefaultTriple = DefaultTriple { w_r: 0.3, w_g: 0.1, w_b: 0.5 };

pub fn default_triple() -> DefaultTriple {
    DEFAULT_TRIPLE
}

impl DefaultTriple {
    pub fn sum(&self) -> f64 {
        self.w_r + self.w_g + self.w_b
    }

    /// The same coefficients divided by their sum, so white maps to white.
    pub fn normalized(&self) -> WeightTriple<f64> {
        let s = self.sum();
        WeightTriple { w_r: self.w_r / s, w_g: self.w_g / s, w_b: self.w_b / s, clamped: false }
    }
}

/// Unconstrained output of a weight rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawWeightTriple<T> {
    pub w_r: T,
    pub w_g: T,
    pub w_b: T,
}

impl<T: Scalar> RawWeightTriple<T> {
    pub fn sum(&self) -> T {
        self.w_r + self.w_g + self.w_b
    }
}

/// Weights in `[0, 1]` summing to one. `clamped` records whether
/// [`normalize_clamp`] had to intervene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTriple<T> {
    pub w_r: T,
    pub w_g: T,
    pub w_b: T,
    pub clamped: bool,
}

impl<T: Scalar> WeightTriple<T> {
    /// Checks the box and unit-sum invariants (sum within 1e-9).
    pub fn is_valid(&self) -> bool {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        unit(self.w_r)
            && unit(self.w_g)
            && unit(self.w_b)
            && (self.sum().as_f64() - 1.0).abs() <= 1e-9
    }

    pub fn sum(&self) -> T {
        self.w_r + self.w_g + self.w_b
    }

    pub fn to_f64(&self) -> WeightTriple<f64> {
        WeightTriple {
            w_r: self.w_r.as_f64(),
            w_g: self.w_g.as_f64(),
            w_b: self.w_b.as_f64(),
            clamped: self.clamped,
        }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.w_r, self.w_g, self.w_b]
    }
}

/// Day-time rule: boosts red against blue haze.
///
/// `w_b = perc * mean`, `w_g = (1 - w_b) - (mean + std)`, `w_r = 1 - (w_b + w_g)`.
pub fn red_filter_weights<T: Scalar>(s: &ChannelStats<T>) -> RawWeightTriple<T> {
    let one = T::one();
    let w_b = s.perc * s.mean;
    let w_g = (one - w_b) - (s.mean + s.std_dev);
    let w_r = one - (w_b + w_g);
    RawWeightTriple { w_r, w_g, w_b }
}

/// Sunrise/sunset rule.
///
/// `w_b = perc * mean * (2 * std)`, `w_g = (1 - w_b) - mean`, `w_r = 1 - (w_b + w_g)`.
pub fn blue_filter_weights<T: Scalar>(s: &ChannelStats<T>) -> RawWeightTriple<T> {
    let one = T::one();
    let w_b = s.perc * s.mean * (T::lit(2.0) * s.std_dev);
    let w_g = (one - w_b) - s.mean;
    let w_r = one - (w_b + w_g);
    RawWeightTriple { w_r, w_g, w_b }
}

/// Clamps each component into `[0, 1]`; if anything moved, rescales to unit
/// sum and sets `clamped`. In-range triples pass through bit-for-bit.
pub fn normalize_clamp<T: Scalar>(raw: RawWeightTriple<T>) -> Result<WeightTriple<T>, WeightError> {
    let c = |v: T| v.max(T::zero()).min(T::one());
    let (r, g, b) = (c(raw.w_r), c(raw.w_g), c(raw.w_b));
    if r == raw.w_r && g == raw.w_g && b == raw.w_b {
        return Ok(WeightTriple { w_r: r, w_g: g, w_b: b, clamped: false });
    }
    let sum = r + g + b;
    if sum <= T::zero() {
        return Err(WeightError::DegenerateWeights);
    }
    Ok(WeightTriple { w_r: r / sum, w_g: g / sum, w_b: b / sum, clamped: true })
}

/// Componentwise `(1 - t) * a + t * b`. `clamped` is carried if either side
/// was clamped.
pub fn blend<T: Scalar>(a: &WeightTriple<T>, b: &WeightTriple<T>, t: T) -> Result<WeightTriple<T>, WeightError> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(WeightError::OutOfRangeT(t.as_f64()));
    }
    let s = T::one() - t;
    Ok(WeightTriple {
        w_r: s * a.w_r + t * b.w_r,
        w_g: s * a.w_g + t * b.w_g,
        w_b: s * a.w_b + t * b.w_b,
        clamped: a.clamped || b.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn default_coefficients_as_published() {
        let d = default_triple();
        assert_eq!((d.w_r, d.w_g, d.w_b), (0.3, 0.1, 0.5));
        assert!(close(d.sum(), 0.9, 1e-15));
        let n = d.normalized();
        assert!(n.is_valid());
        assert!(close(n.w_r, 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn red_rule_worked_example() {
        let w = red_filter_weights(&ChannelStats::new(0.02, 0.45, 0.22));
        assert!(close(w.w_r, 0.670, 1e-12));
        assert!(close(w.w_g, 0.321, 1e-12));
        assert!(close(w.w_b, 0.009, 1e-12));
    }

    #[test]
    fn red_rule_black_image() {
        let w = red_filter_weights(&ChannelStats::new(1.0, 0.0, 0.0));
        assert_eq!((w.w_r, w.w_g, w.w_b), (0.0, 1.0, 0.0));
    }

    #[test]
    fn red_rule_out_of_range() {
        let w = red_filter_weights(&ChannelStats::new(0.1, 0.6, 0.5));
        assert!(close(w.w_r, 1.10, 1e-12));
        assert!(close(w.w_g, -0.16, 1e-12));
        assert!(close(w.w_b, 0.06, 1e-12));
        assert!(close(w.sum(), 1.0, 1e-12));
    }

    #[test]
    fn blue_rule_worked_example() {
        let w = blue_filter_weights(&ChannelStats::new(0.02, 0.45, 0.22));
        assert!(close(w.w_r, 0.45, 1e-12));
        assert!(close(w.w_g, 0.54604, 1e-12));
        assert!(close(w.w_b, 0.00396, 1e-12));
    }

    #[test]
    fn blue_rule_zero_factors() {
        let w = blue_filter_weights(&ChannelStats::new(0.37, 0.0, 0.0));
        assert_eq!((w.w_r, w.w_g, w.w_b), (0.0, 1.0, 0.0));
        let w = blue_filter_weights(&ChannelStats::new(0.9, 0.7, 0.0));
        assert_eq!(w.w_b, 0.0);
    }

    #[test]
    fn clamp_passthrough_and_rescale() {
        let raw = RawWeightTriple { w_r: 0.670, w_g: 0.321, w_b: 0.009 };
        let w = normalize_clamp(raw).unwrap();
        assert_eq!((w.w_r, w.w_g, w.w_b, w.clamped), (0.670, 0.321, 0.009, false));

        let w = normalize_clamp(RawWeightTriple { w_r: 1.10, w_g: -0.16, w_b: 0.06 }).unwrap();
        assert!(w.clamped);
        assert!(close(w.w_r, 1.0 / 1.06, 1e-12));
        assert!(close(w.w_r, 0.9434, 1e-4));
        assert_eq!(w.w_g, 0.0);
        assert!(close(w.w_b, 0.0566, 1e-4));

        let w = normalize_clamp(RawWeightTriple { w_r: 1.0, w_g: 0.0, w_b: 0.0 }).unwrap();
        assert_eq!((w.w_r, w.w_g, w.w_b, w.clamped), (1.0, 0.0, 0.0, false));
    }

    #[test]
    fn clamp_degenerate() {
        let raw = RawWeightTriple { w_r: -0.5, w_g: -0.5, w_b: 0.0 };
        assert_eq!(normalize_clamp(raw), Err(WeightError::DegenerateWeights));
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let a = WeightTriple { w_r: 1.0, w_g: 0.0, w_b: 0.0, clamped: false };
        let b = WeightTriple { w_r: 0.0, w_g: 0.0, w_b: 1.0, clamped: false };
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a);
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b);
        let m = blend(&a, &b, 0.5).unwrap();
        assert_eq!((m.w_r, m.w_g, m.w_b), (0.5, 0.0, 0.5));
        assert_eq!(blend(&a, &b, 1.5), Err(WeightError::OutOfRangeT(1.5)));
        assert!(blend(&a, &b, f64::NAN).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let w = red_filter_weights(&ChannelStats::<f32>::new(0.02, 0.45, 0.22));
        assert!((w.w_r - 0.67).abs() < 1e-6);
        let w = normalize_clamp(w).unwrap();
        assert!(w.is_valid());
    }

    #[test]
    fn json_shape() {
        let w = WeightTriple { w_r: 0.5, w_g: 0.25, w_b: 0.25, clamped: true };
        assert_eq!(
            serde_json::to_string(&w).unwrap(),
            r#"{"w_r":0.5,"w_g":0.25,"w_b":0.25,"clamped":true}"#
        );
    }
}
