//! The flat torus `[0,1)²` with the quotient metric and planar lifts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of `R²`, used for lifts of torus points and for tangent vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Real> PlanarPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A point of `T² = R²/Z²`, stored by its unique representative in `[0,1)²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint<T = f64> {
    x: T,
    y: T,
}

/// Reduces a finite real into `[0, 1)`.
#[inline]
pub fn reduce<T: Real>(v: T) -> T {
    let r = v - v.floor();
    // v slightly below an integer rounds up to exactly 1.
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

impl<T: Real> TorusPoint<T> {
    /// Builds a torus point by reducing both coordinates mod 1.
    pub fn new(x: T, y: T) -> Result<Self> {
        wrap(PlanarPoint::new(x, y))
    }

    pub fn origin() -> Self {
        Self { x: T::zero(), y: T::zero() }
    }

    /// Reduces finite coordinates without validation; callers guarantee finiteness.
    #[inline]
    pub(crate) fn wrap_unchecked(x: T, y: T) -> Self {
        Self { x: reduce(x), y: reduce(y) }
    }

    #[inline]
    pub fn x(&self) -> T {
        self.x
    }

    #[inline]
    pub fn y(&self) -> T {
        self.y
    }

    /// The representative in `[0,1)²` viewed as a planar point.
    #[inline]
    pub fn lift(&self) -> PlanarPoint<T> {
        PlanarPoint::new(self.x, self.y)
    }
}

/// `wrap(p) = p mod Z²`.
pub fn wrap<T: Real>(p: PlanarPoint<T>) -> Result<TorusPoint<T>> {
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(TorusPoint::wrap_unchecked(p.x, p.y))
}

#[inline]
fn circle_gap<T: Real>(a: T, b: T) -> T {
    let d = (a - b).abs();
    d.min(T::one() - d)
}

/// Flat quotient distance: length of the shortest representative of `a - b`.
#[inline]
pub fn dist<T: Real>(a: TorusPoint<T>, b: TorusPoint<T>) -> T {
    circle_gap(a.x, b.x).hypot(circle_gap(a.y, b.y))
}

/// Shortest representative of `a - b` as a planar vector.
#[inline]
pub fn displacement<T: Real>(a: TorusPoint<T>, b: TorusPoint<T>) -> PlanarPoint<T> {
    let half = T::lit(0.5);
    let fold = |d: T| {
        let m = (d - half).ceil();
        d - m
    };
    PlanarPoint::new(fold(a.x - b.x), fold(a.y - b.y))
}

/// The representative `p + (m, n)` whose offsets from `reference` lie in `(-1/2, 1/2]`.
pub fn lift_near<T: Real>(p: TorusPoint<T>, reference: PlanarPoint<T>) -> PlanarPoint<T> {
    let half = T::lit(0.5);
    let shift = |v: T, r: T| {
        let m = (v - r - half).ceil();
        v - m
    };
    PlanarPoint::new(shift(p.x, reference.x), shift(p.y, reference.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(x: f64, y: f64) -> TorusPoint {
        TorusPoint::new(x, y).unwrap()
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(PlanarPoint::new(1.25, -0.5)).unwrap(), tp(0.25, 0.5));
        assert_eq!(wrap(PlanarPoint::new(0.0, 0.999)).unwrap().lift(), PlanarPoint::new(0.0, 0.999));
        assert_eq!(wrap(PlanarPoint::new(-1.0, 2.0)).unwrap(), TorusPoint::origin());
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert_eq!(wrap(PlanarPoint::new(f64::NAN, 0.0)), Err(Error::NonFinite));
        assert_eq!(wrap(PlanarPoint::new(0.0, f64::INFINITY)), Err(Error::NonFinite));
    }

    #[test]
    fn wrap_tiny_negative_is_in_range() {
        let z = tp(-1e-18, -0.0);
        assert!(z.x() >= 0.0 && z.x() < 1.0);
        assert_eq!(z.y(), 0.0);
    }

    #[test]
    fn dist_examples() {
        assert!((dist(tp(0.1, 0.0), tp(0.9, 0.0)) - 0.2).abs() < 1e-15);
        assert_eq!(dist(tp(0.3, 0.7), tp(0.3, 0.7)), 0.0);
        assert!((dist(tp(0.0, 0.0), tp(0.5, 0.5)) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lift_near_examples() {
        let l = lift_near(tp(0.9, 0.9), PlanarPoint::new(0.05, 0.1));
        assert!((l.x + 0.1).abs() < 1e-15 && (l.y + 0.1).abs() < 1e-15);
        assert_eq!(lift_near(tp(0.2, 0.2), PlanarPoint::new(0.2, 0.2)), PlanarPoint::new(0.2, 0.2));
        assert_eq!(lift_near(tp(0.0, 0.5), PlanarPoint::new(0.9, 0.5)), PlanarPoint::new(1.0, 0.5));
    }

    #[test]
    fn displacement_is_shortest() {
        let d = displacement(tp(0.95, 0.02), tp(0.05, 0.98));
        assert!((d.x + 0.1).abs() < 1e-15 && (d.y - 0.04).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let z = TorusPoint::<f32>::new(1.25, -0.5).unwrap();
        assert_eq!((z.x(), z.y()), (0.25, 0.5));
        assert!((dist(z, TorusPoint::<f32>::origin()) - 0.559_017).abs() < 1e-6);
    }
}
