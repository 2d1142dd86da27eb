//! Planar geometry in meters.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Point2<T>;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Point2<T>;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Point2<T>;
    fn mul(self, k: T) -> Self {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Closed disk: the boundary counts as inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle2<T> {
    pub center: Point2<T>,
    pub radius: T,
}

impl<T: Scalar> Circle2<T> {
    pub fn new(center: Point2<T>, radius: T) -> Self {
        Circle2 { center, radius }
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        p.distance(self.center) <= self.radius
    }

    pub fn area(&self) -> T {
        T::lit(std::f64::consts::PI) * self.radius * self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_closed() {
        let c = Circle2::new(Point2::new(0.0f64, 0.0), 5.0);
        assert!(c.contains(Point2::new(3.0, 4.0)));
        assert!(c.contains(Point2::new(0.0, 0.0)));
        assert!(!c.contains(Point2::new(3.0, 4.0001)));
    }

    #[test]
    fn works_for_f32() {
        let c = Circle2::new(Point2::new(1.0f32, 1.0), 1.0);
        assert!(c.contains(Point2::new(2.0, 1.0)));
        assert_eq!(Point2::new(1.0f32, 2.0) * 2.0, Point2::new(2.0, 4.0));
    }
}
