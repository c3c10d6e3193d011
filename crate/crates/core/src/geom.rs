//! Planar points and segment/box intersection kernels.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn dist_sq(self, o: Self) -> T {
        (self - o).norm_sq()
    }

    /// Moves from `self` toward `to` by at most `step`; lands exactly on `to`
    /// when it is within reach.
    pub fn toward(self, to: Self, step: T) -> Self {
        let d = self.dist(to);
        if d <= step {
            to
        } else {
            self + (to - self) * (step / d)
        }
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// Closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(min: Vec2<T>, max: Vec2<T>) -> Self {
        Self { min, max }
    }

    #[inline]
    pub fn contains(&self, p: Vec2<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// True when the closed rectangles share at least one point.
    #[inline]
    pub fn touches(&self, o: &Self) -> bool {
        self.min.x <= o.max.x
            && o.min.x <= self.max.x
            && self.min.y <= o.max.y
            && o.min.y <= self.max.y
    }

    /// True when the open interiors overlap with positive area.
    #[inline]
    pub fn overlaps_interior(&self, o: &Self) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }
}

/// Closed axis-aligned box in 3D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb3<T> {
    pub min: [T; 3],
    pub max: [T; 3],
}

/// Slab clipping of the parametric segment `p0 + t (p1 - p0)`, `t ∈ [0,1]`,
/// against closed intervals. Contact at a single parameter value counts.
#[inline]
fn clip_segment<T: Real, const D: usize>(p0: [T; D], p1: [T; D], min: [T; D], max: [T; D]) -> bool {
    let mut t_lo = T::zero();
    let mut t_hi = T::one();
    for a in 0..D {
        let d = p1[a] - p0[a];
        if d == T::zero() {
            if p0[a] < min[a] || p0[a] > max[a] {
                return false;
            }
            continue;
        }
        let inv = T::one() / d;
        let mut t0 = (min[a] - p0[a]) * inv;
        let mut t1 = (max[a] - p0[a]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_lo {
            t_lo = t0;
        }
        if t1 < t_hi {
            t_hi = t1;
        }
        if t_lo > t_hi {
            return false;
        }
    }
    true
}

/// Segment vs closed 3D box; grazing contact counts as a hit.
pub fn segment_hits_box<T: Real>(p0: [T; 3], p1: [T; 3], b: &Aabb3<T>) -> bool {
    clip_segment(p0, p1, b.min, b.max)
}

/// Planar segment vs closed rectangle; grazing contact counts as a hit.
pub fn segment_hits_rect<T: Real>(a: Vec2<T>, b: Vec2<T>, r: &Rect<T>) -> bool {
    clip_segment(
        [a.x, a.y],
        [b.x, b.y],
        [r.min.x, r.min.y],
        [r.max.x, r.max.y],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Aabb3<f64> {
        Aabb3 {
            min: [0.0, 0.0, 0.0],
            max: [1.0, 1.0, 1.0],
        }
    }

    #[test]
    fn segment_through_box() {
        assert!(segment_hits_box(
            [-1.0, 0.5, 0.5],
            [2.0, 0.5, 0.5],
            &unit_box()
        ));
        assert!(!segment_hits_box(
            [-1.0, 0.5, 1.5],
            [2.0, 0.5, 1.5],
            &unit_box()
        ));
    }

    #[test]
    fn grazing_face_counts() {
        // Runs along the top face.
        assert!(segment_hits_box(
            [-1.0, 0.5, 1.0],
            [2.0, 0.5, 1.0],
            &unit_box()
        ));
        // Touches a corner only.
        assert!(segment_hits_box(
            [2.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            &unit_box()
        ));
    }

    #[test]
    fn segment_stopping_short() {
        assert!(!segment_hits_box(
            [-2.0, 0.5, 0.5],
            [-0.1, 0.5, 0.5],
            &unit_box()
        ));
        assert!(segment_hits_box(
            [-2.0, 0.5, 0.5],
            [0.0, 0.5, 0.5],
            &unit_box()
        ));
    }

    #[test]
    fn descending_segment_clears_low_box() {
        // From 60 m down to 1 m passing over a 30 m block where the ray is still above it.
        let b = Aabb3 {
            min: [10.0, -5.0, 0.0],
            max: [20.0, 5.0, 30.0],
        };
        assert!(!segment_hits_box([0.0, 0.0, 60.0], [40.0, 0.0, 1.0], &b));
        assert!(segment_hits_box([0.0, 0.0, 60.0], [25.0, 0.0, 1.0], &b));
    }

    #[test]
    fn rect_segment() {
        let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert!(segment_hits_rect(
            Vec2::new(-1.0, -1.0),
            Vec2::new(2.0, 2.0),
            &r
        ));
        assert!(!segment_hits_rect(
            Vec2::new(-1.0, 1.5),
            Vec2::new(2.0, 1.5),
            &r
        ));
        assert!(segment_hits_rect(
            Vec2::new(-1.0, 1.0),
            Vec2::new(2.0, 1.0),
            &r
        ));
    }

    #[test]
    fn toward_clamps_at_target() {
        let a = Vec2::<f64>::new(0.0, 0.0);
        let b = Vec2::new(3.0, 4.0);
        assert_eq!(a.toward(b, 10.0), b);
        let c = a.toward(b, 2.5);
        assert!((c.norm() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let a = Vec2::<f32>::new(0.0, 0.0);
        assert!((a.dist(Vec2::new(3.0, 4.0)) - 5.0).abs() < 1e-6);
    }
}
