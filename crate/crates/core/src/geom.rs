//! Planar geometry primitives shared across the simulator.
//!
//! Everything is f64-based; world coordinates are meters.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// 2D vector / point in meters. Serializes as a `[x, y]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<(f64, f64)> for Vec2 {
    fn from(t: (f64, f64)) -> Vec2 {
        vec2(t.0, t.1)
    }
}

impl From<Vec2> for (f64, f64) {
    fn from(v: Vec2) -> (f64, f64) {
        (v.x, v.y)
    }
}

pub const fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub const ZERO: Vec2 = vec2(0.0, 0.0);

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z component of the 3D cross).
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector, or `None` for a (near-)zero vector.
    pub fn try_normalize(self) -> Option<Vec2> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self / n)
        }
    }

    /// Unit vector, falling back to zero for degenerate input.
    pub fn normalize_or_zero(self) -> Vec2 {
        self.try_normalize().unwrap_or(Vec2::ZERO)
    }

    /// Counterclockwise perpendicular (rotate by +90°).
    pub fn perp(self) -> Vec2 {
        vec2(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        vec2(self.x * c - self.y * s, self.x * s + self.y * c)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        vec2(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        *self = *self + o;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        vec2(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        vec2(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        vec2(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        vec2(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle, `min` inclusive, `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Rect {
        Rect { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Distance from a point to the rectangle (0 inside).
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            vec2(self.max.x, self.min.y),
            self.max,
            vec2(self.min.x, self.max.y),
        ]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }
}

/// Line segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Segment {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }

    pub fn direction(&self) -> Vec2 {
        (self.b - self.a).normalize_or_zero()
    }

    /// Closest point on the segment to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len_sq = ab.norm_sq();
        if len_sq < 1e-18 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len_sq).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        self.closest_point(p).distance(p)
    }

    /// Segment-segment intersection test, touching counts.
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = (self.b - self.a).cross(other.a - self.a);
        let d2 = (self.b - self.a).cross(other.b - self.a);
        let d3 = (other.b - other.a).cross(self.a - other.a);
        let d4 = (other.b - other.a).cross(self.b - other.a);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        // Collinear / endpoint-touching cases.
        let on = |s: &Segment, p: Vec2, d: f64| -> bool {
            d == 0.0
                && p.x >= s.a.x.min(s.b.x)
                && p.x <= s.a.x.max(s.b.x)
                && p.y >= s.a.y.min(s.b.y)
                && p.y <= s.a.y.max(s.b.y)
        };
        on(self, other.a, d1) || on(self, other.b, d2) || on(other, self.a, d3) || on(other, self.b, d4)
    }

    /// Minimum distance between two segments.
    pub fn distance_to_segment(&self, other: &Segment) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        self.distance_to_point(other.a)
            .min(self.distance_to_point(other.b))
            .min(other.distance_to_point(self.a))
            .min(other.distance_to_point(self.b))
    }

    /// Minimum distance from the segment to an axis-aligned rectangle (0 when overlapping).
    pub fn distance_to_rect(&self, rect: &Rect) -> f64 {
        if rect.contains(self.a) || rect.contains(self.b) {
            return 0.0;
        }
        rect.edges()
            .iter()
            .map(|e| self.distance_to_segment(e))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Simple polygon as a vertex loop (implicitly closed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Polygon {
        Polygon { vertices }
    }

    pub fn rect(min: Vec2, max: Vec2) -> Polygon {
        Polygon::new(vec![min, vec2(max.x, min.y), max, vec2(min.x, max.y)])
    }

    /// Signed area by the shoelace formula (positive for CCW winding).
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            acc += p.cross(q);
        }
        acc * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Even-odd ray-cast containment; boundary points are treated as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let s = Segment::new(self.vertices[i], self.vertices[(i + 1) % n]);
            if s.distance_to_point(p) < 1e-12 {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounding_box(&self) -> Rect {
        let mut min = vec2(f64::INFINITY, f64::INFINITY);
        let mut max = vec2(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        Rect::new(min, max)
    }
}

/// Rectangle with arbitrary orientation, defined by a center segment swept
/// laterally by `half_width` on each side. Used for exit regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub spine: Segment,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn contains(&self, p: Vec2) -> bool {
        let axis = self.spine.b - self.spine.a;
        let len_sq = axis.norm_sq();
        if len_sq < 1e-18 {
            return p.distance(self.spine.a) <= self.half_width;
        }
        let rel = p - self.spine.a;
        let t = rel.dot(axis) / len_sq;
        if !(0.0..=1.0).contains(&t) {
            return false;
        }
        let lateral = rel.cross(axis.normalize_or_zero()).abs();
        lateral <= self.half_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_basics() {
        let v = vec2(3.0, 4.0);
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.perp(), vec2(-4.0, 3.0));
        assert_eq!(v.dot(v.perp()), 0.0);
        assert_eq!(v.clamp_norm(2.5).norm(), 2.5);
    }

    #[test]
    fn segment_point_distance() {
        let s = Segment::new(vec2(0.0, 0.0), vec2(10.0, 0.0));
        assert_eq!(s.distance_to_point(vec2(5.0, 3.0)), 3.0);
        assert_eq!(s.distance_to_point(vec2(-4.0, 0.0)), 4.0);
        assert_eq!(s.distance_to_point(vec2(13.0, 4.0)), 5.0);
    }

    #[test]
    fn segment_intersection() {
        let a = Segment::new(vec2(0.0, 0.0), vec2(4.0, 4.0));
        let b = Segment::new(vec2(0.0, 4.0), vec2(4.0, 0.0));
        let c = Segment::new(vec2(5.0, 5.0), vec2(6.0, 6.0));
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        // Endpoint touching counts.
        let d = Segment::new(vec2(4.0, 4.0), vec2(8.0, 4.0));
        assert!(a.intersects(&d));
    }

    #[test]
    fn segment_rect_distance() {
        let r = Rect::new(vec2(0.0, 0.0), vec2(2.0, 2.0));
        let inside = Segment::new(vec2(1.0, 1.0), vec2(1.5, 1.5));
        let crossing = Segment::new(vec2(-1.0, 1.0), vec2(3.0, 1.0));
        let outside = Segment::new(vec2(5.0, 0.0), vec2(5.0, 2.0));
        assert_eq!(inside.distance_to_rect(&r), 0.0);
        assert_eq!(crossing.distance_to_rect(&r), 0.0);
        assert_eq!(outside.distance_to_rect(&r), 3.0);
    }

    #[test]
    fn polygon_containment() {
        let p = Polygon::rect(vec2(0.0, 0.0), vec2(4.0, 2.0));
        assert!(p.contains(vec2(2.0, 1.0)));
        assert!(p.contains(vec2(0.0, 0.0)));
        assert!(!p.contains(vec2(5.0, 1.0)));
        assert!((p.area() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn oriented_rect_containment() {
        let r = OrientedRect {
            spine: Segment::new(vec2(0.0, 0.0), vec2(2.0, 0.0)),
            half_width: 0.5,
        };
        assert!(r.contains(vec2(1.0, 0.4)));
        assert!(!r.contains(vec2(1.0, 0.6)));
        assert!(!r.contains(vec2(-0.1, 0.0)));
    }
}
