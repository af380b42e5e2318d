//! Planar primitives: vectors, convex polygons and polylines.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::{wrap_angle, Real};

/// A point or direction in the plane, world meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
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
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn from_angle(theta: T) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
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
    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq <= T::zero() {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    p.distance(a + ab * t)
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Vec2<T>>,
}

impl<T: Real> ConvexPolygon<T> {
    /// Builds a polygon from at least three vertices; clockwise input is reversed.
    /// Returns `None` for degenerate (zero-area) or non-convex input.
    pub fn new(mut vertices: Vec<Vec2<T>>) -> Option<Self> {
        if vertices.len() < 3 {
            return None;
        }
        let area = signed_area(&vertices);
        if area == T::zero() || !area.is_finite() {
            return None;
        }
        if area < T::zero() {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < T::zero() {
                return None;
            }
        }
        Some(Self { vertices })
    }

    /// Oriented rectangle centered at `center`, long side along `heading`.
    pub fn rectangle(center: Vec2<T>, heading: T, length: T, width: T) -> Self {
        let half = T::lit(0.5);
        let along = Vec2::from_angle(heading) * (length * half);
        let across = Vec2::from_angle(heading).perp() * (width * half);
        Self {
            vertices: vec![
                center - along - across,
                center + along - across,
                center + along + across,
                center - along + across,
            ],
        }
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn centroid(&self) -> Vec2<T> {
        let n = T::from_count(self.vertices.len());
        let sum = self.vertices.iter().fold(Vec2::zero(), |acc, &v| acc + v);
        sum * (T::one() / n)
    }

    /// Largest vertex distance from `center`.
    pub fn radius_about(&self, center: Vec2<T>) -> T {
        self.vertices
            .iter()
            .map(|v| v.distance(center))
            .fold(T::zero(), T::max)
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= T::zero()
        })
    }

    /// Euclidean distance to the polygon; zero inside.
    pub fn distance(&self, p: Vec2<T>) -> T {
        if self.contains(p) {
            return T::zero();
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(T::infinity(), T::min)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = Vec2::new(T::infinity(), T::infinity());
        let mut hi = Vec2::new(T::neg_infinity(), T::neg_infinity());
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    pub fn map_vertices(&self, f: impl Fn(Vec2<T>) -> Vec2<T>) -> Option<Self> {
        Self::new(self.vertices.iter().map(|&v| f(v)).collect())
    }
}

fn signed_area<T: Real>(vertices: &[Vec2<T>]) -> T {
    let n = vertices.len();
    let twice: T = (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum();
    twice * T::lit(0.5)
}

/// Closest-point query result against a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    /// Arc length of the closest point, measured from the first vertex.
    pub arc: T,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: T,
    pub point: Vec2<T>,
    /// Travel direction at the closest point.
    pub heading: T,
}

/// Piecewise-linear path with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<T> {
    points: Vec<Vec2<T>>,
    cumulative: Vec<T>,
}

impl<T: Real> Polyline<T> {
    /// Builds a polyline; consecutive duplicate points are dropped. Panics on empty input.
    pub fn new(points: Vec<Vec2<T>>) -> Self {
        assert!(!points.is_empty(), "polyline needs at least one point");
        let mut kept: Vec<Vec2<T>> = Vec::with_capacity(points.len());
        for p in points {
            if kept.last() != Some(&p) {
                kept.push(p);
            }
        }
        let mut cumulative = Vec::with_capacity(kept.len());
        let mut acc = T::zero();
        cumulative.push(acc);
        for w in kept.windows(2) {
            acc = acc + w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Self {
            points: kept,
            cumulative,
        }
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn length(&self) -> T {
        *self.cumulative.last().unwrap()
    }

    pub fn project(&self, q: Vec2<T>) -> Projection<T> {
        if self.points.len() == 1 {
            let p = self.points[0];
            return Projection {
                arc: T::zero(),
                lateral: q.distance(p),
                point: p,
                heading: T::zero(),
            };
        }
        let mut best: Option<(T, Projection<T>)> = None;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let t = ((q - a).dot(ab) / (len * len)).max(T::zero()).min(T::one());
            let foot = a + ab * t;
            let dist_sq = (q - foot).norm_sq();
            if best.as_ref().is_none_or(|(d, _)| dist_sq < *d) {
                let dir = ab * (T::one() / len);
                let lateral = dir.cross(q - foot);
                // Off the end of an open polyline the signed offset is measured
                // against the extended segment; the magnitude stays Euclidean.
                let magnitude = dist_sq.sqrt();
                let lateral = if lateral >= T::zero() {
                    magnitude
                } else {
                    -magnitude
                };
                best = Some((
                    dist_sq,
                    Projection {
                        arc: self.cumulative[i] + len * t,
                        lateral,
                        point: foot,
                        heading: dir.y.atan2(dir.x),
                    },
                ));
            }
        }
        best.unwrap().1
    }

    fn segment_at(&self, arc: T) -> usize {
        let n = self.points.len();
        if n < 2 {
            return 0;
        }
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&arc).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Point at arc length `arc`, extrapolating linearly past either end.
    pub fn point_at(&self, arc: T) -> Vec2<T> {
        if self.points.len() == 1 {
            return self.points[0];
        }
        let i = self.segment_at(arc);
        let a = self.points[i];
        let b = self.points[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (arc - self.cumulative[i]) / len;
        a + (b - a) * t
    }

    /// Travel direction at arc length `arc`.
    pub fn heading_at(&self, arc: T) -> T {
        if self.points.len() == 1 {
            return T::zero();
        }
        let i = self.segment_at(arc);
        let d = self.points[i + 1] - self.points[i];
        d.y.atan2(d.x)
    }

    /// Signed curvature at `arc`, finite-differenced over `window` meters.
    pub fn curvature_at(&self, arc: T, window: T) -> T {
        if self.points.len() < 3 {
            return T::zero();
        }
        let lo = (arc - window).max(T::zero());
        let hi = (arc + window).min(self.length());
        if hi <= lo {
            return T::zero();
        }
        wrap_angle(self.heading_at(hi) - self.heading_at(lo)) / (hi - lo)
    }
}
