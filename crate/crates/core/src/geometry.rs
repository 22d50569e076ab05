//! Planar geometry: points, poses and convex polygons.

use crate::scalar::{wrap_angle, Scalar};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn rotate(self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Scalar> Pose2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Maps a body-frame point to the world frame.
    pub fn transform(&self, p: Vec2<T>) -> Vec2<T> {
        self.position() + p.rotate(self.theta)
    }
}

/// Errors raised when constructing polygons.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon is not convex")]
    NotConvex,
    #[error("polygon has a non-finite vertex")]
    NonFinite,
}

/// Convex polygon with counter-clockwise vertices and strictly positive area.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Vec2<T>>,
}

impl<T: Scalar> ConvexPolygon<T> {
    /// Validates convexity and orients the vertices counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2<T>>) -> Result<Self, PolygonError> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(PolygonError::NonFinite);
        }
        if vertices.len() < 3 {
            return Err(PolygonError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        let scale = vertices
            .iter()
            .map(|v| v.x.abs().max(v.y.abs()))
            .fold(T::one(), T::max);
        if area.abs() <= T::epsilon() * scale * scale * T::lit(16.0) {
            return Err(PolygonError::Degenerate);
        }
        if area < T::zero() {
            vertices.reverse();
        }
        let n = vertices.len();
        let tol = -T::epsilon() * scale * scale * T::lit(64.0);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < tol {
                return Err(PolygonError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle centered at `center`, rotated by `yaw`.
    pub fn rectangle(center: Vec2<T>, width: T, depth: T, yaw: T) -> Result<Self, PolygonError> {
        let hx = width * T::half();
        let hy = depth * T::half();
        let corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
        Self::new(
            corners
                .iter()
                .map(|&(x, y)| center + Vec2::new(x, y).rotate(yaw))
                .collect(),
        )
    }

    /// Regular polygon approximating a disc.
    pub fn regular(center: Vec2<T>, radius: T, sides: usize) -> Result<Self, PolygonError> {
        let sides = sides.max(3);
        let step = T::TAU() / T::lit(sides as f64);
        Self::new(
            (0..sides)
                .map(|i| {
                    let a = step * T::lit(i as f64);
                    center + Vec2::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
        )
    }

    /// Convex hull of a point set (Andrew's monotone chain).
    pub fn hull(points: &[Vec2<T>]) -> Result<Self, PolygonError> {
        let hull = convex_hull(points);
        Self::new(hull)
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2<T>, Vec2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2<T> {
        let mut cx = T::zero();
        let mut cy = T::zero();
        for (a, b) in self.edges() {
            let w = a.cross(b);
            cx += (a.x + b.x) * w;
            cy += (a.y + b.y) * w;
        }
        let k = T::lit(6.0) * self.area();
        Vec2::new(cx / k, cy / k)
    }

    /// Bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = self.vertices[0];
        let mut hi = lo;
        for v in &self.vertices[1..] {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Closed containment test (boundary counts as inside).
    pub fn contains(&self, p: Vec2<T>) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= T::zero())
    }

    /// Euclidean distance from `p` to the polygon; zero inside.
    pub fn distance(&self, p: Vec2<T>) -> T {
        if self.contains(p) {
            return T::zero();
        }
        self.boundary_distance(p)
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Vec2<T>) -> T {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(T::infinity(), T::min)
    }

    /// Nearest point of the closed polygon to `p`.
    pub fn nearest_point(&self, p: Vec2<T>) -> Vec2<T> {
        if self.contains(p) {
            return p;
        }
        let mut best = self.vertices[0];
        let mut best_d = T::infinity();
        for (a, b) in self.edges() {
            let q = closest_on_segment(p, a, b);
            let d = (p - q).norm_sq();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Minkowski sum with a disc of `radius`, corners approximated by
    /// `arc_segments` chords whose vertices lie on the circle, so the result
    /// lies inside the exact offset and contains the polygon inflated by
    /// `radius * cos(pi / (2 * arc_segments))`.
    pub fn inflate(&self, radius: T, arc_segments: usize) -> Self {
        if radius <= T::zero() {
            return self.clone();
        }
        let arc_segments = arc_segments.max(1);
        let n = self.vertices.len();
        let mut pts = Vec::with_capacity(n * (arc_segments + 1));
        for i in 0..n {
            let prev = self.vertices[(i + n - 1) % n];
            let cur = self.vertices[i];
            let next = self.vertices[(i + 1) % n];
            let n_in = outward_normal(prev, cur);
            let n_out = outward_normal(cur, next);
            let a0 = n_in.y.atan2(n_in.x);
            let mut a1 = n_out.y.atan2(n_out.x);
            while a1 < a0 {
                a1 += T::TAU();
            }
            for s in 0..=arc_segments {
                let t = T::lit(s as f64) / T::lit(arc_segments as f64);
                let a = a0 + (a1 - a0) * t;
                pts.push(cur + Vec2::new(a.cos(), a.sin()) * radius);
            }
        }
        Self::hull(&pts).expect("inflated convex polygon is non-degenerate")
    }

    /// True if the closed segment `a`-`b` touches the polygon.
    pub fn intersects_segment(&self, a: Vec2<T>, b: Vec2<T>) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        self.edges().any(|(p, q)| segments_intersect(a, b, p, q))
    }

    pub fn cast<U: Scalar>(&self) -> ConvexPolygon<U> {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
        }
    }
}

fn outward_normal<T: Scalar>(a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    let d = b - a;
    let len = d.norm();
    Vec2::new(d.y / len, -d.x / len)
}

pub fn signed_area<T: Scalar>(v: &[Vec2<T>]) -> T {
    let n = v.len();
    let mut s = T::zero();
    for i in 0..n {
        s += v[i].cross(v[(i + 1) % n]);
    }
    s * T::half()
}

/// Andrew's monotone chain. Returns the counter-clockwise hull without
/// collinear points; fewer than three points come back for degenerate input.
pub fn convex_hull<T: Scalar>(points: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut pts: Vec<Vec2<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 1])
                <= T::zero()
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 1])
                <= T::zero()
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn closest_on_segment<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == T::zero() {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    a + ab * t
}

pub fn point_segment_distance<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    (p - closest_on_segment(p, a, b)).norm()
}

fn orient<T: Scalar>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment<T: Scalar>(a: Vec2<T>, b: Vec2<T>, p: Vec2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test.
pub fn segments_intersect<T: Scalar>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, d: Vec2<T>) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    let z = T::zero();
    if ((o1 > z && o2 < z) || (o1 < z && o2 > z)) && ((o3 > z && o4 < z) || (o3 < z && o4 > z)) {
        return true;
    }
    (o1 == z && on_segment(a, b, c))
        || (o2 == z && on_segment(a, b, d))
        || (o3 == z && on_segment(c, d, a))
        || (o4 == z && on_segment(c, d, b))
}

/// Point or direction in 3D, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn planar(self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}
