//! Deterministic geometry of grains: points, windows, shapes, distances,
//! Hausdorff measures, quadrature over translated grains and volumes of
//! Minkowski enlargements (closed form and grid oracle).
//!
//! Shapes live in a local frame whose origin is the germ. Segments, circles,
//! discs, spheres and balls are centred on the origin; polyline vertices are
//! taken as given; a whiskered disc is centred on the disc centre.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point {
    c: [f64; 3],
    dim: u8,
}

impl Point {
    pub fn new2(x: f64, y: f64) -> Self {
        Point { c: [x, y, 0.0], dim: 2 }
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point { c: [x, y, z], dim: 3 }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&coords.len()) {
            return Err(Error::Dimension(coords.len()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Point { c, dim: coords.len() as u8 })
    }

    pub fn origin(dim: usize) -> Self {
        Point { c: [0.0; 3], dim: dim as u8 }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim()]
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.c[i]
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim as u8;
        self
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point { c: [self.c[0] + o.c[0], self.c[1] + o.c[1], self.c[2] + o.c[2]], dim: self.dim.max(o.dim) }
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point { c: [self.c[0] - o.c[0], self.c[1] - o.c[1], self.c[2] - o.c[2]], dim: self.dim.max(o.dim) }
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point { c: [self.c[0] * s, self.c[1] * s, self.c[2] * s], dim: self.dim }
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::from_slice(&v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.coords().to_vec()
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub struct Window {
    lo: Point,
    hi: Point,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowRepr {
    lo: Point,
    hi: Point,
}

impl TryFrom<WindowRepr> for Window {
    type Error = Error;
    fn try_from(w: WindowRepr) -> Result<Self> {
        Window::new(w.lo, w.hi)
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        WindowRepr { lo: w.lo, hi: w.hi }
    }
}

impl Window {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return Err(Error::DimensionMismatch { expected: lo.dim(), got: hi.dim() });
        }
        if (0..lo.dim()).any(|i| !(lo.c[i] < hi.c[i])) {
            return Err(invalid(format!("window corners must satisfy lo < hi, got {lo} and {hi}")));
        }
        Ok(Window { lo, hi })
    }

    /// `[0, side]^dim`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        let hi = Point { c: [side; 3], dim: dim as u8 };
        Window::new(Point::origin(dim), hi)
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn extent(&self, i: usize) -> f64 {
        self.hi.c[i] - self.lo.c[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|i| p.c[i] >= self.lo.c[i] && p.c[i] <= self.hi.c[i])
    }

    /// Box enlarged by `r` on every side.
    pub fn dilate(&self, r: f64) -> Window {
        let d = Point { c: [r; 3], dim: self.lo.dim };
        Window { lo: self.lo - d, hi: self.hi + d }
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let e = (self.lo.c[i] - p.c[i]).max(p.c[i] - self.hi.c[i]).max(0.0);
            s += e * e;
        }
        s.sqrt()
    }

    /// Distance from `p` to the farthest corner.
    pub fn farthest_distance(&self, p: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let e = (p.c[i] - self.lo.c[i]).abs().max((self.hi.c[i] - p.c[i]).abs());
            s += e * e;
        }
        s.sqrt()
    }

    pub fn intersects(&self, other: &Window) -> bool {
        (0..self.dim()).all(|i| self.lo.c[i] <= other.hi.c[i] && other.lo.c[i] <= self.hi.c[i])
    }

    pub fn center(&self) -> Point {
        (self.lo + self.hi) * 0.5
    }
}

/// Deterministic grain shape `Z(s)` in its local frame.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrainShape {
    /// Planar segment centred on the origin.
    Segment {
        length: f64,
        angle: f64,
    },
    Polyline {
        vertices: Vec<Point>,
    },
    Circle {
        radius: f64,
    },
    Disc {
        radius: f64,
    },
    Sphere {
        radius: f64,
    },
    Ball {
        radius: f64,
    },
    /// Disc with a radial segment of length `whisker` attached at polar angle `angle`.
    WhiskeredDisc {
        radius: f64,
        whisker: f64,
        angle: f64,
    },
}

impl GrainShape {
    pub fn segment(length: f64, angle: f64) -> Self {
        GrainShape::Segment { length, angle }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GrainShape::Segment { .. } => "segment",
            GrainShape::Polyline { .. } => "polyline",
            GrainShape::Circle { .. } => "circle",
            GrainShape::Disc { .. } => "disc",
            GrainShape::Sphere { .. } => "sphere",
            GrainShape::Ball { .. } => "ball",
            GrainShape::WhiskeredDisc { .. } => "whiskered_disc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidShape(format!("{} {name} must be positive and finite, got {v}", self.kind())))
            }
        };
        match self {
            GrainShape::Segment { length, angle } => {
                positive("length", *length)?;
                if !angle.is_finite() {
                    return Err(Error::InvalidShape("segment angle must be finite".into()));
                }
            }
            GrainShape::Polyline { vertices } => {
                if vertices.len() < 2 {
                    return Err(Error::InvalidShape("polyline needs at least two vertices".into()));
                }
                let d = vertices[0].dim();
                if vertices.iter().any(|v| v.dim() != d) {
                    return Err(Error::InvalidShape("polyline vertices differ in dimension".into()));
                }
                if polyline_length(vertices) <= 0.0 {
                    return Err(Error::InvalidShape("polyline has zero length".into()));
                }
            }
            GrainShape::Circle { radius }
            | GrainShape::Disc { radius }
            | GrainShape::Sphere { radius }
            | GrainShape::Ball { radius } => positive("radius", *radius)?,
            GrainShape::WhiskeredDisc { radius, whisker, angle } => {
                positive("radius", *radius)?;
                positive("whisker", *whisker)?;
                if !angle.is_finite() {
                    return Err(Error::InvalidShape("whisker angle must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Dimension of the ambient space the shape lives in.
    pub fn ambient_dim(&self) -> usize {
        match self {
            GrainShape::Polyline { vertices } => vertices.first().map_or(2, Point::dim),
            GrainShape::Sphere { .. } | GrainShape::Ball { .. } => 3,
            _ => 2,
        }
    }

    /// Hausdorff dimension `n` of the shape.
    pub fn hausdorff_dim(&self) -> usize {
        match self {
            GrainShape::Segment { .. } | GrainShape::Polyline { .. } | GrainShape::Circle { .. } => 1,
            GrainShape::Disc { .. } | GrainShape::Sphere { .. } | GrainShape::WhiskeredDisc { .. } => 2,
            GrainShape::Ball { .. } => 3,
        }
    }

    /// Largest distance from the local origin to a point of the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            GrainShape::Segment { length, .. } => 0.5 * length,
            GrainShape::Polyline { vertices } => vertices.iter().map(Point::norm).fold(0.0, f64::max),
            GrainShape::Circle { radius }
            | GrainShape::Disc { radius }
            | GrainShape::Sphere { radius }
            | GrainShape::Ball { radius } => *radius,
            GrainShape::WhiskeredDisc { radius, whisker, .. } => radius + whisker,
        }
    }

    /// Tight axis-aligned bounding box in the local frame.
    pub fn local_bbox(&self) -> (Point, Point) {
        let d = self.ambient_dim();
        let sym = |r: f64| {
            let p = Point { c: [r, r, if d == 3 { r } else { 0.0 }], dim: d as u8 };
            (p * -1.0, p)
        };
        match self {
            GrainShape::Segment { .. } => {
                let (a, b) = self.segment_endpoints();
                bbox_of(&[a, b])
            }
            GrainShape::Polyline { vertices } => bbox_of(vertices),
            GrainShape::Circle { radius }
            | GrainShape::Disc { radius }
            | GrainShape::Sphere { radius }
            | GrainShape::Ball { radius } => sym(*radius),
            GrainShape::WhiskeredDisc { radius, .. } => {
                let (lo, hi) = sym(*radius);
                let (_, tip) = whisker_endpoints(self);
                bbox_of(&[lo, hi, tip])
            }
        }
    }

    fn segment_endpoints(&self) -> (Point, Point) {
        match *self {
            GrainShape::Segment { length, angle } => {
                let u = Point::new2(angle.cos(), angle.sin()) * (0.5 * length);
                (u * -1.0, u)
            }
            _ => unreachable!("segment_endpoints on {}", self.kind()),
        }
    }

    /// Distance from `p` (local frame) to the shape.
    pub fn distance_local(&self, p: &Point) -> f64 {
        match self {
            GrainShape::Segment { .. } => {
                let (a, b) = self.segment_endpoints();
                point_segment_distance(p, &a, &b)
            }
            GrainShape::Polyline { vertices } => {
                vertices.windows(2).map(|e| point_segment_distance(p, &e[0], &e[1])).fold(f64::INFINITY, f64::min)
            }
            GrainShape::Circle { radius } | GrainShape::Sphere { radius } => (p.norm() - radius).abs(),
            GrainShape::Disc { radius } | GrainShape::Ball { radius } => (p.norm() - radius).max(0.0),
            GrainShape::WhiskeredDisc { radius, .. } => {
                let (a, b) = whisker_endpoints(self);
                (p.norm() - radius).max(0.0).min(point_segment_distance(p, &a, &b))
            }
        }
    }

    /// Splits the topological boundary into the part with volume density 1/2
    /// (essential boundary) and the part with density 0 (whiskers). Lower
    /// dimensional shapes are entirely of the second kind.
    pub fn boundary_parts(&self) -> (Vec<GrainShape>, Vec<GrainShape>) {
        match self {
            GrainShape::Disc { radius } => (vec![GrainShape::Circle { radius: *radius }], vec![]),
            GrainShape::Ball { radius } => (vec![GrainShape::Sphere { radius: *radius }], vec![]),
            GrainShape::WhiskeredDisc { radius, .. } => {
                let (a, b) = whisker_endpoints(self);
                (vec![GrainShape::Circle { radius: *radius }], vec![GrainShape::Polyline { vertices: vec![a, b] }])
            }
            other => (vec![], vec![other.clone()]),
        }
    }

    /// Whether the shape has non-empty interior in its ambient space.
    pub fn is_full_dimensional(&self) -> bool {
        self.hausdorff_dim() == self.ambient_dim()
    }
}

fn whisker_endpoints(shape: &GrainShape) -> (Point, Point) {
    match *shape {
        GrainShape::WhiskeredDisc { radius, whisker, angle } => {
            let u = Point::new2(angle.cos(), angle.sin());
            (u * radius, u * (radius + whisker))
        }
        _ => unreachable!(),
    }
}

fn bbox_of(points: &[Point]) -> (Point, Point) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in &points[1..] {
        for i in 0..3 {
            lo.c[i] = lo.c[i].min(p.c[i]);
            hi.c[i] = hi.c[i].max(p.c[i]);
        }
    }
    (lo, hi)
}

fn polyline_length(vertices: &[Point]) -> f64 {
    vertices.windows(2).map(|e| e[0].distance(&e[1])).sum()
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = *b - *a;
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let ap = *p - *a;
    let t = ap.dot(&ab);
    if t <= 0.0 {
        return ap.norm();
    }
    if t >= len2 {
        return p.distance(b);
    }
    // |ap × ab| / |ab| is exactly zero for collinear points
    let cx = ap.c[1] * ab.c[2] - ap.c[2] * ab.c[1];
    let cy = ap.c[2] * ab.c[0] - ap.c[0] * ab.c[2];
    let cz = ap.c[0] * ab.c[1] - ap.c[1] * ab.c[0];
    ((cx * cx + cy * cy + cz * cz) / len2).sqrt()
}

/// A translated grain `germ + Z(s)` with its cached bounding box.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Grain {
    pub germ: Point,
    pub shape: GrainShape,
    #[serde(skip_serializing)]
    #[serde(default = "empty_bbox")]
    bbox: (Point, Point),
}

fn empty_bbox() -> (Point, Point) {
    (Point::origin(2), Point::origin(2))
}

impl Grain {
    pub fn new(germ: Point, shape: GrainShape) -> Self {
        let (lo, hi) = shape.local_bbox();
        let d = germ.dim().max(shape.ambient_dim());
        Grain { germ, bbox: ((germ + lo).with_dim(d), (germ + hi).with_dim(d)), shape }
    }

    pub fn bbox(&self) -> (Point, Point) {
        self.bbox
    }

    pub fn bbox_window(&self) -> Window {
        Window { lo: self.bbox.0, hi: self.bbox.1 }
    }

    pub fn distance(&self, x: &Point) -> f64 {
        self.shape.distance_local(&(*x - self.germ))
    }

    /// Lower bound on `distance(x)` from the bounding box alone.
    pub fn bbox_distance(&self, x: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..x.dim() {
            let e = (self.bbox.0.c[i] - x.c[i]).max(x.c[i] - self.bbox.1.c[i]).max(0.0);
            s += e * e;
        }
        s.sqrt()
    }

    /// Restores the cached box after deserialization.
    pub fn rebuilt(self) -> Self {
        Grain::new(self.germ, self.shape)
    }
}

/// Closed-set envelope `Ξ(s) ⊇ Z(s)` with its lower mass-density constant.
#[derive(Clone, PartialEq, Debug)]
pub struct RegularityEnvelope {
    pub shape: GrainShape,
    pub gamma: f64,
}

impl RegularityEnvelope {
    /// Envelope equal to the shape itself, with the best `γ ∈ (0, 1]` for which
    /// `ℋⁿ(Z ∩ B_ρ(x)) ≥ γρⁿ` holds for all `x ∈ Z`, `ρ ∈ (0, 1)`.
    pub fn identity(shape: &GrainShape) -> Self {
        let gamma = match *shape {
            GrainShape::Segment { length, .. } => length.min(1.0),
            GrainShape::Polyline { ref vertices } => polyline_length(vertices).min(1.0),
            GrainShape::Circle { radius } => (2.0 * PI * radius).min(1.0),
            GrainShape::Sphere { radius } => (4.0 * PI * radius * radius).min(1.0),
            GrainShape::Disc { radius } => {
                if radius >= 1.0 {
                    1.0
                } else {
                    0.3 * radius * radius
                }
            }
            GrainShape::Ball { radius } => {
                if radius >= 1.0 {
                    1.0
                } else {
                    0.16 * radius.powi(3)
                }
            }
            // whisker points carry no area; the enclosing disc is the envelope
            GrainShape::WhiskeredDisc { .. } => {
                return Self::identity(&GrainShape::Disc { radius: shape.bounding_radius() })
            }
        };
        RegularityEnvelope { shape: shape.clone(), gamma }
    }

    /// Segments shorter than 2 are extended homothetically about their centre
    /// to length 2, which gives `γ = 1`.
    pub fn extended_segment(shape: &GrainShape) -> Self {
        match *shape {
            GrainShape::Segment { length, angle } if length < 2.0 => {
                RegularityEnvelope { shape: GrainShape::Segment { length: 2.0, angle }, gamma: 1.0 }
            }
            GrainShape::Segment { .. } => RegularityEnvelope { shape: shape.clone(), gamma: 1.0 },
            _ => Self::identity(shape),
        }
    }

    /// Upper bound on `ℋ^d(Z_{⊕r}) / (b_{d−n} r^{d−n})` valid for all `r ∈ (0, 2)`.
    pub fn minkowski_bound(&self, ambient_dim: usize) -> f64 {
        let n = self.shape.hausdorff_dim();
        let d = ambient_dim;
        hausdorff_measure(&self.shape) / self.gamma
            * 2f64.powi(n as i32)
            * 4f64.powi(d as i32)
            * unit_ball_volume(d).unwrap_or(f64::NAN)
            / unit_ball_volume(d - n).unwrap_or(f64::NAN)
    }
}

/// Volume `b_d` of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    match d {
        0 => Ok(1.0),
        1 => Ok(2.0),
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        _ => Err(Error::Dimension(d)),
    }
}

/// `b_d r^d`.
pub fn ball_volume(d: usize, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(invalid(format!("radius must be non-negative, got {r}")));
    }
    Ok(unit_ball_volume(d)? * r.powi(d as i32))
}

pub fn hausdorff_measure(shape: &GrainShape) -> f64 {
    match *shape {
        GrainShape::Segment { length, .. } => length,
        GrainShape::Polyline { ref vertices } => polyline_length(vertices),
        GrainShape::Circle { radius } => 2.0 * PI * radius,
        GrainShape::Disc { radius } | GrainShape::WhiskeredDisc { radius, .. } => PI * radius * radius,
        GrainShape::Sphere { radius } => 4.0 * PI * radius * radius,
        GrainShape::Ball { radius } => 4.0 * PI * radius.powi(3) / 3.0,
    }
}

pub fn distance_to_grain(x: &Point, g: &Grain) -> f64 {
    g.distance(x)
}

/// Midpoint quadrature of `weight` over `x − Z(s)` with respect to `ℋⁿ`.
///
/// Curves use `steps` nodes per unit length (circles: uniform angular nodes).
/// Surfaces and solids use `steps` cells per parameter axis with exact cell
/// measures, so a constant weight is integrated exactly.
pub fn translated_grain_integral<F>(x: &Point, shape: &GrainShape, weight: F, steps: usize) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    if steps == 0 {
        return Err(invalid("quadrature steps must be positive"));
    }
    let at = |z: Point| weight(&(*x - z));
    let curve_nodes = |len: f64| ((steps as f64 * len).ceil() as usize).max(1);
    let integrate_segment = |a: Point, b: Point| {
        let len = a.distance(&b);
        let n = curve_nodes(len);
        let h = len / n as f64;
        (0..n).map(|i| at(a + (b - a) * ((i as f64 + 0.5) / n as f64))).sum::<f64>() * h
    };
    let value = match *shape {
        GrainShape::Segment { .. } => {
            let (a, b) = shape.segment_endpoints();
            integrate_segment(a, b)
        }
        GrainShape::Polyline { ref vertices } => vertices.windows(2).map(|e| integrate_segment(e[0], e[1])).sum(),
        GrainShape::Circle { radius } => {
            let n = curve_nodes(2.0 * PI * radius).max(8);
            let dt = 2.0 * PI / n as f64;
            let sum: f64 = (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) * dt;
                    at(Point::new2(radius * t.cos(), radius * t.sin()))
                })
                .sum();
            sum * radius * dt
        }
        GrainShape::Sphere { radius } => {
            let dz = 2.0 / steps as f64;
            let dphi = 2.0 * PI / steps as f64;
            let mut sum = 0.0;
            for i in 0..steps {
                let cz = -1.0 + (i as f64 + 0.5) * dz;
                let s = (1.0 - cz * cz).sqrt();
                for j in 0..steps {
                    let phi = (j as f64 + 0.5) * dphi;
                    sum += at(Point::new3(radius * s * phi.cos(), radius * s * phi.sin(), radius * cz));
                }
            }
            sum * radius * radius * dz * dphi
        }
        GrainShape::Disc { radius } | GrainShape::WhiskeredDisc { radius, .. } => {
            let dphi = 2.0 * PI / steps as f64;
            let mut sum = 0.0;
            for i in 0..steps {
                let r0 = radius * i as f64 / steps as f64;
                let r1 = radius * (i + 1) as f64 / steps as f64;
                let area = 0.5 * (r1 * r1 - r0 * r0) * dphi;
                let rm = (0.5 * (r0 * r0 + r1 * r1)).sqrt();
                let ring: f64 = (0..steps)
                    .map(|j| {
                        let phi = (j as f64 + 0.5) * dphi;
                        at(Point::new2(rm * phi.cos(), rm * phi.sin()))
                    })
                    .sum();
                sum += ring * area;
            }
            sum
        }
        GrainShape::Ball { radius } => {
            let dz = 2.0 / steps as f64;
            let dphi = 2.0 * PI / steps as f64;
            let mut sum = 0.0;
            for i in 0..steps {
                let r0 = radius * i as f64 / steps as f64;
                let r1 = radius * (i + 1) as f64 / steps as f64;
                let vol = (r1.powi(3) - r0.powi(3)) / 3.0 * dz * dphi;
                let rm = (0.5 * (r0.powi(3) + r1.powi(3))).cbrt();
                for k in 0..steps {
                    let cz = -1.0 + (k as f64 + 0.5) * dz;
                    let s = (1.0 - cz * cz).sqrt();
                    for j in 0..steps {
                        let phi = (j as f64 + 0.5) * dphi;
                        sum += vol * at(Point::new3(rm * s * phi.cos(), rm * s * phi.sin(), rm * cz));
                    }
                }
            }
            sum
        }
    };
    Ok(value)
}

/// Closed-form `ℋ^d(Z_{⊕r})`.
pub fn enlarged_volume_exact(shape: &GrainShape, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!("enlargement radius must be positive, got {r}")));
    }
    let v = match *shape {
        GrainShape::Segment { length, .. } => 2.0 * r * length + PI * r * r,
        GrainShape::Disc { radius } => PI * (radius + r).powi(2),
        GrainShape::Circle { radius } if r < radius => 4.0 * PI * radius * r,
        GrainShape::Circle { radius } => PI * (radius + r).powi(2),
        GrainShape::Ball { radius } => 4.0 * PI / 3.0 * (radius + r).powi(3),
        GrainShape::Sphere { radius } if r < radius => 4.0 * PI / 3.0 * ((radius + r).powi(3) - (radius - r).powi(3)),
        GrainShape::Sphere { radius } => 4.0 * PI / 3.0 * (radius + r).powi(3),
        GrainShape::Polyline { .. } => return Err(Error::FallbackRequired("polyline")),
        GrainShape::WhiskeredDisc { .. } => return Err(Error::FallbackRequired("whiskered_disc")),
    };
    Ok(v)
}

/// Grid-based estimate with its discretisation metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridEstimate {
    pub value: f64,
    /// Measure of cells whose centre lies within half a cell diagonal of the
    /// level set, propagated to `value`'s units.
    pub error_estimate: f64,
    pub cell_diagonal: f64,
    pub resolution: usize,
}

/// Minimum distance from each grid cell centre to a set of grains, truncated
/// at `reach` (cells farther away hold `+∞`).
#[derive(Clone, Debug)]
pub struct DistanceField {
    window: Window,
    resolution: usize,
    values: Vec<f64>,
}

const MAX_GRID_CELLS: usize = 1 << 28;

impl DistanceField {
    pub fn compute(grains: &[Grain], window: &Window, resolution: usize, reach: f64) -> Result<Self> {
        let d = window.dim();
        if resolution < 16 {
            return Err(invalid(format!("grid resolution must be at least 16, got {resolution}")));
        }
        let cells = resolution.checked_pow(d as u32).filter(|&c| c <= MAX_GRID_CELLS);
        let Some(cells) = cells else {
            return Err(invalid(format!("grid of {resolution}^{d} cells is too large")));
        };
        if let Some(g) = grains.iter().find(|g| g.shape.ambient_dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: g.shape.ambient_dim() });
        }
        let h: Vec<f64> = (0..d).map(|i| window.extent(i) / resolution as f64).collect();
        let lo = window.lo();
        let mut values = vec![f64::INFINITY; cells];
        values.par_chunks_mut(resolution).enumerate().for_each(|(row, out)| {
            let i1 = row % resolution;
            let i2 = row / resolution;
            let y = lo.c[1] + (i1 as f64 + 0.5) * h[1];
            let z = if d == 3 { lo.c[2] + (i2 as f64 + 0.5) * h[2] } else { 0.0 };
            for g in grains {
                let (blo, bhi) = g.bbox();
                if y < blo.c[1] - reach || y > bhi.c[1] + reach {
                    continue;
                }
                if d == 3 && (z < blo.c[2] - reach || z > bhi.c[2] + reach) {
                    continue;
                }
                let start = ((blo.c[0] - reach - lo.c[0]) / h[0] - 0.5).ceil().max(0.0);
                let end = ((bhi.c[0] + reach - lo.c[0]) / h[0] - 0.5).floor().min(resolution as f64 - 1.0);
                if end < start {
                    continue;
                }
                for (i, v) in out.iter_mut().enumerate().take(end as usize + 1).skip(start as usize) {
                    let p = if d == 3 {
                        Point::new3(lo.c[0] + (i as f64 + 0.5) * h[0], y, z)
                    } else {
                        Point::new2(lo.c[0] + (i as f64 + 0.5) * h[0], y)
                    };
                    let dist = g.distance(&p);
                    if dist <= reach && dist < *v {
                        *v = dist;
                    }
                }
            }
        });
        Ok(DistanceField { window: *window, resolution, values })
    }

    pub fn cell_volume(&self) -> f64 {
        self.window.volume() / self.values.len() as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        (0..self.window.dim()).map(|i| (self.window.extent(i) / self.resolution as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Volume of `{dist ≤ r}` inside the window.
    pub fn volume_within(&self, r: f64) -> f64 {
        self.values.iter().filter(|&&v| v <= r).count() as f64 * self.cell_volume()
    }

    /// Volume of cells straddling the level set `{dist = r}`.
    pub fn level_uncertainty(&self, r: f64) -> f64 {
        let half = 0.5 * self.cell_diagonal();
        let n = if r > half {
            self.values.iter().filter(|&&v| (v - r).abs() <= half).count()
        } else {
            // interior depth is unknown, mirror the outer band
            2 * self.values.iter().filter(|&&v| v > 0.0 && v <= r + half).count()
        };
        n as f64 * self.cell_volume()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }
}

/// `ℋ^d(Θ_{⊕r} ∩ window)` by cell-centre sampling on a `resolution^d` grid.
pub fn enlarged_volume_grid(grains: &[Grain], r: f64, window: &Window, resolution: usize) -> Result<GridEstimate> {
    if !(r > 0.0) {
        return Err(invalid(format!("enlargement radius must be positive, got {r}")));
    }
    if grains.is_empty() {
        return Ok(GridEstimate { value: 0.0, error_estimate: 0.0, cell_diagonal: 0.0, resolution });
    }
    let probe = DistanceField::compute(&[], window, resolution, 0.0)?;
    let field = DistanceField::compute(grains, window, resolution, r + probe.cell_diagonal())?;
    Ok(GridEstimate {
        value: field.volume_within(r),
        error_estimate: field.level_uncertainty(r),
        cell_diagonal: field.cell_diagonal(),
        resolution,
    })
}

/// Default grid used when a shape has no closed-form enlargement.
fn fallback_grid(shape: &GrainShape, r: f64) -> Result<(Vec<Grain>, Window, usize)> {
    let d = shape.ambient_dim();
    let (lo, hi) = shape.local_bbox();
    let pad = 1.25 * r + 1e-3;
    let pad_p = Point { c: [pad; 3], dim: d as u8 };
    let window = Window::new(lo.with_dim(d) - pad_p, hi.with_dim(d) + pad_p)?;
    let resolution = if d == 3 { 256 } else { 2048 };
    Ok((vec![Grain::new(Point::origin(d), shape.clone())], window, resolution))
}

/// `ℋ^d(Z_{⊕r}) / (b_{d−n} r^{d−n})`, closed form when available, grid oracle otherwise.
pub fn minkowski_ratio(shape: &GrainShape, r: f64) -> Result<f64> {
    shape.validate()?;
    if !(r > 0.0 && r < 2.0) {
        return Err(invalid(format!("radius must lie in (0, 2), got {r}")));
    }
    let d = shape.ambient_dim();
    let n = shape.hausdorff_dim();
    let volume = match enlarged_volume_exact(shape, r) {
        Ok(v) => v,
        Err(Error::FallbackRequired(_)) => {
            let (grains, window, res) = fallback_grid(shape, r)?;
            enlarged_volume_grid(&grains, r, &window, res)?.value
        }
        Err(e) => return Err(e),
    };
    Ok(volume / ball_volume(d - n, r)?)
}

/// `[ℋ^d(A_{⊕r}) − ℋ^d(A)] / r` for the union `A` of `grains`, by grid.
pub fn outer_minkowski_ratio(grains: &[Grain], r: f64, window: &Window, resolution: usize) -> Result<GridEstimate> {
    Ok(outer_minkowski_curve(grains, &[r], window, resolution)?[0].1)
}

/// Outer Minkowski ratios at several radii from a single distance field.
pub fn outer_minkowski_curve(
    grains: &[Grain],
    radii: &[f64],
    window: &Window,
    resolution: usize,
) -> Result<Vec<(f64, GridEstimate)>> {
    if let Some(&bad) = radii.iter().find(|&&r| !(r > 0.0)) {
        return Err(invalid(format!("radius must be positive, got {bad}")));
    }
    let probe = DistanceField::compute(&[], window, resolution, 0.0)?;
    let reach = radii.iter().cloned().fold(0.0, f64::max) + probe.cell_diagonal();
    let field = DistanceField::compute(grains, window, resolution, reach)?;
    let base = field.volume_within(0.0);
    let base_err = field.level_uncertainty(0.0);
    Ok(radii
        .iter()
        .map(|&r| {
            let est = GridEstimate {
                value: (field.volume_within(r) - base) / r,
                error_estimate: (field.level_uncertainty(r) + base_err) / r,
                cell_diagonal: field.cell_diagonal(),
                resolution,
            };
            (r, est)
        })
        .collect())
}
