//! Planar geometry: convex spill polygons, horizontal tracklines and the
//! chord lengths they cut through each other.
//!
//! All coordinates are meters in a local east/north frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertices closer than this are treated as the same point.
pub const VERTEX_EPS: f64 = 1e-9;

/// Candidate tracklines whose ordinates are closer than this are merged.
pub const TRACKLINE_DEDUP_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

/// z-component of `(a - o) x (b - o)`; positive when `o -> a -> b` turns left.
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    let u = a.sub(o);
    let v = b.sub(o);
    u.x * v.y - u.y * v.x
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.width() > 0.0
            && self.height() > 0.0
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Strictly convex polygon with counter-clockwise vertices.
///
/// Construct through [`convex_hull`] or [`ConvexPolygon::new`]; both reject
/// anything that is not already a valid strictly convex CCW ring.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates an explicit vertex ring without reordering it.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::DegenerateGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::DegenerateGeometry(format!("non-finite vertex ({}, {})", p.x, p.y)));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b.x - a.x).hypot(b.y - a.y) <= VERTEX_EPS {
                return Err(GeometryError::DegenerateGeometry(format!(
                    "duplicate vertex at index {}",
                    (i + 1) % n
                )));
            }
            if cross(a, b, c) <= 0.0 {
                return Err(GeometryError::DegenerateGeometry(format!(
                    "ring is not strictly convex counter-clockwise at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        let poly = Self { vertices };
        if poly.area() <= 0.0 {
            return Err(GeometryError::DegenerateGeometry("zero area".into()));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum();
        0.5 * twice
    }

    /// `(min_y, max_y)` over the vertices.
    pub fn y_extent(&self) -> (f64, f64) {
        extent(self.vertices.iter().map(|p| p.y))
    }

    pub fn x_extent(&self) -> (f64, f64) {
        extent(self.vertices.iter().map(|p| p.x))
    }

    /// Closed point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) >= 0.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { vertices: self.vertices.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect() }
    }
}

impl<'de> Deserialize<'de> for ConvexPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Point2>::deserialize(d)?;
        ConvexPolygon::new(vertices).map_err(serde::de::Error::custom)
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Horizontal survey line from `x_start` to `x_end` at ordinate `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trackline {
    pub y: f64,
    pub x_start: f64,
    pub x_end: f64,
    pub length: f64,
}

impl Trackline {
    pub fn new(y: f64, x_start: f64, x_end: f64) -> Result<Self, GeometryError> {
        if !(y.is_finite() && x_start.is_finite() && x_end.is_finite()) || x_start >= x_end {
            return Err(GeometryError::DegenerateGeometry(format!(
                "trackline needs finite x_start < x_end, got [{x_start}, {x_end}] at y={y}"
            )));
        }
        Ok(Self { y, x_start, x_end, length: x_end - x_start })
    }

    /// Trackline spanning the full width of `area` at ordinate `y`.
    pub fn spanning(area: &Bounds, y: f64) -> Self {
        Self { y, x_start: area.x_min, x_end: area.x_max, length: area.width() }
    }

    pub fn is_valid(&self) -> bool {
        self.y.is_finite()
            && self.x_start.is_finite()
            && self.x_end.is_finite()
            && self.x_start < self.x_end
            && (self.length - (self.x_end - self.x_start)).abs() <= 1e-9 * self.length.max(1.0)
    }
}

/// Andrew's monotone chain. Collinear and duplicate points are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon, GeometryError> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::DegenerateGeometry("non-finite input point".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (a.x - b.x).hypot(a.y - b.y) <= VERTEX_EPS);
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "need at least 3 distinct points, got {}",
            pts.len()
        )));
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(GeometryError::DegenerateGeometry("all points are collinear".into()));
    }
    ConvexPolygon::new(hull)
}

/// Length of the horizontal segment `[x_start, x_end] x {line_y}` that lies
/// inside the closed polygon.
///
/// Cyrus-Beck clipping: each CCW edge restricts the segment parameter to a
/// half-line, and the surviving parameter interval is the chord.
pub fn clip_segment_length(poly: &ConvexPolygon, line_y: f64, x_start: f64, x_end: f64) -> f64 {
    let span = x_end - x_start;
    if span <= 0.0 {
        return 0.0;
    }
    let (y_lo, y_hi) = poly.y_extent();
    if line_y < y_lo || line_y > y_hi {
        return 0.0;
    }

    let p0 = Point2::new(x_start, line_y);
    let mut t_lo = 0.0_f64;
    let mut t_hi = 1.0_f64;
    let v = poly.vertices();
    let n = v.len();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        // inside iff f(t) = f0 + t * df >= 0
        let f0 = cross(a, b, p0);
        let df = -(b.y - a.y) * span;
        if df == 0.0 {
            if f0 < 0.0 {
                return 0.0;
            }
            continue;
        }
        let t = -f0 / df;
        if df > 0.0 {
            t_lo = t_lo.max(t);
        } else {
            t_hi = t_hi.min(t);
        }
        if t_lo >= t_hi {
            return 0.0;
        }
    }
    (t_hi - t_lo) * span
}

/// One full-width candidate trackline at the lowest and highest ordinate of
/// each spill polygon, sorted by `y`, with ordinates closer than
/// [`TRACKLINE_DEDUP_M`] merged into the lower one.
pub fn generate_tracklines(sources: &[ConvexPolygon], area: &Bounds) -> Vec<Trackline> {
    let mut ys: Vec<f64> = sources
        .iter()
        .flat_map(|poly| {
            let (lo, hi) = poly.y_extent();
            [lo, hi]
        })
        .collect();
    ys.sort_by(f64::total_cmp);

    let mut kept: Vec<f64> = Vec::with_capacity(ys.len());
    for y in ys {
        match kept.last() {
            Some(&last) if y - last < TRACKLINE_DEDUP_M => {}
            _ => kept.push(y),
        }
    }
    kept.into_iter().map(|y| Trackline::spanning(area, y)).collect()
}

/// `samples` points on the boundary of an ellipse.
pub fn ellipse_points(
    center: Point2,
    semi_major: f64,
    semi_minor: f64,
    rotation: f64,
    samples: usize,
) -> Vec<Point2> {
    let (s, c) = rotation.sin_cos();
    (0..samples)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / samples as f64;
            let ex = semi_major * theta.cos();
            let ey = semi_minor * theta.sin();
            Point2::new(center.x + c * ex - s * ey, center.y + s * ex + c * ey)
        })
        .collect()
}
