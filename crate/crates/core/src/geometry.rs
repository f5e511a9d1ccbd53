//! Directions on the unit sphere, orthocomplement frames, and the planar
//! convex-polygon machinery used to assemble bivariate cuts.
//!
//! A direction `u` together with its orthocomplement basis `gamma` forms an
//! orthogonal `m x m` matrix `[u | gamma]`. Directional quantile fits treat
//! `u'y` as the response and `gamma'y` as additional regressors.
//!
//! Polygons are built by clipping an axis-aligned bounding square against a
//! list of closed upper halfspaces `{y : normal . y >= offset}`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Vertices closer than this are merged.
pub const MERGE_TOL: f64 = 1e-9;

/// Default half-width of the bounding square used for halfspace intersection.
pub const DEFAULT_BOUND: f64 = 1e6;

pub type Point2 = [f64; 2];

/// A unit direction and an orthonormal basis of its orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFrame {
    u: DVector<f64>,
    gamma: DMatrix<f64>,
}

impl DirectionFrame {
    /// Frame for the planar direction `(cos phi, sin phi)`.
    pub fn from_angle(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::planar(c, s)
    }

    fn planar(c: f64, s: f64) -> Self {
        // gamma is u rotated by -pi/2
        DirectionFrame {
            u: DVector::from_vec(vec![c, s]),
            gamma: DMatrix::from_column_slice(2, 1, &[s, -c]),
        }
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Polar angle of a planar direction in `[0, 2pi)`.
    pub fn angle(&self) -> Option<f64> {
        (self.dim() == 2).then(|| self.u[1].atan2(self.u[0]).rem_euclid(2.0 * PI))
    }

    /// `gamma' y`
    pub fn project_orth(&self, y: &[f64]) -> Vec<f64> {
        let m = self.dim();
        (0..m - 1)
            .map(|j| (0..m).map(|k| self.gamma[(k, j)] * y[k]).sum())
            .collect()
    }

    /// `u' y`
    pub fn project_u(&self, y: &[f64]) -> f64 {
        self.u.iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// `b = u - gamma c`; satisfies `b'u = 1` because `gamma'u = 0`.
    pub fn b_from_c(&self, c: &[f64]) -> DVector<f64> {
        let mut b = self.u.clone();
        for (j, cj) in c.iter().enumerate() {
            b -= self.gamma.column(j) * *cj;
        }
        b
    }
}

/// Build the frame of direction `u` (normalized).
///
/// For `m = 2` the orthocomplement is `u` rotated by `-pi/2`. For `m >= 3`
/// the frame is completed by the Householder reflection mapping `u` onto the
/// coordinate axis of its largest-magnitude component.
pub fn make_frame(u: &[f64]) -> Result<DirectionFrame> {
    let m = u.len();
    if m < 2 {
        return Err(Error::UnsupportedDimension(format!(
            "directions need m >= 2, got m = {m}"
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidDirection("non-finite component".into()));
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidDirection("zero vector".into()));
    }
    let unit: Vec<f64> = u.iter().map(|x| x / norm).collect();
    if m == 2 {
        return Ok(DirectionFrame::planar(unit[0], unit[1]));
    }

    let pivot = (0..m)
        .max_by(|&a, &b| unit[a].abs().total_cmp(&unit[b].abs()))
        .expect("m >= 3");
    let sign = if unit[pivot] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = DVector::from_vec(unit.clone());
    v[pivot] += sign;
    let vv = v.dot(&v);
    let householder = DMatrix::<f64>::identity(m, m) - (&v * v.transpose()) * (2.0 / vv);
    let cols: Vec<usize> = (0..m).filter(|&k| k != pivot).collect();
    let gamma = householder.select_columns(&cols);
    Ok(DirectionFrame {
        u: DVector::from_vec(unit),
        gamma,
    })
}

/// Ordered list of direction frames.
#[derive(Debug, Clone)]
pub struct DirectionGrid {
    directions: Vec<DirectionFrame>,
}

impl DirectionGrid {
    pub fn from_frames(directions: Vec<DirectionFrame>) -> Self {
        DirectionGrid { directions }
    }

    /// Planar grid with the given polar angles.
    pub fn from_angles(angles: &[f64]) -> Self {
        DirectionGrid {
            directions: angles
                .iter()
                .map(|&a| DirectionFrame::from_angle(a))
                .collect(),
        }
    }

    pub fn directions(&self) -> &[DirectionFrame] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Apply an orthogonal `m x m` matrix to every direction.
    pub fn transformed(&self, o: &DMatrix<f64>) -> Result<Self> {
        let directions = self
            .directions
            .iter()
            .map(|f| make_frame((o * f.u()).as_slice()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DirectionGrid { directions })
    }
}

/// `count` planar directions at angles `2 pi k / count`.
pub fn direction_grid(m: usize, count: usize) -> Result<DirectionGrid> {
    if m != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "direction grids are only available for m = 2, got m = {m}"
        )));
    }
    if count < 3 {
        return Err(Error::InvalidInput(format!(
            "a direction grid needs at least 3 directions, got {count}"
        )));
    }
    let step = 2.0 * PI / count as f64;
    let angles: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
    Ok(DirectionGrid::from_angles(&angles))
}

/// Closed halfplane `{y : normal . y >= offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace2D {
    pub normal: Point2,
    pub offset: f64,
}

impl Halfspace2D {
    pub fn new(normal: Point2, offset: f64) -> Result<Self> {
        let norm = normal[0].hypot(normal[1]);
        if !(norm > 0.0) || !norm.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidInput(format!(
                "halfspace needs a finite nonzero normal, got {normal:?} / {offset}"
            )));
        }
        Ok(Halfspace2D { normal, offset })
    }

    /// `normal . y - offset`; nonnegative inside.
    #[inline]
    pub fn slack(&self, y: Point2) -> f64 {
        self.normal[0] * y[0] + self.normal[1] * y[1] - self.offset
    }

    /// Signed Euclidean distance to the boundary line, positive inside.
    pub fn signed_distance(&self, y: Point2) -> f64 {
        self.slack(y) / self.normal[0].hypot(self.normal[1])
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Wrap vertices already known to be convex and counterclockwise.
    ///
    /// Near-duplicate and collinear vertices are removed; returns `None` when
    /// fewer than three vertices survive or the area vanishes.
    pub fn from_ccw(vertices: Vec<Point2>) -> Option<Self> {
        let vertices = cleanup(vertices);
        if vertices.len() < 3 {
            return None;
        }
        let poly = ConvexPolygon { vertices };
        (poly.area() > 0.0).then(|| poly.canonical())
    }

    /// Axis-aligned square `[-bound, bound]^2`.
    pub fn square(bound: f64) -> Self {
        ConvexPolygon {
            vertices: vec![
                [bound, -bound],
                [bound, bound],
                [-bound, bound],
                [-bound, -bound],
            ],
        }
        .canonical()
    }

    /// Regular polygon inscribed in a circle, first vertex at angle 0.
    pub fn regular(center: Point2, radius: f64, count: usize) -> Option<Self> {
        let step = 2.0 * PI / count as f64;
        let vertices = (0..count)
            .map(|k| {
                let (s, c) = (k as f64 * step).sin_cos();
                [center[0] + radius * c, center[1] + radius * s]
            })
            .collect();
        ConvexPolygon::from_ccw(vertices)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(p, q)| p[0] * q[1] - q[0] * p[1])
            .sum::<f64>()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        let a = self.area();
        let (mut cx, mut cy) = (0.0, 0.0);
        // shift to the first vertex for accuracy on far-away polygons
        let o = self.vertices[0];
        for (p, q) in self.edges() {
            let (px, py, qx, qy) = (p[0] - o[0], p[1] - o[1], q[0] - o[0], q[1] - o[1]);
            let cross = px * qy - qx * py;
            cx += (px + qx) * cross;
            cy += (py + qy) * cross;
        }
        [o[0] + cx / (6.0 * a), o[1] + cy / (6.0 * a)]
    }

    /// Consecutive vertex pairs, closing the loop.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inward-facing halfplanes, one per edge.
    pub fn halfspaces(&self) -> Vec<Halfspace2D> {
        self.edges()
            .map(|(p, q)| {
                let normal = [p[1] - q[1], q[0] - p[0]];
                Halfspace2D {
                    normal,
                    offset: normal[0] * p[0] + normal[1] * p[1],
                }
            })
            .collect()
    }

    /// Whether `y` lies inside or within `tol` (Euclidean) of the polygon.
    pub fn contains(&self, y: Point2, tol: f64) -> bool {
        self.halfspaces()
            .iter()
            .all(|h| h.signed_distance(y) >= -tol)
    }

    /// Distance from `y` to the polygon boundary.
    pub fn boundary_distance(&self, y: Point2) -> f64 {
        self.edges()
            .map(|(p, q)| segment_distance(y, p, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Clip against a halfplane; `None` when nothing with positive area remains.
    pub fn clip(&self, h: &Halfspace2D) -> Option<ConvexPolygon> {
        let slacks: Vec<f64> = self.vertices.iter().map(|&v| h.slack(v)).collect();
        if slacks.iter().all(|&s| s >= 0.0) {
            return Some(self.clone());
        }
        if slacks.iter().all(|&s| s <= 0.0) {
            return None;
        }
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (p, q) = (self.vertices[i], self.vertices[j]);
            let (sp, sq) = (slacks[i], slacks[j]);
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) && sp != sq {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        ConvexPolygon::from_ccw(out)
    }

    /// Intersection of two convex polygons.
    pub fn intersect(&self, other: &ConvexPolygon) -> Option<ConvexPolygon> {
        other
            .halfspaces()
            .iter()
            .try_fold(self.clone(), |poly, h| poly.clip(h))
    }

    /// Rotate the vertex list so that it starts at the vertex with the
    /// smallest polar angle (in `[0, 2pi)`) about the vertex mean.
    fn canonical(mut self) -> Self {
        let n = self.vertices.len() as f64;
        let mx = self.vertices.iter().map(|v| v[0]).sum::<f64>() / n;
        let my = self.vertices.iter().map(|v| v[1]).sum::<f64>() / n;
        let start = (0..self.vertices.len())
            .min_by(|&a, &b| {
                let ang = |v: Point2| (v[1] - my).atan2(v[0] - mx).rem_euclid(2.0 * PI);
                ang(self.vertices[a]).total_cmp(&ang(self.vertices[b]))
            })
            .unwrap_or(0);
        self.vertices.rotate_left(start);
        self
    }

    /// JSON array of `[y1, y2]` pairs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.vertices).expect("finite floats serialize")
    }

    /// CSV with header `vertex_index,y1,y2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex_index,y1,y2\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", v[0], v[1]);
        }
        out
    }
}

fn cleanup(mut v: Vec<Point2>) -> Vec<Point2> {
    // merge near-duplicates, including the wrap-around pair
    let mut merged: Vec<Point2> = Vec::with_capacity(v.len());
    for p in v.drain(..) {
        if merged.last().is_none_or(|q| dist(*q, p) > MERGE_TOL) {
            merged.push(p);
        }
    }
    while merged.len() > 1 && dist(merged[0], *merged.last().unwrap()) <= MERGE_TOL {
        merged.pop();
    }
    // drop vertices that are collinear with their neighbours
    loop {
        let n = merged.len();
        if n < 3 {
            return merged;
        }
        // scale-free: compare the turn angle, not the raw cross product, so
        // short edges survive next to far-away vertices
        let flat = (0..n).find(|&i| {
            let a = merged[(i + n - 1) % n];
            let b = merged[i];
            let c = merged[(i + 1) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            cross.abs() <= 1e-12 * dist(a, b) * dist(b, c)
        });
        match flat {
            Some(i) => {
                merged.remove(i);
            }
            None => return merged,
        }
    }
}

#[inline]
fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segment_distance(y: Point2, p: Point2, q: Point2) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(y, p);
    }
    let t = (((y[0] - p[0]) * d[0] + (y[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(y, [p[0] + t * d[0], p[1] + t * d[1]])
}

/// Intersect halfplanes with the square `[-bound, bound]^2`.
///
/// Returns `None` when the intersection is empty or has zero area.
pub fn intersect_halfspaces(hs: &[Halfspace2D], bound: f64) -> Result<Option<ConvexPolygon>> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bounding square half-width must be > 0, got {bound}"
        )));
    }
    Ok(hs
        .iter()
        .try_fold(ConvexPolygon::square(bound), |poly, h| poly.clip(h)))
}

/// Whether any vertex lies on the bounding square `[-bound, bound]^2`.
pub fn touches_bound(poly: &ConvexPolygon, bound: f64) -> bool {
    let tol = bound * 1e-9;
    poly.vertices()
        .iter()
        .any(|v| v[0].abs() >= bound - tol || v[1].abs() >= bound - tol)
}

/// Symmetric Hausdorff distance between the boundaries of two polygons.
pub fn hausdorff_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> Result<f64> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::InvalidInput(
            "Hausdorff distance needs two non-empty polygons".into(),
        ));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `sup` over the boundary of `a` of the distance to the boundary of `b`.
fn directed_hausdorff(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let hb = b.halfspaces();
    let inv_norms: Vec<f64> = hb
        .iter()
        .map(|h| 1.0 / h.normal[0].hypot(h.normal[1]))
        .collect();
    // inside b the boundary distance is min over edge lines, a concave
    // function along any segment
    let inner_depth = |y: Point2| {
        hb.iter()
            .zip(&inv_norms)
            .map(|(h, s)| h.slack(y) * s)
            .fold(f64::INFINITY, f64::min)
    };

    let mut worst = 0.0f64;
    for (p, q) in a.edges() {
        worst = worst.max(b.boundary_distance(p));
        // portion of segment pq inside b (Cyrus-Beck)
        let d = [q[0] - p[0], q[1] - p[1]];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for h in &hb {
            let sp = h.slack(p);
            let rate = h.normal[0] * d[0] + h.normal[1] * d[1];
            if rate == 0.0 {
                if sp < 0.0 {
                    t1 = -1.0;
                    break;
                }
            } else {
                let t = -sp / rate;
                if rate > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        if t1 <= t0 {
            continue;
        }
        let at = |t: f64| [p[0] + t * d[0], p[1] + t * d[1]];
        let (mut lo, mut hi) = (t0, t1);
        for _ in 0..100 {
            if hi - lo < 1e-13 {
                break;
            }
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if inner_depth(at(m1)) < inner_depth(at(m2)) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        worst = worst.max(inner_depth(at(0.5 * (lo + hi))));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box() -> Vec<Halfspace2D> {
        vec![
            Halfspace2D::new([1.0, 0.0], -1.0).unwrap(),
            Halfspace2D::new([-1.0, 0.0], -1.0).unwrap(),
            Halfspace2D::new([0.0, 1.0], -1.0).unwrap(),
            Halfspace2D::new([0.0, -1.0], -1.0).unwrap(),
        ]
    }

    fn disk_halfspaces(count: usize, r: f64) -> Vec<Halfspace2D> {
        direction_grid(2, count)
            .unwrap()
            .directions()
            .iter()
            .map(|f| Halfspace2D::new([f.u()[0], f.u()[1]], -r).unwrap())
            .collect()
    }

    fn assert_orthogonal(f: &DirectionFrame) {
        let m = f.dim();
        let mut full = DMatrix::zeros(m, m);
        full.set_column(0, f.u());
        for j in 0..m - 1 {
            full.set_column(j + 1, &f.gamma().column(j));
        }
        let gram = full.transpose() * &full;
        assert!((gram - DMatrix::identity(m, m)).amax() < 1e-10);
    }

    #[test]
    fn frame_axis_aligned() {
        let f = make_frame(&[1.0, 0.0]).unwrap();
        assert_eq!(f.gamma().as_slice(), &[0.0, -1.0]);
        assert_orthogonal(&f);
    }

    #[test]
    fn frame_three_dimensional() {
        let f = make_frame(&[0.0, 1.0, 0.0]).unwrap();
        let gtu = f.gamma().transpose() * f.u();
        assert!(gtu.amax() < 1e-12);
        let gtg = f.gamma().transpose() * f.gamma();
        assert!((gtg - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn frame_three_four_five() {
        let f = make_frame(&[3.0, 4.0]).unwrap();
        assert!((f.u()[0] - 0.6).abs() < 1e-15 && (f.u()[1] - 0.8).abs() < 1e-15);
        let g = f.gamma();
        // rotation of u by -pi/2: (0.8, -0.6) = -(-4, 3)/5
        assert!((g[(0, 0)] - 0.8).abs() < 1e-15 && (g[(1, 0)] + 0.6).abs() < 1e-15);
        assert!((f.gamma().transpose() * f.u()).amax() < 1e-12);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_rejects_zero() {
        assert!(matches!(
            make_frame(&[0.0, 0.0]),
            Err(Error::InvalidDirection(_))
        ));
    }

    #[test]
    fn b_from_c_has_unit_projection() {
        let f = make_frame(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        let b = f.b_from_c(&[0.3, -1.2, 7.0]);
        assert!((b.dot(f.u()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_of_four() {
        let g = direction_grid(2, 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (f, e) in g.directions().iter().zip(expect) {
            assert!((f.u()[0] - e[0]).abs() < 1e-15 && (f.u()[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_of_360() {
        let g = direction_grid(2, 360).unwrap();
        assert_eq!(g.len(), 360);
        let angles: Vec<f64> = g.directions().iter().map(|f| f.angle().unwrap()).collect();
        for w in angles.windows(2) {
            assert!((w[1] - w[0] - PI / 180.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_three_dims() {
        assert!(matches!(
            direction_grid(3, 8),
            Err(Error::UnsupportedDimension(_))
        ));
    }

    #[test]
    fn box_intersection() {
        let poly = intersect_halfspaces(&unit_box(), 10.0).unwrap().unwrap();
        assert_eq!(poly.len(), 4);
        assert!((poly.area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn disk_intersection() {
        let poly = intersect_halfspaces(&disk_halfspaces(360, 1.0), 10.0)
            .unwrap()
            .unwrap();
        // circumscribed regular 360-gon: area M tan(pi/M) r^2
        let m = 360.0;
        let exact = m * (PI / m).tan();
        assert!((poly.area() - exact).abs() < 1e-9);
        assert!((poly.area() - PI).abs() / PI < 1e-3);
    }

    #[test]
    fn small_disk_inside_huge_bound_keeps_every_edge() {
        // short edges next to far bounding vertices must not be merged away
        let r = 0.42;
        let poly = intersect_halfspaces(&disk_halfspaces(360, r), 1e6)
            .unwrap()
            .unwrap();
        assert_eq!(poly.len(), 360);
        let m = 360.0;
        let exact = m * (PI / m).tan() * r * r;
        assert!((poly.area() - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn opposing_halfspaces_are_empty() {
        let hs = [
            Halfspace2D::new([1.0, 0.0], 1.0).unwrap(),
            Halfspace2D::new([-1.0, 0.0], 1.0).unwrap(),
        ];
        assert!(intersect_halfspaces(&hs, 10.0).unwrap().is_none());
    }

    #[test]
    fn touching_bound_detected() {
        let hs = [Halfspace2D::new([1.0, 0.0], 0.0).unwrap()];
        let poly = intersect_halfspaces(&hs, 5.0).unwrap().unwrap();
        assert!(touches_bound(&poly, 5.0));
        let boxed = intersect_halfspaces(&unit_box(), 5.0).unwrap().unwrap();
        assert!(!touches_bound(&boxed, 5.0));
    }

    #[test]
    fn hausdorff_identity_and_shift() {
        let a = intersect_halfspaces(&unit_box(), 10.0).unwrap().unwrap();
        assert!(hausdorff_distance(&a, &a).unwrap() < 1e-12);
        let shifted =
            ConvexPolygon::from_ccw(a.vertices().iter().map(|v| [v[0] + 0.5, v[1]]).collect())
                .unwrap();
        assert!((hausdorff_distance(&a, &shifted).unwrap() - 0.5).abs() < 1e-12);
    }

    /// Dense sampling of both boundaries.
    fn brute_hausdorff(a: &ConvexPolygon, b: &ConvexPolygon, per_edge: usize) -> f64 {
        let sample = |p: &ConvexPolygon| -> Vec<Point2> {
            p.edges()
                .flat_map(|(s, e)| {
                    (0..per_edge).map(move |k| {
                        let t = k as f64 / per_edge as f64;
                        [s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])]
                    })
                })
                .collect()
        };
        let (sa, sb) = (sample(a), sample(b));
        let directed = |from: &[Point2], to: &[Point2]| {
            from.iter()
                .map(|p| {
                    to.iter()
                        .map(|q| dist(*p, *q))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        directed(&sa, &sb).max(directed(&sb, &sa))
    }

    #[test]
    fn hausdorff_nested_squares() {
        let small = ConvexPolygon::square(1.0);
        let big = ConvexPolygon::square(2.0);
        let exact = hausdorff_distance(&small, &big).unwrap();
        let brute = brute_hausdorff(&small, &big, 400);
        assert!((exact - 2f64.sqrt()).abs() < 1e-12);
        assert!((exact - brute).abs() < 1e-2);
    }

    #[test]
    fn hausdorff_interior_maximum() {
        // a thin triangle inside a square: worst point on the triangle's long
        // edge is interior to that edge
        let sq = ConvexPolygon::square(1.0);
        let tri = ConvexPolygon::from_ccw(vec![[-0.9, -0.9], [0.9, -0.9], [0.0, 0.9]]).unwrap();
        let exact = hausdorff_distance(&tri, &sq).unwrap();
        let brute = brute_hausdorff(&tri, &sq, 2000);
        assert!((exact - brute).abs() < 2e-3, "{exact} vs {brute}");
    }

    #[test]
    fn hausdorff_rejects_empty() {
        let empty = ConvexPolygon { vertices: vec![] };
        assert!(hausdorff_distance(&empty, &ConvexPolygon::square(1.0)).is_err());
    }

    #[test]
    fn serialization_formats() {
        let poly = intersect_halfspaces(&unit_box(), 10.0).unwrap().unwrap();
        let parsed: Vec<[f64; 2]> = serde_json::from_str(&poly.to_json()).unwrap();
        assert_eq!(parsed, poly.vertices());
        let csv = poly.to_csv();
        assert!(csv.starts_with("vertex_index,y1,y2\n0,"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn polygons_are_ccw_from_positive_x() {
        let poly = intersect_halfspaces(&disk_halfspaces(7, 2.0), 10.0)
            .unwrap()
            .unwrap();
        let v = poly.vertices();
        for i in 0..v.len() {
            let (a, b, c) = (v[i], v[(i + 1) % v.len()], v[(i + 2) % v.len()]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            assert!(cross > -1e-9);
        }
        let first = v[0][1].atan2(v[0][0]).rem_euclid(2.0 * PI);
        assert!(v
            .iter()
            .all(|p| p[1].atan2(p[0]).rem_euclid(2.0 * PI) >= first - 1e-12));
    }

    fn random_halfspaces() -> impl Strategy<Value = Vec<Halfspace2D>> {
        prop::collection::vec((0.0..2.0 * PI, -2.0..0.5f64), 3..25).prop_map(|v| {
            v.into_iter()
                .map(|(phi, off)| Halfspace2D::new([phi.cos(), phi.sin()], off).unwrap())
                .collect()
        })
    }

    fn same_vertex_set(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
        a.len() == b.len()
            && a.vertices()
                .iter()
                .all(|p| b.vertices().iter().any(|q| dist(*p, *q) < 1e-9))
    }

    proptest! {
        #[test]
        fn frames_are_orthogonal(u in prop::collection::vec(-5.0..5.0f64, 2..6)) {
            prop_assume!(u.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            assert_orthogonal(&make_frame(&u).unwrap());
        }

        #[test]
        fn intersection_is_order_invariant(hs in random_halfspaces(), seed in any::<u64>()) {
            let mut shuffled = hs.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let a = intersect_halfspaces(&hs, 10.0).unwrap();
            let b = intersect_halfspaces(&shuffled, 10.0).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!(same_vertex_set(&a, &b)),
                (None, None) => {}
                (a, b) => {
                    // only tiny slivers may disagree
                    let area = a.or(b).unwrap().area();
                    prop_assert!(area < 1e-9);
                }
            }
        }

        #[test]
        fn redundant_halfspace_changes_nothing(hs in random_halfspaces(), phi in 0.0..2.0 * PI) {
            if let Some(poly) = intersect_halfspaces(&hs, 10.0).unwrap() {
                let normal = [phi.cos(), phi.sin()];
                let lowest = poly.vertices().iter()
                    .map(|v| normal[0] * v[0] + normal[1] * v[1])
                    .fold(f64::INFINITY, f64::min);
                let mut more = hs.clone();
                more.push(Halfspace2D::new(normal, lowest - 1e-3).unwrap());
                let again = intersect_halfspaces(&more, 10.0).unwrap().unwrap();
                prop_assert!(same_vertex_set(&poly, &again));
            }
        }

        #[test]
        fn area_is_monotone(hs in random_halfspaces()) {
            let mut poly = Some(ConvexPolygon::square(10.0));
            let mut last = poly.as_ref().unwrap().area();
            for h in &hs {
                poly = poly.and_then(|p| p.clip(h));
                let area = poly.as_ref().map_or(0.0, |p| p.area());
                prop_assert!(area <= last + 1e-9);
                last = area;
            }
        }
    }
}
