//! Conditional quantile/depth cuts assembled from directional fits.
//!
//! For each direction `u` of a grid, the fitted conditional hyperplane
//! `(a, c)` at `w0` gives the upper halfplane `{y : (u - gamma_u c)'y >= a}`;
//! the cut is the intersection of all of them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Dataset, FitOptions, LocalProblem};
use crate::geometry::{
    intersect_halfspaces, touches_bound, ConvexPolygon, DirectionFrame, DirectionGrid, Halfspace2D,
    Point2, DEFAULT_BOUND,
};
use crate::kernels::{BandwidthPlan, KernelSpec};
use crate::qr_solver::SolveStatus;

/// Directions fitted sequentially (with warm starts) per parallel task.
/// Fixed so that results do not depend on the number of threads.
pub const DIRECTION_CHUNK: usize = 30;
/// Fraction of directions allowed to fail before a cut is abandoned.
pub const MAX_FAILED_FRACTION: f64 = 0.01;
/// Vertex certificate tolerance, relative to the response scale.
pub const VERTEX_TOL: f64 = 1e-7;
/// Containment tolerance for coverage.
pub const COVERAGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LocalConstant,
    LocalBilinear,
    Global,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" | "local_constant" => Ok(Method::LocalConstant),
            "bilinear" | "local_bilinear" => Ok(Method::LocalBilinear),
            "global" => Ok(Method::Global),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::LocalConstant => "constant",
            Method::LocalBilinear => "bilinear",
            Method::Global => "global",
        })
    }
}

/// Conditional hyperplane `u'y - c' gamma' y = a` obtained in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub u: Vec<f64>,
    pub a: f64,
    pub c: Vec<f64>,
    /// `u - gamma c`
    pub b: Vec<f64>,
    pub objective: f64,
    pub subgrad_lo: f64,
    pub subgrad_hi: f64,
    pub status: SolveStatus,
}

impl DirectionFit {
    pub fn halfspace(&self) -> Result<Halfspace2D> {
        if self.b.len() != 2 {
            return Err(Error::UnsupportedDimension(format!(
                "cuts need m = 2, got m = {}",
                self.b.len()
            )));
        }
        Halfspace2D::new([self.b[0], self.b[1]], self.a)
    }

    pub fn subgradient_passes(&self, tau: f64) -> bool {
        let s = crate::estimators::SUBGRADIENT_SLACK;
        self.subgrad_lo <= tau + s && tau <= self.subgrad_hi + s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutContour {
    pub w0: Vec<f64>,
    pub tau: f64,
    pub method: Method,
    /// `None` when the intersection is empty.
    pub polygon: Option<ConvexPolygonData>,
    pub per_direction: Vec<DirectionFit>,
    pub unbounded_suspect: bool,
    pub failed_directions: usize,
    pub warnings: Vec<String>,
}

/// Counterclockwise vertex list of a polygon, as serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvexPolygonData(pub Vec<Point2>);

impl CutContour {
    /// Assemble from already computed per-direction fits.
    pub fn from_fits(
        w0: Vec<f64>,
        tau: f64,
        method: Method,
        per_direction: Vec<DirectionFit>,
        bound: f64,
    ) -> Result<Self> {
        let hs = per_direction
            .iter()
            .map(DirectionFit::halfspace)
            .collect::<Result<Vec<_>>>()?;
        let polygon = intersect_halfspaces(&hs, bound)?;
        let unbounded_suspect = polygon.as_ref().is_some_and(|p| touches_bound(p, bound));
        let mut warnings = Vec::new();
        if unbounded_suspect {
            warnings.push(format!(
                "contour touches the bounding square of half-width {bound}"
            ));
        }
        Ok(CutContour {
            w0,
            tau,
            method,
            polygon: polygon.map(|p| ConvexPolygonData(p.vertices().to_vec())),
            per_direction,
            unbounded_suspect,
            failed_directions: 0,
            warnings,
        })
    }

    pub fn polygon(&self) -> Option<ConvexPolygon> {
        self.polygon
            .as_ref()
            .and_then(|d| ConvexPolygon::from_ccw(d.0.clone()))
    }

    pub fn set_polygon(&mut self, poly: Option<ConvexPolygon>) {
        self.polygon = poly.map(|p| ConvexPolygonData(p.vertices().to_vec()));
    }

    /// Largest violation `a_k - b_k'y` over vertices and generating halfspaces.
    pub fn worst_vertex_violation(&self) -> f64 {
        let Some(poly) = &self.polygon else {
            return 0.0;
        };
        let mut worst = f64::NEG_INFINITY;
        for f in &self.per_direction {
            for v in &poly.0 {
                worst = worst.max(f.a - (f.b[0] * v[0] + f.b[1] * v[1]));
            }
        }
        worst
    }

    pub fn all_subgradients_pass(&self) -> bool {
        self.per_direction
            .iter()
            .all(|f| f.subgradient_passes(self.tau))
    }

    /// Rows `w0,tau,vertex_index,y1,y2`, without header.
    pub fn csv_rows(&self, out: &mut String) {
        let w0 = self.w0.first().map(|v| v.to_string()).unwrap_or_default();
        if let Some(poly) = &self.polygon {
            for (i, v) in poly.0.iter().enumerate() {
                let _ = writeln!(out, "{w0},{},{i},{},{}", self.tau, v[0], v[1]);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("contour serializes")
    }
}

pub const CSV_HEADER: &str = "w0,tau,vertex_index,y1,y2";

pub fn contours_to_csv<'a>(contours: impl IntoIterator<Item = &'a CutContour>) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for c in contours {
        c.csv_rows(&mut out);
    }
    out
}

/// Cut-building knobs beyond the statistical inputs.
#[derive(Debug, Clone)]
pub struct CutOptions {
    pub bound: f64,
    /// Warm-start solves across neighbouring directions.
    pub warm_start: bool,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions {
            bound: DEFAULT_BOUND,
            warm_start: true,
        }
    }
}

/// Bandwidth and kernel for the local methods.
#[derive(Debug, Clone, Copy)]
pub struct Smoothing<'k> {
    pub kernel: &'k KernelSpec,
    pub h: f64,
}

fn fit_directions(
    data: &Dataset,
    tau: f64,
    w0: &[f64],
    grid: &DirectionGrid,
    method: Method,
    local: Option<&LocalProblem<'_>>,
    global_weights: &[f64],
    warm: bool,
) -> Vec<Result<DirectionFit>> {
    let frames = grid.directions();
    let chunks: Vec<&[DirectionFrame]> = frames.chunks(DIRECTION_CHUNK).collect();
    chunks
        .into_par_iter()
        .map(|chunk| {
            let mut opts = FitOptions::default();
            chunk
                .iter()
                .map(|frame| {
                    let fit = fit_one(data, tau, w0, frame, method, local, global_weights, &opts);
                    if warm {
                        opts.warm_basis = fit.as_ref().ok().map(|(_, b)| b.clone());
                    }
                    fit.map(|(f, _)| f)
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn fit_one(
    data: &Dataset,
    tau: f64,
    w0: &[f64],
    frame: &DirectionFrame,
    method: Method,
    local: Option<&LocalProblem<'_>>,
    global_weights: &[f64],
    opts: &FitOptions,
) -> Result<(DirectionFit, Vec<usize>)> {
    let u: Vec<f64> = frame.u().iter().copied().collect();
    let pack = |a: f64, c: Vec<f64>, obj, lo, hi, status| DirectionFit {
        b: frame.b_from_c(&c).iter().copied().collect(),
        u: u.clone(),
        a,
        c,
        objective: obj,
        subgrad_lo: lo,
        subgrad_hi: hi,
        status,
    };
    match method {
        Method::Global => {
            let hp = crate::estimators::fit_global_with(data, tau, frame, global_weights, opts)?;
            // conditional intercept at w0
            let a = hp.a[0] + hp.a[1..].iter().zip(w0).map(|(x, w)| x * w).sum::<f64>();
            let basis = hp.basis.clone();
            Ok((
                pack(
                    a,
                    hp.c,
                    hp.objective,
                    hp.subgrad_lo,
                    hp.subgrad_hi,
                    hp.status,
                ),
                basis,
            ))
        }
        Method::LocalConstant => {
            let fit = local.expect("local problem").constant(tau, frame, opts)?;
            Ok((
                pack(
                    fit.a,
                    fit.c,
                    fit.objective,
                    fit.subgrad_lo,
                    fit.subgrad_hi,
                    fit.status,
                ),
                fit.basis,
            ))
        }
        Method::LocalBilinear => {
            let fit = local.expect("local problem").bilinear(tau, frame, opts)?;
            let (a, c) = crate::estimators::extract_conditional(&fit);
            Ok((
                pack(
                    a,
                    c,
                    fit.objective,
                    fit.subgrad_lo,
                    fit.subgrad_hi,
                    fit.status,
                ),
                fit.basis,
            ))
        }
    }
}

/// Rank check of the weighted `(1, W - w0)` block, which every bilinear
/// direction shares.
fn check_covariate_block(local: &LocalProblem<'_>) -> Result<()> {
    let data = local.data();
    let d = data.p() - 1;
    let w = local.weights();
    let n = data.n();
    let mean_w: f64 = w.iter().sum();
    let mut scatter = nalgebra::DMatrix::<f64>::zeros(d + 1, d + 1);
    for i in 0..n {
        let mut x = vec![1.0];
        x.extend((0..d).map(|l| data.covariates()[(i, l)] - local.w0()[l]));
        for r in 0..=d {
            for s in 0..=d {
                scatter[(r, s)] += w[i] * x[r] * x[s];
            }
        }
    }
    let sv = scatter.clone().symmetric_eigenvalues();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    // eigenvalues of a weighted scatter are squares of singular values
    if min <= (crate::estimators::RANK_TOL * crate::estimators::RANK_TOL) * max || mean_w == 0.0 {
        return Err(Error::DegenerateDesign {
            block: "a_dot".into(),
            detail: "covariates have no weighted variation around w0".into(),
        });
    }
    Ok(())
}

/// Cut at `w0` for one `tau`. `smoothing` is ignored for the global method,
/// which uses unit weights.
pub fn build_cut(
    data: &Dataset,
    tau: f64,
    w0: &[f64],
    grid: &DirectionGrid,
    smoothing: Option<Smoothing<'_>>,
    method: Method,
) -> Result<CutContour> {
    build_cut_with(
        data,
        tau,
        w0,
        grid,
        smoothing,
        method,
        &CutOptions::default(),
    )
}

pub fn build_cut_with(
    data: &Dataset,
    tau: f64,
    w0: &[f64],
    grid: &DirectionGrid,
    smoothing: Option<Smoothing<'_>>,
    method: Method,
    options: &CutOptions,
) -> Result<CutContour> {
    if data.m() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "cuts need m = 2, got m = {}",
            data.m()
        )));
    }
    if grid.len() < 3 {
        return Err(Error::InvalidInput(
            "direction grid needs at least 3 directions".into(),
        ));
    }
    if w0.len() + 1 != data.p() {
        return Err(Error::InvalidInput(format!(
            "w0 has dimension {}, covariates have {}",
            w0.len(),
            data.p() - 1
        )));
    }
    let local = match method {
        Method::Global => None,
        _ => {
            let s = smoothing.ok_or_else(|| {
                Error::InvalidInput("local methods need a kernel and bandwidth".into())
            })?;
            Some(LocalProblem::new(data, w0, s.kernel, s.h)?)
        }
    };
    if method == Method::LocalBilinear {
        check_covariate_block(local.as_ref().expect("local"))?;
    }
    let unit = if method == Method::Global {
        vec![1.0; data.n()]
    } else {
        Vec::new()
    };
    let results = fit_directions(
        data,
        tau,
        w0,
        grid,
        method,
        local.as_ref(),
        &unit,
        options.warm_start,
    );

    let total = results.len();
    let mut fits = Vec::with_capacity(total);
    let mut failures: Vec<(usize, Error)> = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((k, e)),
        }
    }
    if failures.len() as f64 > MAX_FAILED_FRACTION * total as f64 {
        let (_, first) = failures.swap_remove(0);
        if failures.is_empty() {
            return Err(first);
        }
        return Err(Error::ContourFailure {
            failed: failures.len() + 1,
            total,
            first: first.to_string(),
        });
    }
    let mut contour = CutContour::from_fits(w0.to_vec(), tau, method, fits, options.bound)?;
    contour.failed_directions = failures.len();
    for (k, e) in failures {
        contour.warnings.push(format!("direction {k} skipped: {e}"));
    }
    Ok(contour)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourFamily {
    pub w0: Vec<f64>,
    pub taus: Vec<f64>,
    pub contours: Vec<CutContour>,
    pub nested_repaired: bool,
    /// Whether the raw contours violated nesting before repair.
    pub crossing_detected: bool,
}

impl ContourFamily {
    pub fn polygons(&self) -> Vec<Option<ConvexPolygon>> {
        self.contours.iter().map(CutContour::polygon).collect()
    }
}

/// Whether `inner`'s vertices all lie in `outer` (within `tol`). An empty
/// inner polygon is contained in anything.
pub fn contained_in(
    inner: Option<&ConvexPolygon>,
    outer: Option<&ConvexPolygon>,
    tol: f64,
) -> bool {
    match (inner, outer) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(i), Some(o)) => i.vertices().iter().all(|v| o.contains(*v, tol)),
    }
}

/// Every polygon contained in its predecessor.
pub fn is_nested(polys: &[Option<ConvexPolygon>], tol: f64) -> bool {
    polys
        .windows(2)
        .all(|w| contained_in(w[1].as_ref(), w[0].as_ref(), tol))
}

/// Replace each polygon by its intersection with all lower-`tau` polygons.
pub fn repair_nesting(polys: &[Option<ConvexPolygon>]) -> Vec<Option<ConvexPolygon>> {
    let mut out: Vec<Option<ConvexPolygon>> = Vec::with_capacity(polys.len());
    for p in polys {
        let repaired = match (out.last(), p) {
            (None, p) => p.clone(),
            (Some(None), _) | (_, None) => None,
            (Some(Some(prev)), Some(cur)) => {
                if contained_in(Some(cur), Some(prev), 0.0) {
                    Some(cur.clone())
                } else {
                    cur.intersect(prev).and_then(|p| pull_inside(p, prev))
                }
            }
        };
        out.push(repaired);
    }
    out
}

/// Shrink `poly` toward its centroid by the smallest factor (in ulp-sized
/// steps) that puts every vertex inside `outer` with zero tolerance; the
/// clipped vertices sit on `outer`'s edges only up to rounding.
fn pull_inside(poly: ConvexPolygon, outer: &ConvexPolygon) -> Option<ConvexPolygon> {
    let inside = |p: &ConvexPolygon| p.vertices().iter().all(|v| outer.contains(*v, 0.0));
    if inside(&poly) {
        return Some(poly);
    }
    let c = poly.centroid();
    let mut step = f64::EPSILON;
    while step < 1e-6 {
        let shrunk: Vec<Point2> = poly
            .vertices()
            .iter()
            .map(|v| {
                [
                    c[0] + (v[0] - c[0]) * (1.0 - step),
                    c[1] + (v[1] - c[1]) * (1.0 - step),
                ]
            })
            .collect();
        if let Some(p) = ConvexPolygon::from_ccw(shrunk) {
            if inside(&p) {
                return Some(p);
            }
        }
        step *= 2.0;
    }
    Some(poly)
}

/// Cuts for ascending `taus` at one `w0`, with per-`tau` bandwidths from
/// `plan`.
pub fn build_family(
    data: &Dataset,
    taus: &[f64],
    w0: &[f64],
    grid: &DirectionGrid,
    kernel: Option<&KernelSpec>,
    plan: Option<&BandwidthPlan>,
    method: Method,
    repair: bool,
) -> Result<ContourFamily> {
    build_family_with(
        data,
        taus,
        w0,
        grid,
        kernel,
        plan,
        method,
        repair,
        &CutOptions::default(),
    )
}

pub fn build_family_with(
    data: &Dataset,
    taus: &[f64],
    w0: &[f64],
    grid: &DirectionGrid,
    kernel: Option<&KernelSpec>,
    plan: Option<&BandwidthPlan>,
    method: Method,
    repair: bool,
    options: &CutOptions,
) -> Result<ContourFamily> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("no tau values".into()));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "tau values must be strictly ascending".into(),
        ));
    }
    if taus.iter().any(|&t| !(t > 0.0 && t <= 0.5)) {
        return Err(Error::InvalidInput(
            "tau values must lie in (0, 0.5]".into(),
        ));
    }
    let mut contours = Vec::with_capacity(taus.len());
    for &tau in taus {
        let smoothing = match (method, kernel, plan) {
            (Method::Global, ..) => None,
            (_, Some(k), Some(p)) => Some(Smoothing {
                kernel: k,
                h: p.for_tau(tau)?,
            }),
            _ => {
                return Err(Error::InvalidInput(
                    "local methods need a kernel and bandwidth plan".into(),
                ))
            }
        };
        contours.push(build_cut_with(
            data, tau, w0, grid, smoothing, method, options,
        )?);
    }
    let raw: Vec<Option<ConvexPolygon>> = contours.iter().map(CutContour::polygon).collect();
    let crossing_detected = !is_nested(&raw, VERTEX_TOL * response_scale(data));
    if repair {
        for (c, p) in contours.iter_mut().zip(repair_nesting(&raw)) {
            c.set_polygon(p);
        }
    }
    Ok(ContourFamily {
        w0: w0.to_vec(),
        taus: taus.to_vec(),
        contours,
        nested_repaired: repair,
        crossing_detected,
    })
}

/// Largest absolute response value.
pub fn response_scale(data: &Dataset) -> f64 {
    data.responses()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE)
}

/// Weighted fraction of points inside or on the contour.
pub fn empirical_coverage(contour: &CutContour, points: &[Point2], weights: &[f64]) -> Result<f64> {
    let poly = contour
        .polygon()
        .ok_or_else(|| Error::InvalidInput("coverage of an empty contour".into()))?;
    polygon_coverage(&poly, points, weights)
}

pub fn polygon_coverage(poly: &ConvexPolygon, points: &[Point2], weights: &[f64]) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(Error::InvalidInput(
            "points and weights differ in length".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput(
            "weights must have a positive sum".into(),
        ));
    }
    let hs = poly.halfspaces();
    let inside: f64 = points
        .iter()
        .zip(weights)
        .filter(|(p, _)| hs.iter().all(|h| h.signed_distance(**p) >= -COVERAGE_TOL))
        .map(|(_, w)| w)
        .sum();
    Ok(inside / total)
}

/// Colour for the `k`th of `count` conditioning values, from blue to red.
fn ramp(k: usize, count: usize) -> String {
    let t = if count <= 1 {
        0.0
    } else {
        k as f64 / (count - 1) as f64
    };
    let r = (40.0 + 200.0 * t).round() as u8;
    let b = (220.0 - 190.0 * t).round() as u8;
    let g = (80.0 + 60.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Static SVG with the response scatter and one ring per contour; rings are
/// coloured by their position among the distinct `w0` values.
pub fn svg_overlay(points: &[Point2], contours: &[&CutContour]) -> String {
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    for c in contours {
        if let Some(p) = &c.polygon {
            xs.extend(p.0.iter().map(|v| v[0]));
            ys.extend(p.0.iter().map(|v| v[1]));
        }
    }
    let fold = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(*x), hi.max(*x))
            })
    };
    let (mut x0, mut x1) = fold(&xs);
    let (mut y0, mut y1) = fold(&ys);
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-9);
    x0 -= pad;
    x1 += pad;
    y0 -= pad;
    y1 += pad;
    let size = 600.0;
    let span = (x1 - x0).max(y1 - y0);
    let sx = |x: f64| (x - x0) / span * size;
    let sy = |y: f64| size - (y - y0) / span * size;

    let mut w0s: Vec<f64> = contours
        .iter()
        .map(|c| c.w0.first().copied().unwrap_or(0.0))
        .collect();
    w0s.sort_by(f64::total_cmp);
    w0s.dedup();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<g id="points" fill="#888888" fill-opacity="0.5">"##
    );
    for p in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="1.5"/>"#,
            sx(p[0]),
            sy(p[1])
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="contours" fill="none" stroke-width="1.5">"#);
    for (idx, c) in contours.iter().enumerate() {
        let Some(poly) = &c.polygon else { continue };
        let w0 = c.w0.first().copied().unwrap_or(0.0);
        let k = w0s.iter().position(|v| *v == w0).unwrap_or(0);
        let pts: Vec<String> = poly
            .0
            .iter()
            .map(|v| format!("{:.3},{:.3}", sx(v[0]), sy(v[1])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon id="ring-{idx}" data-w0="{w0}" data-tau="{}" stroke="{}" points="{}"/>"#,
            c.tau,
            ramp(k, w0s.len()),
            pts.join(" ")
        );
    }
    let _ = writeln!(out, "</g>\n</svg>");
    out
}
