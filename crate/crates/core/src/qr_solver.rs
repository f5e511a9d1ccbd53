//! Weighted single-output quantile regression by check-loss minimization.
//!
//! Solves
//!
//! ```text
//! min_theta  sum_i w_i rho_tau(y_i - x_i' theta)
//! ```
//!
//! through its linear-programming form
//! `min sum_i w_i (tau e_i+ + (1 - tau) e_i-)` subject to
//! `y_i - x_i' theta = e_i+ - e_i-`, `e+/- >= 0`. The solver walks the
//! vertices of that LP, each vertex being a basic solution interpolating `q`
//! observations. At every vertex the `2q` edge directions obtained by
//! releasing one basic observation above or below the fit are priced; the
//! line search along the chosen edge steps over every breakpoint at which the
//! objective keeps decreasing (Barrodale-Roberts long steps), so a single
//! iteration may collapse many ordinary simplex pivots.
//!
//! Observations with a zero residual that are not in the basis carry an
//! explicit side (`+` or `-`), which plays the role of the LP basic variable
//! sitting at zero. Pricing with those sides gives a valid LP optimality
//! certificate even at primal-degenerate vertices.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold below which weights are treated as zero.
pub const ZERO_WEIGHT_REL: f64 = 1e-12;
/// Relative optimality tolerance on directional derivatives.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Relative feasibility tolerance for basis pivots.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Residuals below this (relative to the response scale) count as zero.
pub const RESIDUAL_ZERO_REL: f64 = 1e-8;

const REFRESH_EVERY: usize = 25;

/// `max{(tau - 1) zeta, tau zeta}`
#[inline]
pub fn check_loss(zeta: f64, tau: f64) -> f64 {
    if zeta < 0.0 {
        (tau - 1.0) * zeta
    } else {
        tau * zeta
    }
}

/// A weighted single-output quantile regression instance.
#[derive(Debug, Clone, PartialEq)]
pub struct QrProblem {
    responses: Vec<f64>,
    /// Row-major `n x q`.
    regressors: Vec<f64>,
    q: usize,
    weights: Vec<f64>,
    tau: f64,
}

impl QrProblem {
    /// `regressors` is row-major with `q` columns; any intercept column must
    /// be included explicitly.
    pub fn new(
        responses: Vec<f64>,
        regressors: Vec<f64>,
        q: usize,
        weights: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        let n = responses.len();
        if q == 0 {
            return Err(Error::InvalidInput("need at least one regressor".into()));
        }
        if regressors.len() != n * q {
            return Err(Error::InvalidInput(format!(
                "regressor matrix has {} entries, expected {n} x {q}",
                regressors.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} weights for {n} observations",
                weights.len()
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        if n < q {
            return Err(Error::InvalidInput(format!(
                "{n} observations for {q} coefficients"
            )));
        }
        if responses
            .iter()
            .chain(&regressors)
            .chain(&weights)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite input".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidInput("negative weight".into()));
        }
        let positive = weights.iter().filter(|&&w| w > 0.0).count();
        if positive < q {
            return Err(Error::InvalidInput(format!(
                "only {positive} observations with positive weight for {q} coefficients"
            )));
        }
        Ok(QrProblem {
            responses,
            regressors,
            q,
            weights,
            tau,
        })
    }

    /// Build from per-observation regressor rows.
    pub fn from_rows(
        responses: Vec<f64>,
        rows: &[Vec<f64>],
        weights: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        let q = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidInput("ragged regressor rows".into()));
        }
        Self::new(responses, rows.concat(), q, weights, tau)
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.regressors[i * self.q..(i + 1) * self.q]
    }

    /// `y_i - x_i' theta` for every observation.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.responses[i] - dot(self.row(i), theta))
            .collect()
    }

    /// `sum_i w_i rho_tau(y_i - x_i' theta)`
    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.residuals(theta)
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * check_loss(*r, self.tau))
            .sum()
    }

    /// Regressors as a dense `n x q` matrix.
    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.q, &self.regressors)
    }

    /// Text dump of the primal LP (CPLEX-like layout).
    pub fn write_lp(&self, out: &mut String) {
        let n = self.n();
        let _ = writeln!(out, "\\ weighted quantile regression, tau = {}", self.tau);
        let _ = writeln!(out, "\\ n = {n}, q = {}", self.q);
        let _ = writeln!(out, "Minimize");
        let mut obj = String::from(" obj:");
        for i in 0..n {
            let w = self.weights[i];
            let _ = write!(
                obj,
                " + {} ep{i} + {} em{i}",
                w * self.tau,
                w * (1.0 - self.tau)
            );
        }
        let _ = writeln!(out, "{obj}");
        let _ = writeln!(out, "Subject To");
        for i in 0..n {
            let mut row = format!(" r{i}:");
            for (j, x) in self.row(i).iter().enumerate() {
                let _ = write!(row, " + {x} t{j}");
            }
            let _ = writeln!(row, " + ep{i} - em{i} = {}", self.responses[i]);
            out.push_str(&row);
        }
        let _ = writeln!(out, "Bounds");
        for j in 0..self.q {
            let _ = writeln!(out, " t{j} free");
        }
        let _ = writeln!(out, "End");
    }
}

/// Equivalent unit-weight problem with rows `w_i x_i` and responses `w_i y_i`.
///
/// Valid because `rho_tau(w z) = w rho_tau(z)` for `w >= 0`.
pub fn reduce_weighted_to_scaled(problem: &QrProblem) -> QrProblem {
    let q = problem.q;
    let mut regressors = problem.regressors.clone();
    let mut responses = problem.responses.clone();
    for (i, &w) in problem.weights.iter().enumerate() {
        responses[i] *= w;
        for x in &mut regressors[i * q..(i + 1) * q] {
            *x *= w;
        }
    }
    // rows with zero weight become all-zero rows; they carry no loss
    let weights = problem
        .weights
        .iter()
        .map(|&w| if w > 0.0 { 1.0 } else { 0.0 })
        .collect();
    QrProblem {
        responses,
        regressors,
        q,
        weights,
        tau: problem.tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Optimal, but the minimizer set is (possibly) not a singleton.
    DegenerateOptimal,
    Failed,
}

#[derive(Debug, Clone)]
pub struct QrSolution {
    pub coefficients: Vec<f64>,
    /// Attained `sum_i w_i rho_tau(y_i - x_i' theta)`.
    pub objective: f64,
    /// Observations with a zero residual.
    pub active_count: usize,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Interpolated observations (original indices).
    pub basis: Vec<usize>,
    pub diagnostic: Option<String>,
}

impl QrSolution {
    pub fn is_optimal(&self) -> bool {
        self.status != SolveStatus::Failed
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Starting basis (original observation indices), e.g. from a fit in a
    /// neighbouring direction. Ignored when unusable.
    pub warm_basis: Option<Vec<usize>>,
    /// Iteration cap; defaults to `50 (n + q)`.
    pub max_iterations: Option<usize>,
}

pub fn solve(problem: &QrProblem) -> QrSolution {
    solve_with(problem, &SolveOptions::default())
}

pub fn solve_with(problem: &QrProblem, options: &SolveOptions) -> QrSolution {
    let max_w = problem.weights.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..problem.n())
        .filter(|&i| problem.weights[i] > ZERO_WEIGHT_REL * max_w)
        .collect();
    let mut lp = Simplex::new(problem, &keep);
    let q = problem.q;

    let failed = |iterations: usize, msg: String| QrSolution {
        coefficients: vec![f64::NAN; q],
        objective: f64::NAN,
        active_count: 0,
        iterations,
        status: SolveStatus::Failed,
        basis: Vec::new(),
        diagnostic: Some(msg),
    };

    if keep.len() < q {
        return failed(
            0,
            format!("{} usable observations for {q} coefficients", keep.len()),
        );
    }

    let warm = options.warm_basis.as_ref().and_then(|b| {
        let pos: Option<Vec<usize>> = b.iter().map(|i| keep.binary_search(i).ok()).collect();
        pos.filter(|p| p.len() == q && lp.factor(p))
    });
    if warm.is_none() {
        match lp.initial_basis() {
            Some(b) if lp.factor(&b) => {}
            _ => {
                return failed(
                    0,
                    format!(
                        "rank-deficient design: fewer than {q} linearly independent weighted rows"
                    ),
                )
            }
        }
    }

    let max_iter = options.max_iterations.unwrap_or(50 * (keep.len() + q));
    match lp.run(max_iter) {
        Ok(dual_degenerate) => {
            let theta = lp.theta.clone();
            let residuals = problem.residuals(&theta);
            let tol_r = RESIDUAL_ZERO_REL * lp.y_scale;
            let active_count = residuals.iter().filter(|r| r.abs() <= tol_r).count();
            let objective = residuals
                .iter()
                .zip(&problem.weights)
                .map(|(r, w)| w * check_loss(*r, problem.tau))
                .sum();
            QrSolution {
                coefficients: theta,
                objective,
                active_count,
                iterations: lp.iterations,
                status: if dual_degenerate {
                    SolveStatus::DegenerateOptimal
                } else {
                    SolveStatus::Optimal
                },
                basis: lp.basis.iter().map(|&b| keep[b]).collect(),
                diagnostic: None,
            }
        }
        Err(msg) => failed(lp.iterations, msg),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Working state over the observations with non-negligible weight.
struct Simplex {
    k: usize,
    q: usize,
    tau: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    y_scale: f64,

    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// `+1` above the fit, `-1` below; meaningful for nonbasic observations.
    side: Vec<i8>,
    /// Inverse of the basis matrix; column `j` is the edge direction that
    /// keeps every basic observation but the `j`th interpolated.
    dinv: Vec<f64>,
    /// `g[i*q + j] = x_i' d_j`
    g: Vec<f64>,
    r: Vec<f64>,
    theta: Vec<f64>,
    iterations: usize,
}

impl Simplex {
    fn new(problem: &QrProblem, keep: &[usize]) -> Self {
        let q = problem.q;
        let k = keep.len();
        let mut x = Vec::with_capacity(k * q);
        let mut y = Vec::with_capacity(k);
        let mut w = Vec::with_capacity(k);
        for &i in keep {
            x.extend_from_slice(problem.row(i));
            y.push(problem.responses[i]);
            w.push(problem.weights[i]);
        }
        let y_scale = y
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        Simplex {
            k,
            q,
            tau: problem.tau,
            x,
            y,
            w,
            y_scale,
            basis: Vec::new(),
            in_basis: vec![false; k],
            side: vec![1; k],
            dinv: vec![0.0; q * q],
            g: vec![0.0; k * q],
            r: vec![0.0; k],
            theta: vec![0.0; q],
            iterations: 0,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.q..(i + 1) * self.q]
    }

    /// Rows near a least-squares fit shifted to the tau-quantile of its
    /// residuals, greedily filtered for linear independence.
    fn initial_basis(&self) -> Option<Vec<usize>> {
        let (k, q) = (self.k, self.q);
        let mut xtx = DMatrix::<f64>::zeros(q, q);
        let mut xty = nalgebra::DVector::<f64>::zeros(q);
        for i in 0..k {
            let row = self.row(i);
            let w = self.w[i];
            for a in 0..q {
                xty[a] += w * row[a] * self.y[i];
                for b in 0..q {
                    xtx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let ridge = 1e-12 * (0..q).map(|a| xtx[(a, a)]).fold(0.0, f64::max).max(1e-300);
        for a in 0..q {
            xtx[(a, a)] += ridge;
        }
        let beta = xtx
            .cholesky()
            .map(|c| c.solve(&xty))
            .unwrap_or_else(|| nalgebra::DVector::zeros(q));
        let res: Vec<f64> = (0..k)
            .map(|i| self.y[i] - dot(self.row(i), beta.as_slice()))
            .collect();
        let shift = weighted_quantile(&res, &self.w, self.tau);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            (res[a] - shift)
                .abs()
                .total_cmp(&(res[b] - shift).abs())
                .then(a.cmp(&b))
        });

        // Gram-Schmidt on candidate rows
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut chosen = Vec::with_capacity(q);
        for &i in &order {
            let row = self.row(i);
            let norm0 = dot(row, row).sqrt();
            if norm0 == 0.0 {
                continue;
            }
            let mut v = row.to_vec();
            for _ in 0..2 {
                for o in &ortho {
                    let c = dot(&v, o);
                    v.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 * norm0 {
                v.iter_mut().for_each(|a| *a /= norm);
                ortho.push(v);
                chosen.push(i);
                if chosen.len() == q {
                    return Some(chosen);
                }
            }
        }
        None
    }

    /// Install a basis and refresh all derived quantities from scratch.
    /// Returns false if the basis matrix is numerically singular.
    fn factor(&mut self, basis: &[usize]) -> bool {
        let q = self.q;
        let mut bm = DMatrix::<f64>::zeros(q, q);
        for (a, &i) in basis.iter().enumerate() {
            for b in 0..q {
                bm[(a, b)] = self.x[i * q + b];
            }
        }
        let scale = bm.amax();
        if scale == 0.0 {
            return false;
        }
        let lu = bm.clone().lu();
        let Some(inv) = lu.try_inverse() else {
            return false;
        };
        // reject ill-conditioned bases
        if inv.amax() * scale > 1.0 / FEASIBILITY_TOL * 1e3 {
            return false;
        }
        self.basis = basis.to_vec();
        self.in_basis.iter_mut().for_each(|b| *b = false);
        for &i in basis {
            self.in_basis[i] = true;
        }
        for a in 0..q {
            for b in 0..q {
                self.dinv[a * q + b] = inv[(a, b)];
            }
        }
        for b in 0..q {
            self.theta[b] = (0..q).map(|a| inv[(b, a)] * self.y[basis[a]]).sum();
        }
        self.refresh_derived(true);
        true
    }

    /// Recompute residuals and edge products from `theta` and `dinv`.
    fn refresh_derived(&mut self, reset_sides: bool) {
        let q = self.q;
        let tol_r = RESIDUAL_ZERO_REL * self.y_scale;
        for i in 0..self.k {
            let row = &self.x[i * q..(i + 1) * q];
            let r = self.y[i] - dot(row, &self.theta);
            for j in 0..q {
                let mut s = 0.0;
                for a in 0..q {
                    s += row[a] * self.dinv[a * q + j];
                }
                self.g[i * q + j] = s;
            }
            if self.in_basis[i] {
                self.r[i] = 0.0;
                continue;
            }
            self.r[i] = r;
            if reset_sides {
                self.side[i] = if r < 0.0 { -1 } else { 1 };
            } else if self.side[i] > 0 && r < -tol_r {
                self.side[i] = -1;
            } else if self.side[i] < 0 && r > tol_r {
                self.side[i] = 1;
            }
        }
    }

    /// Directional derivatives along `+d_j` and `-d_j`, with their
    /// magnitudes for relative tolerances.
    fn price(&self) -> Vec<(f64, f64, f64)> {
        let (q, tau) = (self.q, self.tau);
        let mut s = vec![0.0; q];
        let mut mag = vec![0.0; q];
        for i in 0..self.k {
            if self.in_basis[i] {
                continue;
            }
            let c = if self.side[i] > 0 { -tau } else { 1.0 - tau };
            let wi = self.w[i];
            let gi = &self.g[i * q..(i + 1) * q];
            for j in 0..q {
                s[j] += wi * c * gi[j];
                mag[j] += wi * gi[j].abs();
            }
        }
        (0..q)
            .map(|j| {
                let wb = self.w[self.basis[j]];
                ((1.0 - tau) * wb + s[j], tau * wb - s[j], wb + mag[j])
            })
            .collect()
    }

    /// Iterate to optimality. Returns whether the optimum is dual degenerate.
    fn run(&mut self, max_iter: usize) -> std::result::Result<bool, String> {
        let q = self.q;
        let mut bland = false;
        let mut since_refresh = 0usize;
        let mut candidates: Vec<(f64, f64, usize)> = Vec::with_capacity(self.k);
        loop {
            let prices = self.price();
            // choose entering edge
            let mut pick: Option<(usize, f64, f64)> = None; // (j, sigma, derivative)
            let mut dual_degenerate = false;
            for (j, &(dp, dm, mag)) in prices.iter().enumerate() {
                let tol = OPTIMALITY_TOL * mag;
                for (sigma, d) in [(1.0, dp), (-1.0, dm)] {
                    if d <= tol {
                        dual_degenerate = true;
                    }
                    if d < -tol {
                        let better = match pick {
                            None => true,
                            Some((pj, ps, pd)) => {
                                if bland {
                                    (self.basis[j], sigma < 0.0) < (self.basis[pj], ps < 0.0)
                                } else {
                                    d / mag < pd / prices[pj].2
                                }
                            }
                        };
                        if better {
                            pick = Some((j, sigma, d));
                        }
                    }
                }
            }
            let Some((j, sigma, deriv)) = pick else {
                if since_refresh > 0 {
                    // confirm on freshly recomputed quantities
                    let basis = self.basis.clone();
                    if !self.factor_keep_sides(&basis) {
                        return Err("basis became singular".into());
                    }
                    since_refresh = 0;
                    continue;
                }
                return Ok(dual_degenerate);
            };
            if self.iterations >= max_iter {
                return Err(format!("iteration limit {max_iter} reached"));
            }
            self.iterations += 1;

            // ratio test with long steps
            candidates.clear();
            for i in 0..self.k {
                if self.in_basis[i] {
                    continue;
                }
                let v = sigma * self.g[i * q + j];
                let row_norm = self.row(i).iter().map(|a| a.abs()).sum::<f64>();
                if v.abs() <= 1e-11 * row_norm.max(1e-300) * self.dcol_norm(j) {
                    continue;
                }
                let r = self.r[i];
                if self.side[i] > 0 && v > 0.0 {
                    candidates.push((r.max(0.0) / v, self.w[i] * v, i));
                } else if self.side[i] < 0 && v < 0.0 {
                    candidates.push((r.min(0.0) / v, -self.w[i] * v, i));
                }
            }
            let Some(stop) = walk_breakpoints(&mut candidates, -deriv) else {
                return Err("unbounded edge: objective decreasing without bound".into());
            };
            let (t, _, enter) = candidates[stop];
            for &(_, _, i) in &candidates[..stop] {
                self.side[i] = -self.side[i];
            }
            let leave = self.basis[j];
            self.side[leave] = if sigma > 0.0 { -1 } else { 1 };
            bland = t <= 1e-15 * self.y_scale;

            // pivot: update theta, residuals, dinv, g
            let step = t * sigma;
            for a in 0..q {
                self.theta[a] += step * self.dinv[a * q + j];
            }
            for i in 0..self.k {
                self.r[i] -= step * self.g[i * q + j];
            }
            self.r[enter] = 0.0;
            self.in_basis[leave] = false;
            self.in_basis[enter] = true;
            self.basis[j] = enter;

            since_refresh += 1;
            if since_refresh >= REFRESH_EVERY {
                let basis = self.basis.clone();
                if !self.factor_keep_sides(&basis) {
                    return Err("basis became singular".into());
                }
                since_refresh = 0;
            } else {
                let pivot = self.g[enter * q + j];
                let gk: Vec<f64> = self.g[enter * q..(enter + 1) * q].to_vec();
                for a in 0..q {
                    self.dinv[a * q + j] /= pivot;
                }
                for l in 0..q {
                    if l == j {
                        continue;
                    }
                    let f = gk[l];
                    if f != 0.0 {
                        for a in 0..q {
                            self.dinv[a * q + l] -= f * self.dinv[a * q + j];
                        }
                    }
                }
                for i in 0..self.k {
                    let base = i * q;
                    let gj = self.g[base + j] / pivot;
                    self.g[base + j] = gj;
                    for l in 0..q {
                        if l != j {
                            self.g[base + l] -= gk[l] * gj;
                        }
                    }
                }
            }
        }
    }

    fn dcol_norm(&self, j: usize) -> f64 {
        (0..self.q)
            .map(|a| self.dinv[a * self.q + j].abs())
            .sum::<f64>()
    }

    fn factor_keep_sides(&mut self, basis: &[usize]) -> bool {
        let sides = self.side.clone();
        if !self.factor(basis) {
            return false;
        }
        let tol_r = RESIDUAL_ZERO_REL * self.y_scale;
        for i in 0..self.k {
            if self.in_basis[i] {
                continue;
            }
            // keep tracked sides where the residual is numerically zero
            if self.r[i].abs() <= tol_r {
                self.side[i] = sides[i];
            }
        }
        true
    }
}

/// Sort breakpoints lazily and return the index of the first one at which
/// the accumulated slope increase reaches `need`.
fn walk_breakpoints(c: &mut [(f64, f64, usize)], need: f64) -> Option<usize> {
    let cmp =
        |a: &(f64, f64, usize), b: &(f64, f64, usize)| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2));
    let mut acc = 0.0;
    let mut start = 0;
    let mut chunk = 32usize;
    while start < c.len() {
        let end = (start + chunk).min(c.len());
        if end < c.len() {
            c[start..].select_nth_unstable_by(end - start - 1, cmp);
        }
        c[start..end].sort_unstable_by(cmp);
        for (idx, item) in c[start..end].iter().enumerate() {
            acc += item.1;
            if acc >= need {
                return Some(start + idx);
            }
        }
        start = end;
        chunk *= 2;
    }
    None
}

/// Smallest `v` with weighted fraction of values `<= v` at least `tau`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= tau * total {
            return values[i];
        }
    }
    idx.last().map_or(0.0, |&i| values[i])
}
