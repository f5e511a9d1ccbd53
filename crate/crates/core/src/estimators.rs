//! Directional quantile hyperplane fits.
//!
//! A fit in direction `u` regresses `u'Y` on `X` and `gamma_u' Y`. The fitted
//! hyperplane is `u'y - c' gamma_u' y - a' x = 0`, i.e. `b'y = a'x` with
//! `b = u - gamma_u c`.
//!
//! * global: `X = (1, W')'` with caller-supplied weights;
//! * local constant: `X = 1`, kernel weights around `w0`;
//! * local bilinear: regressors `(1, gamma_u'Y)' ⊗ (1, (W - w0)')'`, kernel
//!   weights around `w0`. With the Kronecker layout the coefficient vector
//!   reads `(a, a_dot', c_1, c_dot_1', ..., c_{m-1}, c_dot_{m-1}')`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DirectionFrame;
use crate::kernels::{local_weights, KernelSpec};
use crate::qr_solver::{
    solve_with, QrProblem, QrSolution, SolveOptions, SolveStatus, RESIDUAL_ZERO_REL,
};

/// Rank tolerance, relative to the largest weighted column norm.
pub const RANK_TOL: f64 = 1e-10;
/// Allowance for rounding in the accumulated weighted fractions of the
/// subgradient check; the solver's own optimality tolerance is 1e-9.
pub const SUBGRADIENT_SLACK: f64 = 1e-9;

/// Paired covariates (`n x (p-1)`, possibly zero columns) and responses (`n x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: DMatrix<f64>,
    responses: DMatrix<f64>,
}

impl Dataset {
    pub fn new(covariates: DMatrix<f64>, responses: DMatrix<f64>) -> Result<Self> {
        let n = responses.nrows();
        let m = responses.ncols();
        if covariates.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "{} covariate rows for {n} responses",
                covariates.nrows()
            )));
        }
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "responses need m >= 2, got {m}"
            )));
        }
        let p = covariates.ncols() + 1;
        if n < m + p {
            return Err(Error::InvalidInput(format!(
                "n = {n} observations is below m + p = {}",
                m + p
            )));
        }
        if covariates
            .iter()
            .chain(responses.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite data entry".into()));
        }
        Ok(Dataset {
            covariates,
            responses,
        })
    }

    /// Responses only (`p = 1`).
    pub fn location(responses: DMatrix<f64>) -> Result<Self> {
        let n = responses.nrows();
        Self::new(DMatrix::zeros(n, 0), responses)
    }

    pub fn n(&self) -> usize {
        self.responses.nrows()
    }

    pub fn m(&self) -> usize {
        self.responses.ncols()
    }

    /// Number of regressors including the intercept.
    pub fn p(&self) -> usize {
        self.covariates.ncols() + 1
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn response(&self, i: usize) -> Vec<f64> {
        self.responses.row(i).iter().copied().collect()
    }

    pub fn covariate(&self, i: usize) -> Vec<f64> {
        self.covariates.row(i).iter().copied().collect()
    }

    /// Same covariates, responses mapped by `y -> o y`.
    pub fn with_rotated_responses(&self, o: &DMatrix<f64>) -> Result<Self> {
        if o.nrows() != self.m() || o.ncols() != self.m() {
            return Err(Error::InvalidInput("transform must be m x m".into()));
        }
        Self::new(self.covariates.clone(), &self.responses * o.transpose())
    }

    fn projections(&self, frame: &DirectionFrame) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if frame.dim() != self.m() {
            return Err(Error::InvalidInput(format!(
                "direction of dimension {} for m = {} responses",
                frame.dim(),
                self.m()
            )));
        }
        Ok((&self.responses * frame.u(), &self.responses * frame.gamma()))
    }
}

/// Weighted fractions of negative and nonpositive residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientReport {
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

/// `lo = sum w [r < -tol] / sum w`, `hi = sum w [r <= tol] / sum w` with
/// `tol = 1e-8 scale`; passes when `lo <= tau <= hi`.
pub fn subgradient_check(
    residuals: &[f64],
    weights: &[f64],
    tau: f64,
    scale: f64,
) -> SubgradientReport {
    let tol = RESIDUAL_ZERO_REL * scale;
    let total: f64 = weights.iter().sum();
    let (mut neg, mut nonpos) = (0.0, 0.0);
    for (r, w) in residuals.iter().zip(weights) {
        if *r < -tol {
            neg += w;
        }
        if *r <= tol {
            nonpos += w;
        }
    }
    let (lo, hi) = (neg / total, nonpos / total);
    SubgradientReport {
        lo,
        hi,
        pass: lo <= tau + SUBGRADIENT_SLACK && tau <= hi + SUBGRADIENT_SLACK,
    }
}

/// Warm-start information carried between neighbouring directions.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub warm_basis: Option<Vec<usize>>,
}

/// What to do with regressor columns that are linearly dependent on
/// earlier ones.
#[derive(Clone, Copy, PartialEq)]
enum RankPolicy {
    /// Fix their coefficients at zero.
    Pin,
    /// Refuse with a degenerate-design error.
    Reject,
}

struct Solved {
    theta: Vec<f64>,
    solution: QrSolution,
    report: SubgradientReport,
    /// Sum of w rho / sum of w.
    objective: f64,
}

/// Indices of columns dependent on earlier columns, by ordered Gram-Schmidt
/// on the weighted design `diag(w) X`.
fn dependent_columns(rows: &[f64], q: usize, weights: &[f64]) -> Vec<usize> {
    let n = weights.len();
    let cols: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..n).map(|i| weights[i] * rows[i * q + j]).collect())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = cols.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (j, col) in cols.into_iter().enumerate() {
        let mut v = col;
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv <= RANK_TOL * scale || nv == 0.0 {
            dependent.push(j);
        } else {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    dependent
}

fn solve_directional(
    z: &[f64],
    rows: Vec<f64>,
    q: usize,
    weights: &[f64],
    tau: f64,
    policy: RankPolicy,
    names: &dyn Fn(usize) -> (&'static str, String),
    opts: &FitOptions,
) -> Result<Solved> {
    let n = z.len();
    let dependent = dependent_columns(&rows, q, weights);
    if !dependent.is_empty() && policy == RankPolicy::Reject {
        let block = names(dependent[0]).0.to_string();
        let detail = format!(
            "linearly dependent weighted regressors: {}",
            dependent
                .iter()
                .map(|&j| names(j).1)
                .collect::<Vec<_>>()
                .join(", ")
        );
        return Err(Error::DegenerateDesign { block, detail });
    }
    let keep: Vec<usize> = (0..q).filter(|j| !dependent.contains(j)).collect();
    let qk = keep.len();
    let reduced: Vec<f64> = if qk == q {
        rows.clone()
    } else {
        let mut r = Vec::with_capacity(n * qk);
        for i in 0..n {
            for &j in &keep {
                r.push(rows[i * q + j]);
            }
        }
        r
    };
    let problem = QrProblem::new(z.to_vec(), reduced, qk, weights.to_vec(), tau)?;
    let solution = solve_with(
        &problem,
        &SolveOptions {
            warm_basis: opts.warm_basis.clone(),
            max_iterations: None,
        },
    );
    if solution.status == SolveStatus::Failed {
        return Err(Error::SolverFailed(
            solution
                .diagnostic
                .clone()
                .unwrap_or_else(|| "unknown failure".into()),
        ));
    }
    let mut theta = vec![0.0; q];
    for (k, &j) in keep.iter().enumerate() {
        theta[j] = solution.coefficients[k];
    }
    let residuals = problem.residuals(&solution.coefficients);
    let scale = z
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let report = subgradient_check(&residuals, weights, tau, scale);
    let total: f64 = weights.iter().sum();
    let mut solution = solution;
    if !dependent.is_empty() {
        solution.status = SolveStatus::DegenerateOptimal;
    }
    Ok(Solved {
        theta,
        objective: solution.objective / total,
        solution,
        report,
    })
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} weights for {n} observations",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "tau must lie in (0, 1), got {tau}"
        )))
    }
}

/// Serializable summary of any directional fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub tau: f64,
    pub u: Vec<f64>,
    pub w0: Option<Vec<f64>>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub a_dot: Option<Vec<f64>>,
    /// Row-major `(p-1) x (m-1)`.
    pub c_dot: Option<Vec<Vec<f64>>>,
    pub objective: f64,
    pub subgrad_lo: f64,
    pub subgrad_hi: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct QuantileHyperplane {
    pub tau: f64,
    pub frame: DirectionFrame,
    /// Intercept followed by covariate coefficients.
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    /// Weighted mean check loss.
    pub objective: f64,
    pub subgrad_lo: f64,
    pub subgrad_hi: f64,
    pub status: SolveStatus,
    pub basis: Vec<usize>,
}

impl QuantileHyperplane {
    pub fn to_record(&self) -> FitRecord {
        FitRecord {
            tau: self.tau,
            u: self.frame.u().iter().copied().collect(),
            w0: None,
            a: self.a.clone(),
            c: self.c.clone(),
            a_dot: None,
            c_dot: None,
            objective: self.objective,
            subgrad_lo: self.subgrad_lo,
            subgrad_hi: self.subgrad_hi,
            status: self.status,
        }
    }

    pub fn subgradient_passes(&self) -> bool {
        self.subgrad_lo <= self.tau + SUBGRADIENT_SLACK
            && self.tau <= self.subgrad_hi + SUBGRADIENT_SLACK
    }
}

/// Responses `u'Y` and row-major regressors `(1, W', (gamma'Y)')`.
fn global_design(
    data: &Dataset,
    frame: &DirectionFrame,
) -> Result<(DVector<f64>, Vec<f64>, usize)> {
    let (z, proj) = data.projections(frame)?;
    let (n, p, m) = (data.n(), data.p(), data.m());
    let q = p + m - 1;
    let mut rows = Vec::with_capacity(n * q);
    for i in 0..n {
        rows.push(1.0);
        rows.extend(data.covariates.row(i).iter());
        rows.extend(proj.row(i).iter());
    }
    Ok((z, rows, q))
}

/// The full (unreduced) LP behind [`fit_global`], e.g. for dumping.
pub fn global_problem(
    data: &Dataset,
    tau: f64,
    frame: &DirectionFrame,
    weights: &[f64],
) -> Result<QrProblem> {
    check_weights(weights, data.n())?;
    let (z, rows, q) = global_design(data, frame)?;
    QrProblem::new(z.as_slice().to_vec(), rows, q, weights.to_vec(), tau)
}

/// Weighted quantile hyperplane with regressors `(1, W')'`.
pub fn fit_global(
    data: &Dataset,
    tau: f64,
    frame: &DirectionFrame,
    weights: &[f64],
) -> Result<QuantileHyperplane> {
    fit_global_with(data, tau, frame, weights, &FitOptions::default())
}

pub fn fit_global_with(
    data: &Dataset,
    tau: f64,
    frame: &DirectionFrame,
    weights: &[f64],
    opts: &FitOptions,
) -> Result<QuantileHyperplane> {
    check_tau(tau)?;
    check_weights(weights, data.n())?;
    let (z, rows, q) = global_design(data, frame)?;
    let p = data.p();
    let names = |j: usize| {
        if j < p {
            ("a", format!("a[{j}]"))
        } else {
            ("c", format!("c[{}]", j - p))
        }
    };
    let s = solve_directional(
        z.as_slice(),
        rows,
        q,
        weights,
        tau,
        RankPolicy::Pin,
        &names,
        opts,
    )?;
    let a = s.theta[..p].to_vec();
    let c = s.theta[p..].to_vec();
    Ok(QuantileHyperplane {
        tau,
        frame: frame.clone(),
        b: frame.b_from_c(&c).iter().copied().collect(),
        a,
        c,
        objective: s.objective,
        subgrad_lo: s.report.lo,
        subgrad_hi: s.report.hi,
        status: s.solution.status,
        basis: s.solution.basis,
    })
}

#[derive(Debug, Clone)]
pub struct LocalConstantFit {
    pub w0: Vec<f64>,
    pub tau: f64,
    pub frame: DirectionFrame,
    pub a: f64,
    pub c: Vec<f64>,
    pub objective: f64,
    pub subgrad_lo: f64,
    pub subgrad_hi: f64,
    pub status: SolveStatus,
    pub basis: Vec<usize>,
}

impl LocalConstantFit {
    pub fn to_record(&self) -> FitRecord {
        FitRecord {
            tau: self.tau,
            u: self.frame.u().iter().copied().collect(),
            w0: Some(self.w0.clone()),
            a: vec![self.a],
            c: self.c.clone(),
            a_dot: None,
            c_dot: None,
            objective: self.objective,
            subgrad_lo: self.subgrad_lo,
            subgrad_hi: self.subgrad_hi,
            status: self.status,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalBilinearFit {
    pub w0: Vec<f64>,
    pub tau: f64,
    pub frame: DirectionFrame,
    pub a: f64,
    pub c: Vec<f64>,
    pub a_dot: Vec<f64>,
    /// `(p-1) x (m-1)`
    pub c_dot: DMatrix<f64>,
    pub objective: f64,
    pub subgrad_lo: f64,
    pub subgrad_hi: f64,
    pub status: SolveStatus,
    pub basis: Vec<usize>,
}

impl LocalBilinearFit {
    pub fn to_record(&self) -> FitRecord {
        FitRecord {
            tau: self.tau,
            u: self.frame.u().iter().copied().collect(),
            w0: Some(self.w0.clone()),
            a: vec![self.a],
            c: self.c.clone(),
            a_dot: Some(self.a_dot.clone()),
            c_dot: Some(
                (0..self.c_dot.nrows())
                    .map(|r| self.c_dot.row(r).iter().copied().collect())
                    .collect(),
            ),
            objective: self.objective,
            subgrad_lo: self.subgrad_lo,
            subgrad_hi: self.subgrad_hi,
            status: self.status,
        }
    }

    /// Value of the fitted augmented equation's right-hand side at
    /// `(w, gamma'y)`.
    pub fn evaluate(&self, w: &[f64], y_orth: &[f64]) -> f64 {
        let (aw, cw) = bilinear_correction(self, w);
        aw + cw.iter().zip(y_orth).map(|(c, y)| c * y).sum::<f64>()
    }
}

/// Kernel weights around `w0`, shared by every direction and `tau`.
#[derive(Debug, Clone)]
pub struct LocalProblem<'a> {
    data: &'a Dataset,
    w0: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> LocalProblem<'a> {
    pub fn new(data: &'a Dataset, w0: &[f64], kernel: &KernelSpec, h: f64) -> Result<Self> {
        if w0.len() + 1 != data.p() {
            return Err(Error::InvalidInput(format!(
                "w0 has dimension {}, covariates have {}",
                w0.len(),
                data.p() - 1
            )));
        }
        let weights = local_weights(&data.covariates, w0, kernel, h)?;
        Ok(LocalProblem {
            data,
            w0: w0.to_vec(),
            weights,
        })
    }

    /// Use precomputed weights.
    pub fn with_weights(data: &'a Dataset, w0: &[f64], weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, data.n())?;
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::EmptyNeighborhood { w0: w0.to_vec() });
        }
        Ok(LocalProblem {
            data,
            w0: w0.to_vec(),
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    fn constant_design(&self, frame: &DirectionFrame) -> Result<(DVector<f64>, Vec<f64>, usize)> {
        let (z, proj) = self.data.projections(frame)?;
        let (n, m) = (self.data.n(), self.data.m());
        let mut rows = Vec::with_capacity(n * m);
        for i in 0..n {
            rows.push(1.0);
            rows.extend(proj.row(i).iter());
        }
        Ok((z, rows, m))
    }

    /// Rows `(1, gamma'y)' kron (1, (w - w0)')'`.
    fn bilinear_design(&self, frame: &DirectionFrame) -> Result<(DVector<f64>, Vec<f64>, usize)> {
        let (z, proj) = self.data.projections(frame)?;
        let (n, m, p) = (self.data.n(), self.data.m(), self.data.p());
        let q = m * p;
        let mut rows = Vec::with_capacity(n * q);
        let mut left = vec![0.0; m];
        let mut right = vec![0.0; p];
        for i in 0..n {
            left[0] = 1.0;
            for k in 1..m {
                left[k] = proj[(i, k - 1)];
            }
            right[0] = 1.0;
            for l in 1..p {
                right[l] = self.data.covariates[(i, l - 1)] - self.w0[l - 1];
            }
            for &lv in &left {
                for &rv in &right {
                    rows.push(lv * rv);
                }
            }
        }
        Ok((z, rows, q))
    }

    /// The LP behind [`LocalProblem::constant`].
    pub fn constant_problem(&self, tau: f64, frame: &DirectionFrame) -> Result<QrProblem> {
        let (z, rows, q) = self.constant_design(frame)?;
        QrProblem::new(z.as_slice().to_vec(), rows, q, self.weights.clone(), tau)
    }

    /// The LP behind [`LocalProblem::bilinear`].
    pub fn bilinear_problem(&self, tau: f64, frame: &DirectionFrame) -> Result<QrProblem> {
        let (z, rows, q) = self.bilinear_design(frame)?;
        QrProblem::new(z.as_slice().to_vec(), rows, q, self.weights.clone(), tau)
    }

    fn positive_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn constant(
        &self,
        tau: f64,
        frame: &DirectionFrame,
        opts: &FitOptions,
    ) -> Result<LocalConstantFit> {
        check_tau(tau)?;
        let m = self.data.m();
        if self.positive_count() < m {
            return Err(Error::EmptyNeighborhood {
                w0: self.w0.clone(),
            });
        }
        let (z, rows, _) = self.constant_design(frame)?;
        let names = |j: usize| {
            if j == 0 {
                ("a", "a".to_string())
            } else {
                ("c", format!("c[{}]", j - 1))
            }
        };
        let s = solve_directional(
            z.as_slice(),
            rows,
            m,
            &self.weights,
            tau,
            RankPolicy::Pin,
            &names,
            opts,
        )?;
        Ok(LocalConstantFit {
            w0: self.w0.clone(),
            tau,
            frame: frame.clone(),
            a: s.theta[0],
            c: s.theta[1..].to_vec(),
            objective: s.objective,
            subgrad_lo: s.report.lo,
            subgrad_hi: s.report.hi,
            status: s.solution.status,
            basis: s.solution.basis,
        })
    }

    pub fn bilinear(
        &self,
        tau: f64,
        frame: &DirectionFrame,
        opts: &FitOptions,
    ) -> Result<LocalBilinearFit> {
        check_tau(tau)?;
        let (m, p) = (self.data.m(), self.data.p());
        if self.positive_count() < m * p {
            return Err(Error::EmptyNeighborhood {
                w0: self.w0.clone(),
            });
        }
        let (z, rows, q) = self.bilinear_design(frame)?;
        let names = move |j: usize| {
            let (k, l) = (j / p, j % p);
            match (k, l) {
                (0, 0) => ("a", "a".to_string()),
                (0, l) => ("a_dot", format!("a_dot[{}]", l - 1)),
                (k, 0) => ("c", format!("c[{}]", k - 1)),
                (k, l) => ("c_dot", format!("c_dot[{}][{}]", l - 1, k - 1)),
            }
        };
        let s = solve_directional(
            z.as_slice(),
            rows,
            q,
            &self.weights,
            tau,
            RankPolicy::Reject,
            &names,
            opts,
        )?;
        let t = &s.theta;
        let a = t[0];
        let a_dot = t[1..p].to_vec();
        let c: Vec<f64> = (1..m).map(|k| t[k * p]).collect();
        let c_dot = DMatrix::from_fn(p - 1, m - 1, |l, k| t[(k + 1) * p + l + 1]);
        Ok(LocalBilinearFit {
            w0: self.w0.clone(),
            tau,
            frame: frame.clone(),
            a,
            c,
            a_dot,
            c_dot,
            objective: s.objective,
            subgrad_lo: s.report.lo,
            subgrad_hi: s.report.hi,
            status: s.solution.status,
            basis: s.solution.basis,
        })
    }
}

pub fn fit_local_constant(
    data: &Dataset,
    tau: f64,
    frame: &DirectionFrame,
    w0: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<LocalConstantFit> {
    LocalProblem::new(data, w0, kernel, h)?.constant(tau, frame, &FitOptions::default())
}

pub fn fit_local_bilinear(
    data: &Dataset,
    tau: f64,
    frame: &DirectionFrame,
    w0: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<LocalBilinearFit> {
    LocalProblem::new(data, w0, kernel, h)?.bilinear(tau, frame, &FitOptions::default())
}

/// The `w = w0` hyperplane `(a, c)` of a bilinear fit.
pub fn extract_conditional(fit: &LocalBilinearFit) -> (f64, Vec<f64>) {
    let (a, c) = (fit.a, fit.c.clone());
    // centred regressors: the correction term vanishes at w0
    debug_assert!({
        let (aw, cw) = bilinear_correction(fit, &fit.w0);
        aw == a && cw == c
    });
    (a, c)
}

/// `a_w = a + (w - w0)' a_dot`, `c_w = c + c_dot' (w - w0)`.
pub fn bilinear_correction(fit: &LocalBilinearFit, w: &[f64]) -> (f64, Vec<f64>) {
    let dw: Vec<f64> = w.iter().zip(&fit.w0).map(|(x, y)| x - y).collect();
    let a = fit.a + dw.iter().zip(&fit.a_dot).map(|(d, v)| d * v).sum::<f64>();
    let c = (0..fit.c.len())
        .map(|k| {
            fit.c[k]
                + (0..dw.len())
                    .map(|l| fit.c_dot[(l, k)] * dw[l])
                    .sum::<f64>()
        })
        .collect();
    (a, c)
}

/// Residuals `u'Y_i - c' gamma' Y_i - a' X_i` of a global hyperplane.
pub fn hyperplane_residuals(data: &Dataset, hp: &QuantileHyperplane) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            let y = data.response(i);
            let w = data.covariate(i);
            let by: f64 = hp.b.iter().zip(&y).map(|(b, v)| b * v).sum();
            let ax = hp.a[0] + hp.a[1..].iter().zip(&w).map(|(a, v)| a * v).sum::<f64>();
            by - ax
        })
        .collect()
}
