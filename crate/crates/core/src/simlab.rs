//! Simulation models, population contours, Monte Carlo rate experiments and
//! CSV ingestion.
//!
//! All three models share `W ~ U[-2, 2]`, conditional centre `(W, W^2)` and a
//! spherical Gaussian error `sigma * eps`, `eps ~ N(0, I_2)`:
//!
//! | model        | scale(w)                       | sigma |
//! |--------------|--------------------------------|-------|
//! | `parab_sine` | `1 + 1.5 sin^2(pi w / 2)`      | 1     |
//! | `parab_homo` | `1`                            | 0.5   |
//! | `parab_quad` | `1 + w^2`                      | 0.5   |
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`.
//! Replication `r` of an experiment uses stream `r` of the generator seeded
//! with [`experiment_seed`]`(seed, n)`; a plain [`generate`] call uses stream 0.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contours::{build_cut, Method, Smoothing};
use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::geometry::{direction_grid, hausdorff_distance, ConvexPolygon, Point2};
use crate::kernels::{normal_quantile, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    ParabSine,
    ParabHomo,
    ParabQuad,
}

impl std::str::FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parab_sine" => Ok(ModelName::ParabSine),
            "parab_homo" => Ok(ModelName::ParabHomo),
            "parab_quad" => Ok(ModelName::ParabQuad),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelName::ParabSine => "parab_sine",
            ModelName::ParabHomo => "parab_homo",
            ModelName::ParabQuad => "parab_quad",
        })
    }
}

impl ModelName {
    /// Default error standard deviation.
    pub fn sigma(self) -> f64 {
        match self {
            ModelName::ParabSine => 1.0,
            ModelName::ParabHomo | ModelName::ParabQuad => 0.5,
        }
    }

    /// Conditional scale function.
    pub fn scale(self, w: f64) -> f64 {
        match self {
            ModelName::ParabSine => 1.0 + 1.5 * (PI / 2.0 * w).sin().powi(2),
            ModelName::ParabHomo => 1.0,
            ModelName::ParabQuad => 1.0 + w * w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: ModelName,
    pub n: usize,
    pub seed: u64,
    pub noise_scale: f64,
}

impl ModelSpec {
    pub fn new(name: ModelName, n: usize, seed: u64) -> Result<Self> {
        Self::with_noise(name, n, seed, name.sigma())
    }

    pub fn with_noise(name: ModelName, n: usize, seed: u64, noise_scale: f64) -> Result<Self> {
        if n < 50 {
            return Err(Error::InvalidInput(format!("models need n >= 50, got {n}")));
        }
        if !(noise_scale > 0.0 && noise_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise scale must be > 0, got {noise_scale}"
            )));
        }
        Ok(ModelSpec {
            name,
            n,
            seed,
            noise_scale,
        })
    }
}

/// A standard normal draw by inversion.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return normal_quantile(u);
        }
    }
}

/// Generator for replication `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed used for sample size `n` in a rate experiment with base `seed`.
pub fn experiment_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn generate(spec: &ModelSpec) -> Dataset {
    generate_stream(spec, 0)
}

pub fn generate_stream(spec: &ModelSpec, stream: u64) -> Dataset {
    let mut rng = stream_rng(spec.seed, stream);
    let n = spec.n;
    let mut w = DMatrix::zeros(n, 1);
    let mut y = DMatrix::zeros(n, 2);
    for i in 0..n {
        let wi: f64 = rng.random_range(-2.0..2.0);
        let s = spec.name.scale(wi) * spec.noise_scale;
        let e1 = standard_normal(&mut rng);
        let e2 = standard_normal(&mut rng);
        w[(i, 0)] = wi;
        y[(i, 0)] = wi + s * e1;
        y[(i, 1)] = wi * wi + s * e2;
    }
    Dataset::new(w, y).expect("generated data are finite and n >= 50")
}

/// Population cut of a model: a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationOracle {
    pub name: ModelName,
    pub noise_scale: f64,
}

impl PopulationOracle {
    pub fn new(spec: &ModelSpec) -> Self {
        PopulationOracle {
            name: spec.name,
            noise_scale: spec.noise_scale,
        }
    }

    pub fn center(&self, w0: f64) -> Point2 {
        [w0, w0 * w0]
    }

    pub fn scale(&self, w0: f64) -> f64 {
        self.name.scale(w0)
    }

    /// `scale(w0) sigma Phi^{-1}(1 - tau)`
    pub fn radius(&self, w0: f64, tau: f64) -> f64 {
        self.scale(w0) * self.noise_scale * normal_quantile(1.0 - tau)
    }

    /// Regular `count`-gon inscribed in the population circle.
    pub fn contour(&self, w0: f64, tau: f64, count: usize) -> Result<ConvexPolygon> {
        if !(tau > 0.0 && tau < 0.5) {
            return Err(Error::InvalidInput(format!(
                "population cut needs tau in (0, 0.5), got {tau}"
            )));
        }
        if count < 3 {
            return Err(Error::InvalidInput("need at least 3 vertices".into()));
        }
        ConvexPolygon::regular(self.center(w0), self.radius(w0, tau), count)
            .ok_or_else(|| Error::InvalidInput("degenerate population contour".into()))
    }
}

pub fn oracle_contour(spec: &ModelSpec, w0: f64, tau: f64, count: usize) -> Result<ConvexPolygon> {
    PopulationOracle::new(spec).contour(w0, tau, count)
}

/// Radius of the disk with the polygon's area.
pub fn equal_area_radius(poly: &ConvexPolygon) -> f64 {
    (poly.area() / PI).sqrt()
}

/// Linear-interpolation sample quantile (`(n - 1) p` positioning).
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> f64 {
    empirical_quantile(values, 0.5).unwrap_or(f64::NAN)
}

/// Bandwidth as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBandwidth {
    Fixed(f64),
    /// `h_ref (n / n_ref)^{-1/5}`
    Scaled {
        h_ref: f64,
        n_ref: f64,
    },
}

impl RateBandwidth {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            RateBandwidth::Fixed(h) => h,
            RateBandwidth::Scaled { h_ref, n_ref } => h_ref * (n as f64 / n_ref).powf(-0.2),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateExperiment {
    pub model: ModelName,
    pub w0: f64,
    pub tau: f64,
    pub method: Method,
    pub kernel: KernelSpec,
    pub bandwidth: RateBandwidth,
    pub directions: usize,
    /// Vertices of the population polygon.
    pub oracle_vertices: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// `(n, median error)` in the order of the requested sizes.
    pub medians: Vec<(usize, f64)>,
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,rep,error\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.n, r.rep, r.error));
        }
        out
    }
}

impl RateExperiment {
    /// Hausdorff error of one replication.
    pub fn replicate(&self, n: usize, rep: usize) -> Result<f64> {
        let spec = ModelSpec::new(self.model, n, experiment_seed(self.seed, n))?;
        let data = generate_stream(&spec, rep as u64);
        let grid = direction_grid(2, self.directions)?;
        let cut = build_cut(
            &data,
            self.tau,
            &[self.w0],
            &grid,
            Some(Smoothing {
                kernel: &self.kernel,
                h: self.bandwidth.at(n),
            }),
            self.method,
        )?;
        let oracle = oracle_contour(&spec, self.w0, self.tau, self.oracle_vertices)?;
        match cut.polygon() {
            Some(p) => hausdorff_distance(&p, &oracle),
            None => Ok(f64::INFINITY),
        }
    }

    pub fn run(&self, ns: &[usize], reps: usize) -> Result<RateTable> {
        if ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("sample sizes must be ascending".into()));
        }
        if reps == 0 {
            return Err(Error::InvalidInput("need at least one replication".into()));
        }
        let mut rows = Vec::new();
        let mut medians = Vec::new();
        for &n in ns {
            let errors = (0..reps)
                .into_par_iter()
                .map(|rep| self.replicate(n, rep))
                .collect::<Result<Vec<f64>>>()?;
            medians.push((n, median(&errors)));
            rows.extend(
                errors
                    .iter()
                    .enumerate()
                    .map(|(rep, &error)| RateRow { n, rep, error }),
            );
        }
        Ok(RateTable { rows, medians })
    }
}

/// `rate_experiment` with the defaults used throughout: 360 directions,
/// 1440-gon population contour.
pub fn rate_experiment(
    model: ModelName,
    w0: f64,
    tau: f64,
    method: Method,
    kernel: KernelSpec,
    bandwidth: RateBandwidth,
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<RateTable> {
    RateExperiment {
        model,
        w0,
        tau,
        method,
        kernel,
        bandwidth,
        directions: 360,
        oracle_vertices: 1440,
        seed,
    }
    .run(ns, reps)
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Rows skipped because a selected cell was empty.
    pub dropped_rows: usize,
    pub warnings: Vec<String>,
}

/// Read one covariate and several response columns from a headed CSV.
///
/// Rows with an empty selected cell (or `NA`) are dropped and counted;
/// any other unparsable cell is an error. Row numbers in errors count data
/// rows from 1.
pub fn ingest_csv(path: &Path, covariate: &str, responses: &[&str]) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, covariate, responses)
}

pub fn ingest_reader(
    reader: impl std::io::Read,
    covariate: &str,
    responses: &[&str],
) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let csv_err = |row: usize, e: csv::Error| Error::Ingestion {
        row,
        column: String::new(),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(|e| csv_err(0, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Ingestion {
                row: 0,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    let wcol = find(covariate)?;
    let ycols = responses
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let mut names = vec![covariate];
    names.extend_from_slice(responses);
    let cols: Vec<usize> = std::iter::once(wcol).chain(ycols.iter().copied()).collect();

    let mut ws = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    let mut warnings = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let mut vals = Vec::with_capacity(cols.len());
        let mut missing = false;
        for (&c, name) in cols.iter().zip(&names) {
            let cell = rec.get(c).unwrap_or("").trim();
            if cell.is_empty() || cell == "NA" {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Ingestion {
                row,
                column: name.to_string(),
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            vals.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        ws.push(vals[0]);
        ys.push(vals[1..].to_vec());
    }
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} row(s) with missing values"));
    }
    let n = ws.len();
    let m = responses.len();
    let w = DMatrix::from_column_slice(n, 1, &ws);
    let y = DMatrix::from_fn(n, m, |i, j| ys[i][j]);
    Ok(Ingested {
        dataset: Dataset::new(w, y)?,
        dropped_rows: dropped,
        warnings,
    })
}
