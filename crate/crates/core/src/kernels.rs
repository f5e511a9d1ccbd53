//! Kernels, local weights and bandwidth rules.
//!
//! All kernels are spherically symmetric densities on `R^d`:
//!
//! * gaussian: `(2 pi)^{-d/2} exp(-|w|^2 / 2)`, unbounded support;
//! * epanechnikov: `c_d (1 - |w|^2)` on the unit ball, `c_d = (d + 2) / (2 V_d)`;
//! * uniform: `1 / V_d` on the unit ball,
//!
//! where `V_d` is the volume of the unit ball.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "uniform" => Ok(KernelFamily::Uniform),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Uniform => "uniform",
        })
    }
}

/// A kernel family in a fixed covariate dimension, with its moment constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dimension: usize,
    /// `int K^2`
    pub c0: f64,
    /// Diagonal entry of `int w w' K(w) dw`, which is a multiple of the identity.
    pub mu2: f64,
    /// `f64::INFINITY` for the gaussian.
    pub support_radius: f64,
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = 2 pi / d * V_{d-2}
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput(
                "kernel dimension must be at least 1".into(),
            ));
        }
        let d = dimension as f64;
        let vd = unit_ball_volume(dimension);
        let (c0, mu2, support_radius) = match family {
            KernelFamily::Gaussian => ((4.0 * PI).powf(-d / 2.0), 1.0, f64::INFINITY),
            KernelFamily::Uniform => (1.0 / vd, 1.0 / (d + 2.0), 1.0),
            KernelFamily::Epanechnikov => {
                let cd = (d + 2.0) / (2.0 * vd);
                // int (1 - r^2)^2 over the ball = V_d * 8 / ((d + 2)(d + 4))
                (
                    cd * cd * vd * 8.0 / ((d + 2.0) * (d + 4.0)),
                    1.0 / (d + 4.0),
                    1.0,
                )
            }
        };
        Ok(KernelSpec {
            family,
            dimension,
            c0,
            mu2,
            support_radius,
        })
    }

    /// `int w w' K(w) dw`
    pub fn mu2_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dimension, self.dimension) * self.mu2
    }

    /// Kernel value at a point with squared norm `r2`.
    pub fn eval_sq(&self, r2: f64) -> f64 {
        let d = self.dimension as f64;
        match self.family {
            KernelFamily::Gaussian => (2.0 * PI).powf(-d / 2.0) * (-0.5 * r2).exp(),
            KernelFamily::Uniform => {
                if r2 <= 1.0 {
                    1.0 / unit_ball_volume(self.dimension)
                } else {
                    0.0
                }
            }
            KernelFamily::Epanechnikov => {
                if r2 <= 1.0 {
                    (d + 2.0) / (2.0 * unit_ball_volume(self.dimension)) * (1.0 - r2)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        self.eval_sq(w.iter().map(|v| v * v).sum())
    }
}

/// `omega_i = h^{-d} K((W_i - w0) / h)`, unnormalized.
///
/// `covariates` is `n x d`.
pub fn local_weights(
    covariates: &DMatrix<f64>,
    w0: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBandwidth(h));
    }
    let d = covariates.ncols();
    if d != w0.len() || d != kernel.dimension {
        return Err(Error::InvalidInput(format!(
            "covariate dimension {d}, w0 dimension {}, kernel dimension {}",
            w0.len(),
            kernel.dimension
        )));
    }
    let scale = h.powi(-(d as i32));
    let weights: Vec<f64> = (0..covariates.nrows())
        .map(|i| {
            let r2: f64 = (0..d)
                .map(|j| ((covariates[(i, j)] - w0[j]) / h).powi(2))
                .sum();
            scale * kernel.eval_sq(r2)
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::EmptyNeighborhood { w0: w0.to_vec() });
    }
    Ok(weights)
}

/// Rescale to sum to the number of observations.
pub fn normalize_weights(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return weights.to_vec();
    }
    let n = weights.len() as f64;
    weights.iter().map(|w| w * n / total).collect()
}

/// Sample standard deviation with denominator `n - 1`.
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `3 sd(W) n^{-1/5}`
pub fn rule_of_thumb_bandwidth(covariate: &[f64]) -> Result<f64> {
    let n = covariate.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "need at least two covariate values".into(),
        ));
    }
    if covariate.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariate".into()));
    }
    let sd = sample_sd(covariate);
    if sd == 0.0 {
        return Err(Error::InvalidInput("constant covariate".into()));
    }
    Ok(3.0 * sd * (n as f64).powf(-0.2))
}

/// `(tau (1 - tau))^{1/5} phi(Phi^{-1}(tau))^{-2/5}`
pub fn tau_adjustment_factor(tau: f64) -> f64 {
    let dens = normal_pdf(normal_quantile(tau));
    (tau * (1.0 - tau)).powf(0.2) * dens.powf(-0.4)
}

pub fn tau_adjusted_bandwidth(h_fz: f64, tau: f64) -> Result<f64> {
    if !(h_fz > 0.0 && h_fz.is_finite()) {
        return Err(Error::InvalidBandwidth(h_fz));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    // evaluate on the lower half so that tau and 1 - tau share one code path
    Ok(tau_adjustment_factor(tau.min(1.0 - tau)) * h_fz)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse standard normal CDF (Wichura, AS 241, PPND16; relative accuracy
/// about 1e-16).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    RuleOfThumb,
    Manual,
    FanZhangSupplied,
}

/// A reference bandwidth and how it maps to each `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPlan {
    pub base_h: f64,
    pub rule: BandwidthRule,
    /// Covariate standard deviation, recorded for the rule of thumb.
    pub sigma_w: Option<f64>,
    /// Scale `base_h` by the tau adjustment factor.
    pub tau_adjust: bool,
}

impl BandwidthPlan {
    pub fn manual(h: f64) -> Result<Self> {
        Self::checked(h, BandwidthRule::Manual, None)
    }

    /// `h_fz` is taken as the reference bandwidth; tau adjustment is on.
    pub fn fan_zhang(h_fz: f64) -> Result<Self> {
        let mut plan = Self::checked(h_fz, BandwidthRule::FanZhangSupplied, None)?;
        plan.tau_adjust = true;
        Ok(plan)
    }

    /// Only defined for a single covariate.
    pub fn rule_of_thumb(covariates: &DMatrix<f64>) -> Result<Self> {
        if covariates.ncols() != 1 {
            return Err(Error::InvalidInput(format!(
                "rule-of-thumb bandwidth needs one covariate, got {}",
                covariates.ncols()
            )));
        }
        let w: Vec<f64> = covariates.column(0).iter().copied().collect();
        let h = rule_of_thumb_bandwidth(&w)?;
        Self::checked(h, BandwidthRule::RuleOfThumb, Some(sample_sd(&w)))
    }

    fn checked(h: f64, rule: BandwidthRule, sigma_w: Option<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidBandwidth(h));
        }
        Ok(BandwidthPlan {
            base_h: h,
            rule,
            sigma_w,
            tau_adjust: false,
        })
    }

    pub fn with_tau_adjust(mut self, on: bool) -> Self {
        self.tau_adjust = on;
        self
    }

    pub fn for_tau(&self, tau: f64) -> Result<f64> {
        if self.tau_adjust {
            tau_adjusted_bandwidth(self.base_h, tau)
        } else {
            Ok(self.base_h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn all_specs() -> Vec<KernelSpec> {
        let mut v = Vec::new();
        for fam in [
            KernelFamily::Gaussian,
            KernelFamily::Epanechnikov,
            KernelFamily::Uniform,
        ] {
            for d in [1, 2] {
                v.push(KernelSpec::new(fam, d).unwrap());
            }
        }
        v
    }

    /// Midpoint rule over a box, integrand given as a function of `w`.
    fn box_quadrature(d: usize, half: f64, steps: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        let dx = 2.0 * half / steps as f64;
        let mut total = 0.0;
        match d {
            1 => {
                for i in 0..steps {
                    total += f(&[-half + (i as f64 + 0.5) * dx]);
                }
                total * dx
            }
            2 => {
                for i in 0..steps {
                    for j in 0..steps {
                        total += f(&[-half + (i as f64 + 0.5) * dx, -half + (j as f64 + 0.5) * dx]);
                    }
                }
                total * dx * dx
            }
            _ => unreachable!(),
        }
    }

    /// Radial integral `int_0^R g(r) S_{d-1} r^{d-1} dr` by Simpson's rule.
    fn radial_quadrature(d: usize, radius: f64, g: impl Fn(f64) -> f64) -> f64 {
        let surface = match d {
            1 => 2.0,
            2 => 2.0 * PI,
            _ => unreachable!(),
        };
        let steps = 20_000;
        let hstep = radius / steps as f64;
        let mut s = 0.0;
        for i in 0..=steps {
            let r = i as f64 * hstep;
            let coef = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += coef * g(r) * r.powi(d as i32 - 1);
        }
        surface * s * hstep / 3.0
    }

    #[test]
    fn kernels_integrate_to_one_with_moments() {
        for k in all_specs() {
            let radius = if k.support_radius.is_finite() {
                1.0
            } else {
                12.0
            };
            let mass = radial_quadrature(k.dimension, radius, |r| k.eval_sq(r * r));
            assert!((mass - 1.0).abs() < 1e-6, "{k:?} mass {mass}");
            let c0 = radial_quadrature(k.dimension, radius, |r| k.eval_sq(r * r).powi(2));
            assert!((c0 - k.c0).abs() < 1e-6, "{k:?} C0 {c0}");
            // E[w_1^2] = E[|w|^2] / d
            let m2 = radial_quadrature(k.dimension, radius, |r| r * r * k.eval_sq(r * r))
                / k.dimension as f64;
            assert!((m2 - k.mu2).abs() < 1e-6, "{k:?} mu2 {m2}");
        }
    }

    #[test]
    fn kernels_integrate_to_one_on_a_box() {
        for k in all_specs() {
            let half = if k.support_radius.is_finite() {
                1.0
            } else {
                9.0
            };
            let steps = if k.dimension == 1 { 200_000 } else { 1500 };
            let mass = box_quadrature(k.dimension, half, steps, |w| k.eval(w));
            let tol = if k.dimension == 1 || k.family == KernelFamily::Gaussian {
                1e-6
            } else {
                2e-3
            };
            assert!((mass - 1.0).abs() < tol, "{k:?} mass {mass}");
            // first moment vanishes
            let m1 = box_quadrature(k.dimension, half, steps.min(2000), |w| w[0] * k.eval(w));
            assert!(m1.abs() < 1e-9);
        }
    }

    #[test]
    fn epanechnikov_constants_in_one_dimension() {
        let k = KernelSpec::new(KernelFamily::Epanechnikov, 1).unwrap();
        assert!((k.c0 - 0.6).abs() < 1e-15);
        assert!((k.mu2 - 0.2).abs() < 1e-15);
        assert!((k.eval(&[0.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn weight_examples() {
        let u = KernelSpec::new(KernelFamily::Uniform, 1).unwrap();
        let w = DMatrix::from_column_slice(3, 1, &[-2.0, 0.0, 0.5]);
        assert_eq!(
            local_weights(&w, &[0.0], &u, 1.0).unwrap(),
            vec![0.0, 0.5, 0.5]
        );

        let g = KernelSpec::new(KernelFamily::Gaussian, 1).unwrap();
        let h = 0.37;
        let at = DMatrix::from_column_slice(1, 1, &[1.3]);
        let v = local_weights(&at, &[1.3], &g, h).unwrap()[0];
        assert!((v - 1.0 / (h * (2.0 * PI).sqrt())).abs() < 1e-14);

        let e = KernelSpec::new(KernelFamily::Epanechnikov, 1).unwrap();
        let one = DMatrix::from_column_slice(1, 1, &[1.0]);
        let v = local_weights(&one, &[0.0], &e, 2.0).unwrap()[0];
        assert!((v - 0.28125).abs() < 1e-15);
    }

    #[test]
    fn weight_errors() {
        let u = KernelSpec::new(KernelFamily::Uniform, 1).unwrap();
        let w = DMatrix::from_column_slice(2, 1, &[5.0, 6.0]);
        assert!(matches!(
            local_weights(&w, &[0.0], &u, 0.0),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(matches!(
            local_weights(&w, &[0.0], &u, -1.0),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(matches!(
            local_weights(&w, &[0.0], &u, 1.0),
            Err(Error::EmptyNeighborhood { .. })
        ));
    }

    proptest! {
        #[test]
        fn compact_support_locality(x in -3.0..3.0f64, h in 0.1..2.0f64) {
            for fam in [KernelFamily::Uniform, KernelFamily::Epanechnikov] {
                let k = KernelSpec::new(fam, 1).unwrap();
                let w = DMatrix::from_column_slice(2, 1, &[x, 0.0]);
                let om = local_weights(&w, &[0.0], &k, h).unwrap();
                let outside = x.abs() > h * k.support_radius;
                if fam == KernelFamily::Uniform {
                    prop_assert_eq!(om[0] == 0.0, outside);
                } else if (x.abs() - h).abs() > 1e-12 {
                    prop_assert_eq!(om[0] == 0.0, outside);
                }
                prop_assert!(om.iter().all(|v| v.is_finite() && *v >= 0.0));
            }
        }

        #[test]
        fn normalize_sums_to_n(ws in proptest::collection::vec(0.01..5.0f64, 1..50)) {
            let nw = normalize_weights(&ws);
            prop_assert!((nw.iter().sum::<f64>() - ws.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn normal_quantile_matches_statrs(p in 1e-12..(1.0 - 1e-12)) {
            let oracle = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p);
            let ours = normal_quantile(p);
            prop_assert!((ours - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "{p}: {ours} vs {oracle}");
        }

        #[test]
        fn normal_quantile_inverts_cdf(x in -8.0..5.0f64) {
            let p = Normal::new(0.0, 1.0).unwrap().cdf(x);
            prop_assume!(p > 1e-300 && p < 1.0 - 1e-15);
            prop_assert!((normal_quantile(p) - x).abs() < 1e-7);
        }

        #[test]
        fn tau_symmetry(tau in 0.001..0.999f64, h in 0.01..10.0f64) {
            let a = tau_adjusted_bandwidth(h, tau).unwrap();
            let b = tau_adjusted_bandwidth(h, 1.0 - tau).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.8) - 0.841_621_233_572_914_3).abs() < 1e-12);
        assert!((normal_quantile(0.6) - 0.253_347_103_135_799_7).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(1e-20) + 9.262_340_089_798_408).abs() < 1e-9);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn rule_of_thumb_examples() {
        let h = rule_of_thumb_bandwidth(&[0.0, 1.0]).unwrap();
        let expect = 3.0 * 0.5f64.sqrt() * 2f64.powf(-0.2);
        assert!((h - expect).abs() < 1e-14);
        assert!((h - 1.8465).abs() < 1e-3);
        let w = [0.3, -1.2, 2.5, 0.7, 1.1];
        let scaled: Vec<f64> = w.iter().map(|v| v * 3.5).collect();
        let r = rule_of_thumb_bandwidth(&scaled).unwrap() / rule_of_thumb_bandwidth(&w).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
        assert!(rule_of_thumb_bandwidth(&[2.0, 2.0, 2.0]).is_err());
        assert!(rule_of_thumb_bandwidth(&[2.0]).is_err());
    }

    #[test]
    fn tau_adjustment_at_median() {
        let f = tau_adjustment_factor(0.5);
        assert!((f - (PI / 2.0).powf(0.2)).abs() < 1e-12);
        let h = 0.8;
        let h5 = tau_adjusted_bandwidth(h, 0.5).unwrap().powi(5);
        assert!((h5 - PI / 2.0 * h.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn tau_adjustment_ratio_identity() {
        let (t1, t2) = (0.2, 0.4);
        let lhs =
            tau_adjusted_bandwidth(1.0, t1).unwrap() / tau_adjusted_bandwidth(1.0, t2).unwrap();
        let n = Normal::new(0.0, 1.0).unwrap();
        let phi = |t: f64| normal_pdf(n.inverse_cdf(t));
        let rhs = (t1 * (1.0 - t1) / (t2 * (1.0 - t2))).powf(0.2) * (phi(t2) / phi(t1)).powf(0.4);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_plan_modes() {
        let p = BandwidthPlan::manual(0.37).unwrap();
        assert_eq!(p.for_tau(0.2).unwrap(), 0.37);
        let fz = BandwidthPlan::fan_zhang(0.5).unwrap();
        assert!((fz.for_tau(0.5).unwrap() - 0.5 * (PI / 2.0).powf(0.2)).abs() < 1e-12);
        let w = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let t = BandwidthPlan::rule_of_thumb(&w).unwrap();
        assert_eq!(t.rule, BandwidthRule::RuleOfThumb);
        assert!((t.base_h - 1.8465).abs() < 1e-3);
        assert!(BandwidthPlan::manual(-1.0).is_err());
        assert!(BandwidthPlan::rule_of_thumb(&DMatrix::zeros(3, 2)).is_err());
    }
}
