//! Bivariate normal integration and predicted response probabilities.
//!
//! The kernel is a port of Genz's BVND routine (Drezner & Wesolowsky 1989
//! with Genz's double-precision modifications), accurate to well below the
//! 1e-12 target. Response probabilities for models with tilted bounds are
//! computed by first inducing decisional separability, which preserves the
//! probabilities exactly, and then integrating over axis-aligned rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::grtwind::GrtWindModel;
use crate::model::{check_ds, PerceptualDistribution, SingleSubjectModel};
use crate::transforms;

/// Univariate standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

// Gauss-Legendre points and weights from Genz's BVND: (weight, abscissa)
// pairs for N = 6, 12, 20.
const GL_6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.2386191860831970),
];
const GL_12: [(f64, f64); 6] = [
    (0.04717533638651177, -0.9815606342467191),
    (0.1069393259953183, -0.9041172563704750),
    (0.1600783285433464, -0.7699026741943050),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];
const GL_20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410906, -0.9122344282513259),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.07652652113349733),
];

/// Genz BVND: P(X > dh, Y > dk) for standard bivariate normal with
/// correlation `r`, |r| < 1.
fn bvnu(dh: f64, dk: f64, r: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;

    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL_6
    } else if r.abs() < 0.75 {
        &GL_12
    } else {
        &GL_20
    };

    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = 0.5 * r.asin();
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / two_pi;
        }
        bvn + normal_cdf(-h) * normal_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * a_s * a_s / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (two_pi).sqrt()
                    * normal_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let xs = (a * (is * x + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / two_pi;
        }
        if r > 0.0 {
            bvn + normal_cdf(-h.max(k))
        } else {
            bvn = -bvn;
            if k > h {
                bvn += normal_cdf(k) - normal_cdf(h);
            }
            bvn
        }
    }
}

/// P(X <= h, Y <= k) for standard bivariate normal with correlation `rho`.
///
/// `h` and `k` may be infinite. Absolute error is below 1e-14 over the
/// whole domain.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) || rho.abs() >= 1.0 {
        return Err(GrtError::Domain(format!(
            "bvn_cdf requires |rho| < 1, got {rho}"
        )));
    }
    if h.is_nan() || k.is_nan() {
        return Err(GrtError::NonFinite {
            context: "bvn_cdf limits".into(),
        });
    }
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if h == f64::INFINITY {
        return Ok(normal_cdf(k));
    }
    if k == f64::INFINITY {
        return Ok(normal_cdf(h));
    }
    Ok(bvnu(-h, -k, rho).clamp(0.0, 1.0))
}

/// One endpoint of an integration interval on the extended real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    fn lt(self, other: ExtReal) -> bool {
        self.to_f64() < other.to_f64()
    }
}

/// An axis-aligned rectangle (in the decisionally separable frame) over
/// which a perceptual distribution is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRegion {
    x_interval: (ExtReal, ExtReal),
    y_interval: (ExtReal, ExtReal),
}

impl ResponseRegion {
    pub fn new(x_interval: (ExtReal, ExtReal), y_interval: (ExtReal, ExtReal)) -> Result<Self> {
        if !x_interval.0.lt(x_interval.1) || !y_interval.0.lt(y_interval.1) {
            return Err(GrtError::Domain(
                "response region intervals must have lower < upper".into(),
            ));
        }
        Ok(ResponseRegion {
            x_interval,
            y_interval,
        })
    }

    pub fn full_plane() -> Self {
        ResponseRegion {
            x_interval: (ExtReal::NegInf, ExtReal::PosInf),
            y_interval: (ExtReal::NegInf, ExtReal::PosInf),
        }
    }

    pub fn x_interval(&self) -> (ExtReal, ExtReal) {
        self.x_interval
    }

    pub fn y_interval(&self) -> (ExtReal, ExtReal) {
        self.y_interval
    }
}

/// Probability mass of `dist` over an axis-aligned rectangle, by
/// standardization and four-term inclusion-exclusion of `bvn_cdf`.
pub fn rectangle_probability(dist: &PerceptualDistribution, region: &ResponseRegion) -> Result<f64> {
    let cov = dist.covariance();
    let (sx, sy) = (cov.sxx().sqrt(), cov.syy().sqrt());
    let rho = cov.rho();
    let std_x = |e: ExtReal| match e {
        ExtReal::Finite(v) => (v - dist.mean().x) / sx,
        other => other.to_f64(),
    };
    let std_y = |e: ExtReal| match e {
        ExtReal::Finite(v) => (v - dist.mean().y) / sy,
        other => other.to_f64(),
    };
    let (xl, xu) = (std_x(region.x_interval.0), std_x(region.x_interval.1));
    let (yl, yu) = (std_y(region.y_interval.0), std_y(region.y_interval.1));
    let p = bvn_cdf(xu, yu, rho)? - bvn_cdf(xl, yu, rho)? - bvn_cdf(xu, yl, rho)?
        + bvn_cdf(xl, yl, rho)?;
    Ok(p.clamp(0.0, 1.0))
}

/// Cut positions and response regions of a decisionally separable model.
fn regions_from_cuts(cuts_x: &[f64], cuts_y: &[f64]) -> Result<Vec<ResponseRegion>> {
    let interval = |cuts: &[f64], level: usize| -> (ExtReal, ExtReal) {
        let lo = if level == 0 {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(cuts[level - 1])
        };
        let hi = if level == cuts.len() {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(cuts[level])
        };
        (lo, hi)
    };
    let (nx, ny) = (cuts_x.len() + 1, cuts_y.len() + 1);
    let mut regions = Vec::with_capacity(nx * ny);
    for a in 0..nx {
        for b in 0..ny {
            regions.push(ResponseRegion::new(
                interval(cuts_x, a),
                interval(cuts_y, b),
            )?);
        }
    }
    Ok(regions)
}

/// Predicted response probabilities, one row per stimulus, one column per
/// response, rows summing to one.
///
/// Models with tilted bounds are first transformed to induce decisional
/// separability; the transform is invertible and preserves the predicted
/// probabilities, so a single rectangle kernel serves every model.
pub fn response_probabilities<M: SingleSubjectModel>(model: &M) -> Result<Vec<Vec<f64>>> {
    let transformed;
    let model = if check_ds(model) == (true, true) {
        model
    } else {
        let (m, _) = transforms::induce_ds(model)?;
        transformed = m;
        &transformed
    };
    let cuts_x: Vec<f64> = model.bounds_x().iter().map(|b| b.intercept).collect();
    let cuts_y: Vec<f64> = model.bounds_y().iter().map(|b| b.intercept).collect();
    let regions = regions_from_cuts(&cuts_x, &cuts_y)?;
    model
        .distributions()
        .iter()
        .map(|dist| {
            regions
                .iter()
                .map(|r| rectangle_probability(dist, r))
                .collect()
        })
        .collect()
}

/// Predicted 4x4 probability matrix for one GRTwIND subject: shared means,
/// scaled covariances, the subject's own bounds.
pub fn grtwind_response_probabilities(model: &GrtWindModel, subject: usize) -> Result<Vec<Vec<f64>>> {
    response_probabilities(&model.subject_model(subject)?)
}
