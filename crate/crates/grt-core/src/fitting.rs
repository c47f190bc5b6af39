//! Maximum-likelihood fitting, seeded simulation, and the likelihood twin
//! check.
//!
//! Fitting is multinomial ML over the confusion matrix (or one matrix per
//! subject for GRTwIND), optimized with multi-start Nelder-Mead in an
//! unconstrained reparameterization: log links for variances and kappa, a
//! logistic link for lambda, a bounded rational link for correlations,
//! identity for means, intercepts, and slopes. Any parameter vector whose
//! decoded model fails construction scores +infinity, so the optimizer never
//! leaves the valid region permanently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{GrtError, Result};
use crate::geometry::Vec2;
use crate::grtwind::{subject_specific_induce_ds, GrtWindModel, SubjectParams, LAMBDA_MARGIN};
use crate::identifiability::{audit, AuditTarget, DofReport};
use crate::model::{
    grid_labels, ConfusionMatrix, ConstraintScheme, Covariance, DistGrid, LinearBound,
    LocationFix, MultiBoundKind, MultiBoundModel, OrthogonalityFix, PerceptualDistribution,
    ScaleFix, TwoByTwoModel,
};
use crate::probability::{grtwind_response_probabilities, normal_cdf, response_probabilities};
use crate::transforms::induce_ds;
use crate::GrtModel;

/// Floor applied to predicted cell probabilities inside the log-likelihood,
/// so structural zeros cannot produce -infinity.
pub const PROB_FLOOR: f64 = 1e-300;

/// Which model class is being fitted. Grid sizes are given as bound counts;
/// response levels per dimension are one more than the bound count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitClass {
    TwoByTwo,
    MultiBound {
        kind: MultiBoundKind,
        n_bounds_x: usize,
        n_bounds_y: usize,
    },
    GrtWind {
        subjects: usize,
    },
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Number of optimizer starts; the first uses the data-driven
    /// initialization, the rest add seeded Gaussian jitter.
    pub restarts: usize,
    pub max_iterations: usize,
    /// Simplex-diameter convergence tolerance in unconstrained coordinates.
    pub tolerance: f64,
    /// Standard deviation of restart jitter in unconstrained coordinates.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 20,
            max_iterations: 4000,
            tolerance: 1e-8,
            jitter: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: GrtModel,
    pub log_likelihood: f64,
    pub n_free_parameters: usize,
    pub n_trials: u64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    /// Central-difference gradient norm of the negative log-likelihood at
    /// the solution, in unconstrained coordinates.
    pub gradient_norm_at_solution: f64,
    pub dof_report: DofReport,
}

/// Predicted response probabilities for every table the model implies: one
/// table for the single-subject classes, one per subject for GRTwIND.
pub fn predicted_probabilities(model: &GrtModel) -> Result<Vec<Vec<Vec<f64>>>> {
    match model {
        GrtModel::TwoByTwo(m) => Ok(vec![response_probabilities(m)?]),
        GrtModel::MultiBound(m) => Ok(vec![response_probabilities(m)?]),
        GrtModel::GrtWind(m) => (0..m.n_subjects())
            .map(|k| grtwind_response_probabilities(m, k))
            .collect(),
    }
}

/// Multinomial log-likelihood of the data under the model, up to the
/// count-only multinomial constant. GRTwIND expects one matrix per subject
/// in subject order; the other classes expect exactly one matrix.
pub fn log_likelihood(model: &GrtModel, data: &[ConfusionMatrix]) -> Result<f64> {
    let tables = predicted_probabilities(model)?;
    if data.len() != tables.len() {
        return Err(GrtError::ShapeMismatch {
            what: "confusion matrices".into(),
            expected: format!("{}", tables.len()),
            got: format!("{}", data.len()),
        });
    }
    let mut ll = 0.0;
    for (cm, probs) in data.iter().zip(&tables) {
        ll += table_log_likelihood(cm, probs)?;
    }
    Ok(ll)
}

fn table_log_likelihood(cm: &ConfusionMatrix, probs: &[Vec<f64>]) -> Result<f64> {
    if cm.n_stimuli() != probs.len() || cm.n_responses() != probs[0].len() {
        return Err(GrtError::ShapeMismatch {
            what: "confusion matrix".into(),
            expected: format!("{}x{}", probs.len(), probs[0].len()),
            got: format!("{}x{}", cm.n_stimuli(), cm.n_responses()),
        });
    }
    let mut ll = 0.0;
    for (row, prow) in cm.counts().iter().zip(probs) {
        for (&n, &p) in row.iter().zip(prow) {
            if n > 0 {
                ll += (n as f64) * p.max(PROB_FLOOR).ln();
            }
        }
    }
    Ok(ll)
}

/// Simulate identification data: `trials` presentations of every stimulus,
/// multinomial over the model's predicted response probabilities. Returns
/// one confusion matrix per predicted table (one, or one per subject).
/// Deterministic in `seed`; subject k uses stream k of the same seed.
pub fn simulate(model: &GrtModel, trials: u64, seed: u64) -> Result<Vec<ConfusionMatrix>> {
    if trials == 0 {
        return Err(GrtError::Domain("simulation needs at least one trial".into()));
    }
    let tables = predicted_probabilities(model)?;
    let (stim_labels, resp_labels) = labels_for(model);
    tables
        .iter()
        .enumerate()
        .map(|(k, probs)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let counts = probs
                .iter()
                .map(|prow| sample_multinomial(&mut rng, prow, trials))
                .collect();
            ConfusionMatrix::new(counts, stim_labels.clone(), resp_labels.clone())
        })
        .collect()
}

fn sample_multinomial(rng: &mut ChaCha8Rng, probs: &[f64], trials: u64) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..trials {
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = j;
                break;
            }
        }
        counts[chosen] += 1;
    }
    counts
}

fn labels_for(model: &GrtModel) -> (Vec<String>, Vec<String>) {
    match model {
        GrtModel::TwoByTwo(_) | GrtModel::GrtWind(_) => (
            grid_labels('A', 'B', 2, 2),
            grid_labels('a', 'b', 2, 2),
        ),
        GrtModel::MultiBound(m) => {
            let g = m.distributions();
            let (rx, ry) = m.response_levels();
            (
                grid_labels('A', 'B', g.nx(), g.ny()),
                grid_labels('a', 'b', rx, ry),
            )
        }
    }
}

/// Inverse of the standard normal CDF. Rational approximation refined with
/// one Newton step; absolute error well below 1e-12 away from the extremes.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0, 1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Newton step against the exact CDF.
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf > 0.0 {
        x - (normal_cdf(x) - p) / pdf
    } else {
        x
    }
}

// ---------------------------------------------------------------------------
// Parameterization: one structure-building function per class, written once
// and driven either by a recorder (collects links and initial values) or a
// reader (consumes an unconstrained parameter vector). The two passes follow
// the same code path, so encode and decode cannot drift apart.

#[derive(Clone, Copy, Debug)]
enum Link {
    /// Unbounded natural parameter.
    Identity,
    /// Positive natural parameter, v = exp(u).
    Log,
    /// Natural parameter in the open unit interval (with margin).
    LogisticUnit,
    /// Natural parameter in (-1, 1): v = u / (1 + |u|).
    Correlation,
}

impl Link {
    fn to_unconstrained(self, v: f64) -> f64 {
        match self {
            Link::Identity => v,
            Link::Log => v.ln(),
            Link::LogisticUnit => {
                let m = LAMBDA_MARGIN;
                let t = ((v - m) / (1.0 - 2.0 * m)).clamp(1e-12, 1.0 - 1e-12);
                (t / (1.0 - t)).ln()
            }
            Link::Correlation => {
                let v = v.clamp(-(1.0 - 1e-12), 1.0 - 1e-12);
                v / (1.0 - v.abs())
            }
        }
    }

    fn to_natural(self, u: f64) -> f64 {
        match self {
            Link::Identity => u,
            Link::Log => u.clamp(-30.0, 30.0).exp(),
            Link::LogisticUnit => {
                let m = LAMBDA_MARGIN;
                let s = 1.0 / (1.0 + (-u.clamp(-40.0, 40.0)).exp());
                m + (1.0 - 2.0 * m) * s
            }
            Link::Correlation => u / (1.0 + u.abs()),
        }
    }
}

trait ParamIo {
    /// Declare one free parameter with its natural-scale initial value and
    /// return its natural-scale current value.
    fn param(&mut self, link: Link, init: f64) -> f64;
}

struct Recorder {
    links: Vec<Link>,
    init: Vec<f64>,
}

impl ParamIo for Recorder {
    fn param(&mut self, link: Link, init: f64) -> f64 {
        self.links.push(link);
        self.init.push(init);
        init
    }
}

struct Reader<'a> {
    values: &'a [f64],
    pos: usize,
}

impl ParamIo for Reader<'_> {
    fn param(&mut self, link: Link, _init: f64) -> f64 {
        let v = link.to_natural(self.values[self.pos]);
        self.pos += 1;
        v
    }
}

/// Data-driven natural-scale starting values.
#[derive(Clone, Debug)]
enum Hints {
    TwoByTwo {
        means: [Vec2; 4],
        cx: f64,
        cy: f64,
    },
    MultiBound {
        means: Vec<Vec2>,
        cuts_x: Vec<f64>,
        cuts_y: Vec<f64>,
    },
    GrtWind {
        means: [Vec2; 4],
        subject_cuts: Vec<(f64, f64)>,
    },
}

fn build_model<S: ParamIo>(
    io: &mut S,
    class: FitClass,
    scheme: &ConstraintScheme,
    hints: &Hints,
) -> Result<GrtModel> {
    match (class, hints) {
        (FitClass::TwoByTwo, Hints::TwoByTwo { means, cx, cy }) => {
            let ms = build_means(io, scheme, &means[..], 2, true)?;
            let covs = build_covariances(io, scheme, 4)?;
            let dists = make_dists(&ms, &covs)?;
            let (bx, by) = build_two_bounds(io, scheme, *cx, *cy)?;
            let arr: [PerceptualDistribution; 4] = dists.try_into().expect("four distributions");
            Ok(GrtModel::TwoByTwo(TwoByTwoModel::new(arr, bx, by, *scheme)?))
        }
        (
            FitClass::MultiBound {
                kind,
                n_bounds_x,
                n_bounds_y,
            },
            Hints::MultiBound {
                means,
                cuts_x,
                cuts_y,
            },
        ) => {
            let (gx, gy) = match kind {
                MultiBoundKind::ConcurrentRatings => (2, 2),
                MultiBoundKind::NxMIdentification => (n_bounds_x + 1, n_bounds_y + 1),
            };
            if matches!(scheme.orthogonality_fix, OrthogonalityFix::FixPerceptualMeans) {
                return Err(GrtError::InvalidSpec(
                    "the fixed-perceptual-means convention is defined for the 2x2 class only"
                        .into(),
                ));
            }
            if matches!(scheme.location_fix, LocationFix::BoundIntersectionAtOrigin) {
                return Err(GrtError::InvalidSpec(
                    "multi-bound models have several bound intersections; fix a mean instead"
                        .into(),
                ));
            }
            let ms = build_means(io, scheme, means, gy, false)?;
            let covs = build_covariances(io, scheme, gx * gy)?;
            let dists = make_dists(&ms, &covs)?;
            let free_slopes = !matches!(scheme.orthogonality_fix, OrthogonalityFix::AssumeDs);
            let bx = build_bound_family(io, cuts_x, free_slopes, true)?;
            let by = build_bound_family(io, cuts_y, free_slopes, false)?;
            Ok(GrtModel::MultiBound(MultiBoundModel::new(
                kind,
                DistGrid::new(gx, gy, dists)?,
                bx,
                by,
                *scheme,
            )?))
        }
        (FitClass::GrtWind { subjects }, Hints::GrtWind { means, subject_cuts }) => {
            if subject_cuts.len() != subjects {
                return Err(GrtError::ShapeMismatch {
                    what: "subject starting values".into(),
                    expected: format!("{subjects}"),
                    got: format!("{}", subject_cuts.len()),
                });
            }
            if matches!(scheme.location_fix, LocationFix::BoundIntersectionAtOrigin) {
                return Err(GrtError::InvalidSpec(
                    "GRTwIND bounds vary by subject; fix a group mean instead".into(),
                ));
            }
            let ms = build_means(io, scheme, &means[..], 2, false)?;
            let covs = build_covariances(io, scheme, 4)?;
            let dists = make_dists(&ms, &covs)?;
            let free_slopes = !matches!(scheme.orthogonality_fix, OrthogonalityFix::AssumeDs);
            let mut subj = Vec::with_capacity(subjects);
            for &(cx, cy) in subject_cuts {
                let kappa = io.param(Link::Log, 1.0);
                let lambda = io.param(Link::LogisticUnit, 0.5);
                let cx = io.param(Link::Identity, cx);
                let sx = if free_slopes {
                    io.param(Link::Identity, 0.0)
                } else {
                    0.0
                };
                let cy = io.param(Link::Identity, cy);
                let sy = if free_slopes {
                    io.param(Link::Identity, 0.0)
                } else {
                    0.0
                };
                subj.push(SubjectParams::new(
                    kappa,
                    lambda,
                    LinearBound::x_bound(cx, sx)?,
                    LinearBound::y_bound(cy, sy)?,
                )?);
            }
            let arr: [PerceptualDistribution; 4] = dists.try_into().expect("four distributions");
            Ok(GrtModel::GrtWind(GrtWindModel::new(arr, subj, *scheme)?))
        }
        _ => Err(GrtError::InvalidSpec(
            "model class and starting values disagree".into(),
        )),
    }
}

/// Means for a flat grid (i outer, j inner with `ny` inner levels).
/// `allow_mean_ties` enables the 2x2 fixed-perceptual-means convention.
fn build_means<S: ParamIo>(
    io: &mut S,
    scheme: &ConstraintScheme,
    hints: &[Vec2],
    ny: usize,
    allow_mean_ties: bool,
) -> Result<Vec<Vec2>> {
    let fixed = match scheme.location_fix {
        LocationFix::MeanAtOrigin { index } => {
            if index >= hints.len() {
                return Err(GrtError::InvalidSpec(format!(
                    "location fix names distribution {index}, model has {}",
                    hints.len()
                )));
            }
            Some(index)
        }
        _ => None,
    };
    let ties = allow_mean_ties
        && matches!(scheme.orthogonality_fix, OrthogonalityFix::FixPerceptualMeans);
    let mut means = vec![Vec2::ZERO; hints.len()];
    for idx in 0..hints.len() {
        if fixed == Some(idx) {
            continue;
        }
        // Under the fixed-means convention the x-mean is constant across the
        // irrelevant y level and vice versa: A1B2 shares its x-mean with
        // A1B1, A2B1 shares its y-mean.
        let mx = if ties && idx == 1 {
            means[0].x
        } else {
            io.param(Link::Identity, hints[idx].x)
        };
        let my = if ties && idx == ny {
            means[0].y
        } else {
            io.param(Link::Identity, hints[idx].y)
        };
        means[idx] = Vec2::new(mx, my);
    }
    Ok(means)
}

fn build_covariances<S: ParamIo>(
    io: &mut S,
    scheme: &ConstraintScheme,
    count: usize,
) -> Result<Vec<Covariance>> {
    (0..count)
        .map(|idx| {
            let unit = match scheme.scale_fix {
                ScaleFix::UnitVariancesAll => true,
                ScaleFix::UnitVariancesOneDistribution { index } => idx == index,
                ScaleFix::None => false,
            };
            let sxx = if unit { 1.0 } else { io.param(Link::Log, 1.0) };
            let syy = if unit { 1.0 } else { io.param(Link::Log, 1.0) };
            let rho = io.param(Link::Correlation, 0.0);
            Covariance::new(sxx, rho * (sxx * syy).sqrt(), syy)
        })
        .collect()
}

fn make_dists(means: &[Vec2], covs: &[Covariance]) -> Result<Vec<PerceptualDistribution>> {
    means
        .iter()
        .zip(covs)
        .map(|(m, c)| PerceptualDistribution::new(*m, *c))
        .collect()
}

fn build_two_bounds<S: ParamIo>(
    io: &mut S,
    scheme: &ConstraintScheme,
    cx: f64,
    cy: f64,
) -> Result<(LinearBound, LinearBound)> {
    let origin = matches!(scheme.location_fix, LocationFix::BoundIntersectionAtOrigin);
    let assume_ds = matches!(scheme.orthogonality_fix, OrthogonalityFix::AssumeDs);
    let cx = if origin { 0.0 } else { io.param(Link::Identity, cx) };
    let sx = if assume_ds {
        0.0
    } else {
        io.param(Link::Identity, 0.0)
    };
    let cy = if origin { 0.0 } else { io.param(Link::Identity, cy) };
    let sy = if assume_ds {
        0.0
    } else {
        io.param(Link::Identity, 0.0)
    };
    Ok((LinearBound::x_bound(cx, sx)?, LinearBound::y_bound(cy, sy)?))
}

/// An ordered bound family: the first intercept is free, later intercepts
/// are the previous one plus a log-linked positive gap, so the ordering
/// constraint holds for every parameter vector.
fn build_bound_family<S: ParamIo>(
    io: &mut S,
    cut_hints: &[f64],
    free_slope: bool,
    x_family: bool,
) -> Result<Vec<LinearBound>> {
    let slope = if free_slope {
        io.param(Link::Identity, 0.0)
    } else {
        0.0
    };
    let mut bounds = Vec::with_capacity(cut_hints.len());
    let mut prev = 0.0;
    for (a, &hint) in cut_hints.iter().enumerate() {
        let intercept = if a == 0 {
            io.param(Link::Identity, hint)
        } else {
            prev + io.param(Link::Log, (hint - prev).max(1e-3))
        };
        prev = intercept;
        bounds.push(if x_family {
            LinearBound::x_bound(intercept, slope)?
        } else {
            LinearBound::y_bound(intercept, slope)?
        });
    }
    Ok(bounds)
}

// ---------------------------------------------------------------------------
// Data-driven starting values.

fn clamp_proportion(num: u64, den: u64) -> f64 {
    ((num as f64) / (den as f64)).clamp(0.005, 0.995)
}

/// z-score for the probability of responding above cut `a` on one dimension,
/// marginalizing the other dimension out of one confusion-matrix row.
fn row_level_z(row: &[u64], inner: usize, cut: usize, x_dimension: bool, levels: (usize, usize)) -> f64 {
    let (rx, ry) = levels;
    let mut above = 0u64;
    let mut total = 0u64;
    for ri in 0..rx {
        for rj in 0..ry {
            let n = row[ri * inner + rj];
            total += n;
            let level = if x_dimension { ri } else { rj };
            if level > cut {
                above += n;
            }
        }
    }
    normal_quantile(clamp_proportion(above, total))
}

fn two_by_two_hints(cm: &ConfusionMatrix, scheme: &ConstraintScheme) -> Hints {
    let mut zs = [Vec2::ZERO; 4];
    for (idx, row) in cm.counts().iter().enumerate() {
        zs[idx] = Vec2::new(
            row_level_z(row, 2, 0, true, (2, 2)),
            row_level_z(row, 2, 0, false, (2, 2)),
        );
    }
    // Anchor per the location fix: with a mean at the origin the bounds
    // absorb that stimulus's z-scores; with the bound intersection at the
    // origin the z-scores are the means directly.
    match scheme.location_fix {
        LocationFix::MeanAtOrigin { index } if index < 4 => {
            let z0 = zs[index];
            let means = [zs[0] - z0, zs[1] - z0, zs[2] - z0, zs[3] - z0];
            Hints::TwoByTwo {
                means,
                cx: -z0.x,
                cy: -z0.y,
            }
        }
        _ => Hints::TwoByTwo {
            means: zs,
            cx: 0.0,
            cy: 0.0,
        },
    }
}

fn multibound_hints(
    cm: &ConfusionMatrix,
    kind: MultiBoundKind,
    n_bounds_x: usize,
    n_bounds_y: usize,
    scheme: &ConstraintScheme,
) -> Hints {
    let levels = (n_bounds_x + 1, n_bounds_y + 1);
    let inner = levels.1;
    // Pooled cuts from the marginal response distribution over all stimuli.
    let pooled_cut = |cut: usize, x_dim: bool| {
        let mut below = 0u64;
        let mut total = 0u64;
        for row in cm.counts() {
            for ri in 0..levels.0 {
                for rj in 0..levels.1 {
                    let n = row[ri * inner + rj];
                    total += n;
                    if (if x_dim { ri } else { rj }) <= cut {
                        below += n;
                    }
                }
            }
        }
        normal_quantile(clamp_proportion(below, total))
    };
    let mut cuts_x: Vec<f64> = (0..n_bounds_x).map(|a| pooled_cut(a, true)).collect();
    let mut cuts_y: Vec<f64> = (0..n_bounds_y).map(|a| pooled_cut(a, false)).collect();
    // Pooled quantiles of a discrete distribution are already nondecreasing;
    // enforce strict order for the gap parameterization.
    for a in 1..cuts_x.len() {
        cuts_x[a] = cuts_x[a].max(cuts_x[a - 1] + 0.05);
    }
    for a in 1..cuts_y.len() {
        cuts_y[a] = cuts_y[a].max(cuts_y[a - 1] + 0.05);
    }
    // Stimulus means: average the per-cut estimates cut - z(P(level <= cut)).
    let stim_mean = |row: &[u64], cuts: &[f64], x_dim: bool| {
        let mut acc = 0.0;
        for (a, &c) in cuts.iter().enumerate() {
            acc += c - (-row_level_z(row, inner, a, x_dim, levels));
        }
        acc / (cuts.len() as f64)
    };
    let mut means: Vec<Vec2> = cm
        .counts()
        .iter()
        .map(|row| Vec2::new(stim_mean(row, &cuts_x, true), stim_mean(row, &cuts_y, false)))
        .collect();
    let n_dists = match kind {
        MultiBoundKind::ConcurrentRatings => 4,
        MultiBoundKind::NxMIdentification => levels.0 * levels.1,
    };
    means.truncate(n_dists);
    while means.len() < n_dists {
        means.push(Vec2::ZERO);
    }
    if let LocationFix::MeanAtOrigin { index } = scheme.location_fix {
        if index < means.len() {
            let z0 = means[index];
            for m in &mut means {
                *m = *m - z0;
            }
            for c in cuts_x.iter_mut() {
                *c -= z0.x;
            }
            for c in cuts_y.iter_mut() {
                *c -= z0.y;
            }
        }
    }
    Hints::MultiBound {
        means,
        cuts_x,
        cuts_y,
    }
}

fn grtwind_hints(data: &[ConfusionMatrix], scheme: &ConstraintScheme) -> Hints {
    // Group means from the pooled confusion matrix.
    let mut pooled = vec![vec![0u64; 4]; 4];
    for cm in data {
        for (r, row) in cm.counts().iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                pooled[r][c] += n;
            }
        }
    }
    let mut zs = [Vec2::ZERO; 4];
    for (idx, row) in pooled.iter().enumerate() {
        zs[idx] = Vec2::new(
            row_level_z(row, 2, 0, true, (2, 2)),
            row_level_z(row, 2, 0, false, (2, 2)),
        );
    }
    let shift = match scheme.location_fix {
        LocationFix::MeanAtOrigin { index } if index < 4 => zs[index],
        _ => Vec2::ZERO,
    };
    let means = [zs[0] - shift, zs[1] - shift, zs[2] - shift, zs[3] - shift];
    let mean_x = means.iter().map(|m| m.x).sum::<f64>() / 4.0;
    let mean_y = means.iter().map(|m| m.y).sum::<f64>() / 4.0;
    // Subject cuts from each subject's overall high-response rates.
    let subject_cuts = data
        .iter()
        .map(|cm| {
            let mut high_x = 0u64;
            let mut high_y = 0u64;
            let mut total = 0u64;
            for row in cm.counts() {
                for (r, &n) in row.iter().enumerate() {
                    total += n;
                    if r / 2 == 1 {
                        high_x += n;
                    }
                    if r % 2 == 1 {
                        high_y += n;
                    }
                }
            }
            (
                mean_x - normal_quantile(clamp_proportion(high_x, total)),
                mean_y - normal_quantile(clamp_proportion(high_y, total)),
            )
        })
        .collect();
    Hints::GrtWind {
        means,
        subject_cuts,
    }
}

// ---------------------------------------------------------------------------
// Optimizer.

/// Nelder-Mead with dimension-adaptive coefficients. Returns the best point,
/// its value, whether the simplex-diameter criterion was met, and the number
/// of iterations used.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64, bool, usize) {
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), f(x0), true, 0);
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += 0.25;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iter {
        order(&mut simplex);
        let fbest = simplex[0].1;
        let fworst = simplex[n].1;
        let mut diam = 0.0_f64;
        for v in &simplex[1..] {
            for (a, b) in v.0.iter().zip(&simplex[0].0) {
                diam = diam.max((a - b).abs());
            }
        }
        if fbest.is_finite()
            && diam < tol
            && (fworst - fbest).abs() < tol * (1.0 + fbest.abs())
        {
            converged = true;
            break;
        }
        iters += 1;
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.0) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= nf;
        }
        let worst = simplex[n].0.clone();
        let fworst = simplex[n].1;
        let shifted = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let reflected = shifted(alpha);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = shifted(alpha * beta);
            let fe = f(&expanded);
            simplex[n] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (xc, fc) = if fr < fworst {
                let xc = shifted(alpha * gamma);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = shifted(-gamma);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fworst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (x, b) in v.0.iter_mut().zip(&best) {
                        *x = b + delta * (*x - b);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    order(&mut simplex);
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, converged, iters)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-15);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn expected_shape(class: FitClass) -> (usize, usize, usize) {
    match class {
        FitClass::TwoByTwo => (1, 4, 4),
        FitClass::MultiBound {
            kind,
            n_bounds_x,
            n_bounds_y,
        } => {
            let responses = (n_bounds_x + 1) * (n_bounds_y + 1);
            let stimuli = match kind {
                MultiBoundKind::ConcurrentRatings => 4,
                MultiBoundKind::NxMIdentification => responses,
            };
            (1, stimuli, responses)
        }
        FitClass::GrtWind { subjects } => (subjects, 4, 4),
    }
}

fn audit_target(class: FitClass) -> AuditTarget {
    match class {
        FitClass::TwoByTwo => AuditTarget::TwoByTwo,
        FitClass::MultiBound {
            kind,
            n_bounds_x,
            n_bounds_y,
        } => match kind {
            MultiBoundKind::ConcurrentRatings => AuditTarget::ConcurrentRatings {
                n: n_bounds_x + 1,
                m: n_bounds_y + 1,
            },
            MultiBoundKind::NxMIdentification => AuditTarget::NxMIdentification {
                n: n_bounds_x + 1,
                m: n_bounds_y + 1,
            },
        },
        FitClass::GrtWind { subjects } => AuditTarget::GrtWind { subjects },
    }
}

/// Fit a model by multinomial maximum likelihood.
///
/// Refuses to fit when the degrees-of-freedom audit fails for the class and
/// scheme; the error carries the full report. The returned log-likelihood is
/// nondecreasing in `options.restarts` for a fixed seed.
pub fn fit(
    data: &[ConfusionMatrix],
    class: FitClass,
    scheme: ConstraintScheme,
    options: &FitOptions,
) -> Result<FitResult> {
    let report = audit(audit_target(class), &scheme)?;
    if !report.identifiable_under_scheme {
        return Err(GrtError::NotIdentifiable {
            reason: report.notes.clone(),
            report: Box::new(report),
        });
    }
    if options.restarts == 0 {
        return Err(GrtError::Optimization("at least one start is required".into()));
    }

    let (n_matrices, n_stimuli, n_responses) = expected_shape(class);
    if data.len() != n_matrices {
        return Err(GrtError::ShapeMismatch {
            what: "confusion matrices".into(),
            expected: format!("{n_matrices}"),
            got: format!("{}", data.len()),
        });
    }
    for cm in data {
        if cm.n_stimuli() != n_stimuli || cm.n_responses() != n_responses {
            return Err(GrtError::ShapeMismatch {
                what: "confusion matrix".into(),
                expected: format!("{n_stimuli}x{n_responses}"),
                got: format!("{}x{}", cm.n_stimuli(), cm.n_responses()),
            });
        }
    }

    let hints = match class {
        FitClass::TwoByTwo => two_by_two_hints(&data[0], &scheme),
        FitClass::MultiBound {
            kind,
            n_bounds_x,
            n_bounds_y,
        } => multibound_hints(&data[0], kind, n_bounds_x, n_bounds_y, &scheme),
        FitClass::GrtWind { .. } => grtwind_hints(data, &scheme),
    };

    // Recorder pass: collects the parameter layout and validates that the
    // starting values build a legal model.
    let mut recorder = Recorder {
        links: Vec::new(),
        init: Vec::new(),
    };
    build_model(&mut recorder, class, &scheme, &hints)?;
    let links = recorder.links;
    let x0: Vec<f64> = links
        .iter()
        .zip(&recorder.init)
        .map(|(l, v)| l.to_unconstrained(*v))
        .collect();
    let k = x0.len();

    let objective = |u: &[f64]| -> f64 {
        let mut reader = Reader { values: u, pos: 0 };
        match build_model(&mut reader, class, &scheme, &hints)
            .and_then(|m| log_likelihood(&m, data))
        {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    let run_start = |r: usize| -> (Vec<f64>, f64, bool) {
        let start = if r == 0 {
            x0.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64);
            x0.iter()
                .map(|&v| v + options.jitter * standard_normal(&mut rng))
                .collect()
        };
        let (mut x, mut fx, mut conv, _) =
            nelder_mead(objective, &start, options.max_iterations, options.tolerance);
        // Re-seeding the simplex at the optimum recovers from premature
        // shrinkage, which the simplex method is prone to in higher
        // dimensions.
        for _ in 0..3 {
            let (x2, f2, c2, _) =
                nelder_mead(objective, &x, options.max_iterations, options.tolerance);
            if f2 < fx - options.tolerance {
                x = x2;
                fx = f2;
                conv = c2;
            } else {
                conv = conv || c2;
                break;
            }
        }
        (x, fx, conv)
    };

    #[cfg(feature = "parallel")]
    let runs: Vec<(Vec<f64>, f64, bool)> = (0..options.restarts)
        .into_par_iter()
        .map(run_start)
        .collect();
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<(Vec<f64>, f64, bool)> = (0..options.restarts).map(run_start).collect();

    // Deterministic argmin: value first, then start index, so parallel and
    // serial runs agree.
    let (best_x, best_f, best_conv) = runs
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one start");
    if !best_f.is_finite() {
        return Err(GrtError::Optimization(
            "no start reached a finite likelihood; check the data against the model class".into(),
        ));
    }

    let mut reader = Reader {
        values: &best_x,
        pos: 0,
    };
    let model = build_model(&mut reader, class, &scheme, &hints)?;
    let ll = -best_f;
    let trials: u64 = data.iter().map(|cm| cm.total_trials()).sum();
    let kf = k as f64;

    // Central-difference gradient of the negative log-likelihood.
    let h = 1e-5;
    let mut grad_sq = 0.0;
    for i in 0..k {
        let mut xp = best_x.clone();
        let mut xm = best_x.clone();
        xp[i] += h;
        xm[i] -= h;
        let g = (objective(&xp) - objective(&xm)) / (2.0 * h);
        grad_sq += g * g;
    }

    Ok(FitResult {
        model,
        log_likelihood: ll,
        n_free_parameters: k,
        n_trials: trials,
        aic: 2.0 * kf - 2.0 * ll,
        bic: kf * (trials as f64).ln() - 2.0 * ll,
        converged: best_conv,
        n_restarts_used: options.restarts,
        gradient_norm_at_solution: grad_sq.sqrt(),
        dof_report: report,
    })
}

/// Outcome of evaluating a model and its decisionally separable twin on the
/// same data.
#[derive(Clone, Debug)]
pub struct TwinLikelihoodReport {
    pub original_log_likelihood: f64,
    pub twin_log_likelihood: f64,
    /// Per-table |delta log-likelihood| (one entry, or one per subject).
    pub per_table_delta: Vec<f64>,
    pub max_abs_delta: f64,
}

/// Evaluate the log-likelihood of a model and of its decisionally separable
/// twin on the same data. Equal likelihoods (to numerical accuracy) are the
/// operational meaning of the equivalence: the data cannot distinguish the
/// twins.
pub fn likelihood_twin_check(
    model: &GrtModel,
    data: &[ConfusionMatrix],
) -> Result<TwinLikelihoodReport> {
    let (orig_tables, twin_tables) = match model {
        GrtModel::TwoByTwo(m) => {
            let (twin, _) = induce_ds(m)?;
            (
                vec![response_probabilities(m)?],
                vec![response_probabilities(&twin)?],
            )
        }
        GrtModel::MultiBound(m) => {
            let (twin, _) = induce_ds(m)?;
            (
                vec![response_probabilities(m)?],
                vec![response_probabilities(&twin)?],
            )
        }
        GrtModel::GrtWind(m) => {
            let (twins, _) = subject_specific_induce_ds(m)?;
            let orig = (0..m.n_subjects())
                .map(|s| grtwind_response_probabilities(m, s))
                .collect::<Result<Vec<_>>>()?;
            let tw = twins
                .iter()
                .map(response_probabilities)
                .collect::<Result<Vec<_>>>()?;
            (orig, tw)
        }
    };
    if data.len() != orig_tables.len() {
        return Err(GrtError::ShapeMismatch {
            what: "confusion matrices".into(),
            expected: format!("{}", orig_tables.len()),
            got: format!("{}", data.len()),
        });
    }
    let mut ll_orig = 0.0;
    let mut ll_twin = 0.0;
    let mut per_table = Vec::with_capacity(data.len());
    for ((cm, po), pt) in data.iter().zip(&orig_tables).zip(&twin_tables) {
        let a = table_log_likelihood(cm, po)?;
        let b = table_log_likelihood(cm, pt)?;
        ll_orig += a;
        ll_twin += b;
        per_table.push((a - b).abs());
    }
    let max_abs = per_table.iter().cloned().fold(0.0, f64::max);
    Ok(TwinLikelihoodReport {
        original_log_likelihood: ll_orig,
        twin_log_likelihood: ll_twin,
        per_table_delta: per_table,
        max_abs_delta: max_abs,
    })
}
