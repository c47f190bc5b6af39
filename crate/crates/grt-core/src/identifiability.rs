//! Degrees-of-freedom accounting, identifiability gating, and the
//! equivalence-audit certificate.
//!
//! The counting inequality is a necessary condition only; the audit never
//! claims to prove identifiability, it reports whether the necessary
//! conditions hold under the given constraint scheme.

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::grtwind::subject_specific_induce_ds;
use crate::model::{ConstraintScheme, MultiBoundKind};
use crate::probability::response_probabilities;
use crate::transforms::{induce_ds, normalize_model, AffineTransform};
use crate::GrtModel;

/// Which model class (and size) is being audited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum AuditTarget {
    TwoByTwo,
    ConcurrentRatings { n: usize, m: usize },
    NxMIdentification { n: usize, m: usize },
    GrtWind { subjects: usize },
}

/// Free-parameter and data degrees-of-freedom accounting for one model
/// class under one constraint scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofReport {
    pub target: AuditTarget,
    pub data_dof: usize,
    pub free_parameters: usize,
    pub perceptual_parameters: usize,
    pub decisional_parameters: usize,
    pub scaling_parameters: usize,
    pub identifiable_under_scheme: bool,
    pub notes: String,
}

/// Count data degrees of freedom and free parameters for a model class.
///
/// `identifiable_under_scheme` is a necessary-conditions check: it is false
/// when the parameter count exceeds the data degrees of freedom or when the
/// scheme leaves location, scale, or orthogonality unfixed.
pub fn audit(target: AuditTarget, scheme: &ConstraintScheme) -> Result<DofReport> {
    let (data_dof, perceptual, decisional, scaling, mut notes) = match target {
        AuditTarget::ConcurrentRatings { n, m } => {
            if n < 2 || m < 2 {
                return Err(GrtError::Domain(format!(
                    "concurrent ratings requires n, m >= 2, got {n}x{m}"
                )));
            }
            // 4(nm - 1) data values; 16 perceptual parameters (three free
            // mean vectors, one correlation in the fixed distribution,
            // three covariance parameters in each other distribution) and
            // n + m - 2 criteria.
            (
                4 * (n * m - 1),
                16,
                n + m - 2,
                0,
                String::new(),
            )
        }
        AuditTarget::NxMIdentification { n, m } => {
            if n < 2 || m < 2 {
                return Err(GrtError::Domain(format!(
                    "n x m identification requires n, m >= 2, got {n}x{m}"
                )));
            }
            let nm = n * m;
            (
                nm * (nm - 1),
                7 * (nm - 1) + 1,
                n + m - 2,
                0,
                String::new(),
            )
        }
        AuditTarget::GrtWind { subjects } => {
            if subjects < 1 {
                return Err(GrtError::Domain("GRTwIND requires at least one subject".into()));
            }
            let notes = if subjects < 3 {
                format!(
                    "over-parameterized: {} free parameters exceed {} data degrees of freedom; at least three subjects are required",
                    16 + 6 * subjects,
                    12 * subjects
                )
            } else {
                String::new()
            };
            // 12 data values per subject; 16 shared perceptual parameters;
            // per subject one kappa, one lambda, two intercepts, two slopes.
            (12 * subjects, 16, 4 * subjects, 2 * subjects, notes)
        }
        AuditTarget::TwoByTwo => {
            // Reported under the conventional scheme (all marginal
            // variances fixed at one): six free means, four correlations,
            // two criteria. The one-distribution convention is reported in
            // the notes because the literature uses both and they count
            // differently.
            let alt_free = 16 + 2;
            let notes = format!(
                "conventional scheme: all marginal variances fixed at one; \
                 under the one-distribution convention the same model has {alt_free} free parameters \
                 (16 perceptual + 2 decisional) against 12 data degrees of freedom and is not identifiable"
            );
            (12, 10, 2, 0, notes)
        }
    };

    let free = perceptual + decisional + scaling;
    let counting_ok = free <= data_dof;
    let scheme_ok = scheme.is_complete();
    if !scheme_ok {
        let msg = "constraint scheme leaves location, scale, or orthogonality unfixed";
        if notes.is_empty() {
            notes = msg.into();
        } else {
            notes = format!("{notes}; {msg}");
        }
    }
    if notes.is_empty() {
        notes = "necessary-conditions check only; counting does not prove identifiability".into();
    } else {
        notes = format!("{notes} (necessary-conditions check only)");
    }

    Ok(DofReport {
        target,
        data_dof,
        free_parameters: free,
        perceptual_parameters: perceptual,
        decisional_parameters: decisional,
        scaling_parameters: scaling,
        identifiable_under_scheme: counting_ok && scheme_ok,
        notes,
    })
}

/// A transformed model emitted by the certificate. GRTwIND twins are a
/// per-subject collection of 2x2 models (the image of the subject-specific
/// construction), the other classes map to a model of the same class.
#[derive(Clone, Debug)]
pub enum TwinModel {
    TwoByTwo(crate::model::TwoByTwoModel),
    MultiBound(crate::model::MultiBoundModel),
    PerSubject(Vec<crate::model::TwoByTwoModel>),
}

/// One equivalence twin: a structurally different model producing the same
/// predicted response probabilities.
#[derive(Clone, Debug)]
pub struct EquivalenceTwin {
    pub description: String,
    pub model: TwinModel,
    pub transforms: Vec<AffineTransform>,
    pub max_abs_probability_discrepancy: f64,
}

/// The equivalence certificate: every transformed twin the library can
/// produce for a model, with the largest probability discrepancy observed.
#[derive(Clone, Debug)]
pub struct EquivalenceCertificate {
    pub twins: Vec<EquivalenceTwin>,
    /// For GRTwIND inputs: whether the decisionally separable image has
    /// subject-varying perceptual parameters.
    pub universal_perception_violated: Option<bool>,
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Produce the transformed twins of a model and measure the probability
/// discrepancy of each.
pub fn equivalence_certificate(model: &GrtModel) -> Result<EquivalenceCertificate> {
    let mut twins = Vec::new();
    let mut universal = None;
    match model {
        GrtModel::TwoByTwo(m) => {
            let base = response_probabilities(m)?;
            let (ds_twin, t) = induce_ds(m)?;
            let p = response_probabilities(&ds_twin)?;
            let already_ds = t.is_identity();
            twins.push(EquivalenceTwin {
                description: if already_ds {
                    "decisionally separable twin (identity: model already separable)".into()
                } else {
                    "decisionally separable twin (rotation + shear)".into()
                },
                model: TwinModel::TwoByTwo(ds_twin.clone()),
                transforms: vec![t],
                max_abs_probability_discrepancy: max_abs_diff(&base, &p),
            });
            if already_ds {
                let (norm_twin, ts) = normalize_model(m)?;
                let p = response_probabilities(&norm_twin)?;
                twins.push(EquivalenceTwin {
                    description: "unit-marginal-variance twin (mean-variance normalization)".into(),
                    model: TwinModel::TwoByTwo(norm_twin),
                    transforms: ts,
                    max_abs_probability_discrepancy: max_abs_diff(&base, &p),
                });
            }
        }
        GrtModel::MultiBound(m) => {
            let base = response_probabilities(m)?;
            let (ds_twin, t) = induce_ds(m)?;
            let p = response_probabilities(&ds_twin)?;
            twins.push(EquivalenceTwin {
                description: match m.kind() {
                    MultiBoundKind::ConcurrentRatings => {
                        "decisionally separable twin (concurrent ratings)".into()
                    }
                    MultiBoundKind::NxMIdentification => {
                        "decisionally separable twin (n x m identification)".into()
                    }
                },
                model: TwinModel::MultiBound(ds_twin),
                transforms: vec![t],
                max_abs_probability_discrepancy: max_abs_diff(&base, &p),
            });
        }
        GrtModel::GrtWind(m) => {
            let (subject_twins, ts) = subject_specific_induce_ds(m)?;
            let mut worst = 0.0_f64;
            for (k, twin) in subject_twins.iter().enumerate() {
                let base = response_probabilities(&m.subject_model(k)?)?;
                let p = response_probabilities(twin)?;
                worst = worst.max(max_abs_diff(&base, &p));
            }
            // Universal perception holds in the image only if every subject
            // shares the same transformed distributions.
            let mut violated = false;
            'outer: for a in 1..subject_twins.len() {
                for idx in 0..4 {
                    let d0 = &subject_twins[0].distributions().as_slice()[idx];
                    let da = &subject_twins[a].distributions().as_slice()[idx];
                    if (d0.mean() - da.mean()).norm() > 1e-9 {
                        violated = true;
                        break 'outer;
                    }
                }
            }
            universal = Some(violated);
            twins.push(EquivalenceTwin {
                description: "per-subject decisionally separable twins".into(),
                model: TwinModel::PerSubject(subject_twins),
                transforms: ts,
                max_abs_probability_discrepancy: worst,
            });
        }
    }
    Ok(EquivalenceCertificate {
        twins,
        universal_perception_violated: universal,
    })
}
