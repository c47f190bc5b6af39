//! Equivalence transformations: rotation/shear induction of decisional
//! separability and mean-variance normalization.
//!
//! Angle conventions: `phi` is the tilt of the y-bound family,
//! `arctan(slope)`, and `omega` is the angle from the x-axis to the x-bound
//! family after the rotation that removes `phi`, normalized into (0, pi).
//! The rotation stage applies the rotation by `-phi`, which aligns the
//! y-bounds with the x-axis; the shear stage then aligns the x-bounds with
//! the y-axis while leaving horizontal lines horizontal.

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::geometry::{Mat2, Vec2};
use crate::model::{
    bound_intersection, Covariance, LinearBound, PerceptualDistribution,
    SingleSubjectModel, TwoByTwoModel,
};

/// How a transform was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Counterclockwise rotation by the stored angle (radians).
    Rotation { phi: f64 },
    /// Shear removing the stored inter-bound angle (radians).
    Shear { omega: f64 },
    /// Reflection across the y-axis, applied when the bound geometry
    /// reverses response-level order so the standard ordering is restored.
    ReflectX,
    MeanVarianceNormalization {
        scale: [f64; 2],
        shift: [f64; 2],
    },
    Composite { stages: Vec<Provenance> },
    Identity,
    Inverse { of: Box<Provenance> },
}

/// An invertible affine map `p -> linear * p + offset` with a record of how
/// it was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    linear: Mat2,
    offset: Vec2,
    provenance: Provenance,
}

impl AffineTransform {
    pub fn new(linear: Mat2, offset: Vec2, provenance: Provenance) -> Result<Self> {
        if !linear.is_finite() || !offset.is_finite() {
            return Err(GrtError::NonFinite {
                context: "affine transform".into(),
            });
        }
        let det = linear.det();
        if det.abs() <= 1e-12 {
            return Err(GrtError::SingularTransform { det });
        }
        Ok(AffineTransform {
            linear,
            offset,
            provenance,
        })
    }

    pub fn identity() -> Self {
        AffineTransform {
            linear: Mat2::IDENTITY,
            offset: Vec2::ZERO,
            provenance: Provenance::Identity,
        }
    }

    pub fn linear(&self) -> Mat2 {
        self.linear
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_identity(&self) -> bool {
        self.linear == Mat2::IDENTITY && self.offset == Vec2::ZERO
    }

    pub fn apply_point(&self, p: Vec2) -> Vec2 {
        self.linear * p + self.offset
    }

    /// Transform a distribution: mean maps affinely, covariance by
    /// conjugation with the linear part.
    pub fn apply_distribution(&self, d: &PerceptualDistribution) -> Result<PerceptualDistribution> {
        let mean = self.apply_point(d.mean());
        let m = self.linear * d.covariance().to_mat2() * self.linear.transpose();
        PerceptualDistribution::new(mean, Covariance::from_mat2(m)?)
    }

    pub fn inverse(&self) -> AffineTransform {
        let inv = self.linear.inverse();
        AffineTransform {
            linear: inv,
            offset: -(inv * self.offset),
            provenance: Provenance::Inverse {
                of: Box::new(self.provenance.clone()),
            },
        }
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        AffineTransform {
            linear: self.linear * first.linear,
            offset: self.linear * first.offset + self.offset,
            provenance: Provenance::Composite {
                stages: vec![first.provenance.clone(), self.provenance.clone()],
            },
        }
    }
}

/// Counterclockwise rotation by `phi` radians about the origin.
pub fn rotation(phi: f64) -> Result<AffineTransform> {
    if !phi.is_finite() {
        return Err(GrtError::NonFinite {
            context: "rotation angle".into(),
        });
    }
    let (s, c) = phi.sin_cos();
    AffineTransform::new(
        Mat2::new(c, -s, s, c),
        Vec2::ZERO,
        Provenance::Rotation { phi },
    )
}

/// Shear [[1, -1/tan(omega)], [0, 1]] that maps the direction at angle
/// `omega` onto the y-axis while fixing horizontal lines.
pub fn shear(omega: f64) -> Result<AffineTransform> {
    if !omega.is_finite() {
        return Err(GrtError::NonFinite {
            context: "shear angle".into(),
        });
    }
    if omega.sin().abs() < 1e-12 {
        // tan(omega) = 0: the two bound families are parallel.
        return Err(GrtError::DegenerateAngle {
            context: format!("shear angle omega = {omega} is a multiple of pi"),
        });
    }
    AffineTransform::new(
        Mat2::new(1.0, -1.0 / omega.tan(), 0.0, 1.0),
        Vec2::ZERO,
        Provenance::Shear { omega },
    )
}

/// The angles implied by a model's bound slopes: `phi` from the y-bound
/// family, `omega` as the post-rotation angle of the x-bound family,
/// normalized into (0, pi).
pub fn bound_angles(slope_x: f64, slope_y: f64) -> Result<(f64, f64)> {
    let phi = slope_y.atan();
    // Direction of an x-bound `x = c + slope * y` is (slope, 1), at angle
    // atan2(1, slope) in (0, pi).
    let theta_x = 1.0_f64.atan2(slope_x);
    let mut omega = theta_x - phi;
    if omega <= 0.0 {
        omega += std::f64::consts::PI;
    } else if omega >= std::f64::consts::PI {
        omega -= std::f64::consts::PI;
    }
    if omega.sin().abs() < 1e-12 {
        return Err(GrtError::DegenerateAngle {
            context: "x- and y-bound families are parallel".into(),
        });
    }
    Ok((phi, omega))
}

/// The composite map that aligns tilted bounds with the axes: rotation by
/// `-phi`, then the shear for `omega`, anchored so `anchor` is a fixed
/// point. A final reflection across the y-axis is composed in when the
/// linear part would reverse the order of x response levels.
pub fn ds_inducing_transform(slope_x: f64, slope_y: f64, anchor: Vec2) -> Result<AffineTransform> {
    let (phi, omega) = bound_angles(slope_x, slope_y)?;
    let rot = rotation(-phi)?;
    let sh = shear(omega)?;
    let mut linear = sh.linear() * rot.linear();
    let mut stages = vec![rot.provenance().clone(), sh.provenance().clone()];
    // linear.a = sin(omega + phi) / sin(omega); negative when the rotated
    // x-bound family points into the lower half-plane, which reverses the
    // left/right order of the x cuts.
    if linear.a < 0.0 {
        linear = Mat2::new(-1.0, 0.0, 0.0, 1.0) * linear;
        stages.push(Provenance::ReflectX);
    }
    let offset = anchor - linear * anchor;
    AffineTransform::new(linear, offset, Provenance::Composite { stages })
}

/// Induce decisional separability: returns an equivalent model whose bound
/// slopes are exactly zero, together with the transform that produced it.
///
/// Already-separable models are returned unchanged with the identity
/// transform.
pub fn induce_ds<M: SingleSubjectModel>(model: &M) -> Result<(M, AffineTransform)> {
    let slope_x = model.bounds_x()[0].slope;
    let slope_y = model.bounds_y()[0].slope;
    if slope_x == 0.0 && slope_y == 0.0 {
        return Ok((model.clone(), AffineTransform::identity()));
    }
    // Location fix: anchor at the intersection of the first bound in each
    // family, which the transform leaves in place.
    let anchor = bound_intersection(&model.bounds_x()[0], &model.bounds_y()[0])?;
    let t = ds_inducing_transform(slope_x, slope_y, anchor)?;

    let dists = model.distributions().map(|d| t.apply_distribution(d))?;
    // Each x-bound passes through (intercept, 0); its image is the vertical
    // line through the image of that point. Orientation of the cut order is
    // preserved by construction (see ds_inducing_transform), so the bound
    // lists stay sorted.
    let bounds_x = model
        .bounds_x()
        .iter()
        .map(|b| LinearBound::x_bound(t.apply_point(b.point_on()).x, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let bounds_y = model
        .bounds_y()
        .iter()
        .map(|b| LinearBound::y_bound(t.apply_point(b.point_on()).y, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let rebuilt = model.rebuild(dists, bounds_x, bounds_y)?;
    Ok((rebuilt, t))
}

/// Normalize one distribution against a pair of response criteria: the
/// covariance becomes its correlation matrix and the mean shifts so the
/// signed distances to the criteria, in standard deviation units, are
/// preserved. The criteria themselves are fixed points.
pub fn normalize_mean_variance(
    dist: &PerceptualDistribution,
    criteria: (f64, f64),
) -> Result<(PerceptualDistribution, AffineTransform)> {
    let (cx, cy) = criteria;
    if !(cx.is_finite() && cy.is_finite()) {
        return Err(GrtError::NonFinite {
            context: "normalization criteria".into(),
        });
    }
    let cov = dist.covariance();
    let (tx, ty) = (1.0 / cov.sxx().sqrt(), 1.0 / cov.syy().sqrt());
    let shift = Vec2::new(cx - cx * tx, cy - cy * ty);
    let t = AffineTransform::new(
        Mat2::new(tx, 0.0, 0.0, ty),
        shift,
        Provenance::MeanVarianceNormalization {
            scale: [tx, ty],
            shift: [shift.x, shift.y],
        },
    )?;
    // Construct the image directly so the unit variances and the preserved
    // correlation are exact rather than rounded through the conjugation.
    // Unit-variance dimensions map exactly to themselves.
    let stretch = |m: f64, c: f64, t: f64| if t == 1.0 { m } else { c + (m - c) * t };
    let eta = Vec2::new(
        stretch(dist.mean().x, cx, tx),
        stretch(dist.mean().y, cy, ty),
    );
    let out = PerceptualDistribution::new(eta, Covariance::new(1.0, cov.rho(), 1.0)?)?;
    Ok((out, t))
}

/// Normalize every distribution of a decisionally separable 2x2 model to
/// unit marginal variances against the model's criteria. Bounds are
/// unchanged and the predicted probabilities are preserved.
pub fn normalize_model(model: &TwoByTwoModel) -> Result<(TwoByTwoModel, Vec<AffineTransform>)> {
    if !(model.bound_x().is_axis_aligned() && model.bound_y().is_axis_aligned()) {
        return Err(GrtError::TransformPrecondition(
            "normalize_model requires decisional separability; apply induce_ds first".into(),
        ));
    }
    let criteria = (model.bound_x().intercept, model.bound_y().intercept);
    let mut transforms = Vec::with_capacity(4);
    let dists = model.distributions().map(|d| {
        let (nd, t) = normalize_mean_variance(d, criteria)?;
        transforms.push(t);
        Ok(nd)
    })?;
    let rebuilt = model.rebuild(
        dists,
        vec![*model.bound_x()],
        vec![*model.bound_y()],
    )?;
    Ok((rebuilt, transforms))
}
