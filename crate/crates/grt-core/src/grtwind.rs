//! The multilevel GRTwIND model: shared group-level distributions, per
//! subject scaling (kappa), dimension weighting (lambda), and decision
//! bounds, plus the subject-specific rotation/shear equivalence
//! construction.

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::geometry::Vec2;
use crate::model::{
    bound_intersection, BoundOrientation, ConstraintScheme, Covariance, DistGrid, LinearBound,
    PerceptualDistribution, TwoByTwoModel,
};
use crate::transforms::{bound_angles, ds_inducing_transform, AffineTransform};

/// Lambda is kept away from its open-interval endpoints so the scaling
/// divisors in the subject covariance stay bounded.
pub const LAMBDA_MARGIN: f64 = 1e-6;

/// Per-subject parameters: global scaling, dimension weight, and the
/// subject's own pair of decision bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    kappa: f64,
    lambda: f64,
    bound_x: LinearBound,
    bound_y: LinearBound,
}

impl SubjectParams {
    pub fn new(kappa: f64, lambda: f64, bound_x: LinearBound, bound_y: LinearBound) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(GrtError::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        if !(lambda.is_finite() && (LAMBDA_MARGIN..=1.0 - LAMBDA_MARGIN).contains(&lambda)) {
            return Err(GrtError::Domain(format!(
                "lambda must lie in [{LAMBDA_MARGIN}, {}], got {lambda}",
                1.0 - LAMBDA_MARGIN
            )));
        }
        if bound_x.orientation != BoundOrientation::XBound
            || bound_y.orientation != BoundOrientation::YBound
        {
            return Err(GrtError::ShapeMismatch {
                what: "subject bounds".into(),
                expected: "one XBound and one YBound".into(),
                got: format!("{:?}, {:?}", bound_x.orientation, bound_y.orientation),
            });
        }
        if bound_x.direction().cross(bound_y.direction()).abs() < 1e-12 {
            return Err(GrtError::DegenerateAngle {
                context: "subject bounds are parallel".into(),
            });
        }
        Ok(SubjectParams {
            kappa,
            lambda,
            bound_x,
            bound_y,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bound_x(&self) -> &LinearBound {
        &self.bound_x
    }

    pub fn bound_y(&self) -> &LinearBound {
        &self.bound_y
    }
}

/// GRTwIND: a shared 2x2 grid of group-level perceptual distributions plus
/// per-subject parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GrtWindModel {
    group: DistGrid,
    subjects: Vec<SubjectParams>,
    constraints: ConstraintScheme,
}

impl GrtWindModel {
    pub fn new(
        group: [PerceptualDistribution; 4],
        subjects: Vec<SubjectParams>,
        constraints: ConstraintScheme,
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(GrtError::Domain(
                "a GRTwIND model needs at least one subject".into(),
            ));
        }
        Ok(GrtWindModel {
            group: DistGrid::new(2, 2, group.to_vec())?,
            subjects,
            constraints,
        })
    }

    pub fn group_distributions(&self) -> &DistGrid {
        &self.group
    }

    pub fn subjects(&self) -> &[SubjectParams] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn constraints(&self) -> &ConstraintScheme {
        &self.constraints
    }

    /// The explicit single-subject 2x2 model for one subject: group means
    /// unchanged, covariances scaled, the subject's own bounds.
    pub fn subject_model(&self, subject: usize) -> Result<TwoByTwoModel> {
        let s = self
            .subjects
            .get(subject)
            .ok_or(GrtError::SubjectIndex {
                index: subject,
                count: self.subjects.len(),
            })?;
        let dists = self.group.map(|d| {
            PerceptualDistribution::new(
                d.mean(),
                subject_covariance(d.covariance(), s.kappa, s.lambda)?,
            )
        })?;
        let arr: [PerceptualDistribution; 4] = dists.as_slice().try_into().expect("2x2 grid");
        TwoByTwoModel::new(arr, s.bound_x, s.bound_y, self.constraints)
    }
}

/// The subject covariance scaling: marginal variances divided by
/// kappa*lambda and kappa*(1-lambda), the covariance by
/// kappa*sqrt(lambda*(1-lambda)). Correlation is invariant.
pub fn subject_covariance(group: &Covariance, kappa: f64, lambda: f64) -> Result<Covariance> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(GrtError::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    if !(lambda.is_finite() && lambda > 0.0 && lambda < 1.0) {
        return Err(GrtError::Domain(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    Covariance::new(
        group.sxx() / (kappa * lambda),
        group.sxy() / (kappa * (lambda * (1.0 - lambda)).sqrt()),
        group.syy() / (kappa * (1.0 - lambda)),
    )
}

/// The rotated covariance Theta = R * Sigma * R^T written out element by
/// element for the rotation [[cos phi, -sin phi], [sin phi, cos phi]].
pub fn rotated_covariance_elements(cov: &Covariance, phi: f64) -> Result<Covariance> {
    let (s, c) = phi.sin_cos();
    let t11 = cov.sxx() * c * c - 2.0 * cov.sxy() * s * c + cov.syy() * s * s;
    let t12 = (cov.sxx() - cov.syy()) * c * s + cov.sxy() * (c * c - s * s);
    let t22 = cov.sxx() * s * s + 2.0 * cov.sxy() * s * c + cov.syy() * c * c;
    Covariance::new(t11, t12, t22)
}

/// The sheared covariance Psi = S * Theta * S^T for the shear
/// [[1, -1/tan(omega)], [0, 1]], written out element by element:
///
///   Psi11 = Theta11 - 2*Theta12/tan(omega) + Theta22/tan^2(omega)
///   Psi12 = Theta12 - Theta22/tan(omega)
///   Psi22 = Theta22
///
/// The coefficient on Theta12 in Psi11 is 2/tan(omega); expanding the
/// matrix product (S Theta S^T)_11 = Theta11 - Theta12/t - (Theta12 -
/// Theta22/t)/t with t = tan(omega) leaves no (1 + t)/t term, and the
/// conjugation oracle in the tests pins this down.
pub fn sheared_covariance_elements(theta: &Covariance, omega: f64) -> Result<Covariance> {
    let t = omega.tan();
    if t == 0.0 || !t.is_finite() {
        return Err(GrtError::DegenerateAngle {
            context: format!("shear angle omega = {omega}"),
        });
    }
    let p11 = theta.sxx() - 2.0 * theta.sxy() / t + theta.syy() / (t * t);
    let p12 = theta.sxy() - theta.syy() / t;
    let p22 = theta.syy();
    Covariance::new(p11, p12, p22)
}

/// The rotated and sheared mean S * R * mu, written out element by element.
pub fn sheared_rotated_mean(mu: Vec2, phi: f64, omega: f64) -> Vec2 {
    let (s, c) = phi.sin_cos();
    let t = omega.tan();
    Vec2::new(
        mu.x * c - mu.y * s - mu.x * s / t - mu.y * c / t,
        mu.x * s + mu.y * c,
    )
}

/// The subject-specific equivalence construction: for each subject, the
/// rotation/shear implied by that subject's bound slopes is applied to that
/// subject's model, yielding a decisionally separable twin. When subjects'
/// slopes differ, the twins' means and covariances differ across subjects,
/// i.e. the image violates universal perception.
///
/// The covariances of the image are computed through the expanded element
/// formulas (`rotated_covariance_elements`, `sheared_covariance_elements`)
/// rather than generic matrix products; the two routes are reconciled in
/// tests.
pub fn subject_specific_induce_ds(
    model: &GrtWindModel,
) -> Result<(Vec<TwoByTwoModel>, Vec<AffineTransform>)> {
    let mut twins = Vec::with_capacity(model.n_subjects());
    let mut transforms = Vec::with_capacity(model.n_subjects());
    for (m, subject) in model.subjects.iter().enumerate() {
        let sm = model.subject_model(m)?;
        let (twin, t) = subject_induce_ds(&sm, subject).map_err(|e| match e {
            GrtError::DegenerateAngle { context } => GrtError::DegenerateAngle {
                context: format!("subject {m}: {context}"),
            },
            other => other,
        })?;
        twins.push(twin);
        transforms.push(t);
    }
    Ok((twins, transforms))
}

/// One subject's DS twin via the expanded element formulas.
fn subject_induce_ds(
    sm: &TwoByTwoModel,
    subject: &SubjectParams,
) -> Result<(TwoByTwoModel, AffineTransform)> {
    let (slope_x, slope_y) = (subject.bound_x.slope, subject.bound_y.slope);
    if slope_x == 0.0 && slope_y == 0.0 {
        return Ok((sm.clone(), AffineTransform::identity()));
    }
    let anchor = bound_intersection(&subject.bound_x, &subject.bound_y)?;
    let t = ds_inducing_transform(slope_x, slope_y, anchor)?;
    // The applied rotation angle is -phi (it removes the y-bound tilt phi);
    // the expanded formulas take the rotation angle directly.
    let (phi, omega) = bound_angles(slope_x, slope_y)?;
    let rot_angle = -phi;
    // (S R)_11 = sin(omega + phi) / sin(omega) with sin(omega) > 0; when it
    // is negative a reflection was composed into the transform.
    let reflected = (omega + phi).sin() < 0.0;

    let dists = sm.distributions().map(|d| {
        let theta = rotated_covariance_elements(d.covariance(), rot_angle)?;
        let psi = sheared_covariance_elements(&theta, omega)?;
        let psi = if reflected {
            // Conjugation by diag(-1, 1) negates the off-diagonal element.
            Covariance::new(psi.sxx(), -psi.sxy(), psi.syy())?
        } else {
            psi
        };
        let nu = sheared_rotated_mean(d.mean() - anchor, rot_angle, omega);
        let nu = if reflected { Vec2::new(-nu.x, nu.y) } else { nu };
        PerceptualDistribution::new(nu + anchor, psi)
    })?;

    let bx = LinearBound::x_bound(t.apply_point(subject.bound_x.point_on()).x, 0.0)?;
    let by = LinearBound::y_bound(t.apply_point(subject.bound_y.point_on()).y, 0.0)?;
    let arr: [PerceptualDistribution; 4] = dists.as_slice().try_into().expect("2x2 grid");
    Ok((TwoByTwoModel::new(arr, bx, by, *sm.constraints())?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat2;
    use crate::transforms;

    fn cov(sxx: f64, sxy: f64, syy: f64) -> Covariance {
        Covariance::new(sxx, sxy, syy).unwrap()
    }

    #[test]
    fn subject_covariance_half_lambda_doubles() {
        let g = cov(1.3, 0.4, 0.8);
        let s = subject_covariance(&g, 1.0, 0.5).unwrap();
        assert!((s.sxx() - 2.0 * g.sxx()).abs() < 1e-15);
        assert!((s.sxy() - 2.0 * g.sxy()).abs() < 1e-15);
        assert!((s.syy() - 2.0 * g.syy()).abs() < 1e-15);
    }

    #[test]
    fn subject_covariance_unit_divisors() {
        let s = subject_covariance(&Covariance::identity(), 2.0, 0.5).unwrap();
        assert!((s.sxx() - 1.0).abs() < 1e-15);
        assert!((s.syy() - 1.0).abs() < 1e-15);
        assert_eq!(s.sxy(), 0.0);
    }

    #[test]
    fn subject_covariance_direct_substitution() {
        // kappa = 1, lambda = 0.8: diagonal (1/0.8, 1/0.2) = (1.25, 5.0)
        let s = subject_covariance(&Covariance::identity(), 1.0, 0.8).unwrap();
        assert!((s.sxx() - 1.25).abs() < 1e-12);
        assert!((s.syy() - 5.0).abs() < 1e-12);
        assert_eq!(s.sxy(), 0.0);
    }

    #[test]
    fn subject_covariance_domain_errors() {
        let g = Covariance::identity();
        assert!(subject_covariance(&g, 0.0, 0.5).is_err());
        assert!(subject_covariance(&g, -1.0, 0.5).is_err());
        assert!(subject_covariance(&g, 1.0, 0.0).is_err());
        assert!(subject_covariance(&g, 1.0, 1.0).is_err());
    }

    #[test]
    fn scaling_preserves_correlation_over_grid() {
        let g = cov(1.5, -0.6, 0.9);
        let rho = g.rho();
        for i in 1..=10 {
            for j in 1..=10 {
                let kappa = 0.1 + (i as f64 - 1.0) * (10.0 - 0.1) / 9.0;
                let lambda = 0.05 + (j as f64 - 1.0) * 0.9 / 9.0;
                let s = subject_covariance(&g, kappa, lambda).unwrap();
                assert!((s.rho() - rho).abs() < 1e-12, "kappa={kappa} lambda={lambda}");
            }
        }
    }

    #[test]
    fn expanded_formulas_match_matrix_conjugation() {
        // Theta vs R Sigma R^T and Psi vs S Theta S^T over a parameter grid.
        for (i, &(sxx, sxy, syy)) in [(1.0, 0.3, 2.0), (0.4, -0.2, 0.9), (3.0, 1.1, 1.2)]
            .iter()
            .enumerate()
        {
            for k in 0..8 {
                let phi = -1.2 + 0.3 * k as f64 + 0.01 * i as f64;
                let omega = 0.4 + 0.25 * k as f64;
                let sigma = cov(sxx, sxy, syy);
                let theta = rotated_covariance_elements(&sigma, phi).unwrap();
                let (s, c) = phi.sin_cos();
                let r = Mat2::new(c, -s, s, c);
                let generic = r * sigma.to_mat2() * r.transpose();
                assert!((theta.sxx() - generic.a).abs() < 1e-13);
                assert!((theta.sxy() - generic.b).abs() < 1e-13);
                assert!((theta.syy() - generic.d).abs() < 1e-13);

                let psi = sheared_covariance_elements(&theta, omega).unwrap();
                let sh = Mat2::new(1.0, -1.0 / omega.tan(), 0.0, 1.0);
                let generic = sh * theta.to_mat2() * sh.transpose();
                assert!((psi.sxx() - generic.a).abs() < 1e-12);
                assert!((psi.sxy() - generic.b).abs() < 1e-12);
                // The 22 element is untouched by the shear.
                assert_eq!(psi.syy(), theta.syy());
            }
        }
    }

    fn demo_model(subjects: Vec<SubjectParams>) -> GrtWindModel {
        let d = |mx: f64, my: f64| {
            PerceptualDistribution::new(Vec2::new(mx, my), cov(1.0, 0.3, 1.4)).unwrap()
        };
        GrtWindModel::new(
            [d(0.0, 0.0), d(0.0, 1.0), d(1.0, 0.0), d(1.0, 1.0)],
            subjects,
            ConstraintScheme::one_distribution_fixed(),
        )
        .unwrap()
    }

    fn subject(kappa: f64, lambda: f64, sx: f64, sy: f64) -> SubjectParams {
        SubjectParams::new(
            kappa,
            lambda,
            LinearBound::x_bound(0.5, sx).unwrap(),
            LinearBound::y_bound(0.5, sy).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn subject_model_keeps_group_means() {
        let m = demo_model(vec![subject(1.7, 0.35, 0.0, 0.0)]);
        let sm = m.subject_model(0).unwrap();
        for (g, s) in m.group_distributions().iter().zip(sm.distributions().iter()) {
            assert_eq!(g.mean(), s.mean());
            assert!(s.covariance().sxx() != g.covariance().sxx());
        }
    }

    #[test]
    fn identical_subjects_give_identical_models() {
        let m = demo_model(vec![subject(1.3, 0.4, 0.1, -0.2), subject(1.3, 0.4, 0.1, -0.2)]);
        assert_eq!(m.subject_model(0).unwrap(), m.subject_model(1).unwrap());
    }

    #[test]
    fn subject_index_out_of_range() {
        let m = demo_model(vec![subject(1.0, 0.5, 0.0, 0.0)]);
        assert!(matches!(
            m.subject_model(3),
            Err(GrtError::SubjectIndex { index: 3, count: 1 })
        ));
    }

    #[test]
    fn ds_subjects_map_to_identity() {
        let m = demo_model(vec![subject(1.0, 0.5, 0.0, 0.0), subject(2.0, 0.3, 0.0, 0.0)]);
        let (twins, ts) = subject_specific_induce_ds(&m).unwrap();
        for (k, t) in ts.iter().enumerate() {
            assert!(t.is_identity());
            assert_eq!(&twins[k], &m.subject_model(k).unwrap());
        }
    }

    #[test]
    fn differing_slopes_break_universal_perception() {
        let m = demo_model(vec![subject(1.0, 0.5, 0.1, 0.2), subject(1.0, 0.5, -0.3, 0.05)]);
        let (twins, _) = subject_specific_induce_ds(&m).unwrap();
        let mut any_diff = false;
        for idx in 0..4 {
            let a = twins[0].distributions().as_slice()[idx].mean();
            let b = twins[1].distributions().as_slice()[idx].mean();
            if (a - b).norm() > 1e-9 {
                any_diff = true;
            }
        }
        assert!(any_diff, "transformed means should differ across subjects");
    }

    #[test]
    fn expanded_path_matches_generic_induce_ds() {
        let m = demo_model(vec![subject(1.4, 0.6, 0.25, -0.15)]);
        let (twins, _) = subject_specific_induce_ds(&m).unwrap();
        let sm = m.subject_model(0).unwrap();
        let (generic, _) = transforms::induce_ds(&sm).unwrap();
        for (a, b) in twins[0]
            .distributions()
            .iter()
            .zip(generic.distributions().iter())
        {
            assert!((a.mean() - b.mean()).norm() < 1e-12);
            assert!((a.covariance().sxx() - b.covariance().sxx()).abs() < 1e-12);
            assert!((a.covariance().sxy() - b.covariance().sxy()).abs() < 1e-12);
            assert!((a.covariance().syy() - b.covariance().syy()).abs() < 1e-12);
        }
    }
}
