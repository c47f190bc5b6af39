//! Domain types for perceptual distributions, decision bounds, and the
//! single-subject model classes, plus the PI / PS / DS predicates.
//!
//! Conventions fixed here and used everywhere else:
//!
//! * Stimulus and response grids are indexed row-major with the x-level `i`
//!   outer and the y-level `j` inner: flat index `i * ny + j`.
//! * A `YBound` is the line `y = intercept + slope * x`; an `XBound` is the
//!   line `x = intercept + slope * y`. Slope zero is the exactly
//!   representable axis-aligned case, so no infinite slopes arise.

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::geometry::{Mat2, Vec2};

/// Tolerance for PI/PS predicates on normalized quantities. Constructed
/// models satisfy these exactly; fitted or transformed models only to
/// floating-point accuracy.
pub const PREDICATE_TOL: f64 = 1e-12;

/// A bivariate Gaussian representing noisy perception of one stimulus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptualDistribution {
    mean: Vec2,
    covariance: Covariance,
}

/// Symmetric positive-definite 2x2 covariance, stored as the three free
/// elements so symmetry holds by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl Covariance {
    pub fn new(sxx: f64, sxy: f64, syy: f64) -> Result<Self> {
        if !(sxx.is_finite() && sxy.is_finite() && syy.is_finite()) {
            return Err(GrtError::NonFinite {
                context: "covariance".into(),
            });
        }
        let det = sxx * syy - sxy * sxy;
        if sxx <= 0.0 || syy <= 0.0 || det <= 0.0 {
            return Err(GrtError::NotPositiveDefinite {
                context: "covariance".into(),
                sxx,
                sxy,
                syy,
            });
        }
        Ok(Covariance { sxx, sxy, syy })
    }

    pub fn identity() -> Self {
        Covariance {
            sxx: 1.0,
            sxy: 0.0,
            syy: 1.0,
        }
    }

    pub fn sxx(&self) -> f64 {
        self.sxx
    }

    pub fn sxy(&self) -> f64 {
        self.sxy
    }

    pub fn syy(&self) -> f64 {
        self.syy
    }

    /// Correlation sxy / (sqrt(sxx) * sqrt(syy)). The factored form keeps
    /// the value bit-identical between a covariance and the correlation
    /// matrix produced from it.
    pub fn rho(&self) -> f64 {
        self.sxy / (self.sxx.sqrt() * self.syy.sqrt())
    }

    pub fn det(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    pub fn to_mat2(&self) -> Mat2 {
        Mat2::new(self.sxx, self.sxy, self.sxy, self.syy)
    }

    /// Build from a matrix that is symmetric up to rounding; off-diagonal
    /// entries are averaged.
    pub fn from_mat2(m: Mat2) -> Result<Self> {
        Covariance::new(m.a, 0.5 * (m.b + m.c), m.d)
    }
}

impl PerceptualDistribution {
    pub fn new(mean: Vec2, covariance: Covariance) -> Result<Self> {
        if !mean.is_finite() {
            return Err(GrtError::NonFinite {
                context: "distribution mean".into(),
            });
        }
        Ok(PerceptualDistribution { mean, covariance })
    }

    pub fn standard() -> Self {
        PerceptualDistribution {
            mean: Vec2::ZERO,
            covariance: Covariance::identity(),
        }
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    /// Points on the `k_sigma` equal-likelihood ellipse, for plotting.
    pub fn ellipse_points(&self, n: usize, k_sigma: f64) -> Vec<Vec2> {
        // Cholesky factor of the covariance.
        let l11 = self.covariance.sxx.sqrt();
        let l21 = self.covariance.sxy / l11;
        let l22 = (self.covariance.syy - l21 * l21).sqrt();
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
                let (s, c) = t.sin_cos();
                Vec2::new(
                    self.mean.x + k_sigma * l11 * c,
                    self.mean.y + k_sigma * (l21 * c + l22 * s),
                )
            })
            .collect()
    }
}

/// Which axis a bound nominally partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundOrientation {
    /// Nominally vertical; the line `x = intercept + slope * y`.
    XBound,
    /// Nominally horizontal; the line `y = intercept + slope * x`.
    YBound,
}

/// An oriented line partitioning the perceptual plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBound {
    pub orientation: BoundOrientation,
    pub intercept: f64,
    pub slope: f64,
}

impl LinearBound {
    pub fn new(orientation: BoundOrientation, intercept: f64, slope: f64) -> Result<Self> {
        if !(intercept.is_finite() && slope.is_finite()) {
            return Err(GrtError::NonFinite {
                context: "decision bound".into(),
            });
        }
        Ok(LinearBound {
            orientation,
            intercept,
            slope,
        })
    }

    pub fn x_bound(intercept: f64, slope: f64) -> Result<Self> {
        Self::new(BoundOrientation::XBound, intercept, slope)
    }

    pub fn y_bound(intercept: f64, slope: f64) -> Result<Self> {
        Self::new(BoundOrientation::YBound, intercept, slope)
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.slope == 0.0
    }

    /// Direction vector of the line.
    pub fn direction(&self) -> Vec2 {
        match self.orientation {
            BoundOrientation::XBound => Vec2::new(self.slope, 1.0),
            BoundOrientation::YBound => Vec2::new(1.0, self.slope),
        }
    }

    /// Signed evaluation: positive on the high-response side of the bound.
    pub fn side_value(&self, p: Vec2) -> f64 {
        match self.orientation {
            BoundOrientation::XBound => p.x - (self.intercept + self.slope * p.y),
            BoundOrientation::YBound => p.y - (self.intercept + self.slope * p.x),
        }
    }

    /// A point on the line (the axis intercept).
    pub fn point_on(&self) -> Vec2 {
        match self.orientation {
            BoundOrientation::XBound => Vec2::new(self.intercept, 0.0),
            BoundOrientation::YBound => Vec2::new(0.0, self.intercept),
        }
    }
}

/// Intersection of an x-bound and a y-bound. Fails when the two lines are
/// parallel (direction vectors linearly dependent, i.e. slope_x * slope_y = 1).
pub fn bound_intersection(bx: &LinearBound, by: &LinearBound) -> Result<Vec2> {
    debug_assert_eq!(bx.orientation, BoundOrientation::XBound);
    debug_assert_eq!(by.orientation, BoundOrientation::YBound);
    let denom = 1.0 - bx.slope * by.slope;
    if denom.abs() < 1e-12 {
        return Err(GrtError::DegenerateAngle {
            context: "x-bound and y-bound are parallel".into(),
        });
    }
    let y = (by.intercept + by.slope * bx.intercept) / denom;
    let x = bx.intercept + bx.slope * y;
    Ok(Vec2::new(x, y))
}

/// How identifiability is pinned down before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocationFix {
    MeanAtOrigin { index: usize },
    BoundIntersectionAtOrigin,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScaleFix {
    UnitVariancesOneDistribution { index: usize },
    UnitVariancesAll,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OrthogonalityFix {
    AssumeDs,
    FixPerceptualMeans,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintScheme {
    pub location_fix: LocationFix,
    pub scale_fix: ScaleFix,
    pub orthogonality_fix: OrthogonalityFix,
}

impl ConstraintScheme {
    /// The conventional single-subject 2x2 scheme: one mean at the origin,
    /// all marginal variances fixed at one, decisional separability assumed.
    pub fn conventional_two_by_two() -> Self {
        ConstraintScheme {
            location_fix: LocationFix::MeanAtOrigin { index: 0 },
            scale_fix: ScaleFix::UnitVariancesAll,
            orthogonality_fix: OrthogonalityFix::AssumeDs,
        }
    }

    /// The multi-bound / GRTwIND convention: one mean at the origin, unit
    /// variances in that distribution only.
    pub fn one_distribution_fixed() -> Self {
        ConstraintScheme {
            location_fix: LocationFix::MeanAtOrigin { index: 0 },
            scale_fix: ScaleFix::UnitVariancesOneDistribution { index: 0 },
            orthogonality_fix: OrthogonalityFix::AssumeDs,
        }
    }

    pub fn unconstrained() -> Self {
        ConstraintScheme {
            location_fix: LocationFix::None,
            scale_fix: ScaleFix::None,
            orthogonality_fix: OrthogonalityFix::None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.location_fix != LocationFix::None
            && self.scale_fix != ScaleFix::None
            && self.orthogonality_fix != OrthogonalityFix::None
    }
}

/// Rectangular grid of perceptual distributions indexed by stimulus level
/// (i over x-levels outer, j over y-levels inner).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistGrid {
    nx: usize,
    ny: usize,
    dists: Vec<PerceptualDistribution>,
}

impl DistGrid {
    pub fn new(nx: usize, ny: usize, dists: Vec<PerceptualDistribution>) -> Result<Self> {
        if dists.len() != nx * ny {
            return Err(GrtError::ShapeMismatch {
                what: "distribution grid".into(),
                expected: format!("{} distributions ({}x{})", nx * ny, nx, ny),
                got: format!("{}", dists.len()),
            });
        }
        Ok(DistGrid { nx, ny, dists })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, i: usize, j: usize) -> &PerceptualDistribution {
        &self.dists[i * self.ny + j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PerceptualDistribution> {
        self.dists.iter()
    }

    pub fn as_slice(&self) -> &[PerceptualDistribution] {
        &self.dists
    }

    pub fn map(&self, f: impl FnMut(&PerceptualDistribution) -> Result<PerceptualDistribution>) -> Result<DistGrid> {
        let dists = self.dists.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(DistGrid {
            nx: self.nx,
            ny: self.ny,
            dists,
        })
    }
}

/// The standard 2x2 identification model: four distributions, one bound per
/// dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoByTwoModel {
    distributions: DistGrid,
    bound_x: LinearBound,
    bound_y: LinearBound,
    constraints: ConstraintScheme,
}

impl TwoByTwoModel {
    pub fn new(
        distributions: [PerceptualDistribution; 4],
        bound_x: LinearBound,
        bound_y: LinearBound,
        constraints: ConstraintScheme,
    ) -> Result<Self> {
        check_orientations(&[bound_x], &[bound_y])?;
        // Non-parallel bounds: direction vectors must be linearly independent.
        if bound_x.direction().cross(bound_y.direction()).abs() < 1e-12 {
            return Err(GrtError::DegenerateAngle {
                context: "2x2 model bounds are parallel".into(),
            });
        }
        Ok(TwoByTwoModel {
            distributions: DistGrid::new(2, 2, distributions.to_vec())?,
            bound_x,
            bound_y,
            constraints,
        })
    }

    pub fn distribution(&self, i: usize, j: usize) -> &PerceptualDistribution {
        self.distributions.get(i, j)
    }

    pub fn bound_x(&self) -> &LinearBound {
        &self.bound_x
    }

    pub fn bound_y(&self) -> &LinearBound {
        &self.bound_y
    }

    pub fn constraints(&self) -> &ConstraintScheme {
        &self.constraints
    }

    pub fn distributions(&self) -> &DistGrid {
        &self.distributions
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiBoundKind {
    ConcurrentRatings,
    NxMIdentification,
}

/// Concurrent ratings or n x m identification model: two or more parallel
/// bounds per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBoundModel {
    kind: MultiBoundKind,
    distributions: DistGrid,
    bounds_x: Vec<LinearBound>,
    bounds_y: Vec<LinearBound>,
    constraints: ConstraintScheme,
}

impl MultiBoundModel {
    pub fn new(
        kind: MultiBoundKind,
        distributions: DistGrid,
        bounds_x: Vec<LinearBound>,
        bounds_y: Vec<LinearBound>,
        constraints: ConstraintScheme,
    ) -> Result<Self> {
        if bounds_x.is_empty() || bounds_y.is_empty() {
            return Err(GrtError::ShapeMismatch {
                what: "multi-bound model".into(),
                expected: "at least one bound per dimension".into(),
                got: format!("{} x-bounds, {} y-bounds", bounds_x.len(), bounds_y.len()),
            });
        }
        check_orientations(&bounds_x, &bounds_y)?;
        check_family("x", &bounds_x)?;
        check_family("y", &bounds_y)?;
        match kind {
            MultiBoundKind::ConcurrentRatings => {
                if distributions.nx() != 2 || distributions.ny() != 2 {
                    return Err(GrtError::ShapeMismatch {
                        what: "concurrent ratings distributions".into(),
                        expected: "2x2 grid".into(),
                        got: format!("{}x{}", distributions.nx(), distributions.ny()),
                    });
                }
            }
            MultiBoundKind::NxMIdentification => {
                let (nx, ny) = (bounds_x.len() + 1, bounds_y.len() + 1);
                if distributions.nx() != nx || distributions.ny() != ny {
                    return Err(GrtError::ShapeMismatch {
                        what: "n x m identification distributions".into(),
                        expected: format!("{}x{} grid (one per response region)", nx, ny),
                        got: format!("{}x{}", distributions.nx(), distributions.ny()),
                    });
                }
            }
        }
        Ok(MultiBoundModel {
            kind,
            distributions,
            bounds_x,
            bounds_y,
            constraints,
        })
    }

    pub fn kind(&self) -> MultiBoundKind {
        self.kind
    }

    pub fn distributions(&self) -> &DistGrid {
        &self.distributions
    }

    pub fn bounds_x(&self) -> &[LinearBound] {
        &self.bounds_x
    }

    pub fn bounds_y(&self) -> &[LinearBound] {
        &self.bounds_y
    }

    pub fn constraints(&self) -> &ConstraintScheme {
        &self.constraints
    }

    /// Number of response levels on each dimension.
    pub fn response_levels(&self) -> (usize, usize) {
        (self.bounds_x.len() + 1, self.bounds_y.len() + 1)
    }
}

fn check_orientations(bounds_x: &[LinearBound], bounds_y: &[LinearBound]) -> Result<()> {
    for b in bounds_x {
        if b.orientation != BoundOrientation::XBound {
            return Err(GrtError::ShapeMismatch {
                what: "bound orientation".into(),
                expected: "XBound in the x family".into(),
                got: format!("{:?}", b.orientation),
            });
        }
    }
    for b in bounds_y {
        if b.orientation != BoundOrientation::YBound {
            return Err(GrtError::ShapeMismatch {
                what: "bound orientation".into(),
                expected: "YBound in the y family".into(),
                got: format!("{:?}", b.orientation),
            });
        }
    }
    Ok(())
}

fn check_family(dim: &'static str, bounds: &[LinearBound]) -> Result<()> {
    let slope = bounds[0].slope;
    if bounds.iter().any(|b| b.slope != slope) {
        return Err(GrtError::NonParallelBounds { dimension: dim });
    }
    for w in bounds.windows(2) {
        if w[1].intercept <= w[0].intercept {
            return Err(GrtError::UnorderedBounds { dimension: dim });
        }
    }
    Ok(())
}

/// Integer counts of response-by-stimulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    stimulus_labels: Vec<String>,
    response_labels: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(
        counts: Vec<Vec<u64>>,
        stimulus_labels: Vec<String>,
        response_labels: Vec<String>,
    ) -> Result<Self> {
        if counts.len() != stimulus_labels.len() {
            return Err(GrtError::ShapeMismatch {
                what: "confusion matrix rows".into(),
                expected: format!("{}", stimulus_labels.len()),
                got: format!("{}", counts.len()),
            });
        }
        for (s, row) in counts.iter().enumerate() {
            if row.len() != response_labels.len() {
                return Err(GrtError::ShapeMismatch {
                    what: format!("confusion matrix row {s}"),
                    expected: format!("{} columns", response_labels.len()),
                    got: format!("{}", row.len()),
                });
            }
            if row.iter().sum::<u64>() == 0 {
                return Err(GrtError::Domain(format!(
                    "stimulus '{}' has zero presentations",
                    stimulus_labels[s]
                )));
            }
        }
        Ok(ConfusionMatrix {
            counts,
            stimulus_labels,
            response_labels,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn stimulus_labels(&self) -> &[String] {
        &self.stimulus_labels
    }

    pub fn response_labels(&self) -> &[String] {
        &self.response_labels
    }

    pub fn n_stimuli(&self) -> usize {
        self.counts.len()
    }

    pub fn n_responses(&self) -> usize {
        self.response_labels.len()
    }

    pub fn total_trials(&self) -> u64 {
        self.counts.iter().map(|r| r.iter().sum::<u64>()).sum()
    }
}

/// Grid labels of the form `A1B1, A1B2, ...` (i outer, j inner).
pub fn grid_labels(prefix_x: char, prefix_y: char, nx: usize, ny: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(nx * ny);
    for i in 1..=nx {
        for j in 1..=ny {
            out.push(format!("{prefix_x}{i}{prefix_y}{j}"));
        }
    }
    out
}

/// Common view over the single-subject model classes, used by the
/// predicates, the probability pipeline, and the equivalence transforms.
pub trait SingleSubjectModel: Clone {
    fn distributions(&self) -> &DistGrid;
    fn bounds_x(&self) -> &[LinearBound];
    fn bounds_y(&self) -> &[LinearBound];

    /// Rebuild the same model class from transformed parts.
    fn rebuild(
        &self,
        distributions: DistGrid,
        bounds_x: Vec<LinearBound>,
        bounds_y: Vec<LinearBound>,
    ) -> Result<Self>;
}

impl SingleSubjectModel for TwoByTwoModel {
    fn distributions(&self) -> &DistGrid {
        &self.distributions
    }

    fn bounds_x(&self) -> &[LinearBound] {
        std::slice::from_ref(&self.bound_x)
    }

    fn bounds_y(&self) -> &[LinearBound] {
        std::slice::from_ref(&self.bound_y)
    }

    fn rebuild(
        &self,
        distributions: DistGrid,
        bounds_x: Vec<LinearBound>,
        bounds_y: Vec<LinearBound>,
    ) -> Result<Self> {
        let dists: [PerceptualDistribution; 4] = distributions
            .as_slice()
            .try_into()
            .map_err(|_| GrtError::ShapeMismatch {
                what: "2x2 distributions".into(),
                expected: "4".into(),
                got: format!("{}", distributions.as_slice().len()),
            })?;
        TwoByTwoModel::new(dists, bounds_x[0], bounds_y[0], self.constraints)
    }
}

impl SingleSubjectModel for MultiBoundModel {
    fn distributions(&self) -> &DistGrid {
        &self.distributions
    }

    fn bounds_x(&self) -> &[LinearBound] {
        &self.bounds_x
    }

    fn bounds_y(&self) -> &[LinearBound] {
        &self.bounds_y
    }

    fn rebuild(
        &self,
        distributions: DistGrid,
        bounds_x: Vec<LinearBound>,
        bounds_y: Vec<LinearBound>,
    ) -> Result<Self> {
        MultiBoundModel::new(self.kind, distributions, bounds_x, bounds_y, self.constraints)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    X,
    Y,
}

/// Perceptual independence per distribution: zero within-stimulus
/// correlation.
pub fn check_pi<M: SingleSubjectModel>(model: &M) -> Vec<bool> {
    model
        .distributions()
        .iter()
        .map(|d| d.covariance().rho().abs() <= PREDICATE_TOL)
        .collect()
}

/// Perceptual separability on a dimension: the marginal mean and variance on
/// that dimension are constant across levels of the other dimension.
pub fn check_ps<M: SingleSubjectModel>(model: &M, dimension: Dimension) -> bool {
    let grid = model.distributions();
    let marginal = |d: &PerceptualDistribution| match dimension {
        Dimension::X => (d.mean().x, d.covariance().sxx()),
        Dimension::Y => (d.mean().y, d.covariance().syy()),
    };
    let pooled_var = grid.iter().map(|d| marginal(d).1).sum::<f64>() / (grid.as_slice().len() as f64);
    let scale = pooled_var.sqrt();
    // For each level on `dimension`, compare marginals across levels of the
    // other dimension.
    let (outer, inner) = match dimension {
        Dimension::X => (grid.nx(), grid.ny()),
        Dimension::Y => (grid.ny(), grid.nx()),
    };
    for level in 0..outer {
        let at = |other: usize| match dimension {
            Dimension::X => grid.get(level, other),
            Dimension::Y => grid.get(other, level),
        };
        let (m0, v0) = marginal(at(0));
        for other in 1..inner {
            let (m, v) = marginal(at(other));
            if ((m - m0) / scale).abs() > PREDICATE_TOL
                || ((v - v0) / pooled_var).abs() > PREDICATE_TOL
            {
                return false;
            }
        }
    }
    true
}

/// Decisional separability per dimension: every bound on the dimension is
/// axis-aligned (slope exactly zero).
pub fn check_ds<M: SingleSubjectModel>(model: &M) -> (bool, bool) {
    (
        model.bounds_x().iter().all(|b| b.is_axis_aligned()),
        model.bounds_y().iter().all(|b| b.is_axis_aligned()),
    )
}
