//! Browser bindings for the GRT library.
//!
//! Each exported function takes and returns JSON strings, so the page needs
//! no generated TypeScript glue beyond the wasm-bindgen loader. A "scene" is
//! everything the canvas needs to draw one model: one-sigma ellipse points
//! per distribution, the decision bounds as slope/intercept pairs, and the
//! 4x4 response-probability matrix.
//!
//! On error every function returns `{"error": "..."}` instead of throwing,
//! so the page can display the message inline.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use grt_core::geometry::Vec2;
use grt_core::model::{
    ConstraintScheme, Covariance, LinearBound, PerceptualDistribution, TwoByTwoModel,
};
use grt_core::probability::response_probabilities;
use grt_core::transforms::{induce_ds, normalize_model, AffineTransform};
use grt_core::Result;

/// Model parameters as the demo page edits them: four distributions on a
/// 2x2 grid plus one tilted bound per dimension.
#[derive(Deserialize)]
struct ModelParams {
    /// Mean `[x, y]` for each of the four distributions (A1B1, A1B2, A2B1, A2B2).
    means: [[f64; 2]; 4],
    /// Covariance `[sxx, sxy, syy]` for each distribution.
    covariances: [[f64; 3]; 4],
    bound_x: BoundParams,
    bound_y: BoundParams,
}

#[derive(Deserialize)]
struct BoundParams {
    intercept: f64,
    slope: f64,
}

#[derive(Serialize)]
struct BoundOut {
    /// "x" for the nominally vertical bound, "y" for the horizontal one.
    dimension: &'static str,
    intercept: f64,
    slope: f64,
}

#[derive(Serialize)]
struct Scene {
    /// One closed polyline of `[x, y]` points per distribution (one-sigma
    /// equal-likelihood contour).
    ellipses: Vec<Vec<[f64; 2]>>,
    means: Vec<[f64; 2]>,
    bounds: Vec<BoundOut>,
    /// Row = stimulus (A1B1, A1B2, A2B1, A2B2), column = response.
    probabilities: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TransformOut {
    /// Row-major 2x2 linear part.
    linear: [[f64; 2]; 2],
    offset: [f64; 2],
    description: String,
}

#[derive(Serialize)]
struct TransformedScene {
    original: Scene,
    transformed: Scene,
    transforms: Vec<TransformOut>,
    /// Largest absolute difference between the two probability matrices;
    /// the whole point of the demo is that this stays at rounding error.
    max_probability_discrepancy: f64,
}

fn build_model(params: &ModelParams) -> Result<TwoByTwoModel> {
    let mut dists = Vec::with_capacity(4);
    for (m, c) in params.means.iter().zip(params.covariances.iter()) {
        dists.push(PerceptualDistribution::new(
            Vec2::new(m[0], m[1]),
            Covariance::new(c[0], c[1], c[2])?,
        )?);
    }
    let dists: [PerceptualDistribution; 4] = dists.try_into().unwrap();
    TwoByTwoModel::new(
        dists,
        LinearBound::x_bound(params.bound_x.intercept, params.bound_x.slope)?,
        LinearBound::y_bound(params.bound_y.intercept, params.bound_y.slope)?,
        ConstraintScheme::unconstrained(),
    )
}

fn scene_of(model: &TwoByTwoModel) -> Result<Scene> {
    let mut ellipses = Vec::with_capacity(4);
    let mut means = Vec::with_capacity(4);
    for dist in model.distributions().iter() {
        ellipses.push(
            dist.ellipse_points(96, 1.0)
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        );
        means.push([dist.mean().x, dist.mean().y]);
    }
    let bounds = vec![
        BoundOut {
            dimension: "x",
            intercept: model.bound_x().intercept,
            slope: model.bound_x().slope,
        },
        BoundOut {
            dimension: "y",
            intercept: model.bound_y().intercept,
            slope: model.bound_y().slope,
        },
    ];
    Ok(Scene {
        ellipses,
        means,
        bounds,
        probabilities: response_probabilities(model)?,
    })
}

fn transform_out(t: &AffineTransform) -> TransformOut {
    let l = t.linear();
    TransformOut {
        linear: [[l.a, l.b], [l.c, l.d]],
        offset: [t.offset().x, t.offset().y],
        description: format!("{:?}", t.provenance()),
    }
}

fn max_discrepancy(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn err_json(e: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": format!("{e}") }).to_string()
}

fn parse_params(json: &str) -> std::result::Result<ModelParams, String> {
    serde_json::from_str(json).map_err(|e| err_json(e))
}

/// Scene for the model exactly as parameterized (no transform applied).
#[wasm_bindgen]
pub fn model_scene(params_json: &str) -> String {
    let params = match parse_params(params_json) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let result = build_model(&params).and_then(|m| scene_of(&m));
    match result {
        Ok(scene) => serde_json::to_string(&scene).unwrap_or_else(err_json),
        Err(e) => err_json(e),
    }
}

/// Apply the decisional-separability-inducing rotation + shear and return
/// both scenes, the transform, and the predicted-probability discrepancy.
#[wasm_bindgen]
pub fn induce_ds_scene(params_json: &str) -> String {
    let params = match parse_params(params_json) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let result = build_model(&params).and_then(|model| {
        let original = scene_of(&model)?;
        let (ds_model, transform) = induce_ds(&model)?;
        let transformed = scene_of(&ds_model)?;
        let max = max_discrepancy(&original.probabilities, &transformed.probabilities);
        Ok(TransformedScene {
            original,
            transformed,
            transforms: vec![transform_out(&transform)],
            max_probability_discrepancy: max,
        })
    });
    match result {
        Ok(scene) => serde_json::to_string(&scene).unwrap_or_else(err_json),
        Err(e) => err_json(e),
    }
}

/// Induce decisional separability, then rescale every distribution to unit
/// marginal variances, stretching about the criteria so the bounds and all
/// predicted probabilities are unchanged.
#[wasm_bindgen]
pub fn normalize_scene(params_json: &str) -> String {
    let params = match parse_params(params_json) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let result = build_model(&params).and_then(|model| {
        let original = scene_of(&model)?;
        let (ds_model, ds_transform) = induce_ds(&model)?;
        let (norm_model, norm_transforms) = normalize_model(&ds_model)?;
        let transformed = scene_of(&norm_model)?;
        let max = max_discrepancy(&original.probabilities, &transformed.probabilities);
        let mut transforms = vec![transform_out(&ds_transform)];
        transforms.extend(norm_transforms.iter().map(transform_out));
        Ok(TransformedScene {
            original,
            transformed,
            transforms,
            max_probability_discrepancy: max,
        })
    });
    match result {
        Ok(scene) => serde_json::to_string(&scene).unwrap_or_else(err_json),
        Err(e) => err_json(e),
    }
}
