//! Gaussian general recognition theory (GRT) models: construction,
//! simulation, maximum-likelihood fitting, and the equivalence
//! transformations that demonstrate which model properties are not
//! identifiable from identification-confusion data.
//!
//! The library covers three model classes:
//!
//! * the standard 2x2 identification model,
//! * multi-bound models (concurrent ratings and n x m identification), and
//! * the multilevel GRTwIND model with per-subject scaling, attention
//!   weights, and decision bounds.
//!
//! For each class the `transforms` and `grtwind` modules produce
//! "equivalence twins": structurally different models with identical
//! predicted response probabilities. The `identifiability` module counts
//! degrees of freedom and certifies the twins numerically; `fitting`
//! provides multinomial maximum-likelihood estimation and seeded
//! simulation.

pub mod error;
pub mod fitting;
pub mod geometry;
pub mod grtwind;
pub mod identifiability;
pub mod io;
pub mod model;
pub mod probability;
pub mod transforms;

pub use error::{GrtError, Result};

use grtwind::GrtWindModel;
use model::{MultiBoundModel, TwoByTwoModel};

/// A model of any class; the unit of serialization, fitting, and
/// transformation at the tool level.
#[derive(Clone, Debug, PartialEq)]
pub enum GrtModel {
    TwoByTwo(TwoByTwoModel),
    MultiBound(MultiBoundModel),
    GrtWind(GrtWindModel),
}

impl GrtModel {
    pub fn class_name(&self) -> &'static str {
        match self {
            GrtModel::TwoByTwo(_) => "2x2",
            GrtModel::MultiBound(_) => "multibound",
            GrtModel::GrtWind(_) => "grtwind",
        }
    }
}
