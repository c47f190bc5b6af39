//! File formats: the JSON model schema and the CSV confusion-matrix layout.
//!
//! Models are stored as a tagged JSON object (`"class"` is one of `"2x2"`,
//! `"multibound"`, `"grtwind"`); covariances are `[sxx, sxy, syy]`, means
//! `[x, y]`. Serialization uses shortest round-trip float formatting, so a
//! write/read cycle reproduces every parameter bit for bit.
//!
//! Confusion matrices are plain CSV: a `stimulus` column followed by one
//! integer count column per response label.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GrtError, Result};
use crate::geometry::Vec2;
use crate::grtwind::{GrtWindModel, SubjectParams};
use crate::model::{
    ConfusionMatrix, ConstraintScheme, Covariance, DistGrid, LinearBound, MultiBoundKind,
    MultiBoundModel, PerceptualDistribution, TwoByTwoModel,
};
use crate::GrtModel;

#[derive(Serialize, Deserialize)]
struct DistDto {
    mean: [f64; 2],
    covariance: [f64; 3],
}

impl DistDto {
    fn from_dist(d: &PerceptualDistribution) -> Self {
        let c = d.covariance();
        DistDto {
            mean: [d.mean().x, d.mean().y],
            covariance: [c.sxx(), c.sxy(), c.syy()],
        }
    }

    fn to_dist(&self) -> Result<PerceptualDistribution> {
        PerceptualDistribution::new(
            Vec2::new(self.mean[0], self.mean[1]),
            Covariance::new(self.covariance[0], self.covariance[1], self.covariance[2])?,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SubjectDto {
    kappa: f64,
    lambda: f64,
    bound_x: LinearBound,
    bound_y: LinearBound,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "class")]
enum ModelDto {
    #[serde(rename = "2x2")]
    TwoByTwo {
        distributions: Vec<DistDto>,
        bound_x: LinearBound,
        bound_y: LinearBound,
        constraints: ConstraintScheme,
    },
    #[serde(rename = "multibound")]
    MultiBound {
        kind: MultiBoundKind,
        grid: [usize; 2],
        distributions: Vec<DistDto>,
        bounds_x: Vec<LinearBound>,
        bounds_y: Vec<LinearBound>,
        constraints: ConstraintScheme,
    },
    #[serde(rename = "grtwind")]
    GrtWind {
        group: Vec<DistDto>,
        subjects: Vec<SubjectDto>,
        constraints: ConstraintScheme,
    },
}

fn to_dto(model: &GrtModel) -> ModelDto {
    match model {
        GrtModel::TwoByTwo(m) => ModelDto::TwoByTwo {
            distributions: m.distributions().iter().map(DistDto::from_dist).collect(),
            bound_x: *m.bound_x(),
            bound_y: *m.bound_y(),
            constraints: *m.constraints(),
        },
        GrtModel::MultiBound(m) => ModelDto::MultiBound {
            kind: m.kind(),
            grid: [m.distributions().nx(), m.distributions().ny()],
            distributions: m.distributions().iter().map(DistDto::from_dist).collect(),
            bounds_x: m.bounds_x().to_vec(),
            bounds_y: m.bounds_y().to_vec(),
            constraints: *m.constraints(),
        },
        GrtModel::GrtWind(m) => ModelDto::GrtWind {
            group: m
                .group_distributions()
                .iter()
                .map(DistDto::from_dist)
                .collect(),
            subjects: m
                .subjects()
                .iter()
                .map(|s| SubjectDto {
                    kappa: s.kappa(),
                    lambda: s.lambda(),
                    bound_x: *s.bound_x(),
                    bound_y: *s.bound_y(),
                })
                .collect(),
            constraints: *m.constraints(),
        },
    }
}

fn from_dto(dto: ModelDto) -> Result<GrtModel> {
    match dto {
        ModelDto::TwoByTwo {
            distributions,
            bound_x,
            bound_y,
            constraints,
        } => {
            let dists = distributions
                .iter()
                .map(DistDto::to_dist)
                .collect::<Result<Vec<_>>>()?;
            let arr: [PerceptualDistribution; 4] =
                dists.try_into().map_err(|v: Vec<_>| GrtError::ShapeMismatch {
                    what: "2x2 distributions".into(),
                    expected: "4".into(),
                    got: format!("{}", v.len()),
                })?;
            Ok(GrtModel::TwoByTwo(TwoByTwoModel::new(
                arr, bound_x, bound_y, constraints,
            )?))
        }
        ModelDto::MultiBound {
            kind,
            grid,
            distributions,
            bounds_x,
            bounds_y,
            constraints,
        } => {
            let dists = distributions
                .iter()
                .map(DistDto::to_dist)
                .collect::<Result<Vec<_>>>()?;
            Ok(GrtModel::MultiBound(MultiBoundModel::new(
                kind,
                DistGrid::new(grid[0], grid[1], dists)?,
                bounds_x,
                bounds_y,
                constraints,
            )?))
        }
        ModelDto::GrtWind {
            group,
            subjects,
            constraints,
        } => {
            let dists = group
                .iter()
                .map(DistDto::to_dist)
                .collect::<Result<Vec<_>>>()?;
            let arr: [PerceptualDistribution; 4] =
                dists.try_into().map_err(|v: Vec<_>| GrtError::ShapeMismatch {
                    what: "group distributions".into(),
                    expected: "4".into(),
                    got: format!("{}", v.len()),
                })?;
            let subj = subjects
                .into_iter()
                .map(|s| SubjectParams::new(s.kappa, s.lambda, s.bound_x, s.bound_y))
                .collect::<Result<Vec<_>>>()?;
            Ok(GrtModel::GrtWind(GrtWindModel::new(arr, subj, constraints)?))
        }
    }
}

pub fn model_to_json(model: &GrtModel) -> Result<String> {
    serde_json::to_string_pretty(&to_dto(model))
        .map_err(|e| GrtError::Parse(format!("model serialization failed: {e}")))
}

pub fn model_from_json(text: &str) -> Result<GrtModel> {
    let dto: ModelDto =
        serde_json::from_str(text).map_err(|e| GrtError::Parse(format!("model JSON: {e}")))?;
    from_dto(dto)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<GrtModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GrtError::Io(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}

pub fn write_model(path: impl AsRef<Path>, model: &GrtModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)? + "\n")
        .map_err(|e| GrtError::Io(format!("{}: {e}", path.display())))
}

pub fn confusion_to_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("stimulus");
    for r in cm.response_labels() {
        out.push(',');
        out.push_str(r);
    }
    out.push('\n');
    for (label, row) in cm.stimulus_labels().iter().zip(cm.counts()) {
        out.push_str(label);
        for n in row {
            out.push(',');
            out.push_str(&n.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn confusion_from_csv(text: &str) -> Result<ConfusionMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| GrtError::Parse("empty confusion matrix file".into()))?;
    let mut cols = header.split(',').map(str::trim);
    match cols.next() {
        Some("stimulus") => {}
        other => {
            return Err(GrtError::Parse(format!(
                "confusion matrix header must start with 'stimulus', got {other:?}"
            )))
        }
    }
    let response_labels: Vec<String> = cols.map(String::from).collect();
    if response_labels.is_empty() {
        return Err(GrtError::Parse("confusion matrix has no response columns".into()));
    }
    let mut stimulus_labels = Vec::new();
    let mut counts = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let mut fields = line.split(',').map(str::trim);
        let label = fields.next().unwrap_or("");
        if label.is_empty() {
            return Err(GrtError::Parse(format!(
                "row {}: missing stimulus label",
                lineno + 2
            )));
        }
        let row = fields
            .map(|f| {
                f.parse::<u64>().map_err(|_| {
                    GrtError::Parse(format!(
                        "row {} ('{}'): '{}' is not a nonnegative integer count",
                        lineno + 2,
                        label,
                        f
                    ))
                })
            })
            .collect::<Result<Vec<u64>>>()?;
        stimulus_labels.push(label.to_string());
        counts.push(row);
    }
    ConfusionMatrix::new(counts, stimulus_labels, response_labels)
}

pub fn read_confusion(path: impl AsRef<Path>) -> Result<ConfusionMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GrtError::Io(format!("{}: {e}", path.display())))?;
    confusion_from_csv(&text)
}

pub fn write_confusion(path: impl AsRef<Path>, cm: &ConfusionMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, confusion_to_csv(cm))
        .map_err(|e| GrtError::Io(format!("{}: {e}", path.display())))
}
