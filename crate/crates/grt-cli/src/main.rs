//! `grt-kit`: fit, simulate, transform, audit, and equivalence-check GRT
//! models from the command line.
//!
//! Models are JSON (see the library's `io` module for the schema), confusion
//! matrices are CSV. Every command is a pure function of its inputs and
//! flags; seeds default to 0 so repeated runs are byte-identical.
//!
//! Exit codes: 0 success, 1 domain error (invalid model, failed
//! precondition, identifiability gate), 2 I/O or parse error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use grt_core::fitting::{
    fit, likelihood_twin_check, log_likelihood, simulate, FitClass, FitOptions,
};
use grt_core::identifiability::{audit, equivalence_certificate, AuditTarget, TwinModel};
use grt_core::io;
use grt_core::model::{
    ConfusionMatrix, ConstraintScheme, LocationFix, MultiBoundKind, OrthogonalityFix, ScaleFix,
};
use grt_core::transforms::{induce_ds, normalize_model};
use grt_core::{GrtError, GrtModel};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "grt-kit", version, about = "General recognition theory modeling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to confusion-matrix data by maximum likelihood.
    Fit(FitArgs),
    /// Simulate confusion matrices from a model.
    Simulate(SimulateArgs),
    /// Apply an equivalence transformation to a model.
    Transform(TransformArgs),
    /// Degrees-of-freedom and identifiability audit for a model class.
    Audit(AuditArgs),
    /// Produce equivalence twins of a model and verify their predictions.
    EquivCheck(EquivCheckArgs),
    /// Compare the log-likelihood of a model and its decisionally
    /// separable twin on the same data.
    TwinCheck(TwinCheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    #[value(name = "2x2")]
    TwoByTwo,
    ConcurrentRatings,
    Nxm,
    Grtwind,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Mean of the first distribution at the origin, all marginal variances
    /// one, decisional separability assumed.
    Conventional,
    /// Mean of the first distribution at the origin, unit variances in that
    /// distribution only, decisional separability assumed.
    OneFixed,
    /// Bound intersection at the origin, all marginal variances one,
    /// decisional separability assumed (2x2 only).
    OriginBounds,
}

impl SchemeArg {
    fn to_scheme(self) -> ConstraintScheme {
        match self {
            SchemeArg::Conventional => ConstraintScheme::conventional_two_by_two(),
            SchemeArg::OneFixed => ConstraintScheme::one_distribution_fixed(),
            SchemeArg::OriginBounds => ConstraintScheme {
                location_fix: LocationFix::BoundIntersectionAtOrigin,
                scale_fix: ScaleFix::UnitVariancesAll,
                orthogonality_fix: OrthogonalityFix::AssumeDs,
            },
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Confusion-matrix CSV file(s); one per subject for grtwind.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum)]
    class: ClassArg,
    /// Response levels on the x dimension (multi-bound classes).
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Response levels on the y dimension (multi-bound classes).
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 4000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the fitted model JSON.
    #[arg(long)]
    out_model: PathBuf,
    /// Where to write the fit report JSON (default: stdout).
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON file.
    model: PathBuf,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; for grtwind models, `-s<k>` is inserted before the
    /// extension for subject k.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformOp {
    InduceDs,
    Normalize,
}

#[derive(Args)]
struct TransformArgs {
    /// Model JSON file.
    model: PathBuf,
    #[arg(long, value_enum)]
    op: TransformOp,
    #[arg(long)]
    out_model: PathBuf,
    /// Where to write the affine transform(s) as JSON.
    #[arg(long)]
    out_transform: Option<PathBuf>,
    /// Write equal-likelihood ellipse points of the distributions before
    /// and after the transform as plot-ready CSV.
    #[arg(long)]
    emit_ellipses: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum)]
    class: ClassArg,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    subjects: usize,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Machine-readable JSON instead of the human-readable report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EquivCheckArgs {
    /// Model JSON file.
    model: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TwinCheckArgs {
    /// Model JSON file.
    model: PathBuf,
    /// Confusion-matrix CSV file(s); one per subject for grtwind.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("GRT_KIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                GrtError::Io(_) | GrtError::Parse(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<(), GrtError> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Transform(args) => cmd_transform(args),
        Command::Audit(args) => cmd_audit(args),
        Command::EquivCheck(args) => cmd_equiv_check(args),
        Command::TwinCheck(args) => cmd_twin_check(args),
    }
}

fn default_scheme(class: ClassArg) -> SchemeArg {
    match class {
        ClassArg::TwoByTwo => SchemeArg::Conventional,
        _ => SchemeArg::OneFixed,
    }
}

fn fit_class(class: ClassArg, n: usize, m: usize, n_subjects: usize) -> Result<FitClass, GrtError> {
    let bounds = |levels: usize, dim: &str| {
        if levels < 2 {
            Err(GrtError::InvalidSpec(format!(
                "{dim} needs at least two response levels, got {levels}"
            )))
        } else {
            Ok(levels - 1)
        }
    };
    Ok(match class {
        ClassArg::TwoByTwo => FitClass::TwoByTwo,
        ClassArg::ConcurrentRatings => FitClass::MultiBound {
            kind: MultiBoundKind::ConcurrentRatings,
            n_bounds_x: bounds(n, "--n")?,
            n_bounds_y: bounds(m, "--m")?,
        },
        ClassArg::Nxm => FitClass::MultiBound {
            kind: MultiBoundKind::NxMIdentification,
            n_bounds_x: bounds(n, "--n")?,
            n_bounds_y: bounds(m, "--m")?,
        },
        ClassArg::Grtwind => FitClass::GrtWind {
            subjects: n_subjects,
        },
    })
}

fn read_data(paths: &[PathBuf]) -> Result<Vec<ConfusionMatrix>, GrtError> {
    paths.iter().map(io::read_confusion).collect()
}

fn cmd_fit(args: FitArgs) -> Result<(), GrtError> {
    let data = read_data(&args.data)?;
    let class = fit_class(args.class, args.n, args.m, data.len())?;
    let scheme = args.scheme.unwrap_or(default_scheme(args.class)).to_scheme();
    let options = FitOptions {
        restarts: args.restarts,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        seed: args.seed,
        ..FitOptions::default()
    };
    let result = fit(&data, class, scheme, &options)?;
    io::write_model(&args.out_model, &result.model)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "log_likelihood": result.log_likelihood,
        "n_free_parameters": result.n_free_parameters,
        "n_trials": result.n_trials,
        "aic": result.aic,
        "bic": result.bic,
        "converged": result.converged,
        "n_restarts_used": result.n_restarts_used,
        "gradient_norm_at_solution": result.gradient_norm_at_solution,
        "dof_report": result.dof_report,
        "fitted_model_path": args.out_model,
    });
    emit_json(&report, args.out_report.as_deref())
}

fn with_subject_suffix(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}-s{k}.{ext}"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), GrtError> {
    let model = io::read_model(&args.model)?;
    let matrices = simulate(&model, args.trials, args.seed)?;
    if matrices.len() == 1 {
        io::write_confusion(&args.out, &matrices[0])?;
        println!("wrote {}", args.out.display());
    } else {
        for (k, cm) in matrices.iter().enumerate() {
            let path = with_subject_suffix(&args.out, k);
            io::write_confusion(&path, cm)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn ellipse_csv(models: &[(&str, &GrtModel)]) -> String {
    let mut out = String::from("model,distribution,point,x,y\n");
    for (tag, model) in models {
        let grids: Vec<_> = match model {
            GrtModel::TwoByTwo(m) => vec![m.distributions().clone()],
            GrtModel::MultiBound(m) => vec![m.distributions().clone()],
            GrtModel::GrtWind(m) => vec![m.group_distributions().clone()],
        };
        for grid in grids {
            for (d_idx, dist) in grid.iter().enumerate() {
                for (p_idx, p) in dist.ellipse_points(64, 1.0).iter().enumerate() {
                    out.push_str(&format!("{tag},{d_idx},{p_idx},{},{}\n", p.x, p.y));
                }
            }
        }
    }
    out
}

fn cmd_transform(args: TransformArgs) -> Result<(), GrtError> {
    let model = io::read_model(&args.model)?;
    let (out_model, transforms_json) = match (args.op, &model) {
        (TransformOp::InduceDs, GrtModel::TwoByTwo(m)) => {
            let (out, t) = induce_ds(m)?;
            (GrtModel::TwoByTwo(out), json!([t]))
        }
        (TransformOp::InduceDs, GrtModel::MultiBound(m)) => {
            let (out, t) = induce_ds(m)?;
            (GrtModel::MultiBound(out), json!([t]))
        }
        (TransformOp::InduceDs, GrtModel::GrtWind(_)) => {
            return Err(GrtError::InvalidSpec(
                "GRTwIND induction is per subject and leaves the model class; use equiv-check"
                    .into(),
            ));
        }
        (TransformOp::Normalize, GrtModel::TwoByTwo(m)) => {
            let (out, ts) = normalize_model(m)?;
            (GrtModel::TwoByTwo(out), json!(ts))
        }
        (TransformOp::Normalize, _) => {
            return Err(GrtError::InvalidSpec(
                "mean-variance normalization is defined for the 2x2 class only".into(),
            ));
        }
    };
    io::write_model(&args.out_model, &out_model)?;
    println!("wrote {}", args.out_model.display());
    if let Some(path) = &args.out_transform {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "transforms": transforms_json,
        });
        write_text(path, &pretty(&doc)?)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.emit_ellipses {
        let csv = ellipse_csv(&[("original", &model), ("transformed", &out_model)]);
        write_text(path, &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), GrtError> {
    let target = match args.class {
        ClassArg::TwoByTwo => AuditTarget::TwoByTwo,
        ClassArg::ConcurrentRatings => AuditTarget::ConcurrentRatings {
            n: args.n,
            m: args.m,
        },
        ClassArg::Nxm => AuditTarget::NxMIdentification {
            n: args.n,
            m: args.m,
        },
        ClassArg::Grtwind => AuditTarget::GrtWind {
            subjects: args.subjects,
        },
    };
    let scheme = args.scheme.unwrap_or(default_scheme(args.class)).to_scheme();
    let report = audit(target, &scheme)?;
    if args.json {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "report": report,
        });
        println!("{}", pretty(&doc)?);
    } else {
        println!("class:                 {:?}", report.target);
        println!("data degrees of freedom: {}", report.data_dof);
        println!(
            "free parameters:       {} ({} perceptual + {} decisional + {} scaling)",
            report.free_parameters,
            report.perceptual_parameters,
            report.decisional_parameters,
            report.scaling_parameters
        );
        println!(
            "identifiable under scheme: {}",
            if report.identifiable_under_scheme { "yes" } else { "no" }
        );
        println!("notes: {}", report.notes);
    }
    Ok(())
}

fn cmd_equiv_check(args: EquivCheckArgs) -> Result<(), GrtError> {
    let model = io::read_model(&args.model)?;
    let cert = equivalence_certificate(&model)?;
    if args.json {
        let twins: Vec<_> = cert
            .twins
            .iter()
            .map(|t| {
                json!({
                    "description": t.description,
                    "max_abs_probability_discrepancy": t.max_abs_probability_discrepancy,
                    "n_transforms": t.transforms.len(),
                })
            })
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "twins": twins,
            "universal_perception_violated": cert.universal_perception_violated,
        });
        println!("{}", pretty(&doc)?);
    } else {
        for t in &cert.twins {
            let n = match &t.model {
                TwinModel::PerSubject(ms) => ms.len(),
                _ => 1,
            };
            println!(
                "{} ({} model{}): max abs probability discrepancy {:.3e}",
                t.description,
                n,
                if n == 1 { "" } else { "s" },
                t.max_abs_probability_discrepancy
            );
        }
        if let Some(v) = cert.universal_perception_violated {
            println!(
                "universal perception in the separable image: {}",
                if v { "violated" } else { "holds" }
            );
        }
    }
    Ok(())
}

fn cmd_twin_check(args: TwinCheckArgs) -> Result<(), GrtError> {
    let model = io::read_model(&args.model)?;
    let data = read_data(&args.data)?;
    let report = likelihood_twin_check(&model, &data)?;
    // Sanity: the original likelihood equals a direct evaluation.
    debug_assert!(
        (report.original_log_likelihood - log_likelihood(&model, &data).unwrap()).abs() < 1e-9
    );
    if args.json {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "original_log_likelihood": report.original_log_likelihood,
            "twin_log_likelihood": report.twin_log_likelihood,
            "per_table_delta": report.per_table_delta,
            "max_abs_delta": report.max_abs_delta,
        });
        println!("{}", pretty(&doc)?);
    } else {
        println!("log-likelihood (original): {:.6}", report.original_log_likelihood);
        println!("log-likelihood (DS twin):  {:.6}", report.twin_log_likelihood);
        println!("max |delta| per table:     {:.3e}", report.max_abs_delta);
    }
    Ok(())
}

fn pretty(doc: &serde_json::Value) -> Result<String, GrtError> {
    serde_json::to_string_pretty(doc).map_err(|e| GrtError::Parse(format!("{e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), GrtError> {
    std::fs::write(path, text).map_err(|e| GrtError::Io(format!("{}: {e}", path.display())))
}

fn emit_json(doc: &serde_json::Value, path: Option<&Path>) -> Result<(), GrtError> {
    let text = pretty(doc)?;
    match path {
        Some(p) => {
            write_text(p, &(text + "\n"))?;
            println!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}
