use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{validate, RunConfig, Study, Tolerances};
use crate::density::CurvePoint;
use crate::density::{
    convergence_study, estimator_study, overlap_decay, theoretical_density, Extrapolation, RatioCurve,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_volume, hausdorff_measure, minkowski_ratio, outer_minkowski_curve, Grain, Point, Window};
use crate::model::GermGrainModel;
use crate::rng::derive_seed;
use crate::surface::{
    boolean_specific_area_theoretical, boundary_decomposition, contact_derivative_at_zero,
    contact_derivative_theoretical, contact_distribution, onegrain_specific_area_theoretical, specific_area,
    CatalogShape,
};

/// Shapes per parameter taken from a continuous mark law in the shape studies.
const SHAPE_NODES: usize = 2;

/// One pass/fail judgement in `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    /// Query point or shape index the assertion refers to.
    pub index: usize,
    /// `abs_diff` passes when `|estimate − oracle| ≤ tolerance`;
    /// `at_most` when `estimate ≤ oracle + tolerance`.
    pub relation: &'static str,
    pub oracle: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Assertion {
    fn abs_diff(name: &str, index: usize, oracle: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Assertion {
            name: name.into(),
            index,
            relation: "abs_diff",
            oracle,
            estimate,
            stderr,
            tolerance,
            pass: (estimate - oracle).abs() <= tolerance,
        }
    }

    fn at_most(name: &str, index: usize, bound: f64, estimate: f64, stderr: f64, tolerance: f64) -> Self {
        Assertion {
            name: name.into(),
            index,
            relation: "at_most",
            oracle: bound,
            estimate,
            stderr,
            tolerance,
            pass: estimate <= bound + tolerance,
        }
    }

    /// Band `max(sigmas·stderr, relative·|oracle|)`.
    fn monte_carlo(name: &str, index: usize, oracle: f64, est: &Extrapolation, tol: &Tolerances) -> Self {
        let tolerance = (tol.sigmas * est.stderr).max(tol.relative * oracle.abs());
        Assertion::abs_diff(name, index, oracle, est.value, est.stderr, tolerance)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub study: String,
    pub seed: u64,
    pub model_fingerprint: String,
    pub config_hash: String,
    pub replications: usize,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

/// Files and verdicts of one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

/// Float formatting shared by every CSV: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn point_columns(d: usize) -> String {
    (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn point_values(p: &Point) -> String {
    p.coords().iter().map(|&c| num(c)).collect::<Vec<_>>().join(",")
}

fn write_curve(csv: &mut String, index: usize, p: &Point, curve: &[CurvePoint]) {
    for e in curve {
        let _ = writeln!(csv, "{index},{},{},{},{}", point_values(p), num(e.r), num(e.value), num(e.stderr));
    }
}

/// Study output before it is written to disk.
pub struct StudyResult {
    pub csv: String,
    pub assertions: Vec<Assertion>,
}

/// Runs the configured study without touching the filesystem.
pub fn run_study(config: &RunConfig) -> Result<StudyResult> {
    let diagnostics = validate(config);
    if let Some(first) = diagnostics.first() {
        return Err(Error::Config { pointer: String::new(), message: first.to_string() });
    }
    let model = GermGrainModel::new(config.model.clone())?;
    match config.study {
        Study::Density => density(config, &model),
        Study::Estimator => estimator(config, &model),
        Study::Overlap => overlap(config, &model),
        Study::SpecificArea => sigma(config, &model),
        Study::Contact => contact(config, &model),
        Study::Minkowski => minkowski(config, &model),
        Study::OuterMinkowski => outer_minkowski(config, &model),
    }
}

fn point_seed(config: &RunConfig, index: usize) -> u64 {
    derive_seed(config.seed, index as u64)
}

fn density(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = format!("point,{},r,ratio,stderr\n", point_columns(model.ambient_dim()));
    let mut assertions = Vec::new();
    for (i, x) in config.points.iter().enumerate() {
        let curve = convergence_study(model, x, &config.radii, config.replications, point_seed(config, i))?;
        write_curve(&mut csv, i, x, &curve.entries);
        let truth = theoretical_density(model, x, config.steps)?;
        assertions.push(Assertion::monte_carlo("ratio_vs_theory", i, truth, &curve.extrapolate()?, &config.tolerances));
    }
    Ok(StudyResult { csv, assertions })
}

fn overlap(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = format!("point,{},r,ratio,stderr\n", point_columns(model.ambient_dim()));
    let mut assertions = Vec::new();
    for (i, x) in config.points.iter().enumerate() {
        let curve = overlap_decay(model, x, &config.radii, config.replications, point_seed(config, i))?;
        write_curve(&mut csv, i, x, &curve.entries);
        let (first, last) = (curve.entries[0], *curve.last().expect("non-empty"));
        let (ratio, stderr) = if first.value > 0.0 {
            let ratio = last.value / first.value;
            (ratio, ((last.stderr / first.value).powi(2) + (ratio * first.stderr / first.value).powi(2)).sqrt())
        } else {
            (0.0, 0.0)
        };
        assertions.push(Assertion::at_most("overlap_decay", i, config.tolerances.overlap_ratio, ratio, stderr, 0.0));
    }
    Ok(StudyResult { csv, assertions })
}

fn estimator(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let schedule = config.schedule.as_ref().ok_or_else(|| invalid("the estimator study needs a schedule"))?;
    let mut csv = format!("point,{},n,radius,estimate,stderr,abs_error\n", point_columns(model.ambient_dim()));
    let mut assertions = Vec::new();
    for (i, x) in config.points.iter().enumerate() {
        let rows = estimator_study(model, x, schedule, point_seed(config, i), config.steps)?;
        let mut errors = Vec::with_capacity(rows.len());
        for row in &rows {
            let b = ball_volume(model.codim(), row.radius)?;
            let p = (row.estimate * b).min(1.0);
            let stderr = (p * (1.0 - p) / row.n as f64).sqrt() / b;
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{},{}",
                point_values(x),
                row.n,
                num(row.radius),
                num(row.estimate),
                num(stderr),
                num(row.abs_error)
            );
            errors.push(stderr);
        }
        let truth = theoretical_density(model, x, config.steps)?;
        let (first, last) = (rows[0], *rows.last().expect("non-empty schedule"));
        let last_stderr = *errors.last().expect("non-empty schedule");
        assertions.push(Assertion::abs_diff(
            "final_estimate_vs_theory",
            i,
            truth,
            last.estimate,
            last_stderr,
            config.tolerances.estimator_relative * truth.abs(),
        ));
        assertions.push(Assertion::at_most("error_decreases", i, first.abs_error, last.abs_error, last_stderr, 0.0));
    }
    Ok(StudyResult { csv, assertions })
}

/// Closed-form specific area, when one exists for the germ law.
fn sigma_theory(model: &GermGrainModel, x: &Point, steps: usize) -> Result<Option<f64>> {
    if model.is_boolean() {
        boolean_specific_area_theoretical(model, x, steps).map(Some)
    } else if model.is_one_grain() {
        onegrain_specific_area_theoretical(model, x, steps).map(Some)
    } else {
        Ok(None)
    }
}

fn sigma(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = format!("point,{},r,ratio,stderr\n", point_columns(model.ambient_dim()));
    let mut assertions = Vec::new();
    for (i, x) in config.points.iter().enumerate() {
        let sa = specific_area(model, x, &config.radii, config.replications, point_seed(config, i))?;
        write_curve(&mut csv, i, x, &sa.curve.entries);
        if let Some(truth) = sigma_theory(model, x, config.steps)? {
            assertions.push(Assertion::monte_carlo("sigma_vs_theory", i, truth, &sa.extrapolated, &config.tolerances));
        }
    }
    Ok(StudyResult { csv, assertions })
}

fn contact(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = format!("point,{},r,h,stderr\n", point_columns(model.ambient_dim()));
    let mut assertions = Vec::new();
    for (i, x) in config.points.iter().enumerate() {
        let curve = contact_distribution(model, x, &config.radii, config.replications, point_seed(config, i))?;
        write_curve(&mut csv, i, x, &curve.entries);
        let monotone = curve.entries.windows(2).all(|w| w[0].value <= w[1].value);
        assertions.push(Assertion::at_most("monotone", i, 0.0, if monotone { 0.0 } else { 1.0 }, 0.0, 0.0));
        let slope = contact_derivative_at_zero(&curve)?;
        if model.is_boolean() || model.is_one_grain() {
            let truth = contact_derivative_theoretical(model, x, config.steps)?;
            assertions.push(Assertion::monte_carlo("derivative_vs_theory", i, truth, &slope, &config.tolerances));
        }
    }
    Ok(StudyResult { csv, assertions })
}

/// The distinct shapes of the mark law, each placed at the origin.
fn shape_grains(model: &GermGrainModel) -> Result<Vec<Grain>> {
    let d = model.ambient_dim();
    Ok(model.marks().discretize(SHAPE_NODES)?.into_iter().map(|(s, _)| Grain::new(Point::origin(d), s)).collect())
}

fn minkowski(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = String::from("shape,kind,r,ratio\n");
    let mut assertions = Vec::new();
    for (i, g) in shape_grains(model)?.iter().enumerate() {
        let mut entries = Vec::new();
        for &r in &config.radii {
            let ratio = minkowski_ratio(&g.shape, r)?;
            let _ = writeln!(csv, "{i},{},{},{}", g.shape.kind(), num(r), num(ratio));
            entries.push(CurvePoint { r, value: ratio, stderr: 0.0 });
        }
        let ext = RatioCurve::new(entries)?.extrapolate()?;
        let truth = hausdorff_measure(&g.shape);
        let tol = config.tolerances.grid_relative * truth;
        assertions.push(Assertion::abs_diff("ratio_vs_measure", i, truth, ext.value, ext.residual, tol));
    }
    Ok(StudyResult { csv, assertions })
}

fn outer_minkowski(config: &RunConfig, model: &GermGrainModel) -> Result<StudyResult> {
    let mut csv = String::from("shape,kind,r,ratio,grid_error\n");
    let mut assertions = Vec::new();
    let rmax = config.radii.iter().cloned().fold(0.0, f64::max);
    for (i, g) in shape_grains(model)?.iter().enumerate() {
        let (lo, hi) = g.bbox();
        let window = Window::new(lo, hi)?.dilate(1.25 * rmax + 0.05);
        let values = outer_minkowski_curve(std::slice::from_ref(g), &config.radii, &window, config.resolution())?;
        let mut entries = Vec::new();
        for (r, est) in values {
            let _ = writeln!(csv, "{i},{},{},{},{}", g.shape.kind(), num(r), num(est.value), num(est.error_estimate));
            entries.push(CurvePoint { r, value: est.value, stderr: est.error_estimate });
        }
        let ext = RatioCurve::new(entries)?.extrapolate()?;
        let truth = boundary_decomposition(&CatalogShape::from_grain(&g.shape)?)?.outer_minkowski_content();
        let tol = config.tolerances.grid_relative * truth;
        assertions.push(Assertion::abs_diff("outer_content_vs_decomposition", i, truth, ext.value, ext.stderr, tol));
    }
    Ok(StudyResult { csv, assertions })
}

/// Runs the study and writes `<study>.csv` and `summary.json` into `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let result = run_study(config)?;
    let model = GermGrainModel::new(config.model.clone())?;
    fs::create_dir_all(out)?;
    let csv_path = out.join(format!("{}.csv", config.study.name()));
    fs::write(&csv_path, &result.csv)?;
    let summary = Summary {
        study: config.study.name().into(),
        seed: config.seed,
        model_fingerprint: format!("{:016x}", model.fingerprint()),
        config_hash: config.hash()?,
        replications: config.replications,
        pass: result.assertions.iter().all(|a| a.pass),
        assertions: result.assertions,
    };
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(RunOutcome { csv_path, summary_path, summary })
}
