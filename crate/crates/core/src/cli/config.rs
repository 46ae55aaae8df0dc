use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::EstimatorSchedule;
use crate::error::{Error, Result};
use crate::geometry::{Point, Window};
use crate::model::{EnvelopeRule, GermGrainModel, ModelSpec};
use crate::pointproc::GermLaw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Density,
    Estimator,
    Overlap,
    SpecificArea,
    Contact,
    Minkowski,
    OuterMinkowski,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Density => "density",
            Study::Estimator => "estimator",
            Study::Overlap => "overlap",
            Study::SpecificArea => "specific-area",
            Study::Contact => "contact",
            Study::Minkowski => "minkowski",
            Study::OuterMinkowski => "outer-minkowski",
        }
    }

    fn needs_points(self) -> bool {
        !matches!(self, Study::Minkowski | Study::OuterMinkowski)
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Monte Carlo band in standard errors.
    pub sigmas: f64,
    /// Relative floor for Monte Carlo versus closed form.
    pub relative: f64,
    /// Relative bound on the final estimator error.
    pub estimator_relative: f64,
    /// Relative bound for grid extrapolations.
    pub grid_relative: f64,
    /// Largest allowed ratio of the last to the first overlap-curve value.
    pub overlap_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { sigmas: 4.0, relative: 0.05, estimator_relative: 0.10, grid_relative: 0.03, overlap_ratio: 0.25 }
    }
}

fn default_radii() -> Vec<f64> {
    vec![0.08, 0.04, 0.02, 0.01]
}

fn default_replications() -> usize {
    100_000
}

fn default_steps() -> usize {
    256
}

/// One batch run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub study: Study,
    #[serde(default)]
    pub points: Vec<Point>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<EstimatorSchedule>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Quadrature nodes per unit length for closed-form integrals.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Grid cells per axis for the outer Minkowski study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer: String = e
                .path()
                .iter()
                .filter_map(|s| match s {
                    serde_path_to_error::Segment::Seq { index } => Some(format!("/{index}")),
                    serde_path_to_error::Segment::Map { key } => {
                        Some(format!("/{}", key.replace('~', "~0").replace('/', "~1")))
                    }
                    _ => None,
                })
                .collect();
            Error::Config { pointer, message: e.into_inner().to_string() }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(if self.model.window.dim() == 3 { 192 } else { 2048 })
    }

    /// SHA-256 of the config without its output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        let digest = Sha256::digest(serde_json::to_vec(&c)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// A reason the config cannot run, tagged with the assumption it violates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub assumption: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.assumption, self.message)
    }
}

fn diag(assumption: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { assumption: assumption.into(), message: message.into() }
}

/// Empty iff the config is runnable.
pub fn validate(config: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let model = match GermGrainModel::new(config.model.clone()) {
        Ok(m) => Some(m),
        Err(Error::Unsupported(msg)) => {
            out.push(diag("unsupported", msg));
            None
        }
        Err(e) => {
            out.push(diag("model", e.to_string()));
            None
        }
    };
    if let Some(min) = config.model.marks.min_segment_length() {
        if min < 2.0 && config.model.envelope == EnvelopeRule::Identity {
            out.push(diag(
                "(A1) envelope",
                format!(
                    "segment marks may have length < 2 (down to {min}) with no extension rule; \
                     extend each Z(s) to length 2 with \"envelope\": \"extend_segments\""
                ),
            ));
        }
    }
    if let GermLaw::Poisson { intensity } = &config.model.germs {
        if !intensity.bound().is_finite() {
            out.push(diag("(A2) intensity", "the intensity needs a finite declared bound"));
        }
    }
    if config.replications == 0 {
        out.push(diag("config", "replications must be positive"));
    }
    if config.steps == 0 {
        out.push(diag("config", "steps must be positive"));
    }
    let d = config.model.window.dim();
    if config.study.needs_points() {
        if config.points.is_empty() {
            out.push(diag("config", format!("the {} study needs at least one query point", config.study)));
        }
        for (i, p) in config.points.iter().enumerate() {
            if p.dim() != d {
                out.push(diag("config", format!("point {i} has dimension {} but the window has {d}", p.dim())));
            }
        }
    }
    let radii_ok = !config.radii.is_empty() && config.radii.iter().all(|r| *r > 0.0 && r.is_finite());
    match config.study {
        Study::Contact => {
            if config.radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                out.push(diag("config", "contact radii must be non-negative"));
            }
        }
        Study::Estimator => {}
        _ => {
            if !radii_ok || config.radii.windows(2).any(|w| !(w[1] < w[0])) {
                out.push(diag("config", "radii must be positive and strictly decreasing"));
            }
        }
    }
    if matches!(config.study, Study::Minkowski) && config.radii.iter().any(|r| *r >= 2.0) {
        out.push(diag("config", "Minkowski ratios are computed for r < 2"));
    }
    if let Some(m) = &model {
        let lower = m.codim() > 0;
        match config.study {
            Study::Density | Study::Overlap | Study::Estimator if !lower => {
                out.push(diag("model", format!("the {} study needs lower-dimensional grains", config.study)));
            }
            _ => {}
        }
        if config.study == Study::Estimator {
            match &config.schedule {
                None => out.push(diag("config", "the estimator study needs a schedule")),
                Some(s) if lower => {
                    if let Err(e) = s.validate(m.codim()) {
                        out.push(diag("schedule", e.to_string()));
                    }
                }
                Some(_) => {}
            }
        }
    }
    if let Some(res) = config.resolution {
        if res < 16 {
            out.push(diag("config", "grid resolution must be at least 16"));
        }
    }
    out
}

/// Convenience for tests and the catalog: a window `[0, side]^d`.
pub(crate) fn cube(d: usize, side: f64) -> Window {
    Window::cube(d, side).expect("valid cube")
}
