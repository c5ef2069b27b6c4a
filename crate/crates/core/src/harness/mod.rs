//! Experiment plumbing: configs and presets, run directories, Walker
//! patterns, loss landscapes, PCA slices and the relaxation grid search.

mod config;
mod gridsearch;
mod landscape;
mod presets;
mod run;
mod seeds;
mod walker;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::*;
pub use gridsearch::{
    hyperparam_grid, relaxed_terms, rows_from_terms, select, validity, write_rows, GridRow, HyperGrid,
    LabeledSolution, RelaxedTerms,
};
pub use landscape::{
    landscape_grid, pca_basis, pca_slice, plane_slice, random_directions, random_slice, write_cells, write_points,
    Axis, Cell, Landscape, PcaBasis, PcaSlice, Point2,
};
pub use presets::{exp1, exp2, exp3, preset, walker_4_2_1, IRREGULAR_RAAN_DEG, PRESETS, TUNING_INITS};
pub use run::*;
pub use seeds::{LegacyUniform, Seeds};
pub use walker::{walker_generate, WalkerError};

use crate::earth::TargetError;
use crate::objective::{ProblemError, SpecError};
use crate::optim::OptimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown preset '{0}'")]
    Preset(String),
    #[error("config parse: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("config write: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Walker(#[from] WalkerError),
    #[error("landscape: {0}")]
    Landscape(String),
    #[error("PCA: {0}")]
    Pca(String),
    #[error("grid search: {0}")]
    Grid(String),
    #[error("experiment {id}: {source}")]
    Run {
        id: String,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Axis of a `[landscape]` section. Bounds are degrees when `degrees` is
/// set (the default), raw θ otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub slot: usize,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    #[serde(default = "yes")]
    pub degrees: bool,
}

fn yes() -> bool {
    true
}

impl AxisSpec {
    pub fn axis(&self) -> Axis {
        let f = if self.degrees { f64::to_radians } else { |x| x };
        Axis { slot: self.slot, lower: f(self.lower), upper: f(self.upper), n: self.n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub x: AxisSpec,
    pub y: AxisSpec,
    /// Run directory whose trajectory is overlaid.
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchConfig {
    /// Four run directories or elements files, better tier first.
    pub solutions: Vec<PathBuf>,
    #[serde(default)]
    pub grid: HyperGrid,
}

/// Final elements of a run directory, or of an elements file.
pub fn load_solution(path: &Path, epoch: crate::earth::Epoch) -> Result<LabeledSolution, HarnessError> {
    let file = if path.is_dir() { path.join(run::ELEMENTS_FILE) } else { path.to_path_buf() };
    let elements: ElementsFile = run::read_json(&file)?;
    let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(LabeledSolution { label, elements: elements.final_.iter().map(|r| r.to_elements(epoch)).collect() })
}
