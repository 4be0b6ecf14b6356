//! Configuration, orchestration and artifact emission for a multiverse run.

pub mod artifacts;
pub mod config;
pub mod curve;
pub mod run;

use thiserror::Error;

pub use artifacts::{load_view, write_artifacts, ArtifactView, Manifest, ManifestPath};
pub use config::{CurveSort, RunConfig};
pub use curve::{curve_csv, curve_svg, strip_generator, CurveData};
pub use run::{execute, RunOptions, RunState};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Universe(#[from] crate::universe::UniverseError),
    #[error(transparent)]
    Inconsistency(#[from] crate::inconsistency::InconsistencyError),
    #[error("every path failed: {0}")]
    AllPathsFailed(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
