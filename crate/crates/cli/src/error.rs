use std::path::Path;

use occbench::augment::AugmentError;
use occbench::datamodel::DataError;
use occbench::heatmap::HeatmapError;
use occbench::metrics::MetricsError;
use occbench::occlusion::OcclusionError;
use occbench::sweep::SweepError;
use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or inputs that fail validation.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } | DataError::Image { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OcclusionError> for CliError {
    fn from(e: OcclusionError) -> Self {
        match e {
            OcclusionError::InvalidSpec(_) | OcclusionError::LibraryRequired(_) | OcclusionError::MissingObject(_) => {
                CliError::Validation(e.to_string())
            }
            OcclusionError::Library(_) | OcclusionError::Cache(_) => CliError::Io(e.to_string()),
            OcclusionError::Unreachable { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<HeatmapError> for CliError {
    fn from(e: HeatmapError) -> Self {
        match e {
            HeatmapError::Io(_) => CliError::Io(e.to_string()),
            HeatmapError::Data(d) => d.into(),
            HeatmapError::Format(_) | HeatmapError::InvalidShape(_) | HeatmapError::CropMismatch { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) | MetricsError::Csv(_) => CliError::Io(e.to_string()),
            MetricsError::Json { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::InvalidConfig(_) | SweepError::MissingDegree { .. } => CliError::Validation(e.to_string()),
            SweepError::Data(d) => d.into(),
            SweepError::Occlusion(o) => o.into(),
            SweepError::Metrics(m) => m.into(),
            SweepError::Image { .. } | SweepError::Io(_) | SweepError::Csv(_) => CliError::Io(e.to_string()),
            SweepError::Geometry(_) | SweepError::Json(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        CliError::Validation(e.to_string())
    }
}
