use std::path::PathBuf;

use panelsem::panel_data::PanelDataError;
use panelsem::{CatalogError, EstimatorError, SimError};
use thiserror::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_IDENTIFICATION: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: PanelDataError },
    #[error(transparent)]
    Simulate(#[from] SimError),
    /// The report was written but at least one fit stopped short of the
    /// gradient tolerance.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    /// `module::Variant` of the underlying library error.
    pub fn source_name(&self) -> String {
        match self {
            CliError::Usage(_) => "cli::Usage".into(),
            CliError::Io { .. } => "cli::Io".into(),
            CliError::Catalog(e) => format!(
                "model_catalog::{}",
                match e {
                    CatalogError::InsufficientWaves { .. } => "InsufficientWaves",
                    CatalogError::IncompatibleProfile(_) => "IncompatibleProfile",
                    CatalogError::UnknownParameter(_) => "UnknownParameter",
                    CatalogError::MissingParameters(_) => "MissingParameters",
                    CatalogError::UnknownKind(_) => "UnknownKind",
                }
            ),
            CliError::Estimator(e) => match e {
                EstimatorError::Moments(_) => "moment_structure::MomentError",
                EstimatorError::NonPDImplied => "ml_estimator::NonPDImplied",
                EstimatorError::Underidentified { .. } => "ml_estimator::Underidentified",
                EstimatorError::WaveMismatch { .. } => "ml_estimator::WaveMismatch",
                EstimatorError::SingularSampleCovariance => "ml_estimator::SingularSampleCovariance",
                EstimatorError::SingularInformation(_) => "ml_estimator::SingularInformation",
                EstimatorError::NotConverged => "ml_estimator::NotConverged",
            }
            .into(),
            CliError::Data { source, .. } => format!(
                "panel_data::{}",
                match source {
                    PanelDataError::MissingValue { .. } => "MissingValue",
                    PanelDataError::HeaderMismatch(_) => "HeaderMismatch",
                    PanelDataError::TooFewRows(_) => "TooFewRows",
                    PanelDataError::DegenerateSample(_) => "DegenerateSample",
                    PanelDataError::Malformed(_) => "Malformed",
                    PanelDataError::Io(_) => "Io",
                }
            ),
            CliError::Simulate(e) => format!(
                "dgp_simulator::{}",
                match e {
                    SimError::NonStationary(_) => "NonStationary",
                    SimError::InvalidTheta(_) => "InvalidTheta",
                    SimError::TooFewIndividuals(_) => "TooFewIndividuals",
                }
            ),
            CliError::NotConverged(_) => "ml_estimator::NotConverged".into(),
        }
    }

    /// 1 for bad input of any kind, 2 when estimation did not converge, 3 when
    /// the model is not identified for the data at hand.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Catalog(CatalogError::InsufficientWaves { .. }) => EXIT_IDENTIFICATION,
            CliError::Estimator(EstimatorError::Underidentified { .. } | EstimatorError::SingularInformation(_)) => {
                EXIT_IDENTIFICATION
            }
            CliError::Estimator(
                EstimatorError::NotConverged | EstimatorError::NonPDImplied | EstimatorError::Moments(_),
            )
            | CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use panelsem::ModelKind;

    #[test]
    fn exit_classes() {
        let waves = CliError::from(CatalogError::InsufficientWaves { kind: ModelKind::Starts, required: 4, got: 3 });
        assert_eq!(waves.exit_code(), 3);
        assert_eq!(waves.source_name(), "model_catalog::InsufficientWaves");
        assert_eq!(CliError::NotConverged("x".into()).exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(CatalogError::IncompatibleProfile("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(EstimatorError::Underidentified { free: 3, n: 2, df: 1 }).exit_code(), 3);
    }
}
