use std::fmt::Display;
use std::path::Path;

use steps_core::dataset::DatasetError;
use steps_core::plan::PlanError;
use steps_core::specks::SpecksError;
use steps_core::synth::SynthError;
use thiserror::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, schema or data.
    #[error("{0}")]
    Config(String),
    /// A run that would spend more privacy budget than configured.
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Budget(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn config(msg: impl Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with a file path, keeping the class.
    pub fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Budget(m) => CliError::Budget(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
        }
    }

    /// The diagnostic as a single line.
    pub fn one_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match &e {
            DatasetError::Io(_) => CliError::Io(e.to_string()),
            DatasetError::Csv(c) if c.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        if e.is_budget_violation() {
            CliError::Budget(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        if e.is_budget_violation() {
            return CliError::Budget(e.to_string());
        }
        match e {
            SynthError::Dataset(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SpecksError> for CliError {
    fn from(e: SpecksError) -> Self {
        match e {
            SpecksError::Dataset(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}
