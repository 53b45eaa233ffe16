use std::fmt::Display;

use detpipe::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Input(anyhow::Error),
    #[error("{0:#}")]
    Config(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
        }
    }

    pub fn input(msg: impl Display) -> Self {
        CliError::Input(anyhow::anyhow!("{msg}"))
    }

    pub fn config(msg: impl Display) -> Self {
        CliError::Config(anyhow::anyhow!("{msg}"))
    }
}

pub trait Classify<T> {
    fn input(self, context: impl Display) -> Result<T, CliError>;
    fn config(self, context: impl Display) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self, context: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Input(e.into().context(context.to_string())))
    }

    fn config(self, context: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.into().context(context.to_string())))
    }
}

/// Config problems exit with 2, everything else found while running a
/// stage is blamed on the input.
pub fn pipeline(e: PipelineError, context: impl Display) -> CliError {
    let wrapped = anyhow::Error::new(e);
    let is_config = matches!(wrapped.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_)));
    let wrapped = wrapped.context(context.to_string());
    if is_config {
        CliError::Config(wrapped)
    } else {
        CliError::Input(wrapped)
    }
}
