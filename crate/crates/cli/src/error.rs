use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing {what} at {path}: {reason}")]
    MissingInput {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("{0}")]
    Core(gaitscope::Error),

    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<gaitscope::Error> for CliError {
    fn from(e: gaitscope::Error) -> Self {
        match e {
            gaitscope::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// Distinct exit status per failure family.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput { .. } => 3,
            CliError::Core(gaitscope::Error::Dimension { .. }) => 4,
            CliError::Core(_) => 5,
            CliError::Output { .. } => 6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_have_distinct_exit_codes() {
        let errs = [
            CliError::Config("x".into()),
            CliError::MissingInput {
                what: "weights",
                path: PathBuf::from("w"),
                reason: "gone".into(),
            },
            CliError::Core(gaitscope::Error::Dimension {
                what: "basis",
                expected: 8,
                got: 2,
            }),
            CliError::Output {
                path: PathBuf::from("o"),
                source: std::io::Error::other("full"),
            },
        ];
        let codes: Vec<i32> = errs.iter().map(CliError::exit_code).collect();
        assert_eq!(codes, [2, 3, 4, 6]);
        let from_core: CliError = gaitscope::Error::Config("bad".into()).into();
        assert_eq!(from_core.exit_code(), 2);
    }
}
