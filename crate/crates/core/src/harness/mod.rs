//! Seeded Monte-Carlo sweeps: config files, trial execution, and CSV/JSON
//! result files.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod presets;

pub use config::{load_config, parse_config, ExperimentSpec, GammaSpec, Scheme, Stage, SweepAxis, SweepValue};
pub use experiment::{
    run_experiment, run_trial, trial_rng, ExperimentOutcome, RunOptions, SweepRow, TrialRecord, SUMMARY_HEADER,
};
pub use oracle::{run_oracle, OracleEntry, OracleReport};
pub use presets::{preset, preset_names, presets, Preset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid experiment: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl HarnessError {
    /// Process exit code for this error: 2 for config problems, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) => 4,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
