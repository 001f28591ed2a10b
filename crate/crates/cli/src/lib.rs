//! Experiment runners behind the `eigenscape` binary.
//!
//! Every runner is a pure function from a resolved [`ExperimentSpec`] to
//! in-memory outputs; [`write_outputs`] puts them on disk. Identical specs
//! produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

mod checks;
mod format;
mod scan;
mod scaling;
pub mod spec;

pub use checks::{run_correspond, run_probe, run_verify_expectation, CorrespondSummary};
pub use format::{fit_loglog, format_float, LogLogFit};
pub use scan::{run_landscape_scan, ScanOutput};
pub use scaling::{run_scaling, ScalingOutput, ScalingPoint, ScalingSummary};
pub use spec::{Command, DistanceKind, ExperimentSpec, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<eigenscape::Error> for CliError {
    fn from(e: eigenscape::Error) -> Self {
        use eigenscape::Error as E;
        match e {
            E::DegenerateSpectrum(_) | E::NoConvergence { .. } | E::RankDeficient { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Spec(e.to_string()),
        }
    }
}

/// Named output files of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Runs the command of a resolved spec.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutput, CliError> {
    let files = match spec.command() {
        Command::LandscapeScan => {
            let out = run_landscape_scan(spec)?;
            let mut files = Vec::new();
            if let Some(csv) = out.csv {
                files.push(("landscape.csv".to_string(), csv));
            }
            files.push(("critical_points.json".to_string(), out.critical_points));
            files
        }
        Command::Scaling => {
            let out = run_scaling(spec)?;
            vec![
                ("scaling.csv".into(), out.csv),
                ("summary.json".into(), to_json(&out.summary)),
            ]
        }
        Command::Probe => vec![("probe_report.json".into(), to_json(&run_probe(spec)?))],
        Command::VerifyExpectation => vec![("expectation.json".into(), to_json(&run_verify_expectation(spec)?))],
        Command::Correspond => vec![("correspondence.json".into(), to_json(&run_correspond(spec)?))],
    };
    Ok(RunOutput { files })
}

pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, contents) in &out.files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a spec file, resolves it and runs it, writing into `out_dir`.
pub fn run_file(
    command: Command,
    spec_path: &Path,
    out_dir: &Path,
    overrides: Overrides,
) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let spec = ExperimentSpec::from_json(&text)?.resolve(command, overrides)?;
    let out = run(&spec)?;
    write_outputs(&out, out_dir)
}
