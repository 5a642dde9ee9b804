//! Run manifests: everything needed to repeat an invocation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fastsvt_core::svt::{Backend, StopRule, SvtConfig};

use crate::args::SolverArgs;
use crate::error::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticImage {
    pub size: usize,
    pub rank: usize,
}

/// The command and its input descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Complete {
        matrix: PathBuf,
    },
    Image {
        image: Option<PathBuf>,
        synthetic: Option<SyntheticImage>,
        fraction: f64,
    },
    Ratings {
        ratings: PathBuf,
        separator: String,
        train_fraction: f64,
        early_stop_patience: Option<usize>,
    },
    Bench {
        sizes: Vec<usize>,
        backends: Vec<String>,
        rank: usize,
        fraction: f64,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Complete { .. } => "complete",
            Job::Image { .. } => "image",
            Job::Ratings { .. } => "ratings",
            Job::Bench { .. } => "bench",
        }
    }
}

/// One solver run as actually executed, after defaults were filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub label: String,
    pub backend: Backend,
    pub stop: StopRule,
    pub config: SvtConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub job: Job,
    pub solver: SolverArgs,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub trace_out: Option<PathBuf>,
    /// Derived seeds by purpose (sampling, split, synthetic input).
    pub seeds: Vec<(String, u64)>,
    pub runs: Vec<ResolvedRun>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid manifest {}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "manifest schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }
}
