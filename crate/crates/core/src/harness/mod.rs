//! Run orchestration: training runs, evaluation commands and reports.

mod config;
mod eval;
mod manifest;
mod stats;
mod train;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::board::{Level, ParseError, Push, State};
use crate::curriculum::CurriculumError;
use crate::evaluator::{Evaluation, Evaluator, UniformEvaluator};
use crate::network::{Checkpoint, CheckpointError, CheckpointMeta, Network, NetworkError};
use crate::oracle::OracleError;

pub use config::{NetworkConfig, RunConfig};
pub use eval::{
    append_csv, cmd_eval, cmd_solve, cmd_value_accuracy, AccuracyOptions, AccuracyReport,
    AccuracyRow, Cohort, CohortSummary, EvalOptions, EvalRow, SolveReport,
};
pub use manifest::{
    read_manifest, FinishReason, IterationRecord, ManifestRecord, MANIFEST_VERSION,
};
pub use stats::{
    cmd_oracle, cmd_stats, ForgettingCell, IterationStat, OracleReport, StageStat, StatsReport,
};
pub use train::{cmd_train, TrainSummary};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const EXPLORED_FILE: &str = "explored.log";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_DIR: &str = "reports";

/// Process exit status for a configuration problem.
pub const EXIT_CONFIG: u8 = 2;
/// Process exit status when the instance was not solved within budget.
pub const EXIT_UNSOLVED: u8 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Level { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plan failed validation: {0}")]
    InvalidPlan(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Level { .. } => EXIT_CONFIG,
            HarnessError::Network(NetworkError::ShapeMismatch { .. }) => EXIT_CONFIG,
            HarnessError::Checkpoint {
                source: CheckpointError::VersionMismatch { .. } | CheckpointError::Network(_),
                ..
            } => EXIT_CONFIG,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_level(path: &Path) -> Result<Level, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Level::parse(&text).map_err(|source| HarnessError::Level {
        path: path.to_path_buf(),
        source,
    })
}

/// Independent stream seeds derived from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Batch = 2,
    Episode = 3,
    Train = 4,
    Eval = 5,
    Accuracy = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `stream` at (`iteration`, `index`); independent of scheduling.
pub fn derive_seed(seed: u64, iteration: u64, stream: Stream, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for part in [iteration, stream as u64, index] {
        h = splitmix64(h ^ part);
    }
    h
}

/// The guidance used by evaluation commands.
#[derive(Clone, Debug)]
pub enum Guide {
    Network(Box<Network<f32>>),
    Uniform,
}

impl Guide {
    /// Loads a checkpoint, or the uniform evaluator when `checkpoint` is
    /// `None`. Fails if the network was built for another board size.
    pub fn load(
        checkpoint: Option<&Path>,
        level: &Level,
    ) -> Result<(Guide, Option<CheckpointMeta>), HarnessError> {
        let Some(path) = checkpoint else {
            return Ok((Guide::Uniform, None));
        };
        // optimizer hyper-parameters are irrelevant for inference
        let ck = Checkpoint::load(path, 0.01, 0.9).map_err(|source| HarnessError::Checkpoint {
            path: path.to_path_buf(),
            source,
        })?;
        let shape = ck.network.shape();
        if shape.height != level.height() || shape.width != level.width() {
            return Err(NetworkError::ShapeMismatch {
                net_h: shape.height,
                net_w: shape.width,
                in_h: level.height(),
                in_w: level.width(),
            }
            .into());
        }
        Ok((Guide::Network(Box::new(ck.network)), Some(ck.meta)))
    }

    pub fn label(&self, checkpoint: Option<&Path>) -> String {
        match (self, checkpoint) {
            (Guide::Network(_), Some(p)) => p.display().to_string(),
            _ => "uniform".to_string(),
        }
    }
}

impl Evaluator for Guide {
    fn evaluate(&self, level: &Level, state: &State, legal: &[Push]) -> Evaluation {
        match self {
            Guide::Network(net) => net.evaluate(level, state, legal),
            Guide::Uniform => UniformEvaluator.evaluate(level, state, legal),
        }
    }
}

/// Replays `plan` from `start` and checks that it ends solved.
pub fn validate_plan(level: &Level, start: &State, plan: &[Push]) -> Result<(), HarnessError> {
    let mut s = start.clone();
    for (i, &push) in plan.iter().enumerate() {
        s = level
            .apply_push(&s, push)
            .map_err(|e| HarnessError::InvalidPlan(format!("push {i}: {e}")))?;
    }
    if !level.is_goal(&s) {
        return Err(HarnessError::InvalidPlan(
            "final state is not solved".into(),
        ));
    }
    Ok(())
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}
