//! Append-only JSON-lines run manifest.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::curriculum::CurriculumStage;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Solved,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: u32,
    /// Box count of the boards played this iteration.
    pub m: usize,
    pub i_max: u32,
    pub episodes: usize,
    pub goal: usize,
    pub dead_end: usize,
    pub step_limit: usize,
    #[serde(rename = "loop")]
    pub loops: usize,
    pub success_rate: f64,
    pub unique_states_iteration: usize,
    pub unique_states_cumulative: usize,
    pub examples: usize,
    /// Mean minibatch loss of the last epoch; absent when nothing was trained.
    pub train_loss: Option<f64>,
    pub optimizer_steps: u64,
    /// Push plan of the first episode that solved the full instance.
    pub solution: Option<String>,
    pub checkpoint: String,
    /// Written when this is the stage's first iteration at or above 95%.
    pub stage_checkpoint: Option<String>,
    /// Curriculum state after this iteration's update.
    pub stage: CurriculumStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifestRecord {
    Run {
        version: u32,
        seed: u64,
        /// Level text as parsed by the run.
        level: String,
        config: serde_json::Value,
    },
    Iteration(IterationRecord),
    Finish {
        iterations: u32,
        solved: bool,
        reason: FinishReason,
    },
}

pub(crate) fn append_record(path: &Path, record: &ManifestRecord) -> Result<(), HarnessError> {
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(line.as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

/// Reads and checks a manifest: a single leading run record, iterations
/// numbered 1, 2, ... and at most one trailing finish record.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |reason: String| HarnessError::Manifest {
        path: path.to_path_buf(),
        reason,
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(line).map_err(|e| fail(format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    let mut expected = 1;
    for (i, rec) in records.iter().enumerate() {
        match rec {
            ManifestRecord::Run { version, .. } => {
                if i != 0 {
                    return Err(fail("run record must come first".into()));
                }
                if *version != MANIFEST_VERSION {
                    return Err(fail(format!("unsupported manifest version {version}")));
                }
            }
            ManifestRecord::Iteration(it) => {
                if i == 0 {
                    return Err(fail("missing run record".into()));
                }
                if it.iteration != expected {
                    return Err(fail(format!(
                        "expected iteration {expected}, found {}",
                        it.iteration
                    )));
                }
                if !(0.0..=1.0).contains(&it.success_rate) {
                    return Err(fail(format!(
                        "iteration {}: success rate out of range",
                        it.iteration
                    )));
                }
                expected += 1;
            }
            ManifestRecord::Finish { iterations, .. } => {
                if i + 1 != records.len() || i == 0 {
                    return Err(fail("finish record must be last".into()));
                }
                if *iterations + 1 != expected {
                    return Err(fail("finish record iteration count disagrees".into()));
                }
            }
        }
    }
    if records.is_empty() {
        return Err(fail("empty manifest".into()));
    }
    Ok(records)
}

pub(crate) fn iterations(records: &[ManifestRecord]) -> impl Iterator<Item = &IterationRecord> {
    records.iter().filter_map(|r| match r {
        ManifestRecord::Iteration(it) => Some(it),
        _ => None,
    })
}
