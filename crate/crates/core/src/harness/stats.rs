//! Oracle printouts and manifest summaries.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use itertools::Itertools;
use serde::Serialize;

use super::manifest::iterations;
use super::{io_err, read_manifest, EvalRow, HarnessError, ManifestRecord};
use crate::board::{Level, Pos};
use crate::curriculum::sample_space_size;
use crate::oracle;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub solvable: bool,
    pub distance: Option<usize>,
    pub plan: Option<Vec<String>>,
    pub lurd: Option<String>,
    pub expanded: usize,
    /// Distinct push states reachable from the start, if under the cap.
    pub reachable: Option<usize>,
}

/// Optimal solution of `level`, or of the subcase with the given boxes and
/// goals when both are supplied.
pub fn cmd_oracle(
    level: &Level,
    boxes: Option<Vec<Pos>>,
    goals: Option<Vec<Pos>>,
    node_limit: usize,
    reachable_cap: usize,
) -> Result<OracleReport, HarnessError> {
    let level = match (boxes, goals) {
        (None, None) => level.clone(),
        (b, g) => level
            .subcase(
                b.unwrap_or_else(|| level.initial_boxes().to_vec()),
                g.unwrap_or_else(|| level.goals().to_vec()),
            )
            .map_err(|e| HarnessError::Config(e.to_string()))?,
    };
    let start = level.initial_state();
    let r = oracle::bfs_optimal(&level, &start, node_limit)?;
    let lurd = match &r.plan {
        Some(plan) => Some(
            level
                .expand_plan(plan)
                .map_err(|e| HarnessError::InvalidPlan(e.to_string()))?,
        ),
        None => None,
    };
    let reachable = oracle::enumerate_reachable(&level, &start, reachable_cap).ok();
    Ok(OracleReport {
        solvable: r.solvable,
        distance: r.distance,
        plan: r.plan.map(|p| p.iter().map(|x| x.to_string()).collect()),
        lurd,
        expanded: r.expanded,
        reachable,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationStat {
    pub iteration: u32,
    pub m: usize,
    pub success_rate: f64,
    /// Best rate of the run so far.
    pub best_so_far: f64,
    pub unique_states_iteration: usize,
    pub unique_states_cumulative: usize,
    /// All push states reachable from any `m`-box start, when enumerable.
    pub oracle_states: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageStat {
    pub m: usize,
    pub first_iteration: u32,
    pub iterations: u32,
    /// Iterations spent in the stage up to its first rate of at least 95%.
    pub iterations_to_95: Option<u32>,
    /// Wall seconds for those iterations, from the timings sidecar.
    pub seconds_to_95: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForgettingCell {
    pub checkpoint: String,
    pub m: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub iterations: Vec<IterationStat>,
    pub stages: Vec<StageStat>,
    pub forgetting: Vec<ForgettingCell>,
}

/// Limits for the per-stage state-space baseline.
const BASELINE_SUBSETS: u128 = 256;
const BASELINE_STATES: usize = 2_000_000;

/// Summaries of a run manifest, with optional timings sidecar and eval CSV.
pub fn cmd_stats(
    manifest: &Path,
    timings: Option<&Path>,
    eval_csv: Option<&Path>,
) -> Result<StatsReport, HarnessError> {
    let records = read_manifest(manifest)?;
    let master = match &records[0] {
        ManifestRecord::Run { level, .. } => {
            Level::parse(level).map_err(|source| HarnessError::Level {
                path: manifest.to_path_buf(),
                source,
            })?
        }
        _ => unreachable!("read_manifest checks the first record"),
    };
    let seconds: BTreeMap<u32, f64> = match timings {
        Some(p) if p.exists() => fs::read_to_string(p)
            .map_err(io_err(p))?
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter_map(|v| Some((v["iteration"].as_u64()? as u32, v["seconds"].as_f64()?)))
            .collect(),
        _ => BTreeMap::new(),
    };

    let mut baselines: BTreeMap<usize, Option<usize>> = BTreeMap::new();
    let mut best = 0.0f64;
    let mut table = Vec::new();
    for it in iterations(&records) {
        best = best.max(it.success_rate);
        let oracle_states = *baselines
            .entry(it.m)
            .or_insert_with(|| stage_state_count(&master, it.m));
        table.push(IterationStat {
            iteration: it.iteration,
            m: it.m,
            success_rate: it.success_rate,
            best_so_far: best,
            unique_states_iteration: it.unique_states_iteration,
            unique_states_cumulative: it.unique_states_cumulative,
            oracle_states,
        });
    }

    let mut stages: Vec<StageStat> = Vec::new();
    for (m, group) in &iterations(&records).chunk_by(|it| it.m) {
        let group: Vec<_> = group.collect();
        let hit = group.iter().position(|it| it.success_rate >= 0.95);
        let seconds_to_95 = hit.and_then(|h| {
            group[..=h]
                .iter()
                .map(|it| seconds.get(&it.iteration).copied())
                .sum::<Option<f64>>()
        });
        stages.push(StageStat {
            m,
            first_iteration: group[0].iteration,
            iterations: group.len() as u32,
            iterations_to_95: hit.map(|h| h as u32 + 1),
            seconds_to_95,
        });
    }

    let forgetting = match eval_csv {
        Some(p) if p.exists() => {
            let mut rdr = csv::Reader::from_path(p)?;
            let mut cells: BTreeMap<(String, usize), f64> = BTreeMap::new();
            for row in rdr.deserialize::<EvalRow>() {
                let row = row?;
                // a later row for the same pair replaces an earlier one
                cells.insert((row.checkpoint, row.m), row.rate);
            }
            cells
                .into_iter()
                .map(|((checkpoint, m), rate)| ForgettingCell {
                    checkpoint,
                    m,
                    rate,
                })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(StatsReport {
        iterations: table,
        stages,
        forgetting,
    })
}

/// Number of distinct push states reachable from the starts of all `m`-box
/// subcases. Goals do not affect reachability, so only box subsets matter.
fn stage_state_count(master: &Level, m: usize) -> Option<usize> {
    let n = master.num_boxes();
    if sample_space_size(n, m) > BASELINE_SUBSETS * BASELINE_SUBSETS {
        return None;
    }
    let mut keys = HashSet::new();
    for subset in (0..n).combinations(m) {
        let boxes: Vec<Pos> = subset.iter().map(|&i| master.initial_boxes()[i]).collect();
        let goals = master.goals()[..m].to_vec();
        let sub = master.subcase(boxes, goals).ok()?;
        let states = oracle::reachable_states(&sub, &sub.initial_state(), BASELINE_STATES).ok()?;
        keys.extend(states.iter().map(|s| s.key()));
        if keys.len() > BASELINE_STATES {
            return None;
        }
    }
    Some(keys.len())
}
