//! Solving and evaluation commands.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{derive_seed, io_err, thread_pool, validate_plan, Guide, HarnessError, Stream};
use crate::board::{Level, Pos, State};
use crate::curriculum::{generate_batch, sample_subcase};
use crate::evaluator::{Evaluator, UNIFORM_VALUE};
use crate::oracle::{self, OracleError};
use crate::search::{run_episode, Outcome, SearchConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub solved: bool,
    pub outcome: Outcome,
    pub pushes: usize,
    /// Pushes as `(row,col)Direction`.
    pub plan: Vec<String>,
    /// Full move string (lowercase walks, uppercase pushes) when solved.
    pub lurd: Option<String>,
    pub moves: Option<usize>,
    pub evaluations: u64,
}

/// One greedy episode on the full instance. A reported plan has been
/// replayed to a solved state.
pub fn cmd_solve(
    level: &Level,
    guide: &Guide,
    search: &SearchConfig,
    seed: u64,
) -> Result<SolveReport, HarnessError> {
    let search = search.clone().greedy();
    search
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let start = level.initial_state();
    let ep = run_episode(level, start.clone(), guide, &search, seed);
    let plan = ep.plan();
    let solved = ep.outcome == Outcome::Goal;
    let lurd = if solved {
        validate_plan(level, &start, &plan)?;
        Some(
            level
                .expand_plan(&plan)
                .map_err(|e| HarnessError::InvalidPlan(e.to_string()))?,
        )
    } else {
        None
    };
    Ok(SolveReport {
        solved,
        outcome: ep.outcome,
        pushes: plan.len(),
        plan: plan.iter().map(|p| p.to_string()).collect(),
        moves: lurd.as_ref().map(|s| s.len()),
        lurd,
        evaluations: ep.evaluations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub search: SearchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub m: usize,
    pub samples: usize,
    pub goal: usize,
    pub dead_end: usize,
    pub step_limit: usize,
    #[serde(rename = "loop")]
    pub loops: usize,
    pub rate: f64,
}

/// Success rate of greedy episodes on `samples` random `m`-box subcases.
pub fn cmd_eval(
    level: &Level,
    guide: &Guide,
    label: &str,
    opts: &EvalOptions,
) -> Result<EvalRow, HarnessError> {
    let n = level.num_boxes();
    if opts.m == 0 || opts.m > n {
        return Err(HarnessError::Config(format!("m must be in 1..={n}")));
    }
    if opts.samples == 0 {
        return Err(HarnessError::Config("samples must be positive".into()));
    }
    let search = opts.search.clone().greedy();
    search
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0, Stream::Eval, opts.m as u64));
    let boards = generate_batch(level, opts.m, opts.samples, &mut rng)?;

    // greedy episodes never consult the RNG, so equal boards give equal
    // outcomes and each distinct subcase is played once
    let mut distinct: Vec<&Level> = Vec::new();
    let mut slot: HashMap<(Vec<Pos>, Vec<Pos>), usize> = HashMap::new();
    let which: Vec<usize> = boards
        .iter()
        .map(|b| {
            *slot
                .entry((b.initial_boxes().to_vec(), b.goals().to_vec()))
                .or_insert_with(|| {
                    distinct.push(b);
                    distinct.len() - 1
                })
        })
        .collect();
    let pool = thread_pool(opts.workers)?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        distinct
            .par_iter()
            .map(|b| run_episode(b, b.initial_state(), guide, &search, 0).outcome)
            .collect()
    });
    let count = |o: Outcome| which.iter().filter(|&&i| outcomes[i] == o).count();
    let goal = count(Outcome::Goal);
    Ok(EvalRow {
        checkpoint: label.to_string(),
        m: opts.m,
        samples: boards.len(),
        goal,
        dead_end: count(Outcome::DeadEnd),
        step_limit: count(Outcome::StepLimit),
        loops: count(Outcome::Loop),
        rate: goal as f64 / boards.len() as f64,
    })
}

/// Appends serialized rows to a CSV file, writing the header if the file is
/// new.
pub fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let new = !path.exists() || fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(new).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    /// Curriculum subcases moved a few random pushes from their start.
    Near,
    /// Boxes placed uniformly over all floor cells.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyOptions {
    pub m: usize,
    /// Rows wanted per cohort.
    pub samples: usize,
    pub seed: u64,
    /// Upper bound on the random pushes applied to near-cohort states.
    pub near_pushes: usize,
    /// Scale for turning values into push counts.
    pub i_max: u32,
    pub node_limit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub cohort: Cohort,
    /// Network value times `i_max`.
    pub predicted: f64,
    /// The uniform evaluator's prediction, `0.5 * i_max`.
    pub baseline: f64,
    pub distance: usize,
    /// Whether the top prior push starts some optimal plan.
    pub policy_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CohortSummary {
    pub cohort: Cohort,
    pub rows: usize,
    /// Candidates skipped because the oracle hit its node limit.
    pub dropped_limit: usize,
    /// Candidates skipped as unsolvable, dead, or already solved.
    pub dropped_filtered: usize,
    pub mae: f64,
    pub baseline_mae: f64,
    pub policy_top1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    pub summaries: Vec<CohortSummary>,
}

/// Compares predicted remaining pushes with oracle distances on two cohorts
/// of solvable, non-dead, unsolved states.
pub fn cmd_value_accuracy<E: Evaluator + ?Sized>(
    level: &Level,
    evaluator: &E,
    opts: &AccuracyOptions,
) -> Result<AccuracyReport, HarnessError> {
    let n = level.num_boxes();
    if opts.m == 0 || opts.m > n {
        return Err(HarnessError::Config(format!("m must be in 1..={n}")));
    }
    if opts.samples == 0 || opts.i_max == 0 {
        return Err(HarnessError::Config(
            "samples and i_max must be positive".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for cohort in [Cohort::Near, Cohort::Random] {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0, Stream::Accuracy, cohort as u64));
        let mut kept = Vec::new();
        let (mut dropped_limit, mut dropped_filtered) = (0, 0);
        let max_attempts = 50 * opts.samples;
        for _ in 0..max_attempts {
            if kept.len() == opts.samples {
                break;
            }
            let (sub, state) = match cohort {
                Cohort::Near => near_candidate(level, opts.m, opts.near_pushes, &mut rng)?,
                Cohort::Random => random_candidate(level, opts.m, &mut rng)?,
            };
            if sub.is_goal(&state) || sub.is_dead(&state) {
                dropped_filtered += 1;
                continue;
            }
            let first = match oracle::bfs_optimal(&sub, &state, opts.node_limit) {
                Ok(r) if r.solvable => r.distance.unwrap(),
                Ok(_) => {
                    dropped_filtered += 1;
                    continue;
                }
                Err(OracleError::LimitExceeded { .. }) => {
                    dropped_limit += 1;
                    continue;
                }
            };
            let optimal = oracle::optimal_first_pushes(&sub, &state, opts.node_limit)?;
            let legal = sub.legal_pushes(&state);
            let eval = evaluator.evaluate(&sub, &state, &legal);
            let (h, w) = (sub.height(), sub.width());
            // first push with the largest prior, in canonical push order
            let top = legal
                .iter()
                .copied()
                .fold(None, |best: Option<(crate::board::Push, f64)>, p| {
                    let q = eval.prior(p, h, w);
                    match best {
                        Some((_, bq)) if bq >= q => best,
                        _ => Some((p, q)),
                    }
                })
                .map(|(p, _)| p)
                .expect("non-dead state has a legal push");
            kept.push(AccuracyRow {
                cohort,
                predicted: eval.value * opts.i_max as f64,
                baseline: UNIFORM_VALUE * opts.i_max as f64,
                distance: first,
                policy_match: optimal.contains(&top),
            });
        }
        let k = kept.len().max(1) as f64;
        summaries.push(CohortSummary {
            cohort,
            rows: kept.len(),
            dropped_limit,
            dropped_filtered,
            mae: kept
                .iter()
                .map(|r| (r.predicted - r.distance as f64).abs())
                .sum::<f64>()
                / k,
            baseline_mae: kept
                .iter()
                .map(|r| (r.baseline - r.distance as f64).abs())
                .sum::<f64>()
                / k,
            policy_top1: kept.iter().filter(|r| r.policy_match).count() as f64 / k,
        });
        rows.extend(kept);
    }
    Ok(AccuracyReport { rows, summaries })
}

fn near_candidate<R: Rng>(
    level: &Level,
    m: usize,
    max_pushes: usize,
    rng: &mut R,
) -> Result<(Level, State), HarnessError> {
    let sub = sample_subcase(level, m, rng)?;
    let mut state = sub.initial_state();
    let k = rng.gen_range(0..=max_pushes);
    for _ in 0..k {
        let legal = sub.legal_pushes(&state);
        let Some(&p) = legal.choose(rng) else { break };
        state = sub.apply_push(&state, p).expect("legal push");
    }
    Ok((sub, state))
}

fn random_candidate<R: Rng>(
    level: &Level,
    m: usize,
    rng: &mut R,
) -> Result<(Level, State), HarnessError> {
    let template = sample_subcase(level, m, rng)?;
    let cells: Vec<Pos> = level
        .floor_cells()
        .filter(|&p| p != level.player_start())
        .collect();
    let boxes: Vec<Pos> = index::sample(rng, cells.len(), m)
        .into_iter()
        .map(|i| cells[i])
        .collect();
    let sub = level
        .subcase(boxes, template.goals().to_vec())
        .expect("distinct floor cells away from the player");
    let state = sub.initial_state();
    Ok((sub, state))
}
