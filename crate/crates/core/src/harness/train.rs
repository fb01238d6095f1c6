//! The generate / explore / train loop.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::manifest::{append_record, iterations};
use super::{
    derive_seed, io_err, load_level, read_manifest, thread_pool, validate_plan, FinishReason,
    HarnessError, IterationRecord, ManifestRecord, RunConfig, Stream, CHECKPOINT_DIR,
    EXPLORED_FILE, MANIFEST_FILE, MANIFEST_VERSION, TIMINGS_FILE,
};
use crate::board::Level;
use crate::curriculum::{generate_batch, update_stage, CurriculumStage};
use crate::network::{train_iteration, Checkpoint, CheckpointMeta, NetShape, Network, Sgd};
use crate::search::{extract_training_examples, run_episode, Episode, Outcome, SearchConfig};

/// Stage success rate at which a stage snapshot checkpoint is kept.
const SNAPSHOT_RATE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub solved: bool,
    pub iterations: u32,
    pub output_dir: PathBuf,
    pub stage: CurriculumStage,
    pub solution: Option<String>,
}

struct RunState {
    net: Network<f32>,
    opt: Sgd<f32>,
    stage: CurriculumStage,
    explored: HashSet<u64>,
    snapshots: HashSet<usize>,
    done: u32,
}

/// Runs (or with `resume`, continues) the training loop described by
/// `config`, writing the manifest, checkpoints and sidecar files under
/// `config.output_dir`.
pub fn cmd_train(config: &RunConfig, resume: bool) -> Result<TrainSummary, HarnessError> {
    config.validate()?;
    let master = load_level(&config.level)?;
    let level_text = master.render(&master.initial_state());
    let out = config.output_dir.clone();
    let manifest_path = out.join(MANIFEST_FILE);
    let pool = thread_pool(config.workers)?;

    let mut state = if manifest_path.exists() {
        if !resume {
            return Err(HarnessError::Config(format!(
                "{} already exists; pass --resume to continue it",
                manifest_path.display()
            )));
        }
        match restore(config, &master, &level_text, &manifest_path)? {
            Restored::Running(s) => *s,
            Restored::Finished(summary) => return Ok(summary),
        }
    } else {
        fresh(config, &master, &level_text, &manifest_path)?
    };

    let n = master.num_boxes();
    while state.done < config.max_iterations {
        let iteration = state.done + 1;
        let started = Instant::now();
        let stage = state.stage.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, iteration as u64, Stream::Batch, 0));
        let boards = generate_batch(
            &master,
            stage.m,
            config.curriculum.boards_per_iteration,
            &mut rng,
        )?;
        let search = SearchConfig {
            i_max: stage.i_max,
            ..config.search.clone()
        };

        let net = &state.net;
        let episodes: Vec<Episode> = pool.install(|| {
            boards
                .par_iter()
                .enumerate()
                .map(|(i, board)| {
                    let seed =
                        derive_seed(config.seed, iteration as u64, Stream::Episode, i as u64);
                    run_episode(board, board.initial_state(), net, &search, seed)
                })
                .collect()
        });

        let count = |o: Outcome| episodes.iter().filter(|e| e.outcome == o).count();
        let goal = count(Outcome::Goal);
        let rate = goal as f64 / episodes.len() as f64;

        let mut fresh_keys: Vec<u64> = Vec::new();
        let mut this_iteration: HashSet<u64> = HashSet::new();
        for ep in &episodes {
            for &k in &ep.explored {
                if this_iteration.insert(k) && state.explored.insert(k) {
                    fresh_keys.push(k);
                }
            }
        }

        let solution = if stage.m == n {
            episodes
                .iter()
                .zip(&boards)
                .find(|(e, _)| e.outcome == Outcome::Goal)
                .map(|(e, board)| -> Result<String, HarnessError> {
                    validate_plan(board, &e.start, &e.plan())?;
                    board
                        .expand_plan(&e.plan())
                        .map_err(|e| HarnessError::InvalidPlan(e.to_string()))
                })
                .transpose()?
        } else {
            None
        };

        let examples: Vec<_> = boards
            .iter()
            .zip(&episodes)
            .flat_map(|(b, e)| extract_training_examples(b, e))
            .collect();
        let train_loss = if examples.is_empty() {
            None
        } else {
            let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                iteration as u64,
                Stream::Train,
                0,
            ));
            let (net, opt) = (&mut state.net, &mut state.opt);
            let report =
                pool.install(|| train_iteration(net, opt, &examples, &config.train, &mut trng));
            report.epoch_losses.last().copied()
        };

        let next = update_stage(&stage, rate, &config.curriculum);
        let ckpt = Checkpoint {
            network: state.net.clone(),
            optimizer: Some(state.opt.clone()),
            meta: CheckpointMeta {
                stage_m: stage.m as u32,
                iteration,
                i_max: stage.i_max,
            },
        };
        let rel = format!("{CHECKPOINT_DIR}/iter_{iteration:04}.ckpt");
        save_checkpoint(&ckpt, &out.join(&rel))?;
        let stage_checkpoint = if rate >= SNAPSHOT_RATE && state.snapshots.insert(stage.m) {
            let rel = format!("{CHECKPOINT_DIR}/stage_{}.ckpt", stage.m);
            save_checkpoint(&ckpt, &out.join(&rel))?;
            Some(rel)
        } else {
            None
        };
        append_explored(&out.join(EXPLORED_FILE), iteration, &fresh_keys)?;

        let record = IterationRecord {
            iteration,
            m: stage.m,
            i_max: stage.i_max,
            episodes: episodes.len(),
            goal,
            dead_end: count(Outcome::DeadEnd),
            step_limit: count(Outcome::StepLimit),
            loops: count(Outcome::Loop),
            success_rate: rate,
            unique_states_iteration: this_iteration.len(),
            unique_states_cumulative: state.explored.len(),
            examples: examples.len(),
            train_loss,
            optimizer_steps: state.opt.steps,
            solution: solution.clone(),
            checkpoint: rel,
            stage_checkpoint,
            stage: next.clone(),
        };
        append_record(&manifest_path, &ManifestRecord::Iteration(record))?;
        let seconds = started.elapsed().as_secs_f64();
        append_line(
            &out.join(TIMINGS_FILE),
            &serde_json::json!({"iteration": iteration, "seconds": seconds}).to_string(),
        )?;
        info!(
            "iteration {iteration}: m={} rate={rate:.3} goal={goal}/{} loss={} ({seconds:.1}s)",
            stage.m,
            episodes.len(),
            train_loss.map_or("-".into(), |l| format!("{l:.4}")),
        );
        state.stage = next;
        state.done = iteration;

        if solution.is_some() {
            return finish(&manifest_path, &out, state, true, solution);
        }
    }
    finish(&manifest_path, &out, state, false, None)
}

fn finish(
    manifest: &Path,
    out: &Path,
    state: RunState,
    solved: bool,
    solution: Option<String>,
) -> Result<TrainSummary, HarnessError> {
    append_record(
        manifest,
        &ManifestRecord::Finish {
            iterations: state.done,
            solved,
            reason: if solved {
                FinishReason::Solved
            } else {
                FinishReason::BudgetExhausted
            },
        },
    )?;
    Ok(TrainSummary {
        solved,
        iterations: state.done,
        output_dir: out.to_path_buf(),
        stage: state.stage,
        solution,
    })
}

fn fresh(
    config: &RunConfig,
    master: &Level,
    level_text: &str,
    manifest: &Path,
) -> Result<RunState, HarnessError> {
    let out = &config.output_dir;
    fs::create_dir_all(out.join(CHECKPOINT_DIR)).map_err(io_err(out))?;
    for stale in [EXPLORED_FILE, TIMINGS_FILE] {
        let p = out.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    append_record(
        manifest,
        &ManifestRecord::Run {
            version: MANIFEST_VERSION,
            seed: config.seed,
            level: level_text.to_string(),
            config: config.snapshot(),
        },
    )?;
    let shape = NetShape::new(
        master.height(),
        master.width(),
        config.network.channels,
        config.network.blocks,
    );
    Ok(RunState {
        net: Network::new(shape, derive_seed(config.seed, 0, Stream::Init, 0)),
        opt: Sgd::new(
            shape.param_count(),
            config.train.learning_rate,
            config.train.momentum,
        ),
        stage: CurriculumStage::initial(&config.curriculum, master.num_boxes()),
        explored: HashSet::new(),
        snapshots: HashSet::new(),
        done: 0,
    })
}

enum Restored {
    Running(Box<RunState>),
    Finished(TrainSummary),
}

fn restore(
    config: &RunConfig,
    master: &Level,
    level_text: &str,
    manifest: &Path,
) -> Result<Restored, HarnessError> {
    let out = &config.output_dir;
    let records = read_manifest(manifest)?;
    let mismatch = |what: &str| {
        HarnessError::Config(format!(
            "cannot resume: {what} differs from the existing run"
        ))
    };
    if let ManifestRecord::Run {
        seed,
        level,
        config: snap,
        ..
    } = &records[0]
    {
        if *seed != config.seed {
            return Err(mismatch("seed"));
        }
        if level != level_text {
            return Err(mismatch("level"));
        }
        if *snap != config.snapshot() {
            return Err(mismatch("config"));
        }
    }
    let last = iterations(&records).last().cloned();
    let done = last.as_ref().map_or(0, |r| r.iteration);
    if let Some(ManifestRecord::Finish {
        iterations,
        solved,
        reason,
    }) = records.last()
    {
        if *reason == FinishReason::BudgetExhausted && config.max_iterations > *iterations {
            drop_last_line(manifest)?;
        } else {
            return Ok(Restored::Finished(TrainSummary {
                solved: *solved,
                iterations: *iterations,
                output_dir: out.clone(),
                stage: last.map_or_else(
                    || CurriculumStage::initial(&config.curriculum, master.num_boxes()),
                    |r| r.stage,
                ),
                solution: iterations_solution(&records),
            }));
        }
    }
    let Some(last) = last else {
        // nothing finished yet: start over in place
        fs::remove_file(manifest).map_err(io_err(manifest))?;
        return fresh(config, master, level_text, manifest).map(|s| Restored::Running(Box::new(s)));
    };
    let path = out.join(&last.checkpoint);
    let ck = Checkpoint::load(&path, config.train.learning_rate, config.train.momentum).map_err(
        |source| HarnessError::Checkpoint {
            path: path.clone(),
            source,
        },
    )?;
    let opt = ck
        .optimizer
        .ok_or_else(|| HarnessError::Config("checkpoint has no optimizer state".into()))?;
    let explored = read_explored(&out.join(EXPLORED_FILE), done)?;
    let timings = out.join(TIMINGS_FILE);
    truncate_timings(&timings, done)?;
    let snapshots = iterations(&records)
        .filter(|r| r.stage_checkpoint.is_some())
        .map(|r| r.m)
        .collect();
    info!("resuming after iteration {done}");
    Ok(Restored::Running(Box::new(RunState {
        net: ck.network,
        opt,
        stage: last.stage,
        explored,
        snapshots,
        done,
    })))
}

/// Removes the final record of an append-only file.
fn drop_last_line(path: &Path) -> Result<(), HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let body = text.trim_end_matches('\n');
    let keep = body.rfind('\n').map_or(0, |i| i + 1);
    fs::write(path, &text[..keep]).map_err(io_err(path))
}

fn iterations_solution(records: &[ManifestRecord]) -> Option<String> {
    iterations(records).find_map(|r| r.solution.clone())
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), HarnessError> {
    ck.save(path).map_err(|source| HarnessError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn append_line(path: &Path, line: &str) -> Result<(), HarnessError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

// Explored-state log: per iteration, u32 iteration, u64 count, then the keys
// first seen in that iteration, all little-endian.
fn append_explored(path: &Path, iteration: u32, keys: &[u64]) -> Result<(), HarnessError> {
    let mut buf = Vec::with_capacity(12 + 8 * keys.len());
    buf.extend_from_slice(&iteration.to_le_bytes());
    buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        buf.extend_from_slice(&k.to_le_bytes());
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

/// Keys logged for iterations `1..=upto`; later entries are cut off.
fn read_explored(path: &Path, upto: u32) -> Result<HashSet<u64>, HarnessError> {
    let mut bytes = Vec::new();
    if path.exists() {
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
    }
    let corrupt = || HarnessError::Manifest {
        path: path.to_path_buf(),
        reason: "explored-state log is truncated".into(),
    };
    let mut keys = HashSet::new();
    let mut at = 0;
    let mut seen = 0;
    while at < bytes.len() {
        let header = bytes.get(at..at + 12).ok_or_else(corrupt)?;
        let it = u32::from_le_bytes(header[..4].try_into().unwrap());
        let count = u64::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        if it > upto {
            break;
        }
        let body = bytes
            .get(at + 12..at + 12 + 8 * count)
            .ok_or_else(corrupt)?;
        keys.extend(
            body.chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap())),
        );
        at += 12 + 8 * count;
        seen = it;
    }
    if seen != upto {
        return Err(corrupt());
    }
    let f = OpenOptions::new().write(true).open(path);
    if let Ok(f) = f {
        f.set_len(at as u64).map_err(io_err(path))?;
    }
    Ok(keys)
}

fn truncate_timings(path: &Path, upto: u32) -> Result<(), HarnessError> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let kept: String = text
        .lines()
        .filter(|l| {
            serde_json::from_str::<serde_json::Value>(l)
                .ok()
                .and_then(|v| v["iteration"].as_u64())
                .is_some_and(|i| i <= upto as u64)
        })
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(path, kept).map_err(io_err(path))
}
