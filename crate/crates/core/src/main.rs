use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sokoban_curriculum::board::Pos;
use sokoban_curriculum::harness::{
    append_csv, cmd_eval, cmd_oracle, cmd_solve, cmd_stats, cmd_train, cmd_value_accuracy,
    load_level, AccuracyOptions, EvalOptions, Guide, HarnessError, RunConfig, EXIT_CONFIG,
    EXIT_UNSOLVED, MANIFEST_FILE, REPORT_DIR, TIMINGS_FILE,
};
use sokoban_curriculum::oracle::DEFAULT_NODE_LIMIT;
use sokoban_curriculum::search::SearchConfig;

#[derive(Parser)]
#[command(
    version,
    about = "Curriculum-trained tree search for single Sokoban instances"
)]
struct Cli {
    /// Output root for run files and reports.
    #[arg(long, global = true, env = "SOKOBAN_CURRICULUM_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a level following the curriculum.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Continue the run found in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        max_iterations: Option<u32>,
    },
    /// Solve the full instance with greedy search.
    Solve {
        #[command(flatten)]
        guide: GuideArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Success rate on random m-box subcases; appends to reports/eval.csv.
    Eval {
        #[command(flatten)]
        guide: GuideArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Predicted against optimal remaining pushes; writes reports/value_accuracy.csv.
    ValueAccuracy {
        #[command(flatten)]
        guide: GuideArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        near_pushes: usize,
        /// Value scale; defaults to the checkpoint's step cap.
        #[arg(long)]
        i_max: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
        node_limit: usize,
    },
    /// Optimal push solution by breadth-first search.
    Oracle {
        #[arg(long)]
        level: PathBuf,
        /// Box cells of a subcase, as "row,col;row,col".
        #[arg(long, value_parser = parse_cells)]
        boxes: Option<Cells>,
        /// Goal cells of a subcase, as "row,col;row,col".
        #[arg(long, value_parser = parse_cells)]
        goals: Option<Cells>,
        #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
        node_limit: usize,
        #[arg(long, default_value_t = 1_000_000)]
        reachable_cap: usize,
    },
    /// Summaries of a training run.
    Stats {
        /// Defaults to manifest.jsonl under the output root.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Eval CSV used for the forgetting matrix.
        #[arg(long)]
        eval_csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GuideArgs {
    #[arg(long)]
    level: PathBuf,
    #[arg(long, conflicts_with = "uniform", required_unless_present = "uniform")]
    checkpoint: Option<PathBuf>,
    /// Use the uniform evaluator instead of a network.
    #[arg(long)]
    uniform: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 1600)]
    rounds: u32,
    /// Step cap; defaults to the checkpoint's.
    #[arg(long)]
    i_max: Option<u32>,
    #[arg(long, default_value_t = 1.25)]
    cput: f64,
}

impl SearchArgs {
    fn config(&self, checkpoint_i_max: Option<u32>) -> SearchConfig {
        let base = SearchConfig::default();
        SearchConfig {
            rounds_per_move: self.rounds,
            i_max: self.i_max.or(checkpoint_i_max).unwrap_or(base.i_max),
            cput: self.cput,
            ..base
        }
        .greedy()
    }
}

#[derive(Clone, Debug)]
struct Cells(Vec<Pos>);

fn parse_cells(s: &str) -> Result<Cells, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (r, c) = p
                .split_once(',')
                .ok_or_else(|| format!("expected row,col in {p:?}"))?;
            let r = r.trim().parse::<u16>().map_err(|e| e.to_string())?;
            let c = c.trim().parse::<u16>().map_err(|e| e.to_string())?;
            Ok(Pos::new(r, c))
        })
        .collect::<Result<_, String>>()
        .map(Cells)
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn out_root(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn load_guide(
    args: &GuideArgs,
) -> Result<(sokoban_curriculum::board::Level, Guide, Option<u32>, String), HarnessError> {
    let level = load_level(&args.level)?;
    let ckpt = if args.uniform {
        None
    } else {
        args.checkpoint.as_deref()
    };
    let (guide, meta) = Guide::load(ckpt, &level)?;
    let label = guide.label(ckpt);
    Ok((level, guide, meta.map(|m| m.i_max), label))
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Train {
            config,
            resume,
            seed,
            workers,
            max_iterations,
        } => {
            let mut cfg = RunConfig::from_toml_file(&config)?;
            if let Some(out) = &cli.out {
                cfg.output_dir = out.clone();
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.workers = workers.unwrap_or(cfg.workers);
            cfg.max_iterations = max_iterations.unwrap_or(cfg.max_iterations);
            let summary = cmd_train(&cfg, resume)?;
            println!(
                "{} after {} iterations (m = {}){}",
                if summary.solved {
                    "solved"
                } else {
                    "not solved"
                },
                summary.iterations,
                summary.stage.m,
                summary
                    .solution
                    .map(|s| format!(": {s}"))
                    .unwrap_or_default()
            );
            Ok(if summary.solved {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_UNSOLVED)
            })
        }
        Command::Solve {
            guide,
            search,
            seed,
        } => {
            let (level, g, i_max, _) = load_guide(&guide)?;
            let report = cmd_solve(&level, &g, &search.config(i_max), seed)?;
            print_json(&report);
            Ok(if report.solved {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_UNSOLVED)
            })
        }
        Command::Eval {
            guide,
            search,
            m,
            samples,
            seed,
            workers,
        } => {
            let (level, g, i_max, label) = load_guide(&guide)?;
            let opts = EvalOptions {
                m,
                samples,
                seed,
                workers,
                search: search.config(i_max),
            };
            let row = cmd_eval(&level, &g, &label, &opts)?;
            append_csv(
                &out_root(&cli.out).join(REPORT_DIR).join("eval.csv"),
                std::slice::from_ref(&row),
            )?;
            print_json(&row);
            Ok(ExitCode::SUCCESS)
        }
        Command::ValueAccuracy {
            guide,
            m,
            samples,
            seed,
            near_pushes,
            i_max,
            node_limit,
        } => {
            let (level, g, ck_i_max, _) = load_guide(&guide)?;
            let opts = AccuracyOptions {
                m,
                samples,
                seed,
                near_pushes,
                i_max: i_max.or(ck_i_max).unwrap_or(SearchConfig::default().i_max),
                node_limit,
            };
            let report = cmd_value_accuracy(&level, &g, &opts)?;
            append_csv(
                &out_root(&cli.out)
                    .join(REPORT_DIR)
                    .join("value_accuracy.csv"),
                &report.rows,
            )?;
            print_json(&report.summaries);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            level,
            boxes,
            goals,
            node_limit,
            reachable_cap,
        } => {
            let lv = load_level(&level)?;
            let report = cmd_oracle(
                &lv,
                boxes.map(|c| c.0),
                goals.map(|c| c.0),
                node_limit,
                reachable_cap,
            )?;
            print_json(&report);
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { manifest, eval_csv } => {
            let root = out_root(&cli.out);
            let manifest = manifest.unwrap_or_else(|| root.join(MANIFEST_FILE));
            let timings = manifest
                .parent()
                .unwrap_or(Path::new("."))
                .join(TIMINGS_FILE);
            let eval_csv = eval_csv.unwrap_or_else(|| root.join(REPORT_DIR).join("eval.csv"));
            let report = cmd_stats(&manifest, Some(&timings), Some(&eval_csv))?;
            append_csv(
                &root.join(REPORT_DIR).join("stats_iterations.csv"),
                &report.iterations,
            )?;
            print_json(&report);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
