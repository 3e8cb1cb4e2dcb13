use std::path::PathBuf;
use std::process::ExitCode;

use awopt_cli::commands::{self, GenerateOptions, TrainOptions};
use awopt_cli::matrix::run_matrix;
use awopt_cli::{exit_code, EXIT_PARTIAL};
use awopt_core::env::KeepMode;
use awopt_core::experiment::study::{Arm, StudySettings};
use awopt_core::experiment::GreedyMode;
use awopt_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Offline pretraining and online finetuning of QT-Opt, AWAC and AW-Opt on
/// sparse-reward toy tasks.
#[derive(Parser)]
#[command(name = "awopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a scripted or random policy and write the episodes as JSONL.
    GenerateData {
        #[arg(long, default_value = "nav")]
        env: String,
        #[arg(long)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "all")]
        keep: Keep,
        /// Standard deviation of the scripted controller's action noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Use uniformly random actions instead of the scripted controller.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Offline pretraining followed by online finetuning, once per seed.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Replay the configuration recorded in a run's manifest.
        #[arg(long, value_name = "MANIFEST")]
        from_manifest: Option<PathBuf>,
        /// Directory name under the output root; defaults to the preset and config hash.
        #[arg(long)]
        name: Option<String>,
        /// Also write the online episodes to episodes.jsonl.
        #[arg(long)]
        save_episodes: bool,
    },
    /// Reload a trained seed and evaluate its deterministic policy.
    Evaluate {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum, default_value = "configured")]
        policy: EvalMode,
        /// Seed of the evaluation start states.
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
    },
    /// Run every row of a matrix over the same seeds and write summary.csv.
    AblationMatrix {
        /// exploration, targets, splits, variants, or a comma-separated preset list.
        #[arg(long)]
        matrix: String,
        #[command(flatten)]
        run: RunArgs,
        /// Success rate used for the transitions-to-threshold column.
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// Write plot-ready curves.csv and summary.csv for finished runs.
    Summarize {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// Run the navigation comparison and write the pilot fixture. The
    /// weak-start comparison is included unless --settings or --arms is
    /// given.
    Pilot {
        #[arg(long, default_value = "fixtures/pilot.json")]
        out: PathBuf,
        /// JSON file with study settings; omitted keys keep their defaults.
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Comma-separated arms; all by default.
        #[arg(long)]
        arms: Option<String>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name, e.g. aw_opt, awac, qt_opt or aw_opt_no_pf.
    #[arg(long = "algo")]
    algorithm: Option<String>,
    #[arg(long)]
    env: Option<String>,
    /// JSONL dataset replacing the configured prior data; repeatable.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Replaces the configured seed list; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    /// key=value with a dotted key; bare keys address the agent table.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; defaults to $AWOPT_OUT_DIR, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn options(self) -> TrainOptions {
        TrainOptions {
            config: self.config,
            algorithm: self.algorithm,
            env: self.env,
            data: self.data,
            seeds: self.seed,
            overrides: self.overrides,
            out: self.out,
            ..TrainOptions::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Keep {
    All,
    #[value(alias = "positives_only")]
    Positives,
    #[value(alias = "negatives_only")]
    Negatives,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Configured,
    Actor,
    Cem,
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::GenerateData {
            env,
            episodes,
            keep,
            noise,
            random,
            seed,
            out,
        } => {
            let keep = match keep {
                Keep::All => KeepMode::All,
                Keep::Positives => KeepMode::PositivesOnly,
                Keep::Negatives => KeepMode::NegativesOnly,
            };
            let s = commands::generate_data(&GenerateOptions {
                env,
                episodes,
                keep,
                noise,
                random,
                seed,
                out,
            })?;
            println!(
                "episodes={} positives={} negatives={} path={}",
                s.episodes,
                s.positives,
                s.negatives,
                s.path.display()
            );
        }
        Command::Train {
            run,
            from_manifest,
            name,
            save_episodes,
        } => {
            let opts = TrainOptions {
                from_manifest,
                name,
                save_episodes,
                ..run.options()
            };
            let dir = commands::train(&opts, &mut log)?;
            println!("{}", dir.display());
        }
        Command::Evaluate {
            run,
            seed,
            episodes,
            policy,
            eval_seed,
        } => {
            let mode = match policy {
                EvalMode::Configured => GreedyMode::Configured,
                EvalMode::Actor => GreedyMode::ActorMode,
                EvalMode::Cem => GreedyMode::Cem,
            };
            let r = commands::evaluate_run(&run, seed, episodes, mode, eval_seed)?;
            println!("success_rate={} mean_action_ms={:.4}", r.success_rate, r.mean_action_ms);
        }
        Command::AblationMatrix { matrix, run, threshold } => {
            let outcome = run_matrix(&matrix, &run.options(), threshold, &mut log)?;
            println!("{}", outcome.summary_path.display());
            if outcome.failures() > 0 {
                eprintln!("{} of {} rows failed", outcome.failures(), outcome.rows.len());
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Summarize { runs, out, threshold } => {
            let rows = commands::summarize(&runs, &out, threshold)?;
            for r in rows {
                println!(
                    "{}: post-IL {:.3}, final {:.3} [{:.3}, {:.3}] over {} seeds",
                    r.run, r.post_il_success, r.final_success, r.final_success_min, r.final_success_max, r.seeds
                );
            }
        }
        Command::Pilot { out, settings, arms } => {
            let weak_start = settings.is_none() && arms.is_none();
            let settings: StudySettings = match settings {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => StudySettings::default(),
            };
            let arms: Vec<Arm> = match arms {
                None => Arm::ALL.to_vec(),
                Some(list) => list
                    .split(',')
                    .map(|name| {
                        let name = name.trim();
                        Arm::ALL
                            .into_iter()
                            .find(|a| a.name() == name)
                            .ok_or_else(|| Error::Usage(format!("unknown arm '{name}'")))
                    })
                    .collect::<Result<_>>()?,
            };
            commands::pilot(&settings, &arms, weak_start, &out, &mut log)?;
            println!("{}", out.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
