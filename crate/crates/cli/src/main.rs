//! `valuenav` command-line entry point.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use valuenav_core::eval::metrics::{compute_metrics, read_results, results_to_jsonl};
use valuenav_core::eval::suite::load_suite;
use valuenav_core::eval::{
    run_suite, BackendProvider, EvalConfig, RemoteProvider, ReplayProvider, RunOptions,
    ScriptedProvider,
};
use valuenav_core::llmclient::{ChatClient, EndpointConfig};
use valuenav_core::simulator::{load_scene_file, SceneError};
use valuenav_core::StopReason;

#[derive(Debug, Parser)]
#[command(
    name = "valuenav",
    version,
    about = "Instruction navigation over fused value maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Scripted,
    Replay,
    Remote,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Suite file.
    suite: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Scripted)]
    backend: Backend,
    /// Write value-map images and sidecars here.
    #[arg(long, value_name = "DIR")]
    dump_maps: Option<PathBuf>,
    /// Sampling seed forwarded to remote endpoints.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "6", value_parser = ["4", "6", "12"])]
    n_directions: String,
    /// Low-level action cap per episode.
    #[arg(long, value_name = "K")]
    max_steps: Option<usize>,
    #[arg(long, value_name = "P", default_value_t = 1)]
    parallel: usize,
    /// Results file (JSON lines); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transcript directory: written by scripted/remote runs, read by replay.
    #[arg(long, value_name = "DIR")]
    transcripts: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every episode of a suite.
    Run(RunArgs),
    /// Summarize a results file.
    Metrics { results: PathBuf },
    /// Check scene files against the schema.
    ValidateScene {
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
    },
    /// Run a suite and keep one transcript per episode.
    Record {
        suite: PathBuf,
        #[arg(long, value_name = "DIR")]
        transcripts: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Scripted)]
        backend: Backend,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a suite from recorded transcripts.
    Replay {
        suite: PathBuf,
        #[arg(long, value_name = "DIR")]
        transcripts: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn provider(
    backend: Backend,
    transcripts: Option<&Path>,
    seed: Option<u64>,
) -> Result<Box<dyn BackendProvider>, String> {
    match backend {
        Backend::Scripted => Ok(Box::new(ScriptedProvider {
            record: transcripts.is_some(),
        })),
        Backend::Replay => {
            let dir = transcripts.ok_or("--backend replay needs --transcripts DIR")?;
            Ok(Box::new(ReplayProvider {
                dir: dir.to_path_buf(),
            }))
        }
        Backend::Remote => {
            let mut cfg = EndpointConfig::from_env().map_err(|e| e.to_string())?;
            cfg.seed = seed;
            let client = ChatClient::new(cfg).map_err(|e| e.to_string())?;
            Ok(Box::new(RemoteProvider {
                client: Arc::new(client),
            }))
        }
    }
}

fn run(args: RunArgs) -> Result<bool, String> {
    let suite = load_suite(&args.suite).map_err(|e| e.to_string())?;
    let mut cfg = EvalConfig {
        n_directions: args.n_directions.parse().expect("validated by clap"),
        ..EvalConfig::default()
    };
    if let Some(k) = args.max_steps {
        cfg.max_steps = k;
    }
    let provider = provider(args.backend, args.transcripts.as_deref(), args.seed)?;
    let opts = RunOptions {
        parallel: args.parallel,
        dump_dir: args.dump_maps,
        transcript_dir: match args.backend {
            Backend::Replay => None,
            _ => args.transcripts,
        },
    };
    let outcomes = run_suite(&suite, provider.as_ref(), &cfg, &opts);
    let mut ok = true;
    let mut results = Vec::new();
    for (ep, outcome) in suite.episodes.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                if r.stop_reason == StopReason::PlannerError {
                    ok = false;
                    eprintln!(
                        "episode {}: {}",
                        r.id,
                        r.error.as_deref().unwrap_or("planner error")
                    );
                }
                results.push(r);
            }
            Err(e) => {
                ok = false;
                eprintln!("episode {}: {e}", ep.id);
            }
        }
    }
    let text = results_to_jsonl(&results);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    if let Ok(table) = compute_metrics(&results) {
        eprintln!("{table}");
    }
    Ok(ok)
}

fn metrics(path: &Path) -> Result<bool, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let results = read_results(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let table = compute_metrics(&results).map_err(|e| e.to_string())?;
    println!("{table}");
    Ok(true)
}

fn validate(scenes: &[PathBuf]) -> Result<bool, String> {
    let mut ok = true;
    for path in scenes {
        match load_scene_file(path) {
            Ok(s) => println!(
                "{}: ok ({}x{}, {} labels, {} spawns, {} goals)",
                path.display(),
                s.width(),
                s.height(),
                s.label_table.len(),
                s.spawns.len(),
                s.goals.len()
            ),
            Err(SceneError::Schema(errs)) => {
                ok = false;
                println!("{}: invalid", path.display());
                for e in errs {
                    println!("  {e}");
                }
            }
            Err(e) => {
                ok = false;
                println!("{}: {e}", path.display());
            }
        }
    }
    Ok(ok)
}

fn run_args(
    suite: PathBuf,
    backend: Backend,
    transcripts: PathBuf,
    out: Option<PathBuf>,
) -> RunArgs {
    RunArgs {
        suite,
        backend,
        dump_maps: None,
        seed: None,
        n_directions: "6".into(),
        max_steps: None,
        parallel: 1,
        out,
        transcripts: Some(transcripts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Metrics { results } => metrics(&results),
        Command::ValidateScene { scenes } => validate(&scenes),
        Command::Record {
            suite,
            transcripts,
            backend,
            out,
        } => {
            if backend == Backend::Replay {
                Err("record needs a scripted or remote backend".to_string())
            } else {
                run(run_args(suite, backend, transcripts, out))
            }
        }
        Command::Replay {
            suite,
            transcripts,
            out,
        } => run(run_args(suite, Backend::Replay, transcripts, out)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
