use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ni_core::cli::{self, SynthOptions, Task, TraceFlags};
use ni_core::{Error, Model, Result};

/// Neural interpretation of Python scripts.
#[derive(Parser)]
#[command(name = "ni", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Semantics,
    Misuse,
}

#[derive(Subcommand)]
enum Command {
    /// Print the instruction trace of one script.
    Trace {
        file: PathBuf,
        /// Print commented pseudocode instead of the trace format.
        #[arg(long)]
        pseudocode: bool,
        /// Append the final memory state as JSON.
        #[arg(long)]
        dump_memory: bool,
        /// Append the memory state with object vectors; needs --checkpoint.
        #[arg(long, requires = "checkpoint")]
        dump_vectors: bool,
        #[arg(long, value_name = "CKPT")]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model and write a checkpoint.
    Train {
        corpus: PathBuf,
        /// Checkpoint to write; the vocabulary goes next to it.
        #[arg(long, value_name = "CKPT")]
        out: PathBuf,
        /// Metrics log (JSON lines); stdout when absent.
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "semantics")]
        task: TaskArg,
        /// Start from this checkpoint instead of fresh parameters.
        #[arg(long, value_name = "CKPT")]
        init: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print execution-objective accuracies of a checkpoint on a corpus.
    Eval {
        corpus: PathBuf,
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Print misuse accuracies and write one prediction per script.
    Misuse {
        corpus: PathBuf,
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Prediction JSON lines; skipped when absent.
        #[arg(long, value_name = "FILE")]
        predictions: Option<PathBuf>,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Print the filter report of a corpus.
    Stats {
        corpus: PathBuf,
        /// Also write report.json and the histogram CSVs here.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic corpus as JSON lines.
    Synth {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        min_statements: usize,
        #[arg(long, default_value_t = 20)]
        max_statements: usize,
        /// Inject misuses into this fraction of scripts.
        #[arg(long, value_name = "FRACTION")]
        misuse_frac: Option<f64>,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    let mut stdout = io::stdout().lock();
    let io_err = |e| Error::io("stdout", e);
    match command {
        Command::Trace { file, pseudocode, dump_memory, dump_vectors, checkpoint, config } => {
            let config = cli::resolve_config(config.config.as_deref(), &config.overrides)?;
            let source = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let model = checkpoint.as_deref().map(Model::load).transpose()?;
            let flags = TraceFlags { pseudocode, dump_memory, dump_vectors };
            match cli::cmd_trace(&source, flags, &config, model.as_ref()) {
                Ok(text) => write!(stdout, "{text}").map_err(io_err)?,
                Err(e) => {
                    eprintln!("{}: {}", file.display(), cli::describe(&e, Some(&source)));
                    return Err(e);
                }
            }
        }
        Command::Train { corpus, out, metrics, task, init, jobs, config } => {
            let config = cli::resolve_config(config.config.as_deref(), &config.overrides)?;
            let task = match task {
                TaskArg::Semantics => Task::Semantics,
                TaskArg::Misuse => Task::Misuse,
            };
            let outcome = match &metrics {
                Some(p) => {
                    let mut w = create(p)?;
                    let o = cli::cmd_train(&corpus, &config, task, init.as_deref(), &out, &mut w, jobs as usize)?;
                    w.flush().map_err(|e| Error::io(p, e))?;
                    o
                }
                None => cli::cmd_train(&corpus, &config, task, init.as_deref(), &out, &mut stdout, jobs as usize)?,
            };
            eprintln!("{} steps ({:?}); final: {}", outcome.steps, outcome.stop, serde_json::to_string(&outcome.last)?);
        }
        Command::Eval { corpus, checkpoint, jobs } => {
            let e = cli::cmd_eval(&corpus, &checkpoint, jobs as usize)?;
            writeln!(stdout, "{}", serde_json::to_string(&e)?).map_err(io_err)?;
        }
        Command::Misuse { corpus, checkpoint, predictions, jobs } => {
            let e = match &predictions {
                Some(p) => {
                    let mut w = create(p)?;
                    let e = cli::cmd_misuse(&corpus, &checkpoint, jobs as usize, Some(&mut w))?;
                    w.flush().map_err(|e| Error::io(p, e))?;
                    e
                }
                None => cli::cmd_misuse(&corpus, &checkpoint, jobs as usize, None)?,
            };
            writeln!(stdout, "{}", serde_json::to_string(&e)?).map_err(io_err)?;
        }
        Command::Stats { corpus, out_dir, config } => {
            let config = cli::resolve_config(config.config.as_deref(), &config.overrides)?;
            let stats = cli::cmd_stats(&corpus, &config, out_dir.as_deref())?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&stats.report)?).map_err(io_err)?;
        }
        Command::Synth { out, count, seed, min_statements, max_statements, misuse_frac } => {
            let opts = SynthOptions { seed, count, statements: (min_statements, max_statements), misuse_frac };
            let n = cli::cmd_synth(&out, opts)?;
            eprintln!("wrote {n} scripts to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, Error::Codegen(_) | Error::Syntax(_)) {
                eprintln!("error: {e}");
            }
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
