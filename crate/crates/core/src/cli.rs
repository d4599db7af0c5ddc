//! Command implementations behind the `ni` binary.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::codegen::{generate_symbolic, CodegenOptions};
use crate::config::Config;
use crate::corpus::{corpus_stats, load_corpus, misuse_corpus, synthesize, write_jsonl, CorpusStats, LoadIssue, Script};
use crate::error::{Abort, Error, Result};
use crate::interp::format_pseudocode;
use crate::model::Model;
use crate::runtime::{run_batch, ExecMode, RunOptions, ScriptJob};
use crate::syntax::{line_col, parse};
use crate::train::{
    build_vocab, evaluate_misuse, evaluate_semantics, predict_misuse, prepare, steps_per_epoch, train_misuse,
    train_semantics, MisuseEval, Prepared, SemanticsEval, Stop, Trainer,
};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Syntax(_) | Error::Codegen(_) => 2,
        Error::Fault(_) | Error::Truncated => 3,
        Error::Config(_) | Error::Checkpoint(_) | Error::Vocab(_) | Error::Io { .. } | Error::Json(_) => 1,
    }
}

/// Human-readable message, with line and column for source errors.
pub fn describe(e: &Error, source: Option<&str>) -> String {
    match (e, source) {
        (Error::Codegen(c), Some(src)) => {
            let (line, col) = line_col(src, c.offset);
            format!("codegen error at line {line}, column {col}: {} node: {}", c.node_kind, c.message)
        }
        _ => e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceFlags {
    pub pseudocode: bool,
    pub dump_memory: bool,
    pub dump_vectors: bool,
}

/// Lowers one source file and renders its trace. Vectors come from `model`,
/// which is required for `dump_vectors`.
pub fn cmd_trace(source: &str, flags: TraceFlags, config: &Config, model: Option<&Model>) -> Result<String> {
    let tree = parse(source)?;
    let opts = CodegenOptions { max_args: config.max_args, ..Default::default() };
    let gen = generate_symbolic(&tree, &opts);
    match gen.abort {
        Some(Abort::Truncated) | None => {}
        Some(a) => return Err(a.into()),
    }
    let mut out = if flags.pseudocode { format_pseudocode(&gen.trace.events) } else { gen.trace.text() };
    if flags.dump_memory || flags.dump_vectors {
        let dump = match model.filter(|_| flags.dump_vectors) {
            Some(model) => {
                let job = ScriptJob { tree: &tree, misuse_node: None };
                let ro = RunOptions { max_args: config.max_args, cap: None, mode: ExecMode::Serial };
                let mut run = run_batch(model, &[job], &ro);
                if let Some(a) = run.generated[0].abort.clone() {
                    return Err(a.into());
                }
                let mut vectors = HashMap::new();
                for o in &run.generated[0].trace.objects {
                    let v = run.eval.value(0, o.id);
                    vectors.insert(o.id, run.eval.g.value(v).data.clone());
                }
                let f = |id| vectors.get(&id).cloned().unwrap_or_default();
                run.generated[0].trace.memory_dump(Some(&f))
            }
            None => gen.trace.memory_dump(None),
        };
        out.push_str(&serde_json::to_string_pretty(&dump)?);
        out.push('\n');
    }
    Ok(out)
}

/// Defaults, then the TOML file, then `key=value` overrides in order.
pub fn resolve_config(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut c = match file {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in overrides {
        c.set(o)?;
    }
    c.validate()?;
    Ok(c)
}

fn load(corpus: &Path) -> Result<Vec<Script>> {
    let (scripts, issues) = load_corpus(corpus)?;
    for LoadIssue { path, line, message } in issues {
        match line {
            Some(l) => eprintln!("warning: {}:{l}: {message}", path.display()),
            None => eprintln!("warning: {}: {message}", path.display()),
        }
    }
    Ok(scripts)
}

/// Loads and filters a corpus, then parses what is left.
pub fn load_filtered(corpus: &Path, config: &Config) -> Result<Vec<Prepared>> {
    let (kept, report) = crate::corpus::apply_filters(load(corpus)?, config);
    eprintln!(
        "corpus: {} scripts, {} retained ({} too long, {} codegen errors, {} bad misuse labels)",
        report.total, report.retained, report.too_long, report.codegen_error, report.misuse_label_error
    );
    Ok(prepare(&kept).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Semantics,
    Misuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FinalEval {
    Semantics(SemanticsEval),
    Misuse(MisuseEval),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    pub stop: Stop,
    pub last: FinalEval,
}

const ARCHITECTURE_KEYS: [&str; 9] = [
    "hidden",
    "encoder_layers",
    "encoder_heads",
    "executor_layers",
    "executor_heads",
    "max_args",
    "vocab_min_count",
    "vocab_max_size",
    "oov_buckets",
];

fn same_architecture(a: &Config, b: &Config) -> Result<()> {
    let ta = toml::Table::try_from(a).map_err(|e| Error::Config(e.to_string()))?;
    let tb = toml::Table::try_from(b).map_err(|e| Error::Config(e.to_string()))?;
    for k in ARCHITECTURE_KEYS {
        if ta.get(k) != tb.get(k) {
            return Err(Error::Config(format!("{k} differs from the initial checkpoint")));
        }
    }
    Ok(())
}

/// Trains on `corpus` and writes the checkpoint to `out`. The metrics log
/// starts with the resolved configuration, has one line per batch and ends
/// with an evaluation pass over the training split.
pub fn cmd_train(
    corpus: &Path,
    config: &Config,
    task: Task,
    init: Option<&Path>,
    out: &Path,
    metrics: &mut dyn Write,
    jobs: usize,
) -> Result<TrainOutcome> {
    let scripts = load(corpus)?;
    let (kept, _) = crate::corpus::apply_filters(scripts, config);
    let model = match init {
        Some(p) => {
            let mut m = Model::load(p)?;
            same_architecture(&m.config, config)?;
            m.config = config.clone();
            m
        }
        None => Model::new(config, build_vocab(&kept, config)),
    };
    let (data, _) = prepare(&kept);
    let io = |e: std::io::Error| Error::io("metrics log", e);
    writeln!(metrics, "{}", serde_json::json!({ "config": config })).map_err(io)?;
    let total = steps_per_epoch(data.len(), config) * config.epochs as u64;
    let mut trainer = Trainer::new(model, total, jobs);
    let mut failed = None;
    let mut log = |line: serde_json::Result<String>| {
        if failed.is_none() {
            failed = line.map_err(Error::from).and_then(|l| writeln!(metrics, "{l}").map_err(io)).err();
        }
    };
    let stop = match task {
        Task::Semantics => train_semantics(&mut trainer, &data, |r| log(serde_json::to_string(r))),
        Task::Misuse => train_misuse(&mut trainer, &data, |r| log(serde_json::to_string(r))),
    };
    if let Some(e) = failed {
        return Err(e);
    }
    let steps = trainer.step;
    let last = match task {
        Task::Semantics => {
            let e = evaluate_semantics(&trainer.model, &data, jobs);
            writeln!(metrics, "{}", serde_json::to_string(&e.as_record(steps))?).map_err(io)?;
            FinalEval::Semantics(e)
        }
        Task::Misuse => {
            let (e, _) = evaluate_misuse(&trainer.model, &data, jobs);
            let mut v = serde_json::to_value(e)?;
            v["step"] = steps.into();
            v["eval"] = true.into();
            writeln!(metrics, "{}", serde_json::to_string(&v)?).map_err(io)?;
            FinalEval::Misuse(e)
        }
    };
    trainer.model.save(out)?;
    Ok(TrainOutcome { steps, stop, last })
}

pub fn cmd_eval(corpus: &Path, ckpt: &Path, jobs: usize) -> Result<SemanticsEval> {
    let model = Model::load(ckpt)?;
    let data = load_filtered(corpus, &model.config)?;
    Ok(evaluate_semantics(&model, &data, jobs))
}

/// Stepwise accuracies against the corpus labels, and one prediction per
/// script written as JSON lines to `predictions`.
pub fn cmd_misuse(corpus: &Path, ckpt: &Path, jobs: usize, predictions: Option<&mut dyn Write>) -> Result<MisuseEval> {
    let model = Model::load(ckpt)?;
    let data = load_filtered(corpus, &model.config)?;
    let (e, _) = evaluate_misuse(&model, &data, jobs);
    if let Some(w) = predictions {
        for p in predict_misuse(&model, &data, jobs) {
            writeln!(w, "{}", serde_json::to_string(&p)?).map_err(|e| Error::io("predictions", e))?;
        }
    }
    Ok(e)
}

/// Filter report and histograms; with `out_dir`, also writes `report.json`,
/// `char_counts.csv` and `lambda_counts.csv` there.
pub fn cmd_stats(corpus: &Path, config: &Config, out_dir: Option<&Path>) -> Result<CorpusStats> {
    let stats = corpus_stats(&load(corpus)?, config);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("report.json", serde_json::to_string_pretty(&stats.report)? + "\n")?;
        write("char_counts.csv", stats.chars.to_csv())?;
        write("lambda_counts.csv", stats.lambdas.to_csv())?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub seed: u64,
    pub count: usize,
    pub statements: (usize, usize),
    /// Fraction of scripts given an injected misuse; `None` writes plain scripts.
    pub misuse_frac: Option<f64>,
}

pub fn cmd_synth(out: &Path, o: SynthOptions) -> Result<usize> {
    if o.statements.0 == 0 || o.statements.0 > o.statements.1 {
        return Err(Error::Config(format!("bad statement range {}..{}", o.statements.0, o.statements.1)));
    }
    let scripts = match o.misuse_frac {
        Some(f) if !(0.0..=1.0).contains(&f) => return Err(Error::Config(format!("misuse fraction {f} outside [0, 1]"))),
        Some(f) => misuse_corpus(o.seed, o.count, o.statements, f),
        None => synthesize(o.seed, o.count, o.statements),
    };
    write_jsonl(out, &scripts)?;
    Ok(scripts.len())
}
