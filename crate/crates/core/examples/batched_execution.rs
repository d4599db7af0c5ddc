//! Interprets a batch of scripts serially and with a worker pool, checks that
//! both give the same traces and vectors, and compares executor passes.
//!
//! ```text
//! cargo run --example batched_execution -- 8 4
//! ```
//!
//! Arguments: batch size, then worker count.

use std::time::Instant;

use ni_core::corpus::synthesize;
use ni_core::runtime::{run_batch, BatchRun, ExecMode, RunOptions, ScriptJob};
use ni_core::syntax::parse;
use ni_core::train::build_vocab;
use ni_core::{Config, Model};

fn vectors(run: &mut BatchRun) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for s in 0..run.generated.len() {
        for o in run.generated[s].trace.objects.clone() {
            let v = run.eval.value(s, o.id);
            out.push(run.eval.g.value(v).data.clone());
        }
    }
    out
}

fn main() -> ni_core::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let batch = args.next().unwrap_or(8);
    let workers = args.next().unwrap_or(4);
    let config = Config { hidden: 32, ..Config::default() };
    let scripts = synthesize(7, batch, (5, 20));
    let model = Model::new(&config, build_vocab(&scripts, &config));
    let trees = scripts.iter().map(|s| parse(&s.code)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<ScriptJob> = trees.iter().map(|t| ScriptJob { tree: t, misuse_node: None }).collect();

    let mut results = Vec::new();
    for mode in [ExecMode::Serial, ExecMode::Pooled { workers }] {
        let started = Instant::now();
        let mut run = run_batch(&model, &jobs, &RunOptions { max_args: config.max_args, cap: None, mode });
        let elapsed = started.elapsed();
        println!(
            "{mode:?}: {} calls in {} executor passes, {:.1} ms",
            run.eval.lambda_calls,
            run.eval.executor_forwards,
            elapsed.as_secs_f64() * 1e3
        );
        let traces: Vec<String> = run.generated.iter().map(|g| g.trace.text()).collect();
        results.push((traces, vectors(&mut run)));
    }
    let same_traces = results[0].0 == results[1].0;
    let same_vectors = results[0].1 == results[1].1;
    println!("identical traces: {same_traces}, bit-identical vectors: {same_vectors}");
    Ok(())
}
