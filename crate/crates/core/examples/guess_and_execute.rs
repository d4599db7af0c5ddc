//! Runs one script through an untrained model: the guesser embeds every
//! object from its source tokens, and each lambda call is executed by the
//! transformer executor. Prints the vectors involved in every call.
//!
//! ```text
//! cargo run --example guess_and_execute
//! ```

use ni_core::corpus::{Origin, Script};
use ni_core::interp::ObjectId;
use ni_core::runtime::{run_batch, ExecMode, RunOptions, ScriptJob};
use ni_core::syntax::parse;
use ni_core::train::build_vocab;
use ni_core::{Config, Model};

const SOURCE: &str = "\
price = lookup_price(item)
total = price * quantity
if total > 100:
    total -= discount
print_receipt(total)
";

fn short(v: &[f64]) -> String {
    let head: Vec<String> = v.iter().take(4).map(|x| format!("{x:+.3}")).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    format!("[{} ...] |{norm:.3}|", head.join(" "))
}

fn main() -> ni_core::Result<()> {
    let config = Config { hidden: 16, encoder_heads: 2, executor_heads: 2, vocab_min_count: 1, ..Config::default() };
    let script = Script::new(SOURCE.to_string(), Origin::Ingested);
    let model = Model::new(&config, build_vocab(std::slice::from_ref(&script), &config));
    let tree = parse(SOURCE)?;
    let job = ScriptJob { tree: &tree, misuse_node: None };
    let opts = RunOptions { max_args: config.max_args, cap: None, mode: ExecMode::Serial };
    let mut run = run_batch(&model, &[job], &opts);
    if let Some(abort) = run.generated[0].abort.clone() {
        return Err(abort.into());
    }
    let trace = run.generated[0].trace.clone();
    let mut vector = |id: ObjectId| {
        let v = run.eval.value(0, id);
        run.eval.g.value(v).data.clone()
    };
    println!("{SOURCE}");
    for r in &trace.records {
        println!("call #{} {} ({:?})", r.id, r.callee.name, r.callee.kind);
        for (i, &a) in r.args.iter().enumerate() {
            let text = &SOURCE[trace.object(a).key.start..trace.object(a).key.end];
            println!("  arg {i} #{a} {text:?} {}", short(&vector(a)));
        }
        for &c in &r.contexts {
            println!("  context #{c} {}", short(&vector(c)));
        }
        println!("  -> #{} {}", r.result, short(&vector(r.result)));
    }
    println!("{} executor passes, {} calls", run.eval.executor_forwards, run.eval.lambda_calls);
    Ok(())
}
