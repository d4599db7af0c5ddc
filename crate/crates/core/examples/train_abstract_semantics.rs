//! Trains the three execution objectives on a synthetic corpus and reports
//! held-out accuracy.
//!
//! ```text
//! cargo run --example train_abstract_semantics -- scripts=400 hidden=32 epochs=2
//! ```
//!
//! `scripts`, `heldout` and `workers` are read here; every other `key=value`
//! goes to the model configuration.

use std::time::Instant;

use ni_core::corpus::synthesize;
use ni_core::train::{build_vocab, evaluate_semantics, prepare, steps_per_epoch, train_semantics, Trainer};
use ni_core::{Config, Model};

fn main() -> ni_core::Result<()> {
    let mut config = Config { hidden: 32, encoder_layers: 2, executor_layers: 2, epochs: 2, ..Config::default() };
    let (mut scripts, mut heldout, mut workers) = (400usize, 200usize, 4usize);
    for arg in std::env::args().skip(1) {
        match arg.split_once('=') {
            Some(("scripts", v)) => scripts = v.parse().expect("scripts=<count>"),
            Some(("heldout", v)) => heldout = v.parse().expect("heldout=<count>"),
            Some(("workers", v)) => workers = v.parse().expect("workers=<count>"),
            _ => config.set(&arg)?,
        }
    }
    let train = synthesize(config.seed, scripts, (5, 20));
    let test = synthesize(config.seed + 1_000_003, heldout, (5, 20));
    let model = Model::new(&config, build_vocab(&train, &config));
    let (train, _) = prepare(&train);
    let (test, _) = prepare(&test);

    let started = Instant::now();
    let total = steps_per_epoch(train.len(), &config) * config.epochs as u64;
    let mut trainer = Trainer::new(model, total, workers);
    train_semantics(&mut trainer, &train, |r| {
        if r.step % 10 == 0 {
            println!(
                "step {:4}  L1 {:.3} L2 {:.3} L3 {:.3}  acc {:.2} {:.2} {:.2}  {:.0}s",
                r.step,
                r.l1,
                r.l2,
                r.l3,
                r.acc1,
                r.acc2,
                r.acc3,
                started.elapsed().as_secs_f64()
            );
        }
    });
    let e = evaluate_semantics(&trainer.model, &test, workers);
    println!(
        "held-out: return variable {:.3}  argument {:.3}  data flow {:.3}  ({:.0}s)",
        e.acc1,
        e.acc2,
        e.acc3,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
