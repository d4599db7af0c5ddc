//! Trains the misuse heads on synthetic scripts with injected misuses, then
//! prints held-out stepwise accuracies and one explained prediction.
//!
//! ```text
//! cargo run --example misuse_repair -- scripts=400 epochs=3
//! ```

use std::time::Instant;

use ni_core::corpus::misuse_corpus;
use ni_core::train::{build_vocab, evaluate_misuse, predict_misuse, prepare, steps_per_epoch, train_misuse, Trainer};
use ni_core::{Config, Model};

fn main() -> ni_core::Result<()> {
    let mut config = Config { hidden: 32, encoder_layers: 2, executor_layers: 2, epochs: 3, ..Config::default() };
    let (mut scripts, mut heldout, mut workers) = (400usize, 200usize, 4usize);
    for arg in std::env::args().skip(1) {
        match arg.split_once('=') {
            Some(("scripts", v)) => scripts = v.parse().expect("scripts=<count>"),
            Some(("heldout", v)) => heldout = v.parse().expect("heldout=<count>"),
            Some(("workers", v)) => workers = v.parse().expect("workers=<count>"),
            _ => config.set(&arg)?,
        }
    }
    let train = misuse_corpus(config.seed, scripts, (5, 20), 0.5);
    let test = misuse_corpus(config.seed + 1_000_003, heldout, (5, 20), 0.5);
    let model = Model::new(&config, build_vocab(&train, &config));
    let (train, _) = prepare(&train);
    let (test, _) = prepare(&test);

    let started = Instant::now();
    let total = steps_per_epoch(train.len(), &config) * config.epochs as u64;
    let mut trainer = Trainer::new(model, total, workers);
    train_misuse(&mut trainer, &train, |r| {
        if r.step % 10 == 0 {
            println!(
                "step {:4}  L1m {:.3} L2m {:.3} L3m {:.3} L4m {:.3} L5m {:.3}  {:.0}s",
                r.step,
                r.l1m,
                r.l2m,
                r.l3m,
                r.l4m,
                r.l5m,
                started.elapsed().as_secs_f64()
            );
        }
    });
    let (e, _) = evaluate_misuse(&trainer.model, &test, workers);
    println!(
        "held-out: AUC {:.3}  classification {:.3}  call {:.3}  argument {:.3}  repair {:.3} (chance {:.3})  ({:.0}s)",
        e.auc,
        e.classification_acc,
        e.call_acc,
        e.arg_acc,
        e.repair_acc,
        e.repair_chance,
        started.elapsed().as_secs_f64()
    );
    if let Some((p, s)) = predict_misuse(&trainer.model, &test, workers).into_iter().zip(&test).find(|(_, s)| s.script.has_misuse()) {
        println!("\n{}", s.script.code);
        println!("p_misuse {:.3}", p.p_misuse);
        for step in &p.explanation_path {
            println!("  -> {step}");
        }
    }
    Ok(())
}
