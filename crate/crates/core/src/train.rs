//! Training and evaluation loops for the execution objectives and the misuse
//! heads.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{clip_grad_norm, AdamW, Gradients, LinearSchedule};
use crate::config::Config;
use crate::corpus::Script;
use crate::guesser::{tokenize, Vocab};
use crate::misuse::{auc, misuse_loss, predict, MisuseMetrics, MisuseOutcome, MisusePrediction, MisuseTarget};
use crate::model::Model;
use crate::objectives::{semantics_loss, SemanticsMetrics};
use crate::runtime::{run_batch, BatchRun, ExecMode, RunOptions, ScriptJob};
use crate::syntax::{parse, SyntaxTree};

/// A parsed script ready for batching.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub script: Script,
    pub tree: SyntaxTree,
    pub misuse_node: Option<u32>,
}

/// Parses every script; the ones that do not parse are returned by count.
pub fn prepare(scripts: &[Script]) -> (Vec<Prepared>, usize) {
    let mut out = Vec::with_capacity(scripts.len());
    let mut failed = 0;
    for s in scripts {
        match parse(&s.code) {
            Ok(tree) => {
                let misuse_node = s.misuse_node(&tree);
                out.push(Prepared { script: s.clone(), tree, misuse_node });
            }
            Err(_) => failed += 1,
        }
    }
    (out, failed)
}

pub fn build_vocab(scripts: &[Script], config: &Config) -> Vocab {
    let tokens: Vec<String> =
        scripts.iter().flat_map(|s| tokenize(&s.code, config.max_tokens).into_iter().map(|t| t.text)).collect();
    Vocab::build(tokens.iter().map(String::as_str), config.vocab_min_count, config.vocab_max_size, config.oov_buckets)
}

fn jobs<'a>(batch: &[&'a Prepared]) -> Vec<ScriptJob<'a>> {
    batch.iter().map(|p| ScriptJob { tree: &p.tree, misuse_node: p.misuse_node }).collect()
}

fn run_options(config: &Config, workers: usize) -> RunOptions {
    let mode = if workers <= 1 { ExecMode::Serial } else { ExecMode::Pooled { workers } };
    RunOptions { max_args: config.max_args, cap: config.lambda_cap(), mode }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BatchRecord {
    pub step: u64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub acc1: f64,
    pub acc2: f64,
    pub acc3: f64,
    pub scripts_skipped: usize,
    pub lambda_calls: usize,
    /// True for the closing evaluation pass over the training split.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub eval: bool,
}

/// Misuse counterpart of [`BatchRecord`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MisuseRecord {
    pub step: u64,
    #[serde(rename = "L1m")]
    pub l1m: f64,
    #[serde(rename = "L2m")]
    pub l2m: f64,
    #[serde(rename = "L3m")]
    pub l3m: f64,
    #[serde(rename = "L4m")]
    pub l4m: f64,
    #[serde(rename = "L5m")]
    pub l5m: f64,
    pub scripts_skipped: usize,
    pub lambda_calls: usize,
}

/// Optimizer state around a model.
pub struct Trainer {
    pub model: Model,
    opt: AdamW,
    schedule: LinearSchedule,
    rng: ChaCha8Rng,
    pub step: u64,
    pub workers: usize,
}

impl Trainer {
    pub fn new(model: Model, total_steps: u64, workers: usize) -> Self {
        let c = &model.config;
        let opt = AdamW::new(&model.store, c.weight_decay);
        let schedule = LinearSchedule { peak: c.lr, total_steps: total_steps.max(1), warmup_frac: c.warmup_frac };
        let rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x0074_7261_696e);
        Trainer { model, opt, schedule, rng, step: 0, workers }
    }

    fn apply(&mut self, grads: &Gradients) {
        let store = &mut self.model.store;
        store.zero_grad();
        store.accumulate(grads);
        clip_grad_norm(store, self.model.config.clip_norm);
        let lr = self.schedule.lr(self.step);
        self.opt.step(store, lr);
        self.step += 1;
    }

    /// Runs one batch of the execution objectives and updates the model.
    pub fn semantics_step(&mut self, batch: &[&Prepared]) -> BatchRecord {
        let opts = run_options(&self.model.config, self.workers);
        let c = &self.model.config;
        let (k, samples, replace_all) = (c.k_negatives, c.samples_per_loss, c.l2_replace_all);
        let js = jobs(batch);
        let mut run = run_batch(&self.model, &js, &opts);
        let (loss, m) = semantics_loss(&mut run, k, samples, replace_all, &mut self.rng);
        let mut rec = record(self.step, &m, &run);
        let grads = loss.map(|l| run.eval.g.backward(l).expect("finite graph"));
        drop(run);
        if let Some(g) = grads {
            self.apply(&g);
        } else {
            self.step += 1;
        }
        rec.step = self.step;
        rec
    }

    pub fn misuse_step(&mut self, batch: &[&Prepared]) -> MisuseRecord {
        let opts = run_options(&self.model.config, self.workers);
        let js = jobs(batch);
        let targets = targets(batch);
        let mut run = run_batch(&self.model, &js, &opts);
        let (loss, m, _) = misuse_loss(&mut run, &targets);
        let skipped = run.skipped();
        let calls = run.eval.lambda_calls;
        let grads = loss.map(|l| run.eval.g.backward(l).expect("finite graph"));
        drop(run);
        if let Some(g) = grads {
            self.apply(&g);
        } else {
            self.step += 1;
        }
        MisuseRecord {
            step: self.step,
            l1m: m.l1m,
            l2m: m.l2m,
            l3m: m.l3m,
            l4m: m.l4m,
            l5m: m.l5m,
            scripts_skipped: skipped,
            lambda_calls: calls,
        }
    }

    /// Shuffled batches of one epoch.
    pub fn epoch_order(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        idx.chunks(self.model.config.batch_size).map(<[usize]>::to_vec).collect()
    }
}

fn record(step: u64, m: &SemanticsMetrics, run: &BatchRun) -> BatchRecord {
    BatchRecord {
        step,
        l1: m.l1,
        l2: m.l2,
        l3: m.l3,
        acc1: m.acc1,
        acc2: m.acc2,
        acc3: m.acc3,
        scripts_skipped: run.skipped(),
        lambda_calls: run.eval.lambda_calls,
        eval: false,
    }
}

fn targets(batch: &[&Prepared]) -> Vec<MisuseTarget> {
    batch
        .iter()
        .map(|p| MisuseTarget {
            has_misuse: p.script.has_misuse(),
            correct_name: p.script.misuse.as_ref().and_then(|m| m.correct_name.clone()),
        })
        .collect()
}

pub fn steps_per_epoch(n: usize, config: &Config) -> u64 {
    n.div_ceil(config.batch_size) as u64
}

/// Why a training loop returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stop {
    Epochs,
    TimeBudget,
}

/// Trains the execution objectives for `config.epochs` epochs or until the
/// time budget runs out, reporting every batch.
pub fn train_semantics(trainer: &mut Trainer, data: &[Prepared], mut on_batch: impl FnMut(&BatchRecord)) -> Stop {
    let start = Instant::now();
    let budget = trainer.model.config.time_budget_secs;
    for _ in 0..trainer.model.config.epochs {
        for batch in trainer.epoch_order(data.len()) {
            if budget > 0 && start.elapsed().as_secs() >= budget {
                return Stop::TimeBudget;
            }
            let refs: Vec<&Prepared> = batch.iter().map(|&i| &data[i]).collect();
            let rec = trainer.semantics_step(&refs);
            on_batch(&rec);
        }
    }
    Stop::Epochs
}

pub fn train_misuse(trainer: &mut Trainer, data: &[Prepared], mut on_batch: impl FnMut(&MisuseRecord)) -> Stop {
    let start = Instant::now();
    let budget = trainer.model.config.time_budget_secs;
    for _ in 0..trainer.model.config.epochs {
        for batch in trainer.epoch_order(data.len()) {
            if budget > 0 && start.elapsed().as_secs() >= budget {
                return Stop::TimeBudget;
            }
            let refs: Vec<&Prepared> = batch.iter().map(|&i| &data[i]).collect();
            let rec = trainer.misuse_step(&refs);
            on_batch(&rec);
        }
    }
    Stop::Epochs
}

/// Accuracies over a whole split, pooled over batches in corpus order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SemanticsEval {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub acc1: f64,
    pub acc2: f64,
    pub acc3: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub scripts_skipped: usize,
    pub lambda_calls: usize,
}

impl SemanticsEval {
    pub fn as_record(&self, step: u64) -> BatchRecord {
        BatchRecord {
            step,
            l1: self.l1,
            l2: self.l2,
            l3: self.l3,
            acc1: self.acc1,
            acc2: self.acc2,
            acc3: self.acc3,
            scripts_skipped: self.scripts_skipped,
            lambda_calls: self.lambda_calls,
            eval: true,
        }
    }
}

/// Evaluates the execution objectives with negatives drawn from a generator
/// seeded by the configuration, so repeated calls agree exactly.
pub fn evaluate_semantics(model: &Model, data: &[Prepared], workers: usize) -> SemanticsEval {
    let c = &model.config;
    let opts = run_options(c, workers);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x6576_616c);
    let mut e = SemanticsEval::default();
    let (mut c1, mut c2, mut c3) = (0, 0, 0);
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    let refs: Vec<&Prepared> = data.iter().collect();
    for batch in refs.chunks(c.batch_size) {
        let js = jobs(batch);
        let mut run = run_batch(model, &js, &opts);
        let (_, m) = semantics_loss(&mut run, c.k_negatives, c.samples_per_loss, c.l2_replace_all, &mut rng);
        e.scripts_skipped += run.skipped();
        e.lambda_calls += run.eval.lambda_calls;
        // L1 counts decisions, L2 and L3 count two per sample.
        let w1 = m.n1 as f64;
        let (w2, w3) = (m.n2 as f64 / 2.0, m.n3 as f64 / 2.0);
        s1 += m.l1 * w1;
        s2 += m.l2 * w2;
        s3 += m.l3 * w3;
        (e.n1, e.n2, e.n3) = (e.n1 + m.n1, e.n2 + m.n2, e.n3 + m.n3);
        (c1, c2, c3) = (c1 + m.c1, c2 + m.c2, c3 + m.c3);
    }
    let ratio = |a: f64, n: f64| if n > 0.0 { a / n } else { 0.0 };
    e.l1 = ratio(s1, e.n1 as f64);
    e.l2 = ratio(s2, e.n2 as f64 / 2.0);
    e.l3 = ratio(s3, e.n3 as f64 / 2.0);
    e.acc1 = ratio(c1 as f64, e.n1 as f64);
    e.acc2 = ratio(c2 as f64, e.n2 as f64);
    e.acc3 = ratio(c3 as f64, e.n3 as f64);
    e
}

/// Stepwise accuracies of the four misuse steps over a split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MisuseEval {
    pub scripts: usize,
    pub auc: f64,
    pub classification_acc: f64,
    pub call_acc: f64,
    pub arg_acc: f64,
    pub repair_acc: f64,
    /// Mean of `1 / |snapshot|` over the repair decisions.
    pub repair_chance: f64,
    pub repairs: usize,
    pub label_errors: usize,
    pub unclassifiable: usize,
    pub lambda_calls: usize,
}

fn mean_bool(xs: impl Iterator<Item = bool>) -> (f64, usize) {
    let (mut hit, mut n) = (0usize, 0usize);
    for x in xs {
        hit += usize::from(x);
        n += 1;
    }
    (if n == 0 { 0.0 } else { hit as f64 / n as f64 }, n)
}

/// Evaluates the misuse heads; also returns every script's outcome.
pub fn evaluate_misuse(model: &Model, data: &[Prepared], workers: usize) -> (MisuseEval, Vec<MisuseOutcome>) {
    let c = &model.config;
    let opts = run_options(c, workers);
    let mut outcomes = Vec::with_capacity(data.len());
    let mut e = MisuseEval { scripts: data.len(), ..Default::default() };
    let refs: Vec<&Prepared> = data.iter().collect();
    for (b, batch) in refs.chunks(c.batch_size).enumerate() {
        let js = jobs(batch);
        let mut run = run_batch(model, &js, &opts);
        let (_, m, out): (_, MisuseMetrics, _) = misuse_loss(&mut run, &targets(batch));
        e.label_errors += m.label_errors;
        e.unclassifiable += m.unclassifiable;
        e.lambda_calls += run.eval.lambda_calls;
        outcomes.extend(out.into_iter().map(|mut o| {
            o.script += b * c.batch_size;
            o
        }));
    }
    let scored: Vec<(f64, bool)> = outcomes.iter().filter_map(|o| Some((o.p_misuse?, o.has_misuse))).collect();
    e.auc = auc(&scored);
    e.classification_acc = mean_bool(scored.iter().map(|&(p, y)| (p > 0.5) == y)).0;
    e.call_acc = mean_bool(outcomes.iter().filter_map(MisuseOutcome::call_correct)).0;
    e.arg_acc = mean_bool(outcomes.iter().filter_map(MisuseOutcome::arg_correct)).0;
    let (repair, n) = mean_bool(outcomes.iter().filter_map(MisuseOutcome::repair_correct));
    e.repair_acc = repair;
    e.repairs = n;
    let sizes: Vec<f64> = outcomes.iter().filter(|o| o.gold_repair.is_some()).map(|o| 1.0 / o.snapshot_len as f64).collect();
    e.repair_chance = if sizes.is_empty() { 0.0 } else { sizes.iter().sum::<f64>() / sizes.len() as f64 };
    (e, outcomes)
}

/// Inference chain for every script, using predictions at each step.
pub fn predict_misuse(model: &Model, data: &[Prepared], workers: usize) -> Vec<MisusePrediction> {
    let c = &model.config;
    let opts = run_options(c, workers);
    let mut out = Vec::with_capacity(data.len());
    let refs: Vec<&Prepared> = data.iter().collect();
    for batch in refs.chunks(c.batch_size) {
        let js = jobs(batch);
        let mut run = run_batch(model, &js, &opts);
        // Inference ignores gold labels: targets only feed the losses.
        let blank: Vec<MisuseTarget> = batch.iter().map(|_| MisuseTarget { has_misuse: false, correct_name: None }).collect();
        let (_, _, outcomes) = misuse_loss(&mut run, &blank);
        for (s, o) in outcomes.iter().enumerate() {
            out.push(predict(&mut run, &js[s], s, &batch[s].script.id, o));
        }
    }
    out
}
