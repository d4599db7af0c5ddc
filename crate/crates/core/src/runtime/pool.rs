use std::sync::mpsc::{channel, Receiver, Sender};

use super::{CallRequest, Evaluator};
use crate::codegen::{generate, CodegenOptions, Generated};
use crate::error::{Abort, InternalFault};
use crate::interp::{AbstractObject, Backend, LambdaRecord};
use crate::model::Model;
use crate::syntax::SyntaxTree;

#[derive(Debug, Clone, Copy)]
pub struct ScriptJob<'a> {
    pub tree: &'a SyntaxTree,
    pub misuse_node: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Scripts one after another, one call per executor pass.
    Serial,
    /// Worker threads interpret scripts; every live worker contributes one
    /// call to each executor pass.
    Pooled { workers: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_args: usize,
    /// Lambda calls allowed in the batch.
    pub cap: Option<usize>,
    pub mode: ExecMode,
}

pub struct BatchRun<'m> {
    pub eval: Evaluator<'m>,
    pub generated: Vec<Generated>,
}

impl BatchRun<'_> {
    /// False for scripts aborted by a code generation error or an internal
    /// fault; scripts cut short by the lambda cap stay usable.
    pub fn usable(&self, s: usize) -> bool {
        !matches!(self.generated[s].abort, Some(Abort::Codegen(_) | Abort::Fault(_)))
    }

    pub fn skipped(&self) -> usize {
        (0..self.generated.len()).filter(|&s| !self.usable(s)).count()
    }
}

/// Interprets and executes a batch of scripts.
pub fn run_batch<'m>(model: &'m Model, jobs: &[ScriptJob], opts: &RunOptions) -> BatchRun<'m> {
    let sources: Vec<&str> = jobs.iter().map(|j| j.tree.source.as_str()).collect();
    let mut eval = Evaluator::new(model, &sources);
    let generated = match opts.mode {
        ExecMode::Serial => run_serial(&mut eval, jobs, opts),
        ExecMode::Pooled { workers } => run_pooled(&mut eval, jobs, opts, workers.clamp(1, jobs.len().max(1))),
    };
    for (s, gen) in generated.iter().enumerate() {
        eval.sync_objects(s, &gen.trace.objects);
    }
    BatchRun { eval, generated }
}

fn codegen_options(job: &ScriptJob, opts: &RunOptions) -> CodegenOptions {
    CodegenOptions { max_args: opts.max_args, misuse_node: job.misuse_node, pause_at: None }
}

struct SerialBackend<'e, 'm> {
    eval: &'e mut Evaluator<'m>,
    script: usize,
    cap: Option<usize>,
}

impl Backend for SerialBackend<'_, '_> {
    fn lambda(&mut self, record: &LambdaRecord, new_objects: &[AbstractObject]) -> Result<(), Abort> {
        if self.cap.is_some_and(|c| self.eval.lambda_calls >= c) {
            return Err(Abort::Truncated);
        }
        self.eval.execute(vec![CallRequest { script: self.script, record: record.clone(), new_objects: new_objects.to_vec() }]);
        Ok(())
    }
}

fn run_serial(eval: &mut Evaluator, jobs: &[ScriptJob], opts: &RunOptions) -> Vec<Generated> {
    let model = eval.model;
    let builtins = &model.builtins;
    let mut out = Vec::with_capacity(jobs.len());
    for (s, job) in jobs.iter().enumerate() {
        let mut backend = SerialBackend { eval, script: s, cap: opts.cap };
        out.push(generate(job.tree, builtins, &mut backend, &codegen_options(job, opts)));
    }
    out
}

enum Msg {
    Call { worker: usize, request: CallRequest },
    Done { script: usize, generated: Box<Generated> },
    Exit { worker: usize },
}

struct ChannelBackend<'a> {
    worker: usize,
    script: usize,
    tx: &'a Sender<Msg>,
    ack: &'a Receiver<Result<(), Abort>>,
}

impl Backend for ChannelBackend<'_> {
    fn lambda(&mut self, record: &LambdaRecord, new_objects: &[AbstractObject]) -> Result<(), Abort> {
        let request = CallRequest { script: self.script, record: record.clone(), new_objects: new_objects.to_vec() };
        self.tx
            .send(Msg::Call { worker: self.worker, request })
            .map_err(|_| Abort::Fault(InternalFault::ChannelClosed))?;
        self.ack.recv().map_err(|_| Abort::Fault(InternalFault::ChannelClosed))?
    }
}

fn run_pooled(eval: &mut Evaluator, jobs: &[ScriptJob], opts: &RunOptions, workers: usize) -> Vec<Generated> {
    let mut results: Vec<Option<Generated>> = (0..jobs.len()).map(|_| None).collect();
    if jobs.is_empty() {
        return Vec::new();
    }
    let model = eval.model;
    let builtins = &model.builtins;
    std::thread::scope(|scope| {
        let (tx, rx) = channel::<Msg>();
        let mut acks = Vec::with_capacity(workers);
        for w in 0..workers {
            let (ack_tx, ack_rx) = channel::<Result<(), Abort>>();
            acks.push(ack_tx);
            let tx = tx.clone();
            scope.spawn(move || {
                for s in (w..jobs.len()).step_by(workers) {
                    let mut backend = ChannelBackend { worker: w, script: s, tx: &tx, ack: &ack_rx };
                    let generated = generate(jobs[s].tree, builtins, &mut backend, &codegen_options(&jobs[s], opts));
                    if tx.send(Msg::Done { script: s, generated: Box::new(generated) }).is_err() {
                        return;
                    }
                }
                let _ = tx.send(Msg::Exit { worker: w });
            });
        }
        drop(tx);

        let mut live = vec![true; workers];
        loop {
            let mut waiting = live.clone();
            let mut pending: Vec<(usize, CallRequest)> = Vec::new();
            while waiting.iter().any(|&w| w) {
                match rx.recv().expect("workers alive while waiting") {
                    Msg::Call { worker, request } => {
                        waiting[worker] = false;
                        pending.push((worker, request));
                    }
                    Msg::Done { script, generated } => results[script] = Some(*generated),
                    Msg::Exit { worker } => {
                        waiting[worker] = false;
                        live[worker] = false;
                    }
                }
            }
            if pending.is_empty() {
                break;
            }
            pending.sort_by_key(|(_, r)| r.script);
            let allowed = opts.cap.map_or(pending.len(), |c| c.saturating_sub(eval.lambda_calls));
            let rejected = pending.split_off(allowed.min(pending.len()));
            let accepted: Vec<usize> = pending.iter().map(|p| p.0).collect();
            eval.execute(pending.into_iter().map(|p| p.1).collect());
            for w in accepted {
                let _ = acks[w].send(Ok(()));
            }
            for (w, _) in rejected {
                let _ = acks[w].send(Err(Abort::Truncated));
            }
        }
    });
    results.into_iter().map(|r| r.expect("every script reports back")).collect()
}
