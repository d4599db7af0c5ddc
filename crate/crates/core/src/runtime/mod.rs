//! Turns symbolic traces into vectors. The [`Evaluator`] owns the computation
//! graph of one batch; interpreters running on worker threads only describe
//! lambda calls, and the evaluator executes them.

mod pool;

use std::collections::HashMap;

use crate::autodiff::{Graph, Var};
use crate::builtins::{FUNCTION_DEFAULT, VALUE_DEFAULT};
use crate::executor::{ExecInput, ExecOutput};
use crate::guesser::{tokenize, tokens_within, Token};
use crate::interp::{AbstractObject, FunctionValue, GuessSource, LambdaRecord, ObjectId, RecordId, Theta};
use crate::model::Model;
use crate::syntax::NodeKind;

pub use pool::{run_batch, BatchRun, ExecMode, RunOptions, ScriptJob};

/// A lambda call issued by the interpreter of script `script`.
#[derive(Debug, Clone)]
pub struct CallRequest {
    pub script: usize,
    pub record: LambdaRecord,
    pub new_objects: Vec<AbstractObject>,
}

#[derive(Debug, Default)]
struct ScriptState {
    tokens: Vec<Token>,
    offset: usize,
    objects: Vec<AbstractObject>,
    guesses: HashMap<(GuessSource, bool), Var>,
    executed: Vec<Var>,
    /// (forward index, position in that forward) per record.
    calls: Vec<(usize, usize)>,
}

pub struct Evaluator<'m> {
    pub model: &'m Model,
    pub g: Graph<'m>,
    scripts: Vec<ScriptState>,
    encoded: Option<Var>,
    table_rows: HashMap<(bool, usize), Var>,
    outputs: Vec<ExecOutput>,
    /// Calls executed on behalf of interpreters.
    pub lambda_calls: usize,
    /// Executor passes over interpreter calls.
    pub executor_forwards: usize,
    /// Extra passes for negatives and repair candidates.
    pub replay_forwards: usize,
}

impl<'m> Evaluator<'m> {
    /// Encodes every source in one guesser pass.
    pub fn new(model: &'m Model, sources: &[&str]) -> Self {
        let mut g = Graph::new(&model.store);
        let mut scripts = Vec::with_capacity(sources.len());
        let mut seqs = Vec::with_capacity(sources.len());
        for src in sources {
            let tokens = tokenize(src, model.config.max_tokens);
            seqs.push(tokens.iter().map(|t| model.vocab.id(&t.text)).collect::<Vec<_>>());
            scripts.push(ScriptState { tokens, ..Default::default() });
        }
        let encoded = model.guesser.encode(&mut g, &seqs);
        if let Some(enc) = &encoded {
            for (s, off) in scripts.iter_mut().zip(&enc.offsets) {
                s.offset = *off;
            }
        }
        Evaluator {
            model,
            g,
            scripts,
            encoded: encoded.map(|e| e.rows),
            table_rows: HashMap::new(),
            outputs: Vec::new(),
            lambda_calls: 0,
            executor_forwards: 0,
            replay_forwards: 0,
        }
    }

    pub fn script_count(&self) -> usize {
        self.scripts.len()
    }

    fn builtin_row(&mut self, idx: usize) -> Var {
        self.table_row(false, idx)
    }

    fn table_row(&mut self, unpack: bool, idx: usize) -> Var {
        if let Some(v) = self.table_rows.get(&(unpack, idx)) {
            return *v;
        }
        let table = if unpack { self.model.unpack_emb } else { self.model.builtin_emb };
        let t = self.g.param(table);
        let v = self.g.row(t, idx);
        self.table_rows.insert((unpack, idx), v);
        v
    }

    fn default_row(&mut self, function: bool, kind: NodeKind) -> Var {
        let name = if function { FUNCTION_DEFAULT } else { VALUE_DEFAULT };
        let idx = self.model.builtins.get(name).expect("default rows are builtins");
        let row = self.builtin_row(idx);
        let t = self.model.guesser.type_embedding(&mut self.g, kind);
        self.g.add(row, t)
    }

    /// The guessed vector described by `source` in script `s`. Each source is
    /// pooled at most once per script.
    pub fn guess_source(&mut self, s: usize, source: &GuessSource, function: bool) -> Var {
        let key = (source.clone(), function && matches!(source, GuessSource::Pool { .. }));
        if let Some(v) = self.scripts[s].guesses.get(&key) {
            return *v;
        }
        let v = match source {
            GuessSource::Builtin(idx) => self.builtin_row(*idx),
            GuessSource::UnpackIndex(i) => self.table_row(true, (*i).min(self.model.config.max_args - 1)),
            GuessSource::Pool { span, kind, .. } => {
                let st = &self.scripts[s];
                let rows: Vec<usize> = tokens_within(&st.tokens, *span).into_iter().map(|r| r + st.offset).collect();
                match self.encoded {
                    Some(enc) if !rows.is_empty() => self.model.guesser.pool(&mut self.g, enc, &rows, *kind),
                    _ => self.default_row(key.1, *kind),
                }
            }
        };
        self.scripts[s].guesses.insert(key, v);
        v
    }

    pub fn object(&self, s: usize, id: ObjectId) -> &AbstractObject {
        &self.scripts[s].objects[id as usize - 1]
    }

    pub fn objects(&self, s: usize) -> &[AbstractObject] {
        &self.scripts[s].objects
    }

    /// Guessed vector of an object.
    pub fn guess(&mut self, s: usize, id: ObjectId) -> Var {
        let src = self.object(s, id).guess.clone();
        self.guess_source(s, &src, false)
    }

    /// Executed vector when there is one, else the guess.
    pub fn value(&mut self, s: usize, id: ObjectId) -> Var {
        match self.object(s, id).executed {
            Some(r) => self.scripts[s].executed[r as usize],
            None => self.guess(s, id),
        }
    }

    pub fn executed(&self, s: usize, record: RecordId) -> Var {
        self.scripts[s].executed[record as usize]
    }

    pub fn executed_count(&self, s: usize) -> usize {
        self.scripts[s].executed.len()
    }

    pub fn theta(&mut self, s: usize, f: &FunctionValue) -> Var {
        match f.theta {
            Theta::Builtin(idx) => self.builtin_row(idx),
            Theta::Object(id) => match self.object(s, id).executed {
                Some(r) => self.scripts[s].executed[r as usize],
                None => {
                    let src = self.object(s, id).guess.clone();
                    self.guess_source(s, &src, true)
                }
            },
        }
    }

    /// The (guessed, executed) pair fed to the executor for an argument.
    pub fn arg_pair(&mut self, s: usize, id: ObjectId) -> (Var, Var) {
        let guess = self.guess(s, id);
        (guess, self.value(s, id))
    }

    /// Executor input for `record`; `replace` swaps one argument pair.
    pub fn input_for(&mut self, s: usize, record: &LambdaRecord, replace: Option<(usize, (Var, Var))>) -> ExecInput {
        let theta = self.theta(s, &record.callee);
        let contexts = record.contexts.iter().map(|&c| self.value(s, c)).collect();
        let mut args: Vec<(Var, Var)> = record.args.iter().map(|&a| self.arg_pair(s, a)).collect();
        if let Some((i, pair)) = replace {
            args[i] = pair;
        }
        ExecInput { theta, contexts, args }
    }

    /// Executes interpreter calls in one executor pass.
    pub fn execute(&mut self, requests: Vec<CallRequest>) {
        if requests.is_empty() {
            return;
        }
        let mut inputs = Vec::with_capacity(requests.len());
        for req in &requests {
            let st = &mut self.scripts[req.script];
            st.objects.extend(req.new_objects.iter().cloned());
            assert_eq!(st.executed.len(), req.record.id as usize, "internal fault: calls out of order");
            inputs.push(self.input_for(req.script, &req.record, None));
        }
        let out = self.model.executor.forward(&mut self.g, &inputs);
        let fwd = self.outputs.len();
        for (i, req) in requests.iter().enumerate() {
            let r = self.model.executor.ret(&mut self.g, &out, i);
            let st = &mut self.scripts[req.script];
            st.executed.push(r);
            st.calls.push((fwd, i));
        }
        self.outputs.push(out);
        self.lambda_calls += requests.len();
        self.executor_forwards += 1;
    }

    /// Runs calls that are not part of any trace; returns their return vectors.
    pub fn replay(&mut self, inputs: &[ExecInput]) -> Vec<Var> {
        if inputs.is_empty() {
            return Vec::new();
        }
        let out = self.model.executor.forward(&mut self.g, inputs);
        self.replay_forwards += 1;
        (0..inputs.len()).map(|i| self.model.executor.ret(&mut self.g, &out, i)).collect()
    }

    /// Aligned argument outputs of an executed call.
    pub fn arg_outputs(&mut self, s: usize, record: RecordId) -> Vec<Var> {
        let (fwd, i) = self.scripts[s].calls[record as usize];
        let out = &self.outputs[fwd];
        let (rows, range) = (out.rows, out.arg_rows(i));
        range.map(|r| self.g.row(rows, r)).collect()
    }

    /// Replaces the mirrored object table with the final one of the trace.
    pub fn sync_objects(&mut self, s: usize, objects: &[AbstractObject]) {
        self.scripts[s].objects = objects.to_vec();
    }
}

#[cfg(test)]
mod tests;
