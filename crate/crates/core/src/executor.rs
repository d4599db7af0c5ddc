//! The λ network. One encoder serves every function: the signature vector
//! sits at the first position and selects the behaviour.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParameterStore, Segment, Var};
use crate::nn::{Encoder, Linear};

/// Most context vectors that get distinct position embeddings; deeper
/// nesting shares the last one.
pub const MAX_CONTEXT_POSITIONS: usize = 32;

const ROLE_THETA: usize = 0;
const ROLE_CONTEXT: usize = 1;
const ROLE_ARG: usize = 2;

#[derive(Debug, Clone)]
pub struct Executor {
    pub proj: Linear,
    pub roles: ParamId,
    /// Row 0 for the signature, then context slots, then argument slots.
    pub positions: ParamId,
    pub encoder: Encoder,
    pub max_args: usize,
}

/// One call: every vector is a `1 x H` row.
#[derive(Debug, Clone)]
pub struct ExecInput {
    pub theta: Var,
    /// Outermost first.
    pub contexts: Vec<Var>,
    /// (guessed, executed) per argument.
    pub args: Vec<(Var, Var)>,
}

/// Outputs of a batch of calls, stacked row-wise.
#[derive(Debug, Clone)]
pub struct ExecOutput {
    pub rows: Var,
    pub segments: Vec<Segment>,
    pub contexts: Vec<usize>,
}

impl ExecOutput {
    pub fn ret_row(&self, i: usize) -> usize {
        self.segments[i].start
    }

    /// Rows aligned with the arguments of call `i`.
    pub fn arg_rows(&self, i: usize) -> std::ops::Range<usize> {
        let s = self.segments[i];
        s.start + 1 + self.contexts[i]..s.start + s.len
    }
}

impl Executor {
    pub fn new<R: Rng>(store: &mut ParameterStore, hidden: usize, layers: usize, heads: usize, max_args: usize, rng: &mut R) -> Self {
        Executor {
            proj: Linear::new(store, "executor.proj", 2 * hidden, hidden, rng),
            roles: store.add_normal("executor.roles", 3, hidden, 0.1, rng),
            positions: store.add_normal("executor.positions", 1 + MAX_CONTEXT_POSITIONS + max_args, hidden, 0.1, rng),
            encoder: Encoder::new(store, "executor.encoder", hidden, layers, heads, rng),
            max_args,
        }
    }

    /// Runs every call in one encoder pass. Calls never see each other, so a
    /// call's outputs are the same whether it runs alone or in a batch.
    pub fn forward(&self, g: &mut Graph, inputs: &[ExecInput]) -> ExecOutput {
        assert!(!inputs.is_empty(), "internal fault: executor batch is empty");
        let thetas: Vec<Var> = inputs.iter().map(|i| i.theta).collect();
        let contexts: Vec<Var> = inputs.iter().flat_map(|i| i.contexts.iter().copied()).collect();
        let guessed: Vec<Var> = inputs.iter().flat_map(|i| i.args.iter().map(|a| a.0)).collect();
        let executed: Vec<Var> = inputs.iter().flat_map(|i| i.args.iter().map(|a| a.1)).collect();
        if inputs.iter().any(|i| i.args.len() > self.max_args) {
            panic!("internal fault: more than {} arguments", self.max_args);
        }

        let mut parts = vec![g.concat_rows(&thetas)];
        if !contexts.is_empty() {
            parts.push(g.concat_rows(&contexts));
        }
        if !guessed.is_empty() {
            let gm = g.concat_rows(&guessed);
            let em = g.concat_rows(&executed);
            let pair = g.concat_cols(&[gm, em]);
            parts.push(self.proj.forward(g, pair));
        }
        let pool = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts) };

        let (n_theta, n_ctx) = (thetas.len(), contexts.len());
        let mut order = Vec::new();
        let mut roles = Vec::new();
        let mut pos = Vec::new();
        let mut segments = Vec::with_capacity(inputs.len());
        let mut ctx_counts = Vec::with_capacity(inputs.len());
        let (mut next_ctx, mut next_arg) = (n_theta, n_theta + n_ctx);
        for (k, inp) in inputs.iter().enumerate() {
            let start = order.len();
            order.push(k);
            roles.push(ROLE_THETA);
            pos.push(0);
            for c in 0..inp.contexts.len() {
                order.push(next_ctx);
                next_ctx += 1;
                roles.push(ROLE_CONTEXT);
                pos.push(1 + c.min(MAX_CONTEXT_POSITIONS - 1));
            }
            for a in 0..inp.args.len() {
                order.push(next_arg);
                next_arg += 1;
                roles.push(ROLE_ARG);
                pos.push(1 + MAX_CONTEXT_POSITIONS + a);
            }
            segments.push(Segment { start, len: order.len() - start });
            ctx_counts.push(inp.contexts.len());
        }

        let x = g.gather(pool, &order);
        let role_table = g.param(self.roles);
        let r = g.gather(role_table, &roles);
        let pos_table = g.param(self.positions);
        let p = g.gather(pos_table, &pos);
        let x = g.add(x, r);
        let x = g.add(x, p);
        let rows = self.encoder.forward(g, x, &segments, None);
        ExecOutput { rows, segments, contexts: ctx_counts }
    }

    /// The return vector of call `i`.
    pub fn ret(&self, g: &mut Graph, out: &ExecOutput, i: usize) -> Var {
        g.row(out.rows, out.ret_row(i))
    }
}
