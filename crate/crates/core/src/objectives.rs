//! The three execution-based objectives: return-variable classification,
//! argument discrimination and data-flow discrimination.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::Serialize;

use crate::autodiff::Var;
use crate::dfg::trace_dfg;
use crate::interp::{GuessSource, ObjectId};
use crate::runtime::BatchRun;
use crate::syntax::NodeKind;

/// One objective's contribution: mean loss, correct decisions and decisions.
#[derive(Debug, Clone, Copy)]
pub struct Part {
    pub loss: Var,
    pub value: f64,
    pub correct: usize,
    pub total: usize,
}

impl Part {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SemanticsMetrics {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub acc1: f64,
    pub acc2: f64,
    pub acc3: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    /// Loss node of each part, when it had samples.
    #[serde(skip)]
    pub parts: [Option<Var>; 3],
}

impl SemanticsMetrics {
    pub fn total(&self) -> f64 {
        self.l1 + self.l2 + self.l3
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy over `k` candidate names per assignment. The true
/// name sits at a random position among `k - 1` other names of the batch.
pub fn return_variable_loss<R: Rng>(run: &mut BatchRun, k: usize, samples: usize, rng: &mut R) -> Option<Part> {
    let mut sites = Vec::new();
    let mut by_name: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for (s, gen) in run.generated.iter().enumerate() {
        if !run.usable(s) {
            continue;
        }
        for (i, a) in gen.trace.assignments.iter().enumerate() {
            if gen.trace.object(a.rhs).executed.is_some() {
                sites.push((s, i));
            }
            by_name.entry(a.name.as_str()).or_default().push((s, i));
        }
    }
    if by_name.len() < k || sites.is_empty() {
        return None;
    }
    let names: Vec<&str> = by_name.keys().copied().collect();
    sites.shuffle(rng);
    sites.truncate(samples);

    let mut plans = Vec::with_capacity(sites.len());
    for &(s, i) in &sites {
        let name = run.generated[s].trace.assignments[i].name.as_str();
        let others: Vec<&str> = names.iter().copied().filter(|n| *n != name).collect();
        let mut cands: Vec<(usize, usize)> =
            others.choose_multiple(rng, k - 1).map(|n| *by_name[n].choose(rng).expect("non-empty")).collect();
        let pos = rng.random_range(0..k);
        cands.insert(pos, (s, i));
        plans.push((s, i, cands, pos));
    }

    let mut rows = Vec::with_capacity(plans.len() * k);
    for (s, i, cands, _) in &plans {
        let rhs = run.generated[*s].trace.assignments[*i].rhs;
        let r = run.eval.value(*s, rhs);
        for &(cs, ci) in cands {
            let site = &run.generated[cs].trace.assignments[ci];
            let src = GuessSource::Pool { node_id: site.lhs_node, span: site.lhs_span, kind: NodeKind::Identifier };
            let l = run.eval.guess_source(cs, &src, false);
            rows.push(run.eval.g.concat_cols(&[r, l]));
        }
    }
    let g = &mut run.eval.g;
    let x = g.concat_rows(&rows);
    let logits = run.eval.model.semantics.alpha.forward(g, x);
    let logits = g.reshape(logits, plans.len(), k);
    let values = g.value(logits).clone();
    let mut losses = Vec::with_capacity(plans.len());
    let mut correct = 0;
    for (n, (_, _, _, pos)) in plans.iter().enumerate() {
        let row = g.row(logits, n);
        losses.push(g.cross_entropy(row, *pos));
        correct += usize::from(argmax(values.row(n)) == *pos);
    }
    let loss = g.mean(&losses);
    Some(Part { loss, value: g.value(loss).item(), correct, total: plans.len() })
}

/// Binary cross-entropy between each call's return and the return of the same
/// call with one argument swapped for a random object of the batch.
pub fn argument_discrimination_loss<R: Rng>(run: &mut BatchRun, samples: usize, replace_all: bool, rng: &mut R) -> Option<Part> {
    let mut calls = Vec::new();
    let mut pool: Vec<(usize, ObjectId)> = Vec::new();
    for (s, gen) in run.generated.iter().enumerate() {
        if !run.usable(s) {
            continue;
        }
        for r in &gen.trace.records {
            if !r.args.is_empty() {
                calls.push((s, r.id));
            }
        }
        pool.extend(gen.trace.objects.iter().map(|o| (s, o.id)));
    }
    if calls.len() < 2 || pool.len() < 2 {
        return None;
    }
    calls.shuffle(rng);
    calls.truncate(samples);

    let mut positives = Vec::with_capacity(calls.len());
    let mut inputs = Vec::with_capacity(calls.len());
    for &(s, rid) in &calls {
        let record = run.generated[s].trace.record(rid).clone();
        positives.push(run.eval.executed(s, rid));
        let pick = |orig: ObjectId, rng: &mut R| loop {
            let cand = *pool.choose(rng).expect("non-empty");
            if cand != (s, orig) {
                return cand;
            }
        };
        let mut input = run.eval.input_for(s, &record, None);
        let slots: Vec<usize> = if replace_all { (0..record.args.len()).collect() } else { vec![rng.random_range(0..record.args.len())] };
        for i in slots {
            let (ps, po) = pick(record.args[i], rng);
            input.args[i] = run.eval.arg_pair(ps, po);
        }
        inputs.push(input);
    }
    let negatives = run.eval.replay(&inputs);
    let n = calls.len();
    let g = &mut run.eval.g;
    let beta = &run.eval.model.semantics.beta;
    let pos = g.concat_rows(&positives);
    let neg = g.concat_rows(&negatives);
    let zp = beta.forward(g, pos);
    let zn = beta.forward(g, neg);
    let lp = g.bce_with_logits(zp, &vec![1.0; n]);
    let ln = g.bce_with_logits(zn, &vec![0.0; n]);
    let sum = g.add(lp, ln);
    let loss = g.scale(sum, 1.0 / n as f64);
    let correct = g.value(zp).data.iter().filter(|&&z| z > 0.0).count() + g.value(zn).data.iter().filter(|&&z| z <= 0.0).count();
    Some(Part { loss, value: g.value(loss).item(), correct, total: 2 * n })
}

/// Binary cross-entropy over object pairs with and without a data-flow path.
pub fn dataflow_loss<R: Rng>(run: &mut BatchRun, samples: usize, rng: &mut R) -> Option<Part> {
    struct Eligible {
        script: usize,
        graph: crate::dfg::DataFlowGraph,
        sources: Vec<ObjectId>,
        participants: Vec<ObjectId>,
    }
    let mut eligible = Vec::new();
    for (s, gen) in run.generated.iter().enumerate() {
        if !run.usable(s) {
            continue;
        }
        let graph = trace_dfg(&gen.trace);
        let participants = graph.participants();
        let sources: Vec<ObjectId> = participants.iter().copied().filter(|&o| !graph.successors(o).is_empty()).collect();
        if participants.len() >= 3 && !sources.is_empty() {
            eligible.push(Eligible { script: s, graph, sources, participants });
        }
    }
    if eligible.is_empty() {
        return None;
    }
    let mut pairs = Vec::new();
    for _ in 0..samples {
        let e = eligible.choose(rng).expect("non-empty");
        let b = *e.sources.choose(rng).expect("non-empty");
        let reach = e.graph.reachable(b);
        let desc: Vec<ObjectId> = e.participants.iter().copied().filter(|&o| o != b && reach[o as usize]).collect();
        let Some(&c) = desc.choose(rng) else { continue };
        let mut negative = None;
        for _ in 0..32 {
            let x = *e.participants.choose(rng).expect("non-empty");
            let y = *e.participants.choose(rng).expect("non-empty");
            if x != y && !e.graph.has_path(x, y) {
                negative = Some((x, y));
                break;
            }
        }
        if let Some((x, y)) = negative {
            pairs.push((e.script, (b, c), (x, y)));
        }
    }
    if pairs.is_empty() {
        return None;
    }
    let mut pos_rows = Vec::with_capacity(pairs.len());
    let mut neg_rows = Vec::with_capacity(pairs.len());
    for &(s, (b, c), (x, y)) in &pairs {
        let vb = run.eval.value(s, b);
        let vc = run.eval.value(s, c);
        let vx = run.eval.value(s, x);
        let vy = run.eval.value(s, y);
        pos_rows.push(run.eval.g.concat_cols(&[vb, vc]));
        neg_rows.push(run.eval.g.concat_cols(&[vx, vy]));
    }
    let n = pairs.len();
    let g = &mut run.eval.g;
    let phi = &run.eval.model.semantics.phi;
    let pos = g.concat_rows(&pos_rows);
    let neg = g.concat_rows(&neg_rows);
    let zp = phi.forward(g, pos);
    let zn = phi.forward(g, neg);
    let lp = g.bce_with_logits(zp, &vec![1.0; n]);
    let ln = g.bce_with_logits(zn, &vec![0.0; n]);
    let sum = g.add(lp, ln);
    let loss = g.scale(sum, 1.0 / n as f64);
    let correct = g.value(zp).data.iter().filter(|&&z| z > 0.0).count() + g.value(zn).data.iter().filter(|&&z| z <= 0.0).count();
    Some(Part { loss, value: g.value(loss).item(), correct, total: 2 * n })
}

/// `L = L1 + L2 + L3` over the parts that had enough material in the batch.
pub fn semantics_loss<R: Rng>(
    run: &mut BatchRun,
    k: usize,
    samples: usize,
    replace_all: bool,
    rng: &mut R,
) -> (Option<Var>, SemanticsMetrics) {
    let p1 = return_variable_loss(run, k, samples, rng);
    let p2 = argument_discrimination_loss(run, samples, replace_all, rng);
    let p3 = dataflow_loss(run, samples, rng);
    let mut m = SemanticsMetrics::default();
    let mut parts = Vec::new();
    m.parts = [p1.map(|p| p.loss), p2.map(|p| p.loss), p3.map(|p| p.loss)];
    for (p, (l, acc, n, c)) in [p1, p2, p3].into_iter().zip([
        (&mut m.l1, &mut m.acc1, &mut m.n1, &mut m.c1),
        (&mut m.l2, &mut m.acc2, &mut m.n2, &mut m.c2),
        (&mut m.l3, &mut m.acc3, &mut m.n3, &mut m.c3),
    ]) {
        if let Some(p) = p {
            *l = p.value;
            *acc = p.accuracy();
            *n = p.total;
            *c = p.correct;
            parts.push(p.loss);
        }
    }
    let total = (!parts.is_empty()).then(|| run.eval.g.sum(&parts));
    (total, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    use crate::runtime::{run_batch, ExecMode, RunOptions, ScriptJob};
    use crate::syntax::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SCRIPTS: [&str; 3] = [
        "a = f(x)\nb = a + y\nc = g(b, a)\nd = [c, b]\n",
        "total = 0\nfor i in items:\n    total = total + i * price\nreport(total)\n",
        "def h(p, q):\n    r = p - q\n    return r\nz = h(3, w)\nu = z * 2\n",
    ];

    #[test]
    fn all_three_parts_are_finite_and_counted() {
        let m = crate::testutil::tiny_model(1);
        let trees: Vec<_> = SCRIPTS.iter().map(|s| parse(s).unwrap()).collect();
        let jobs: Vec<_> = trees.iter().map(|t| ScriptJob { tree: t, misuse_node: None }).collect();
        let mut run = run_batch(&m, &jobs, &RunOptions { max_args: 16, cap: None, mode: ExecMode::Serial });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (loss, metrics) = semantics_loss(&mut run, 4, 16, false, &mut rng);
        let loss = loss.unwrap();
        assert!(metrics.n1 > 0 && metrics.n2 > 0 && metrics.n3 > 0, "{metrics:?}");
        let total = run.eval.g.value(loss).item();
        assert!((total - metrics.total()).abs() < 1e-9);
        // Chance level for a 4-way choice and two balanced binary tasks.
        assert!(metrics.l1 > 0.5 && metrics.l2 > 0.3 && metrics.l3 > 0.3);
        let grads = run.eval.g.backward(loss).unwrap();
        assert!(grads.iter().count() > 0);
    }

    #[test]
    fn return_variable_needs_k_names() {
        let m = crate::testutil::tiny_model(1);
        let tree = parse("a = f(1)\nb = a\n").unwrap();
        let jobs = [ScriptJob { tree: &tree, misuse_node: None }];
        let mut run = run_batch(&m, &jobs, &RunOptions { max_args: 16, cap: None, mode: ExecMode::Serial });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(return_variable_loss(&mut run, 3, 8, &mut rng).is_none());
        assert!(return_variable_loss(&mut run, 2, 8, &mut rng).is_some());
    }
}
