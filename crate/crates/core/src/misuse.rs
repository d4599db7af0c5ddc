//! Four-step variable misuse handling over executed traces: classify the
//! script, find the call the misuse flowed into, find the argument, repair it.

use serde::Serialize;

use crate::autodiff::{sigmoid, Segment, Var};
use crate::codegen::{generate_symbolic, CodegenOptions};
use crate::interp::{ObjectId, RecordId};
use crate::objectives::argmax;
use crate::runtime::{BatchRun, ScriptJob};

/// Where a misuse sits and what it should have been.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MisuseLabel {
    pub script_id: String,
    pub misused_node_id: u32,
    pub correct_name: String,
    pub source_call_record: RecordId,
    pub misused_arg_index: usize,
}

/// What training knows about one script of a misuse batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisuseTarget {
    pub has_misuse: bool,
    pub correct_name: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MisuseMetrics {
    pub l1m: f64,
    pub l2m: f64,
    pub l3m: f64,
    pub l4m: f64,
    pub l5m: f64,
    /// Scripts contributing to each part.
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub n5: usize,
    /// Misuse scripts whose label could not be used.
    pub label_errors: usize,
    /// Scripts without any call.
    pub unclassifiable: usize,
    /// Loss node of each part, when it had samples.
    #[serde(skip)]
    pub parts: [Option<Var>; 5],
}

impl MisuseMetrics {
    pub fn total(&self) -> f64 {
        self.l1m + self.l2m + self.l3m + self.l4m + self.l5m
    }
}

/// Per-script scores; step accuracies assume the gold answer of the
/// previous step, as in stepwise evaluation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MisuseOutcome {
    pub script: usize,
    pub has_misuse: bool,
    pub p_misuse: Option<f64>,
    pub call_logits: Vec<f64>,
    pub gold_call: Option<RecordId>,
    pub gold_arg: Option<usize>,
    pub predicted_call: Option<RecordId>,
    pub predicted_arg_on_gold: Option<usize>,
    pub repair_on_gold: Option<usize>,
    pub gold_repair: Option<usize>,
    pub snapshot_len: usize,
}

impl MisuseOutcome {
    pub fn call_correct(&self) -> Option<bool> {
        Some(self.predicted_call? == self.gold_call?)
    }

    pub fn arg_correct(&self) -> Option<bool> {
        Some(self.predicted_arg_on_gold? == self.gold_arg?)
    }

    pub fn repair_correct(&self) -> Option<bool> {
        Some(self.repair_on_gold? == self.gold_repair?)
    }
}

fn bce_mean_parts(run: &mut BatchRun, parts: Vec<Var>) -> Option<(Var, f64)> {
    if parts.is_empty() {
        return None;
    }
    let g = &mut run.eval.g;
    let loss = g.mean(&parts);
    Some((loss, g.value(loss).item()))
}

/// Computes L1m..L5m and the stepwise predictions of every script.
pub fn misuse_loss(run: &mut BatchRun, targets: &[MisuseTarget]) -> (Option<Var>, MisuseMetrics, Vec<MisuseOutcome>) {
    let n = run.generated.len();
    assert_eq!(targets.len(), n, "internal fault: one target per script");
    let mut metrics = MisuseMetrics::default();
    let mut outcomes: Vec<MisuseOutcome> =
        (0..n).map(|s| MisuseOutcome { script: s, has_misuse: targets[s].has_misuse, ..Default::default() }).collect();

    // Sequences of call returns, one segment per script that made calls.
    let live: Vec<usize> = (0..n).filter(|&s| run.usable(s) && run.eval.executed_count(s) > 0).collect();
    metrics.unclassifiable = n - live.len();
    if live.is_empty() {
        return (None, metrics, outcomes);
    }
    let model = run.eval.model;
    let heads = &model.misuse;
    let mut with_cls = Vec::new();
    let mut plain = Vec::new();
    let mut seg_cls = Vec::new();
    let mut seg_plain = Vec::new();
    let cls = run.eval.g.param(heads.cls);
    for &s in &live {
        let count = run.eval.executed_count(s);
        seg_cls.push(Segment { start: with_cls.len(), len: count + 1 });
        seg_plain.push(Segment { start: plain.len(), len: count });
        with_cls.push(cls);
        for r in 0..count as RecordId {
            let v = run.eval.executed(s, r);
            with_cls.push(v);
            plain.push(v);
        }
    }
    let g = &mut run.eval.g;
    let xc = g.concat_rows(&with_cls);
    let xp = g.concat_rows(&plain);
    let kc = heads.kappa.forward(g, xc, &seg_cls, None);
    let starts: Vec<usize> = seg_cls.iter().map(|s| s.start).collect();
    let kc = g.gather(kc, &starts);
    let class_logits = heads.kappa_out.forward(g, kc);
    let eh = heads.eta.forward(g, xp, &seg_plain, None);
    let eta_logits = heads.eta_out.forward(g, eh);
    let ph = heads.psi.forward(g, xp, &seg_plain, None);
    let psi_logits = heads.psi_out.forward(g, ph);
    let class_values = g.value(class_logits).data.clone();
    let psi_values = g.value(psi_logits).data.clone();

    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut l3 = Vec::new();
    let mut l4 = Vec::new();
    let mut repair_jobs = Vec::new();
    for (k, &s) in live.iter().enumerate() {
        let seg = seg_plain[k];
        let out = &mut outcomes[s];
        out.p_misuse = Some(sigmoid(class_values[k]));
        out.call_logits = psi_values[seg.start..seg.start + seg.len].to_vec();
        out.predicted_call = Some(argmax(&out.call_logits) as RecordId);
        let z = g.row(class_logits, k);
        l1.push(g.bce_with_logits(z, &[f64::from(u8::from(targets[s].has_misuse))]));
        if !targets[s].has_misuse {
            continue;
        }
        let trace = &run.generated[s].trace;
        let Some(obs) = trace.misuse.as_ref() else {
            metrics.label_errors += 1;
            continue;
        };
        let Some(call) = obs.source_call else {
            metrics.label_errors += 1;
            continue;
        };
        out.gold_call = Some(call);
        out.gold_arg = Some(obs.arg_index);
        let rows: Vec<usize> = (seg.start..seg.start + seg.len).collect();
        let labels: Vec<f64> = trace.records[..seg.len].iter().map(|r| f64::from(u8::from(trace.object(r.result).contaminated))).collect();
        let ez = g.gather(eta_logits, &rows);
        l2.push(g.bce_with_logits(ez, &labels));
        let pz = g.gather(psi_logits, &rows);
        let pz = g.reshape(pz, 1, seg.len);
        l3.push(g.cross_entropy(pz, call as usize));
        let correct = targets[s].correct_name.as_deref().and_then(|c| obs.snapshot.iter().position(|(name, _)| name == c));
        match correct {
            Some(idx) => repair_jobs.push((s, call, obs.arg_index, obs.snapshot.iter().map(|b| b.1).collect::<Vec<ObjectId>>(), idx)),
            None => metrics.label_errors += 1,
        }
    }

    // Argument localization on the gold call's aligned outputs.
    for &s in &live {
        let (Some(call), Some(arg)) = (outcomes[s].gold_call, outcomes[s].gold_arg) else { continue };
        let outs = run.eval.arg_outputs(s, call);
        let g = &mut run.eval.g;
        let x = g.concat_rows(&outs);
        let z = heads.tau.forward(g, x);
        let z = g.reshape(z, 1, outs.len());
        outcomes[s].predicted_arg_on_gold = Some(argmax(&g.value(z).data));
        l4.push(g.cross_entropy(z, arg));
    }

    // Repair: re-run the gold call once per candidate, all in one pass.
    let mut inputs = Vec::new();
    for (s, call, arg, cands, _) in &repair_jobs {
        let record = run.generated[*s].trace.record(*call).clone();
        for &o in cands {
            let pair = run.eval.arg_pair(*s, o);
            inputs.push(run.eval.input_for(*s, &record, Some((*arg, pair))));
        }
    }
    let rets = run.eval.replay(&inputs);
    let mut l5 = Vec::new();
    let mut offset = 0;
    for (s, _, _, cands, idx) in &repair_jobs {
        let g = &mut run.eval.g;
        let x = g.concat_rows(&rets[offset..offset + cands.len()]);
        offset += cands.len();
        let z = heads.pi.forward(g, x);
        let z = g.reshape(z, 1, cands.len());
        let out = &mut outcomes[*s];
        out.repair_on_gold = Some(argmax(&g.value(z).data));
        out.gold_repair = Some(*idx);
        out.snapshot_len = cands.len();
        l5.push(g.cross_entropy(z, *idx));
    }

    let mut total = Vec::new();
    for (i, (parts, (value, count))) in [l1, l2, l3, l4, l5].into_iter().zip([
        (&mut metrics.l1m, &mut metrics.n1),
        (&mut metrics.l2m, &mut metrics.n2),
        (&mut metrics.l3m, &mut metrics.n3),
        (&mut metrics.l4m, &mut metrics.n4),
        (&mut metrics.l5m, &mut metrics.n5),
    ]).enumerate() {
        *count = parts.len();
        if let Some((loss, v)) = bce_mean_parts(run, parts) {
            *value = v;
            metrics.parts[i] = Some(loss);
            total.push(loss);
        }
    }
    let loss = (!total.is_empty()).then(|| run.eval.g.sum(&total));
    (loss, metrics, outcomes)
}

/// One inference result: the whole chain uses predictions only.
#[derive(Debug, Clone, Serialize)]
pub struct MisusePrediction {
    pub script_id: String,
    pub p_misuse: f64,
    pub call_record: Option<RecordId>,
    pub arg_index: Option<usize>,
    pub repair_name: Option<String>,
    pub explanation_path: Vec<String>,
}

/// Runs the inference chain for script `s`: predicted call, then the argument
/// with the highest localization score, then the best substitute among the
/// bindings visible when that call ran.
pub fn predict(run: &mut BatchRun, job: &ScriptJob, s: usize, script_id: &str, outcome: &MisuseOutcome) -> MisusePrediction {
    let mut pred = MisusePrediction {
        script_id: script_id.to_string(),
        p_misuse: outcome.p_misuse.unwrap_or(0.5),
        call_record: None,
        arg_index: None,
        repair_name: None,
        explanation_path: Vec::new(),
    };
    let Some(call) = outcome.predicted_call else { return pred };
    pred.call_record = Some(call);
    let record = run.generated[s].trace.record(call).clone();
    pred.explanation_path.push(format!("call #{call} {}", record.callee.name));
    if record.args.is_empty() {
        return pred;
    }
    let heads = &run.eval.model.misuse;
    let outs = run.eval.arg_outputs(s, call);
    let g = &mut run.eval.g;
    let x = g.concat_rows(&outs);
    let z = heads.tau.forward(g, x);
    let arg = argmax(&g.value(z).data);
    pred.arg_index = Some(arg);
    let arg_obj = record.args[arg];
    let origin = run.generated[s].trace.object(arg_obj).origin_node;
    let text = job.tree.find(origin).map_or("?".to_string(), |n| job.tree.text(n).to_string());
    pred.explanation_path.push(format!("argument {arg} `{text}` (object #{arg_obj})"));

    let opts = CodegenOptions { misuse_node: job.misuse_node, pause_at: Some(call), ..Default::default() };
    let paused = generate_symbolic(job.tree, &opts).trace.paused.unwrap_or_default();
    if paused.is_empty() {
        return pred;
    }
    let inputs: Vec<_> = paused
        .iter()
        .map(|&(_, o)| {
            let pair = run.eval.arg_pair(s, o);
            run.eval.input_for(s, &record, Some((arg, pair)))
        })
        .collect();
    let rets = run.eval.replay(&inputs);
    let g = &mut run.eval.g;
    let x = g.concat_rows(&rets);
    let z = heads.pi.forward(g, x);
    let best = argmax(&g.value(z).data);
    pred.repair_name = Some(paused[best].0.clone());
    pred.explanation_path.push(format!("substitute `{}` (object #{})", paused[best].0, paused[best].1));
    pred
}

/// Area under the ROC curve; tied scores count half.
pub fn auc(scores: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_extremes() {
        assert_eq!(auc(&[(0.9, true), (0.1, false)]), 1.0);
        assert_eq!(auc(&[(0.1, true), (0.9, false)]), 0.0);
        assert_eq!(auc(&[(0.5, true), (0.5, false)]), 0.5);
        assert!((auc(&[(0.8, true), (0.4, true), (0.6, false), (0.2, false)]) - 0.75).abs() < 1e-12);
    }

    use crate::runtime::{run_batch, ExecMode, RunOptions};
    use crate::syntax::{parse, NodeKind};

    const MISUSED: &str = "a = 1\nb = 2\nc = f(a, b)\nd = g(c)\ne = h(a)\n";

    fn second_b(tree: &crate::syntax::SyntaxTree) -> u32 {
        tree.nodes().iter().filter(|n| n.kind == NodeKind::Identifier && tree.text(n) == "b").nth(1).unwrap().node_id
    }

    #[test]
    fn five_parts_on_a_mixed_batch() {
        let m = crate::testutil::tiny_model(2);
        let bad = parse(MISUSED).unwrap();
        let good = parse("x = f(1)\ny = g(x, 2)\n").unwrap();
        let empty = parse("pass\n").unwrap();
        let jobs =
            [ScriptJob { tree: &bad, misuse_node: Some(second_b(&bad)) }, ScriptJob { tree: &good, misuse_node: None }, ScriptJob {
                tree: &empty,
                misuse_node: None,
            }];
        let targets = [
            MisuseTarget { has_misuse: true, correct_name: Some("a".into()) },
            MisuseTarget { has_misuse: false, correct_name: None },
            MisuseTarget { has_misuse: false, correct_name: None },
        ];
        let mut run = run_batch(&m, &jobs, &RunOptions { max_args: 16, cap: None, mode: ExecMode::Serial });
        let (loss, metrics, outcomes) = misuse_loss(&mut run, &targets);
        let loss = loss.unwrap();
        assert_eq!((metrics.n1, metrics.n2, metrics.n3, metrics.n4, metrics.n5), (2, 1, 1, 1, 1));
        assert_eq!(metrics.unclassifiable, 1);
        assert!((run.eval.g.value(loss).item() - metrics.total()).abs() < 1e-9);
        let o = &outcomes[0];
        assert_eq!((o.gold_call, o.gold_arg, o.gold_repair, o.snapshot_len), (Some(0), Some(1), Some(0), 2));
        assert!(outcomes[2].p_misuse.is_none());
        run.eval.g.backward(loss).unwrap();

        let p = predict(&mut run, &jobs[0], 0, "bad", &outcomes[0]);
        assert!(p.call_record.is_some());
        assert!(!p.explanation_path.is_empty());
    }

    #[test]
    fn unknown_correct_name_is_a_label_error() {
        let m = crate::testutil::tiny_model(2);
        let bad = parse(MISUSED).unwrap();
        let jobs = [ScriptJob { tree: &bad, misuse_node: Some(second_b(&bad)) }];
        let mut run = run_batch(&m, &jobs, &RunOptions { max_args: 16, cap: None, mode: ExecMode::Serial });
        let targets = [MisuseTarget { has_misuse: true, correct_name: Some("zzz".into()) }];
        let (_, metrics, _) = misuse_loss(&mut run, &targets);
        assert_eq!((metrics.label_errors, metrics.n5), (1, 0));
    }
}
