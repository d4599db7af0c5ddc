use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{synthesize, MisuseAnnotation, Oracle, Script};
use crate::codegen::{generate_symbolic, CodegenOptions};
use crate::interp::ObjectKey;
use crate::misuse::MisuseLabel;
use crate::syntax::{parse, walk, NodeKind, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Ineligible {
    #[error("script does not parse or generate")]
    Broken,
    #[error("no call argument can be swapped for another variable in scope")]
    NoCandidate,
}

struct Site {
    call_node: u32,
    arg_pos: usize,
    span: Span,
    ident_node: u32,
}

fn shift(span_start: usize, span_end: usize, at: usize, delta: isize) -> (usize, usize) {
    let f = |x: usize| if x >= at { (x as isize + delta) as usize } else { x };
    (f(span_start), f(span_end))
}

fn shift_key(k: &ObjectKey, at: usize, delta: isize) -> ObjectKey {
    let (start, end) = shift(k.start, k.end, at, delta);
    ObjectKey { start, end, role: k.role.clone() }
}

/// Replaces one identifier passed directly to a call or an operator with
/// another name bound at that point. Sites are tried in random order; the label is
/// read back from a replay of the modified script.
pub fn inject_misuse<R: Rng>(script: &Script, rng: &mut R) -> Result<(Script, MisuseLabel), Ineligible> {
    let tree = parse(&script.code).map_err(|_| Ineligible::Broken)?;
    let gen = generate_symbolic(&tree, &CodegenOptions::default());
    if gen.abort.is_some() {
        return Err(Ineligible::Broken);
    }
    let mut sites = Vec::new();
    walk(&tree, |n| {
        let args = match n.kind {
            NodeKind::Call if n.children.first().is_some_and(|c| c.kind == NodeKind::Identifier) => &n.children[1..],
            NodeKind::BinaryOp | NodeKind::Comparison => &n.children[..],
            _ => return,
        };
        for (i, a) in args.iter().enumerate() {
            if a.kind == NodeKind::Identifier {
                sites.push(Site { call_node: n.node_id, arg_pos: i, span: a.span, ident_node: a.node_id });
            }
        }
    });
    sites.shuffle(rng);
    for site in sites {
        let Some(record) = gen.trace.records.iter().find(|r| r.node_id == site.call_node) else { continue };
        let Some(&arg_obj) = record.args.get(site.arg_pos) else { continue };
        if gen.trace.object(arg_obj).origin_node == site.ident_node {
            continue;
        }
        let orig = &script.code[site.span.start..site.span.end];
        let paused = generate_symbolic(&tree, &CodegenOptions { pause_at: Some(record.id), ..Default::default() });
        let bindings = paused.trace.paused.unwrap_or_default();
        if !bindings.iter().any(|(n, _)| n == orig) {
            continue;
        }
        // Names first bound while this call's own arguments were evaluated
        // would be unbound at the swapped occurrence.
        let call_span = tree.find(site.call_node).map(|n| n.span).expect("site node exists");
        let others: Vec<&(String, u32)> = bindings
            .iter()
            .filter(|(n, o)| {
                let k = &gen.trace.object(*o).key;
                n != orig && *o != arg_obj && !(k.start >= call_span.start && k.end <= call_span.end)
            })
            .collect();
        let Some((new_name, _)) = others.choose(rng).copied() else { continue };

        let code = format!("{}{}{}", &script.code[..site.span.start], new_name, &script.code[site.span.end..]);
        let mut out = Script::new(code, script.origin);
        out.misuse = Some(MisuseAnnotation {
            has_misuse: true,
            misuse_byte_offset: Some(site.span.start),
            correct_name: Some(orig.to_string()),
        });
        let Ok(new_tree) = parse(&out.code) else { continue };
        let Some(node) = out.misuse_node(&new_tree) else { continue };
        let replay = generate_symbolic(&new_tree, &CodegenOptions { misuse_node: Some(node), ..Default::default() });
        let Some(obs) = replay.trace.misuse.as_ref() else { continue };
        if replay.abort.is_some() || obs.source_call != Some(record.id) || !obs.snapshot.iter().any(|(n, _)| n == orig) {
            continue;
        }
        let label = MisuseLabel {
            script_id: out.id.clone(),
            misused_node_id: node,
            correct_name: orig.to_string(),
            source_call_record: record.id,
            misused_arg_index: obs.arg_index,
        };
        if let Some(oracle) = &script.oracle {
            let delta = new_name.len() as isize - orig.len() as isize;
            let at = site.span.end;
            let from = gen.trace.object(arg_obj).key.clone();
            let to = gen.trace.object(record.result).key.clone();
            let mut edges = oracle.dfg_edges.clone();
            if let Some(i) = edges.iter().position(|e| e.0 == from && e.1 == to) {
                edges.remove(i);
            }
            let alias = ObjectKey::new(Span::new(site.span.start, site.span.start + new_name.len()), "misuse");
            let mut edges: Vec<_> = edges.iter().map(|(a, b)| (shift_key(a, at, delta), shift_key(b, at, delta))).collect();
            edges.push((alias, shift_key(&to, at, delta)));
            edges.sort();
            out.oracle = Some(Oracle { dfg_edges: edges, statement_count: oracle.statement_count, misuse: Some(label.clone()) });
        }
        return Ok((out, label));
    }
    Err(Ineligible::NoCandidate)
}

/// Synthetic misuse data: each script is injected with probability
/// `misuse_frac` when eligible, and annotated clean otherwise.
pub fn misuse_corpus(seed: u64, n: usize, statements: (usize, usize), misuse_frac: f64) -> Vec<Script> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7375_7365);
    synthesize(seed, n, statements)
        .into_iter()
        .map(|s| {
            if rng.random_bool(misuse_frac) {
                if let Ok((m, _)) = inject_misuse(&s, &mut rng) {
                    return m;
                }
            }
            let mut s = s;
            s.misuse = Some(MisuseAnnotation { has_misuse: false, misuse_byte_offset: None, correct_name: None });
            s
        })
        .collect()
}
