//! Data-flow graph over the objects of one trace: an edge runs from every
//! argument of a lambda call to its result.

use crate::interp::{ExecutionTrace, LambdaRecord, ObjectId, ObjectKey};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataFlowGraph {
    /// Objects are numbered `1..=objects`.
    pub objects: usize,
    /// One edge per argument per call, duplicates kept.
    pub edges: Vec<(ObjectId, ObjectId)>,
    succ: Vec<Vec<ObjectId>>,
}

pub fn build_dfg(records: &[LambdaRecord], objects: usize) -> DataFlowGraph {
    let mut edges = Vec::new();
    let mut succ = vec![Vec::new(); objects + 1];
    for r in records {
        for &a in &r.args {
            edges.push((a, r.result));
            succ[a as usize].push(r.result);
        }
    }
    DataFlowGraph { objects, edges, succ }
}

pub fn trace_dfg(trace: &ExecutionTrace) -> DataFlowGraph {
    build_dfg(&trace.records, trace.objects.len())
}

impl DataFlowGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn successors(&self, id: ObjectId) -> &[ObjectId] {
        &self.succ[id as usize]
    }

    /// Edges always point from older to newer objects.
    pub fn is_acyclic(&self) -> bool {
        self.edges.iter().all(|(a, b)| a < b)
    }

    /// `reach[o]` is true when `o` is reachable from `from` by one or more
    /// edges, or is `from` itself.
    pub fn reachable(&self, from: ObjectId) -> Vec<bool> {
        let mut seen = vec![false; self.objects + 1];
        let mut stack = vec![from];
        seen[from as usize] = true;
        while let Some(n) = stack.pop() {
            for &m in &self.succ[n as usize] {
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    pub fn has_path(&self, from: ObjectId, to: ObjectId) -> bool {
        from != to && self.reachable(from)[to as usize]
    }

    /// Objects that touch at least one edge, ascending.
    pub fn participants(&self) -> Vec<ObjectId> {
        let mut on = vec![false; self.objects + 1];
        for &(a, b) in &self.edges {
            on[a as usize] = true;
            on[b as usize] = true;
        }
        (1..=self.objects as ObjectId).filter(|&o| on[o as usize]).collect()
    }

    /// Edges expressed with stable object keys, sorted.
    pub fn keyed_edges(&self, trace: &ExecutionTrace) -> Vec<(ObjectKey, ObjectKey)> {
        let mut out: Vec<_> = self.edges.iter().map(|&(a, b)| (trace.object(a).key.clone(), trace.object(b).key.clone())).collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{generate_symbolic, CodegenOptions};
    use crate::syntax::parse;

    fn dfs_path(g: &DataFlowGraph, a: ObjectId, b: ObjectId) -> bool {
        fn go(g: &DataFlowGraph, n: ObjectId, b: ObjectId, depth: usize) -> bool {
            depth < 10_000 && g.successors(n).iter().any(|&m| m == b || go(g, m, b, depth + 1))
        }
        go(g, a, b, 0)
    }

    #[test]
    fn celsius_flows_to_fahrenheit() {
        let src = "def celsius_to_fahrenheit(celsius):\n    fahrenheit = celsius * 1.8 + 32\n    return fahrenheit\n";
        let gen = generate_symbolic(&parse(src).unwrap(), &CodegenOptions::default());
        let g = trace_dfg(&gen.trace);
        let find = |text: &str| {
            gen.trace.events.iter().find_map(|e| match e {
                crate::interp::TraceEvent::Store { name, obj } if name == text => Some(*obj),
                _ => None,
            })
        };
        let c = find("celsius").unwrap();
        let f = find("fahrenheit").unwrap();
        assert!(g.has_path(c, f));
        assert!(!g.has_path(f, c));
        assert!(g.is_acyclic());
        assert_eq!(g.edge_count(), gen.trace.records.iter().map(|r| r.args.len()).sum::<usize>());
    }

    #[test]
    fn empty_trace_empty_graph() {
        let gen = generate_symbolic(&parse("").unwrap(), &CodegenOptions::default());
        let g = trace_dfg(&gen.trace);
        assert_eq!(g.edge_count(), 0);
        assert!(g.participants().is_empty());
    }

    #[test]
    fn reachability_matches_dfs() {
        let src = "a = f(x)\nb = a + y\nfor i in b:\n    c = g(i, a)\nd = [c, b]\n";
        let gen = generate_symbolic(&parse(src).unwrap(), &CodegenOptions::default());
        let g = trace_dfg(&gen.trace);
        let n = g.objects as ObjectId;
        for a in 1..=n {
            for b in 1..=n {
                if a != b {
                    assert_eq!(g.has_path(a, b), dfs_path(&g, a, b), "{a} -> {b}");
                }
            }
        }
    }
}
