//! Token encoder and on-demand pooling of guessed vectors.

pub mod tokenize;
pub mod vocab;

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParameterStore, Segment, Var};
use crate::nn::Encoder;
use crate::syntax::NodeKind;

pub use tokenize::{split_identifier, tokenize, tokens_within, Token, DEFAULT_MAX_TOKENS};
pub use vocab::Vocab;

#[derive(Debug, Clone)]
pub struct Guesser {
    pub embed: ParamId,
    pub positions: ParamId,
    pub types: ParamId,
    pub encoder: Encoder,
    pub max_tokens: usize,
}

/// Encodings of several scripts stacked row-wise.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub rows: Var,
    /// First row of each script.
    pub offsets: Vec<usize>,
}

impl Guesser {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        hidden: usize,
        layers: usize,
        heads: usize,
        vocab_size: usize,
        max_tokens: usize,
        rng: &mut R,
    ) -> Self {
        Guesser {
            embed: store.add_normal("guesser.embed", vocab_size, hidden, 1.0, rng),
            positions: store.add_normal("guesser.positions", max_tokens, hidden, 0.1, rng),
            types: store.add_normal("guesser.types", NodeKind::ALL.len(), hidden, 0.1, rng),
            encoder: Encoder::new(store, "guesser.encoder", hidden, layers, heads, rng),
            max_tokens,
        }
    }

    /// Runs the encoder over every sequence of token ids in one pass. Each
    /// sequence attends only to itself, so the rows of one script do not
    /// depend on which other scripts share the batch.
    pub fn encode(&self, g: &mut Graph, seqs: &[Vec<usize>]) -> Option<Encoded> {
        let mut ids = Vec::new();
        let mut pos = Vec::new();
        let mut segments = Vec::new();
        let mut offsets = Vec::with_capacity(seqs.len());
        for s in seqs {
            let s = &s[..s.len().min(self.max_tokens)];
            offsets.push(ids.len());
            if !s.is_empty() {
                segments.push(Segment { start: ids.len(), len: s.len() });
            }
            ids.extend_from_slice(s);
            pos.extend(0..s.len());
        }
        if ids.is_empty() {
            return None;
        }
        let embed = g.param(self.embed);
        let positions = g.param(self.positions);
        let x = g.gather(embed, &ids);
        let p = g.gather(positions, &pos);
        let x = g.add(x, p);
        let rows = self.encoder.forward(g, x, &segments, None);
        Some(Encoded { rows, offsets })
    }

    pub fn type_embedding(&self, g: &mut Graph, kind: NodeKind) -> Var {
        let types = g.param(self.types);
        g.row(types, kind.index())
    }

    /// Element-wise max over the selected encoding rows plus the type
    /// embedding of `kind`.
    pub fn pool(&self, g: &mut Graph, enc: Var, rows: &[usize], kind: NodeKind) -> Var {
        let pooled = g.max_pool_rows(enc, rows);
        let t = self.type_embedding(g, kind);
        g.add(pooled, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParameterStore, Guesser) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let gs = Guesser::new(&mut store, 8, 2, 2, 20, 16, &mut rng);
        (store, gs)
    }

    #[test]
    fn batching_does_not_change_rows() {
        let (store, gs) = setup();
        let a = vec![1, 2, 3];
        let b = vec![4, 5];
        let mut g = Graph::new(&store);
        let both = gs.encode(&mut g, &[a.clone(), vec![], b]).unwrap();
        let mut g2 = Graph::new(&store);
        let alone = gs.encode(&mut g2, &[a]).unwrap();
        assert_eq!(both.offsets, vec![0, 3, 3]);
        for r in 0..3 {
            assert_eq!(g.value(both.rows).row(r), g2.value(alone.rows).row(r));
        }
    }

    #[test]
    fn pooling_dominates_rows() {
        let (store, gs) = setup();
        let mut g = Graph::new(&store);
        let enc = gs.encode(&mut g, &[vec![1, 2, 3, 4]]).unwrap();
        let pooled = gs.pool(&mut g, enc.rows, &[1, 3], NodeKind::BinaryOp);
        let t = store.value(gs.types).row(NodeKind::BinaryOp.index()).to_vec();
        let rows = g.value(enc.rows).clone();
        for (j, tj) in t.iter().enumerate() {
            let v = g.value(pooled).get(0, j) - tj;
            assert!(v >= rows.get(1, j) - 1e-12 && v >= rows.get(3, j) - 1e-12);
            assert!((v - rows.get(1, j).max(rows.get(3, j))).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let (store, gs) = setup();
        let mut g = Graph::new(&store);
        let a = gs.encode(&mut g, &[vec![7, 8, 9]]).unwrap();
        let b = gs.encode(&mut g, &[vec![7, 8, 9]]).unwrap();
        assert_eq!(g.value(a.rows), g.value(b.rows));
        assert_eq!(g.shape(a.rows), (3, 8));
    }
}
