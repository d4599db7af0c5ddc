//! Layers shared by the guesser, the executor and the task heads.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParameterStore, Segment, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self::with_std(store, name, input, output, 1.0 / (input as f64).sqrt(), rng)
    }

    pub fn with_std<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        output: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add_normal(&format!("{name}.w"), input, output, std, rng);
        let b = store.add_const(&format!("{name}.b"), 1, output, 0.0);
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParameterStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.add_const(&format!("{name}.gamma"), 1, width, 1.0),
            beta: store.add_const(&format!("{name}.beta"), 1, width, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Two-layer perceptron with a tanh hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, rng),
            out: Linear::new(store, &format!("{name}.out"), hidden, output, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.hidden.forward(g, x);
        let h = g.tanh(h);
        self.out.forward(g, h)
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub heads: usize,
    pub ln_attn: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln_ffn: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl EncoderLayer {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, width: usize, heads: usize, depth: usize, rng: &mut R) -> Self {
        let resid_std = 1.0 / (width as f64).sqrt() / (2.0 * depth as f64).sqrt();
        let ffn = 4 * width;
        EncoderLayer {
            heads,
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), width),
            q: Linear::new(store, &format!("{name}.q"), width, width, rng),
            k: Linear::new(store, &format!("{name}.k"), width, width, rng),
            v: Linear::new(store, &format!("{name}.v"), width, width, rng),
            o: Linear::with_std(store, &format!("{name}.o"), width, width, resid_std, rng),
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), width),
            ffn_in: Linear::new(store, &format!("{name}.ffn_in"), width, ffn, rng),
            ffn_out: Linear::with_std(store, &format!("{name}.ffn_out"), ffn, width, 1.0 / (ffn as f64).sqrt() / (2.0 * depth as f64).sqrt(), rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, segments: &[Segment], key_mask: Option<&[bool]>) -> Var {
        let h = self.ln_attn.forward(g, x);
        let q = self.q.forward(g, h);
        let k = self.k.forward(g, h);
        let v = self.v.forward(g, h);
        let a = g.attention(q, k, v, segments, self.heads, key_mask);
        let a = self.o.forward(g, a);
        let x = g.add(x, a);
        let h = self.ln_ffn.forward(g, x);
        let h = self.ffn_in.forward(g, h);
        let h = g.gelu(h);
        let h = self.ffn_out.forward(g, h);
        g.add(x, h)
    }
}

/// Stack of encoder layers with a final layer norm.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub ln_final: LayerNorm,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParameterStore, name: &str, width: usize, layers: usize, heads: usize, rng: &mut R) -> Self {
        Encoder {
            layers: (0..layers).map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), width, heads, layers, rng)).collect(),
            ln_final: LayerNorm::new(store, &format!("{name}.ln_final"), width),
        }
    }

    /// Encodes the rows of `x`; each segment is an independent sequence.
    pub fn forward(&self, g: &mut Graph, x: Var, segments: &[Segment], key_mask: Option<&[bool]>) -> Var {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(g, h, segments, key_mask);
        }
        self.ln_final.forward(g, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        let enc = Encoder::new(&mut store, "enc", 8, 2, 2, &mut rng);
        let head = Mlp::new(&mut store, "head", 8, 8, 1, &mut rng);
        let input = store.add_normal("input", 5, 8, 1.0, &mut rng);
        let segs = [Segment { start: 0, len: 2 }, Segment { start: 2, len: 3 }];
        let eval = |s: &ParameterStore| {
            let mut g = Graph::new(s);
            let x = g.param(input);
            let h = enc.forward(&mut g, x, &segs, None);
            let pooled = g.max_pool_rows(h, &[0, 3, 4]);
            let logit = head.forward(&mut g, pooled);
            let loss = g.bce_with_logits(logit, &[1.0]);
            (g.value(loss).item(), g.backward(loss).unwrap())
        };
        let report = gradient_check(&mut store, 20, 1e-6, &mut rng, eval);
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
    }

    #[test]
    fn segments_do_not_interact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        let enc = Encoder::new(&mut store, "enc", 8, 1, 2, &mut rng);
        let data: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut g = Graph::new(&store);
        let both = g.constant(Tensor::from_vec(5, 8, data.clone()));
        let out = enc.forward(&mut g, both, &[Segment { start: 0, len: 2 }, Segment { start: 2, len: 3 }], None);
        let tail = g.constant(Tensor::from_vec(3, 8, data[16..].to_vec()));
        let single = enc.forward(&mut g, tail, &[Segment { start: 0, len: 3 }], None);
        assert_eq!(&g.value(out).data[16..], &g.value(single).data[..]);
    }
}
