//! Reverse-mode automatic differentiation over dense `f64` matrices.

mod check;
mod graph;
mod optim;
mod params;
mod tensor;

pub use check::{gradient_check, GradCheckReport, Probe};
pub use graph::{bce_logit, sigmoid, Graph, Segment, Var};
pub use optim::{clip_grad_norm, AdamW, LinearSchedule};
pub use params::{Gradients, ParamId, ParameterStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutodiffError {
    #[error("backward called twice on the same graph")]
    RepeatedBackward,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Builds a store with the given shapes, then checks `f` (a scalar-valued
    /// graph builder) against central differences on 20 probes.
    fn check_op(shapes: &[(usize, usize)], f: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        let ids: Vec<ParamId> =
            shapes.iter().enumerate().map(|(i, &(r, c))| store.add(format!("p{i}"), random(&mut rng, r, c))).collect();
        // a fixed random projection makes every output element matter
        let eval = |s: &ParameterStore| {
            let mut g = Graph::new(s);
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let out = f(&mut g, &vars);
            let (r, c) = g.shape(out);
            let mut prng = ChaCha8Rng::seed_from_u64(99);
            let w = g.constant(random(&mut prng, r, c));
            let prod = g.mul(out, w);
            let ones = g.constant(Tensor::from_vec(c, 1, vec![1.0; c]));
            let col = g.matmul(prod, ones);
            let ones_r = g.constant(Tensor::from_vec(1, r, vec![1.0; r]));
            let loss = g.matmul(ones_r, col);
            let l = g.value(loss).item();
            (l, g.backward(loss).unwrap())
        };
        let report = gradient_check(&mut store, 20, 1e-6, &mut rng, eval);
        assert!(report.max_rel_err <= 1e-4, "gradient check failed: {report:?}");
    }

    #[test]
    fn fd_matmul_add_scale() {
        check_op(&[(3, 4), (4, 2), (3, 2)], |g, v| {
            let m = g.matmul(v[0], v[1]);
            let a = g.add(m, v[2]);
            g.scale(a, 0.7)
        });
    }

    #[test]
    fn fd_add_row_mul_gelu_tanh() {
        check_op(&[(3, 4), (1, 4), (3, 4)], |g, v| {
            let a = g.add_row(v[0], v[1]);
            let b = g.mul(a, v[2]);
            let c = g.gelu(b);
            g.tanh(c)
        });
    }

    #[test]
    fn fd_layer_norm() {
        check_op(&[(3, 5), (1, 5), (1, 5)], |g, v| g.layer_norm(v[0], v[1], v[2]));
    }

    #[test]
    fn fd_softmax() {
        check_op(&[(2, 4)], |g, v| g.softmax(v[0]));
    }

    #[test]
    fn fd_attention_segments_and_mask() {
        let mask = [true, false, true, true, true, true];
        let segs = [Segment { start: 0, len: 3 }, Segment { start: 3, len: 3 }];
        check_op(&[(6, 4), (6, 4), (6, 4)], move |g, v| g.attention(v[0], v[1], v[2], &segs, 2, Some(&mask)));
    }

    #[test]
    fn fd_pool_gather_concat_sum() {
        check_op(&[(4, 3), (2, 3), (4, 2)], |g, v| {
            let p = g.max_pool_rows(v[0], &[0, 2, 3]);
            let r = g.gather(v[1], &[1, 0, 1]);
            let rows = g.concat_rows(&[p, r]);
            let cols = g.concat_cols(&[v[0], v[2]]);
            let narrow = g.gather(cols, &[3, 1]);
            let w = g.constant(Tensor::from_vec(5, 3, (0..15).map(|i| (i % 4) as f64 * 0.5).collect()));
            let proj = g.matmul(narrow, w);
            let all = g.concat_rows(&[rows, proj]);
            g.sum(&[all, all])
        });
    }

    #[test]
    fn fd_losses() {
        check_op(&[(1, 5), (3, 1)], |g, v| {
            let ce = g.cross_entropy(v[0], 2);
            let b = g.bce_with_logits(v[1], &[1.0, 0.0, 1.0]);
            let wide = g.reshape(v[1], 1, 3);
            let ce2 = g.cross_entropy(wide, 0);
            g.sum(&[ce, b, ce2])
        });
    }

    #[test]
    fn softmax_uniform() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row_vector(vec![0.3; 4]));
        let y = g.softmax(x);
        assert!(g.value(y).data.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn layer_norm_moments() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::from_vec(2, 4, vec![1.0, 2.0, 3.0, 10.0, -5.0, 0.0, 5.0, 7.0]));
        let gamma = g.constant(Tensor::row_vector(vec![1.0; 4]));
        let beta = g.constant(Tensor::row_vector(vec![0.0; 4]));
        let y = g.layer_norm(x, gamma, beta);
        for i in 0..2 {
            let row = g.value(y).row(i).to_vec();
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-10);
            // eps shrinks the variance slightly below 1
            assert!((var - 1.0).abs() < 1e-5, "variance {var}");
        }
    }

    #[test]
    fn attention_single_allowed_key_copies_value() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = g.constant(random(&mut rng, 3, 4));
        let k = g.constant(random(&mut rng, 3, 4));
        let vt = random(&mut rng, 3, 4);
        let v = g.constant(vt.clone());
        let out = g.attention(q, k, v, &[Segment { start: 0, len: 3 }], 2, Some(&[false, true, false]));
        for i in 0..3 {
            assert_eq!(g.value(out).row(i), vt.row(1));
        }
    }

    #[test]
    fn batched_attention_matches_single_sequence() {
        let store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, k, v) = (random(&mut rng, 5, 4), random(&mut rng, 5, 4), random(&mut rng, 5, 4));
        let mut g = Graph::new(&store);
        let (qa, ka, va) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
        let segs = [Segment { start: 0, len: 2 }, Segment { start: 2, len: 3 }];
        let both = g.attention(qa, ka, va, &segs, 2, None);
        let tail = |t: &Tensor| Tensor::from_vec(3, 4, t.data[8..].to_vec());
        let (qb, kb, vb) = (g.constant(tail(&q)), g.constant(tail(&k)), g.constant(tail(&v)));
        let single = g.attention(qb, kb, vb, &[Segment { start: 0, len: 3 }], 2, None);
        assert_eq!(&g.value(both).data[8..], &g.value(single).data[..]);
    }

    #[test]
    fn scalar_product_rule() {
        let mut store = ParameterStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let y = store.add("y", Tensor::scalar(-2.0));
        let unused = store.add("unused", Tensor::scalar(1.0));
        let mut g = Graph::new(&store);
        let (vx, vy) = (g.param(x), g.param(y));
        let p = g.mul(vx, vy);
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), -2.0);
        assert_eq!(grads.get(y).unwrap().item(), 3.0);
        assert!(grads.get(unused).is_none());
        assert_eq!(g.backward(p).unwrap_err(), AutodiffError::RepeatedBackward);
    }

    #[test]
    fn closed_form_losses() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let z = g.constant(Tensor::row_vector(vec![1.0, 0.0]));
        let ce = g.cross_entropy(z, 0);
        assert!((g.value(ce).item() - 0.313_261_687_518_222_8).abs() < 1e-12);
        let flat = g.constant(Tensor::row_vector(vec![0.4; 8]));
        let ce8 = g.cross_entropy(flat, 5);
        assert!((g.value(ce8).item() - 8f64.ln()).abs() < 1e-12);
        let zero = g.constant(Tensor::from_vec(2, 1, vec![0.0, 0.0]));
        let b = g.bce_with_logits(zero, &[1.0, 0.0]);
        assert!((g.value(b).item() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_a_fault() {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let z = g.constant(Tensor::scalar(f64::NAN));
        assert!(matches!(g.backward(z), Err(AutodiffError::NonFinite(_))));
    }
}
