use rand::Rng;

use super::params::{Gradients, ParamId, ParameterStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: String,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_err: f64,
}

/// Relative error with an absolute floor so that two vanishing values count as
/// agreeing.
fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-8 {
        return (a - n).abs();
    }
    (a - n).abs() / scale
}

/// Compares analytic gradients from `eval` against central differences on
/// `probes` randomly chosen scalar parameters. Probes are drawn among the
/// parameters that received a gradient. `eval` must be a pure function of the
/// store's values.
pub fn gradient_check<R: Rng>(
    store: &mut ParameterStore,
    probes: usize,
    eps: f64,
    rng: &mut R,
    eval: impl Fn(&ParameterStore) -> (f64, Gradients),
) -> GradCheckReport {
    let (_, grads) = eval(store);
    let touched: Vec<ParamId> = grads.iter().map(|(id, _)| id).collect();
    assert!(!touched.is_empty(), "gradient check: no parameter receives gradient");
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let id = touched[rng.random_range(0..touched.len())];
        let element = rng.random_range(0..store.value(id).len());
        let analytic = grads.get(id).unwrap().data[element];
        let orig = store.value(id).data[element];
        store.value_mut(id).data[element] = orig + eps;
        let (plus, _) = eval(store);
        store.value_mut(id).data[element] = orig - eps;
        let (minus, _) = eval(store);
        store.value_mut(id).data[element] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        out.push(Probe {
            param: store.name(id).to_string(),
            element,
            analytic,
            numeric,
            rel_err: rel_err(analytic, numeric),
        });
    }
    let max_rel_err = out.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    GradCheckReport { probes: out, max_rel_err }
}
