//! Central-difference gradient checking against the autodiff engine.
//!
//! Only used by tests; lives in the library so integration tests and the
//! acceptance suite can share it.

use std::collections::HashMap;

use ndarray::Array2;

use super::params::ParameterStore;

/// Result of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked_entries: usize,
}

/// Compares analytic gradients with central differences for every entry of
/// every parameter (subsampled with `stride` if > 1).
///
/// `eval` must return the scalar loss and, when `want_grads` is true, the
/// analytic per-parameter gradients of that loss. The evaluation must be a
/// pure function of the store contents.
pub fn check_gradients<E>(
    store: &mut ParameterStore<f64>,
    mut eval: E,
    step: f64,
    stride: usize,
) -> GradCheckReport
where
    E: FnMut(&ParameterStore<f64>, bool) -> (f64, HashMap<String, Array2<f64>>),
{
    let (_, analytic) = eval(store, true);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut max_rel_error = 0.0_f64;
    let mut worst_param = String::new();
    let mut checked = 0usize;

    for name in &names {
        let dim = store.get(name).dim();
        let zeros;
        let grad = match analytic.get(name) {
            Some(g) => g,
            None => {
                zeros = Array2::zeros(dim);
                &zeros
            }
        };
        let total = dim.0 * dim.1;
        let mut k = 0usize;
        while k < total {
            let idx = (k / dim.1, k % dim.1);
            let original = store.get(name)[idx];

            store.get_mut(name)[idx] = original + step;
            let (loss_plus, _) = eval(store, false);
            store.get_mut(name)[idx] = original - step;
            let (loss_minus, _) = eval(store, false);
            store.get_mut(name)[idx] = original;

            let numeric = (loss_plus - loss_minus) / (2.0 * step);
            let a = grad[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel_error {
                max_rel_error = rel;
                worst_param = format!("{name}[{},{}]", idx.0, idx.1);
            }
            checked += 1;
            k += stride.max(1);
        }
    }
    GradCheckReport { max_rel_error, worst_param, checked_entries: checked }
}
