//! Central finite-difference gradients for verifying the tape.
//!
//! The oracle only ever evaluates the loss forward, so it stays independent
//! of the reverse-mode path it checks.

use crate::numerics::{Gradients, ParamStore};

/// Central finite differences over every trainable scalar in `store`.
///
/// `loss` must be a deterministic function of the store (reseed any RNG it
/// uses internally on every call).
pub fn fd_gradients(
    store: &ParamStore,
    mut loss: impl FnMut(&ParamStore) -> f64,
    h: f64,
) -> Gradients {
    let mut grads = Gradients::zeros_like(store);
    let mut work = store.clone();
    let names: Vec<String> = store
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let len = store.get(&name).len();
        for i in 0..len {
            let orig = work.get(&name).as_slice()[i];
            work.get_mut(&name).as_mut_slice()[i] = orig + h;
            let plus = loss(&work);
            work.get_mut(&name).as_mut_slice()[i] = orig - h;
            let minus = loss(&work);
            work.get_mut(&name).as_mut_slice()[i] = orig;
            grads.get_mut(&name).unwrap().as_mut_slice()[i] = (plus - minus) / (2.0 * h);
        }
    }
    grads
}

/// Max over parameters of `|a - b| / max(|a| + |b|, floor)`.
pub fn max_rel_error(analytic: &Gradients, fd: &Gradients, floor: f64) -> f64 {
    let mut worst = 0.0_f64;
    for (name, a) in analytic.iter() {
        let b = match fd.get(name) {
            Some(b) => b,
            None => continue,
        };
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            let denom = (x.abs() + y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
