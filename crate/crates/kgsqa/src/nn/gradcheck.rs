//! Central finite-difference gradient checking. This harness is the
//! arbiter for every analytic derivative in the tape: the loss closure is
//! evaluated at perturbed parameters and compared coordinate by coordinate
//! against the gradients it reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::store::{Grads, ParamStore};
use crate::error::{Error, Result};

/// Worst relative error between analytic and central-difference gradients
/// over the trainable tensors of `store`.
///
/// `loss_fn` must be deterministic (dropout disabled, fixed seed). For
/// tensors larger than `max_coords_per_tensor`, that many coordinates are
/// sampled (at least 64 should be given); smaller tensors are checked
/// exhaustively.
pub fn grad_check<F>(
    store: &ParamStore,
    eps: f64,
    max_coords_per_tensor: usize,
    sample_seed: u64,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(f64, Grads)>,
{
    let (loss0, grads) = loss_fn(store)?;
    if !loss0.is_finite() {
        return Err(Error::NonFinite("gradient-check loss".into()));
    }

    let mut work = store.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut worst = 0.0f64;

    for id in store.ids().collect::<Vec<_>>() {
        if !store.is_trainable(id) {
            continue;
        }
        let n = store.get(id).len();
        let coords: Vec<usize> = if n <= max_coords_per_tensor {
            (0..n).collect()
        } else {
            let mut picked = std::collections::BTreeSet::new();
            while picked.len() < max_coords_per_tensor {
                picked.insert(rng.gen_range(0..n));
            }
            picked.into_iter().collect()
        };

        for coord in coords {
            work.nudge(id, coord, eps);
            let (lp, _) = loss_fn(&work)?;
            work.nudge(id, coord, -2.0 * eps);
            let (lm, _) = loss_fn(&work)?;
            work.nudge(id, coord, eps);
            if !lp.is_finite() || !lm.is_finite() {
                return Err(Error::NonFinite("perturbed gradient-check loss".into()));
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = grads
                .get(id)
                .map(|t| t.as_slice()[coord])
                .unwrap_or(0.0);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
