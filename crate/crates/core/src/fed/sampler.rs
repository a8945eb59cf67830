use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};

/// Uniform sample of `n_s` distinct clients from `0..n` minus `previous`,
/// returned in ascending order.
pub fn sample_clients<R: Rng + ?Sized>(
    n: usize,
    n_s: usize,
    previous: &BTreeSet<usize>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..n).filter(|i| !previous.contains(i)).collect();
    if n_s > pool.len() {
        return Err(Error::config(
            "clients_per_round",
            format!(
                "n_s = {n_s} exceeds n - |previous round| = {n} - {} = {}",
                n - pool.len(),
                pool.len()
            ),
        ));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), n_s)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}
