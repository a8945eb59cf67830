use rand::Rng;

use crate::error::{Error, Result};

use super::InteractionMatrix;

/// Leave-one-out split with sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    /// Held-out item per user (dense indices).
    pub test: Vec<usize>,
    /// Sampled negatives per user; empty until [`with_negatives`](Self::with_negatives).
    pub negatives: Vec<Vec<usize>>,
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    /// Samples `per_positive` negatives per train positive, avoiding the
    /// user's train positives and held-out item.
    pub fn with_negatives<R: Rng + ?Sized>(mut self, per_positive: usize, rng: &mut R) -> Self {
        self.negatives =
            sample_negatives_excluding(&self.train, per_positive, Some(&self.test), rng);
        self
    }

    /// Fresh negatives for one user, drawn like [`with_negatives`](Self::with_negatives).
    pub fn resample_negatives<R: Rng + ?Sized>(
        &self,
        user: usize,
        per_positive: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        user_negatives(&self.train, user, per_positive, Some(self.test[user]), rng)
    }

    /// Sorted, deduplicated `positives ∪ negatives` of one user.
    pub fn candidates(&self, user: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.train.row(user).to_vec();
        c.extend(self.negatives.get(user).into_iter().flatten().copied());
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Holds out each user's latest positive. Ties and missing timestamps are
/// broken uniformly at random from `rng`.
pub fn leave_one_out_split<R: Rng + ?Sized>(
    mat: &InteractionMatrix,
    rng: &mut R,
) -> Result<SplitDataset> {
    let mut test = Vec::with_capacity(mat.n_users());
    for u in 0..mat.n_users() {
        let row = mat.row(u);
        if row.len() < 2 {
            return Err(Error::Logic(format!(
                "user {} has {} positives; leave-one-out needs at least 2",
                mat.raw_user_id(u),
                row.len()
            )));
        }
        let ts = mat.timestamps(u);
        let latest = ts.iter().copied().max().flatten();
        let tied: Vec<usize> = row
            .iter()
            .zip(ts)
            .filter(|(_, t)| latest.is_none() || **t == latest)
            .map(|(&i, _)| i)
            .collect();
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        test.push(pick);
    }
    Ok(SplitDataset {
        train: mat.without(&test),
        test,
        negatives: vec![Vec::new(); mat.n_users()],
    })
}

/// `per_positive * |row(u)|` items per user drawn uniformly (with
/// replacement) from the items user `u` never interacted with.
pub fn sample_negatives<R: Rng + ?Sized>(
    mat: &InteractionMatrix,
    per_positive: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    sample_negatives_excluding(mat, per_positive, None, rng)
}

fn sample_negatives_excluding<R: Rng + ?Sized>(
    mat: &InteractionMatrix,
    per_positive: usize,
    extra: Option<&[usize]>,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    (0..mat.n_users())
        .map(|u| user_negatives(mat, u, per_positive, extra.map(|e| e[u]), rng))
        .collect()
}

fn user_negatives<R: Rng + ?Sized>(
    mat: &InteractionMatrix,
    u: usize,
    per_positive: usize,
    held: Option<usize>,
    rng: &mut R,
) -> Vec<usize> {
    let drawn = draw_negatives(mat.row(u), mat.n_items(), per_positive, held, rng);
    if drawn.is_empty() && per_positive > 0 && !mat.row(u).is_empty() {
        log::warn!(
            "user {} interacted with every item; no negatives",
            mat.raw_user_id(u)
        );
    }
    drawn
}

/// `per_positive * positives.len()` draws with replacement from the items
/// outside `positives` (sorted) and `held`. Empty when no such item exists.
pub(crate) fn draw_negatives<R: Rng + ?Sized>(
    positives: &[usize],
    items: usize,
    per_positive: usize,
    held: Option<usize>,
    rng: &mut R,
) -> Vec<usize> {
    let count = per_positive * positives.len();
    if count == 0 {
        return Vec::new();
    }
    let pool: Vec<usize> = (0..items)
        .filter(|&i| positives.binary_search(&i).is_err() && Some(i) != held)
        .collect();
    if pool.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}
