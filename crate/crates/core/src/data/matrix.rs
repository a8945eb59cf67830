use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::RawInteraction;

/// Sparse binary user x item matrix with dense re-indexing.
///
/// Row `u` lists the items user `u` interacted with in strictly increasing
/// order; `timestamps(u)` runs parallel to it.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    items: usize,
    rows: Vec<Vec<usize>>,
    timestamps: Vec<Vec<Option<i64>>>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    user_index: BTreeMap<u64, usize>,
    item_index: BTreeMap<u64, usize>,
}

/// Counts in the layout of a dataset summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub ratings: usize,
    pub users: usize,
    pub items: usize,
    /// `100 * (1 - ratings / (users * items))`, rounded to two decimals.
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn sparsity_label(&self) -> String {
        format!("{:.2}%", self.sparsity)
    }
}

impl InteractionMatrix {
    /// Builds a matrix from dense rows. Rows are sorted and deduplicated.
    pub fn from_rows(items: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut clean = Vec::with_capacity(n);
        for row in rows {
            let mut row = row;
            row.sort_unstable();
            row.dedup();
            if let Some(&bad) = row.iter().find(|&&i| i >= items) {
                return Err(Error::dim("item index", items, bad + 1));
            }
            clean.push(row);
        }
        let timestamps = clean.iter().map(|r| vec![None; r.len()]).collect();
        Ok(Self {
            items,
            rows: clean,
            timestamps,
            user_ids: (0..n as u64).collect(),
            item_ids: (0..items as u64).collect(),
            user_index: (0..n).map(|u| (u as u64, u)).collect(),
            item_index: (0..items).map(|i| (i as u64, i)).collect(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.items
    }

    pub fn row(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn timestamps(&self, user: usize) -> &[Option<i64>] {
        &self.timestamps[user]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    /// Dense binary row `r_u`.
    pub fn dense_row<S: Scalar>(&self, user: usize) -> Vec<S> {
        let mut r = vec![S::zero(); self.items];
        for &i in &self.rows[user] {
            r[i] = S::one();
        }
        r
    }

    pub fn raw_user_id(&self, user: usize) -> u64 {
        self.user_ids[user]
    }

    pub fn raw_item_id(&self, item: usize) -> u64 {
        self.item_ids[item]
    }

    pub fn user_index(&self, raw: u64) -> Option<usize> {
        self.user_index.get(&raw).copied()
    }

    pub fn item_index(&self, raw: u64) -> Option<usize> {
        self.item_index.get(&raw).copied()
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn stats(&self) -> DatasetStats {
        let ratings = self.nnz();
        let users = self.n_users();
        let items = self.n_items();
        let density = ratings as f64 / (users as f64 * items as f64);
        let sparsity = (100.0 * (1.0 - density) * 100.0).round() / 100.0;
        DatasetStats {
            ratings,
            users,
            items,
            sparsity,
        }
    }

    /// Copy with the `(user, item)` entries in `heldout` removed from each row.
    pub(crate) fn without(&self, heldout: &[usize]) -> Self {
        let mut out = self.clone();
        for (u, &item) in heldout.iter().enumerate() {
            if let Ok(pos) = out.rows[u].binary_search(&item) {
                out.rows[u].remove(pos);
                out.timestamps[u].remove(pos);
            }
        }
        out
    }
}

/// Ratings `> 0` become positives; duplicate `(user, item)` pairs collapse to
/// one positive carrying the latest timestamp; users with fewer than
/// `min_interactions` positives are dropped. The item universe is the set of
/// items touched by retained users.
pub fn binarize_and_filter(
    raw: &[RawInteraction],
    min_interactions: usize,
) -> Result<InteractionMatrix> {
    if raw.is_empty() {
        return Err(Error::Ingestion {
            path: "<records>".into(),
            reason: "no interactions to binarise".into(),
        });
    }
    let mut by_user: BTreeMap<u64, BTreeMap<u64, Option<i64>>> = BTreeMap::new();
    for r in raw.iter().filter(|r| r.rating > 0.0) {
        let slot = by_user
            .entry(r.user)
            .or_default()
            .entry(r.item)
            .or_insert(r.timestamp);
        if r.timestamp > *slot {
            *slot = r.timestamp;
        }
    }
    let dropped = by_user
        .values()
        .filter(|v| v.len() < min_interactions)
        .count();
    by_user.retain(|_, v| v.len() >= min_interactions);
    if dropped > 0 {
        log::info!("dropped {dropped} users with fewer than {min_interactions} positives");
    }
    if by_user.is_empty() {
        return Err(Error::Ingestion {
            path: "<records>".into(),
            reason: format!("every user has fewer than {min_interactions} positives"),
        });
    }

    let mut item_ids: Vec<u64> = by_user.values().flat_map(|v| v.keys().copied()).collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let item_index: BTreeMap<u64, usize> = item_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();

    let mut rows = Vec::with_capacity(by_user.len());
    let mut timestamps = Vec::with_capacity(by_user.len());
    let mut user_ids = Vec::with_capacity(by_user.len());
    for (user, items) in &by_user {
        user_ids.push(*user);
        // raw ids are iterated in ascending order and the dense map is monotone
        rows.push(items.keys().map(|id| item_index[id]).collect());
        timestamps.push(items.values().copied().collect());
    }
    let user_index = user_ids
        .iter()
        .enumerate()
        .map(|(u, &id)| (id, u))
        .collect();
    Ok(InteractionMatrix {
        items: item_ids.len(),
        rows,
        timestamps,
        user_ids,
        item_ids,
        user_index,
        item_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: u64, item: u64, ts: i64) -> RawInteraction {
        RawInteraction {
            user,
            item,
            rating: 4.0,
            timestamp: Some(ts),
        }
    }

    fn many(user: u64, count: u64) -> Vec<RawInteraction> {
        (0..count).map(|i| rec(user, 100 + i, i as i64)).collect()
    }

    #[test]
    fn nine_interaction_user_is_dropped() {
        let mut raw = many(1, 10);
        raw.extend(many(2, 9));
        let m = binarize_and_filter(&raw, 10).unwrap();
        assert_eq!(m.n_users(), 1);
        assert_eq!(m.raw_user_id(0), 1);
        assert!(m.user_index(2).is_none());
    }

    #[test]
    fn duplicates_collapse_keeping_latest_timestamp() {
        let mut raw = many(1, 10);
        raw.push(rec(1, 100, 500));
        raw.push(rec(1, 100, 50));
        let m = binarize_and_filter(&raw, 10).unwrap();
        assert_eq!(m.row(0).len(), 10);
        assert_eq!(m.timestamps(0)[0], Some(500));
    }

    #[test]
    fn non_positive_ratings_are_not_interactions() {
        let mut raw = many(1, 10);
        raw.push(RawInteraction {
            user: 1,
            item: 999,
            rating: 0.0,
            timestamp: None,
        });
        let m = binarize_and_filter(&raw, 10).unwrap();
        assert_eq!(m.n_items(), 10);
    }

    #[test]
    fn items_of_dropped_users_leave_the_universe() {
        let mut raw = many(1, 10);
        raw.push(rec(2, 5000, 0));
        let m = binarize_and_filter(&raw, 10).unwrap();
        assert!(m.item_index(5000).is_none());
    }

    #[test]
    fn everything_filtered_is_an_error() {
        assert!(binarize_and_filter(&many(1, 3), 10).is_err());
        assert!(binarize_and_filter(&[], 10).is_err());
    }

    #[test]
    fn reindexing_is_a_bijection() {
        let mut raw = many(7, 12);
        raw.extend(many(3, 11));
        raw.push(rec(3, 42, 1));
        let m = binarize_and_filter(&raw, 10).unwrap();
        for u in 0..m.n_users() {
            assert_eq!(m.user_index(m.raw_user_id(u)), Some(u));
            assert!(m.row(u).windows(2).all(|w| w[0] < w[1]));
        }
        for i in 0..m.n_items() {
            assert_eq!(m.item_index(m.raw_item_id(i)), Some(i));
        }
    }

    #[test]
    fn stats_formula() {
        let m = InteractionMatrix::from_rows(4, vec![vec![0, 1], vec![2]]).unwrap();
        let s = m.stats();
        assert_eq!((s.ratings, s.users, s.items), (3, 2, 4));
        assert_eq!(s.sparsity, 62.5);
        assert_eq!(s.sparsity_label(), "62.50%");
    }
}
