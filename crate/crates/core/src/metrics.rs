//! Leave-one-out top-K ranking metrics.
//!
//! The held-out item is ranked against every item outside the user's train
//! positives. Ties are broken by ascending item index, so among equal scores
//! the lower index ranks first.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankResult {
    pub user: usize,
    /// 1-based rank of the held-out item.
    pub rank: usize,
    pub candidates: usize,
}

/// Rank of `heldout` among the items not in `train_positives` (sorted).
pub fn rank_heldout<S: Scalar>(
    user: usize,
    scores: &[S],
    heldout: usize,
    train_positives: &[usize],
) -> Result<RankResult> {
    if heldout >= scores.len() {
        return Err(Error::dim("held-out item", scores.len(), heldout + 1));
    }
    if train_positives.binary_search(&heldout).is_ok() {
        return Err(Error::Logic(format!(
            "held-out item {heldout} of user {user} is a train positive"
        )));
    }
    let target = scores[heldout];
    let mut ahead = 0usize;
    let mut candidates = 0usize;
    let mut train = train_positives.iter().peekable();
    for (i, &s) in scores.iter().enumerate() {
        if train.peek() == Some(&&i) {
            train.next();
            continue;
        }
        candidates += 1;
        if s > target || (s == target && i < heldout) {
            ahead += 1;
        }
    }
    Ok(RankResult {
        user,
        rank: ahead + 1,
        candidates,
    })
}

pub fn hr_at_k(results: &[RankResult], k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("HR@K over zero users"));
    }
    let hits = results.iter().filter(|r| r.rank <= k).count();
    Ok(hits as f64 / results.len() as f64)
}

pub fn ndcg_at_k(results: &[RankResult], k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("NDCG@K over zero users"));
    }
    let total: f64 = results
        .iter()
        .filter(|r| r.rank <= k)
        .map(|r| 1.0 / ((r.rank + 1) as f64).log2())
        .sum();
    Ok(total / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub hr: f64,
    pub ndcg: f64,
    pub k: usize,
    pub n_users: usize,
    pub seed: u64,
}

impl Metrics {
    pub fn from_ranks(results: &[RankResult], k: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            hr: hr_at_k(results, k)?,
            ndcg: ndcg_at_k(results, k)?,
            k,
            n_users: results.len(),
            seed,
        })
    }

    /// `{"hr@K": .., "ndcg@K": .., "K": .., "n_users": .., "seed": ..}`
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert(format!("hr@{}", self.k), json!(self.hr));
        map.insert(format!("ndcg@{}", self.k), json!(self.ndcg));
        map.insert("K".into(), json!(self.k));
        map.insert("n_users".into(), json!(self.n_users));
        map.insert("seed".into(), json!(self.seed));
        Value::Object(map)
    }
}

/// `user,rank,candidates` CSV of per-user ranks.
pub fn ranks_csv(results: &[RankResult], raw_user_id: impl Fn(usize) -> u64) -> String {
    let mut out = String::from("user,rank,candidates\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{}\n",
            raw_user_id(r.user),
            r.rank,
            r.candidates
        ));
    }
    out
}
