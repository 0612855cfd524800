//! Brute-force reference scorer: per-user exact top-k over the full item
//! list, with an optional norm-ordered early stop. Serves as the oracle for
//! equivalence tests and as the speed yardstick for benchmarks.
//!
//! It shares only the deterministic comparator with the engine — buffers,
//! scans, and score accumulation are implemented independently here.

use alloc::vec;
use alloc::vec::Vec;

use crate::vectors::{dot, outranks, VectorSet};
use crate::{Error, Result};

/// How the per-user top-k scan traverses the item list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Every item, no pruning.
    Full,
    /// Stop once the norm product at the current position cannot beat the
    /// k-th best value; requires the norm-sorted item order.
    NormPruned,
}

/// Exact per-item scores for one k, addressed by norm-sorted position, with
/// the map back to original item ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreTable {
    k: usize,
    scores: Vec<u32>,
    order: Vec<u32>,
}

impl ScoreTable {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Scores by norm-sorted item position.
    pub fn scores(&self) -> &[u32] {
        &self.scores
    }

    /// Original item id at each norm-sorted position.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// The top `n` items as (original_item_id, score), score descending,
    /// ties by ascending position. `n` larger than the item count returns
    /// all items.
    pub fn top_n(&self, n: usize) -> Vec<(u32, u32)> {
        let mut positions: Vec<u32> = (0..self.scores.len() as u32).collect();
        positions.sort_by(|&a, &b| {
            self.scores[b as usize]
                .cmp(&self.scores[a as usize])
                .then(a.cmp(&b))
        });
        positions.truncate(n.min(self.scores.len()));
        positions
            .into_iter()
            .map(|p| (self.order[p as usize], self.scores[p as usize]))
            .collect()
    }
}

/// Counts, for every item, the users whose exact top-k contains it.
///
/// `sorted_items` must be in non-increasing norm order and `order` maps each
/// position to its original id (as produced by
/// [`crate::vectors::sort_items_by_norm`] and [`VectorSet::reorder`]).
pub fn brute_force_scores(
    users: &VectorSet,
    sorted_items: &VectorSet,
    order: Vec<u32>,
    k: usize,
    mode: ScanMode,
) -> Result<ScoreTable> {
    let m = sorted_items.count();
    if k < 1 || k > m {
        return Err(Error::InvalidConfig("k out of range for item set"));
    }
    if users.dim() != sorted_items.dim() {
        return Err(Error::DimensionMismatch { left: users.dim(), right: sorted_items.dim() });
    }
    if order.len() != m {
        return Err(Error::InvalidConfig("order length mismatch"));
    }
    if (1..m).any(|j| sorted_items.norm(j - 1) < sorted_items.norm(j)) {
        return Err(Error::InvalidConfig("items not in norm order"));
    }

    let mut scores = vec![0u32; m];
    let mut best: Vec<(u32, f64)> = Vec::with_capacity(k + 1);
    for i in 0..users.count() {
        let u = users.row(i);
        let u_norm = users.norm(i);
        best.clear();
        for j in 0..m {
            if best.len() == k {
                let worst = best[k - 1];
                if mode == ScanMode::NormPruned && u_norm * sorted_items.norm(j) <= worst.1 {
                    break;
                }
                let ip = dot(u, sorted_items.row(j));
                if !outranks(ip, j as u32, worst.1, worst.0) {
                    continue;
                }
                best.pop();
                let at = best.partition_point(|e| outranks(e.1, e.0, ip, j as u32));
                best.insert(at, (j as u32, ip));
            } else {
                let ip = dot(u, sorted_items.row(j));
                let at = best.partition_point(|e| outranks(e.1, e.0, ip, j as u32));
                best.insert(at, (j as u32, ip));
            }
        }
        for &(pos, _) in &best {
            scores[pos as usize] += 1;
        }
    }
    Ok(ScoreTable { k, scores, order })
}
