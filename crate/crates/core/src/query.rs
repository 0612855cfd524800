//! Query-time scoring: exact top-N "most wanted" items for a chosen k.
//!
//! Certified users contribute their buffered top-k outright. For the rest,
//! an item's membership in a user's top-k is decided by a cheap-to-expensive
//! cascade (buffer lookup, norm product, head product, exact product), and
//! only when every bound is inconclusive does the user's scan resume — once,
//! permanently — to certification. Items are visited in decreasing order of
//! their upper-bound score, so scoring stops as soon as no remaining item
//! can displace the current N-th best.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::preprocess::{advance_scan, Index, UserState};
use crate::vectors::{cauchy_bound, dot, partial_bound_raw, PartitionedVectors};
use crate::{Error, Result};

/// Outcome of testing one item against one uncertified user's top-k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember,
    /// The bounds cannot settle it; the user's scan must be completed.
    Unresolved,
}

/// Counters for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Items whose exact score was finalized.
    pub scored_items: usize,
    /// Finalized items whose upper bound was already zero.
    pub zero_bound_items: usize,
    /// Users whose bounds left them undecided at query start.
    pub unresolved_start: usize,
    pub cauchy_prunes: u64,
    pub partial_prunes: u64,
    pub product_prunes: u64,
    pub inner_products: u64,
    pub users_resolved: u32,
    pub resolve_positions: u64,
}

/// Mutable scoring state for one query.
#[derive(Debug, Clone)]
pub struct QueryContext {
    k: usize,
    scores: Vec<u32>,
    finalized: Vec<bool>,
    unresolved: Vec<u32>,
    pub stats: QueryStats,
}

impl QueryContext {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Running credit per norm-sorted item position; exact once finalized.
    pub fn scores(&self) -> &[u32] {
        &self.scores
    }

    pub fn is_finalized(&self, position: usize) -> bool {
        self.finalized[position]
    }

    /// Users whose top-k membership still needs the cascade, in user order.
    pub fn unresolved(&self) -> &[u32] {
        &self.unresolved
    }
}

/// Seeds the per-item scores with every user whose buffered k-th value
/// already dominates its unseen bound — for those the first k buffer
/// entries are provably the exact top-k. The rest become the query's
/// unresolved set.
pub fn init_scores(index: &Index, k: usize) -> Result<QueryContext> {
    let k_max = index.config.k_max;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive"));
    }
    if k > k_max {
        return Err(Error::KExceedsIndexKMax { k, k_max });
    }
    let m = index.config.item_count;
    let mut scores = vec![0u32; m];
    let mut unresolved = Vec::new();
    for (i, state) in index.states.iter().enumerate() {
        if state.kth_value(k) >= state.unseen_bound() {
            for &(position, _) in state.buffer().entries().iter().take(k) {
                scores[position as usize] += 1;
            }
        } else {
            unresolved.push(i as u32);
        }
    }
    let stats = QueryStats { unresolved_start: unresolved.len(), ..QueryStats::default() };
    Ok(QueryContext { k, scores, finalized: vec![false; m], unresolved, stats })
}

/// Decides whether item position `j` is in user `user`'s exact top-k, using
/// only work that is certain: already-scanned positions are answered from
/// the buffer, unscanned ones pass through the norm-product bound, the
/// head-product bound, and finally the exact product compared against the
/// user's unseen bound. Equality with the unseen bound stays `Unresolved`
/// because a smaller-position unscanned item could tie and win.
pub fn decide_membership(
    state: &UserState,
    users: &PartitionedVectors,
    user: usize,
    items: &PartitionedVectors,
    j: usize,
    k: usize,
    stats: &mut QueryStats,
) -> Membership {
    if (j as u32) < state.frontier() {
        return match state.buffer().rank_of(j as u32) {
            Some(rank) if rank < k => {
                let value = state.buffer().entries()[rank].1;
                if state.unseen_bound() <= value {
                    Membership::Member
                } else {
                    Membership::Unresolved
                }
            }
            _ => Membership::NotMember,
        };
    }
    let kth = state.kth_value(k);
    if cauchy_bound(users.norm(user), items.norm(j)) <= kth {
        stats.cauchy_prunes += 1;
        return Membership::NotMember;
    }
    let pb = partial_bound_raw(
        users.head(user),
        users.tail_norm(user),
        items.head(j),
        items.tail_norm(j),
    );
    if pb <= kth {
        stats.partial_prunes += 1;
        return Membership::NotMember;
    }
    let ip = dot(users.row(user), items.row(j));
    stats.inner_products += 1;
    if ip <= kth {
        stats.product_prunes += 1;
        Membership::NotMember
    } else if ip > state.unseen_bound() {
        Membership::Member
    } else {
        Membership::Unresolved
    }
}

/// Completes the user's filtered scan from its frontier to certification.
/// Already-certified users return immediately; positions are never
/// revisited.
pub fn resolve_user(
    state: &mut UserState,
    users: &PartitionedVectors,
    user: usize,
    items: &PartitionedVectors,
    stats: &mut QueryStats,
) {
    if state.is_certified() {
        return;
    }
    let tally = advance_scan(state, users, user, items, u64::MAX);
    stats.users_resolved += 1;
    stats.resolve_positions += tally.positions;
    stats.inner_products += tally.exact_products;
}

/// Finalizes the exact score of the item at norm-sorted position `j`:
/// walks the unresolved users through the cascade, resolving the undecided
/// ones on the spot. A freshly resolved user immediately credits all its
/// now-certain top-k items that are still unfinalized (except `j`, whose
/// membership is already being counted here) and leaves the unresolved set
/// for this and every later query.
pub fn complete_item_score(ctx: &mut QueryContext, index: &mut Index, j: usize) -> u32 {
    debug_assert!(!ctx.finalized[j]);
    let mut score = ctx.scores[j];
    let mut i = 0;
    while i < ctx.unresolved.len() {
        let u = ctx.unresolved[i] as usize;
        let decision = decide_membership(
            &index.states[u],
            &index.users,
            u,
            &index.items,
            j,
            ctx.k,
            &mut ctx.stats,
        );
        match decision {
            Membership::Member => {
                score += 1;
                i += 1;
            }
            Membership::NotMember => {
                i += 1;
            }
            Membership::Unresolved => {
                resolve_user(&mut index.states[u], &index.users, u, &index.items, &mut ctx.stats);
                for &(position, _) in index.states[u].buffer().entries().iter().take(ctx.k) {
                    let p = position as usize;
                    if p == j {
                        score += 1;
                    } else if !ctx.finalized[p] {
                        ctx.scores[p] += 1;
                    }
                }
                ctx.unresolved.remove(i);
            }
        }
    }
    ctx.scores[j] = score;
    ctx.finalized[j] = true;
    ctx.stats.scored_items += 1;
    score
}

/// One query answer: the top `n` items as (original_item_id, exact_score),
/// score descending, ties by ascending norm-sorted position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopNResult {
    pub entries: Vec<(u32, u32)>,
    pub k: usize,
    pub requested: usize,
    /// True when the request exceeded the item count and was reduced.
    pub clamped: bool,
    pub stats: QueryStats,
}

#[derive(Debug, PartialEq, Eq)]
struct WorstFirst {
    score: u32,
    position: u32,
}

impl Ord for WorstFirst {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.cmp(&self.score).then(self.position.cmp(&other.position))
    }
}

impl PartialOrd for WorstFirst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Returns the exact top-N items by number of users holding them in their
/// top-k. Items are finalized in decreasing upper-bound order until no
/// unfinalized item's bound can beat (or tie-and-outrank) the running N-th
/// best score; an upper bound of zero finalizes a score of zero outright.
/// User resolutions performed along the way persist in the index.
pub fn top_n_query(index: &mut Index, k: usize, requested: usize) -> Result<TopNResult> {
    if requested == 0 {
        return Err(Error::InvalidConfig("result size must be positive"));
    }
    let m = index.config.item_count;
    let n = requested.min(m);
    let mut ctx = init_scores(index, k)?;

    let bounds: Vec<u32> = (0..m).map(|j| index.table.upper_score(j, k)).collect();
    let mut queue: Vec<u32> = (0..m as u32).collect();
    queue.sort_by(|&a, &b| bounds[b as usize].cmp(&bounds[a as usize]).then(a.cmp(&b)));

    let mut best: BinaryHeap<WorstFirst> = BinaryHeap::with_capacity(n + 1);
    for &position in &queue {
        let j = position as usize;
        let bound = bounds[j];
        if best.len() == n {
            let worst = best.peek().unwrap();
            if bound < worst.score || (bound == worst.score && position > worst.position) {
                break;
            }
        }
        let score = if bound == 0 {
            debug_assert_eq!(ctx.scores[j], 0);
            ctx.finalized[j] = true;
            ctx.stats.scored_items += 1;
            ctx.stats.zero_bound_items += 1;
            0
        } else {
            complete_item_score(&mut ctx, index, j)
        };
        if best.len() < n {
            best.push(WorstFirst { score, position });
        } else {
            let worst = best.peek().unwrap();
            if score > worst.score || (score == worst.score && position < worst.position) {
                best.pop();
                best.push(WorstFirst { score, position });
            }
        }
    }

    let mut ranked = best.into_vec();
    ranked.sort_by(|a, b| b.score.cmp(&a.score).then(a.position.cmp(&b.position)));
    let entries = ranked
        .into_iter()
        .map(|e| (index.item_ids[e.position as usize], e.score))
        .collect();
    Ok(TopNResult { entries, k, requested, clamped: n != requested, stats: ctx.stats })
}
