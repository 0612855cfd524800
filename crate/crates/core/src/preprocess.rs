//! Index construction: a budgeted, norm-ordered scan per user that either
//! certifies the user's exact top-k_max or leaves a resumable frontier, then
//! an item-by-rank table of sound upper bounds on how many users can hold
//! each item in their top k.
//!
//! The scan budget is spent in two phases: an equal slice per user, then a
//! second round distributed by a fitted exponential curve that favors users
//! close to certification. Uncertified users keep a bound on everything
//! beyond their frontier so queries can still reason about them exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::transform::{apply_rotation, fit_rotation, Rotation};
use crate::vectors::{
    cauchy_bound, dot, outranks, partial_bound_raw, sort_items_by_norm, PartitionedVectors,
    VectorSet,
};
use crate::{Error, Result};

/// Bounded buffer of the best (item_position, inner_product) pairs seen so
/// far, kept in deterministic rank order: larger product first, ties by
/// smaller position.
#[derive(Debug, Clone, PartialEq)]
pub struct TopBuffer {
    cap: usize,
    entries: Vec<(u32, f64)>,
}

impl TopBuffer {
    pub fn new(cap: usize) -> TopBuffer {
        TopBuffer { cap, entries: Vec::with_capacity(cap) }
    }

    /// Rebuilds a buffer from stored entries (deserialization). Entries must
    /// already be in rank order and fit the capacity.
    pub fn from_parts(cap: usize, entries: Vec<(u32, f64)>) -> Result<TopBuffer> {
        if cap == 0 || entries.len() > cap {
            return Err(Error::InvalidConfig("buffer entries exceed capacity"));
        }
        if entries.iter().any(|e| e.1.is_nan()) {
            return Err(Error::NonFinite);
        }
        for w in entries.windows(2) {
            if !outranks(w[0].1, w[0].0, w[1].1, w[1].0) {
                return Err(Error::InvalidConfig("buffer entries out of rank order"));
            }
        }
        Ok(TopBuffer { cap, entries })
    }

    /// Inserts the pair if it outranks the current worst entry or the buffer
    /// is not yet full, evicting the worst when over capacity.
    pub fn offer(&mut self, position: u32, value: f64) {
        if self.entries.len() == self.cap {
            let worst = self.entries[self.cap - 1];
            if !outranks(value, position, worst.1, worst.0) {
                return;
            }
            self.entries.pop();
        }
        let at = self.entries.partition_point(|e| outranks(e.1, e.0, value, position));
        self.entries.insert(at, (position, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.cap
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Value of the k-th best entry (1-based), −∞ when fewer than k held.
    pub fn kth_value(&self, k: usize) -> f64 {
        if k >= 1 && k <= self.entries.len() {
            self.entries[k - 1].1
        } else {
            f64::NEG_INFINITY
        }
    }

    /// The pruning threshold: the worst value of a full buffer, −∞ until
    /// the buffer fills.
    pub fn threshold(&self) -> f64 {
        if self.is_full() {
            self.entries[self.cap - 1].1
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Rank (0-based) of the entry holding `position`, if present.
    pub fn rank_of(&self, position: u32) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == position)
    }
}

/// Per-user scan state: the best-so-far buffer, the first item position not
/// yet exactly evaluated, and a sound upper bound on every inner product at
/// or beyond that frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub(crate) best: TopBuffer,
    pub(crate) frontier: u32,
    pub(crate) unseen_bound: f64,
    pub(crate) certified: bool,
}

impl UserState {
    fn new(k_max: usize) -> UserState {
        UserState {
            best: TopBuffer::new(k_max),
            frontier: 0,
            unseen_bound: f64::INFINITY,
            certified: false,
        }
    }

    pub fn from_parts(
        best: TopBuffer,
        frontier: u32,
        unseen_bound: f64,
        certified: bool,
    ) -> Result<UserState> {
        if unseen_bound.is_nan() {
            return Err(Error::NonFinite);
        }
        Ok(UserState { best, frontier, unseen_bound, certified })
    }

    pub fn buffer(&self) -> &TopBuffer {
        &self.best
    }

    /// Number of item positions exactly evaluated so far; also the next
    /// position a resumed scan would visit.
    pub fn frontier(&self) -> u32 {
        self.frontier
    }

    /// Upper bound on the inner product with any item at or beyond the
    /// frontier; −∞ once the user is certified.
    pub fn unseen_bound(&self) -> f64 {
        self.unseen_bound
    }

    /// True when the buffer provably equals the user's exact top-k_max.
    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn kth_value(&self, k: usize) -> f64 {
        self.best.kth_value(k)
    }

    fn certify(&mut self) {
        self.certified = true;
        self.unseen_bound = f64::NEG_INFINITY;
    }
}

/// Counters from one scan pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ScanTally {
    pub positions: u64,
    pub exact_products: u64,
    pub bound_checks: u64,
}

/// Advances one user's filtered scan by at most `allowance` item positions.
///
/// At each position the norm-product bound is checked first: once it cannot
/// beat the buffer's worst value, nothing further on the norm-sorted order
/// can either, and the user is certified without spending the position.
/// Surviving positions pay one unit of allowance, then pass through the
/// head-product bound before the exact inner product is computed. Reaching
/// the end of the item list also certifies.
pub(crate) fn advance_scan(
    state: &mut UserState,
    users: &PartitionedVectors,
    user: usize,
    items: &PartitionedVectors,
    allowance: u64,
) -> ScanTally {
    let m = items.count();
    let u_norm = users.norm(user);
    let u_head = users.head(user);
    let u_tail = users.tail_norm(user);
    let u_row = users.row(user);
    let mut tally = ScanTally::default();

    while !state.certified {
        let j = state.frontier as usize;
        if j == m {
            state.certify();
            break;
        }
        let threshold = state.best.threshold();
        tally.bound_checks += 1;
        if cauchy_bound(u_norm, items.norm(j)) <= threshold {
            state.certify();
            break;
        }
        if tally.positions == allowance {
            break;
        }
        tally.positions += 1;
        tally.bound_checks += 1;
        let pb = partial_bound_raw(u_head, u_tail, items.head(j), items.tail_norm(j));
        if pb > threshold {
            let ip = dot(u_row, items.row(j));
            tally.exact_products += 1;
            state.best.offer(j as u32, ip);
        }
        state.frontier += 1;
    }
    tally
}

/// A user left uncertified by the uniform phase, with how many positions
/// past the uniform allowance its certifying scan is estimated to need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deficit {
    pub user: u32,
    pub value: i64,
}

/// Counters recorded while building an index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub uniform_positions: u64,
    pub dynamic_positions: u64,
    pub exact_products: u64,
    pub bound_checks: u64,
    pub certified_after_uniform: usize,
    pub pending_after_uniform: usize,
    pub uncertified_after_dynamic: usize,
    pub budget_clamped: bool,
}

/// Phase one: every user scans the same number of norm-sorted positions.
/// Returns the per-user states plus the uncertified users with their
/// deficits, in user order.
pub fn uniform_scan(
    users: &PartitionedVectors,
    items: &PartitionedVectors,
    k_max: usize,
    budget: u64,
    stats: &mut BuildStats,
) -> Result<(Vec<UserState>, Vec<Deficit>)> {
    let n = users.count();
    let m = items.count();
    if n == 0 {
        return Err(Error::InvalidConfig("empty user set"));
    }
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be positive"));
    }
    if m < k_max {
        return Err(Error::ItemSetSmallerThanKMax { m, k_max });
    }
    if users.vectors().dim() != items.vectors().dim() {
        return Err(Error::DimensionMismatch {
            left: users.vectors().dim(),
            right: items.vectors().dim(),
        });
    }
    if users.split_dim() != items.split_dim() {
        return Err(Error::SplitMismatch { left: users.split_dim(), right: items.split_dim() });
    }
    let per_user = budget / n as u64;
    if per_user < k_max as u64 {
        return Err(Error::InvalidConfig("uniform budget below k_max per user"));
    }

    let mut states = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for i in 0..n {
        let mut state = UserState::new(k_max);
        let tally = advance_scan(&mut state, users, i, items, per_user);
        stats.uniform_positions += tally.positions;
        stats.exact_products += tally.exact_products;
        stats.bound_checks += tally.bound_checks;
        if !state.certified {
            let value = certification_rank(&state, users.norm(i), items) + 1 - per_user as i64;
            pending.push(Deficit { user: i as u32, value });
        }
        states.push(state);
    }
    stats.certified_after_uniform = n - pending.len();
    stats.pending_after_uniform = pending.len();
    Ok((states, pending))
}

/// Smallest 1-based position whose norm product no longer beats the user's
/// current worst buffered value — the point a certifying scan must reach.
/// Returns m+1 when no position qualifies. Binary search is valid because
/// item norms are non-increasing.
fn certification_rank(state: &UserState, u_norm: f64, items: &PartitionedVectors) -> i64 {
    let threshold = state.best.threshold();
    let mut lo = 0usize;
    let mut hi = items.count();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if cauchy_bound(u_norm, items.norm(mid)) > threshold {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo as i64 + 1
}

/// Result of fitting the second-phase budget curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetFit {
    pub beta: f64,
    /// True when no exponent in the search range meets the budget and the
    /// boundary value was used instead.
    pub clamped: bool,
}

/// The per-rank budget curve alpha·exp(beta·x) + gamma.
pub fn budget_curve(alpha: f64, beta: f64, gamma: f64, x: f64) -> f64 {
    alpha * math::exp(beta * x) + gamma
}

/// Closed-form integral of the budget curve over [0, len].
pub fn budget_curve_total(alpha: f64, beta: f64, gamma: f64, len: usize) -> f64 {
    let l = len as f64;
    if beta == 0.0 {
        (alpha + gamma) * l
    } else {
        alpha * math::exp_m1(beta * l) / beta + gamma * l
    }
}

/// Solves for the exponent beta that makes the budget curve's integral over
/// [0, pending_count] equal `budget`, by bisection over
/// [−64/len, 64/len]. The zero-exponent case is returned exactly when the
/// budget matches the linear limit. With an empty pending set the dynamic
/// phase is skipped and beta is 0.
pub fn fit_budget_curve(pending_count: usize, budget: u64, alpha: f64, gamma: f64) -> BudgetFit {
    if pending_count == 0 {
        return BudgetFit { beta: 0.0, clamped: false };
    }
    let len = pending_count as f64;
    let target = budget as f64;
    if target == (alpha + gamma) * len {
        return BudgetFit { beta: 0.0, clamped: false };
    }
    let mut lo = -64.0 / len;
    let mut hi = 64.0 / len;
    if budget_curve_total(alpha, lo, gamma, pending_count) >= target {
        return BudgetFit { beta: lo, clamped: true };
    }
    if budget_curve_total(alpha, hi, gamma, pending_count) < target {
        return BudgetFit { beta: hi, clamped: true };
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if budget_curve_total(alpha, mid, gamma, pending_count) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BudgetFit { beta: 0.5 * (lo + hi), clamped: false }
}

/// Phase two: pending users, in ascending-deficit order, each receive the
/// curve value at their rank (rounded to the nearest position) plus whatever
/// earlier users left unconsumed; certifying early returns the remainder to
/// the pool. Returns the users still uncertified afterwards.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_scan(
    states: &mut [UserState],
    users: &PartitionedVectors,
    items: &PartitionedVectors,
    pending: &[Deficit],
    alpha: f64,
    beta: f64,
    gamma: f64,
    stats: &mut BuildStats,
) -> Vec<u32> {
    let mut pool: u64 = 0;
    let mut uncertified = Vec::new();
    for (rank, deficit) in pending.iter().enumerate() {
        let grant = math::round(budget_curve(alpha, beta, gamma, rank as f64)).max(0.0) as u64;
        let allowance = grant.saturating_add(pool);
        let user = deficit.user as usize;
        let tally = advance_scan(&mut states[user], users, user, items, allowance);
        stats.dynamic_positions += tally.positions;
        stats.exact_products += tally.exact_products;
        stats.bound_checks += tally.bound_checks;
        pool = allowance - tally.positions;
        if !states[user].certified {
            uncertified.push(deficit.user);
        }
    }
    stats.uncertified_after_dynamic = uncertified.len();
    uncertified
}

/// Sound per-item, per-k upper bounds on how many users can hold the item in
/// their exact top k, addressed by norm-sorted item position.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundTable {
    k_max: usize,
    counts: Vec<u32>,
}

impl UpperBoundTable {
    pub fn from_parts(k_max: usize, item_count: usize, counts: Vec<u32>) -> Result<UpperBoundTable> {
        if k_max == 0 || counts.len() != item_count * k_max {
            return Err(Error::InvalidConfig("upper-bound table shape mismatch"));
        }
        for row in counts.chunks_exact(k_max) {
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidConfig("upper-bound table not monotone in k"));
            }
        }
        Ok(UpperBoundTable { k_max, counts })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn item_count(&self) -> usize {
        self.counts.len() / self.k_max
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Upper bound on the number of users whose exact top-k contains the
    /// item at this norm-sorted position, for 1 ≤ k ≤ k_max.
    pub fn upper_score(&self, position: usize, k: usize) -> u32 {
        debug_assert!(k >= 1 && k <= self.k_max);
        self.counts[position * self.k_max + (k - 1)]
    }
}

/// Final build phase. For every uncertified user, walks the unscanned tail
/// of the norm-sorted order with bound arithmetic only: each position's
/// head-product bound is compared against the user's buffer values to count
/// the item as a potential top-k member, and the running maximum (capped by
/// the norm product where the walk stops) becomes the user's unseen bound.
/// Every user then credits its buffered entries: the entry at rank r is a
/// certain or candidate member for every k ≥ r+1.
pub fn compute_upper_bounds(
    states: &mut [UserState],
    users: &PartitionedVectors,
    items: &PartitionedVectors,
    k_max: usize,
    stats: &mut BuildStats,
) -> UpperBoundTable {
    let m = items.count();
    let mut counts = vec![0u32; m * k_max];

    for (i, state) in states.iter_mut().enumerate() {
        if !state.certified {
            let u_norm = users.norm(i);
            let u_head = users.head(i);
            let u_tail = users.tail_norm(i);
            let threshold = state.best.threshold();
            let mut reach = f64::NEG_INFINITY;
            let mut j = state.frontier as usize;
            while j < m {
                let cb = cauchy_bound(u_norm, items.norm(j));
                stats.bound_checks += 1;
                if cb <= threshold {
                    reach = reach.max(cb);
                    break;
                }
                let pb = partial_bound_raw(u_head, u_tail, items.head(j), items.tail_norm(j));
                stats.bound_checks += 1;
                reach = reach.max(pb);
                let outranked = state.best.entries().partition_point(|e| e.1 > pb);
                if outranked < k_max {
                    counts[j * k_max + outranked] += 1;
                }
                j += 1;
            }
            state.unseen_bound = reach;
        }
        for (rank, &(position, _)) in state.best.entries().iter().enumerate() {
            counts[position as usize * k_max + rank] += 1;
        }
    }

    for row in counts.chunks_exact_mut(k_max) {
        for k in 1..k_max {
            row[k] += row[k - 1];
        }
    }
    UpperBoundTable { k_max, counts }
}

/// Which orthogonal basis the build uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationMode {
    /// Fit the energy-concentrating basis from the item set.
    Fitted,
    /// Keep the input basis (useful for hand-checkable fixtures).
    Identity,
}

/// Build-time knobs. The two budget factors size the scan phases as
/// factor × n × k_max positions each.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub k_max: usize,
    pub split_dim: usize,
    pub uniform_budget_factor: u32,
    pub dynamic_budget_factor: u32,
    pub alpha: f64,
    /// Curve offset; `None` anchors it at the smallest pending deficit
    /// (at least 1) so every pending user can make progress.
    pub gamma: Option<f64>,
    pub rotation: RotationMode,
}

impl Default for BuildConfig {
    fn default() -> BuildConfig {
        BuildConfig {
            k_max: 25,
            split_dim: 10,
            uniform_budget_factor: 4,
            dynamic_budget_factor: 4,
            alpha: 1.0,
            gamma: None,
            rotation: RotationMode::Fitted,
        }
    }
}

/// Effective parameters of a finished build, echoed into the index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub user_count: usize,
    pub item_count: usize,
    pub dim: usize,
    pub split_dim: usize,
    pub k_max: usize,
    pub uniform_budget: u64,
    pub dynamic_budget: u64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// A built index: the rotated, partitioned vector sets, per-user scan
/// states, and the upper-bound table, ready for queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub(crate) config: IndexConfig,
    pub(crate) rotation: Rotation,
    pub(crate) item_ids: Vec<u32>,
    pub(crate) items: PartitionedVectors,
    pub(crate) users: PartitionedVectors,
    pub(crate) states: Vec<UserState>,
    pub(crate) table: UpperBoundTable,
    pub(crate) stats: BuildStats,
}

impl Index {
    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    /// Original item id at each norm-sorted position.
    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    /// Rotated items in norm-sorted order.
    pub fn items(&self) -> &PartitionedVectors {
        &self.items
    }

    /// Rotated users in input order.
    pub fn users(&self) -> &PartitionedVectors {
        &self.users
    }

    pub fn user_states(&self) -> &[UserState] {
        &self.states
    }

    pub fn table(&self) -> &UpperBoundTable {
        &self.table
    }

    pub fn build_stats(&self) -> &BuildStats {
        &self.stats
    }

    /// Reassembles an index from deserialized parts, validating shapes and
    /// cross-references. Build statistics are not part of a stored index and
    /// start zeroed.
    pub fn from_parts(
        config: IndexConfig,
        rotation: Rotation,
        item_ids: Vec<u32>,
        items: PartitionedVectors,
        users: PartitionedVectors,
        states: Vec<UserState>,
        table: UpperBoundTable,
    ) -> Result<Index> {
        let (n, m) = (config.user_count, config.item_count);
        if users.count() != n
            || items.count() != m
            || users.vectors().dim() != config.dim
            || items.vectors().dim() != config.dim
            || users.split_dim() != config.split_dim
            || items.split_dim() != config.split_dim
            || rotation.dim() != config.dim
        {
            return Err(Error::InvalidConfig("index parts disagree with config"));
        }
        if config.k_max == 0 || m < config.k_max {
            return Err(Error::ItemSetSmallerThanKMax { m, k_max: config.k_max });
        }
        if table.k_max() != config.k_max || table.item_count() != m {
            return Err(Error::InvalidConfig("upper-bound table shape mismatch"));
        }
        if item_ids.len() != m {
            return Err(Error::InvalidConfig("item id map length mismatch"));
        }
        let mut seen = vec![false; m];
        for &id in &item_ids {
            if id as usize >= m || seen[id as usize] {
                return Err(Error::InvalidConfig("item id map is not a permutation"));
            }
            seen[id as usize] = true;
        }
        if states.len() != n {
            return Err(Error::InvalidConfig("user state count mismatch"));
        }
        for state in &states {
            if state.frontier as usize > m || state.best.capacity() != config.k_max {
                return Err(Error::InvalidConfig("user state out of range"));
            }
        }
        Ok(Index { config, rotation, item_ids, items, users, states, table, stats: BuildStats::default() })
    }
}

/// Builds the full index from raw user and item sets: norm-sort the items,
/// fit and apply the rotation, run both scan phases, then derive the
/// upper-bound table.
pub fn build_index(users: &VectorSet, items: &VectorSet, config: &BuildConfig) -> Result<Index> {
    let n = users.count();
    let m = items.count();
    let d = users.dim();
    if n == 0 {
        return Err(Error::InvalidConfig("empty user set"));
    }
    if config.k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be positive"));
    }
    if m < config.k_max {
        return Err(Error::ItemSetSmallerThanKMax { m, k_max: config.k_max });
    }
    if items.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: items.dim() });
    }
    if config.split_dim < 1 || config.split_dim > d {
        return Err(Error::InvalidSplit { split_dim: config.split_dim, dim: d });
    }
    if config.uniform_budget_factor < 1 {
        return Err(Error::InvalidConfig("uniform budget factor must be at least 1"));
    }
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidConfig("alpha must be positive and finite"));
    }
    if let Some(g) = config.gamma {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::InvalidConfig("gamma must be non-negative and finite"));
        }
    }

    let order = sort_items_by_norm(items);
    let rotation = match config.rotation {
        RotationMode::Fitted => fit_rotation(items),
        RotationMode::Identity => Rotation::identity(d),
    };
    let items_p =
        PartitionedVectors::new(apply_rotation(&rotation, &items.reorder(&order))?, config.split_dim)?;
    let users_p = PartitionedVectors::new(apply_rotation(&rotation, users)?, config.split_dim)?;

    let uniform_budget = n as u64 * config.k_max as u64 * config.uniform_budget_factor as u64;
    let dynamic_budget = n as u64 * config.k_max as u64 * config.dynamic_budget_factor as u64;
    let mut stats = BuildStats::default();

    let (mut states, mut pending) =
        uniform_scan(&users_p, &items_p, config.k_max, uniform_budget, &mut stats)?;
    pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));

    let gamma = config.gamma.unwrap_or_else(|| {
        pending.iter().map(|d| d.value).min().map_or(1.0, |v| (v as f64).max(1.0))
    });
    let fit = fit_budget_curve(pending.len(), dynamic_budget, config.alpha, gamma);
    stats.budget_clamped = fit.clamped;

    dynamic_scan(&mut states, &users_p, &items_p, &pending, config.alpha, fit.beta, gamma, &mut stats);
    let table = compute_upper_bounds(&mut states, &users_p, &items_p, config.k_max, &mut stats);

    Ok(Index {
        config: IndexConfig {
            user_count: n,
            item_count: m,
            dim: d,
            split_dim: config.split_dim,
            k_max: config.k_max,
            uniform_budget,
            dynamic_budget,
            alpha: config.alpha,
            beta: fit.beta,
            gamma,
        },
        rotation,
        item_ids: order,
        items: items_p,
        users: users_p,
        states,
        table,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::Role;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn parts(role: Role, dim: usize, split: usize, data: Vec<f64>) -> PartitionedVectors {
        PartitionedVectors::new(VectorSet::new(role, dim, data).unwrap(), split).unwrap()
    }

    fn random_set(seed: u64, role: Role, count: usize, dim: usize) -> VectorSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..count * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        VectorSet::new(role, dim, data).unwrap()
    }

    /// Independent full-scan top-k with the shared tie rule, by sorting.
    fn oracle_topk(user: &[f64], items: &PartitionedVectors, k: usize) -> Vec<(u32, f64)> {
        let mut all: Vec<(u32, f64)> = (0..items.count())
            .map(|j| (j as u32, dot(user, items.row(j))))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn buffer_keeps_deterministic_order() {
        let mut buf = TopBuffer::new(2);
        buf.offer(0, 2.0);
        buf.offer(1, 2.0);
        buf.offer(2, 2.0);
        assert_eq!(buf.entries(), &[(0, 2.0), (1, 2.0)]);
        buf.offer(3, 3.0);
        assert_eq!(buf.entries(), &[(3, 3.0), (0, 2.0)]);
        assert_eq!(buf.kth_value(1), 3.0);
        assert_eq!(buf.kth_value(2), 2.0);
        assert_eq!(buf.threshold(), 2.0);
    }

    #[test]
    fn buffer_threshold_until_full() {
        let mut buf = TopBuffer::new(3);
        assert_eq!(buf.threshold(), f64::NEG_INFINITY);
        buf.offer(5, -1.0);
        assert_eq!(buf.threshold(), f64::NEG_INFINITY);
        assert_eq!(buf.kth_value(1), -1.0);
        assert_eq!(buf.kth_value(2), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_scan_single_user_example() {
        let users = parts(Role::Users, 2, 2, vec![1.0, 0.0]);
        let items = parts(Role::Items, 2, 2, vec![2.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let mut stats = BuildStats::default();
        let (states, pending) = uniform_scan(&users, &items, 2, 3, &mut stats).unwrap();
        assert!(pending.is_empty());
        assert!(states[0].is_certified());
        assert_eq!(states[0].buffer().entries(), &[(0, 2.0), (2, 1.0)]);
        assert_eq!(states[0].frontier(), 3);
        assert_eq!(states[0].unseen_bound(), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_scan_certifies_early_on_norm_drop() {
        let users = parts(Role::Users, 2, 2, vec![1.0, 0.0]);
        let items = parts(
            Role::Items,
            2,
            2,
            vec![10.0, 0.0, 9.0, 0.0, 8.0, 0.0, 7.0, 0.0],
        );
        let mut stats = BuildStats::default();
        let (states, pending) = uniform_scan(&users, &items, 2, 8, &mut stats).unwrap();
        assert!(pending.is_empty());
        assert!(states[0].is_certified());
        // The third item's norm product (8) cannot beat the worst buffered
        // value (9), so the scan stops after two exact products.
        assert_eq!(states[0].frontier(), 2);
        assert_eq!(stats.exact_products, 2);
    }

    #[test]
    fn uniform_scan_certified_buffers_match_oracle() {
        let users = random_set(31, Role::Users, 200, 8);
        let items_set = random_set(32, Role::Items, 100, 8);
        let order = sort_items_by_norm(&items_set);
        let items = PartitionedVectors::new(items_set.reorder(&order), 4).unwrap();
        let users_p = PartitionedVectors::new(users.clone(), 4).unwrap();
        let mut stats = BuildStats::default();
        let k_max = 5;
        let (states, _) = uniform_scan(&users_p, &items, k_max, 200 * 40, &mut stats).unwrap();
        for (i, state) in states.iter().enumerate() {
            if state.is_certified() {
                let want = oracle_topk(users_p.row(i), &items, k_max);
                let got: Vec<(u32, f64)> = state.buffer().entries().to_vec();
                assert_eq!(got, want, "user {i}");
            }
        }
    }

    #[test]
    fn uniform_scan_rejects_small_item_set() {
        let users = parts(Role::Users, 2, 2, vec![1.0, 0.0]);
        let items = parts(Role::Items, 2, 2, vec![2.0, 0.0]);
        let mut stats = BuildStats::default();
        assert_eq!(
            uniform_scan(&users, &items, 2, 8, &mut stats).err(),
            Some(Error::ItemSetSmallerThanKMax { m: 1, k_max: 2 })
        );
    }

    #[test]
    fn deficit_points_at_certification_rank() {
        // One user, items with slowly decaying norms: a two-position budget
        // leaves it pending with a deficit telling how much further to go.
        let users = parts(Role::Users, 2, 2, vec![1.0, 0.0]);
        let items = parts(
            Role::Items,
            2,
            2,
            vec![4.0, 0.0, 0.0, 3.9, 3.8, 0.0, 0.0, 3.7, 0.5, 0.0],
        );
        let mut stats = BuildStats::default();
        let (states, pending) = uniform_scan(&users, &items, 2, 2, &mut stats).unwrap();
        assert!(!states[0].is_certified());
        assert_eq!(pending.len(), 1);
        // After two scans the buffer holds values 4.0 and 0.0, and every
        // norm product stays above 0, so the certifying rank is m+1 = 6 and
        // the deficit is 6 + 1 − 2 = 5.
        assert_eq!(pending[0], Deficit { user: 0, value: 5 });
    }

    #[test]
    fn budget_fit_linear_limit_is_exact() {
        let fit = fit_budget_curve(100, 100, 1.0, 0.0);
        assert_eq!(fit.beta, 0.0);
        assert!(!fit.clamped);
    }

    #[test]
    fn budget_fit_matches_bisection_oracle() {
        let fit = fit_budget_curve(100, 1000, 1.0, 0.0);
        assert!(!fit.clamped);
        assert!((fit.beta - 0.0362).abs() < 1e-3, "beta {}", fit.beta);
        let total = budget_curve_total(1.0, fit.beta, 0.0, 100);
        assert!((total - 1000.0).abs() <= 10.0);
    }

    #[test]
    fn budget_fit_recovers_forward_evaluated_exponent() {
        let want = 0.05;
        let target = budget_curve_total(1.0, want, 2.0, 50);
        let fit = fit_budget_curve(50, math::round(target) as u64, 1.0, 2.0);
        assert!(!fit.clamped);
        assert!((fit.beta - want).abs() <= 0.01 * want, "beta {}", fit.beta);
    }

    #[test]
    fn budget_fit_empty_pending_skips() {
        assert_eq!(fit_budget_curve(0, 1234, 1.0, 3.0), BudgetFit { beta: 0.0, clamped: false });
    }

    #[test]
    fn budget_fit_clamps_when_offset_exceeds_budget() {
        let fit = fit_budget_curve(100, 200, 1.0, 5.0);
        assert!(fit.clamped);
        assert_eq!(fit.beta, -0.64);
    }

    fn spread_norm_instance(seed: u64, n: usize, m: usize) -> (PartitionedVectors, PartitionedVectors) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = 6;
        let users = random_set(seed + 1, Role::Users, n, d);
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m {
            let scale: f64 = rng.random_range(0.1..4.0);
            for _ in 0..d {
                data.push(scale * rng.random_range(-1.0..1.0));
            }
        }
        let items = VectorSet::new(Role::Items, d, data).unwrap();
        let order = sort_items_by_norm(&items);
        (
            PartitionedVectors::new(users, 3).unwrap(),
            PartitionedVectors::new(items.reorder(&order), 3).unwrap(),
        )
    }

    #[test]
    fn dynamic_scan_generous_budget_certifies_everyone() {
        let (users, items) = spread_norm_instance(41, 60, 200);
        let mut stats = BuildStats::default();
        let (mut states, mut pending) = uniform_scan(&users, &items, 3, 60 * 3, &mut stats).unwrap();
        assert!(!pending.is_empty());
        pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));
        let leftover = dynamic_scan(
            &mut states,
            &users,
            &items,
            &pending,
            items.count() as f64,
            0.0,
            0.0,
            &mut stats,
        );
        assert!(leftover.is_empty());
        assert!(states.iter().all(|s| s.is_certified()));
    }

    #[test]
    fn dynamic_scan_starvation_leaves_users_at_their_frontier() {
        // Unit-norm users and items in generic position: certification is
        // impossible before exhaustion, and a decaying curve grants almost
        // nothing, so frontiers advance by exactly the granted positions.
        let users = parts(Role::Users, 2, 1, vec![1.0, 0.0, 0.8, 0.6]);
        let items = {
            let mut data = Vec::new();
            for t in 0..40 {
                let a = 0.01 * t as f64 + 0.4;
                data.push(math::sqrt(1.0 - a * a));
                data.push(a);
            }
            let set = VectorSet::new(Role::Items, 2, data).unwrap();
            let order = sort_items_by_norm(&set);
            PartitionedVectors::new(set.reorder(&order), 1).unwrap()
        };
        let mut stats = BuildStats::default();
        let (mut states, mut pending) = uniform_scan(&users, &items, 2, 2 * 2, &mut stats).unwrap();
        assert_eq!(pending.len(), 2);
        pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));
        let before: Vec<u32> = states.iter().map(|s| s.frontier()).collect();
        let leftover = dynamic_scan(
            &mut states,
            &users,
            &items,
            &pending,
            1.0,
            -32.0,
            0.0,
            &mut stats,
        );
        assert_eq!(leftover.len(), 2);
        // Rank 0 gets round(e^0) = 1 position, rank 1 gets round(e^-32) = 0.
        let first = pending[0].user as usize;
        let second = pending[1].user as usize;
        assert_eq!(states[first].frontier(), before[first] + 1);
        assert_eq!(states[second].frontier(), before[second]);
    }

    #[test]
    fn uncertified_users_are_exactly_those_with_live_frontiers() {
        let (users, items) = spread_norm_instance(43, 500, 300);
        let k_max = 4;
        let mut stats = BuildStats::default();
        let (mut states, mut pending) =
            uniform_scan(&users, &items, k_max, 500 * k_max as u64, &mut stats).unwrap();
        pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));
        dynamic_scan(&mut states, &users, &items, &pending, 1.0, 0.01, 1.0, &mut stats);
        // A user is left uncertified exactly when an unscanned item's norm
        // product can still beat its worst buffered value.
        for (i, state) in states.iter().enumerate() {
            let f = state.frontier() as usize;
            if state.is_certified() {
                assert!(
                    f == items.count()
                        || cauchy_bound(users.norm(i), items.norm(f)) <= state.kth_value(k_max),
                    "user {i} certified while an unscanned item could still enter"
                );
            } else {
                assert!(f < items.count());
                assert!(
                    cauchy_bound(users.norm(i), items.norm(f)) > state.kth_value(k_max),
                    "user {i} should have been certified"
                );
            }
        }
    }

    fn full_prefix_scores(users: &PartitionedVectors, items: &PartitionedVectors, k_max: usize) -> Vec<u32> {
        // Exact score for every (item, k): brute-force top-k_max per user,
        // then rank-prefix counting.
        let m = items.count();
        let mut table = vec![0u32; m * k_max];
        for i in 0..users.count() {
            for (rank, (pos, _)) in oracle_topk(users.row(i), items, k_max).into_iter().enumerate() {
                table[pos as usize * k_max + rank] += 1;
            }
        }
        for row in table.chunks_exact_mut(k_max) {
            for k in 1..k_max {
                row[k] += row[k - 1];
            }
        }
        table
    }

    #[test]
    fn fully_certified_table_equals_exact_scores() {
        let (users, items) = spread_norm_instance(47, 80, 60);
        let k_max = 5;
        let mut stats = BuildStats::default();
        let (mut states, pending) =
            uniform_scan(&users, &items, k_max, 80 * 60, &mut stats).unwrap();
        assert!(pending.is_empty());
        let table = compute_upper_bounds(&mut states, &users, &items, k_max, &mut stats);
        let want = full_prefix_scores(&users, &items, k_max);
        assert_eq!(table.counts(), &want[..]);
    }

    #[test]
    fn table_is_sound_and_monotone_with_uncertified_users() {
        let (users, items) = spread_norm_instance(53, 300, 200);
        let k_max = 10;
        let mut stats = BuildStats::default();
        let (mut states, mut pending) =
            uniform_scan(&users, &items, k_max, 300 * k_max as u64, &mut stats).unwrap();
        pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));
        dynamic_scan(&mut states, &users, &items, &pending, 1.0, 0.0, 2.0, &mut stats);
        assert!(stats.uncertified_after_dynamic > 0);
        let table = compute_upper_bounds(&mut states, &users, &items, k_max, &mut stats);
        let exact = full_prefix_scores(&users, &items, k_max);
        for j in 0..items.count() {
            for k in 1..=k_max {
                assert!(
                    table.upper_score(j, k) >= exact[j * k_max + (k - 1)],
                    "item {j} k {k}"
                );
                if k < k_max {
                    assert!(table.upper_score(j, k) <= table.upper_score(j, k + 1));
                }
            }
        }
    }

    #[test]
    fn unseen_bound_dominates_unscanned_products() {
        let (users, items) = spread_norm_instance(59, 300, 200);
        let k_max = 10;
        let mut stats = BuildStats::default();
        let (mut states, mut pending) =
            uniform_scan(&users, &items, k_max, 300 * k_max as u64, &mut stats).unwrap();
        pending.sort_by(|a, b| a.value.cmp(&b.value).then(a.user.cmp(&b.user)));
        dynamic_scan(&mut states, &users, &items, &pending, 1.0, 0.0, 2.0, &mut stats);
        compute_upper_bounds(&mut states, &users, &items, k_max, &mut stats);
        let mut checked = 0usize;
        for (i, state) in states.iter().enumerate() {
            if !state.is_certified() {
                for j in state.frontier() as usize..items.count() {
                    assert!(dot(users.row(i), items.row(j)) <= state.unseen_bound());
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    fn worked_example() -> (VectorSet, VectorSet) {
        let users = VectorSet::new(Role::Users, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let items = VectorSet::new(
            Role::Items,
            2,
            vec![2.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.5, 0.5],
        )
        .unwrap();
        (users, items)
    }

    fn worked_config() -> BuildConfig {
        BuildConfig {
            k_max: 2,
            split_dim: 2,
            rotation: RotationMode::Identity,
            ..BuildConfig::default()
        }
    }

    #[test]
    fn worked_example_build() {
        let (users, items) = worked_example();
        let index = build_index(&users, &items, &worked_config()).unwrap();
        assert!(index.user_states().iter().all(|s| s.is_certified()));
        assert_eq!(index.item_ids(), &[0, 1, 2, 3]);
        let t = index.table();
        assert_eq!(
            (0..4).map(|j| t.upper_score(j, 2)).collect::<Vec<_>>(),
            vec![2, 2, 2, 0]
        );
        assert_eq!(
            (0..4).map(|j| t.upper_score(j, 1)).collect::<Vec<_>>(),
            vec![2, 1, 0, 0]
        );
        assert_eq!(index.build_stats().pending_after_uniform, 0);
    }

    #[test]
    fn build_is_deterministic() {
        let users = random_set(61, Role::Users, 50, 9);
        let items = random_set(62, Role::Items, 40, 9);
        let config = BuildConfig { k_max: 5, split_dim: 3, ..BuildConfig::default() };
        let a = build_index(&users, &items, &config).unwrap();
        let b = build_index(&users, &items, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn build_certified_sets_match_oracle_through_rotation() {
        let users = random_set(63, Role::Users, 120, 8);
        let items = random_set(64, Role::Items, 90, 8);
        let config = BuildConfig { k_max: 4, split_dim: 4, ..BuildConfig::default() };
        let index = build_index(&users, &items, &config).unwrap();
        // Oracle on the original vectors; compare membership sets mapped
        // back through the norm order.
        let order = sort_items_by_norm(&items);
        let sorted = PartitionedVectors::new(items.reorder(&order), 4).unwrap();
        for (i, state) in index.user_states().iter().enumerate() {
            if state.is_certified() {
                let mut want: Vec<u32> =
                    oracle_topk(users.row(i), &sorted, 4).into_iter().map(|e| e.0).collect();
                let mut got: Vec<u32> = state.buffer().entries().iter().map(|e| e.0).collect();
                want.sort_unstable();
                got.sort_unstable();
                assert_eq!(got, want, "user {i}");
            }
        }
    }

    #[test]
    fn build_rejects_bad_configs() {
        let (users, items) = worked_example();
        let mut config = worked_config();
        config.k_max = 9;
        assert!(matches!(
            build_index(&users, &items, &config),
            Err(Error::ItemSetSmallerThanKMax { m: 4, k_max: 9 })
        ));
        let mut config = worked_config();
        config.split_dim = 3;
        assert!(matches!(
            build_index(&users, &items, &config),
            Err(Error::InvalidSplit { split_dim: 3, dim: 2 })
        ));
        let empty = VectorSet::new(Role::Users, 2, vec![]).unwrap();
        assert!(build_index(&empty, &items, &worked_config()).is_err());
    }

    #[test]
    fn index_from_parts_validates() {
        let (users, items) = worked_example();
        let index = build_index(&users, &items, &worked_config()).unwrap();
        let rebuilt = Index::from_parts(
            index.config().clone(),
            index.rotation().clone(),
            index.item_ids().to_vec(),
            index.items().clone(),
            index.users().clone(),
            index.user_states().to_vec(),
            index.table().clone(),
        )
        .unwrap();
        assert_eq!(rebuilt.item_ids(), index.item_ids());
        let mut bad_ids = index.item_ids().to_vec();
        bad_ids[0] = bad_ids[1];
        assert!(Index::from_parts(
            index.config().clone(),
            index.rotation().clone(),
            bad_ids,
            index.items().clone(),
            index.users().clone(),
            index.user_states().to_vec(),
            index.table().clone(),
        )
        .is_err());
    }
}
