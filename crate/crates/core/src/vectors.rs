//! Vector collections, norms, the descending-norm item order, and the
//! inner-product bound kernels shared by every other module.
//!
//! Everything downstream addresses items by their *norm-sorted position*
//! (largest norm first, ties by original input order); the permutation back
//! to original ids is kept alongside. All comparisons that rank items for a
//! user go through [`outranks`] so that preprocessing, queries, and the
//! brute-force oracle break ties identically.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Marks whether a [`VectorSet`] holds user vectors or item vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Users,
    Items,
}

/// A dense row-major collection of fixed-dimension f64 vectors with
/// precomputed Euclidean norms.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    role: Role,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl VectorSet {
    /// Builds a set from row-major data, computing norms. Rejects data whose
    /// length is not a multiple of `dim` and any non-finite coordinate.
    pub fn new(role: Role, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidConfig("data length not a multiple of dim"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norms = data
            .chunks_exact(dim)
            .map(|row| math::sqrt(dot(row, row)))
            .collect();
        Ok(Self { role, dim, data, norms })
    }

    /// Reassembles a set from already-consistent parts (deserialization).
    /// Shape and finiteness are validated; norms are trusted as stored.
    pub fn from_parts(role: Role, dim: usize, data: Vec<f64>, norms: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 || norms.len() != data.len() / dim {
            return Err(Error::InvalidConfig("inconsistent vector set parts"));
        }
        if data.iter().any(|x| !x.is_finite()) || norms.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { role, dim, data, norms })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn count(&self) -> usize {
        self.norms.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Returns a copy with rows gathered in `order` (row i of the result is
    /// row order[i] of self). Norms move with their rows.
    pub fn reorder(&self, order: &[u32]) -> VectorSet {
        debug_assert_eq!(order.len(), self.count());
        let mut data = Vec::with_capacity(self.data.len());
        let mut norms = Vec::with_capacity(self.norms.len());
        for &src in order {
            data.extend_from_slice(self.row(src as usize));
            norms.push(self.norms[src as usize]);
        }
        VectorSet { role: self.role, dim: self.dim, data, norms }
    }
}

/// A [`VectorSet`] split at `split_dim`: the leading coordinates of each
/// vector are kept densely as `heads`, the trailing part is summarized by its
/// norm. The bound [`partial_bound`] needs exactly these two pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedVectors {
    vectors: VectorSet,
    split_dim: usize,
    heads: Vec<f64>,
    tail_norms: Vec<f64>,
}

impl PartitionedVectors {
    pub fn new(vectors: VectorSet, split_dim: usize) -> Result<Self> {
        let dim = vectors.dim();
        if split_dim < 1 || split_dim > dim {
            return Err(Error::InvalidSplit { split_dim, dim });
        }
        let count = vectors.count();
        let mut heads = Vec::with_capacity(count * split_dim);
        let mut tail_norms = Vec::with_capacity(count);
        for i in 0..count {
            let row = vectors.row(i);
            heads.extend_from_slice(&row[..split_dim]);
            let tail = &row[split_dim..];
            tail_norms.push(math::sqrt(dot(tail, tail)));
        }
        Ok(Self { vectors, split_dim, heads, tail_norms })
    }

    /// Reassembles from stored parts (deserialization); shapes validated,
    /// values trusted.
    pub fn from_parts(
        vectors: VectorSet,
        split_dim: usize,
        heads: Vec<f64>,
        tail_norms: Vec<f64>,
    ) -> Result<Self> {
        let dim = vectors.dim();
        if split_dim < 1 || split_dim > dim {
            return Err(Error::InvalidSplit { split_dim, dim });
        }
        if heads.len() != vectors.count() * split_dim || tail_norms.len() != vectors.count() {
            return Err(Error::InvalidConfig("inconsistent partitioned parts"));
        }
        Ok(Self { vectors, split_dim, heads, tail_norms })
    }

    pub fn vectors(&self) -> &VectorSet {
        &self.vectors
    }

    pub fn split_dim(&self) -> usize {
        self.split_dim
    }

    pub fn count(&self) -> usize {
        self.vectors.count()
    }

    pub fn head(&self, i: usize) -> &[f64] {
        &self.heads[i * self.split_dim..(i + 1) * self.split_dim]
    }

    pub fn heads(&self) -> &[f64] {
        &self.heads
    }

    pub fn tail_norm(&self, i: usize) -> f64 {
        self.tail_norms[i]
    }

    pub fn tail_norms(&self) -> &[f64] {
        &self.tail_norms
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.vectors.norm(i)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }
}

/// Plain sequential dot product; the one summation order used everywhere.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Checked inner product of two equal-dimension vectors.
pub fn inner_product(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
    }
    Ok(dot(a, b))
}

/// Norm-product upper bound on the inner product of the underlying vectors.
#[inline]
pub fn cauchy_bound(u_norm: f64, p_norm: f64) -> f64 {
    debug_assert!(u_norm >= 0.0 && p_norm >= 0.0);
    u_norm * p_norm
}

/// Head product plus tail norm product: an upper bound on the full inner
/// product that costs only `split_dim` multiplies.
#[inline]
pub(crate) fn partial_bound_raw(
    u_head: &[f64],
    u_tail_norm: f64,
    p_head: &[f64],
    p_tail_norm: f64,
) -> f64 {
    dot(u_head, p_head) + u_tail_norm * p_tail_norm
}

/// Checked partial bound between vector `i` of `u` and vector `j` of `p`.
pub fn partial_bound(
    u: &PartitionedVectors,
    i: usize,
    p: &PartitionedVectors,
    j: usize,
) -> Result<f64> {
    if u.split_dim != p.split_dim {
        return Err(Error::SplitMismatch { left: u.split_dim, right: p.split_dim });
    }
    Ok(partial_bound_raw(u.head(i), u.tail_norm(i), p.head(j), p.tail_norm(j)))
}

/// Deterministic ranking of (inner product, norm-sorted position) pairs:
/// larger product outranks; equal products prefer the smaller position.
#[inline]
pub fn outranks(ip_a: f64, pos_a: u32, ip_b: f64, pos_b: u32) -> bool {
    ip_a > ip_b || (ip_a == ip_b && pos_a < pos_b)
}

/// Permutation placing items in non-increasing norm order, ties broken by
/// ascending original index. `result[rank] = original index`.
pub fn sort_items_by_norm(items: &VectorSet) -> Vec<u32> {
    let mut order: Vec<u32> = (0..items.count() as u32).collect();
    order.sort_by(|&a, &b| {
        items
            .norm(b as usize)
            .total_cmp(&items.norm(a as usize))
            .then(a.cmp(&b))
    });
    order
}
