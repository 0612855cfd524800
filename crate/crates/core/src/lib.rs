//! Exact top-N "potentially popular item" search over user/item embeddings.
//!
//! Given n user vectors and m item vectors, the popularity of an item p at
//! depth k is the number of users whose top-k list (by inner product)
//! contains p. This crate finds the N items with the largest such counts,
//! exactly, without scoring every item:
//!
//! * [`preprocess::build_index`] runs a budgeted, norm-ordered scan per user
//!   that leaves each user either *certified* (its top-k_max list is proven
//!   complete) or carrying a sound upper bound on everything it has not seen,
//!   and assembles an m × k_max table of per-item score upper bounds.
//! * [`query::top_n_query`] walks items in upper-bound order, finalizes exact
//!   scores only while an item could still enter the top N, and resolves
//!   individual users on demand (each user's scan position only ever moves
//!   forward, across queries).
//! * [`baseline`] holds the brute-force scorer used as oracle and benchmark.
//!
//! The crate is `no_std` (with `alloc`); file formats, serialization, and the
//! CLI live in the companion `rkm` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
mod error;
mod math;
pub mod preprocess;
pub mod query;
pub mod transform;
pub mod vectors;

pub use error::Error;

pub type Result<T> = core::result::Result<T, Error>;
