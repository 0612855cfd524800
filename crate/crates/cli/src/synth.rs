//! Seeded synthetic embeddings with matrix-factorization structure: both
//! sides live near a shared low-rank subspace, users carry a bias toward the
//! leading factor, and items get a log-normal popularity scale. That yields
//! the skewed norm and score distributions the engine is built to exploit —
//! a few strong-norm items dominate most users' top lists.

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rkm_core::vectors::{Role, VectorSet};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub users: usize,
    pub items: usize,
    pub dim: usize,
    pub rank: usize,
    pub seed: u64,
}

/// Factor spread around the bias, for both sides.
const SPREAD: f64 = 0.7;
/// Log-normal sigma of the item popularity scale.
const POPULARITY: f64 = 0.6;
/// Isotropic ambient noise.
const NOISE: f64 = 0.01;

pub fn generate(cfg: &GenConfig) -> Result<(VectorSet, VectorSet)> {
    ensure!(cfg.users >= 1, "need at least one user");
    ensure!(cfg.items >= 1, "need at least one item");
    ensure!(cfg.dim >= 1, "dimension must be positive");
    ensure!(
        cfg.rank >= 1 && cfg.rank <= cfg.dim,
        "rank must be in 1..={} (got {})",
        cfg.dim,
        cfg.rank
    );
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let basis = orthonormal_basis(&mut rng, cfg.rank, cfg.dim);

    let mut users = Vec::with_capacity(cfg.users * cfg.dim);
    for _ in 0..cfg.users {
        let mut latent = gaussian_vec(&mut rng, cfg.rank, SPREAD);
        latent[0] += 1.0;
        push_embedded(&mut users, &mut rng, &latent, &basis, cfg.dim, 1.0);
    }

    let mut items = Vec::with_capacity(cfg.items * cfg.dim);
    for _ in 0..cfg.items {
        let mut latent = gaussian_vec(&mut rng, cfg.rank, SPREAD);
        let affinity: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        latent[0] = affinity;
        let scale = (POPULARITY * rng.sample::<f64, _>(StandardNormal)).exp();
        push_embedded(&mut items, &mut rng, &latent, &basis, cfg.dim, scale);
    }

    Ok((
        VectorSet::new(Role::Users, cfg.dim, users)?,
        VectorSet::new(Role::Items, cfg.dim, items)?,
    ))
}

fn gaussian_vec(rng: &mut ChaCha12Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn push_embedded(
    out: &mut Vec<f64>,
    rng: &mut ChaCha12Rng,
    latent: &[f64],
    basis: &[f64],
    dim: usize,
    scale: f64,
) {
    for c in 0..dim {
        let low_rank: f64 = latent
            .iter()
            .enumerate()
            .map(|(f, z)| z * basis[f * dim + c])
            .sum();
        let noise: f64 = rng.sample::<f64, _>(StandardNormal);
        out.push(scale * low_rank + NOISE * noise);
    }
}

/// `rank` orthonormal rows in `dim` dimensions, Gram–Schmidt over seeded
/// Gaussian draws (re-drawn in the measure-zero degenerate case).
fn orthonormal_basis(rng: &mut ChaCha12Rng, rank: usize, dim: usize) -> Vec<f64> {
    let mut basis = vec![0.0; rank * dim];
    let mut row = 0;
    while row < rank {
        let mut candidate = gaussian_vec(rng, dim, 1.0);
        for prev in 0..row {
            let proj: f64 =
                (0..dim).map(|c| candidate[c] * basis[prev * dim + c]).sum();
            for c in 0..dim {
                candidate[c] -= proj * basis[prev * dim + c];
            }
        }
        let norm = candidate.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        for c in 0..dim {
            basis[row * dim + c] = candidate[c] / norm;
        }
        row += 1;
    }
    basis
}
