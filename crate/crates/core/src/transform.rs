//! Orthogonal change of basis that concentrates item energy in the leading
//! coordinates, so a short head of each vector carries most of the product.
//!
//! The basis is fit on the item set only: eigenvectors of the Gram matrix
//! PᵀP, ordered by descending eigenvalue, become the rows of the rotation.
//! Applying it to items and users preserves all inner products, which keeps
//! head-plus-tail bounds valid while making them much tighter at small
//! split dimensions.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::vectors::VectorSet;
use crate::{Error, Result};

/// A d×d orthogonal matrix stored row-major; row r is the r-th output
/// coordinate's direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    dim: usize,
    matrix: Vec<f64>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Rotation {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Rotation { dim, matrix }
    }

    /// Rebuilds a rotation from stored coefficients (deserialization).
    pub fn from_parts(dim: usize, matrix: Vec<f64>) -> Result<Rotation> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::InvalidConfig("rotation shape mismatch"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Rotation { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.matrix[r * self.dim..(r + 1) * self.dim]
    }
}

/// Fits the energy-concentrating basis for `items` by a cyclic Jacobi
/// eigendecomposition of the d×d Gram matrix. Deterministic for identical
/// input. An all-zero item set yields the identity.
pub fn fit_rotation(items: &VectorSet) -> Rotation {
    let d = items.dim();
    let mut gram = vec![0.0f64; d * d];
    for i in 0..items.count() {
        let row = items.row(i);
        for r in 0..d {
            let xr = row[r];
            if xr == 0.0 {
                continue;
            }
            for c in r..d {
                gram[r * d + c] += xr * row[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            gram[r * d + c] = gram[c * d + r];
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(gram, d);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));

    let mut matrix = Vec::with_capacity(d * d);
    for &col in &order {
        let start = matrix.len();
        for r in 0..d {
            matrix.push(eigvecs[r * d + col]);
        }
        let row = &mut matrix[start..];
        if let Some(&first) = row.iter().find(|&&x| x != 0.0) {
            if first < 0.0 {
                for x in row.iter_mut() {
                    *x = -*x;
                }
            }
        }
    }
    Rotation { dim: d, matrix }
}

/// Applies the rotation to every vector of `set`. The stored norms are
/// carried over unchanged from the input — the map is an isometry, and
/// reusing the originals keeps norm-based bounds bit-identical to the
/// pre-rotation ordering.
pub fn apply_rotation(rotation: &Rotation, set: &VectorSet) -> Result<VectorSet> {
    let d = set.dim();
    if rotation.dim != d {
        return Err(Error::DimensionMismatch { left: rotation.dim, right: d });
    }
    let mut data = Vec::with_capacity(set.count() * d);
    for i in 0..set.count() {
        let row = set.row(i);
        for r in 0..d {
            data.push(crate::vectors::inner_product(rotation.row(r), row)?);
        }
    }
    VectorSet::from_parts(set.role(), d, data, set.norms().to_vec())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvector matrix with eigenvector j in column j).
fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0f64; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    if d < 2 {
        return (a, v);
    }
    let scale: f64 = (0..d).map(|i| math::abs(a[i * d + i])).sum::<f64>().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += math::abs(a[p * d + q]);
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..d - 1 {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if math::abs(theta) > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (math::abs(theta) + math::hypot(theta, 1.0))
                };
                let c = 1.0 / math::hypot(t, 1.0);
                let s = t * c;

                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * d + p];
                    let arq = a[r * d + q];
                    let new_p = c * arp - s * arq;
                    let new_q = s * arp + c * arq;
                    a[r * d + p] = new_p;
                    a[p * d + r] = new_p;
                    a[r * d + q] = new_q;
                    a[q * d + r] = new_q;
                }
                for r in 0..d {
                    let vrp = v[r * d + p];
                    let vrq = v[r * d + q];
                    v[r * d + p] = c * vrp - s * vrq;
                    v[r * d + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let eigvals = (0..d).map(|i| a[i * d + i]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::{inner_product, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_items(seed: u64, count: usize, dim: usize) -> VectorSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..count * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        VectorSet::new(Role::Items, dim, data).unwrap()
    }

    fn gram_of(set: &VectorSet) -> Vec<f64> {
        let d = set.dim();
        let mut g = vec![0.0; d * d];
        for i in 0..set.count() {
            let row = set.row(i);
            for r in 0..d {
                for c in 0..d {
                    g[r * d + c] += row[r] * row[c];
                }
            }
        }
        g
    }

    #[test]
    fn identity_keeps_data() {
        let set = random_items(1, 10, 4);
        let rotated = apply_rotation(&Rotation::identity(4), &set).unwrap();
        for i in 0..set.count() {
            for c in 0..4 {
                assert!((rotated.row(i)[c] - set.row(i)[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fitted_rotation_is_orthogonal() {
        let rot = fit_rotation(&random_items(2, 60, 8));
        for r in 0..8 {
            for c in 0..8 {
                let want = if r == c { 1.0 } else { 0.0 };
                let got = inner_product(rot.row(r), rot.row(c)).unwrap();
                assert!((got - want).abs() < 1e-8, "R·Rᵀ[{r}][{c}] = {got}");
            }
        }
    }

    #[test]
    fn axis_aligned_items_fit_near_identity() {
        // Coordinates already ordered by variance: the fitted basis should be
        // the identity up to sign, and the sign rule resolves to identity.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut data = Vec::new();
        for _ in 0..4000 {
            for c in 0..4 {
                let scale = [8.0, 4.0, 2.0, 1.0][c];
                data.push(scale * rng.random_range(-1.0f64..1.0));
            }
        }
        let rot = fit_rotation(&VectorSet::new(Role::Items, 4, data).unwrap());
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((rot.matrix()[r * 4 + c] - want).abs() < 0.05);
            }
        }
    }

    #[test]
    fn rank_one_items_collapse_to_first_coordinate() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let mut data = Vec::new();
        for _ in 0..50 {
            let t: f64 = rng.random_range(-3.0..3.0);
            data.push(t);
            data.push(t);
        }
        let set = VectorSet::new(Role::Items, 2, data).unwrap();
        let rotated = apply_rotation(&fit_rotation(&set), &set).unwrap();
        for i in 0..rotated.count() {
            let row = rotated.row(i);
            assert!((row[0].abs() - set.norm(i)).abs() <= 1e-9 * set.norm(i).max(1.0));
            assert!(row[1].abs() <= 1e-9 * set.norm(i).max(1.0));
        }
    }

    #[test]
    fn rotation_concentrates_energy() {
        let set = random_items(3, 80, 6);
        let rot = fit_rotation(&set);
        let rotated = apply_rotation(&rot, &set).unwrap();
        let g = gram_of(&rotated);
        let trace: f64 = (0..6).map(|i| g[i * 6 + i]).sum();
        for i in 1..6 {
            assert!(g[(i - 1) * 6 + (i - 1)] >= g[i * 6 + i] - 1e-7 * trace);
        }
        for r in 0..6 {
            for c in 0..6 {
                if r != c {
                    assert!(g[r * 6 + c].abs() <= 1e-7 * trace);
                }
            }
        }
        let original_trace: f64 = {
            let g0 = gram_of(&set);
            (0..6).map(|i| g0[i * 6 + i]).sum()
        };
        assert!((trace - original_trace).abs() <= 1e-9 * original_trace);
    }

    #[test]
    fn rows_are_eigenvectors_in_decreasing_order() {
        let set = random_items(4, 120, 5);
        let g = gram_of(&set);
        let rot = fit_rotation(&set);
        let trace: f64 = (0..5).map(|i| g[i * 5 + i]).sum();
        let mut previous = f64::INFINITY;
        for r in 0..5 {
            let row = rot.row(r);
            let image: Vec<f64> = (0..5)
                .map(|i| (0..5).map(|c| g[i * 5 + c] * row[c]).sum())
                .collect();
            let value = inner_product(row, &image).unwrap();
            let residual: f64 = (0..5)
                .map(|i| (image[i] - value * row[i]) * (image[i] - value * row[i]))
                .sum::<f64>();
            assert!(crate::math::sqrt(residual) <= 1e-9 * trace, "row {r} residual");
            assert!(value <= previous + 1e-9 * trace, "row {r} out of order");
            previous = value;
        }
    }

    #[test]
    fn rotation_preserves_inner_products() {
        let users = random_items(5, 30, 7);
        let items = random_items(6, 20, 7);
        let rot = fit_rotation(&items);
        let ru = apply_rotation(&rot, &users).unwrap();
        let rp = apply_rotation(&rot, &items).unwrap();
        for i in 0..users.count() {
            for j in 0..items.count() {
                let before = inner_product(users.row(i), items.row(j)).unwrap();
                let after = inner_product(ru.row(i), rp.row(j)).unwrap();
                assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
            }
        }
    }

    #[test]
    fn apply_carries_original_norms() {
        let set = random_items(7, 25, 6);
        let rotated = apply_rotation(&fit_rotation(&set), &set).unwrap();
        for i in 0..set.count() {
            assert_eq!(rotated.norm(i), set.norm(i));
            let recomputed = crate::math::sqrt(inner_product(rotated.row(i), rotated.row(i)).unwrap());
            assert!((recomputed - set.norm(i)).abs() <= 1e-9 * set.norm(i).max(1.0));
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let set = random_items(8, 40, 9);
        assert_eq!(fit_rotation(&set), fit_rotation(&set));
    }

    #[test]
    fn zero_items_fit_to_identity() {
        let set = VectorSet::new(Role::Items, 3, vec![0.0; 12]).unwrap();
        assert_eq!(fit_rotation(&set), Rotation::identity(3));
    }

    #[test]
    fn rows_lead_with_nonnegative_entry() {
        let rot = fit_rotation(&random_items(9, 70, 10));
        for r in 0..10 {
            let first = rot.row(r).iter().find(|&&x| x != 0.0).copied().unwrap();
            assert!(first >= 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let set = random_items(10, 5, 4);
        assert!(apply_rotation(&Rotation::identity(3), &set).is_err());
    }
}
