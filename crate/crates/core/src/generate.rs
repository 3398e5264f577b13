//! Random generators for test families and the `generate` subcommand.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::model::MeanMatrixFamily;
use crate::spectral::{construct_shared_family_multi, construct_shared_family_reversed_multi};

/// Matrix with i.i.d. uniform entries in `[lo, hi)`.
pub fn random_matrix<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(lo..hi))
}

pub fn random_positive_vector<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Random probability vector with entries bounded away from zero.
pub fn random_distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    let v = random_positive_vector(n, 0.2, 1.0, rng);
    let s = v.sum();
    v / s
}

/// Stochastic matrix with strictly positive entries.
pub fn random_stochastic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = random_matrix(n, 0.05, 1.0, rng);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// `laziness * I + (1 - laziness) * P`.
pub fn lazy(p: &DMatrix<f64>, laziness: f64) -> DMatrix<f64> {
    let n = p.nrows();
    DMatrix::identity(n, n) * laziness + p * (1.0 - laziness)
}

/// Metropolis-Hastings chain with target `pi` and proposal `q`; reversible
/// with respect to `pi`.
pub fn metropolis(pi: &DVector<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = pi.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let accept = (pi[j] * q[(j, i)] / (pi[i] * q[(i, j)])).min(1.0);
                p[(i, j)] = q[(i, j)] * accept;
                off += p[(i, j)];
            }
        }
        p[(i, i)] = 1.0 - off;
    }
    p
}

/// Time reversal `P*(i,j) = pi(j) P(j,i) / pi(i)`.
pub fn time_reversal(p: &DMatrix<f64>, pi: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| pi[j] * p[(j, i)] / pi[i])
}

/// Transition matrices, one per delay, all with stationary distribution `pi`.
/// Proposals are random, so the matrices generally do not commute.
/// Metropolis chains are reversible, which keeps `pi` exact up to rounding.
pub fn random_chains_with_stationary<R: Rng + ?Sized>(
    pi: &DVector<f64>,
    count: usize,
    laziness: f64,
    rng: &mut R,
) -> Vec<DMatrix<f64>> {
    (0..count)
        .map(|_| {
            let q = random_stochastic(pi.len(), rng);
            lazy(&metropolis(pi, &q), laziness)
        })
        .collect()
}

/// Random family sharing Perron-Frobenius eigenvectors (forward construction).
pub fn random_shared_family<R: Rng + ?Sized>(
    n: usize,
    rhos: &[(usize, f64)],
    laziness: f64,
    rng: &mut R,
) -> Result<MeanMatrixFamily> {
    let pi = random_distribution(n, rng);
    let h = random_positive_vector(n, 0.5, 2.0, rng);
    let ps = random_chains_with_stationary(&pi, rhos.len(), laziness, rng);
    construct_shared_family_multi(&ps, &h, rhos)
}

/// Random family sharing Perron-Frobenius eigenvectors (time-reversed construction).
pub fn random_shared_family_reversed<R: Rng + ?Sized>(
    n: usize,
    rhos: &[(usize, f64)],
    laziness: f64,
    rng: &mut R,
) -> Result<MeanMatrixFamily> {
    let pi = random_distribution(n, rng);
    let nu = random_positive_vector(n, 0.5, 2.0, rng);
    let ps = random_chains_with_stationary(&pi, rhos.len(), laziness, rng);
    construct_shared_family_reversed_multi(&ps, &nu, rhos)
}

/// Commuting family: each member is a polynomial with positive
/// coefficients in one irreducible matrix `a`, always including the linear term.
pub fn polynomial_family<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    delays: &[usize],
    degree: usize,
    rng: &mut R,
) -> Result<MeanMatrixFamily> {
    let n = a.nrows();
    let mut powers = vec![DMatrix::identity(n, n)];
    for k in 1..=degree.max(1) {
        powers.push(&powers[k - 1] * a);
    }
    let mats = delays
        .iter()
        .map(|_| {
            let mut m = &powers[1] * rng.random_range(0.1..1.0);
            for (k, pk) in powers.iter().enumerate() {
                if k != 1 && rng.random_bool(0.6) {
                    m += pk * rng.random_range(0.0..0.5);
                }
            }
            m
        })
        .collect();
    MeanMatrixFamily::new(delays, mats)
}

/// Irreducible nonnegative matrix with a sparse pattern: a random cycle
/// through all types plus extra positive entries with probability `density`.
pub fn random_irreducible<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> DMatrix<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        m[(order[k], order[(k + 1) % n])] = rng.random_range(0.2..1.0);
    }
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] == 0.0 && rng.random_bool(density) {
                m[(i, j)] = rng.random_range(0.0..1.0);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{shared_pf_check, stationary_distribution, DEFAULT_SHARING_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metropolis_preserves_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = random_distribution(4, &mut rng);
        let p = metropolis(&pi, &random_stochastic(4, &mut rng));
        let back = stationary_distribution(&p).unwrap();
        assert!((back - &pi).amax() < 1e-10);
        let r = time_reversal(&p, &pi);
        assert!((p - r).amax() < 1e-14, "metropolis chains are reversible");
    }

    #[test]
    fn random_shared_families_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let f = random_shared_family(3, &[(1, 0.4), (2, 0.9), (4, 0.2)], 0.2, &mut rng).unwrap();
            assert!(shared_pf_check(&f, DEFAULT_SHARING_TOL).unwrap().shared);
            let r = random_shared_family_reversed(3, &[(1, 0.4), (3, 0.9)], 0.2, &mut rng).unwrap();
            assert!(shared_pf_check(&r, DEFAULT_SHARING_TOL).unwrap().shared);
        }
    }

    #[test]
    fn random_irreducible_is_irreducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            assert!(crate::spectral::is_irreducible(&random_irreducible(n, 0.2, &mut rng)));
        }
    }
}
