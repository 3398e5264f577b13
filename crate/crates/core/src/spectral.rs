//! Perron-Frobenius machinery for single nonnegative matrices and for
//! families of mean matrices.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MeanMatrixFamily;

/// Residual tolerance used when callers do not ask for one.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-12;
/// Tolerance on eigenvector agreement across a family.
pub const DEFAULT_SHARING_TOL: f64 = 1e-8;

/// True iff the digraph of nonzero entries is strongly connected.
/// A 1x1 matrix is irreducible iff its entry is positive.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return false;
    }
    if n == 1 {
        return m[(0, 0)] > 0.0;
    }
    reaches_all(n, |i, j| m[(i, j)] > 0.0) && reaches_all(n, |i, j| m[(j, i)] > 0.0)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Perron-Frobenius eigenvalue and eigenvectors, normalized so that
/// `nu' 1 = 1` and `nu' h = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PFData {
    pub rho: f64,
    #[serde(serialize_with = "crate::config::ser_dvector")]
    pub h: DVector<f64>,
    #[serde(serialize_with = "crate::config::ser_dvector")]
    pub nu: DVector<f64>,
    /// `||M h - rho h||_inf`
    pub right_residual: f64,
    /// `||nu' M - rho nu'||_inf`
    pub left_residual: f64,
}

fn row_sum_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let sums: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

fn max_iters(n: usize, tol: f64) -> usize {
    (100.0 * n as f64 * (1.0 / tol).ln().max(1.0)).ceil() as usize
}

/// Positive eigenvector of `m` for its spectral radius, by power iteration
/// on a shifted copy `m / s + c I` so that periodic (irreducible but not
/// primitive) matrices converge too. Returns `(rho, vector)` with the
/// vector scaled to unit 1-norm.
fn power_vector(m: &DMatrix<f64>, tol: f64) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    let (lo, hi) = row_sum_bounds(m);
    if hi <= 0.0 {
        return Err(Error::InvalidArgument("matrix has no positive entry".into()));
    }
    let a = m / hi;
    // rho(a) lies in [lo / hi, 1]; shifting by roughly rho(a) makes the
    // iteration scale invariant and separates the spectral circle.
    let shift = 0.5 * (lo / hi + 1.0);
    let cap = max_iters(n, tol);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..cap {
        let ax = &a * &x;
        let lambda = ax.sum() / x.sum();
        let resid = (&ax - &x * lambda).amax() / x.amax();
        if resid <= 0.1 * tol {
            let x = polish(&a, x, lambda, resid);
            return Ok((lambda * hi, x));
        }
        let mut y = ax + &x * shift;
        let norm = y.sum();
        y /= norm;
        x = y;
    }
    Err(Error::NoConvergence { max_iters: cap })
}

/// One inverse-iteration step with a shift just above `lambda`, kept only
/// if it stays positive and lowers the residual. Takes the vector from the
/// power-iteration stopping tolerance down to rounding level.
fn polish(a: &DMatrix<f64>, x: DVector<f64>, lambda: f64, resid: f64) -> DVector<f64> {
    let n = a.nrows();
    let sigma = lambda * (1.0 + 1e-10);
    let shifted = a - DMatrix::identity(n, n) * sigma;
    let Some(y) = shifted.lu().solve(&x) else {
        return x;
    };
    let total = y.sum();
    if !total.is_finite() || total == 0.0 {
        return x;
    }
    let y = y / total;
    if y.iter().any(|v| !(*v > 0.0)) {
        return x;
    }
    let ay = a * &y;
    let mu = ay.sum() / y.sum();
    let r = (&ay - &y * mu).amax() / y.amax();
    if r < resid {
        y
    } else {
        x
    }
}

/// Spectral radius of a nonnegative irreducible matrix.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if m.nrows() == 1 {
        return Ok(m[(0, 0)]);
    }
    let (_, x) = power_vector(m, tol)?;
    let mx = m * &x;
    Ok(mx.sum() / x.sum())
}

/// Perron-Frobenius decomposition of a nonnegative irreducible matrix.
pub fn pf_decompose(m: &DMatrix<f64>, tol: f64) -> Result<PFData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
    }
    if m.nrows() != m.ncols() || m.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(
            "matrix must be square with finite nonnegative entries".into(),
        ));
    }
    if !is_irreducible(m) {
        return Err(Error::InvalidArgument("matrix is not irreducible".into()));
    }
    let (_, mut h) = power_vector(m, tol)?;
    let (_, mut nu) = power_vector(&m.transpose(), tol)?;
    nu /= nu.sum();
    let scale = nu.dot(&h);
    h /= scale;
    let mh = m * &h;
    let rho = nu.dot(&mh);
    let right_residual = (&mh - &h * rho).amax();
    let left_residual = (m.tr_mul(&nu) - &nu * rho).amax();
    Ok(PFData {
        rho,
        h,
        nu,
        right_residual,
        left_residual,
    })
}

/// `max_{i,j} h_i / h_j`.
pub fn weight_ratio(h: &DVector<f64>) -> f64 {
    h.max() / h.min()
}

/// Outcome of comparing the Perron-Frobenius eigenvectors of every member of a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedPFReport {
    pub shared: bool,
    #[serde(serialize_with = "crate::config::ser_opt_dvector")]
    pub h: Option<DVector<f64>>,
    #[serde(serialize_with = "crate::config::ser_opt_dvector")]
    pub nu: Option<DVector<f64>>,
    pub delays: Vec<usize>,
    pub per_delay_rho: Vec<f64>,
    pub max_deviation: f64,
    pub per_delay: Vec<PFData>,
}

pub fn shared_pf_check(family: &MeanMatrixFamily, tol: f64) -> Result<SharedPFReport> {
    let per_delay = family
        .matrices()
        .iter()
        .map(|m| pf_decompose(m, DEFAULT_RESIDUAL_TOL))
        .collect::<Result<Vec<_>>>()?;
    let first = &per_delay[0];
    let max_deviation = per_delay
        .iter()
        .map(|pf| (&pf.h - &first.h).amax().max((&pf.nu - &first.nu).amax()))
        .fold(0.0, f64::max);
    let shared = max_deviation <= tol;
    Ok(SharedPFReport {
        shared,
        h: shared.then(|| first.h.clone()),
        nu: shared.then(|| first.nu.clone()),
        delays: family.delays().to_vec(),
        per_delay_rho: per_delay.iter().map(|pf| pf.rho).collect(),
        max_deviation,
        per_delay,
    })
}

/// The family rescaled by its Perron-Frobenius eigenvalues, `rho_d^{-1} M_d`.
#[derive(Debug, Clone)]
pub struct NormalizedFamily {
    delays: Vec<usize>,
    rhos: Vec<f64>,
    normalized: Vec<DMatrix<f64>>,
}

impl NormalizedFamily {
    pub fn new(family: &MeanMatrixFamily) -> Result<Self> {
        let rhos = family
            .matrices()
            .iter()
            .map(|m| spectral_radius(m, DEFAULT_RESIDUAL_TOL))
            .collect::<Result<Vec<_>>>()?;
        let normalized = family.matrices().iter().zip(&rhos).map(|(m, r)| m / *r).collect();
        Ok(Self {
            delays: family.delays().to_vec(),
            rhos,
            normalized,
        })
    }

    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn get(&self, d: usize) -> Option<&DMatrix<f64>> {
        self.delays.binary_search(&d).ok().map(|k| &self.normalized[k])
    }

    /// `prod_{l=1..r} rho_{d_l}^{-1} M_{d_l}`, multiplied left to right.
    pub fn word_product(&self, word: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.normalized[0].nrows();
        let mut acc = DMatrix::identity(n, n);
        for &d in word {
            let m = self
                .get(d)
                .ok_or_else(|| Error::InvalidArgument(format!("delay {d} not in family")))?;
            acc *= m;
        }
        Ok(acc)
    }
}

pub fn normalized_word_product(family: &MeanMatrixFamily, word: &[usize]) -> Result<DMatrix<f64>> {
    NormalizedFamily::new(family)?.word_product(word)
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(
            "transition matrix must be square and nonnegative".into(),
        ));
    }
    for (row, r) in p.row_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::NotStochastic { row, sum });
        }
    }
    if !is_irreducible(p) {
        return Err(Error::InvalidArgument("transition matrix is not irreducible".into()));
    }
    Ok(())
}

/// Stationary distribution of an irreducible stochastic matrix.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_stochastic(p)?;
    let pf = pf_decompose(p, DEFAULT_RESIDUAL_TOL)?;
    Ok(pf.nu)
}

fn check_positive(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n || v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be a positive vector of length {n}"
        )));
    }
    Ok(())
}

fn check_common_stationary(ps: &[DMatrix<f64>]) -> Result<()> {
    let pis = ps.iter().map(stationary_distribution).collect::<Result<Vec<_>>>()?;
    for pi in &pis[1..] {
        let dev = (pi - &pis[0]).amax();
        if dev > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "transition matrices have different stationary distributions (deviation {dev})"
            )));
        }
    }
    Ok(())
}

/// `M_d(i,j) = rho_d P(i,j) h(i) / h(j)`. Every member has right
/// eigenvector `h` and left eigenvector proportional to `pi / h`.
pub fn construct_shared_family(p: &DMatrix<f64>, h: &DVector<f64>, rhos: &[(usize, f64)]) -> Result<MeanMatrixFamily> {
    let ps = vec![p.clone(); rhos.len()];
    construct_shared_family_multi(&ps, h, rhos)
}

/// Like [`construct_shared_family`] with one transition matrix per delay.
/// The matrices must share a stationary distribution for the eigenvectors to coincide.
pub fn construct_shared_family_multi(
    ps: &[DMatrix<f64>],
    h: &DVector<f64>,
    rhos: &[(usize, f64)],
) -> Result<MeanMatrixFamily> {
    build_family(ps, rhos, |p, rho| {
        check_positive(h, p.nrows(), "h")?;
        Ok(DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
            rho * p[(i, j)] * h[i] / h[j]
        }))
    })
}

/// Time-reversed construction `M_d(i,j) = rho_d (nu(j) / nu(i)) P(j,i)`;
/// every member has left eigenvector proportional to `nu`.
pub fn construct_shared_family_reversed(
    p: &DMatrix<f64>,
    nu: &DVector<f64>,
    rhos: &[(usize, f64)],
) -> Result<MeanMatrixFamily> {
    let ps = vec![p.clone(); rhos.len()];
    construct_shared_family_reversed_multi(&ps, nu, rhos)
}

pub fn construct_shared_family_reversed_multi(
    ps: &[DMatrix<f64>],
    nu: &DVector<f64>,
    rhos: &[(usize, f64)],
) -> Result<MeanMatrixFamily> {
    build_family(ps, rhos, |p, rho| {
        check_positive(nu, p.nrows(), "nu")?;
        Ok(DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
            rho * nu[j] / nu[i] * p[(j, i)]
        }))
    })
}

fn build_family(
    ps: &[DMatrix<f64>],
    rhos: &[(usize, f64)],
    make: impl Fn(&DMatrix<f64>, f64) -> Result<DMatrix<f64>>,
) -> Result<MeanMatrixFamily> {
    if ps.len() != rhos.len() || rhos.is_empty() {
        return Err(Error::InvalidArgument(
            "one transition matrix and one eigenvalue per delay".into(),
        ));
    }
    for p in ps {
        check_stochastic(p)?;
    }
    if ps.len() > 1 {
        check_common_stationary(ps)?;
    }
    let mut delays = Vec::with_capacity(rhos.len());
    let mut mats = Vec::with_capacity(rhos.len());
    for (p, &(d, rho)) in ps.iter().zip(rhos) {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("rho_{d} = {rho} must be > 0")));
        }
        delays.push(d);
        mats.push(make(p, rho)?);
    }
    MeanMatrixFamily::new(&delays, mats)
}

/// True iff `||M_d M_e - M_e M_d||_inf <= tol` for every pair.
pub fn commute_check(family: &MeanMatrixFamily, tol: f64) -> bool {
    let ms = family.matrices();
    for (a, ma) in ms.iter().enumerate() {
        for mb in &ms[a + 1..] {
            if inf_norm(&(ma * mb - mb * ma)) > tol {
                return false;
            }
        }
    }
    true
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn fam(delays: &[usize], ms: Vec<DMatrix<f64>>) -> MeanMatrixFamily {
        MeanMatrixFamily::new(delays, ms).unwrap()
    }

    #[test]
    fn irreducibility_examples() {
        assert!(is_irreducible(&dmatrix![1.0, 1.0; 1.0, 1.0]));
        assert!(!is_irreducible(&dmatrix![1.0, 1.0; 0.0, 1.0]));
        assert!(is_irreducible(&dmatrix![0.0, 2.0; 2.0, 0.0]));
        assert!(!is_irreducible(&dmatrix![0.0]));
        assert!(is_irreducible(&dmatrix![0.3]));
        // 3-cycle
        assert!(is_irreducible(&dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 1.0, 0.0, 0.0]));
    }

    #[test]
    fn pf_symmetric_and_periodic() {
        for m in [dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![0.0, 2.0; 2.0, 0.0]] {
            let pf = pf_decompose(&m, 1e-12).unwrap();
            assert!((pf.rho - 2.0).abs() < 1e-12);
            assert!((&pf.nu - dvector![0.5, 0.5]).amax() < 1e-12);
            assert!((&pf.h - dvector![1.0, 1.0]).amax() < 1e-12);
            assert!(pf.right_residual <= 1e-12 && pf.left_residual <= 1e-12);
        }
    }

    #[test]
    fn pf_periodic_three_cycle() {
        let m = dmatrix![0.0, 2.0, 0.0; 0.0, 0.0, 3.0; 0.5, 0.0, 0.0];
        let pf = pf_decompose(&m, 1e-12).unwrap();
        assert!((pf.rho - 3.0f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn pf_normalizations() {
        let m = dmatrix![0.2, 0.7, 0.1; 0.4, 0.1, 0.9; 0.3, 0.3, 0.3];
        let pf = pf_decompose(&m, 1e-12).unwrap();
        assert!((pf.nu.sum() - 1.0).abs() < 1e-12);
        assert!((pf.nu.dot(&pf.h) - 1.0).abs() < 1e-12);
        assert!(pf.h.iter().all(|x| *x > 0.0) && pf.nu.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn rejects_reducible_and_bad_tolerance() {
        assert!(pf_decompose(&dmatrix![1.0, 1.0; 0.0, 1.0], 1e-12).is_err());
        assert!(pf_decompose(&dmatrix![1.0, 1.0; 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn weight_ratio_examples() {
        assert_eq!(weight_ratio(&dvector![1.0, 1.0, 1.0]), 1.0);
        assert_eq!(weight_ratio(&dvector![2.0, 1.0]), 2.0);
        assert_eq!(weight_ratio(&dvector![3.0, 1.0, 2.0]), 3.0);
    }

    #[test]
    fn sharing_examples() {
        let m = dmatrix![0.2, 0.7, 0.1; 0.4, 0.1, 0.9; 0.3, 0.3, 0.3];
        let rho_m = pf_decompose(&m, 1e-12).unwrap().rho;
        let scaled = fam(&[1, 3], vec![&m * 0.5, &m * 2.0]);
        let report = shared_pf_check(&scaled, DEFAULT_SHARING_TOL).unwrap();
        assert!(report.shared);
        assert!((report.per_delay_rho[0] - 0.5 * rho_m).abs() < 1e-12);
        assert!((report.per_delay_rho[1] - 2.0 * rho_m).abs() < 1e-12);

        let powers = fam(&[1, 2], vec![m.clone(), &m * &m]);
        assert!(shared_pf_check(&powers, DEFAULT_SHARING_TOL).unwrap().shared);
        assert!(commute_check(&powers, 1e-12));

        let distinct = fam(
            &[1, 2],
            vec![dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![2.0, 1.0; 1.0, 1.0]],
        );
        let report = shared_pf_check(&distinct, DEFAULT_SHARING_TOL).unwrap();
        assert!(!report.shared);
        assert!(report.h.is_none() && report.nu.is_none());
        assert!(!commute_check(&distinct, 1e-12));
    }

    #[test]
    fn word_product_edge_cases() {
        let m = dmatrix![1.0, 2.0; 3.0, 1.0];
        let f = fam(&[1, 2], vec![m.clone(), &m * 3.0]);
        let nf = NormalizedFamily::new(&f).unwrap();
        assert_eq!(nf.word_product(&[]).unwrap(), DMatrix::identity(2, 2));
        assert!(nf.word_product(&[5]).is_err());

        let single = fam(&[1, 2], vec![dmatrix![0.7], dmatrix![4.0]]);
        let p = normalized_word_product(&single, &[1, 2, 2, 1, 1]).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constructor_examples() {
        let p = dmatrix![0.5, 0.5; 0.5, 0.5];
        let h = dvector![2.0, 1.0];
        let f = construct_shared_family(&p, &h, &[(1, 3.0)]).unwrap();
        let m = f.get(1).unwrap();
        assert_eq!(m, &dmatrix![1.5, 3.0; 0.75, 1.5]);
        assert_eq!(m * &h, dvector![6.0, 3.0]);
        let nu = dvector![1.0 / 3.0, 2.0 / 3.0];
        assert!((m.tr_mul(&nu) - &nu * 3.0).amax() < 1e-15);

        let ones = dvector![1.0, 1.0, 1.0];
        let q = dmatrix![0.2, 0.3, 0.5; 0.1, 0.1, 0.8; 0.6, 0.2, 0.2];
        let f = construct_shared_family(&q, &ones, &[(1, 1.0), (2, 1.0)]).unwrap();
        assert_eq!(f.get(1).unwrap(), &q);
        assert_eq!(f.get(2).unwrap(), &q);

        let r = construct_shared_family_reversed(&p, &nu, &[(1, 1.0)]).unwrap();
        let m = r.get(1).unwrap();
        assert!((m.tr_mul(&nu) - &nu).amax() < 1e-15);

        let sym = dmatrix![0.3, 0.7; 0.7, 0.3];
        let uniform = dvector![0.5, 0.5];
        let r = construct_shared_family_reversed(&sym, &uniform, &[(2, 2.5)]).unwrap();
        assert_eq!(r.get(2).unwrap(), &(sym.transpose() * 2.5));
    }

    #[test]
    fn constructor_rejects_non_stochastic() {
        let p = dmatrix![0.5, 0.6; 0.5, 0.5];
        let err = construct_shared_family(&p, &dvector![1.0, 1.0], &[(1, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
    }

    #[test]
    fn multi_constructor_requires_common_stationary_law() {
        let p1 = dmatrix![0.5, 0.5; 0.5, 0.5];
        let p2 = dmatrix![0.9, 0.1; 0.5, 0.5];
        let h = dvector![1.0, 2.0];
        assert!(construct_shared_family_multi(&[p1, p2], &h, &[(1, 1.0), (2, 1.0)]).is_err());
    }
}
