//! Malthusian parameter, path-step distribution and the companion encoding
//! of the delayed process as an ordinary multi-type branching process.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MeanMatrixFamily, ModelSpec};
use crate::recursion::evolve_offspring_means;
use crate::spectral::{pf_decompose, spectral_radius, PFData, DEFAULT_RESIDUAL_TOL, DEFAULT_SHARING_TOL};

/// Band around zero inside which the Malthusian parameter counts as critical.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-9;

const RHO_FLOOR: f64 = 1e-9;
const RHO_CEIL: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalthusianSolution {
    pub rho_hat: f64,
    pub theta: f64,
    pub delays: Vec<usize>,
    pub per_delay_rho: Vec<f64>,
    /// `beta_d = rho_d exp(-theta d)`
    pub beta: Vec<f64>,
    /// `sum_d d beta_d`
    pub mu_beta: f64,
    pub regime: Regime,
    /// Whether the family shares Perron-Frobenius eigenvectors.
    pub shared: bool,
    /// `|rho(sum_d rho_hat^{-d} M_d) - 1|`
    pub eigen_residual: f64,
    /// `|rho_hat - rho(M~)|`
    pub companion_residual: f64,
    pub warnings: Vec<String>,
}

impl MalthusianSolution {
    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }
}

/// `sum_d rho^{-d} M_d`.
pub fn discounted_mean_matrix(family: &MeanMatrixFamily, rho: f64) -> DMatrix<f64> {
    let n = family.n_types();
    let mut acc = DMatrix::zeros(n, n);
    for (d, m) in family.iter() {
        acc += m * rho.powi(-(d as i32));
    }
    acc
}

/// Solves `g(x) = 1` for a strictly decreasing `g` by bisection on `log x`.
fn bisect_decreasing(lo: f64, hi: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if g(mid.exp())? > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-16 * a.abs().max(b.abs()).max(1.0) {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

fn scalar_root(weights: &[(usize, f64)]) -> Result<f64> {
    let g = |rho: f64| -> Result<f64> { Ok(weights.iter().map(|&(d, w)| w * rho.powi(-(d as i32))).sum()) };
    if g(RHO_FLOOR)? < 1.0 || g(RHO_CEIL)? > 1.0 {
        return Err(Error::BracketFailure);
    }
    bisect_decreasing(RHO_FLOOR, RHO_CEIL, g)
}

pub fn solve_malthusian(family: &MeanMatrixFamily, tol: f64) -> Result<MalthusianSolution> {
    solve_malthusian_with(family, tol, DEFAULT_CRITICAL_TOL)
}

/// Finds the unique `rho_hat > 0` with `rho(sum_d rho_hat^{-d} M_d) = 1`.
///
/// The bracket comes from row-sum bounds: the spectral radius of the
/// discounted matrix lies between its minimum and maximum row sums, each
/// of which is bounded by a scalar equation in `rho`.
pub fn solve_malthusian_with(family: &MeanMatrixFamily, tol: f64, critical_tol: f64) -> Result<MalthusianSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
    }
    let pf_tol = tol.min(DEFAULT_RESIDUAL_TOL);
    let row_bound = |pick: fn(f64, f64) -> f64, init: f64| -> Vec<(usize, f64)> {
        family
            .iter()
            .map(|(d, m)| (d, m.row_iter().map(|r| r.sum()).fold(init, pick)))
            .collect()
    };
    let lo = scalar_root(&row_bound(f64::min, f64::INFINITY))?;
    let hi = scalar_root(&row_bound(f64::max, 0.0))?;
    let radius = |rho: f64| spectral_radius(&discounted_mean_matrix(family, rho), pf_tol);
    let rho_hat = if hi / lo - 1.0 <= 1e-15 {
        // equal row-sum bounds pin the root exactly (always the case for one type)
        lo
    } else {
        bisect_decreasing(lo * (1.0 - 1e-12), hi * (1.0 + 1e-12), radius)?
    };
    let theta = rho_hat.ln();
    let eigen_residual = (radius(rho_hat)? - 1.0).abs();

    let pfs = family
        .matrices()
        .iter()
        .map(|m| pf_decompose(m, pf_tol))
        .collect::<Result<Vec<_>>>()?;
    let per_delay_rho: Vec<f64> = pfs.iter().map(|pf| pf.rho).collect();
    let deviation = pfs
        .iter()
        .map(|pf| (&pf.h - &pfs[0].h).amax().max((&pf.nu - &pfs[0].nu).amax()))
        .fold(0.0, f64::max);
    let shared = deviation <= DEFAULT_SHARING_TOL;

    let delays = family.delays().to_vec();
    let beta: Vec<f64> = delays
        .iter()
        .zip(&per_delay_rho)
        .map(|(&d, &r)| r * (-theta * d as f64).exp())
        .collect();
    let mu_beta = delays.iter().zip(&beta).map(|(&d, b)| d as f64 * b).sum();

    let rho_sum: f64 = per_delay_rho.iter().sum();
    let regime = if shared {
        if (rho_sum - 1.0).abs() <= critical_tol {
            Regime::Critical
        } else if rho_sum > 1.0 {
            Regime::Supercritical
        } else {
            Regime::Subcritical
        }
    } else if theta.abs() <= critical_tol {
        Regime::Critical
    } else if theta > 0.0 {
        Regime::Supercritical
    } else {
        Regime::Subcritical
    };

    let mut warnings = Vec::new();
    let beta_sum: f64 = beta.iter().sum();
    if (beta_sum - 1.0).abs() > 1e-8 {
        warnings.push(format!("beta is not a probability vector (sum {beta_sum})"));
    }
    if family.delay_family().gcd() != 1 {
        warnings.push(format!("gcd of delays is {}", family.delay_family().gcd()));
    }

    let companion = build_companion(family)?;
    let companion_residual = (rho_hat - companion.pf.rho).abs();

    Ok(MalthusianSolution {
        rho_hat,
        theta,
        delays,
        per_delay_rho,
        beta,
        mu_beta,
        regime,
        shared,
        eigen_residual,
        companion_residual,
        warnings,
    })
}

/// The delayed process re-indexed on `[D] x I` as an ordinary multi-type process.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSystem {
    pub matrix: DMatrix<f64>,
    pub pf: PFData,
    pub n_types: usize,
    pub max_delay: usize,
}

impl CompanionSystem {
    /// Row/column of type `(e, i)`, `e` in `1..=D`.
    pub fn index(&self, e: usize, i: usize) -> usize {
        (e - 1) * self.n_types + i
    }
}

/// `M~((e,i),(d,j)) = 1(i=j) 1(e=d-1)` for `d > 1`, `M~((e,i),(1,j)) = M_e(i,j)`
/// for `e` in the delay set, zero otherwise.
pub fn build_companion(family: &MeanMatrixFamily) -> Result<CompanionSystem> {
    let n = family.n_types();
    let big_d = family.max_delay();
    let size = big_d * n;
    let idx = |e: usize, i: usize| (e - 1) * n + i;
    let mut m = DMatrix::zeros(size, size);
    for d in 2..=big_d {
        for j in 0..n {
            m[(idx(d - 1, j), idx(d, j))] = 1.0;
        }
    }
    for (e, me) in family.iter() {
        for i in 0..n {
            for j in 0..n {
                m[(idx(e, i), idx(1, j))] = me[(i, j)];
            }
        }
    }
    let pf = pf_decompose(&m, DEFAULT_RESIDUAL_TOL)?;
    Ok(CompanionSystem {
        matrix: m,
        pf,
        n_types: n,
        max_delay: big_d,
    })
}

/// Limit of `E[X(s)]` in the critical regime, read off the companion
/// Perron-Frobenius pair: `(E[Z^(0)]' h~) nu~` restricted to the `(D, .)` block,
/// with `Z^_{d,j}(0) = E[X_j(D - d)]`.
pub fn critical_limit(model: &ModelSpec, family: &MeanMatrixFamily) -> Result<DVector<f64>> {
    critical_limit_with(model, family, DEFAULT_CRITICAL_TOL)
}

pub fn critical_limit_with(model: &ModelSpec, family: &MeanMatrixFamily, critical_tol: f64) -> Result<DVector<f64>> {
    let sol = solve_malthusian_with(family, DEFAULT_RESIDUAL_TOL, critical_tol)?;
    if sol.theta.abs() > critical_tol {
        return Err(Error::NotCritical { theta: sol.theta });
    }
    let comp = build_companion(family)?;
    let n = family.n_types();
    let big_d = family.max_delay();
    let ex = evolve_offspring_means(&model.initial_vector(), family, big_d - 1)?;
    let mut z0 = DVector::zeros(big_d * n);
    for d in 1..=big_d {
        for j in 0..n {
            z0[comp.index(d, j)] = ex[big_d - d][j];
        }
    }
    let scale = z0.dot(&comp.pf.h);
    Ok(DVector::from_fn(n, |j, _| scale * comp.pf.nu[comp.index(big_d, j)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Initial, LifetimeLaw};
    use nalgebra::dmatrix;

    fn single(delays: &[usize], values: &[f64]) -> MeanMatrixFamily {
        MeanMatrixFamily::new(delays, values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect()).unwrap()
    }

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn one_delay_root_is_the_mean() {
        let sol = solve_malthusian(&single(&[1], &[2.5]), 1e-12).unwrap();
        assert!((sol.rho_hat - 2.5).abs() < 1e-12);
        assert!((sol.theta - 2.5f64.ln()).abs() < 1e-12);
        assert_eq!(sol.regime, Regime::Supercritical);
    }

    #[test]
    fn golden_ratio() {
        let sol = solve_malthusian(&single(&[1, 2], &[1.0, 1.0]), 1e-12).unwrap();
        assert!((sol.rho_hat - PHI).abs() < 1e-12);
        assert!((sol.theta - 0.481_211_825_059_603_4).abs() < 1e-12);
        assert!((sol.beta[0] - 0.618_034_0).abs() < 1e-7);
        assert!((sol.beta[1] - 0.381_966_0).abs() < 1e-7);
        assert!((sol.beta_sum() - 1.0).abs() < 1e-12);
        assert!((sol.mu_beta - 1.381_966_0).abs() < 1e-7);
        assert!(sol.companion_residual < 1e-12);
    }

    #[test]
    fn companion_of_fibonacci() {
        let comp = build_companion(&single(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(comp.matrix, dmatrix![1.0, 1.0; 1.0, 0.0]);
        assert!((comp.pf.rho - PHI).abs() < 1e-12);
        let m = dmatrix![0.5, 0.2; 0.1, 0.9];
        let one = MeanMatrixFamily::new(&[1], vec![m.clone()]).unwrap();
        assert_eq!(build_companion(&one).unwrap().matrix, m);
    }

    #[test]
    fn companion_block_layout() {
        let m1 = dmatrix![0.1, 0.2; 0.3, 0.4];
        let m3 = dmatrix![0.5, 0.6; 0.7, 0.8];
        let fam = MeanMatrixFamily::new(&[1, 3], vec![m1.clone(), m3.clone()]).unwrap();
        let c = build_companion(&fam).unwrap();
        assert_eq!(c.matrix.nrows(), 6);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(c.matrix[(c.index(1, i), c.index(1, j))], m1[(i, j)]);
                assert_eq!(c.matrix[(c.index(2, i), c.index(1, j))], 0.0);
                assert_eq!(c.matrix[(c.index(3, i), c.index(1, j))], m3[(i, j)]);
                let shift = if i == j { 1.0 } else { 0.0 };
                assert_eq!(c.matrix[(c.index(1, i), c.index(2, j))], shift);
                assert_eq!(c.matrix[(c.index(2, i), c.index(3, j))], shift);
                assert_eq!(c.matrix[(c.index(1, i), c.index(3, j))], 0.0);
            }
        }
    }

    #[test]
    fn regimes_follow_rho_sum() {
        let sub = solve_malthusian(&single(&[1, 2], &[0.3, 0.3]), 1e-12).unwrap();
        assert_eq!(sub.regime, Regime::Subcritical);
        assert!(sub.theta < 0.0);
        let crit = solve_malthusian(&single(&[1, 2], &[0.5, 0.5]), 1e-12).unwrap();
        assert_eq!(crit.regime, Regime::Critical);
        assert!(crit.theta.abs() < 1e-12);
    }

    #[test]
    fn monotone_discounted_radius() {
        let fam = MeanMatrixFamily::new(
            &[1, 2, 4],
            vec![
                dmatrix![0.2, 0.5; 0.4, 0.1],
                dmatrix![0.3, 0.1; 0.2, 0.6],
                dmatrix![0.9, 0.3; 0.1, 0.2],
            ],
        )
        .unwrap();
        let sol = solve_malthusian(&fam, 1e-12).unwrap();
        let r = |x: f64| spectral_radius(&discounted_mean_matrix(&fam, x), 1e-12).unwrap();
        assert!(r(sol.rho_hat / 2.0) > r(sol.rho_hat));
        assert!(r(sol.rho_hat) > r(sol.rho_hat * 2.0));
        assert!((r(sol.rho_hat) - 1.0).abs() < 1e-11);
        assert!(sol.companion_residual < 1e-9);
    }

    #[test]
    fn bracket_failure_for_degenerate_family() {
        let fam = single(&[1], &[1e-12]);
        assert_eq!(solve_malthusian(&fam, 1e-12), Err(Error::BracketFailure));
    }

    #[test]
    fn non_shared_family_warns_about_beta() {
        let fam = MeanMatrixFamily::new(
            &[1, 2],
            vec![dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![2.0, 1.0; 1.0, 1.0]],
        )
        .unwrap();
        let sol = solve_malthusian(&fam, 1e-12).unwrap();
        assert!(!sol.shared);
        assert!((sol.beta_sum() - 1.0).abs() > 1e-8);
        assert!(sol.warnings.iter().any(|w| w.contains("beta")));
    }

    #[test]
    fn critical_limit_examples() {
        let model = ModelSpec::poisson(&[1], vec![dmatrix![1.0]], LifetimeLaw::fixed(1), Initial::Type(0)).unwrap();
        let fam = single(&[1], &[1.0]);
        let lim = critical_limit(&model, &fam).unwrap();
        assert!((lim[0] - 1.0).abs() < 1e-12);

        let model = ModelSpec::poisson(
            &[1, 2],
            vec![dmatrix![0.5], dmatrix![0.5]],
            LifetimeLaw::fixed(1),
            Initial::Type(0),
        )
        .unwrap();
        let fam = single(&[1, 2], &[0.5, 0.5]);
        // renewal with beta = (1/2, 1/2): limit 1 / mu = 2 / 3
        let lim = critical_limit(&model, &fam).unwrap();
        assert!((lim[0] - 2.0 / 3.0).abs() < 1e-12);

        let super_fam = single(&[1, 2], &[1.0, 1.0]);
        assert!(matches!(
            critical_limit(&model, &super_fam),
            Err(Error::NotCritical { .. })
        ));
    }
}
