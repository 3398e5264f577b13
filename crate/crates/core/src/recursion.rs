//! Exact mean-evolution recursions for the offspring (X), symptomatic (Z)
//! and asymptomatic (Y) processes, the kernel `Xi(s)`, and the closed-form
//! limits available when the mean matrices share Perron-Frobenius eigenvectors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{ser_dvector, ser_dvectors};
use crate::error::{Error, Result};
use crate::malthusian::{discounted_mean_matrix, MalthusianSolution};
use crate::model::{MeanMatrixFamily, ModelSpec};
use crate::spectral::{pf_decompose, shared_pf_check, DEFAULT_RESIDUAL_TOL, DEFAULT_SHARING_TOL};

const OVERFLOW_GUARD: f64 = 1e300;

/// Mean trajectories for `s = 0..=horizon`, raw and weighted by `exp(-theta s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTrajectory {
    pub horizon: usize,
    pub theta: f64,
    #[serde(serialize_with = "ser_dvectors")]
    pub ex: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_dvectors")]
    pub ez: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_dvectors")]
    pub ey: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_dvectors")]
    pub wx: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_dvectors")]
    pub wz: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_dvectors")]
    pub wy: Vec<DVector<f64>>,
}

/// One step of `v(s)' = source' + sum_d v(s-d)' A_d`, with `v(t) = 0` for `t < 0`.
fn step(history: &[DVector<f64>], s: usize, mats: &[(usize, DMatrix<f64>)], source: DVector<f64>) -> DVector<f64> {
    let mut v = source;
    for (d, m) in mats {
        if *d <= s {
            v += m.tr_mul(&history[s - d]);
        }
    }
    v
}

/// `E[X(s)]` for `s = 0..=horizon` from an arbitrary initial vector.
pub fn evolve_offspring_means(
    x0: &DVector<f64>,
    family: &MeanMatrixFamily,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    let mats: Vec<(usize, DMatrix<f64>)> = family.iter().map(|(d, m)| (d, m.clone())).collect();
    let n = family.n_types();
    let mut ex: Vec<DVector<f64>> = Vec::with_capacity(horizon + 1);
    for s in 0..=horizon {
        let src = if s == 0 { x0.clone() } else { DVector::zeros(n) };
        let v = step(&ex, s, &mats, src);
        check_finite(&v, s)?;
        ex.push(v);
    }
    Ok(ex)
}

fn check_finite(v: &DVector<f64>, s: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || x.abs() > OVERFLOW_GUARD) {
        return Err(Error::HorizonTooLarge { step: s });
    }
    Ok(())
}

/// `exp(ln p - theta s)`, avoiding overflow of `exp(-theta s)` alone.
fn weighted(p: f64, theta: f64, s: usize) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        (p.ln() - theta * s as f64).exp()
    }
}

/// Runs the three mean recursions to `horizon`.
///
/// The weighted variants are propagated with the discounted matrices
/// `exp(-theta d) M_d` rather than by rescaling the raw values, so they stay
/// finite where `rho_hat^s` would not.
pub fn evolve_means(
    model: &ModelSpec,
    family: &MeanMatrixFamily,
    horizon: usize,
    theta: f64,
) -> Result<MeanTrajectory> {
    let n = family.n_types();
    if model.n_types() != n {
        return Err(Error::InvalidArgument("model and family type counts differ".into()));
    }
    let x0 = model.initial_vector();
    let lt = &model.lifetime;
    let big_d = family.max_delay();
    let p_asym = lt.prob(0);

    let raw: Vec<(usize, DMatrix<f64>)> = family.iter().map(|(d, m)| (d, m.clone())).collect();
    let disc: Vec<(usize, DMatrix<f64>)> = family.iter().map(|(d, m)| (d, m * (-theta * d as f64).exp())).collect();

    let mut t = MeanTrajectory {
        horizon,
        theta,
        ex: Vec::with_capacity(horizon + 1),
        ez: Vec::with_capacity(horizon + 1),
        ey: Vec::with_capacity(horizon + 1),
        wx: Vec::with_capacity(horizon + 1),
        wz: Vec::with_capacity(horizon + 1),
        wy: Vec::with_capacity(horizon + 1),
    };
    let zero = DVector::zeros(n);
    for s in 0..=horizon {
        let surv = lt.survival(s);
        let y_src = if s <= big_d { p_asym } else { 0.0 };
        let x_src = if s == 0 { 1.0 } else { 0.0 };

        let x = step(&t.ex, s, &raw, if s == 0 { x0.clone() } else { zero.clone() });
        let z = step(&t.ez, s, &raw, &x0 * surv);
        let y = step(&t.ey, s, &raw, &x0 * y_src);
        for v in [&x, &z, &y] {
            check_finite(v, s)?;
        }
        let wx = step(&t.wx, s, &disc, &x0 * weighted(x_src, theta, s));
        let wz = step(&t.wz, s, &disc, &x0 * weighted(surv, theta, s));
        let wy = step(&t.wy, s, &disc, &x0 * weighted(y_src, theta, s));

        t.ex.push(x);
        t.ez.push(z);
        t.ey.push(y);
        t.wx.push(wx);
        t.wz.push(wz);
        t.wy.push(wy);
    }
    Ok(t)
}

/// `Xi(0), ..., Xi(s)` with `Xi(0) = I` and `Xi(t) = sum_d Xi(t-d) M_d`.
pub fn xi_kernel_sequence(family: &MeanMatrixFamily, s: usize) -> Vec<DMatrix<f64>> {
    let n = family.n_types();
    let mut xi: Vec<DMatrix<f64>> = Vec::with_capacity(s + 1);
    xi.push(DMatrix::identity(n, n));
    for t in 1..=s {
        let mut acc = DMatrix::zeros(n, n);
        for (d, m) in family.iter() {
            if d <= t {
                acc += &xi[t - d] * m;
            }
        }
        xi.push(acc);
    }
    xi
}

/// The mean-evolution kernel `Xi(s)`, computed by dynamic programming over the last step.
pub fn xi_kernel(family: &MeanMatrixFamily, s: usize) -> DMatrix<f64> {
    xi_kernel_sequence(family, s).pop().expect("sequence has s + 1 entries")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessGaps {
    pub x: f64,
    pub z: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub theta: f64,
    pub mu_beta: f64,
    #[serde(serialize_with = "ser_dvector")]
    pub limit_x: DVector<f64>,
    #[serde(serialize_with = "ser_dvector")]
    pub limit_z: DVector<f64>,
    #[serde(serialize_with = "ser_dvector")]
    pub limit_y: DVector<f64>,
    #[serde(serialize_with = "ser_dvector")]
    pub type_limit: DVector<f64>,
    pub delays: Vec<usize>,
    /// `None` when `P(L > d) = 0` for every delay.
    pub age_limit: Option<Vec<f64>>,
    /// `sum_{c >= 0} P(L > c) exp(-theta c)`
    pub survival_factor: f64,
    /// `sum_{c=0..D} exp(-theta c)`; equals `D + 1` in the critical regime.
    pub asymptomatic_window: f64,
    pub horizon: usize,
    /// `||w(horizon) - limit||_inf` for each weighted trajectory.
    pub empirical_gap: ProcessGaps,
}

/// Limits of the weighted mean trajectories of a family sharing
/// Perron-Frobenius eigenvectors (`h`, `nu`):
///
/// * `lim exp(-theta s) E[X(s)]' = mu(beta)^{-1} (E[X(0)]' h) nu'`
/// * `lim exp(-theta s) E[Z(s)]'` is the above times `sum_c P(L > c) exp(-theta c)`
/// * `lim exp(-theta s) E[Y(s)]'` is the above times `P(L = 0) sum_{c=0..D} exp(-theta c)`
///
/// `horizon` sets where the empirical gaps to the evolved trajectories are measured.
pub fn theorem_limits(
    model: &ModelSpec,
    family: &MeanMatrixFamily,
    mal: &MalthusianSolution,
    horizon: usize,
) -> Result<LimitReport> {
    let report = shared_pf_check(family, DEFAULT_SHARING_TOL)?;
    let (h, nu) = match (report.h, report.nu) {
        (Some(h), Some(nu)) => (h, nu),
        _ => {
            return Err(Error::NotShared {
                deviation: report.max_deviation,
            })
        }
    };
    let theta = mal.theta;
    let x0 = model.initial_vector();
    let lt = &model.lifetime;
    let survival_factor = lt.discounted_survival_sum(theta)?;
    let big_d = family.max_delay();
    let asymptomatic_window: f64 = (0..=big_d).map(|c| (-theta * c as f64).exp()).sum();

    let limit_x = &nu * (x0.dot(&h) / mal.mu_beta);
    let limit_z = &limit_x * survival_factor;
    let limit_y = &limit_x * (lt.prob(0) * asymptomatic_window);
    let age_limit = match age_limit(model, family, theta) {
        Ok(a) => Some(a),
        Err(Error::DegenerateDenominator) => None,
        Err(e) => return Err(e),
    };

    let traj = evolve_means(model, family, horizon, theta)?;
    let empirical_gap = ProcessGaps {
        x: (&traj.wx[horizon] - &limit_x).amax(),
        z: (&traj.wz[horizon] - &limit_z).amax(),
        y: (&traj.wy[horizon] - &limit_y).amax(),
    };
    Ok(LimitReport {
        theta,
        mu_beta: mal.mu_beta,
        limit_x,
        limit_z,
        limit_y,
        type_limit: nu,
        delays: family.delays().to_vec(),
        age_limit,
        survival_factor,
        asymptomatic_window,
        horizon,
        empirical_gap,
    })
}

fn age_limit(model: &ModelSpec, family: &MeanMatrixFamily, theta: f64) -> Result<Vec<f64>> {
    let w: Vec<f64> = family
        .delays()
        .iter()
        .map(|&d| weighted(model.lifetime.survival(d), theta, d))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Proportions of the expected infectious population by age.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeDistribution {
    pub s: usize,
    pub delays: Vec<usize>,
    /// `by_type[j][k]` is the share of type `j` of age `delays[k]` at time `s`.
    pub by_type: Vec<Vec<f64>>,
    /// Limit shares, identical for every type.
    pub limit: Vec<f64>,
}

/// `E_d^j(s) = E[X_j(s-d)] P(L > d) / sum_{d'} E[X_j(s-d')] P(L > d')`
/// together with its limit `P(L > d) exp(-theta d) / sum_{d'} P(L > d') exp(-theta d')`.
pub fn age_distribution(
    model: &ModelSpec,
    family: &MeanMatrixFamily,
    mal: &MalthusianSolution,
    s: usize,
) -> Result<AgeDistribution> {
    let big_d = family.max_delay();
    if s <= big_d {
        return Err(Error::InvalidArgument(format!(
            "age distribution needs s > D = {big_d}"
        )));
    }
    let theta = mal.theta;
    let limit = age_limit(model, family, theta)?;
    let traj = evolve_means(model, family, s, theta)?;
    let delays = family.delays().to_vec();
    let n = family.n_types();
    let mut by_type = Vec::with_capacity(n);
    for j in 0..n {
        // X_j(s-d) is proportional to wx_j(s-d) exp(-theta d) at fixed s
        let raw: Vec<f64> = delays
            .iter()
            .map(|&d| traj.wx[s - d][j] * weighted(model.lifetime.survival(d), theta, d))
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDenominator);
        }
        by_type.push(raw.into_iter().map(|x| x / total).collect());
    }
    Ok(AgeDistribution {
        s,
        delays,
        by_type,
        limit,
    })
}

/// Starts the offspring recursion from `E[X(s)]' = nu' rho_hat^s` on
/// `s = 0..D-1`, with `nu` the normalized left eigenvector of
/// `sum_d rho_hat^{-d} M_d`, and returns the worst deviation of the type
/// proportions from `nu` over `s = D..=2D`.
pub fn stationary_check(family: &MeanMatrixFamily, mal: &MalthusianSolution) -> Result<f64> {
    let m_rho = discounted_mean_matrix(family, mal.rho_hat);
    let nu = pf_decompose(&m_rho, DEFAULT_RESIDUAL_TOL)?.nu;
    let big_d = family.max_delay();
    let disc: Vec<(usize, DMatrix<f64>)> = family
        .iter()
        .map(|(d, m)| (d, m * mal.rho_hat.powi(-(d as i32))))
        .collect();
    // work with rho_hat^{-s} E[X(s)], which is nu on the initial window
    let mut w: Vec<DVector<f64>> = vec![nu.clone(); big_d];
    let mut residual: f64 = 0.0;
    for s in big_d..=2 * big_d {
        let v = step(&w, s, &disc, DVector::zeros(nu.len()));
        let prop = &v / v.sum();
        residual = residual.max((&prop - &nu).amax());
        w.push(v);
    }
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::malthusian::solve_malthusian;
    use crate::model::{censored_mean_matrices, DeathProb, Initial, LifetimeLaw};
    use nalgebra::dmatrix;

    const PHI: f64 = 1.618_033_988_749_895;

    fn fib(lifetime: LifetimeLaw) -> (ModelSpec, MeanMatrixFamily, MalthusianSolution) {
        let model =
            ModelSpec::poisson(&[1, 2], vec![dmatrix![1.0], dmatrix![1.0]], lifetime, Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let mal = solve_malthusian(&fam, 1e-12).unwrap();
        (model, fam, mal)
    }

    #[test]
    fn fibonacci_incidence() {
        let (model, fam, mal) = fib(LifetimeLaw::fixed(3));
        let t = evolve_means(&model, &fam, 12, mal.theta).unwrap();
        let ex: Vec<f64> = t.ex.iter().map(|v| v[0]).collect();
        assert_eq!(ex, vec![1., 1., 2., 3., 5., 8., 13., 21., 34., 55., 89., 144., 233.]);
    }

    #[test]
    fn geometric_decay() {
        let model = ModelSpec::poisson(&[1], vec![dmatrix![0.5]], LifetimeLaw::fixed(1), Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let t = evolve_means(&model, &fam, 30, 0.5f64.ln()).unwrap();
        for (s, v) in t.ex.iter().enumerate() {
            assert_eq!(v[0], 0.5f64.powi(s as i32));
            assert!((t.wx[s][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_examples() {
        let (_, fam, _) = fib(LifetimeLaw::fixed(3));
        assert_eq!(xi_kernel(&fam, 0), DMatrix::identity(1, 1));
        assert_eq!(xi_kernel(&fam, 4)[(0, 0)], 5.0);
    }

    #[test]
    fn fibonacci_limits() {
        let (model, fam, mal) = fib(LifetimeLaw::fixed(3));
        let rep = theorem_limits(&model, &fam, &mal, 60).unwrap();
        let binet = PHI / 5f64.sqrt();
        assert!((rep.limit_x[0] - binet).abs() < 1e-12);
        assert!((rep.survival_factor - 2.0).abs() < 1e-12);
        assert!((rep.limit_z[0] - 2.0 * binet).abs() < 1e-12);
        assert_eq!(rep.limit_y[0], 0.0);
        assert!(rep.empirical_gap.x < 1e-9);
        assert!(rep.empirical_gap.z < 1e-9);
        let age = rep.age_limit.unwrap();
        assert!((age[0] - 1.0 / PHI).abs() < 1e-12);
        assert!((age[1] - 1.0 / (PHI * PHI)).abs() < 1e-12);
    }

    #[test]
    fn all_asymptomatic_fibonacci() {
        let (model, fam, mal) = fib(LifetimeLaw::fixed(0));
        let rep = theorem_limits(&model, &fam, &mal, 80).unwrap();
        let binet = PHI / 5f64.sqrt();
        assert_eq!(rep.limit_z[0], 0.0);
        assert_eq!(rep.age_limit, None);
        // window weights 1 + 1/phi + 1/phi^2 = 2
        assert!((rep.asymptomatic_window - 2.0).abs() < 1e-12);
        assert!((rep.limit_y[0] - 2.0 * binet).abs() < 1e-12);
        assert!(rep.empirical_gap.y < 1e-9);
    }

    #[test]
    fn y_recursion_matches_window_sum() {
        let lt = LifetimeLaw::new(vec![0.3, 0.2, 0.5], None, DeathProb::Constant(0.2)).unwrap();
        let model = ModelSpec::poisson(
            &[1, 3],
            vec![dmatrix![0.3, 0.4; 0.2, 0.1], dmatrix![0.1, 0.5; 0.6, 0.2]],
            lt,
            Initial::Vector(vec![1.0, 2.0]),
        )
        .unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let t = evolve_means(&model, &fam, 25, 0.0).unwrap();
        for s in 0..=25 {
            let mut expect = DVector::zeros(2);
            for c in 0..=3.min(s) {
                expect += &t.ex[s - c] * 0.3;
            }
            assert!((&t.ey[s] - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn non_shared_family_rejected() {
        let model = ModelSpec::poisson(
            &[1, 2],
            vec![dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![2.0, 1.0; 1.0, 1.0]],
            LifetimeLaw::fixed(1),
            Initial::Type(0),
        )
        .unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let mal = solve_malthusian(&fam, 1e-12).unwrap();
        assert!(matches!(
            theorem_limits(&model, &fam, &mal, 10),
            Err(Error::NotShared { .. })
        ));
    }

    #[test]
    fn subcritical_tail_divergence() {
        let lt = LifetimeLaw::new(vec![0.0, 0.5], Some(0.9), DeathProb::Constant(0.0)).unwrap();
        let model = ModelSpec::poisson(&[1], vec![dmatrix![0.5]], lt, Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let mal = solve_malthusian(&fam, 1e-12).unwrap();
        // q exp(-theta) = 0.9 * 2 >= 1
        assert!(matches!(
            theorem_limits(&model, &fam, &mal, 10),
            Err(Error::TailDiverges { .. })
        ));
    }

    #[test]
    fn age_distribution_single_delay_and_guard() {
        let model = ModelSpec::poisson(&[1], vec![dmatrix![2.0]], LifetimeLaw::fixed(4), Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        let mal = solve_malthusian(&fam, 1e-12).unwrap();
        let a = age_distribution(&model, &fam, &mal, 5).unwrap();
        assert_eq!(a.by_type, vec![vec![1.0]]);
        assert_eq!(a.limit, vec![1.0]);
        assert!(age_distribution(&model, &fam, &mal, 1).is_err());

        let dead = ModelSpec::poisson(&[1], vec![dmatrix![2.0]], LifetimeLaw::fixed(1), Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&dead).unwrap();
        let mal = solve_malthusian(&fam, 1e-12).unwrap();
        assert_eq!(
            age_distribution(&dead, &fam, &mal, 5),
            Err(Error::DegenerateDenominator)
        );
    }

    #[test]
    fn fibonacci_age_distribution() {
        let (model, fam, mal) = fib(LifetimeLaw::fixed(3));
        let a = age_distribution(&model, &fam, &mal, 40).unwrap();
        assert!((a.by_type[0][0] - 1.0 / PHI).abs() < 1e-9);
        assert!((a.by_type[0][1] - 1.0 / (PHI * PHI)).abs() < 1e-9);
    }

    #[test]
    fn stationary_fibonacci() {
        let (_, fam, mal) = fib(LifetimeLaw::fixed(3));
        assert!(stationary_check(&fam, &mal).unwrap() < 1e-15);
    }

    #[test]
    fn overflow_guard() {
        let model = ModelSpec::poisson(&[1], vec![dmatrix![1e10]], LifetimeLaw::fixed(1), Initial::Type(0)).unwrap();
        let fam = censored_mean_matrices(&model).unwrap();
        assert!(matches!(
            evolve_means(&model, &fam, 40, 0.0),
            Err(Error::HorizonTooLarge { step: 31 })
        ));
    }
}
