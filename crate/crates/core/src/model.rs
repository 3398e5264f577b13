//! Process model: delays, lifetime/recovery law, raw offspring laws, and the
//! censored mean matrices derived from them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::is_irreducible;

const MASS_TOL: f64 = 1e-12;
/// Poisson sampling is only supported up to this mean.
pub const MAX_POISSON_MEAN: f64 = 1e12;

/// The ordered set of reproduction ages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayFamily {
    delays: Vec<usize>,
}

impl DelayFamily {
    /// Builds the family, sorting the delays. Zero delays and duplicates are rejected.
    pub fn new(mut delays: Vec<usize>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::InvalidArgument("delay set is empty".into()));
        }
        if delays.contains(&0) {
            return Err(Error::InvalidArgument("delays must be positive".into()));
        }
        delays.sort_unstable();
        if let Some(w) = delays.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateDelay(w[0]));
        }
        Ok(Self { delays })
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn max_delay(&self) -> usize {
        *self.delays.last().expect("non-empty delay set")
    }

    pub fn min_delay(&self) -> usize {
        self.delays[0]
    }

    pub fn gcd(&self) -> usize {
        self.delays.iter().fold(0, |a, &b| gcd(a, b))
    }

    pub fn index_of(&self, d: usize) -> Option<usize> {
        self.delays.binary_search(&d).ok()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Probability of death at the end of a lifetime of length `l`.
#[derive(Debug, Clone, PartialEq)]
pub enum DeathProb {
    Constant(f64),
    /// Entry `l` is `P(eps = 0 | L = l)`; ages past the end reuse the last entry.
    ByAge(Vec<f64>),
}

impl DeathProb {
    pub fn at(&self, l: usize) -> f64 {
        if l == 0 {
            return 0.0;
        }
        match self {
            DeathProb::Constant(q) => *q,
            DeathProb::ByAge(v) => match v.get(l) {
                Some(&q) => q,
                None => v.last().copied().unwrap_or(0.0),
            },
        }
    }
}

/// Lifetime law: a finite pmf on `0..=L_max`, optionally followed by a
/// geometric tail carrying the remaining mass, together with the
/// death/recovery law at the end of the lifetime.
///
/// Fields are public so malformed laws can be built and reported by
/// [`validate`]; use [`LifetimeLaw::new`] for a checked constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeLaw {
    pub pmf: Vec<f64>,
    pub tail_ratio: Option<f64>,
    pub death: DeathProb,
}

impl LifetimeLaw {
    pub fn new(pmf: Vec<f64>, tail_ratio: Option<f64>, death: DeathProb) -> Result<Self> {
        let law = Self { pmf, tail_ratio, death };
        if let Some(msg) = law.structural_problem() {
            return Err(Error::InvalidArgument(msg));
        }
        Ok(law)
    }

    /// `L` identically equal to `l`, no deaths.
    pub fn fixed(l: usize) -> Self {
        let mut pmf = vec![0.0; l + 1];
        pmf[l] = 1.0;
        Self {
            pmf,
            tail_ratio: None,
            death: DeathProb::Constant(0.0),
        }
    }

    fn structural_problem(&self) -> Option<String> {
        if self.pmf.is_empty() {
            return Some("lifetime pmf is empty".into());
        }
        if self.pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Some("lifetime pmf has a negative or non-finite entry".into());
        }
        if let Some(q) = self.tail_ratio {
            if !(0.0..1.0).contains(&q) {
                return Some(format!("tail ratio {q} outside [0, 1)"));
            }
        }
        let dp_ok = |q: f64| q.is_finite() && (0.0..=1.0).contains(&q);
        match &self.death {
            DeathProb::Constant(q) if !dp_ok(*q) => return Some(format!("death probability {q} outside [0, 1]")),
            DeathProb::ByAge(v) => {
                if v.iter().any(|q| !dp_ok(*q)) {
                    return Some("death probability outside [0, 1]".into());
                }
                if v.first().is_some_and(|q| *q != 0.0) {
                    return Some("death probability at L = 0 must be 0".into());
                }
            }
            _ => {}
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Some(format!("lifetime mass {mass} != 1"));
        }
        None
    }

    pub fn l_max(&self) -> usize {
        self.pmf.len() - 1
    }

    fn finite_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    /// Mass carried by the geometric tail beyond `L_max`.
    pub fn tail_mass(&self) -> f64 {
        match self.tail_ratio {
            Some(_) => (1.0 - self.finite_mass()).max(0.0),
            None => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.finite_mass() + self.tail_mass()
    }

    /// `P(L = l)`.
    pub fn prob(&self, l: usize) -> f64 {
        let lmax = self.l_max();
        if l <= lmax {
            return self.pmf[l];
        }
        match self.tail_ratio {
            Some(q) => self.tail_mass() * (1.0 - q) * q.powi((l - lmax - 1) as i32),
            None => 0.0,
        }
    }

    /// `P(L > c)`.
    pub fn survival(&self, c: usize) -> f64 {
        let lmax = self.l_max();
        let tail = self.tail_mass();
        if c < lmax {
            self.pmf[c + 1..].iter().sum::<f64>() + tail
        } else {
            match self.tail_ratio {
                Some(q) if tail > 0.0 => tail * q.powi((c - lmax) as i32),
                _ => 0.0,
            }
        }
    }

    pub fn death_prob(&self, l: usize) -> f64 {
        self.death.at(l)
    }

    /// `sum_{c >= 0} P(L > c) exp(-theta c)`: the finite part is summed
    /// term by term, the geometric tail in closed form.
    pub fn discounted_survival_sum(&self, theta: f64) -> Result<f64> {
        let x = (-theta).exp();
        let lmax = self.l_max();
        let mut total = 0.0;
        let mut weight = 1.0;
        for c in 0..lmax {
            total += self.survival(c) * weight;
            weight *= x;
        }
        let tail = self.tail_mass();
        if tail > 0.0 {
            let q = self.tail_ratio.unwrap_or(0.0);
            let ratio = q * x;
            if ratio >= 1.0 {
                return Err(Error::TailDiverges { ratio });
            }
            total += tail * weight / (1.0 - ratio);
        }
        Ok(total)
    }

    /// Draws `(L, eps)`; `eps = true` means recovery. `L = 0` always recovers.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, bool) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut lifetime = None;
        for (l, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                lifetime = Some(l);
                break;
            }
        }
        let l = match lifetime {
            Some(l) => l,
            None => match self.tail_ratio {
                Some(q) if self.tail_mass() > 0.0 => {
                    let extra = if q > 0.0 {
                        let v: f64 = 1.0 - rng.random::<f64>();
                        1 + (v.ln() / q.ln()).floor() as usize
                    } else {
                        1
                    };
                    self.l_max() + extra
                }
                // rounding in the cumulative sum: fall back to the last positive atom
                _ => self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0),
            },
        };
        if l == 0 {
            return (0, true);
        }
        let dies = rng.random::<f64>() < self.death_prob(l);
        (l, !dies)
    }
}

/// `P(L <= d, eps = 0) = sum_{l=1..d} P(L = l) P(eps = 0 | L = l)`.
pub fn death_prob_by_age(lifetime: &LifetimeLaw, d: usize) -> f64 {
    let p: f64 = (1..=d).map(|l| lifetime.prob(l) * lifetime.death_prob(l)).sum();
    p.clamp(0.0, 1.0)
}

/// Law of a raw offspring count `z_d^{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub enum RawLaw {
    Poisson(f64),
    Pmf(Vec<f64>),
}

impl RawLaw {
    pub fn mean(&self) -> f64 {
        match self {
            RawLaw::Poisson(lambda) => *lambda,
            RawLaw::Pmf(p) => p.iter().enumerate().map(|(n, q)| n as f64 * q).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            RawLaw::Poisson(lambda) => {
                if *lambda <= 0.0 {
                    0
                } else {
                    Poisson::new(*lambda).expect("finite positive Poisson mean").sample(rng) as u64
                }
            }
            RawLaw::Pmf(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (n, q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        return n as u64;
                    }
                }
                p.iter().rposition(|&q| q > 0.0).unwrap_or(0) as u64
            }
        }
    }

    fn problem(&self) -> Option<String> {
        match self {
            RawLaw::Poisson(l) if !l.is_finite() || *l < 0.0 => {
                Some(format!("Poisson mean {l} must be finite and >= 0"))
            }
            RawLaw::Poisson(l) if *l > MAX_POISSON_MEAN => {
                Some(format!("Poisson mean {l:e} exceeds {MAX_POISSON_MEAN:e}"))
            }
            RawLaw::Pmf(p) => {
                if p.iter().any(|q| !q.is_finite() || *q < 0.0) {
                    Some("offspring pmf has a negative or non-finite entry".into())
                } else if (p.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
                    Some(format!("offspring pmf sums to {}", p.iter().sum::<f64>()))
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

/// Raw offspring laws indexed `[delay index][parent type][child type]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    pub laws: Vec<Vec<Vec<RawLaw>>>,
}

impl OffspringLaw {
    /// Poisson laws whose means are the given matrices, one per delay.
    pub fn poisson(means: &[DMatrix<f64>]) -> Self {
        let laws = means
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| RawLaw::Poisson(m[(i, j)])).collect())
                    .collect()
            })
            .collect();
        Self { laws }
    }

    pub fn get(&self, delay_index: usize, i: usize, j: usize) -> &RawLaw {
        &self.laws[delay_index][i][j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// A single ancestor of the given type.
    Type(usize),
    /// Expected initial population `E[X(0)]`.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub type_names: Vec<String>,
    pub delays: DelayFamily,
    pub offspring: OffspringLaw,
    pub lifetime: LifetimeLaw,
    pub initial: Initial,
}

impl ModelSpec {
    /// Model with Poisson raw offspring laws; type names default to `t0, t1, ...`.
    pub fn poisson(
        delays: &[usize],
        means: Vec<DMatrix<f64>>,
        lifetime: LifetimeLaw,
        initial: Initial,
    ) -> Result<Self> {
        let n = means.first().map(|m| m.nrows()).unwrap_or(0);
        if means.len() != delays.len() {
            return Err(Error::InvalidArgument("one mean matrix per delay is required".into()));
        }
        let mut pairs: Vec<(usize, DMatrix<f64>)> = delays.iter().copied().zip(means).collect();
        pairs.sort_by_key(|(d, _)| *d);
        let family = DelayFamily::new(pairs.iter().map(|(d, _)| *d).collect())?;
        let means: Vec<DMatrix<f64>> = pairs.into_iter().map(|(_, m)| m).collect();
        let model = Self {
            type_names: (0..n).map(|i| format!("t{i}")).collect(),
            delays: family,
            offspring: OffspringLaw::poisson(&means),
            lifetime,
            initial,
        };
        model.check_structure()?;
        Ok(model)
    }

    pub fn n_types(&self) -> usize {
        self.type_names.len()
    }

    /// `E[X(0)]`.
    pub fn initial_vector(&self) -> DVector<f64> {
        match &self.initial {
            Initial::Type(i) => {
                let mut v = DVector::zeros(self.n_types());
                v[*i] = 1.0;
                v
            }
            Initial::Vector(v) => DVector::from_column_slice(v),
        }
    }

    /// Uncensored means `E[z_d^{i,j}]`, one matrix per delay.
    pub fn raw_mean_matrices(&self) -> Vec<DMatrix<f64>> {
        let n = self.n_types();
        (0..self.delays.len())
            .map(|k| DMatrix::from_fn(n, n, |i, j| self.offspring.get(k, i, j).mean()))
            .collect()
    }

    /// Shape and range checks; everything [`validate`] reports as a failure except
    /// irreducibility.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.n_types();
        if n == 0 {
            return Err(Error::InvalidArgument("at least one type is required".into()));
        }
        if self.offspring.laws.len() != self.delays.len() {
            return Err(Error::InvalidArgument(
                "offspring laws must be given for every delay".into(),
            ));
        }
        for (k, per_delay) in self.offspring.laws.iter().enumerate() {
            if per_delay.len() != n || per_delay.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidArgument(format!(
                    "offspring laws at delay {} are not {n}x{n}",
                    self.delays.delays()[k]
                )));
            }
            for row in per_delay {
                for law in row {
                    if let Some(msg) = law.problem() {
                        return Err(Error::InvalidArgument(msg));
                    }
                }
            }
        }
        if let Some(msg) = self.lifetime.structural_problem() {
            return Err(Error::InvalidArgument(msg));
        }
        match &self.initial {
            Initial::Type(i) if *i >= n => {
                return Err(Error::InvalidArgument(format!("initial type {i} out of range")))
            }
            Initial::Vector(v) => {
                if v.len() != n {
                    return Err(Error::InvalidArgument(
                        "initial vector length must equal the number of types".into(),
                    ));
                }
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidArgument(
                        "initial vector entries must be finite and >= 0".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Censored mean matrices `(M_d : d in D)`. Every stored matrix is square,
/// entrywise nonnegative and irreducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrixFamily {
    delays: DelayFamily,
    matrices: Vec<DMatrix<f64>>,
}

impl MeanMatrixFamily {
    pub fn new(delays: &[usize], matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if delays.len() != matrices.len() {
            return Err(Error::InvalidArgument("one matrix per delay is required".into()));
        }
        let mut pairs: Vec<(usize, DMatrix<f64>)> = delays.iter().copied().zip(matrices).collect();
        pairs.sort_by_key(|(d, _)| *d);
        let delays = DelayFamily::new(pairs.iter().map(|(d, _)| *d).collect())?;
        let matrices: Vec<DMatrix<f64>> = pairs.into_iter().map(|(_, m)| m).collect();
        let n = matrices[0].nrows();
        for (d, m) in delays.delays().iter().zip(&matrices) {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidArgument(format!("matrix at delay {d} is not {n}x{n}")));
            }
            if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::NegativeEntry { path: format!("M_{d}") });
            }
            if !is_irreducible(m) {
                return Err(Error::NonIrreducible { delay: *d });
            }
        }
        Ok(Self { delays, matrices })
    }

    pub fn delay_family(&self) -> &DelayFamily {
        &self.delays
    }

    pub fn delays(&self) -> &[usize] {
        self.delays.delays()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.max_delay()
    }

    pub fn n_types(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `M_d`, or `None` for `d` outside the delay set (where `M_d = 0`).
    pub fn get(&self, d: usize) -> Option<&DMatrix<f64>> {
        self.delays.index_of(d).map(|k| &self.matrices[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.delays.delays().iter().copied().zip(self.matrices.iter())
    }

    /// Family with every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.delays(), self.matrices.iter().map(|m| m * c).collect())
    }
}

/// `M_d(i,j) = E[z_d^{i,j}] (1 - P(L <= d, eps = 0))`.
pub fn censored_mean_matrices(model: &ModelSpec) -> Result<MeanMatrixFamily> {
    model.check_structure()?;
    let raw = model.raw_mean_matrices();
    let censored: Vec<DMatrix<f64>> = model
        .delays
        .delays()
        .iter()
        .zip(raw)
        .map(|(&d, m)| m * (1.0 - death_prob_by_age(&model.lifetime, d)))
        .collect();
    MeanMatrixFamily::new(model.delays.delays(), censored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn has_failures(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn has_warnings(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Warn)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            status,
            detail: detail.into(),
        });
    }
}

/// Collects the standing assumptions of the model into a pass/warn/fail report.
pub fn validate(model: &ModelSpec) -> ValidationReport {
    use CheckStatus::*;
    let mut report = ValidationReport { checks: Vec::new() };

    let g = model.delays.gcd();
    if g == 1 {
        report.push("gcd", Pass, "gcd=1");
    } else {
        report.push("gcd", Warn, format!("gcd={g}"));
    }
    if model.delays.len() == 1 {
        report.push("delay_count", Warn, "single delay");
    } else {
        report.push("delay_count", Pass, format!("{} delays", model.delays.len()));
    }

    let lt = &model.lifetime;
    let mass = lt.total_mass();
    if (mass - 1.0).abs() <= MASS_TOL {
        report.push("lifetime_mass", Pass, "mass = 1");
    } else {
        report.push("lifetime_mass", Fail, format!("mass != 1 ({mass})"));
    }
    match lt.structural_problem() {
        Some(msg) if !msg.contains("mass") && !msg.contains("P(L > 0)") => report.push("lifetime_law", Fail, msg),
        _ => report.push("lifetime_law", Pass, "lifetime law well formed"),
    }
    if !lt.pmf.is_empty() {
        if lt.survival(0) > 0.0 {
            report.push("lifetime_positive", Pass, "P(L>0) > 0");
        } else {
            report.push(
                "lifetime_positive",
                Warn,
                "P(L>0) = 0, every individual is asymptomatic",
            );
        }
    }

    let mut offspring_ok = true;
    let n = model.n_types();
    let shape_ok = model.offspring.laws.len() == model.delays.len()
        && model
            .offspring
            .laws
            .iter()
            .all(|m| m.len() == n && m.iter().all(|r| r.len() == n));
    if !shape_ok {
        offspring_ok = false;
        report.push("offspring_shape", Fail, "offspring laws do not match types x delays");
    } else {
        for (k, per_delay) in model.offspring.laws.iter().enumerate() {
            for (i, row) in per_delay.iter().enumerate() {
                for (j, law) in row.iter().enumerate() {
                    if let Some(msg) = law.problem() {
                        offspring_ok = false;
                        report.push(
                            "offspring_pmf",
                            Fail,
                            format!("d={} i={i} j={j}: {msg}", model.delays.delays()[k]),
                        );
                    }
                }
            }
        }
        if offspring_ok {
            report.push("offspring_pmf", Pass, "all offspring laws normalized");
        }
    }

    if offspring_ok && model.check_structure().is_ok() {
        let raw = model.raw_mean_matrices();
        for (&d, m) in model.delays.delays().iter().zip(raw) {
            let censored = m * (1.0 - death_prob_by_age(lt, d));
            let name = format!("irreducible_{d}");
            if is_irreducible(&censored) {
                report.push(&name, Pass, format!("M_{d} irreducible"));
            } else {
                report.push(&name, Fail, format!("M_{d} not irreducible"));
            }
        }
    }
    report
}
