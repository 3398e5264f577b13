//! Combinatorics of backward paths through the delay set: step-count
//! vectors, their arrangements, run statistics, and two independent routes
//! to the kernel `Xi(s)` (full enumeration and Bernoulli-path sampling).

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ser_dmatrix;
use crate::error::{Error, Result};
use crate::malthusian::MalthusianSolution;
use crate::model::MeanMatrixFamily;
use crate::rng::StreamFactory;
use crate::spectral::NormalizedFamily;

pub const LAMBDA_CAP: usize = 64;
pub const WORD_CAP: u64 = 1_000_000;
pub const XI_ENUMERATION_CAP: usize = 12;
const MULTINOMIAL_LIMIT: u128 = 1 << 63;
const SAMPLING_CHUNK: usize = 4096;

/// Number of steps of each delay in a path; `counts[i]` belongs to `delays[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StepCountVector {
    pub delays: Vec<usize>,
    pub counts: Vec<u64>,
}

impl StepCountVector {
    pub fn new(delays: &[usize], counts: Vec<u64>) -> Result<Self> {
        if delays.len() != counts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} counts for {} delays",
                counts.len(),
                delays.len()
            )));
        }
        Ok(Self {
            delays: delays.to_vec(),
            counts,
        })
    }

    /// Path length `|k|`.
    pub fn r(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Total displacement `sum_d d k_d`.
    pub fn s(&self) -> u64 {
        self.delays.iter().zip(&self.counts).map(|(&d, &k)| d as u64 * k).sum()
    }

    /// Number of delays that actually occur.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&k| k > 0).count()
    }
}

/// All step-count vectors with `sum_d d k_d = s`, in descending lexicographic order.
pub fn enumerate_lambda(delays: &[usize], s: usize) -> Result<Vec<StepCountVector>> {
    if s > LAMBDA_CAP {
        return Err(Error::CapExceeded {
            what: "s",
            cap: LAMBDA_CAP as u64,
        });
    }
    if delays.is_empty() {
        return Err(Error::InvalidArgument("empty delay set".into()));
    }
    let mut out = Vec::new();
    let mut current = vec![0u64; delays.len()];
    fill_lambda(delays, 0, s, &mut current, &mut out);
    Ok(out)
}

fn fill_lambda(delays: &[usize], pos: usize, rest: usize, cur: &mut Vec<u64>, out: &mut Vec<StepCountVector>) {
    let d = delays[pos];
    if pos + 1 == delays.len() {
        if rest.is_multiple_of(d) {
            cur[pos] = (rest / d) as u64;
            out.push(StepCountVector {
                delays: delays.to_vec(),
                counts: cur.clone(),
            });
        }
        return;
    }
    for k in (0..=rest / d).rev() {
        cur[pos] = k as u64;
        fill_lambda(delays, pos + 1, rest - k * d, cur, out);
    }
    cur[pos] = 0;
}

/// Restriction of `enumerate_lambda` to vectors with `|k| = r`.
pub fn enumerate_lambda_r(delays: &[usize], s: usize, r: u64) -> Result<Vec<StepCountVector>> {
    Ok(enumerate_lambda(delays, s)?
        .into_iter()
        .filter(|k| k.r() == r)
        .collect())
}

/// `r! / prod_d k_d!`, exact, as a product of binomial coefficients.
pub fn multinomial_size(k: &StepCountVector) -> Result<u64> {
    multinomial(&k.counts)
}

fn multinomial(counts: &[u64]) -> Result<u64> {
    let mut acc: u128 = 1;
    let mut n: u64 = 0;
    for &c in counts {
        for i in 1..=c {
            n += 1;
            // acc * n / i stays integral: acc holds C(n-1, i-1) times earlier factors
            acc = acc
                .checked_mul(n as u128)
                .ok_or(Error::Overflow("multinomial coefficient"))?
                / i as u128;
            if acc > MULTINOMIAL_LIMIT {
                return Err(Error::Overflow("multinomial coefficient"));
            }
        }
    }
    Ok(acc as u64)
}

/// Every distinct arrangement of `k`, in lexicographic order of delay values.
pub fn enumerate_words(k: &StepCountVector) -> Result<Vec<Vec<usize>>> {
    let size = multinomial_size(k)?;
    if size > WORD_CAP {
        return Err(Error::CapExceeded {
            what: "words",
            cap: WORD_CAP,
        });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut remaining = k.counts.clone();
    let mut word = Vec::with_capacity(k.r() as usize);
    fill_words(&k.delays, &mut remaining, &mut word, &mut out);
    Ok(out)
}

fn fill_words(delays: &[usize], remaining: &mut [u64], word: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if remaining.iter().all(|&c| c == 0) {
        out.push(word.clone());
        return;
    }
    for i in 0..delays.len() {
        if remaining[i] > 0 {
            remaining[i] -= 1;
            word.push(delays[i]);
            fill_words(delays, remaining, word, out);
            word.pop();
            remaining[i] += 1;
        }
    }
}

/// True when `word` contains `kappa` consecutive equal symbols.
pub fn has_kappa_run(word: &[usize], kappa: usize) -> bool {
    if kappa == 0 {
        return true;
    }
    let mut run = 0;
    for (l, d) in word.iter().enumerate() {
        run = if l > 0 && word[l - 1] == *d { run + 1 } else { 1 };
        if run >= kappa {
            return true;
        }
    }
    false
}

/// Number of arrangements of `counts` that contain a `kappa`-run.
pub fn count_with_run(counts: &[u64], kappa: usize) -> Result<u64> {
    let total = multinomial(counts)?;
    if kappa <= 1 {
        return Ok(total);
    }
    let mut memo = HashMap::new();
    let mut rem = counts.to_vec();
    let free = count_run_free(&mut rem, None, 0, kappa, &mut memo);
    Ok(total - free as u64)
}

type RunMemo = HashMap<(Vec<u64>, Option<usize>, usize), u128>;

/// Arrangements of `rem` with no `kappa`-run, given the last symbol and its run length.
fn count_run_free(rem: &mut Vec<u64>, last: Option<usize>, run: usize, kappa: usize, memo: &mut RunMemo) -> u128 {
    if rem.iter().all(|&c| c == 0) {
        return 1;
    }
    let key = (rem.clone(), last, run);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut total = 0u128;
    for i in 0..rem.len() {
        if rem[i] == 0 {
            continue;
        }
        let next_run = if last == Some(i) { run + 1 } else { 1 };
        if next_run >= kappa {
            continue;
        }
        rem[i] -= 1;
        total += count_run_free(rem, Some(i), next_run, kappa, memo);
        rem[i] += 1;
    }
    memo.insert(key, total);
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFractionEntry {
    pub k: Vec<u64>,
    pub r: u64,
    pub total: u64,
    pub with_run: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFractionReport {
    pub s: usize,
    pub kappa: usize,
    pub delays: Vec<usize>,
    pub entries: Vec<RunFractionEntry>,
    pub min_fraction: f64,
    /// Minimum over step-count vectors using at least two distinct delays.
    pub min_mixed_fraction: Option<f64>,
}

/// `|S(k)^kappa| / |S(k)|` for every `k` in `Lambda(s)`.
pub fn run_fraction(delays: &[usize], s: usize, kappa: usize) -> Result<RunFractionReport> {
    if kappa < 2 {
        return Err(Error::InvalidArgument("kappa must exceed 1".into()));
    }
    let mut entries = Vec::new();
    for k in enumerate_lambda(delays, s)? {
        let total = multinomial_size(&k)?;
        let with_run = count_with_run(&k.counts, kappa)?;
        entries.push(RunFractionEntry {
            r: k.r(),
            fraction: with_run as f64 / total as f64,
            k: k.counts,
            total,
            with_run,
        });
    }
    let min_fraction = entries.iter().map(|e| e.fraction).fold(f64::INFINITY, f64::min);
    let min_mixed_fraction = entries
        .iter()
        .filter(|e| e.k.iter().filter(|&&c| c > 0).count() > 1)
        .map(|e| e.fraction)
        .reduce(f64::min);
    Ok(RunFractionReport {
        s,
        kappa,
        delays: delays.to_vec(),
        entries,
        min_fraction,
        min_mixed_fraction,
    })
}

/// `beta_upsilon` from `beta_0 = alpha` and `beta_l = beta_{l-1} (1 - beta_{l-1})`.
pub fn block_beta(alpha: f64, upsilon: u32) -> f64 {
    (0..upsilon).fold(alpha, |b, _| b * (1.0 - b))
}

/// Whether some delay fills at least `(1 - delta) beta_upsilon floor(r / 2^upsilon)`
/// of the aligned blocks of length `2^upsilon`.
pub fn block_run_statistic(word: &[usize], n_delays: usize, upsilon: u32, alpha: f64, delta: f64) -> Result<bool> {
    let block = 1usize
        .checked_shl(upsilon)
        .ok_or_else(|| Error::InvalidArgument("upsilon too large".into()))?;
    if word.len() <= block {
        return Err(Error::InvalidArgument(format!(
            "word length {} must exceed 2^upsilon = {block}",
            word.len()
        )));
    }
    if n_delays == 0 || !(alpha > 0.0 && alpha < 1.0 / n_delays as f64) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 1/{n_delays})"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1/2)")));
    }
    let n_blocks = word.len() / block;
    let threshold = (1.0 - delta) * block_beta(alpha, upsilon) * n_blocks as f64;
    let mut filled: HashMap<usize, usize> = HashMap::new();
    for chunk in word.chunks_exact(block).take(n_blocks) {
        if chunk.iter().all(|&d| d == chunk[0]) {
            *filled.entry(chunk[0]).or_default() += 1;
        }
    }
    Ok(filled.values().any(|&c| c as f64 >= threshold))
}

/// `(passing, total)` arrangements of `k` for `block_run_statistic`.
pub fn block_run_fraction(k: &StepCountVector, upsilon: u32, alpha: f64, delta: f64) -> Result<(u64, u64)> {
    let words = enumerate_words(k)?;
    let mut pass = 0u64;
    for w in &words {
        if block_run_statistic(w, k.delays.len(), upsilon, alpha, delta)? {
            pass += 1;
        }
    }
    Ok((pass, words.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiTerm {
    pub r: u64,
    #[serde(serialize_with = "ser_dmatrix")]
    pub value: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiEnumeration {
    pub s: usize,
    #[serde(serialize_with = "ser_dmatrix")]
    pub total: DMatrix<f64>,
    pub per_r: Vec<XiTerm>,
}

/// `Xi(s)` as an explicit sum over every path, grouped by path length:
/// `Xi(s; r) = sum_{k in Lambda(s, r)} prod_d rho_d^{k_d} sum_{w in S(k)} prod_l rho^{-1} M_{w_l}`.
pub fn xi_by_enumeration(family: &MeanMatrixFamily, s: usize) -> Result<XiEnumeration> {
    if s > XI_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            what: "s",
            cap: XI_ENUMERATION_CAP as u64,
        });
    }
    let norm = NormalizedFamily::new(family)?;
    let n = family.n_types();
    let mut by_r: Vec<(u64, DMatrix<f64>)> = Vec::new();
    for k in enumerate_lambda(family.delays(), s)? {
        let scale: f64 = norm
            .rhos()
            .iter()
            .zip(&k.counts)
            .map(|(rho, &c)| rho.powi(c as i32))
            .product();
        let mut inner = DMatrix::zeros(n, n);
        for w in enumerate_words(&k)? {
            inner += norm.word_product(&w)?;
        }
        let r = k.r();
        match by_r.iter_mut().find(|(rr, _)| *rr == r) {
            Some((_, m)) => *m += inner * scale,
            None => by_r.push((r, inner * scale)),
        }
    }
    by_r.sort_by_key(|(r, _)| *r);
    let mut total = DMatrix::zeros(n, n);
    for (_, m) in &by_r {
        total += m;
    }
    Ok(XiEnumeration {
        s,
        total,
        per_r: by_r.into_iter().map(|(r, value)| XiTerm { r, value }).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiEstimate {
    pub s: usize,
    pub n_samples: u64,
    pub seed: u64,
    #[serde(serialize_with = "ser_dmatrix")]
    pub mean: DMatrix<f64>,
    #[serde(serialize_with = "ser_dmatrix")]
    pub std_error: DMatrix<f64>,
    /// Fraction of sampled step sequences that hit `s` exactly.
    pub hit_fraction: f64,
}

/// Monte Carlo estimate of `Xi(s)` from i.i.d. steps drawn from `beta`:
/// `Xi(s) = exp(theta s) E[1(some partial sum equals s) prod_l rho_{d_l}^{-1} M_{d_l}]`.
///
/// Samples are split into fixed chunks, each with its own counter-based
/// stream, so the result depends only on `(seed, n_samples)`.
pub fn xi_by_sampling(
    family: &MeanMatrixFamily,
    mal: &MalthusianSolution,
    s: usize,
    n_samples: u64,
    seed: u64,
) -> Result<XiEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let sum = mal.beta_sum();
    if !((sum - 1.0).abs() <= 1e-8) {
        return Err(Error::BetaNotNormalized { sum });
    }
    if mal.delays != family.delays() {
        return Err(Error::InvalidArgument("solution and family delays differ".into()));
    }
    let n = family.n_types();
    if s == 0 {
        return Ok(XiEstimate {
            s,
            n_samples,
            seed,
            mean: DMatrix::identity(n, n),
            std_error: DMatrix::zeros(n, n),
            hit_fraction: 1.0,
        });
    }
    let norm = NormalizedFamily::new(family)?;
    let mats: Vec<DMatrix<f64>> = family
        .delays()
        .iter()
        .map(|&d| norm.get(d).expect("delay present").clone())
        .collect();
    let mut cumulative = Vec::with_capacity(mal.beta.len());
    let mut acc = 0.0;
    for b in &mal.beta {
        acc += b / sum;
        cumulative.push(acc);
    }
    let delays = family.delays();
    let factory = StreamFactory::new(seed);
    let n_chunks = n_samples.div_ceil(SAMPLING_CHUNK as u64);

    let partials: Vec<(DMatrix<f64>, DMatrix<f64>, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = factory.stream(c);
            let count = (n_samples - c * SAMPLING_CHUNK as u64).min(SAMPLING_CHUNK as u64);
            let mut s1 = DMatrix::zeros(n, n);
            let mut s2 = DMatrix::zeros(n, n);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut pos = 0usize;
                let mut prod = DMatrix::identity(n, n);
                while pos < s {
                    let u: f64 = rng.random();
                    let idx = cumulative.iter().position(|&c| u < c).unwrap_or(delays.len() - 1);
                    pos += delays[idx];
                    prod *= &mats[idx];
                }
                if pos == s {
                    hits += 1;
                    s2 += prod.component_mul(&prod);
                    s1 += prod;
                }
            }
            (s1, s2, hits)
        })
        .collect();

    let mut s1 = DMatrix::zeros(n, n);
    let mut s2 = DMatrix::zeros(n, n);
    let mut hits = 0u64;
    for (a, b, h) in partials {
        s1 += a;
        s2 += b;
        hits += h;
    }
    let nf = n_samples as f64;
    let scale = (mal.theta * s as f64).exp();
    let mean = &s1 / nf;
    let std_error = if n_samples > 1 {
        let var = (&s2 / nf - mean.component_mul(&mean)).map(|v| v.max(0.0)) * (nf / (nf - 1.0));
        var.map(|v| (v / nf).sqrt() * scale)
    } else {
        DMatrix::zeros(n, n)
    };
    Ok(XiEstimate {
        s,
        n_samples,
        seed,
        mean: mean * scale,
        std_error,
        hit_fraction: hits as f64 / nf,
    })
}
