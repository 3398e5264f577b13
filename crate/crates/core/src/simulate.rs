//! Individual-level Monte Carlo simulation.
//!
//! Individuals are processed in birth-time order. Each one draws its
//! lifetime, recovery flag and raw offspring counts from a stream keyed by
//! `(replica seed, creation index)`, so a replica is a pure function of its
//! seed whatever the scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Initial, ModelSpec};
use crate::rng::StreamFactory;

pub const DEFAULT_POP_CAP: u64 = 1_000_000;

/// One simulated replica; counts are indexed `[s][type]` for `s = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimulationRecord {
    pub horizon: usize,
    pub seed: u64,
    pub x: Vec<Vec<u64>>,
    pub z: Vec<Vec<u64>>,
    pub y: Vec<Vec<u64>>,
    /// First `s` with `X(s') = 0` for every `s' >= s`; `None` if births are
    /// still scheduled past the horizon or the replica was truncated.
    pub extinction_x: Option<usize>,
    /// First `s` after which no individual is ill; `None` when `extinction_x` is.
    pub extinction_z: Option<usize>,
    /// First `s` after which no asymptomatic individual is present; `None` when `extinction_x` is.
    pub extinction_y: Option<usize>,
    pub truncated: bool,
    pub individuals: u64,
    pub max_lifetime: usize,
}

fn initial_population(model: &ModelSpec) -> Result<Vec<u64>> {
    let n = model.n_types();
    match &model.initial {
        Initial::Type(i) => {
            let mut v = vec![0; n];
            v[*i] = 1;
            Ok(v)
        }
        Initial::Vector(v) => v
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
                    Ok(x as u64)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "simulation needs a nonnegative integral initial population, got {x}"
                    )))
                }
            })
            .collect(),
    }
}

/// Simulates one replica up to `horizon`, stopping once more than `pop_cap`
/// individuals have been created.
pub fn simulate_replica(model: &ModelSpec, horizon: usize, seed: u64, pop_cap: u64) -> Result<SimulationRecord> {
    if pop_cap == 0 {
        return Err(Error::InvalidArgument("pop_cap must be at least 1".into()));
    }
    model.check_structure()?;
    let n = model.n_types();
    let delays = model.delays.delays();
    let big_d = model.delays.max_delay();
    let factory = StreamFactory::new(seed);

    let mut x = vec![vec![0u64; n]; horizon + 1];
    let mut z = vec![vec![0u64; n]; horizon + 1];
    let mut y = vec![vec![0u64; n]; horizon + 1];
    // births[t][j]: individuals of type j born at t, not yet processed
    let mut births = vec![vec![0u64; n]; horizon + 1];
    births[0] = initial_population(model)?;

    let mut created: u64 = births[0].iter().sum();
    let mut truncated = created > pop_cap;
    let mut pending_beyond = false;
    let mut last_birth: Option<usize> = None;
    let mut end_z = 0usize;
    let mut end_y = 0usize;
    let mut max_lifetime = 0usize;
    let mut index: u64 = 0;

    'time: for t in 0..=horizon {
        if truncated {
            break;
        }
        for i in 0..n {
            let count = births[t][i];
            for _ in 0..count {
                let mut rng = factory.stream(index);
                index += 1;
                x[t][i] += 1;
                last_birth = Some(t);
                let (l, recovered) = model.lifetime.sample(&mut rng);
                max_lifetime = max_lifetime.max(l);
                if l > 0 {
                    end_z = end_z.max(t + l);
                    for row in z.iter_mut().take((t + l).min(horizon + 1)).skip(t) {
                        row[i] += 1;
                    }
                } else {
                    end_y = end_y.max(t + big_d + 1);
                    for row in y.iter_mut().take((t + big_d + 1).min(horizon + 1)).skip(t) {
                        row[i] += 1;
                    }
                }
                for (k, &d) in delays.iter().enumerate() {
                    let censored = l <= d && !recovered;
                    for j in 0..n {
                        let offspring = model.offspring.get(k, i, j).sample(&mut rng);
                        if censored || offspring == 0 {
                            continue;
                        }
                        if t + d > horizon {
                            pending_beyond = true;
                            continue;
                        }
                        births[t + d][j] += offspring;
                        created = created.saturating_add(offspring);
                        if created > pop_cap {
                            truncated = true;
                            break 'time;
                        }
                    }
                }
            }
        }
    }

    let extinction_x = if truncated || pending_beyond {
        None
    } else {
        Some(last_birth.map_or(0, |t| t + 1))
    };
    let (extinction_z, extinction_y) = match extinction_x {
        Some(_) => (Some(end_z), Some(end_y)),
        None => (None, None),
    };
    Ok(SimulationRecord {
        horizon,
        seed,
        x,
        z,
        y,
        extinction_x,
        extinction_z,
        extinction_y,
        truncated,
        individuals: created,
        max_lifetime,
    })
}

/// Seed of replica `r` under master seed `seed`.
pub fn replica_seed(seed: u64, r: u64) -> u64 {
    StreamFactory::new(seed).child_seed(r)
}

/// All replicas, in replica order.
pub fn simulate_replicas(
    model: &ModelSpec,
    horizon: usize,
    replicas: u64,
    seed: u64,
    pop_cap: u64,
) -> Result<Vec<SimulationRecord>> {
    let master = StreamFactory::new(seed);
    (0..replicas)
        .into_par_iter()
        .map(|r| simulate_replica(model, horizon, master.child_seed(r), pop_cap))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionViolation {
    pub replica: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionReport {
    pub replicas: usize,
    pub checked: usize,
    pub violations: Vec<ExtinctionViolation>,
}

fn record_violations(rec: &SimulationRecord, max_delay: usize) -> Vec<String> {
    let mut out = Vec::new();
    let created: u64 = rec.x.iter().flatten().sum();
    if !rec.truncated && created != rec.individuals {
        out.push(format!(
            "sum of X is {created} but {} individuals were created",
            rec.individuals
        ));
    }
    let Some(tx) = rec.extinction_x else {
        return out;
    };
    let ty = rec.extinction_y.unwrap_or(usize::MAX);
    let tz = rec.extinction_z.unwrap_or(usize::MAX);
    if ty > tx + max_delay {
        out.push(format!("T^Y = {ty} exceeds T^X + D = {}", tx + max_delay));
    }
    if tz > 0 && tz + 1 > tx + rec.max_lifetime {
        out.push(format!(
            "T^Z = {tz} outlives the last birth by more than the longest lifetime"
        ));
    }
    for (name, series, t_end) in [("X", &rec.x, tx), ("Z", &rec.z, tz), ("Y", &rec.y, ty)] {
        if let Some(s) = (t_end..=rec.horizon).find(|&s| series[s].iter().any(|&c| c > 0)) {
            out.push(format!("{name}({s}) is positive after its extinction time {t_end}"));
        }
    }
    out
}

/// Checks the pathwise orderings between the extinction times of X, Y and Z.
pub fn extinction_consistency(records: &[SimulationRecord], max_delay: usize) -> ExtinctionReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for (r, rec) in records.iter().enumerate() {
        if rec.extinction_x.is_some() {
            checked += 1;
        }
        for message in record_violations(rec, max_delay) {
            violations.push(ExtinctionViolation {
                replica: r,
                seed: rec.seed,
                message,
            });
        }
    }
    ExtinctionReport {
        replicas: records.len(),
        checked,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    /// `mean[s][j]`
    pub mean: Vec<Vec<f64>>,
    /// `None` with a single usable replica.
    pub std_error: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub horizon: usize,
    pub seed: u64,
    pub replicas: u64,
    pub used: u64,
    pub truncated: u64,
    pub x: SeriesStats,
    pub z: SeriesStats,
    pub y: SeriesStats,
    /// Fractions of usable replicas extinct by the horizon.
    pub extinct_x: f64,
    pub extinct_z: f64,
    pub extinct_y: f64,
    pub consistency_violations: u64,
}

#[derive(Clone)]
struct Accumulator {
    sum: [Vec<u128>; 3],
    sq: [Vec<u128>; 3],
    used: u64,
    truncated: u64,
    extinct: [u64; 3],
    violations: u64,
}

impl Accumulator {
    fn new(cells: usize) -> Self {
        let zero = vec![0u128; cells];
        Self {
            sum: [zero.clone(), zero.clone(), zero.clone()],
            sq: [zero.clone(), zero.clone(), zero],
            used: 0,
            truncated: 0,
            extinct: [0; 3],
            violations: 0,
        }
    }

    fn add(mut self, rec: &SimulationRecord, max_delay: usize) -> Self {
        self.violations += record_violations(rec, max_delay).len() as u64;
        if rec.truncated {
            self.truncated += 1;
            return self;
        }
        self.used += 1;
        for (k, series) in [&rec.x, &rec.z, &rec.y].into_iter().enumerate() {
            for (c, &v) in series.iter().flatten().enumerate() {
                self.sum[k][c] += v as u128;
                self.sq[k][c] += (v as u128) * (v as u128);
            }
        }
        let by_horizon = |t: Option<usize>| t.is_some_and(|t| t <= rec.horizon);
        for (k, t) in [rec.extinction_x, rec.extinction_z, rec.extinction_y]
            .into_iter()
            .enumerate()
        {
            if by_horizon(t) {
                self.extinct[k] += 1;
            }
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for k in 0..3 {
            for (a, b) in self.sum[k].iter_mut().zip(&other.sum[k]) {
                *a += b;
            }
            for (a, b) in self.sq[k].iter_mut().zip(&other.sq[k]) {
                *a += b;
            }
            self.extinct[k] += other.extinct[k];
        }
        self.used += other.used;
        self.truncated += other.truncated;
        self.violations += other.violations;
        self
    }
}

fn series_stats(sum: &[u128], sq: &[u128], used: u64, n_types: usize) -> SeriesStats {
    let nf = used as f64;
    let mean: Vec<Vec<f64>> = sum
        .chunks(n_types)
        .map(|row| row.iter().map(|&s| s as f64 / nf).collect())
        .collect();
    let std_error = (used > 1).then(|| {
        sum.iter()
            .zip(sq)
            .map(|(&s1, &s2)| {
                let n = used as u128;
                // n * sum(x^2) - (sum x)^2 is exact and nonnegative
                let num = n * s2 - s1 * s1;
                (num as f64 / (nf * (nf - 1.0)) / nf).sqrt()
            })
            .collect::<Vec<f64>>()
            .chunks(n_types)
            .map(|c| c.to_vec())
            .collect()
    });
    SeriesStats { mean, std_error }
}

/// Sample means and standard errors over `replicas` independent replicas.
///
/// Aggregation uses exact integer sums, so the result does not depend on
/// the number of worker threads.
pub fn ensemble(model: &ModelSpec, horizon: usize, replicas: u64, seed: u64, pop_cap: u64) -> Result<EnsembleStats> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    let n = model.n_types();
    let cells = (horizon + 1) * n;
    let max_delay = model.delays.max_delay();
    let master = StreamFactory::new(seed);
    let acc = (0..replicas)
        .into_par_iter()
        .map(|r| simulate_replica(model, horizon, master.child_seed(r), pop_cap))
        .try_fold(
            || Accumulator::new(cells),
            |acc, rec| rec.map(|rec| acc.add(&rec, max_delay)),
        )
        .try_reduce(|| Accumulator::new(cells), |a, b| Ok(a.merge(b)))?;
    if acc.used == 0 {
        return Err(Error::AllTruncated);
    }
    let frac = |k: usize| acc.extinct[k] as f64 / acc.used as f64;
    Ok(EnsembleStats {
        horizon,
        seed,
        replicas,
        used: acc.used,
        truncated: acc.truncated,
        x: series_stats(&acc.sum[0], &acc.sq[0], acc.used, n),
        z: series_stats(&acc.sum[1], &acc.sq[1], acc.used, n),
        y: series_stats(&acc.sum[2], &acc.sq[2], acc.used, n),
        extinct_x: frac(0),
        extinct_z: frac(1),
        extinct_y: frac(2),
        consistency_violations: acc.violations,
    })
}
