//! Command-line front end for the `dmbp` binary.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
//! Every failure writes one line `error[<kind>]: <message>` to the error stream.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{fmt_g17, model_to_json, parse_config, to_json, RunConfig, RunSection};
use crate::error::Error;
use crate::generate::{polynomial_family, random_irreducible, random_shared_family, random_shared_family_reversed};
use crate::malthusian::{critical_limit_with, solve_malthusian_with, DEFAULT_CRITICAL_TOL};
use crate::model::{censored_mean_matrices, validate, Initial, LifetimeLaw, ModelSpec};
use crate::paths::{block_run_fraction, run_fraction, xi_by_sampling, RunFractionReport, XiEstimate};
use crate::recursion::{evolve_means, theorem_limits, xi_kernel};
use crate::simulate::{ensemble, simulate_replicas, DEFAULT_POP_CAP};
use crate::spectral::{shared_pf_check, weight_ratio, DEFAULT_RESIDUAL_TOL, DEFAULT_SHARING_TOL};

#[derive(Debug, Parser)]
#[command(name = "dmbp", version, about = "Delayed multi-type branching processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Model configuration (JSON)
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Write the result here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    /// Shared eigenvectors, forward construction
    Shared,
    /// Shared eigenvectors, time-reversed construction
    Reversed,
    /// Polynomials in one irreducible matrix
    Polynomial,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing model assumptions
    Validate {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Perron-Frobenius data of each censored mean matrix and the sharing check
    Spectral {
        #[command(flatten)]
        config: ConfigArg,
        /// Largest eigenvector deviation still counted as shared
        #[arg(long, default_value_t = DEFAULT_SHARING_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Malthusian parameter, step law beta and regime
    Malthusian {
        #[command(flatten)]
        config: ConfigArg,
        /// Residual tolerance of the eigen solves
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Mean trajectories of X, Z, Y as CSV
    Evolve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Closed-form limits of the weighted mean trajectories
    Limits {
        #[command(flatten)]
        config: ConfigArg,
        /// Time at which the gap to the evolved trajectories is measured
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Report the companion-matrix limit of a critical model instead
        #[arg(long)]
        critical: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Path combinatorics: run fractions, block statistics, sampled kernel
    Paths {
        /// Model configuration; only its delays are needed unless --samples is set
        #[arg(long)]
        config: Option<PathBuf>,
        /// Delay set, e.g. 1,2 (alternative to --config)
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<usize>>,
        #[arg(long)]
        s: usize,
        /// Restrict to paths of this length
        #[arg(long)]
        r: Option<u64>,
        #[arg(long, default_value_t = 2)]
        kappa: usize,
        /// Block exponent; enables the aligned block statistic
        #[arg(long)]
        upsilon: Option<u32>,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        #[arg(long, default_value_t = 0.4)]
        delta: f64,
        /// Sampled estimate of the kernel at s with this many samples
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutArg,
    },
    /// Monte Carlo ensemble: per-time means and standard errors as CSV
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Largest number of individuals per replica
        #[arg(long)]
        pop_cap: Option<u64>,
        /// Per-replica counts as CSV
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Ensemble summary (extinction frequencies, truncation) as JSON
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Random model configuration with a prescribed mean-matrix structure
    Generate {
        #[arg(long, value_enum, default_value_t = GenerateKind::Shared)]
        kind: GenerateKind,
        #[arg(long, default_value_t = 2)]
        types: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        delays: Vec<usize>,
        /// Perron-Frobenius eigenvalue per delay (shared kinds)
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        /// Holding probability added to the transition matrices (shared kinds)
        #[arg(long, default_value_t = 0.5)]
        laziness: f64,
        /// Polynomial degree (polynomial kind)
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

enum Failure {
    Usage(String),
    Io(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs one command line; `args` includes the program name.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid usage")
                .trim_start_matches("error: ");
            let _ = writeln!(stderr, "error[usage]: {line}");
            return 2;
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error[usage]: {msg}");
            2
        }
        Err(Failure::Io(msg)) => {
            let _ = writeln!(stderr, "error[io]: {msg}");
            1
        }
        Err(Failure::Domain(e)) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error[{}]: {msg}", e.kind());
            1
        }
    }
}

fn load(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn emit(out: &OutArg, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    write_target(out.out.as_deref(), text, stdout)
}

fn write_target(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn required<T>(flag: Option<T>, from_config: Option<T>, name: &str) -> CliResult<T> {
    flag.or(from_config)
        .ok_or_else(|| Failure::Usage(format!("--{name} is required (flag or run.{name} in the config)")))
}

#[derive(Serialize)]
struct SpectralReport {
    shared: bool,
    max_deviation: f64,
    weight_ratio_h: Option<f64>,
    weight_ratio_nu: Option<f64>,
    report: crate::spectral::SharedPFReport,
}

#[derive(Serialize)]
struct BlockEntry {
    k: Vec<u64>,
    r: u64,
    passing: u64,
    total: u64,
    fraction: f64,
}

#[derive(Serialize)]
struct XiSection {
    #[serde(serialize_with = "crate::config::ser_dmatrix")]
    kernel: nalgebra::DMatrix<f64>,
    estimate: XiEstimate,
}

#[derive(Serialize)]
struct PathsReport {
    runs: RunFractionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<BlockEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<XiSection>,
}

#[derive(Serialize)]
struct CriticalReport {
    #[serde(serialize_with = "crate::config::ser_dvector")]
    critical_limit: nalgebra::DVector<f64>,
}

fn run(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Validate { config, out } => {
            let cfg = load(&config.config)?;
            let report = validate(&cfg.model);
            emit(&out, &to_json(&report), stdout)?;
            if report.has_failures() {
                let names: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| c.status == crate::model::CheckStatus::Fail)
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(Failure::Domain(Error::InvalidArgument(format!(
                    "validation failed: {}",
                    names.join(", ")
                ))));
            }
            Ok(())
        }
        Command::Spectral { config, tol, out } => {
            let cfg = load(&config.config)?;
            let family = censored_mean_matrices(&cfg.model)?;
            let report = shared_pf_check(&family, tol)?;
            let rep = SpectralReport {
                shared: report.shared,
                max_deviation: report.max_deviation,
                weight_ratio_h: report.h.as_ref().map(weight_ratio),
                weight_ratio_nu: report.nu.as_ref().map(weight_ratio),
                report,
            };
            emit(&out, &to_json(&rep), stdout)
        }
        Command::Malthusian { config, tol, out } => {
            let cfg = load(&config.config)?;
            let family = censored_mean_matrices(&cfg.model)?;
            let tol = tol.or(cfg.run.tolerance).unwrap_or(DEFAULT_RESIDUAL_TOL);
            let mal = solve_malthusian_with(&family, tol, DEFAULT_CRITICAL_TOL)?;
            emit(&out, &to_json(&mal), stdout)
        }
        Command::Evolve { config, horizon, out } => {
            let cfg = load(&config.config)?;
            let horizon = required(horizon, cfg.run.horizon, "horizon")?;
            let family = censored_mean_matrices(&cfg.model)?;
            let mal = solve_malthusian_with(&family, DEFAULT_RESIDUAL_TOL, DEFAULT_CRITICAL_TOL)?;
            let t = evolve_means(&cfg.model, &family, horizon, mal.theta)?;
            let mut csv = String::from("s,type,ex,ez,ey,wx,wz,wy\n");
            for s in 0..=horizon {
                for (j, name) in cfg.model.type_names.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{s},{},{},{},{},{},{},{}",
                        csv_field(name),
                        fmt_g17(t.ex[s][j]),
                        fmt_g17(t.ez[s][j]),
                        fmt_g17(t.ey[s][j]),
                        fmt_g17(t.wx[s][j]),
                        fmt_g17(t.wz[s][j]),
                        fmt_g17(t.wy[s][j]),
                    );
                }
            }
            emit(&out, &csv, stdout)
        }
        Command::Limits {
            config,
            horizon,
            critical,
            out,
        } => {
            let cfg = load(&config.config)?;
            let family = censored_mean_matrices(&cfg.model)?;
            if critical {
                let limit = critical_limit_with(&cfg.model, &family, DEFAULT_CRITICAL_TOL)?;
                return emit(&out, &to_json(&CriticalReport { critical_limit: limit }), stdout);
            }
            let mal = solve_malthusian_with(&family, DEFAULT_RESIDUAL_TOL, DEFAULT_CRITICAL_TOL)?;
            let rep = theorem_limits(&cfg.model, &family, &mal, horizon)?;
            emit(&out, &to_json(&rep), stdout)
        }
        Command::Paths {
            config,
            delays,
            s,
            r,
            kappa,
            upsilon,
            alpha,
            delta,
            samples,
            seed,
            format,
            out,
        } => {
            let cfg = config.as_deref().map(load).transpose()?;
            let delays: Vec<usize> = match (&delays, &cfg) {
                (Some(d), None) => {
                    let mut d = d.clone();
                    d.sort_unstable();
                    crate::model::DelayFamily::new(d)?.delays().to_vec()
                }
                (None, Some(c)) => c.model.delays.delays().to_vec(),
                (Some(_), Some(_)) => return Err(Failure::Usage("give either --config or --delays".into())),
                (None, None) => return Err(Failure::Usage("--config or --delays is required".into())),
            };
            let mut runs = run_fraction(&delays, s, kappa)?;
            if let Some(r) = r {
                runs.entries.retain(|e| e.r == r);
                runs.min_fraction = runs.entries.iter().map(|e| e.fraction).fold(f64::INFINITY, f64::min);
                runs.min_mixed_fraction = runs
                    .entries
                    .iter()
                    .filter(|e| e.k.iter().filter(|&&c| c > 0).count() > 1)
                    .map(|e| e.fraction)
                    .reduce(f64::min);
            }
            let blocks = match upsilon {
                Some(u) => {
                    let mut v = Vec::new();
                    for e in &runs.entries {
                        if e.r <= 1u64 << u.min(63) {
                            continue;
                        }
                        let k = crate::paths::StepCountVector::new(&delays, e.k.clone())?;
                        let (passing, total) = block_run_fraction(&k, u, alpha, delta)?;
                        v.push(BlockEntry {
                            k: e.k.clone(),
                            r: e.r,
                            passing,
                            total,
                            fraction: passing as f64 / total as f64,
                        });
                    }
                    Some(v)
                }
                None => None,
            };
            let xi = match samples {
                Some(n) => {
                    let seed = seed.ok_or_else(|| Failure::Usage("--seed is required with --samples".into()))?;
                    let cfg = cfg
                        .as_ref()
                        .ok_or_else(|| Failure::Usage("--samples needs --config".into()))?;
                    let family = censored_mean_matrices(&cfg.model)?;
                    let mal = solve_malthusian_with(&family, DEFAULT_RESIDUAL_TOL, DEFAULT_CRITICAL_TOL)?;
                    let estimate = xi_by_sampling(&family, &mal, s, n, seed)?;
                    Some(XiSection {
                        kernel: xi_kernel(&family, s),
                        estimate,
                    })
                }
                None => None,
            };
            match format {
                Format::Json => emit(&out, &to_json(&PathsReport { runs, blocks, xi }), stdout),
                Format::Csv => {
                    let headers: Vec<String> = delays.iter().map(|d| format!("k{d}")).collect();
                    let mut csv = format!("{},r,total,with_run,fraction", headers.join(","));
                    if blocks.is_some() {
                        csv.push_str(",block_passing,block_total");
                    }
                    csv.push('\n');
                    for e in &runs.entries {
                        let ks: Vec<String> = e.k.iter().map(|c| c.to_string()).collect();
                        let _ = write!(
                            csv,
                            "{},{},{},{},{}",
                            ks.join(","),
                            e.r,
                            e.total,
                            e.with_run,
                            fmt_g17(e.fraction)
                        );
                        if let Some(b) = &blocks {
                            match b.iter().find(|b| b.k == e.k) {
                                Some(b) => {
                                    let _ = write!(csv, ",{},{}", b.passing, b.total);
                                }
                                None => csv.push_str(",,"),
                            }
                        }
                        csv.push('\n');
                    }
                    emit(&out, &csv, stdout)
                }
            }
        }
        Command::Simulate {
            config,
            horizon,
            replicas,
            seed,
            pop_cap,
            dump,
            summary,
            out,
        } => {
            let cfg = load(&config.config)?;
            let horizon = required(horizon, cfg.run.horizon, "horizon")?;
            let replicas = required(replicas, cfg.run.replicas, "replicas")?;
            let seed = required(seed, cfg.run.seed, "seed")?;
            let pop_cap = pop_cap.or(cfg.run.pop_cap).unwrap_or(DEFAULT_POP_CAP);
            let stats = ensemble(&cfg.model, horizon, replicas, seed, pop_cap)?;
            let mut csv = String::from("s,type,mean_x,se_x,mean_z,se_z,mean_y,se_y\n");
            let se = |v: &Option<Vec<Vec<f64>>>, s: usize, j: usize| {
                v.as_ref().map(|v| fmt_g17(v[s][j])).unwrap_or_default()
            };
            for s in 0..=horizon {
                for (j, name) in cfg.model.type_names.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{s},{},{},{},{},{},{},{}",
                        csv_field(name),
                        fmt_g17(stats.x.mean[s][j]),
                        se(&stats.x.std_error, s, j),
                        fmt_g17(stats.z.mean[s][j]),
                        se(&stats.z.std_error, s, j),
                        fmt_g17(stats.y.mean[s][j]),
                        se(&stats.y.std_error, s, j),
                    );
                }
            }
            if let Some(path) = dump {
                let records = simulate_replicas(&cfg.model, horizon, replicas, seed, pop_cap)?;
                let mut d = String::from("replica,seed,truncated,s,type,x,z,y\n");
                for (k, rec) in records.iter().enumerate() {
                    for s in 0..=horizon {
                        for (j, name) in cfg.model.type_names.iter().enumerate() {
                            let _ = writeln!(
                                d,
                                "{k},{},{},{s},{},{},{},{}",
                                rec.seed,
                                rec.truncated,
                                csv_field(name),
                                rec.x[s][j],
                                rec.z[s][j],
                                rec.y[s][j]
                            );
                        }
                    }
                }
                write_target(Some(&path), &d, stdout)?;
            }
            if let Some(path) = summary {
                write_target(Some(&path), &to_json(&stats), stdout)?;
            }
            emit(&out, &csv, stdout)
        }
        Command::Generate {
            kind,
            types,
            delays,
            rhos,
            laziness,
            degree,
            seed,
            out,
        } => {
            if types == 0 {
                return Err(Failure::Usage("--types must be at least 1".into()));
            }
            if !(0.0..1.0).contains(&laziness) {
                return Err(Failure::Usage("--laziness must lie in [0, 1)".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let family = match kind {
                GenerateKind::Shared | GenerateKind::Reversed => {
                    let rhos = rhos.unwrap_or_else(|| vec![1.0 / delays.len() as f64; delays.len()]);
                    if rhos.len() != delays.len() {
                        return Err(Failure::Usage("--rhos needs one value per delay".into()));
                    }
                    let pairs: Vec<(usize, f64)> = delays.iter().copied().zip(rhos).collect();
                    if kind == GenerateKind::Shared {
                        random_shared_family(types, &pairs, laziness, &mut rng)?
                    } else {
                        random_shared_family_reversed(types, &pairs, laziness, &mut rng)?
                    }
                }
                GenerateKind::Polynomial => {
                    let a = random_irreducible(types, 0.3, &mut rng);
                    polynomial_family(&a, &delays, degree, &mut rng)?
                }
            };
            let big_d = family.max_delay();
            let model = ModelSpec::poisson(
                family.delays(),
                family.matrices().to_vec(),
                LifetimeLaw::fixed(big_d),
                Initial::Type(0),
            )?;
            emit(&out, &model_to_json(&model, &RunSection::default()), stdout)
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
