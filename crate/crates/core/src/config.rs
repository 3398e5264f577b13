//! JSON model configuration and numeric output helpers.
//!
//! A configuration looks like
//!
//! ```json
//! {
//!   "types": ["a"],
//!   "delays": [1, 2],
//!   "offspring": {"kind": "poisson", "means": [[[1.0]], [[1.0]]]},
//!   "lifetime": {"pmf": {"3": 1.0}, "tail_ratio": null, "death_prob": 0.0},
//!   "initial": 0
//! }
//! ```
//!
//! `offspring.means[k]` (or `offspring.pmf[k]`) belongs to `delays[k]`.
//! `offspring.pmf[k][i][j]` is the law of the number of type-`j` children of
//! a type-`i` parent at that delay. `lifetime.pmf` is a list indexed by `l`
//! or an object keyed by `l`; `tail_ratio` (default none) adds a geometric
//! tail beyond the last listed atom; `death_prob` (default 0) is a scalar or
//! a list indexed by `l`. `initial` is a type index or a vector `E[X(0)]`.
//! An optional `run` object holds default command parameters.

use std::collections::BTreeMap;
use std::io;

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::model::{DeathProb, DelayFamily, Initial, LifetimeLaw, ModelSpec, OffspringLaw, RawLaw};

/// Largest accepted delay; the companion system has `D * n` types.
pub const MAX_DELAY: usize = 4096;
/// Largest accepted finite lifetime atom.
pub const MAX_LIFETIME: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub types: Vec<String>,
    pub delays: Vec<usize>,
    pub offspring: OffspringSection,
    pub lifetime: LifetimeSection,
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "RunSection::is_empty")]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffspringKind {
    Poisson,
    Pmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringSection {
    pub kind: OffspringKind,
    /// `[delay][parent][child]` means, for `kind = "poisson"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<Vec<f64>>>>,
    /// `[delay][parent][child][count]` probabilities, for `kind = "pmf"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PmfSection {
    List(Vec<f64>),
    Map(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeathSection {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeSection {
    pub pmf: PmfSection,
    #[serde(default)]
    pub tail_ratio: Option<f64>,
    #[serde(default = "zero_death")]
    pub death_prob: DeathSection,
}

fn zero_death() -> DeathSection {
    DeathSection::Scalar(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSection {
    Index(usize),
    Vector(Vec<f64>),
}

/// Default command parameters; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pop_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl RunSection {
    pub fn is_empty(&self) -> bool {
        self == &RunSection::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub run: RunSection,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and checks a configuration. Errors carry the offending field path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        schema(if path == "." { "$".to_string() } else { path }, format!("{inner}"))
    })?;
    de.end().map_err(|e| schema("$", e.to_string()))?;
    build_model(file)
}

fn check_entries(values: &[f64], path: &str) -> Result<()> {
    for (k, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(schema(format!("{path}[{k}]"), "value must be finite"));
        }
        if *v < 0.0 {
            return Err(Error::NegativeEntry {
                path: format!("{path}[{k}]"),
            });
        }
    }
    Ok(())
}

fn check_square<T>(m: &[Vec<T>], n: usize, path: &str) -> Result<()> {
    if m.len() != n {
        return Err(schema(path, format!("expected {n} rows, found {}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(schema(
                format!("{path}[{i}]"),
                format!("expected {n} entries, found {}", row.len()),
            ));
        }
    }
    Ok(())
}

fn build_model(file: ConfigFile) -> Result<RunConfig> {
    let n = file.types.len();
    if n == 0 {
        return Err(schema("types", "at least one type is required"));
    }
    for (i, name) in file.types.iter().enumerate() {
        if file.types[..i].contains(name) {
            return Err(schema(format!("types[{i}]"), format!("duplicate type name {name:?}")));
        }
    }
    if file.delays.is_empty() {
        return Err(schema("delays", "at least one delay is required"));
    }
    if let Some(k) = file.delays.iter().position(|&d| d == 0) {
        return Err(schema(format!("delays[{k}]"), "delays must be positive"));
    }
    if let Some(k) = file.delays.iter().position(|&d| d > MAX_DELAY) {
        return Err(schema(
            format!("delays[{k}]"),
            format!("delays above {MAX_DELAY} are not supported"),
        ));
    }
    for (k, d) in file.delays.iter().enumerate() {
        if file.delays[..k].contains(d) {
            return Err(Error::DuplicateDelay(*d));
        }
    }

    // per-delay laws, still in file order
    let n_delays = file.delays.len();
    let laws: Vec<Vec<Vec<RawLaw>>> = match file.offspring.kind {
        OffspringKind::Poisson => {
            if file.offspring.pmf.is_some() {
                return Err(schema("offspring.pmf", "not allowed with kind \"poisson\""));
            }
            let means = file
                .offspring
                .means
                .ok_or_else(|| schema("offspring.means", "missing field"))?;
            if means.len() != n_delays {
                return Err(schema(
                    "offspring.means",
                    format!("expected one matrix per delay ({n_delays}), found {}", means.len()),
                ));
            }
            let mut out = Vec::with_capacity(n_delays);
            for (k, m) in means.iter().enumerate() {
                let path = format!("offspring.means[{k}]");
                check_square(m, n, &path)?;
                for (i, row) in m.iter().enumerate() {
                    check_entries(row, &format!("{path}[{i}]"))?;
                }
                out.push(
                    m.iter()
                        .map(|row| row.iter().map(|&v| RawLaw::Poisson(v)).collect())
                        .collect(),
                );
            }
            out
        }
        OffspringKind::Pmf => {
            if file.offspring.means.is_some() {
                return Err(schema("offspring.means", "not allowed with kind \"pmf\""));
            }
            let pmf = file
                .offspring
                .pmf
                .ok_or_else(|| schema("offspring.pmf", "missing field"))?;
            if pmf.len() != n_delays {
                return Err(schema(
                    "offspring.pmf",
                    format!("expected one entry per delay ({n_delays}), found {}", pmf.len()),
                ));
            }
            let mut out = Vec::with_capacity(n_delays);
            for (k, m) in pmf.iter().enumerate() {
                let path = format!("offspring.pmf[{k}]");
                check_square(m, n, &path)?;
                let mut per: Vec<Vec<RawLaw>> = Vec::with_capacity(n);
                for (i, row) in m.iter().enumerate() {
                    let mut laws = Vec::with_capacity(n);
                    for (j, p) in row.iter().enumerate() {
                        let cell = format!("{path}[{i}][{j}]");
                        check_entries(p, &cell)?;
                        let mass: f64 = p.iter().sum();
                        if p.is_empty() || (mass - 1.0).abs() > 1e-12 {
                            return Err(schema(cell, format!("probabilities sum to {mass}, expected 1")));
                        }
                        laws.push(RawLaw::Pmf(p.clone()));
                    }
                    per.push(laws);
                }
                out.push(per);
            }
            out
        }
    };

    let pmf = match &file.lifetime.pmf {
        PmfSection::List(v) => v.clone(),
        PmfSection::Map(m) => {
            let mut atoms = Vec::with_capacity(m.len());
            for (key, &p) in m {
                let l: usize = key
                    .trim()
                    .parse()
                    .map_err(|_| schema(format!("lifetime.pmf.{key}"), "keys must be nonnegative integers"))?;
                if l > MAX_LIFETIME {
                    return Err(schema(
                        format!("lifetime.pmf.{key}"),
                        format!("lifetimes above {MAX_LIFETIME} are not supported"),
                    ));
                }
                atoms.push((l, p));
            }
            let len = atoms.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
            let mut v = vec![0.0; len];
            for (l, p) in atoms {
                if v[l] != 0.0 {
                    return Err(schema(format!("lifetime.pmf.{l}"), "lifetime listed twice"));
                }
                v[l] = p;
            }
            v
        }
    };
    if pmf.is_empty() {
        return Err(schema("lifetime.pmf", "empty"));
    }
    check_entries(&pmf, "lifetime.pmf")?;
    let tail_ratio = file.lifetime.tail_ratio;
    if let Some(q) = tail_ratio {
        if !(0.0..1.0).contains(&q) {
            return Err(schema("lifetime.tail_ratio", format!("{q} outside [0, 1)")));
        }
    }
    let death = match &file.lifetime.death_prob {
        DeathSection::Scalar(q) => {
            if !(0.0..=1.0).contains(q) {
                return Err(schema("lifetime.death_prob", format!("{q} outside [0, 1]")));
            }
            DeathProb::Constant(*q)
        }
        DeathSection::List(v) => {
            if v.is_empty() {
                return Err(schema("lifetime.death_prob", "empty"));
            }
            if let Some(k) = v.iter().position(|q| !(0.0..=1.0).contains(q)) {
                return Err(schema(
                    format!("lifetime.death_prob[{k}]"),
                    format!("{} outside [0, 1]", v[k]),
                ));
            }
            if v[0] != 0.0 {
                return Err(schema("lifetime.death_prob[0]", "L = 0 always recovers, must be 0"));
            }
            DeathProb::ByAge(v.clone())
        }
    };
    let lifetime = LifetimeLaw::new(pmf, tail_ratio, death).map_err(|e| match e {
        Error::InvalidArgument(msg) => schema("lifetime", msg),
        other => other,
    })?;

    let initial = match file.initial {
        InitialSection::Index(i) => {
            if i >= n {
                return Err(schema("initial", format!("type index {i} out of range for {n} types")));
            }
            Initial::Type(i)
        }
        InitialSection::Vector(v) => {
            if v.len() != n {
                return Err(schema("initial", format!("expected {n} entries, found {}", v.len())));
            }
            check_entries(&v, "initial")?;
            Initial::Vector(v)
        }
    };

    // store delays ascending, laws alongside
    let mut order: Vec<usize> = (0..n_delays).collect();
    order.sort_by_key(|&k| file.delays[k]);
    let mut laws: Vec<Option<Vec<Vec<RawLaw>>>> = laws.into_iter().map(Some).collect();
    let sorted_laws: Vec<Vec<Vec<RawLaw>>> = order
        .iter()
        .map(|&k| laws[k].take().expect("each index once"))
        .collect();
    let delays = DelayFamily::new(file.delays.clone())?;

    let model = ModelSpec {
        type_names: file.types,
        delays,
        offspring: OffspringLaw { laws: sorted_laws },
        lifetime,
        initial,
    };
    model.check_structure()?;
    Ok(RunConfig { model, run: file.run })
}

/// Configuration file describing `model`; delays are written in ascending order.
pub fn model_to_config(model: &ModelSpec, run: &RunSection) -> ConfigFile {
    let laws = &model.offspring.laws;
    let all_poisson = laws.iter().flatten().flatten().all(|l| matches!(l, RawLaw::Poisson(_)));
    let offspring = if all_poisson {
        OffspringSection {
            kind: OffspringKind::Poisson,
            means: Some(
                laws.iter()
                    .map(|m| m.iter().map(|row| row.iter().map(RawLaw::mean).collect()).collect())
                    .collect(),
            ),
            pmf: None,
        }
    } else {
        OffspringSection {
            kind: OffspringKind::Pmf,
            means: None,
            pmf: Some(
                laws.iter()
                    .map(|m| m.iter().map(|row| row.iter().map(pmf_of).collect()).collect())
                    .collect(),
            ),
        }
    };
    ConfigFile {
        types: model.type_names.clone(),
        delays: model.delays.delays().to_vec(),
        offspring,
        lifetime: LifetimeSection {
            pmf: PmfSection::List(model.lifetime.pmf.clone()),
            tail_ratio: model.lifetime.tail_ratio,
            death_prob: match &model.lifetime.death {
                DeathProb::Constant(q) => DeathSection::Scalar(*q),
                DeathProb::ByAge(v) => DeathSection::List(v.clone()),
            },
        },
        initial: match &model.initial {
            Initial::Type(i) => InitialSection::Index(*i),
            Initial::Vector(v) => InitialSection::Vector(v.clone()),
        },
        run: run.clone(),
    }
}

/// Poisson laws have no finite pmf; a mixed model writes them out to the
/// point where the remaining mass is below `1e-17`.
fn pmf_of(law: &RawLaw) -> Vec<f64> {
    match law {
        RawLaw::Pmf(p) => p.clone(),
        RawLaw::Poisson(lambda) => {
            let mut out = Vec::new();
            let mut term = (-lambda).exp();
            let mut acc = 0.0;
            let mut k = 0u32;
            while 1.0 - acc > 1e-17 && k < 10_000 {
                out.push(term);
                acc += term;
                k += 1;
                term *= lambda / k as f64;
            }
            out
        }
    }
}

/// Serializes a model back to configuration JSON.
pub fn model_to_json(model: &ModelSpec, run: &RunSection) -> String {
    to_json(&model_to_config(model, run))
}

/// `%.17g` rendering of a double: 17 significant digits, trailing zeros
/// removed, exponent form outside `[1e-4, 1e17)`.
pub fn fmt_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON formatter writing every float with [`fmt_g17`].
#[derive(Default)]
pub struct G17Formatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let s = fmt_g17(value);
        // keep floats recognizable as floats when they happen to be integral
        if s.contains(['.', 'e']) {
            writer.write_all(s.as_bytes())
        } else {
            writer.write_all(s.as_bytes())?;
            writer.write_all(b".0")
        }
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter::default());
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn ser_dvector<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn ser_opt_dvector<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_dvector(v, s),
        None => s.serialize_none(),
    }
}

pub fn ser_dvectors<S: Serializer>(vs: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for v in vs {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

/// Row-major nested arrays.
pub fn ser_dmatrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::censored_mean_matrices;

    pub const FIB: &str = r#"{
        "types": ["a"],
        "delays": [1, 2],
        "offspring": {"kind": "poisson", "means": [[[1.0]], [[1.0]]]},
        "lifetime": {"pmf": {"3": 1.0}},
        "initial": 0
    }"#;

    #[test]
    fn fibonacci_config() {
        let cfg = parse_config(FIB).unwrap();
        assert_eq!(cfg.model.delays.delays(), &[1, 2]);
        assert_eq!(cfg.model.lifetime.pmf, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(cfg.model.initial, Initial::Type(0));
        let fam = censored_mean_matrices(&cfg.model).unwrap();
        assert_eq!(fam.get(2).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn duplicate_delay() {
        let text = FIB.replace("[1, 2]", "[2, 2]");
        assert_eq!(parse_config(&text), Err(Error::DuplicateDelay(2)));
    }

    #[test]
    fn short_lifetime_mass() {
        let text = FIB.replace(r#"{"3": 1.0}"#, r#"[0.3, 0.5]"#);
        assert!(matches!(parse_config(&text), Err(Error::Schema { path, .. }) if path == "lifetime"));
    }

    #[test]
    fn unknown_field_has_path() {
        let text = FIB.replace(r#""kind": "poisson""#, r#""kind": "poisson", "extra": 1"#);
        match parse_config(&text) {
            Err(Error::Schema { path, message }) => {
                assert_eq!(path, "offspring.extra");
                assert!(message.contains("extra") && message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_entry() {
        let text = FIB.replace("[[[1.0]], [[1.0]]]", "[[[1.0]], [[-1.0]]]");
        assert_eq!(
            parse_config(&text),
            Err(Error::NegativeEntry {
                path: "offspring.means[1][0][0]".into()
            })
        );
    }

    #[test]
    fn delays_sorted_with_laws() {
        let text = r#"{
            "types": ["a", "b"],
            "delays": [3, 1],
            "offspring": {"kind": "poisson", "means": [[[0.1, 0.2], [0.3, 0.4]], [[0.5, 0.6], [0.7, 0.8]]]},
            "lifetime": {"pmf": [0.0, 0.5, 0.5], "tail_ratio": 0.5, "death_prob": [0, 0.1, 0.2]},
            "initial": [1, 1]
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.model.delays.delays(), &[1, 3]);
        assert_eq!(cfg.model.offspring.get(0, 0, 0), &RawLaw::Poisson(0.5));
        let again = parse_config(&model_to_json(&cfg.model, &cfg.run)).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn round_trip_bits() {
        let text = FIB.replace("[[[1.0]], [[1.0]]]", "[[[0.1]], [[0.30000000000000004]]]");
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&model_to_json(&cfg.model, &cfg.run)).unwrap();
        let a = censored_mean_matrices(&cfg.model).unwrap();
        let b = censored_mean_matrices(&again.model).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            assert_eq!(x[(0, 0)].to_bits(), y[(0, 0)].to_bits());
        }
    }

    #[test]
    fn g17() {
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(1e300), "1.0000000000000001e+300");
        assert_eq!(fmt_g17(-2.5e-7), "-2.4999999999999999e-07");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(0.0), "0");
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -7.0, 0.481_211_825_059_603_4] {
            assert_eq!(fmt_g17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(matches!(parse_config(&format!("{FIB} x")), Err(Error::Schema { .. })));
    }
}
