//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use sha2::{Digest, Sha256};

pub const MODES: &[&str] = &[
    "ml",
    "sl",
    "fe_convergence",
    "qmc_convergence",
    "truncation",
    "compare_ml_sl",
    "check_orthogonality",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Float,
    OptFloat,
    Int,
    OptInt,
    Str,
    OptStr,
    Choice(&'static [&'static str]),
    FloatList,
    IntList,
}

struct Key {
    name: &'static str,
    kind: Kind,
    default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>) -> Key {
    Key { name, kind, default }
}

const NONE: &str = "none";

static SCHEMA: &[Key] = &[
    key("run.mode", Kind::Choice(MODES), None),
    key("run.epsilon", Kind::OptFloat, Some(NONE)),
    key("run.L", Kind::OptInt, Some(NONE)),
    key("run.seed", Kind::Int, Some("1")),
    key("output.dir", Kind::Str, Some("output")),
    key("field.family", Kind::Choice(&["sine", "haar"]), Some("sine")),
    key("field.c", Kind::Float, Some("0.2")),
    key("field.theta", Kind::Float, Some("2")),
    key("field.length", Kind::Float, Some("1")),
    key("field.mean", Kind::Float, Some("1")),
    key("field.a_min", Kind::OptFloat, Some(NONE)),
    key("field.a_max", Kind::OptFloat, Some(NONE)),
    key("field.kappa", Kind::Float, Some("1")),
    key("field.p", Kind::Float, Some("0.6")),
    key("field.q", Kind::Float, Some("1")),
    key("field.B", Kind::OptFloat, Some(NONE)),
    key("field.C_t", Kind::Float, Some("1")),
    key("field.s", Kind::Int, Some("8")),
    key("wavelet.a", Kind::Int, Some("2")),
    key("wavelet.c", Kind::Float, Some("0.3")),
    key("wavelet.theta", Kind::Float, Some("1")),
    key("wavelet.max_level", Kind::Int, Some("12")),
    key("wavelet.k", Kind::Int, Some("1")),
    key("fem.dim", Kind::Int, Some("1")),
    key("fem.h0", Kind::OptFloat, Some(NONE)),
    key("fem.L", Kind::Int, Some("6")),
    key("fem.L_min", Kind::Int, Some("1")),
    key("fem.ref_level", Kind::Int, Some("9")),
    key("fem.y", Kind::Float, Some("0")),
    key("fem.quad_degree", Kind::Int, Some("6")),
    key("fem.solver_tol", Kind::Float, Some("1e-12")),
    key("fem.f", Kind::Float, Some("1")),
    key("fem.g", Kind::Float, Some("1")),
    key("fem.nodal_dump", Kind::OptStr, Some(NONE)),
    key("qmc.delta", Kind::Float, Some("0.1")),
    key("qmc.lambda_override", Kind::OptFloat, Some(NONE)),
    key("qmc.seed", Kind::Int, Some("1")),
    key("qmc.N", Kind::Int, Some("1021")),
    key("qmc.m", Kind::Int, Some("16")),
    key("qmc.n_list", Kind::IntList, Some("127,257,509,1021,2039")),
    key("qmc.ref_N", Kind::Int, Some("65537")),
    key("qmc.ref_m", Kind::Int, Some("8")),
    key("mlqmc.scenario", Kind::Int, Some("1")),
    key("mlqmc.tau", Kind::Float, Some("2")),
    key("mlqmc.m_star", Kind::Int, Some("16")),
    key("mlqmc.n0_scale", Kind::Float, Some("1")),
    key("mlqmc.cap_s", Kind::Int, Some("4096")),
    key("mlqmc.cap_n", Kind::Int, Some("1048576")),
    key("mlqmc.cap_l", Kind::Int, Some("12")),
    key("mlqmc.epsilons", Kind::FloatList, Some("2^-4,2^-6,2^-8")),
    key("truncation.s_list", Kind::IntList, Some("4,8,16,32")),
    key("truncation.s_ref", Kind::Int, Some("128")),
    key("truncation.samples", Kind::Int, Some("64")),
    key("truncation.N", Kind::Int, Some("2039")),
];

/// Parses a real, accepting `b^e` powers such as `2^-6`.
pub fn parse_real(text: &str) -> Option<f64> {
    let text = text.trim();
    let value = match text.split_once('^') {
        Some((b, e)) => b.trim().parse::<f64>().ok()?.powf(e.trim().parse::<f64>().ok()?),
        None => text.parse::<f64>().ok()?,
    };
    value.is_finite().then_some(value)
}

fn check_value(kind: Kind, value: &str) -> Result<(), String> {
    let is_none = value == NONE;
    let real = |v: &str| parse_real(v).map(|_| ()).ok_or_else(|| format!("`{v}` is not a number"));
    let int = |v: &str| {
        v.trim()
            .parse::<u64>()
            .map(|_| ())
            .map_err(|_| format!("`{v}` is not a nonnegative integer"))
    };
    match kind {
        Kind::Float => real(value),
        Kind::OptFloat if is_none => Ok(()),
        Kind::OptFloat => real(value),
        Kind::Int => int(value),
        Kind::OptInt if is_none => Ok(()),
        Kind::OptInt => int(value),
        Kind::Str | Kind::OptStr if value.is_empty() => Err("empty value".into()),
        Kind::Str | Kind::OptStr => Ok(()),
        Kind::Choice(options) if options.contains(&value) => Ok(()),
        Kind::Choice(options) => Err(format!("`{value}` is not one of {}", options.join(", "))),
        Kind::FloatList => value.split(',').try_for_each(real),
        Kind::IntList => value.split(',').try_for_each(int),
    }
}

/// Resolved configuration: every schema key with its explicit or default value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<&'static str, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut given: BTreeMap<&'static str, (String, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {line_no}: expected `key = value`, found `{line}`");
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(spec) = SCHEMA.iter().find(|s| s.name == k) else {
                bail!("line {line_no}: unknown key `{k}`");
            };
            if let Err(reason) = check_value(spec.kind, v) {
                bail!("line {line_no}: invalid value for `{k}`: {reason}");
            }
            if let Some((_, first)) = given.get(spec.name) {
                bail!("line {line_no}: duplicate key `{k}` (first set on line {first})");
            }
            given.insert(spec.name, (v.to_string(), line_no));
        }
        let mut values = BTreeMap::new();
        for spec in SCHEMA {
            let value = match (given.remove(spec.name), spec.default) {
                (Some((v, _)), _) => v,
                (None, Some(d)) => d.to_string(),
                (None, None) => bail!("missing required key `{}`", spec.name),
            };
            values.insert(spec.name, value);
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a configuration key"))
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| *v != NONE)
    }

    pub fn real(&self, key: &str) -> f64 {
        parse_real(self.raw(key)).expect("validated at parse time")
    }

    pub fn opt_real(&self, key: &str) -> Option<f64> {
        self.opt_str(key).map(|v| parse_real(v).expect("validated at parse time"))
    }

    pub fn int(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated at parse time")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated at parse time")
    }

    pub fn opt_int(&self, key: &str) -> Option<usize> {
        self.opt_str(key).map(|v| v.parse().expect("validated at parse time"))
    }

    pub fn real_list(&self, key: &str) -> Vec<f64> {
        self.raw(key).split(',').filter_map(parse_real).collect()
    }

    pub fn int_list(&self, key: &str) -> Vec<usize> {
        self.raw(key).split(',').filter_map(|v| v.trim().parse().ok()).collect()
    }

    /// Sets a key, validating the value.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let Some(spec) = SCHEMA.iter().find(|s| s.name == key) else {
            bail!("unknown key `{key}`");
        };
        check_value(spec.kind, value).map_err(|r| anyhow::anyhow!("invalid value for `{key}`: {r}"))?;
        self.values.insert(spec.name, value.to_string());
        Ok(())
    }

    /// Canonical text: one `key = value` line per key in sorted order.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the resolved text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved_text().as_bytes()))
    }
}
