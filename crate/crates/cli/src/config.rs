//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file and `--set` overrides may change
//! any of them. Unknown keys are rejected. The canonical serialization
//! (sorted keys, one `key = value` per line) is what gets hashed and echoed
//! into the output directory.

use std::fmt::Write as _;

use kirchhoff_core::lattice::{LatticeDomain, Potential, DEFAULT_MAX_VERTICES};
use kirchhoff_core::solver::InitialGuess;
use kirchhoff_core::{Kernel, ModelParams, Problem};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` is set twice in the config file")]
    Duplicate { key: String },
    #[error("key `{key}`: cannot parse `{value}` ({reason})")]
    Value { key: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which subcommand a config is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Ground,
    SignChanging,
    Verify,
    KernelSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub l: i64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub c_w: f64,
    pub h0: f64,
    pub kappa: f64,
    pub alpha: f64,
    /// `None` is the origin.
    pub x0: Option<Vec<i64>>,
    pub tol_solve: f64,
    pub tol_nehari: f64,
    pub max_iters: usize,
    pub init_width: f64,
    pub init_center: Option<Vec<i64>>,
    pub dipole_plus: Option<Vec<i64>>,
    pub dipole_minus: Option<Vec<i64>>,
    pub seed: u64,
    pub max_vertices: usize,
    pub parallel: bool,
    pub compensated: bool,
    pub kernel_sum_max_radius: u64,
    /// Test hook: breaks `w(z) = w(-z)` by this relative amount.
    pub corrupt_kernel_symmetry: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelParams::default();
        RunConfig {
            d: 2,
            l: 8,
            a: m.a,
            b: m.b,
            p: m.p,
            q: m.q,
            s: m.s,
            c_w: 1.0,
            h0: 1.0,
            kappa: 1.0,
            alpha: 1.0,
            x0: None,
            tol_solve: 1e-6,
            tol_nehari: 1e-10,
            max_iters: 50_000,
            init_width: 2.0,
            init_center: None,
            dipole_plus: None,
            dipole_minus: None,
            seed: 0,
            max_vertices: DEFAULT_MAX_VERTICES,
            parallel: true,
            compensated: false,
            kernel_sum_max_radius: 16_384,
            corrupt_kernel_symmetry: 0.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "L",
    "a",
    "alpha",
    "b",
    "c_w",
    "compensated",
    "corrupt_kernel_symmetry",
    "d",
    "dipole_minus",
    "dipole_plus",
    "h0",
    "init_center",
    "init_width",
    "kappa",
    "kernel_sum_max_radius",
    "max_iters",
    "max_vertices",
    "p",
    "parallel",
    "q",
    "s",
    "seed",
    "tol_nehari",
    "tol_solve",
    "x0",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_point(key: &str, value: &str, auto: &str) -> Result<Option<Vec<i64>>, ConfigError> {
    if value == auto {
        return Ok(None);
    }
    value
        .split(',')
        .map(|c| parse::<i64>(key, c.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn show_point(p: &Option<Vec<i64>>, auto: &str) -> String {
    match p {
        None => auto.to_string(),
        Some(v) => v.iter().map(i64::to_string).collect::<Vec<_>>().join(","),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "d" => self.d = parse(key, v)?,
            "L" => self.l = parse(key, v)?,
            "a" => self.a = parse(key, v)?,
            "b" => self.b = parse(key, v)?,
            "p" => self.p = parse(key, v)?,
            "q" => self.q = parse(key, v)?,
            "s" => self.s = parse(key, v)?,
            "c_w" => self.c_w = parse(key, v)?,
            "h0" => self.h0 = parse(key, v)?,
            "kappa" => self.kappa = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "x0" => self.x0 = parse_point(key, v, "origin")?,
            "tol_solve" => self.tol_solve = parse(key, v)?,
            "tol_nehari" => self.tol_nehari = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "init_width" => self.init_width = parse(key, v)?,
            "init_center" => self.init_center = parse_point(key, v, "origin")?,
            "dipole_plus" => self.dipole_plus = parse_point(key, v, "auto")?,
            "dipole_minus" => self.dipole_minus = parse_point(key, v, "auto")?,
            "seed" => self.seed = parse(key, v)?,
            "max_vertices" => self.max_vertices = parse(key, v)?,
            "parallel" => self.parallel = parse(key, v)?,
            "compensated" => self.compensated = parse(key, v)?,
            "kernel_sum_max_radius" => self.kernel_sum_max_radius = parse(key, v)?,
            "corrupt_kernel_symmetry" => self.corrupt_kernel_symmetry = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies a config file body: `key = value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { key: key.into() });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (key, value) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: kv.to_string(),
        })?;
        self.set(key.trim(), value)
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "d" => self.d.to_string(),
            "L" => self.l.to_string(),
            "a" => self.a.to_string(),
            "b" => self.b.to_string(),
            "p" => self.p.to_string(),
            "q" => self.q.to_string(),
            "s" => self.s.to_string(),
            "c_w" => self.c_w.to_string(),
            "h0" => self.h0.to_string(),
            "kappa" => self.kappa.to_string(),
            "alpha" => self.alpha.to_string(),
            "x0" => show_point(&self.x0, "origin"),
            "tol_solve" => self.tol_solve.to_string(),
            "tol_nehari" => self.tol_nehari.to_string(),
            "max_iters" => self.max_iters.to_string(),
            "init_width" => self.init_width.to_string(),
            "init_center" => show_point(&self.init_center, "origin"),
            "dipole_plus" => show_point(&self.dipole_plus, "auto"),
            "dipole_minus" => show_point(&self.dipole_minus, "auto"),
            "seed" => self.seed.to_string(),
            "max_vertices" => self.max_vertices.to_string(),
            "parallel" => self.parallel.to_string(),
            "compensated" => self.compensated.to_string(),
            "kernel_sum_max_radius" => self.kernel_sum_max_radius.to_string(),
            "corrupt_kernel_symmetry" => self.corrupt_kernel_symmetry.to_string(),
            _ => unreachable!("KEYS and value_of disagree on {key}"),
        }
    }

    /// Sorted `key = value` lines; floats use the shortest round-trip form.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value_of(key)).unwrap();
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            a: self.a,
            b: self.b,
            p: self.p,
            s: self.s,
            q: self.q,
        }
    }

    fn origin(&self) -> Vec<i64> {
        vec![0; self.d]
    }

    pub fn potential_centre(&self) -> Vec<i64> {
        self.x0.clone().unwrap_or_else(|| self.origin())
    }

    pub fn positive_guess(&self) -> InitialGuess {
        InitialGuess::Positive {
            width: self.init_width,
            center: self.init_center.clone().unwrap_or_else(|| self.origin()),
        }
    }

    /// Dipole centres default to `∓min(2, L)` along the first axis.
    pub fn dipole_guess(&self) -> InitialGuess {
        let offset = self.l.min(2);
        let along = |c: i64| {
            let mut v = self.origin();
            if let Some(first) = v.first_mut() {
                *first = c;
            }
            v
        };
        InitialGuess::Dipole {
            width: self.init_width,
            plus: self.dipole_plus.clone().unwrap_or_else(|| along(-offset)),
            minus: self.dipole_minus.clone().unwrap_or_else(|| along(offset)),
        }
    }

    /// Checks every precondition of `purpose` without allocating the lattice.
    pub fn validate(&self, purpose: Purpose) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if self.l < 1 {
            return bad(format!("L = {} must be >= 1", self.l));
        }
        let side = 2 * self.l as u128 + 1;
        let count = u32::try_from(self.d)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .unwrap_or(u128::MAX);
        if count > self.max_vertices as u128 {
            return bad(format!(
                "requested lattice of {count} vertices exceeds the cap of {}",
                self.max_vertices
            ));
        }
        self.params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match purpose {
            Purpose::Ground => self.params().require_ground(),
            Purpose::SignChanging => self.params().require_sign_changing(),
            Purpose::Verify | Purpose::KernelSum => Ok(()),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.c_w > 0.0 && self.c_w.is_finite()) {
            return bad(format!("c_w = {} must be positive", self.c_w));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return bad(format!("h0 = {} must be positive", self.h0));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be >= 0", self.kappa));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be > 0", self.alpha));
        }
        if !(self.tol_solve > 0.0) || !(self.tol_nehari > 0.0) {
            return bad("tol_solve and tol_nehari must be positive".into());
        }
        if !(self.init_width > 0.0 && self.init_width.is_finite()) {
            return bad(format!("init_width = {} must be positive", self.init_width));
        }
        if !(self.corrupt_kernel_symmetry >= 0.0 && self.corrupt_kernel_symmetry.is_finite()) {
            return bad("corrupt_kernel_symmetry must be >= 0".into());
        }
        if self.kernel_sum_max_radius < 1 {
            return bad("kernel_sum_max_radius must be >= 1".into());
        }
        let in_box = |name: &str, p: &[i64]| {
            if p.len() != self.d {
                return bad(format!("{name} has {} coordinates but d = {}", p.len(), self.d));
            }
            if p.iter().any(|c| c.abs() > self.l) {
                return bad(format!(
                    "{name} = {p:?} is outside the box [-{0}, {0}]^{1}",
                    self.l, self.d
                ));
            }
            Ok(())
        };
        in_box("x0", &self.potential_centre())?;
        if let InitialGuess::Positive { center, .. } = self.positive_guess() {
            in_box("init_center", &center)?;
        }
        if let InitialGuess::Dipole { plus, minus, .. } = self.dipole_guess() {
            in_box("dipole_plus", &plus)?;
            in_box("dipole_minus", &minus)?;
            if purpose == Purpose::SignChanging && plus == minus {
                return bad("dipole centers must be distinct".into());
            }
        }
        Ok(())
    }

    /// Builds the lattice, kernel and potential; call after [`RunConfig::validate`].
    pub fn problem(&self) -> kirchhoff_core::Result<Problem> {
        let domain = std::sync::Arc::new(LatticeDomain::with_cap(self.d, self.l, self.max_vertices)?);
        let mut kernel = Kernel::new(domain.clone(), self.s, self.c_w)?.with_policy(kirchhoff_core::ExecPolicy {
            parallel: self.parallel,
            compensated: self.compensated,
        });
        if self.corrupt_kernel_symmetry > 0.0 {
            kernel = kernel.with_broken_symmetry(self.corrupt_kernel_symmetry);
        }
        let potential = Potential::from_family(domain, self.h0, self.kappa, self.alpha, &self.potential_centre())?;
        Problem::new(kernel, potential, self.params())
    }
}
