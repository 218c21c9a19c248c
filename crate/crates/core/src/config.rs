//! Line-oriented `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! metric.preset = conformal        # flat | conformal | diagonal
//! metric.f_expression = 0.1*cos(x1)   # conformal factor exponent
//! metric.a1 = 1 + 0.2*cos(x2)      # diagonal entries, one per axis
//! grid.n = 2
//! grid.sizes = [16, 32]
//! ranks = [1, 2]
//! method = spectral                # spectral | fd4
//! tolerances.identity = 1e-8
//! seed = 7
//! suites = [identity, kernel]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Method, MetricPreset, TrigPoly};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identity,
    Kernel,
    Symbol,
    Converge,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Identity, Suite::Kernel, Suite::Symbol, Suite::Converge];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identity => "identity",
            Suite::Kernel => "kernel",
            Suite::Symbol => "symbol",
            Suite::Converge => "converge",
        }
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (identity, kernel, symbol, converge)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    Flat,
    Conformal,
    Diagonal,
}

impl PresetKind {
    fn name(self) -> &'static str {
        match self {
            PresetKind::Flat => "flat",
            PresetKind::Conformal => "conformal",
            PresetKind::Diagonal => "diagonal",
        }
    }
}

/// Pass thresholds, all overridable with `tolerances.<name>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Differential identities at a single resolution.
    pub identity: f64,
    /// Pointwise algebraic identities.
    pub algebraic: f64,
    /// Exact-transpose adjointness.
    pub adjoint: f64,
    /// Pairing of `D₁` against the analytic divergence.
    pub pairing: f64,
    /// `𝔎_p` on flat tori.
    pub flat_curvature: f64,
    /// Required residual drop between successive grids.
    pub refinement: f64,
    /// Residuals below this count as converged for refinement checks.
    pub plateau: f64,
    pub kernel_theta: f64,
    pub kernel_floor: f64,
    pub kernel_gap: f64,
    /// Smallest admissible `min eig σ / |ξ|²`.
    pub symbol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-8,
            algebraic: 1e-10,
            adjoint: 1e-12,
            pairing: 1e-9,
            flat_curvature: 1e-9,
            refinement: 10.0,
            plateau: 1e-9,
            kernel_theta: 1e-4,
            kernel_floor: 1e-8,
            kernel_gap: 100.0,
            symbol: 1e-6,
        }
    }
}

impl Tolerances {
    const NAMES: [&'static str; 11] = [
        "identity",
        "algebraic",
        "adjoint",
        "pairing",
        "flat_curvature",
        "refinement",
        "plateau",
        "kernel_theta",
        "kernel_floor",
        "kernel_gap",
        "symbol",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "identity" => &mut self.identity,
            "algebraic" => &mut self.algebraic,
            "adjoint" => &mut self.adjoint,
            "pairing" => &mut self.pairing,
            "flat_curvature" => &mut self.flat_curvature,
            "refinement" => &mut self.refinement,
            "plateau" => &mut self.plateau,
            "kernel_theta" => &mut self.kernel_theta,
            "kernel_floor" => &mut self.kernel_floor,
            "kernel_gap" => &mut self.kernel_gap,
            "symbol" => &mut self.symbol,
            _ => return None,
        })
    }

    pub fn kernel_policy(&self) -> crate::spectral::KernelPolicy {
        crate::spectral::KernelPolicy {
            theta: self.kernel_theta,
            floor: self.kernel_floor,
            min_gap: self.kernel_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: PresetKind,
    /// Exponent of the conformal factor, `g = e^{2f} δ`.
    pub f: Option<TrigPoly>,
    /// Diagonal entries keyed by one-based axis.
    pub diagonal: BTreeMap<usize, TrigPoly>,
    pub n: usize,
    pub sizes: Vec<usize>,
    pub ranks: Vec<usize>,
    pub method: Method,
    pub tolerances: Tolerances,
    pub seed: u64,
    /// Random fields per check.
    pub samples: usize,
    pub suites: Vec<Suite>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: PresetKind::Flat,
            f: None,
            diagonal: BTreeMap::new(),
            n: 2,
            sizes: vec![16, 32],
            ranks: vec![1, 2],
            method: Method::Spectral,
            tolerances: Tolerances::default(),
            seed: 7,
            samples: 4,
            suites: vec![Suite::Identity],
        }
    }
}

/// Every accepted key; `metric.a<k>` stands for `metric.a1` … `metric.a9`.
pub fn valid_keys() -> Vec<String> {
    let mut keys: Vec<String> = [
        "metric.preset",
        "metric.f_expression",
        "metric.a<k>",
        "grid.n",
        "grid.sizes",
        "ranks",
        "method",
        "seed",
        "samples",
        "suites",
    ]
    .map(String::from)
    .to_vec();
    keys.extend(Tolerances::NAMES.iter().map(|t| format!("tolerances.{t}")));
    keys
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let inner = value.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(inner);
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn parse_one<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("`{value}`: {e}"))
}

fn join<T: ToString>(v: &[T]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.apply_line(line, i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Apply one `key=value` override (reported as line 0 on error).
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        self.apply_line(kv.trim(), 0)?;
        self.validate()
    }

    fn apply_line(&mut self, line: &str, lineno: usize) -> Result<()> {
        let err = |message: String| Error::Config {
            line: lineno,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        self.set(key, value).map_err(err)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "metric.preset" => {
                self.preset = match value {
                    "flat" => PresetKind::Flat,
                    "conformal" => PresetKind::Conformal,
                    "diagonal" => PresetKind::Diagonal,
                    _ => return Err(format!("metric.preset: `{value}` is not flat, conformal or diagonal")),
                }
            }
            "metric.f_expression" => self.f = Some(TrigPoly::parse(value).map_err(|e| format!("metric.f_expression: {e}"))?),
            "grid.n" => self.n = parse_one(value)?,
            "grid.sizes" => self.sizes = parse_list(value)?,
            "ranks" => self.ranks = parse_list(value)?,
            "method" => self.method = parse_one(value)?,
            "seed" => self.seed = parse_one(value)?,
            "samples" => self.samples = parse_one(value)?,
            "suites" => self.suites = parse_list(value)?,
            _ => {
                if let Some(axis) = key.strip_prefix("metric.a").and_then(|k| k.parse::<usize>().ok()) {
                    if !(1..=9).contains(&axis) {
                        return Err(format!("{key}: axis must be 1..9"));
                    }
                    let t = TrigPoly::parse(value).map_err(|e| format!("{key}: {e}"))?;
                    self.diagonal.insert(axis, t);
                } else if let Some(slot) = key
                    .strip_prefix("tolerances.")
                    .and_then(|t| self.tolerances.slot(t))
                {
                    *slot = parse_one(value)?;
                } else {
                    return Err(format!(
                        "unknown key `{key}`; valid keys: {}",
                        valid_keys().join(", ")
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Config { line: 0, message: m };
        if !(2..=8).contains(&self.n) {
            return Err(bad(format!("grid.n must be in 2..=8 (got {})", self.n)));
        }
        if self.sizes.is_empty() {
            return Err(bad("grid.sizes is empty".into()));
        }
        for &s in &self.sizes {
            GridSpec::cube(self.n, s).validate().map_err(|e| bad(e.to_string()))?;
        }
        if self.ranks.is_empty() || self.ranks.iter().any(|&p| !(1..=6).contains(&p)) {
            return Err(bad("ranks must be a non-empty list of values in 1..=6".into()));
        }
        if self.suites.contains(&Suite::Converge) && self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("grid.sizes must be strictly increasing for the converge suite".into()));
        }
        if self.samples == 0 {
            return Err(bad("samples must be positive".into()));
        }
        match self.preset {
            PresetKind::Conformal if self.f.is_none() => {
                return Err(bad("metric.preset = conformal needs metric.f_expression".into()))
            }
            PresetKind::Diagonal => {
                for a in 1..=self.n {
                    if !self.diagonal.contains_key(&a) {
                        return Err(bad(format!("metric.preset = diagonal needs metric.a{a}")));
                    }
                }
            }
            _ => {}
        }
        self.metric().check_dimension(self.n).map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn metric(&self) -> MetricPreset {
        match self.preset {
            PresetKind::Flat => MetricPreset::Flat,
            PresetKind::Conformal => MetricPreset::ConformallyFlat(
                self.f.clone().unwrap_or_else(TrigPoly::zero),
            ),
            PresetKind::Diagonal => MetricPreset::DiagonalPeriodic(
                (1..=self.n)
                    .map(|a| self.diagonal.get(&a).cloned().unwrap_or_else(|| TrigPoly::constant(1.0)))
                    .collect(),
            ),
        }
    }

    pub fn grid(&self, size: usize) -> GridSpec {
        GridSpec::cube(self.n, size)
    }

    pub fn has_suite(&self, s: Suite) -> bool {
        self.suites.contains(&s)
    }

    /// Canonical text form; `parse(to_config_string())` reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("metric.preset", self.preset.name().into());
        if let Some(f) = &self.f {
            put("metric.f_expression", f.to_string());
        }
        for (a, t) in &self.diagonal {
            put(&format!("metric.a{a}"), t.to_string());
        }
        put("grid.n", self.n.to_string());
        put("grid.sizes", join(&self.sizes));
        put("ranks", join(&self.ranks));
        put("method", self.method.to_string());
        put("seed", self.seed.to_string());
        put("samples", self.samples.to_string());
        put("suites", join(&self.suites.iter().map(|s| s.name()).collect::<Vec<_>>()));
        let mut t = self.tolerances;
        for name in Tolerances::NAMES {
            let v = *t.slot(name).expect("listed tolerance");
            put(&format!("tolerances.{name}"), format!("{v:e}"));
        }
        s
    }
}
