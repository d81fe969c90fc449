//! Experiment configuration.
//!
//! The file is TOML restricted to a fixed set of sections and keys:
//!
//! ```text
//! [experiment]
//! kind = "pricing_convergence"
//! epsilons = [1.0, 0.1, 0.01]
//! seeds = [42]
//! output_dir = "out"
//!
//! [levy]
//! family = "symmetric_stable"
//! alpha = 1.5
//! ```
//!
//! Every key is optional and has a default; unknown sections or keys,
//! type mismatches and out-of-range values are reported with the line of
//! the offending key.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use toml::{Table, Value};

use crate::control::{control_grid, Payoff, VolatilityModel};
use crate::error::{Error, Result};
use crate::finance::{MertonSpec, PricingSpec};
use crate::hjb::{Grid1d, SolverGrids};
use crate::levy::{LevyFamily, LevyMeasureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    PricingConvergence,
    MertonConvergence,
    CorrectorRate,
    ErgodicityCheck,
    Counterexample,
}

impl ExperimentKind {
    const NAMES: [(&'static str, ExperimentKind); 5] = [
        ("pricing_convergence", ExperimentKind::PricingConvergence),
        ("merton_convergence", ExperimentKind::MertonConvergence),
        ("corrector_rate", ExperimentKind::CorrectorRate),
        ("ergodicity_check", ExperimentKind::ErgodicityCheck),
        ("counterexample", ExperimentKind::Counterexample),
    ];
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::NAMES.iter().find(|(_, k)| k == self).unwrap().0;
        f.write_str(name)
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::NAMES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(s))
            .map(|(_, k)| *k)
            .ok_or_else(|| {
                let all: Vec<_> = Self::NAMES.iter().map(|(n, _)| *n).collect();
                format!("unknown experiment `{s}`, expected one of {}", all.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Pricing,
    Merton,
}

/// `[problem]`: coefficients of the slow system.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub sigma: VolatilityModel,
    pub r: f64,
    pub discount: f64,
    pub payoff: Payoff,
    pub horizon: f64,
    pub x0: f64,
    pub alpha_drift: f64,
    pub gamma: f64,
    pub a: f64,
    pub control_lo: f64,
    pub control_hi: f64,
    pub controls: usize,
}

impl ProblemConfig {
    pub fn pricing_spec(&self) -> PricingSpec {
        PricingSpec::new(self.r, self.sigma.clone(), self.payoff.clone(), self.horizon)
            .with_discount(self.discount)
            .with_x0(self.x0)
    }

    pub fn merton_spec(&self) -> Result<MertonSpec> {
        let mut m = MertonSpec::new(
            self.r,
            self.alpha_drift,
            self.sigma.clone(),
            (self.control_lo, self.control_hi),
            self.a,
            self.gamma,
            self.horizon,
        )?;
        m.w0 = self.x0;
        m.n_controls = self.controls;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    /// Simulation step; `None` uses `min(eps / 20, T / 2000)`.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub x_max: f64,
    pub x_points: usize,
    /// Stretching of the x-grid towards the origin; 0 gives a uniform grid.
    pub x_stretch: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub y_points: usize,
    pub time_steps: Option<usize>,
    pub snapshots: usize,
    pub effective_steps: usize,
}

impl GridConfig {
    pub fn solver_grids(&self) -> Result<SolverGrids> {
        let x = if self.x_stretch > 0.0 {
            Grid1d::sinh_stretched(self.x_max, self.x_points, self.x_stretch)?
        } else {
            Grid1d::uniform(0.0, self.x_max, self.x_points)?
        };
        Ok(SolverGrids {
            x,
            y: Grid1d::uniform(self.y_min, self.y_max, self.y_points)?,
            time_steps: self.time_steps,
            snapshots: self.snapshots,
        })
    }
}

/// `[box]`: the compact set on which gaps are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConfig {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// Quantiles of the invariant measure giving the y-points.
    pub y_quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantConfig {
    pub lambda: f64,
    pub burn_in: f64,
    pub samples: usize,
    pub nodes: usize,
    pub chains: usize,
    pub clip: f64,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorConfig {
    pub deltas: Vec<f64>,
    pub y: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
    pub w: f64,
    pub p: f64,
    pub xx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityConfig {
    pub q: f64,
    pub radii: Vec<f64>,
    pub cf_points: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub levy: LevyMeasureModel,
    pub problem: ProblemConfig,
    pub mc: McConfig,
    pub grid: GridConfig,
    pub compact_box: BoxConfig,
    pub invariant: InvariantConfig,
    pub corrector: CorrectorConfig,
    pub ergodicity: ErgodicityConfig,
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }

    /// Fully resolved configuration in the input format.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        let f = |v: f64| Value::Float(v);
        let fl = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        let int = |v: usize| Value::Integer(v as i64);
        let s = |v: String| Value::String(v);

        let mut t = Table::new();
        t.insert("kind".into(), s(self.kind.to_string()));
        t.insert("epsilons".into(), fl(&self.epsilons));
        t.insert(
            "seeds".into(),
            Value::Array(self.seeds.iter().map(|x| Value::Integer(*x as i64)).collect()),
        );
        t.insert("output_dir".into(), s(self.output_dir.display().to_string()));
        root.insert("experiment".into(), Value::Table(t));

        let mut t = Table::new();
        t.insert("family".into(), s(self.levy.family().to_string()));
        t.insert("alpha".into(), f(self.levy.alpha()));
        t.insert("intensity".into(), f(self.levy.intensity()));
        t.insert("subordinator".into(), Value::Boolean(self.levy.is_subordinator_mode()));
        root.insert("levy".into(), Value::Table(t));

        let p = &self.problem;
        let mut t = Table::new();
        t.insert(
            "kind".into(),
            s(match p.kind {
                ProblemKind::Pricing => "pricing".into(),
                ProblemKind::Merton => "merton".into(),
            }),
        );
        let (name, base, amp) = match &p.sigma {
            VolatilityModel::Constant(v) => ("constant", *v, 0.0),
            VolatilityModel::Tanh { base, amplitude } => ("tanh", *base, *amplitude),
            VolatilityModel::AbsSin { scale } => ("abs_sin", 0.0, *scale),
            VolatilityModel::Custom(_) => ("custom", 0.0, 0.0),
        };
        t.insert("sigma".into(), s(name.into()));
        t.insert("sigma_base".into(), f(base));
        t.insert("sigma_amplitude".into(), f(amp));
        t.insert("r".into(), f(p.r));
        t.insert("discount".into(), f(p.discount));
        let (payoff, strike, level) = match &p.payoff {
            Payoff::Call { strike } => ("call", *strike, 1.0),
            Payoff::Put { strike } => ("put", *strike, 1.0),
            Payoff::Identity => ("identity", 1.0, 1.0),
            Payoff::Constant(k) => ("constant", 1.0, *k),
            Payoff::Hara { .. } => ("hara", 1.0, 1.0),
            Payoff::Custom { .. } => ("custom", 1.0, 1.0),
        };
        t.insert("payoff".into(), s(payoff.into()));
        t.insert("strike".into(), f(strike));
        t.insert("level".into(), f(level));
        t.insert("horizon".into(), f(p.horizon));
        t.insert("x0".into(), f(p.x0));
        t.insert("alpha_drift".into(), f(p.alpha_drift));
        t.insert("gamma".into(), f(p.gamma));
        t.insert("a".into(), f(p.a));
        t.insert("control_lo".into(), f(p.control_lo));
        t.insert("control_hi".into(), f(p.control_hi));
        t.insert("controls".into(), int(p.controls));
        root.insert("problem".into(), Value::Table(t));

        let mut t = Table::new();
        t.insert("paths".into(), int(self.mc.paths));
        if let Some(dt) = self.mc.dt {
            t.insert("dt".into(), f(dt));
        }
        root.insert("mc".into(), Value::Table(t));

        let g = &self.grid;
        let mut t = Table::new();
        t.insert("x_max".into(), f(g.x_max));
        t.insert("x_points".into(), int(g.x_points));
        t.insert("x_stretch".into(), f(g.x_stretch));
        t.insert("y_min".into(), f(g.y_min));
        t.insert("y_max".into(), f(g.y_max));
        t.insert("y_points".into(), int(g.y_points));
        if let Some(n) = g.time_steps {
            t.insert("time_steps".into(), int(n));
        }
        t.insert("snapshots".into(), int(g.snapshots));
        t.insert("effective_steps".into(), int(g.effective_steps));
        root.insert("grid".into(), Value::Table(t));

        let b = &self.compact_box;
        let mut t = Table::new();
        t.insert("times".into(), fl(&b.times));
        t.insert("x".into(), fl(&b.x));
        t.insert("y_quantiles".into(), fl(&b.y_quantiles));
        root.insert("box".into(), Value::Table(t));

        let i = &self.invariant;
        let mut t = Table::new();
        t.insert("lambda".into(), f(i.lambda));
        t.insert("burn_in".into(), f(i.burn_in));
        t.insert("samples".into(), int(i.samples));
        t.insert("nodes".into(), int(i.nodes));
        t.insert("chains".into(), int(i.chains));
        t.insert("clip".into(), f(i.clip));
        if let Some(dt) = i.dt {
            t.insert("dt".into(), f(dt));
        }
        root.insert("invariant".into(), Value::Table(t));

        let c = &self.corrector;
        let mut t = Table::new();
        t.insert("deltas".into(), fl(&c.deltas));
        t.insert("y".into(), fl(&c.y));
        t.insert("paths".into(), int(c.paths));
        t.insert("dt".into(), f(c.dt));
        t.insert("w".into(), f(c.w));
        t.insert("p".into(), f(c.p));
        t.insert("xx".into(), f(c.xx));
        root.insert("corrector".into(), Value::Table(t));

        let e = &self.ergodicity;
        let mut t = Table::new();
        t.insert("q".into(), f(e.q));
        t.insert("radii".into(), fl(&e.radii));
        t.insert("cf_points".into(), fl(&e.cf_points));
        root.insert("ergodicity".into(), Value::Table(t));

        toml::to_string(&root).expect("a table of plain values always serialises")
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "epsilons", "seeds", "output_dir"]),
    ("levy", &["family", "alpha", "intensity", "subordinator"]),
    (
        "problem",
        &[
            "kind",
            "sigma",
            "sigma_base",
            "sigma_amplitude",
            "r",
            "discount",
            "payoff",
            "strike",
            "level",
            "horizon",
            "x0",
            "alpha_drift",
            "gamma",
            "a",
            "control_lo",
            "control_hi",
            "controls",
        ],
    ),
    ("mc", &["paths", "dt"]),
    (
        "grid",
        &[
            "x_max",
            "x_points",
            "x_stretch",
            "y_min",
            "y_max",
            "y_points",
            "time_steps",
            "snapshots",
            "effective_steps",
        ],
    ),
    ("box", &["times", "x", "y_quantiles"]),
    ("invariant", &["lambda", "burn_in", "samples", "nodes", "chains", "clip", "dt"]),
    ("corrector", &["deltas", "y", "paths", "dt", "w", "p", "xx"]),
    ("ergodicity", &["q", "radii", "cf_points"]),
];

/// Line (1-based) of `key` inside `[section]`, or of the section header
/// when `key` is empty; 0 when absent.
fn line_of(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return i + 1;
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some(rest) = line.strip_prefix(key) {
                let rest = rest.trim_start();
                if rest.starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    0
}

/// Typed access to one section with line-numbered errors.
struct Section<'a> {
    text: &'a str,
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn err(&self, key: &str, reason: impl Into<String>) -> Error {
        Error::Config {
            line: line_of(self.text, self.name, key),
            key: format!("{}.{key}", self.name),
            reason: reason.into(),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(*v),
            Some(Value::Integer(v)) => Ok(*v as f64),
            Some(other) => Err(self.err(key, format!("expected a number, found {}", other.type_str()))),
        }
    }

    fn float_opt(&self, key: &str) -> Result<Option<f64>> {
        if self.has(key) {
            self.float(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    fn uint(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(Value::Integer(v)) => Err(self.err(key, format!("{v} must be nonnegative"))),
            Some(other) => Err(self.err(key, format!("expected an integer, found {}", other.type_str()))),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.err(key, format!("expected a string, found {}", other.type_str()))),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(self.err(key, format!("expected true or false, found {}", other.type_str()))),
        }
    }

    /// A list of numbers; a single number is a one-element list.
    fn floats(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let number = |v: &Value| match v {
            Value::Float(x) => Some(*x),
            Value::Integer(x) => Some(*x as f64),
            _ => None,
        };
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| number(v).ok_or_else(|| self.err(key, "expected a list of numbers")))
                .collect(),
            Some(v) => number(v)
                .map(|x| vec![x])
                .ok_or_else(|| self.err(key, "expected a list of numbers")),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.float(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.err(key, format!("{v} must be positive")));
        }
        Ok(v)
    }

    fn at_least(&self, key: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.uint(key, default)?;
        if v < min {
            return Err(self.err(key, format!("{v} is below the minimum of {min}")));
        }
        Ok(v)
    }
}

/// Parses and validates a configuration, applying defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Config {
            line,
            key: String::new(),
            reason: e.message().to_string(),
        }
    })?;
    for (name, value) in &root {
        let Some((_, keys)) = KEYS.iter().find(|(s, _)| s == name) else {
            return Err(Error::Config {
                line: line_of(text, name, ""),
                key: name.clone(),
                reason: "unknown section".into(),
            });
        };
        let Value::Table(table) = value else {
            return Err(Error::Config {
                line: 0,
                key: name.clone(),
                reason: "expected a [section]".into(),
            });
        };
        for key in table.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(Error::Config {
                    line: line_of(text, name, key),
                    key: format!("{name}.{key}"),
                    reason: format!("unknown key; valid keys are {}", keys.join(", ")),
                });
            }
        }
    }
    let section = |name: &'static str| Section {
        text,
        name,
        table: root.get(name).and_then(Value::as_table),
    };

    let ex = section("experiment");
    let kind: ExperimentKind = ex
        .string("kind", "pricing_convergence")?
        .parse()
        .map_err(|e: String| ex.err("kind", e))?;
    let epsilons = ex.floats("epsilons", &[1.0, 0.1, 0.01])?;
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(ex.err("epsilons", "need a nonempty list of positive values"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ex.err("epsilons", "values must be strictly descending"));
    }
    let seeds: Vec<u64> = match ex.get("seeds") {
        None => vec![42],
        Some(Value::Integer(s)) if *s >= 0 => vec![*s as u64],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::Integer(s) if *s >= 0 => Ok(*s as u64),
                _ => Err(ex.err("seeds", "expected nonnegative integers")),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(ex.err("seeds", "expected nonnegative integers")),
    };
    if seeds.is_empty() {
        return Err(ex.err("seeds", "need at least one seed"));
    }
    let output_dir = PathBuf::from(ex.string("output_dir", "out")?);

    let lv = section("levy");
    let family: LevyFamily = lv
        .string(
            "family",
            if kind == ExperimentKind::Counterexample { "one_sided_stable" } else { "symmetric_stable" },
        )?
        .parse()
        .map_err(|e: String| lv.err("family", e))?;
    let default_alpha = if kind == ExperimentKind::Counterexample { 0.5 } else { 1.5 };
    let alpha = lv.float("alpha", default_alpha)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(lv.err("alpha", format!("{alpha} is outside the range (0, 2)")));
    }
    let intensity = lv.float("intensity", 1.0)?;
    let subordinator = lv.boolean("subordinator", kind == ExperimentKind::Counterexample)?;
    let levy = LevyMeasureModel::new(family, alpha, intensity, subordinator).map_err(|e| relocate(e, text))?;

    let pr = section("problem");
    let default_kind = match kind {
        ExperimentKind::MertonConvergence | ExperimentKind::CorrectorRate => "merton",
        _ => "pricing",
    };
    let pkind = match pr.string("kind", default_kind)?.as_str() {
        "pricing" => ProblemKind::Pricing,
        "merton" => ProblemKind::Merton,
        other => return Err(pr.err("kind", format!("unknown problem `{other}`, expected pricing or merton"))),
    };
    let merton = pkind == ProblemKind::Merton;
    let (base_default, amp_default) = if merton { (0.225, 0.075) } else { (0.2, 0.05) };
    let base = pr.float("sigma_base", base_default)?;
    let amp = pr.float("sigma_amplitude", amp_default)?;
    let sigma = match pr.string("sigma", "tanh")?.as_str() {
        "constant" => VolatilityModel::Constant(base),
        "tanh" => VolatilityModel::Tanh { base, amplitude: amp },
        "abs_sin" => VolatilityModel::AbsSin { scale: amp },
        other => return Err(pr.err("sigma", format!("unknown profile `{other}`, expected constant, tanh or abs_sin"))),
    };
    sigma.validate().map_err(|e| pr.err("sigma", e.to_string()))?;
    let r = pr.float("r", 0.05)?;
    let discount = pr.float("discount", if merton { 0.0 } else { r })?;
    if !(discount >= 0.0) {
        return Err(pr.err("discount", format!("{discount} must be nonnegative")));
    }
    let strike = pr.float("strike", 1.0)?;
    let level = pr.float("level", 1.0)?;
    let gamma = pr.float("gamma", 0.5)?;
    let a = pr.float("a", 1.0)?;
    let payoff = match pr.string("payoff", if merton { "hara" } else { "call" })?.as_str() {
        "call" => Payoff::Call { strike },
        "put" => Payoff::Put { strike },
        "identity" => Payoff::Identity,
        "constant" => Payoff::Constant(level),
        "hara" => Payoff::Hara { a, gamma },
        other => return Err(pr.err("payoff", format!("unknown payoff `{other}`"))),
    };
    let problem = ProblemConfig {
        kind: pkind,
        sigma,
        r,
        discount,
        payoff,
        horizon: pr.positive("horizon", 1.0)?,
        x0: pr.positive("x0", 1.0)?,
        alpha_drift: pr.float("alpha_drift", 0.1)?,
        gamma,
        a,
        control_lo: pr.float("control_lo", 0.0)?,
        control_hi: pr.float("control_hi", 3.0)?,
        controls: pr.at_least("controls", 41, 1)?,
    };
    if merton {
        problem.merton_spec().map_err(|e| relocate(e, text))?;
    } else {
        problem.pricing_spec().validate().map_err(|e| relocate(e, text))?;
    }

    let mc = section("mc");
    let mc = McConfig {
        paths: mc.at_least("paths", 20_000, 1000)?,
        dt: match mc.float_opt("dt")? {
            Some(v) if !(v > 0.0) => return Err(mc.err("dt", format!("{v} must be positive"))),
            other => other,
        },
    };

    let gr = section("grid");
    let grid = GridConfig {
        x_max: gr.positive("x_max", if merton { 3.0 } else { 20.0 })?,
        x_points: gr.at_least("x_points", if merton { 61 } else { 160 }, 3)?,
        x_stretch: gr.float("x_stretch", if merton { 0.0 } else { 4.0 })?,
        y_min: gr.float("y_min", -6.0)?,
        y_max: gr.float("y_max", 6.0)?,
        y_points: gr.at_least("y_points", 25, 3)?,
        time_steps: if gr.has("time_steps") {
            Some(gr.at_least("time_steps", 1, 1)?)
        } else {
            None
        },
        snapshots: gr.at_least("snapshots", 3, 2)?,
        effective_steps: gr.at_least("effective_steps", 200, 1)?,
    };
    if !(grid.y_max > grid.y_min) {
        return Err(gr.err("y_max", "need y_max > y_min"));
    }

    let bx = section("box");
    let compact_box = BoxConfig {
        times: bx.floats("times", &[0.0, 0.5 * problem.horizon])?,
        x: bx.floats("x", &[0.5, 1.0, 1.5, 2.0])?,
        y_quantiles: bx.floats("y_quantiles", &[0.05, 0.5, 0.95])?,
    };
    if compact_box.times.is_empty() || compact_box.times.iter().any(|t| !(*t >= 0.0 && *t < problem.horizon)) {
        return Err(bx.err("times", format!("times must lie in [0, {})", problem.horizon)));
    }
    if compact_box.x.is_empty() || compact_box.x.iter().any(|x| !(*x > 0.0 && *x < grid.x_max)) {
        return Err(bx.err("x", format!("points must lie inside the solver grid (0, {})", grid.x_max)));
    }
    if compact_box.y_quantiles.is_empty() || compact_box.y_quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(bx.err("y_quantiles", "quantile levels must lie in (0, 1)"));
    }

    let inv = section("invariant");
    let invariant = InvariantConfig {
        lambda: inv.positive("lambda", 1.0)?,
        burn_in: inv.positive("burn_in", 10.0)?,
        samples: inv.at_least("samples", 100_000, 1000)?,
        nodes: inv.at_least("nodes", 256, 2)?,
        chains: inv.at_least("chains", 32, 1)?,
        clip: inv.float("clip", 1e-3)?,
        dt: match inv.float_opt("dt")? {
            Some(v) if !(v > 0.0) => return Err(inv.err("dt", format!("{v} must be positive"))),
            other => other,
        },
    };
    if invariant.burn_in < 5.0 / invariant.lambda {
        return Err(inv.err("burn_in", "must cover at least five relaxation times 5/lambda"));
    }
    if !(0.0..0.5).contains(&invariant.clip) {
        return Err(inv.err("clip", "must lie in [0, 0.5)"));
    }

    let co = section("corrector");
    let corrector = CorrectorConfig {
        deltas: co.floats("deltas", &[0.1, 0.05, 0.025])?,
        y: co.floats("y", &[-2.0, 0.0, 2.0])?,
        paths: co.at_least("paths", 10_000, 1000)?,
        dt: co.positive("dt", 0.05)?,
        w: co.float("w", 1.0)?,
        p: co.float("p", 1.0)?,
        xx: co.float("xx", -1.0)?,
    };
    if corrector.deltas.is_empty() || corrector.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(co.err("deltas", "need positive values"));
    }
    if corrector.y.is_empty() {
        return Err(co.err("y", "need at least one point"));
    }

    let er = section("ergodicity");
    let ergodicity = ErgodicityConfig {
        q: er.positive("q", 1.0)?,
        radii: er.floats("radii", &[5.0, 10.0, 20.0])?,
        cf_points: er.floats("cf_points", &[0.5, 1.0, 2.0])?,
    };

    Ok(ExperimentConfig {
        kind,
        epsilons,
        seeds,
        output_dir,
        levy,
        problem,
        mc,
        grid,
        compact_box,
        invariant,
        corrector,
        ergodicity,
    })
}

/// Attaches the line of `section.key` to a parameter error.
fn relocate(e: Error, text: &str) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let (section, key) = name.split_once('.').unwrap_or(("", name));
            Error::Config {
                line: line_of(text, section, key),
                key: name.to_string(),
                reason,
            }
        }
        other => other,
    }
}

/// The default control grid of a problem section.
pub fn controls_of(p: &ProblemConfig) -> Vec<f64> {
    control_grid(p.control_lo, p.control_hi, p.controls)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_pricing_config_gets_defaults() {
        let cfg = parse_config("[experiment]\nkind = \"pricing_convergence\"\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::PricingConvergence);
        assert_eq!(cfg.epsilons, vec![1.0, 0.1, 0.01]);
        assert_eq!(cfg.mc.paths, 20_000);
        assert_eq!(cfg.mc.dt, None);
        assert_eq!(cfg.grid.snapshots, 3);
        assert_eq!(cfg.problem.kind, ProblemKind::Pricing);
        assert_eq!(cfg.problem.discount, cfg.problem.r);
    }

    #[test]
    fn ascending_epsilons_are_rejected() {
        let text = "[experiment]\nepsilons = [0.01, 0.1]\n";
        match parse_config(text) {
            Err(Error::Config { line, key, reason }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "experiment.epsilons");
                assert!(reason.contains("descending"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let text = "[levy]\nfamily = \"symmetric_stable\"\nalpha = 2.5\n";
        match parse_config(text) {
            Err(Error::Config { line, key, reason }) => {
                assert_eq!((line, key.as_str()), (3, "levy.alpha"));
                assert!(reason.contains("(0, 2)"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let e = parse_config("[mc]\npaths = 2000\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = parse_config("# comment\n[nowhere]\nx = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let e = parse_config("[mc]\npaths = \"many\"\n").unwrap_err();
        match e {
            Error::Config { line, key, .. } => assert_eq!((line, key.as_str()), (2, "mc.paths")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse_config("[mc]\npaths = = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
    }

    #[test]
    fn echo_round_trips() {
        let text = "[experiment]\nkind = \"merton_convergence\"\nepsilons = [0.5, 0.05]\nseeds = [7, 8]\n[levy]\nfamily = \"one_sided_stable\"\nalpha = 1.25\n";
        let cfg = parse_config(text).unwrap();
        let echo = cfg.to_toml();
        let again = parse_config(&echo).unwrap();
        assert_eq!(again.to_toml(), echo);
        assert_eq!(again.epsilons, vec![0.5, 0.05]);
        assert_eq!(again.seeds, vec![7, 8]);
        assert_eq!(again.levy, cfg.levy);
        assert_eq!(again.problem.kind, ProblemKind::Merton);
    }

    #[test]
    fn merton_constraints_are_checked() {
        let e = parse_config("[experiment]\nkind = \"merton_convergence\"\n[problem]\ngamma = 1.5\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 4, .. }), "{e}");
    }
}
