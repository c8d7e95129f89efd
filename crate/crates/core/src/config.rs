//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comment
//! [coalescence]
//! kind = power
//! beta = 0.5
//! [simulation]
//! seed = 7
//! ```
//!
//! Every section and key is checked against a fixed schema before anything
//! runs. Errors carry a code and the 1-based line they refer to (0 when the
//! problem is a missing entry).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::duality::{Grid, StationarySettings};
use crate::error::{Error, Result};
use crate::flow::DriftIntegrator;
use crate::measures::{CoalescenceMeasure, SplittingMeasure};
use crate::wf_sde::SdeConfig;

pub const E_SYNTAX: &str = "E001-syntax";
pub const E_DUPLICATE_SECTION: &str = "E002-duplicate-section";
pub const E_UNKNOWN_SECTION: &str = "E003-unknown-section";
pub const E_UNKNOWN_KEY: &str = "E004-unknown-key";
pub const E_DUPLICATE_KEY: &str = "E005-duplicate-key";
pub const E_MISSING_SEED: &str = "E006-missing-seed";
pub const E_VALUE: &str = "E007-bad-value";
pub const E_RANGE: &str = "E008-out-of-range";
pub const E_MISSING_KEY: &str = "E009-missing-key";

const SCHEMA: &[(&str, &[&str])] = &[
    ("coalescence", &["kind", "mass", "beta", "a", "b", "z"]),
    ("splitting", &["kind", "mass", "k", "p", "b", "alpha", "sigma", "pmf", "lambda_inf"]),
    ("sde", &["eps", "gen_eps", "integrator", "eta0", "eta1", "dt_max", "kappa", "record_dt"]),
    ("simulation", &["seed", "paths", "workers", "horizon", "x0", "n0", "n_cap", "t_grid", "mode", "lam_mut"]),
    ("duality", &["identity", "xs", "ns", "ts", "lam_pair", "n_big", "n_list", "stationary_horizon", "burn_in"]),
    ("rates", &["n_max", "tol"]),
    ("classify", &["alpha", "beta", "sigma", "rho"]),
    ("sweep", &["alphas", "betas", "ratios"]),
    ("output", &["dir", "format", "events"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    entries: BTreeMap<String, Entry>,
}

fn err(code: &'static str, line: usize, msg: impl Into<String>) -> Error {
    Error::Config { code, line, msg: msg.into() }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(E_SYNTAX, line, "unterminated section header"))?
                .trim()
                .to_string();
            if !SCHEMA.iter().any(|(n, _)| *n == name) {
                return Err(err(E_UNKNOWN_SECTION, line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(err(E_DUPLICATE_SECTION, line, format!("section [{name}] appears twice")));
            }
            sections.insert(name.clone(), Section::default());
            current = Some(name);
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| err(E_SYNTAX, line, format!("expected key = value, got `{s}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err(E_SYNTAX, line, "empty key"));
        }
        let sec = current.as_ref().ok_or_else(|| err(E_SYNTAX, line, "key outside any section"))?;
        let allowed = SCHEMA.iter().find(|(n, _)| n == sec).map(|(_, keys)| *keys).unwrap_or(&[]);
        if !allowed.contains(&k) {
            return Err(err(E_UNKNOWN_KEY, line, format!("unknown key `{k}` in [{sec}]")));
        }
        let section = sections.get_mut(sec).expect("section inserted");
        if section.entries.contains_key(k) {
            return Err(err(E_DUPLICATE_KEY, line, format!("key `{k}` repeated in [{sec}]")));
        }
        section.entries.insert(k.to_string(), Entry { value: v.to_string(), line });
    }
    Ok(sections)
}

/// Typed access to one section; missing sections read as empty.
struct View<'a> {
    name: &'a str,
    section: Option<&'a Section>,
}

impl View<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.section.and_then(|s| s.entries.get(key))
    }

    fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(0, |e| e.line)
    }

    fn range(&self, key: &str, msg: impl Into<String>) -> Error {
        err(E_RANGE, self.line(key), format!("[{}] {key}: {}", self.name, msg.into()))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| err(E_VALUE, e.line, format!("[{}] {key}: expected {what}, got `{}`", self.name, e.value))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parse(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(self.range(key, "must be finite")),
            _ => Ok(v),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse(key, "a non-negative integer")
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse(key, "true or false")
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim().parse::<T>())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| err(E_VALUE, e.line, format!("[{}] {key}: expected a comma-separated list of {what}", self.name))),
        }
    }

    fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| err(E_MISSING_KEY, 0, format!("[{}] needs `{key}`", self.name)))
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64(key)?.unwrap_or(default);
        if !(v > 0.0) {
            return Err(self.range(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn unit_open(&self, key: &str) -> Result<f64> {
        let v = self.require_f64(key)?;
        if !(v > 0.0 && v < 1.0) {
            return Err(self.range(key, format!("must lie in (0,1), got {v}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WfModeKind {
    Minimal,
    Extension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    DualityI,
    DualityII,
    EntranceLaw,
    Classical,
    Branching,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub struct SimulationSection {
    pub seed: u64,
    pub paths: usize,
    pub workers: usize,
    pub horizon: f64,
    pub x0: f64,
    pub n0: u64,
    pub n_cap: u64,
    pub t_grid: Vec<f64>,
    pub mode: WfModeKind,
    pub lam_mut: f64,
}

#[derive(Debug, Clone)]
pub struct DualitySection {
    pub identity: IdentityKind,
    pub grid: Grid,
    pub lam_pair: (f64, f64),
    pub n_big: u64,
    pub n_list: Vec<u64>,
    pub stationary: StationarySettings,
}

#[derive(Debug, Clone, Copy)]
pub struct RvSection {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OutputSection {
    pub dir: String,
    pub format: Format,
    /// Keep per-path event lists (bounded by WFEFC_MAX_MEM_MB).
    pub events: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lam: CoalescenceMeasure,
    pub mu: SplittingMeasure,
    pub sde: SdeConfig,
    pub simulation: SimulationSection,
    pub duality: DualitySection,
    pub rates_n_max: u64,
    pub rates_tol: f64,
    pub classify: Option<RvSection>,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

fn coalescence(v: &View) -> Result<CoalescenceMeasure> {
    let mass = v.positive("mass", 1.0)?;
    let kind = v.str("kind").unwrap_or("uniform");
    let built = match kind {
        "uniform" => CoalescenceMeasure::uniform(mass),
        "power" => CoalescenceMeasure::power(v.unit_open("beta")?, mass),
        "beta" => CoalescenceMeasure::beta(v.positive("a", f64::NAN)?, v.positive("b", f64::NAN)?, mass),
        "atom" => CoalescenceMeasure::atom(v.unit_open("z")?, mass),
        other => return Err(err(E_VALUE, v.line("kind"), format!("[coalescence] kind: unknown `{other}`"))),
    };
    built.map_err(|e| v.range("kind", e.to_string()))
}

fn splitting(v: &View) -> Result<SplittingMeasure> {
    let kind = v.str("kind").unwrap_or("neutral");
    let lambda_inf = v.f64("lambda_inf")?.unwrap_or(0.0);
    if lambda_inf < 0.0 {
        return Err(v.range("lambda_inf", "must be ≥ 0"));
    }
    let base = match kind {
        "neutral" => SplittingMeasure::point_mass(1, v.positive("mass", 1.0)?),
        "point_mass" => {
            let k = v.u64("k")?.unwrap_or(2);
            if k == 0 {
                return Err(v.range("k", "must be ≥ 1"));
            }
            SplittingMeasure::point_mass(k, v.positive("mass", 1.0)?)
        }
        "geometric" => SplittingMeasure::geometric(v.unit_open("p")?, v.positive("mass", 1.0)?),
        "power_tail" => {
            let alpha = v.require_f64("alpha")?;
            if !(alpha > 0.0) {
                return Err(v.range("alpha", "must be positive"));
            }
            let b = match (v.f64("b")?, v.f64("sigma")?) {
                (Some(b), None) => b,
                (None, Some(s)) if alpha < 1.0 => alpha * s / statrs::function::gamma::gamma(1.0 - alpha),
                (None, Some(_)) => return Err(v.range("sigma", "sigma needs alpha < 1")),
                _ => return Err(err(E_MISSING_KEY, v.line("alpha"), "[splitting] power_tail needs exactly one of `b`, `sigma`")),
            };
            if !(b > 0.0) {
                return Err(v.range("b", "must be positive"));
            }
            SplittingMeasure::power_tail(b, alpha)
        }
        "table" => {
            let pmf: Vec<f64> = v.list("pmf", "numbers")?.ok_or_else(|| err(E_MISSING_KEY, 0, "[splitting] table needs `pmf`"))?;
            if pmf.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(v.range("pmf", "entries must be finite and ≥ 0"));
            }
            SplittingMeasure::table(pmf, 0.0)
        }
        other => return Err(err(E_VALUE, v.line("kind"), format!("[splitting] kind: unknown `{other}`"))),
    }
    .map_err(|e| v.range("kind", e.to_string()))?;
    if lambda_inf > 0.0 {
        return base.with_infinity(lambda_inf).map_err(|e| v.range("lambda_inf", e.to_string()));
    }
    Ok(base)
}

fn sde(v: &View) -> Result<SdeConfig> {
    let d = SdeConfig::default();
    let integrator = match v.str("integrator").unwrap_or("tabulated") {
        "tabulated" => DriftIntegrator::Tabulated,
        "adaptive_rk" => DriftIntegrator::AdaptiveRk,
        other => return Err(err(E_VALUE, v.line("integrator"), format!("[sde] integrator: unknown `{other}`"))),
    };
    let cfg = SdeConfig {
        eps: v.positive("eps", d.eps)?,
        drift_integrator: integrator,
        record_dt: v.positive("record_dt", d.record_dt)?,
        eta0: v.positive("eta0", d.eta0)?,
        eta1: v.positive("eta1", d.eta1)?,
        dt_max: v.positive("dt_max", d.dt_max)?,
        kappa: v.positive("kappa", d.kappa)?,
        gen_eps: v.f64("gen_eps")?,
    };
    cfg.validate().map_err(|e| v.range("eps", e.to_string()))?;
    Ok(cfg)
}

fn times(v: &View, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
    let ts = v.list::<f64>(key, "numbers")?.unwrap_or(default);
    if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(v.range(key, "must be positive and strictly increasing"));
    }
    Ok(ts)
}

fn simulation(v: &View, seed_override: Option<u64>) -> Result<SimulationSection> {
    let seed = match (seed_override, v.u64("seed")?) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(err(E_MISSING_SEED, 0, "[simulation] seed is required")),
    };
    let paths = v.u64("paths")?.unwrap_or(10_000);
    if paths < 2 {
        return Err(v.range("paths", "need at least 2 paths"));
    }
    let workers = v.u64("workers")?.unwrap_or(1);
    if workers == 0 {
        return Err(v.range("workers", "must be ≥ 1"));
    }
    let x0 = v.f64("x0")?.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&x0) {
        return Err(v.range("x0", "must lie in [0,1]"));
    }
    let n0 = v.u64("n0")?.unwrap_or(1);
    if n0 == 0 {
        return Err(v.range("n0", "must be ≥ 1"));
    }
    let n_cap = v.u64("n_cap")?.unwrap_or(100_000);
    if n_cap < 10 * n0 {
        return Err(v.range("n_cap", "must be at least 10·n0"));
    }
    let t_grid = times(v, "t_grid", vec![0.25, 0.5, 1.0, 2.0])?;
    let horizon = v.positive("horizon", *t_grid.last().expect("non-empty"))?;
    if t_grid.last().is_some_and(|&t| t > horizon) {
        return Err(v.range("t_grid", "extends past the horizon"));
    }
    let mode = match v.str("mode").unwrap_or("minimal") {
        "minimal" => WfModeKind::Minimal,
        "extension" => WfModeKind::Extension,
        other => return Err(err(E_VALUE, v.line("mode"), format!("[simulation] mode: unknown `{other}`"))),
    };
    let lam_mut = v.positive("lam_mut", 1e-3)?;
    Ok(SimulationSection { seed, paths: paths as usize, workers: workers as usize, horizon, x0, n0, n_cap, t_grid, mode, lam_mut })
}

fn duality(v: &View) -> Result<DualitySection> {
    let identity = match v.str("identity").unwrap_or("duality_i") {
        "duality_i" => IdentityKind::DualityI,
        "duality_ii" => IdentityKind::DualityII,
        "entrance_law" => IdentityKind::EntranceLaw,
        "classical" => IdentityKind::Classical,
        "branching" => IdentityKind::Branching,
        "stationary" => IdentityKind::Stationary,
        other => return Err(err(E_VALUE, v.line("identity"), format!("[duality] identity: unknown `{other}`"))),
    };
    let d = Grid::default();
    let xs = v.list::<f64>("xs", "numbers")?.unwrap_or(d.xs);
    if xs.is_empty() || xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(v.range("xs", "values must lie in [0,1]"));
    }
    let ns = v.list::<u64>("ns", "integers")?.unwrap_or(d.ns);
    if ns.is_empty() || ns.contains(&0) {
        return Err(v.range("ns", "values must be ≥ 1"));
    }
    let ts = times(v, "ts", d.ts)?;
    let pair = v.list::<f64>("lam_pair", "numbers")?.unwrap_or(vec![1e-2, 2.5e-3]);
    if pair.len() != 2 || !(pair[0] > pair[1] && pair[1] > 0.0) {
        return Err(v.range("lam_pair", "need two values λ₁ > λ₂ > 0"));
    }
    let n_big = v.u64("n_big")?.unwrap_or(10_000);
    if n_big < 4 {
        return Err(v.range("n_big", "must be ≥ 4"));
    }
    let n_list = v.list::<u64>("n_list", "integers")?.unwrap_or(vec![1, 2, 3]);
    let mut stationary = StationarySettings::default();
    if let Some(h) = v.f64("stationary_horizon")? {
        stationary.horizon = h;
    }
    if let Some(b) = v.f64("burn_in")? {
        stationary.burn_in = b;
    }
    if !(stationary.burn_in >= 0.0 && stationary.horizon > stationary.burn_in) {
        return Err(v.range("burn_in", "need 0 ≤ burn_in < stationary_horizon"));
    }
    Ok(DualitySection { identity, grid: Grid { xs, ns, ts }, lam_pair: (pair[0], pair[1]), n_big, n_list, stationary })
}

fn classify_section(v: &View) -> Result<Option<RvSection>> {
    if v.section.is_none_or(|s| s.entries.is_empty()) {
        return Ok(None);
    }
    let alpha = v.unit_open("alpha")?;
    let beta = v.unit_open("beta")?;
    let sigma = v.positive("sigma", f64::NAN)?;
    let rho = v.positive("rho", 1.0)?;
    Ok(Some(RvSection { alpha, beta, sigma, rho }))
}

fn sweep(v: &View) -> Result<SweepSection> {
    let alphas = v.list::<f64>("alphas", "numbers")?.unwrap_or_else(|| (1..20).map(|i| i as f64 * 0.05).collect());
    let betas = v.list::<f64>("betas", "numbers")?.unwrap_or_default();
    let ratios = v.list::<f64>("ratios", "numbers")?.unwrap_or_else(|| (1..=40).map(|i| i as f64 * 0.1).collect());
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(v.range("alphas", "values must lie in (0,1)"));
    }
    if betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
        return Err(v.range("betas", "values must lie in (0,1)"));
    }
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(v.range("ratios", "values must be positive"));
    }
    Ok(SweepSection { alphas, betas, ratios })
}

fn output(v: &View) -> Result<OutputSection> {
    let format = match v.str("format").unwrap_or("json") {
        "json" => Format::Json,
        "csv" => Format::Csv,
        other => return Err(err(E_VALUE, v.line("format"), format!("[output] format: unknown `{other}`"))),
    };
    Ok(OutputSection { dir: v.str("dir").unwrap_or(".").to_string(), format, events: v.bool("events")?.unwrap_or(false) })
}

/// Parses and validates a whole configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_seed(text, None)
}

/// As `parse_config`; a given seed replaces (or supplies) `[simulation] seed`.
pub fn parse_config_with_seed(text: &str, seed: Option<u64>) -> Result<RunConfig> {
    let sections = parse_sections(text)?;
    let view = |name| View { name, section: sections.get(name) };
    let simulation = simulation(&view("simulation"), seed)?;
    let rates = view("rates");
    let rates_n_max = rates.u64("n_max")?.unwrap_or(20);
    if !(2..=100_000).contains(&rates_n_max) {
        return Err(rates.range("n_max", "must lie in [2, 100000]"));
    }
    let rates_tol = rates.positive("tol", 1e-10)?;
    Ok(RunConfig {
        lam: coalescence(&view("coalescence"))?,
        mu: splitting(&view("splitting"))?,
        sde: sde(&view("sde"))?,
        simulation,
        duality: duality(&view("duality"))?,
        rates_n_max,
        rates_tol,
        classify: classify_section(&view("classify"))?,
        sweep: sweep(&view("sweep"))?,
        output: output(&view("output"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> (&'static str, usize) {
        match parse_config(text) {
            Err(Error::Config { code, line, .. }) => (code, line),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("[simulation]\nseed = 3\n").unwrap();
        assert_eq!(c.simulation.seed, 3);
        assert_eq!(c.simulation.workers, 1);
        assert_eq!(c.lam.mass(), 1.0);
        assert_eq!(c.duality.grid.xs.len(), 5);
        assert_eq!(c.output.format, Format::Json);
    }

    #[test]
    fn distinct_codes() {
        assert_eq!(code("[simulation]\nseed = 1\n[coalescence]\nkind = power\nbeta = 1.5\n"), (E_RANGE, 5));
        assert_eq!(code("[simulation]\nseed = 1\n[simulation]\n"), (E_DUPLICATE_SECTION, 3));
        assert_eq!(code("[simulation]\nseed = 1\nfoo = 2\n"), (E_UNKNOWN_KEY, 3));
        assert_eq!(code("[simulation]\npaths = 10\n"), (E_MISSING_SEED, 0));
        assert_eq!(code("[nope]\n"), (E_UNKNOWN_SECTION, 1));
        assert_eq!(code("[simulation]\nseed = x\n"), (E_VALUE, 2));
        assert_eq!(code("[simulation]\nseed = 1\nseed = 2\n"), (E_DUPLICATE_KEY, 3));
        assert_eq!(code("seed = 1\n"), (E_SYNTAX, 1));
        assert_eq!(code("[simulation\n"), (E_SYNTAX, 1));
    }

    #[test]
    fn range_error_names_key() {
        let e = parse_config("[simulation]\nseed = 1\n[coalescence]\nkind = power\nbeta = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("beta"));
    }

    #[test]
    fn power_tail_from_sigma() {
        let c = parse_config("[simulation]\nseed = 1\n[splitting]\nkind = power_tail\nalpha = 0.5\nsigma = 0.85\n").unwrap();
        match c.mu.family() {
            crate::measures::Family::PowerTail { b, alpha } => {
                assert_eq!(*alpha, 0.5);
                assert!((b - 0.5 * 0.85 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
            }
            f => panic!("{f:?}"),
        }
    }
}
