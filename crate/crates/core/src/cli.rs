//! Command-line front end.
//!
//! Each subcommand reads a config, writes its result files into the output
//! directory and finishes with `manifest.json` listing every file with its
//! SHA-256. Result files hold estimates only, so reruns with the same config
//! and seed are byte-identical whatever the worker count; timings and worker
//! counts live in the manifest.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::boundary::{classify, classify_bd, classify_rv, rv_to_bd, BoundaryVerdict, Verdict};
use crate::config::{parse_config_with_seed, Format, IdentityKind, RunConfig, WfModeKind};
use crate::duality::{
    check_branching_duality, check_classical, check_duality_i, check_duality_ii, check_entrance_law, check_stationary_pgf,
    DualityConfig, DualityReport,
};
use crate::efc_chain::{pgf_estimate, survival_estimate, EfcChain, Mode, State};
use crate::ensemble::{Runner, Stats};
use crate::error::{Error, Result};
use crate::measures::SelectionFunction;
use crate::rates::{cdi_series, phi, RateTable};
use crate::wf_sde::{hit_estimate, moment_estimate, WfMode, WfModel};

/// Required pass fraction for `verify-duality`.
pub const REQUIRED_PASS_FRACTION: f64 = 0.95;
/// Event budget per run when WFEFC_MAX_MEM_MB is unset.
const DEFAULT_MAX_MEM_MB: u64 = 256;
/// Bytes per retained event (time, state).
const EVENT_BYTES: u64 = 16;

#[derive(Parser, Debug)]
#[command(name = "wfefc", version, about = "Lambda-Wright-Fisher processes with selection and their block-counting duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coalescence rate tables, Φ(n) and the coming-down series.
    Rates(Common),
    /// Simulate the block-counting chain N.
    SimulateEfc(Common),
    /// Simulate the frequency process X.
    SimulateWf(Common),
    /// Monte Carlo check of a moment duality; exit 2 below 95% passing points.
    VerifyDuality(Common),
    /// Classify the boundary 1 of X and ∞ of N.
    Classify(Common),
    /// Verdict table over (α, β, σ/ρ).
    Sweep(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides [simulation] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides [simulation] workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides [simulation] paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides [output] format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    config_path: String,
    config_sha256: String,
    seed: u64,
    workers: usize,
    paths: usize,
    wall_time_s: f64,
    exit_code: i32,
    files: Vec<ManifestFile>,
}

struct Output {
    dir: PathBuf,
    files: Vec<ManifestFile>,
}

impl Output {
    fn write(&mut self, name: &str, content: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|source| Error::Io { path: path.clone(), source })?;
        self.files.push(ManifestFile { path: name.to_string(), bytes: content.len(), sha256: sha256_hex(content) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Per-path event budget from WFEFC_MAX_MEM_MB, or 0 when events are off.
fn event_budget(events: bool, n_paths: usize) -> usize {
    if !events {
        return 0;
    }
    let mb = std::env::var("WFEFC_MAX_MEM_MB").ok().and_then(|v| v.parse::<u64>().ok()).unwrap_or(DEFAULT_MAX_MEM_MB);
    ((mb << 20) / EVENT_BYTES / n_paths.max(1) as u64).max(1) as usize
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    let (name, common) = match &command {
        Command::Rates(c) => ("rates", c),
        Command::SimulateEfc(c) => ("simulate-efc", c),
        Command::SimulateWf(c) => ("simulate-wf", c),
        Command::VerifyDuality(c) => ("verify-duality", c),
        Command::Classify(c) => ("classify", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let text = read_config(&common.config)?;
    let mut cfg = parse_config_with_seed(&text, common.seed)?;
    if let Some(w) = common.workers {
        cfg.simulation.workers = w.max(1);
    }
    if let Some(p) = common.paths {
        if p < 2 {
            return Err(Error::InvalidArgument("--paths must be ≥ 2".into()));
        }
        cfg.simulation.paths = p;
    }
    if let Some(f) = common.format {
        cfg.output.format = match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let mut out = Output { dir, files: Vec::new() };
    let start = Instant::now();
    let code = match command {
        Command::Rates(_) => cmd_rates(&cfg, &mut out)?,
        Command::SimulateEfc(_) => cmd_simulate_efc(&cfg, &mut out)?,
        Command::SimulateWf(_) => cmd_simulate_wf(&cfg, &mut out)?,
        Command::VerifyDuality(_) => cmd_verify_duality(&cfg, &mut out)?,
        Command::Classify(_) => cmd_classify(&cfg, &mut out)?,
        Command::Sweep(_) => cmd_sweep(&cfg, &mut out)?,
    };
    let manifest = Manifest {
        tool: "wfefc",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        config_path: common.config.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: cfg.simulation.seed,
        workers: cfg.simulation.workers,
        paths: cfg.simulation.paths,
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code: code,
        files: std::mem::take(&mut out.files),
    };
    let path = out.dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
    Ok(code)
}

#[derive(Serialize)]
struct RatesOutput {
    tables: Vec<RateTable>,
    phi: Vec<(u64, f64)>,
    cdi_partial_sum: f64,
    cdi_verdict: crate::rates::Verdict,
}

fn cmd_rates(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let n_max = cfg.rates_n_max;
    let tables: Vec<RateTable> = (2..=n_max.min(crate::rates::N_TABLE)).map(|n| RateTable::build(&cfg.lam, n, cfg.rates_tol)).collect::<Result<_>>()?;
    let phis: Vec<(u64, f64)> = (2..=n_max).map(|n| Ok((n, phi(&cfg.lam, n, cfg.rates_tol)?))).collect::<Result<_>>()?;
    let cdi = cdi_series(&cfg.lam, n_max.max(10_000), cfg.rates_tol)?;
    match cfg.output.format {
        Format::Json => out.json(
            "rates.json",
            &RatesOutput { tables, phi: phis, cdi_partial_sum: cdi.partial_sum, cdi_verdict: cdi.verdict },
        )?,
        Format::Csv => {
            let mut s = String::from("n,k,lambda_nk,rate\n");
            for t in &tables {
                for e in &t.entries {
                    let _ = writeln!(s, "{},{},{:e},{:e}", t.n, e.k, e.lambda_nk, e.rate);
                }
            }
            out.write("rates.csv", s.as_bytes())?;
            let mut p = String::from("n,phi\n");
            for (n, v) in &phis {
                let _ = writeln!(p, "{n},{v:e}");
            }
            out.write("phi.csv", p.as_bytes())?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct EfcRow {
    t: f64,
    mean_finite_n: Stats,
    survival: Stats,
    pgf_half: Stats,
    inconclusive: usize,
}

#[derive(Serialize)]
struct EfcOutput<'a> {
    n0: u64,
    horizon: f64,
    n_cap: u64,
    seed: u64,
    paths: usize,
    exploded_fraction: f64,
    summary: Vec<EfcRow>,
    grid_states: Vec<&'a [State]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<Vec<&'a [(f64, State)]>>,
}

fn cmd_simulate_efc(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let s = &cfg.simulation;
    let chain = EfcChain::new(&cfg.lam, &cfg.mu)?;
    let runner = Runner::new(s.seed, s.workers);
    let budget = event_budget(cfg.output.events, s.paths);
    let paths: Vec<_> = runner
        .run("simulate-efc", s.paths, |_, rng| chain.simulate(rng, s.n0, s.horizon, Mode::Free, s.n_cap, &s.t_grid, budget))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    for &t in &s.t_grid {
        let finite: Vec<f64> = paths.iter().filter_map(|p| p.state_at(t).ok().and_then(|st| st.finite())).map(|n| n as f64).collect();
        let surv = survival_estimate(&paths, t)?;
        let pgf = pgf_estimate(&paths, 0.5, t)?;
        summary.push(EfcRow {
            t,
            mean_finite_n: Stats::from_values(finite),
            survival: surv.stats(),
            pgf_half: pgf.stats(),
            inconclusive: pgf.n_inconclusive,
        });
    }
    let exploded = paths.iter().filter(|p| p.exploded).count() as f64 / paths.len() as f64;
    match cfg.output.format {
        Format::Json => out.json(
            "efc.json",
            &EfcOutput {
                n0: s.n0,
                horizon: s.horizon,
                n_cap: s.n_cap,
                seed: s.seed,
                paths: s.paths,
                exploded_fraction: exploded,
                summary,
                grid_states: paths.iter().map(|p| p.grid_states.as_slice()).collect(),
                events: cfg.output.events.then(|| paths.iter().map(|p| p.events.as_slice()).collect()),
            },
        )?,
        Format::Csv => {
            let mut c = String::from("path,t,n\n");
            for (i, p) in paths.iter().enumerate() {
                for (t, st) in s.t_grid.iter().zip(&p.grid_states) {
                    let _ = writeln!(c, "{i},{t},{st}");
                }
            }
            out.write("efc.csv", c.as_bytes())?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct WfRow {
    t: f64,
    mean: Stats,
    second_moment: Stats,
}

#[derive(Serialize)]
struct WfOutput<'a> {
    x0: f64,
    horizon: f64,
    mode: WfModeKind,
    seed: u64,
    paths: usize,
    summary: Vec<WfRow>,
    hits: crate::wf_sde::HitReport,
    grid_x: Vec<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<Vec<&'a [(f64, f64)]>>,
}

fn wf_mode(cfg: &RunConfig) -> WfMode {
    match cfg.simulation.mode {
        WfModeKind::Minimal => WfMode::Minimal,
        WfModeKind::Extension => WfMode::LambdaExtension { lam_mut: cfg.simulation.lam_mut },
    }
}

fn cmd_simulate_wf(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let s = &cfg.simulation;
    let model = WfModel::new(&cfg.lam, &SelectionFunction::new(cfg.mu.clone()), &cfg.sde, wf_mode(cfg))?;
    let runner = Runner::new(s.seed, s.workers);
    let budget = event_budget(cfg.output.events, s.paths);
    let paths: Vec<_> = runner
        .run("simulate-wf", s.paths, |_, rng| model.simulate(rng, s.x0, s.horizon, &s.t_grid, budget))
        .into_iter()
        .collect::<Result<_>>()?;
    let summary = s
        .t_grid
        .iter()
        .map(|&t| Ok(WfRow { t, mean: moment_estimate(&paths, 1, t)?, second_moment: moment_estimate(&paths, 2, t)? }))
        .collect::<Result<Vec<_>>>()?;
    let hits = hit_estimate(&paths)?;
    match cfg.output.format {
        Format::Json => out.json(
            "wf.json",
            &WfOutput {
                x0: s.x0,
                horizon: s.horizon,
                mode: s.mode,
                seed: s.seed,
                paths: s.paths,
                summary,
                hits,
                grid_x: paths.iter().map(|p| p.grid_x.as_slice()).collect(),
                events: cfg.output.events.then(|| paths.iter().map(|p| p.jumps.as_slice()).collect()),
            },
        )?,
        Format::Csv => {
            let mut c = String::from("path,t,x\n");
            for (i, p) in paths.iter().enumerate() {
                for (t, x) in s.t_grid.iter().zip(&p.grid_x) {
                    let _ = writeln!(c, "{i},{t},{x:e}");
                }
            }
            out.write("wf.csv", c.as_bytes())?;
        }
    }
    Ok(0)
}

fn duality_config(cfg: &RunConfig) -> DualityConfig {
    let s = &cfg.simulation;
    DualityConfig {
        lam: cfg.lam.clone(),
        mu: cfg.mu.clone(),
        sde: cfg.sde,
        n_cap: s.n_cap,
        seed_x: s.seed,
        seed_n: s.seed.wrapping_add(1),
        workers: s.workers,
    }
}

fn run_duality(cfg: &RunConfig) -> Result<DualityReport> {
    let d = &cfg.duality;
    let dc = duality_config(cfg);
    let n = cfg.simulation.paths;
    match d.identity {
        IdentityKind::DualityI => check_duality_i(&dc, &d.grid, n),
        IdentityKind::DualityII => check_duality_ii(&dc, &d.grid, n, d.lam_pair),
        IdentityKind::EntranceLaw => check_entrance_law(&dc, &d.n_list, &d.grid.ts, d.lam_pair.1, n),
        IdentityKind::Classical => check_classical(&dc, &d.grid.xs, &d.grid.ts, d.n_big, n),
        IdentityKind::Branching => {
            check_branching_duality(&dc, &d.grid.xs, *d.grid.ts.last().expect("non-empty"), d.grid.ns[0], n)
        }
        IdentityKind::Stationary => check_stationary_pgf(&dc, &d.grid.xs, &d.stationary, n),
    }
}

fn cmd_verify_duality(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let report = run_duality(cfg)?;
    match cfg.output.format {
        Format::Json => out.json("duality.json", &report)?,
        Format::Csv => {
            let mut c = String::from("x,n,t,lhs,lhs_se,rhs,rhs_se,z,pass\n");
            for p in &report.points {
                let _ = writeln!(
                    c,
                    "{},{},{},{:e},{:e},{:e},{:e},{:.6},{}",
                    p.x, p.n, p.t, p.lhs.estimate, p.lhs.std_error, p.rhs.estimate, p.rhs.std_error, p.z, p.pass
                );
            }
            out.write("duality.csv", c.as_bytes())?;
        }
    }
    Ok(if report.passed(REQUIRED_PASS_FRACTION) { 0 } else { 2 })
}

#[derive(Serialize)]
struct ClassifyOutput {
    x_at_1: BoundaryVerdict,
    n_at_infinity: BoundaryVerdict,
}

fn cmd_classify(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let x = match cfg.classify {
        Some(r) => classify_rv(r.alpha, r.beta, r.sigma, r.rho)?,
        None => classify(&cfg.lam, &cfg.mu)?,
    };
    let n = match cfg.classify {
        Some(r) => {
            let (b, d) = rv_to_bd(r.alpha, r.beta, r.sigma, r.rho)?;
            classify_bd(r.alpha, r.beta, b, d)?
        }
        None => x.dual(),
    };
    out.json("classify.json", &ClassifyOutput { x_at_1: x, n_at_infinity: n })?;
    Ok(0)
}

/// Integer codes for plotting: Exit 1, Entrance 2, RegularReflecting 3,
/// RegularForItself 4, Natural 5, Inconclusive 0.
pub fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Inconclusive => 0,
        Verdict::Exit => 1,
        Verdict::Entrance => 2,
        Verdict::RegularReflecting => 3,
        Verdict::RegularForItself => 4,
        Verdict::Natural => 5,
    }
}

fn cmd_sweep(cfg: &RunConfig, out: &mut Output) -> Result<i32> {
    let sw = &cfg.sweep;
    let mut c = String::from("alpha,beta,sigma_over_rho,x_verdict,x_code,n_verdict,n_code\n");
    for &alpha in &sw.alphas {
        let betas = if sw.betas.is_empty() { vec![1.0 - alpha] } else { sw.betas.clone() };
        for &beta in &betas {
            for &ratio in &sw.ratios {
                let x = classify_rv(alpha, beta, ratio, 1.0)?;
                let (b, d) = rv_to_bd(alpha, beta, ratio, 1.0)?;
                let n = classify_bd(alpha, beta, b, d)?;
                let _ = writeln!(
                    c,
                    "{alpha},{beta},{ratio},{:?},{},{:?},{}",
                    x.verdict,
                    verdict_code(x.verdict),
                    n.verdict,
                    verdict_code(n.verdict)
                );
            }
        }
    }
    out.write("sweep.csv", c.as_bytes())?;
    Ok(0)
}
