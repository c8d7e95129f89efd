//! The block-counting chain N of a simple EFC process.
//!
//! From n blocks, k of them merge at rate C(n,k)λ_{n,k} and a block splits
//! into k ≥ 2 (or infinitely many) blocks at rate nμ(k). Mergers are sampled
//! exactly: a mark z is proposed from the envelope min(C(n,2), z⁻²)Λ(dz) and
//! accepted with probability P(Bin(n,z) ≥ 2)/envelope, after which the number
//! of merging blocks is Bin(n,z) conditioned on being at least 2.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize, Serializer};

use crate::ensemble::{Runner, Stats};
use crate::error::{invalid, Error, Result};
use crate::measures::{CoalescenceMeasure, Split, SplittingMeasure, UpSampler};
use crate::quad::Tol;
use crate::rates::p_ge2_over_z2;
use crate::special::Neumaier;
use crate::tables::{LambdaTables, Mark};

/// A state of the chain: a finite block count or the ∞ sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum State {
    Finite(u64),
    Infinity,
}

impl State {
    /// x^N with the convention x^∞ = 1{x = 1}.
    pub fn pow(self, x: f64) -> f64 {
        match self {
            State::Infinity => {
                if x == 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            State::Finite(n) => {
                if x == 0.0 {
                    0.0
                } else {
                    (n as f64 * x.ln()).exp()
                }
            }
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            State::Finite(n) => Some(n),
            State::Infinity => None,
        }
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            State::Finite(n) => s.serialize_u64(*n),
            State::Infinity => s.serialize_str("inf"),
        }
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            State::Finite(n) => write!(f, "{n}"),
            State::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Free,
    StoppedAtInfinity,
}

/// Explosion is declared once the projected time left to reach ∞ falls below
/// this fraction of the horizon.
pub const PROJECTION_FRACTION: f64 = 1e-3;
/// Paths growing past this multiple of `n_cap` without a projected explosion
/// are Inconclusive.
pub const HARD_CAP_FACTOR: u64 = 64;

#[derive(Debug, Clone, Serialize)]
pub struct ChainPath {
    pub initial_n: State,
    /// Accepted transitions (time, new state), possibly cut at a memory budget.
    pub events: Vec<(f64, State)>,
    pub events_truncated: bool,
    pub exploded: bool,
    pub zeta_inf: Option<f64>,
    pub stopped: bool,
    pub inconclusive: bool,
    pub horizon: f64,
    pub n_cap: u64,
    pub t_grid: Vec<f64>,
    /// State at each grid time.
    pub grid_states: Vec<State>,
    /// Largest finite state visited.
    pub max_state: u64,
}

impl ChainPath {
    fn grid_index(&self, t: f64) -> Result<Option<usize>> {
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) {
            return invalid(format!("t = {t} outside [0, horizon = {}]", self.horizon));
        }
        if t == 0.0 {
            return Ok(None);
        }
        let scale = t.abs().max(1.0) * 1e-12;
        match self.t_grid.iter().position(|&g| (g - t).abs() <= scale) {
            Some(i) => Ok(Some(i)),
            None => invalid(format!("t = {t} is not on the recording grid")),
        }
    }

    /// State at a recording time (or t = 0).
    pub fn state_at(&self, t: f64) -> Result<State> {
        Ok(match self.grid_index(t)? {
            None => self.initial_n,
            Some(i) => self.grid_states[i],
        })
    }
}

/// Summary of an ensemble estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainEnsembleStats {
    pub n_paths: usize,
    pub n_inconclusive: usize,
    pub estimate: f64,
    pub std_error: f64,
}

impl ChainEnsembleStats {
    fn from_stats(s: Stats, n_inconclusive: usize) -> Self {
        ChainEnsembleStats {
            n_paths: s.n_paths,
            n_inconclusive,
            estimate: s.estimate,
            std_error: s.std_error,
        }
    }

    pub fn stats(&self) -> Stats {
        Stats { n_paths: self.n_paths, estimate: self.estimate, std_error: self.std_error }
    }
}

const J_CACHE: usize = 4096;

/// Precomputed sampling data for one (Λ, μ) pair; cheap to share across paths.
#[derive(Debug)]
pub struct EfcChain {
    lam: CoalescenceMeasure,
    mu: SplittingMeasure,
    tables: Arc<LambdaTables>,
    last: usize,
    up: UpSampler,
    w_up: f64,
    j_cache: Vec<usize>,
    /// (ln n, ln R(n)) on a log grid, R the total rate of accepted transitions.
    rate_grid: OnceLock<std::result::Result<Vec<(f64, f64)>, String>>,
}

enum Outcome {
    Horizon,
    Exploded(f64),
    Inconclusive,
}

struct RunResult {
    events: Vec<(f64, State)>,
    events_truncated: bool,
    outcome: Outcome,
    max_state: u64,
}

impl EfcChain {
    pub fn new(lam: &CoalescenceMeasure, mu: &SplittingMeasure) -> Result<Self> {
        Self::with_tables(lam, mu, Arc::new(LambdaTables::new(lam, &[])?))
    }

    pub fn with_tables(lam: &CoalescenceMeasure, mu: &SplittingMeasure, tables: Arc<LambdaTables>) -> Result<Self> {
        let up = mu.up_sampler();
        let w_up = up.rate_per_block();
        let last = tables.breakpoints().len() - 1;
        let mut j_cache = vec![0; J_CACHE];
        for (n, j) in j_cache.iter_mut().enumerate().skip(2) {
            *j = tables.index_nearest(std::f64::consts::SQRT_2 / n as f64);
        }
        Ok(EfcChain {
            lam: lam.clone(),
            mu: mu.clone(),
            tables,
            last,
            up,
            w_up,
            j_cache,
            rate_grid: OnceLock::new(),
        })
    }

    /// The λ-augmented chain, μ + λδ_∞.
    pub fn lambda_chain(lam: &CoalescenceMeasure, mu: &SplittingMeasure, lam_inf: f64) -> Result<Self> {
        if !(lam_inf > 0.0) {
            return invalid("lam_inf must be positive");
        }
        Self::new(lam, &mu.with_infinity(lam_inf)?)
    }

    pub fn coalescence(&self) -> &CoalescenceMeasure {
        &self.lam
    }

    pub fn splitting(&self) -> &SplittingMeasure {
        &self.mu
    }

    pub fn tables(&self) -> &Arc<LambdaTables> {
        &self.tables
    }

    fn split_index(&self, n: u64) -> usize {
        if (n as usize) < J_CACHE {
            self.j_cache[n as usize]
        } else {
            self.tables.index_nearest(std::f64::consts::SQRT_2 / n as f64)
        }
    }

    /// Envelope rate of merger proposals from n blocks and the split index.
    fn proposal_rate(&self, n: u64) -> (f64, f64, usize) {
        if n < 2 {
            return (0.0, 0.0, 0);
        }
        let nf = n as f64;
        let c2 = 0.5 * nf * (nf - 1.0);
        let j = self.split_index(n);
        let low = c2 * self.tables.mass_below(j);
        (low, low + self.tables.rate_above(j), j)
    }

    /// One proposal from state n; `None` when the proposal is rejected.
    fn propose_merger<R: Rng + ?Sized>(&self, rng: &mut R, n: u64, low: f64, total: f64, j: usize) -> Option<u64> {
        let nf = n as f64;
        let (mark, accept) = if rng.random::<f64>() * total < low {
            let m = self.tables.sample_below(rng, j);
            let c2 = 0.5 * nf * (nf - 1.0);
            (m, p_ge2_over_z2(nf, m.z) / c2)
        } else {
            let m = self.tables.sample_between(rng, j, self.last);
            (m, p_ge2_over_z2(nf, m.z) * m.z * m.z)
        };
        if rng.random::<f64>() < accept {
            let b = binomial_ge2(rng, n, mark);
            Some(n - b + 1)
        } else {
            None
        }
    }

    fn apply_split(&self, n: u64, s: Split) -> State {
        match s {
            Split::Infinite => State::Infinity,
            Split::Finite(k) => State::Finite(n.saturating_add(k - 1)),
        }
    }

    /// Holding time and next state from n blocks. Returns (∞, n) when n is absorbing.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, state: State) -> Result<(f64, State)> {
        let n = match state {
            State::Finite(n) if n >= 1 => n,
            State::Finite(_) => return invalid("state must be ≥ 1"),
            State::Infinity => return invalid("step from the ∞ sentinel"),
        };
        let (low, rc, j) = self.proposal_rate(n);
        let ru = n as f64 * self.w_up;
        let r = rc + ru;
        if !(r > 0.0) {
            return Ok((f64::INFINITY, state));
        }
        let mut t = 0.0;
        loop {
            let e: f64 = rng.sample(Exp1);
            t += e / r;
            if rng.random::<f64>() * r < ru {
                return Ok((t, self.apply_split(n, self.up.sample(rng))));
            }
            if let Some(m) = self.propose_merger(rng, n, low, rc, j) {
                return Ok((t, State::Finite(m)));
            }
        }
    }

    fn rate_grid(&self) -> Result<&[(f64, f64)]> {
        let g = self.rate_grid.get_or_init(|| {
            let mut out = Vec::new();
            for i in 0..=(4 * 40) {
                let n = 2f64.powf(1.0 + i as f64 / 4.0);
                let coal = self
                    .lam
                    .integrate(0.0, 0.0, move |z| p_ge2_over_z2(n, z), Tol::new(0.0, 1e-9))
                    .map_err(|e| e.to_string())?;
                let r = coal + n * self.w_up;
                out.push((n.ln(), r.ln()));
            }
            Ok(out)
        });
        match g {
            Ok(v) => Ok(v),
            Err(msg) => Err(Error::NumericFailure { msg: msg.clone(), bound: f64::NAN }),
        }
    }

    /// ln R and d ln R / d ln n at n by interpolation on the log grid.
    fn log_rate(&self, n: f64) -> Result<(f64, f64)> {
        let g = self.rate_grid()?;
        let ln = n.ln();
        let i = g.partition_point(|p| p.0 <= ln).clamp(1, g.len() - 1);
        let (a, b) = (g[i - 1], g[i]);
        let slope = (b.1 - a.1) / (b.0 - a.0);
        Ok((a.1 + slope * (ln - a.0), slope))
    }

    /// Projected time to reach ∞ from n, given the number of transitions
    /// taken since the path was last at or below n_cap/2.
    fn projected_remaining(&self, n: u64, k_obs: u64) -> Result<f64> {
        let (ln_r, slope) = self.log_rate(n as f64)?;
        if !(slope > 0.0) {
            return Ok(f64::INFINITY);
        }
        Ok(k_obs.max(1) as f64 / ln_r.exp() / (1.0 - 2f64.powf(-slope)))
    }

    fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n0: u64,
        horizon: f64,
        n_cap: u64,
        max_events: usize,
        obs: &mut dyn FnMut(f64, f64, State),
    ) -> Result<RunResult> {
        let mut res = RunResult { events: Vec::new(), events_truncated: false, outcome: Outcome::Horizon, max_state: n0 };
        let mut n = n0;
        let mut t = 0.0;
        let mut seg = 0.0;
        let mut since_low = 0u64;
        let push = |res: &mut RunResult, t: f64, s: State| {
            if res.events.len() < max_events {
                res.events.push((t, s));
            } else {
                res.events_truncated = true;
            }
        };
        loop {
            let (low, rc, j) = self.proposal_rate(n);
            let ru = n as f64 * self.w_up;
            let r = rc + ru;
            if !(r > 0.0) {
                obs(seg, horizon, State::Finite(n));
                return Ok(res);
            }
            let e: f64 = rng.sample(Exp1);
            let t_next = t + e / r;
            if t_next >= horizon {
                obs(seg, horizon, State::Finite(n));
                return Ok(res);
            }
            t = t_next;
            let next = if rng.random::<f64>() * r < ru {
                self.apply_split(n, self.up.sample(rng))
            } else {
                match self.propose_merger(rng, n, low, rc, j) {
                    Some(m) => State::Finite(m),
                    None => continue,
                }
            };
            obs(seg, t, State::Finite(n));
            seg = t;
            push(&mut res, t, next);
            let m = match next {
                State::Infinity => {
                    obs(t, horizon, State::Infinity);
                    res.outcome = Outcome::Exploded(t);
                    return Ok(res);
                }
                State::Finite(m) => m,
            };
            n = m;
            res.max_state = res.max_state.max(n);
            since_low += 1;
            if n <= n_cap / 2 {
                since_low = 0;
            }
            if n > n_cap {
                let rem = self.projected_remaining(n, since_low)?;
                if rem < PROJECTION_FRACTION * horizon {
                    let zeta = t + rem;
                    if zeta < horizon {
                        obs(t, zeta, State::Finite(n));
                        obs(zeta, horizon, State::Infinity);
                        push(&mut res, zeta, State::Infinity);
                        res.outcome = Outcome::Exploded(zeta);
                    } else {
                        obs(t, horizon, State::Finite(n));
                    }
                    return Ok(res);
                }
                if n > HARD_CAP_FACTOR.saturating_mul(n_cap) {
                    obs(t, horizon, State::Finite(n));
                    res.outcome = Outcome::Inconclusive;
                    return Ok(res);
                }
            }
        }
    }

    /// Simulates one path up to `horizon`, recording the state at `t_grid`.
    #[allow(clippy::too_many_arguments)]
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n0: u64,
        horizon: f64,
        mode: Mode,
        n_cap: u64,
        t_grid: &[f64],
        max_events: usize,
    ) -> Result<ChainPath> {
        if n0 < 1 {
            return invalid("n0 must be ≥ 1");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid("horizon must be positive and finite");
        }
        if n_cap < n0.saturating_mul(10) {
            return invalid(format!("n_cap = {n_cap} must be at least 10·n0"));
        }
        if t_grid.iter().any(|&g| !(g > 0.0 && g <= horizon)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("t_grid must be increasing within (0, horizon]");
        }
        let mut grid_states = vec![State::Finite(n0); t_grid.len()];
        let mut gi = 0usize;
        let mut record = |_: f64, t1: f64, s: State| {
            // segment [t0, t1) covers grid times below t1; the last covers the horizon itself
            while gi < t_grid.len() && (t_grid[gi] < t1 || t1 >= horizon) {
                grid_states[gi] = s;
                gi += 1;
            }
        };
        let res = self.run(rng, n0, horizon, n_cap, max_events, &mut record)?;
        let (exploded, zeta_inf, inconclusive) = match res.outcome {
            Outcome::Horizon => (false, None, false),
            Outcome::Exploded(z) => (true, Some(z), false),
            Outcome::Inconclusive => (false, None, true),
        };
        Ok(ChainPath {
            initial_n: State::Finite(n0),
            events: res.events,
            events_truncated: res.events_truncated,
            exploded,
            zeta_inf,
            stopped: exploded && mode == Mode::StoppedAtInfinity,
            inconclusive,
            horizon,
            n_cap,
            t_grid: t_grid.to_vec(),
            grid_states,
            max_state: res.max_state,
        })
    }

    /// Runs an ensemble of paths from n0 on the runner's seeded streams.
    #[allow(clippy::too_many_arguments)]
    pub fn ensemble(
        &self,
        runner: &Runner,
        tag: &str,
        n_paths: usize,
        n0: u64,
        horizon: f64,
        mode: Mode,
        n_cap: u64,
        t_grid: &[f64],
    ) -> Result<Vec<ChainPath>> {
        runner
            .run(tag, n_paths, |_, rng| self.simulate(rng, n0, horizon, mode, n_cap, t_grid, 0))
            .into_iter()
            .collect()
    }

    /// Occupation measure of one path over [burn_in, horizon]: (time spent at
    /// each n < cutoff, time above cutoff or at ∞, whether the path passed n_cap).
    fn occupation<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n0: u64,
        burn_in: f64,
        horizon: f64,
        n_cap: u64,
        cutoff: usize,
    ) -> Result<(Vec<f64>, f64, bool)> {
        let mut occ = vec![0.0; cutoff];
        let mut beyond = 0.0;
        let mut obs = |t0: f64, t1: f64, s: State| {
            let a = t0.max(burn_in);
            if t1 <= a {
                return;
            }
            match s {
                State::Finite(n) if (n as usize) < cutoff => occ[n as usize] += t1 - a,
                _ => beyond += t1 - a,
            }
        };
        let res = self.run(rng, n0, horizon, n_cap, 0, &mut obs)?;
        let capped = res.max_state > n_cap || !matches!(res.outcome, Outcome::Horizon);
        Ok((occ, beyond, capped))
    }

    /// Time average of x^{N_t} over [burn_in, horizon] along one path, for
    /// each x in `xs`, and whether the path passed n_cap.
    #[allow(clippy::too_many_arguments)]
    pub fn time_average_pgf<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n0: u64,
        burn_in: f64,
        horizon: f64,
        n_cap: u64,
        xs: &[f64],
    ) -> Result<(Vec<f64>, bool)> {
        if !(burn_in >= 0.0 && horizon > burn_in && horizon.is_finite()) {
            return invalid("need 0 ≤ burn_in < horizon < ∞");
        }
        let mut acc = vec![Neumaier::default(); xs.len()];
        let mut obs = |t0: f64, t1: f64, s: State| {
            let a = t0.max(burn_in);
            if t1 > a {
                for (v, &x) in acc.iter_mut().zip(xs) {
                    v.add((t1 - a) * s.pow(x));
                }
            }
        };
        let res = self.run(rng, n0, horizon, n_cap, 0, &mut obs)?;
        let capped = res.max_state > n_cap || !matches!(res.outcome, Outcome::Horizon);
        let w = horizon - burn_in;
        Ok((acc.iter().map(|v| v.value() / w).collect(), capped))
    }

    /// First time the path from n0 is above `level` (∞ counts), or None if
    /// that does not happen before `horizon`.
    pub fn hitting_time_above<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n0: u64,
        level: u64,
        horizon: f64,
        n_cap: u64,
    ) -> Result<Option<f64>> {
        if n0 > level {
            return Ok(Some(0.0));
        }
        if n_cap < level {
            return invalid("n_cap must be at least the level");
        }
        let mut hit = None;
        let mut obs = |t0: f64, _: f64, s: State| {
            if hit.is_none() && s.finite().is_none_or(|n| n > level) {
                hit = Some(t0);
            }
        };
        self.run(rng, n0, horizon, n_cap, 0, &mut obs)?;
        Ok(hit)
    }
}

/// B ~ Binomial(n, z) conditioned on B ≥ 2.
fn binomial_ge2<R: Rng + ?Sized>(rng: &mut R, n: u64, m: Mark) -> u64 {
    let nf = n as f64;
    if n == 2 {
        return 2;
    }
    if m.z <= 0.5 {
        if nf * m.z < 10.0 {
            // inversion from k = 2 on weights pmf(k)/z²
            let target = rng.random::<f64>() * p_ge2_over_z2(nf, m.z);
            let ratio = m.z / m.zc;
            let mut q = 0.5 * nf * (nf - 1.0) * ((nf - 2.0) * m.zc.ln()).exp();
            let mut cum = q;
            let mut k = 2u64;
            while cum < target && k < n {
                q *= (n - k) as f64 / (k + 1) as f64 * ratio;
                k += 1;
                cum += q;
            }
            k
        } else {
            let bin = Binomial::new(n, m.z).expect("valid binomial");
            loop {
                let b = bin.sample(rng);
                if b >= 2 {
                    return b;
                }
            }
        }
    } else {
        // count the blocks left out, C = n - B ~ Bin(n, 1 - z), C ≤ n - 2
        let c = if nf * m.zc < 10.0 {
            let ratio = m.zc / m.z;
            let p0 = (nf * (-m.zc).ln_1p()).exp();
            loop {
                let u = rng.random::<f64>();
                let mut q = p0;
                let mut cum = q;
                let mut c = 0u64;
                while cum < u && c < n {
                    q *= (n - c) as f64 / (c + 1) as f64 * ratio;
                    c += 1;
                    cum += q;
                }
                if c + 2 <= n {
                    break c;
                }
            }
        } else {
            let bin = Binomial::new(n, m.zc).expect("valid binomial");
            loop {
                let c = bin.sample(rng);
                if c + 2 <= n {
                    break c;
                }
            }
        };
        n - c
    }
}

fn usable(paths: &[ChainPath]) -> Result<(Vec<&ChainPath>, usize)> {
    if paths.is_empty() {
        return invalid("empty ensemble");
    }
    let n0 = paths[0].initial_n;
    if paths.iter().any(|p| p.initial_n != n0) {
        return invalid("paths must share n0");
    }
    let ok: Vec<&ChainPath> = paths.iter().filter(|p| !p.inconclusive).collect();
    Ok((ok.clone(), paths.len() - ok.len()))
}

/// E[x^{N_t}] with x^∞ = 1{x = 1}; Inconclusive paths are excluded.
pub fn pgf_estimate(paths: &[ChainPath], x: f64, t: f64) -> Result<ChainEnsembleStats> {
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("x = {x} outside [0,1]"));
    }
    let (ok, bad) = usable(paths)?;
    let vals: Vec<f64> = ok.iter().map(|p| p.state_at(t).map(|s| s.pow(x))).collect::<Result<_>>()?;
    Ok(ChainEnsembleStats::from_stats(Stats::from_values(vals), bad))
}

/// P(ζ_∞ > t).
pub fn survival_estimate(paths: &[ChainPath], t: f64) -> Result<ChainEnsembleStats> {
    let (ok, bad) = usable(paths)?;
    if let Some(p) = ok.first() {
        if t > p.horizon * (1.0 + 1e-12) || !(t >= 0.0) {
            return invalid(format!("t = {t} outside [0, horizon]"));
        }
    }
    let vals = ok.iter().map(|p| match p.zeta_inf {
        Some(z) if z <= t => 0.0,
        _ => 1.0,
    });
    Ok(ChainEnsembleStats::from_stats(Stats::from_values(vals), bad))
}

/// Time-averaged occupation law pooled across paths.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryEstimate {
    /// pmf[n] for n < pmf.len(); pmf[0] is always 0.
    pub pmf: Vec<f64>,
    /// Mass at states ≥ pmf.len() (or ∞).
    pub tail_mass: f64,
    pub n_paths: usize,
    pub capped_fraction: f64,
}

impl StationaryEstimate {
    /// Σ π(n) xⁿ; the tail mass contributes only at x = 1.
    pub fn pgf(&self, x: f64) -> f64 {
        let mut s = Neumaier::default();
        for (n, &p) in self.pmf.iter().enumerate().skip(1) {
            s.add(p * State::Finite(n as u64).pow(x));
        }
        if x == 1.0 {
            s.add(self.tail_mass);
        }
        s.value()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Total variation distance between two estimates.
    pub fn tv_distance(&self, other: &StationaryEstimate) -> f64 {
        let m = self.pmf.len().max(other.pmf.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let d: f64 = (0..m).map(|i| (get(&self.pmf, i) - get(&other.pmf, i)).abs()).sum();
        0.5 * (d + (self.tail_mass - other.tail_mass).abs())
    }
}

pub const STATIONARY_CUTOFF: usize = 1 << 16;

/// Empirical stationary law from the time average over [burn_in, horizon].
#[allow(clippy::too_many_arguments)]
pub fn stationary_estimate(
    chain: &EfcChain,
    runner: &Runner,
    tag: &str,
    n0: u64,
    burn_in: f64,
    horizon: f64,
    n_paths: usize,
    n_cap: u64,
) -> Result<StationaryEstimate> {
    if !(burn_in >= 0.0 && horizon > burn_in && horizon.is_finite()) {
        return invalid("need 0 ≤ burn_in < horizon < ∞");
    }
    if n_paths == 0 {
        return invalid("n_paths must be positive");
    }
    let cutoff = STATIONARY_CUTOFF.min(n_cap as usize + 1);
    let runs: Vec<(Vec<f64>, f64, bool)> = runner
        .run(tag, n_paths, |_, rng| chain.occupation(rng, n0, burn_in, horizon, n_cap, cutoff))
        .into_iter()
        .collect::<Result<_>>()?;
    let capped = runs.iter().filter(|r| r.2).count();
    let fraction = capped as f64 / n_paths as f64;
    if fraction > 0.1 {
        return Err(Error::RecurrenceDoubtful { fraction });
    }
    let width = horizon - burn_in;
    let mut acc: Vec<Neumaier> = vec![Neumaier::default(); cutoff];
    let mut tail = Neumaier::default();
    for (occ, beyond, _) in &runs {
        for (a, &o) in acc.iter_mut().zip(occ) {
            if o > 0.0 {
                a.add(o);
            }
        }
        tail.add(*beyond);
    }
    let norm = 1.0 / (width * n_paths as f64);
    let mut pmf: Vec<f64> = acc.iter().map(|a| a.value() * norm).collect();
    while pmf.len() > 2 && pmf.last() == Some(&0.0) {
        pmf.pop();
    }
    Ok(StationaryEstimate { pmf, tail_mass: tail.value() * norm, n_paths, capped_fraction: fraction })
}
