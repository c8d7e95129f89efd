//! Λ-Wright–Fisher frequency process with selection.
//!
//! Marks z ≥ ε arrive at rate ∫_ε^1 z⁻²Λ(dz); with probability X the jump is
//! x → x + z(1-x), otherwise x → (1-z)x. Marks below ε are replaced by a
//! Gaussian increment with variance Λ((0,ε))x(1-x)dt. Between marks the state
//! follows the selection flow, split symmetrically around each time window.
//!
//! Within ε/κ of a boundary the small-jump part is refined relative to the
//! distance s to that boundary: marks below δ ≈ κs act multiplicatively on s,
//! marks in [δ, ε) that push toward the boundary are aggregated as a
//! log-normal factor, and marks in [δ, ε) that push away are simulated
//! exactly by thinning.
//!
//! The state is carried as the pair (x, 1-x) so that both ends keep full
//! relative precision.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Runner, Stats};
use crate::error::{invalid, Result};
use crate::flow::{DriftFlow, DriftIntegrator};
use crate::measures::{CoalescenceMeasure, SelectionFunction};
use crate::tables::{LambdaTables, Mark, RangeSampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    /// Marks below eps are treated as small jumps.
    pub eps: f64,
    pub drift_integrator: DriftIntegrator,
    /// Recording step used when no explicit grid is given.
    pub record_dt: f64,
    pub eta0: f64,
    /// Absorption level at 1 in the minimal mode; in the extended mode the
    /// frequency is held at distance eta1 from 1 instead.
    pub eta1: f64,
    /// Longest window between flow half-steps.
    pub dt_max: f64,
    /// Boundary refinement starts at distance eps/kappa.
    pub kappa: f64,
    /// Marks are generated down to this cutoff and those below eps are
    /// discarded, so that runs at different eps share random numbers.
    pub gen_eps: Option<f64>,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            eps: 1e-3,
            drift_integrator: DriftIntegrator::Tabulated,
            record_dt: 0.25,
            eta0: 1e-12,
            eta1: 1e-9,
            dt_max: 1e-2,
            kappa: 0.1,
            gen_eps: None,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return invalid(format!("eps = {} must lie in (0, 0.5)", self.eps));
        }
        if !(self.eta0 > 0.0 && self.eta0 < 1e-6 && self.eta1 > 0.0 && self.eta1 < 1e-6) {
            return invalid("absorption thresholds must lie in (0, 1e-6)");
        }
        if !(self.dt_max > 0.0 && self.record_dt > 0.0) {
            return invalid("dt_max and record_dt must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return invalid("kappa must lie in (0,1)");
        }
        if let Some(g) = self.gen_eps {
            if !(g > 0.0 && g <= self.eps) {
                return invalid("gen_eps must lie in (0, eps]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WfMode {
    /// Stopped at the first boundary hit.
    Minimal,
    /// Extra drift -λx; 1 is left immediately and is not absorbing.
    LambdaExtension { lam_mut: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct FreqPath {
    pub x0: f64,
    pub t_grid: Vec<f64>,
    pub grid_x: Vec<f64>,
    /// Jump events (time, state after), possibly cut at a memory budget.
    pub jumps: Vec<(f64, f64)>,
    pub jumps_truncated: bool,
    pub n_jumps: u64,
    pub tau0: Option<f64>,
    pub tau1: Option<f64>,
    pub horizon: f64,
    /// Time the simulation stopped (horizon, or earlier if an observer stopped it).
    pub t_end: f64,
    /// State when the simulation stopped.
    pub x_end: f64,
}

impl FreqPath {
    pub fn absorbed_at_0(&self) -> bool {
        self.tau0.is_some()
    }

    pub fn absorbed_at_1(&self) -> bool {
        self.tau1.is_some()
    }

    pub fn state_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) {
            return invalid(format!("t = {t} outside [0, horizon = {}]", self.horizon));
        }
        if t == 0.0 {
            return Ok(self.x0);
        }
        let scale = t.max(1.0) * 1e-12;
        match self.t_grid.iter().position(|&g| (g - t).abs() <= scale) {
            Some(i) => Ok(self.grid_x[i]),
            None => invalid(format!("t = {t} is not on the recording grid")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy)]
enum Plan {
    Interior,
    Boundary {
        side: Side,
        s_plan: f64,
        /// Breakpoint index of δ.
        i_d: usize,
        drift: f64,
        var: f64,
        q: f64,
        r_mid: f64,
        max_len: f64,
    },
}

/// Precomputed simulation data for one (Λ, f, config, mode).
#[derive(Debug)]
pub struct WfModel {
    cfg: SdeConfig,
    mode: WfMode,
    tables: Arc<LambdaTables>,
    flow: DriftFlow,
    j_eps: usize,
    big: RangeSampler,
    inv_big_rate: f64,
    small_var: f64,
    boundary_s: f64,
}

struct Walker<'a, R: Rng + ?Sized> {
    m: &'a WfModel,
    rng: &'a mut R,
    x: f64,
    y: f64,
    t: f64,
    n_jumps: u64,
    jumps: Vec<(f64, f64)>,
    jumps_truncated: bool,
    max_jumps: usize,
    tau0: Option<f64>,
    tau1: Option<f64>,
}

impl WfModel {
    pub fn new(lam: &CoalescenceMeasure, sel: &SelectionFunction, cfg: &SdeConfig, mode: WfMode) -> Result<Self> {
        cfg.validate()?;
        let gen = cfg.gen_eps.unwrap_or(cfg.eps);
        let tables = Arc::new(LambdaTables::new(lam, &[cfg.eps, gen])?);
        Self::with_tables(tables, sel, cfg, mode)
    }

    /// Uses prebuilt tables, which must contain eps and gen_eps as breakpoints.
    pub fn with_tables(tables: Arc<LambdaTables>, sel: &SelectionFunction, cfg: &SdeConfig, mode: WfMode) -> Result<Self> {
        cfg.validate()?;
        let lam_mut = match mode {
            WfMode::Minimal => 0.0,
            WfMode::LambdaExtension { lam_mut } => {
                if !(lam_mut > 0.0 && lam_mut.is_finite()) {
                    return invalid("lam_mut must be positive");
                }
                lam_mut
            }
        };
        let gen = cfg.gen_eps.unwrap_or(cfg.eps);
        let j_eps = tables.index_below(cfg.eps);
        let j_gen = tables.index_below(gen);
        if tables.bp(j_eps) != cfg.eps || tables.bp(j_gen) != gen {
            return invalid("tables lack the eps breakpoints");
        }
        let big = tables.range_sampler(j_gen)?;
        let inv_big_rate = if big.rate() > 0.0 { 1.0 / big.rate() } else { f64::INFINITY };
        let flow = DriftFlow::new(sel, lam_mut, cfg.drift_integrator)?;
        Ok(WfModel {
            cfg: *cfg,
            mode,
            small_var: tables.mass_below(j_eps),
            tables,
            flow,
            j_eps,
            big,
            inv_big_rate,
            boundary_s: cfg.eps / cfg.kappa,
        })
    }

    pub fn config(&self) -> &SdeConfig {
        &self.cfg
    }

    pub fn flow(&self) -> &DriftFlow {
        &self.flow
    }

    /// Rate of mark generation, ∫ z⁻²Λ(dz) above the generation cutoff.
    pub fn mark_rate(&self) -> f64 {
        self.big.rate()
    }

    fn plan(&self, x: f64, y: f64) -> Plan {
        let (side, s) = if x <= y { (Side::Zero, x) } else { (Side::One, y) };
        if s >= self.boundary_s {
            return Plan::Interior;
        }
        let t = &self.tables;
        let i_d = t.index_below(self.cfg.kappa * s).clamp(1, self.j_eps);
        let (m1, m2) = t.log_moments_between(i_d, self.j_eps);
        let small = if s > 0.0 { t.mass_below(i_d) * (1.0 - s) / s } else { 0.0 };
        let drift = -0.5 * small - (1.0 - s) * m1;
        let var = small + (1.0 - s) * m2;
        let q = 2.0 * s;
        let r_mid = q * t.rate_between(i_d, self.j_eps);
        let mut max_len = f64::INFINITY;
        if var > 0.0 {
            max_len = max_len.min(0.01 / var);
        }
        if drift != 0.0 {
            max_len = max_len.min(0.1 / drift.abs());
        }
        Plan::Boundary { side, s_plan: s, i_d, drift, var, q, r_mid, max_len }
    }

    /// Simulates one path, recording the state at each grid time.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R, x0: f64, horizon: f64, t_grid: &[f64], max_jumps: usize) -> Result<FreqPath> {
        self.simulate_observed(rng, x0, horizon, t_grid, max_jumps, &mut |_, _, _| true)
    }

    /// As `simulate`; `obs(t, x, 1-x)` is called at the end of every window
    /// and stops the path early by returning false.
    pub fn simulate_observed<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x0: f64,
        horizon: f64,
        t_grid: &[f64],
        max_jumps: usize,
        obs: &mut dyn FnMut(f64, f64, f64) -> bool,
    ) -> Result<FreqPath> {
        if !(0.0..=1.0).contains(&x0) {
            return invalid(format!("x0 = {x0} outside [0,1]"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid("horizon must be positive and finite");
        }
        if t_grid.iter().any(|&g| !(g > 0.0 && g <= horizon)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("t_grid must be increasing within (0, horizon]");
        }
        let mut w = Walker {
            m: self,
            rng,
            x: x0,
            y: 1.0 - x0,
            t: 0.0,
            n_jumps: 0,
            jumps: Vec::new(),
            jumps_truncated: false,
            max_jumps,
            tau0: None,
            tau1: None,
        };
        let mut grid_x = Vec::with_capacity(t_grid.len());
        w.check_absorbed();
        let mut pending = 0.0;
        let mut gi = 0;
        let mut stopped = false;
        while w.t < horizon && w.absorbed().is_none() {
            let next_stop = if gi < t_grid.len() { t_grid[gi] } else { horizon };
            let h = self.cfg.dt_max.min(next_stop - w.t);
            let reaches_stop = h >= next_stop - w.t;
            w.advance_flow(pending + 0.5 * h);
            if w.absorbed().is_some() {
                break;
            }
            let end = w.window(h);
            pending = end - 0.5 * h;
            if reaches_stop && end == h {
                w.t = next_stop;
            } else {
                w.t += end;
            }
            if w.absorbed().is_some() {
                break;
            }
            if gi < t_grid.len() && w.t >= t_grid[gi] {
                w.advance_flow(pending);
                pending = 0.0;
                if w.absorbed().is_none() {
                    grid_x.push(w.x);
                    gi += 1;
                }
            }
            if !obs(w.t, w.x, w.y) {
                stopped = true;
                break;
            }
        }
        if !stopped && w.absorbed().is_none() && pending > 0.0 {
            w.advance_flow(pending);
        }
        let fill = match w.absorbed() {
            Some(Side::Zero) => 0.0,
            Some(Side::One) => 1.0,
            None => w.x,
        };
        while grid_x.len() < t_grid.len() {
            if stopped && w.absorbed().is_none() {
                grid_x.push(f64::NAN);
            } else {
                grid_x.push(fill);
            }
        }
        let t_end = if stopped { w.t } else { horizon };
        Ok(FreqPath {
            x0,
            t_grid: t_grid.to_vec(),
            grid_x,
            jumps: w.jumps,
            jumps_truncated: w.jumps_truncated,
            n_jumps: w.n_jumps,
            tau0: w.tau0,
            tau1: w.tau1,
            horizon,
            t_end,
            x_end: fill,
        })
    }

    /// Runs an ensemble of paths from x0 on the runner's seeded streams.
    #[allow(clippy::too_many_arguments)]
    pub fn ensemble(&self, runner: &Runner, tag: &str, n_paths: usize, x0: f64, horizon: f64, t_grid: &[f64]) -> Result<Vec<FreqPath>> {
        runner
            .run(tag, n_paths, |_, rng| self.simulate(rng, x0, horizon, t_grid, 0))
            .into_iter()
            .collect()
    }
}

impl<R: Rng + ?Sized> Walker<'_, R> {
    fn absorbed(&self) -> Option<Side> {
        if self.tau0.is_some() {
            Some(Side::Zero)
        } else if self.tau1.is_some() {
            Some(Side::One)
        } else {
            None
        }
    }

    fn normalize(&mut self) {
        if self.x <= self.y {
            self.y = 1.0 - self.x;
        } else {
            self.x = 1.0 - self.y;
        }
    }

    /// Declares absorption at time `at`; true if the path is absorbed.
    fn check_absorbed_at(&mut self, at: f64) -> bool {
        if self.x < self.m.cfg.eta0 {
            self.x = 0.0;
            self.y = 1.0;
            self.tau0 = Some(at);
            return true;
        }
        if self.m.mode == WfMode::Minimal && self.y < self.m.cfg.eta1 {
            self.x = 1.0;
            self.y = 0.0;
            self.tau1 = Some(at);
            return true;
        }
        if self.y < self.m.cfg.eta1 {
            self.y = self.m.cfg.eta1;
            self.x = 1.0 - self.y;
        }
        false
    }

    fn check_absorbed(&mut self) -> bool {
        let t = self.t;
        self.check_absorbed_at(t)
    }

    fn advance_flow(&mut self, dt: f64) {
        if dt > 0.0 {
            let (x, y) = self.m.flow.advance(self.x, self.y, dt);
            self.x = x;
            self.y = y;
            self.normalize();
            self.check_absorbed();
        }
    }

    fn record_jump(&mut self, at: f64) {
        self.n_jumps += 1;
        if self.jumps.len() < self.max_jumps {
            self.jumps.push((at, self.x));
        } else if self.max_jumps > 0 {
            self.jumps_truncated = true;
        }
    }

    /// Applies the mark in the direction given by u.
    fn jump(&mut self, m: Mark, u: f64) {
        if u < self.x {
            self.x += m.z * self.y;
            self.y *= m.zc;
        } else {
            self.y += m.z * self.x;
            self.x *= m.zc;
        }
        self.normalize();
    }

    fn gauss(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn interior_noise(&mut self, dt: f64) {
        let var = self.m.small_var * self.x * self.y * dt;
        if var > 0.0 {
            let d = (var.sqrt() * self.gauss()).clamp(-0.5 * self.x, 0.5 * self.y);
            self.x += d;
            self.y -= d;
            self.normalize();
        }
    }

    /// Multiplicative small-jump factor on the boundary distance over dt.
    fn boundary_noise(&mut self, side: Side, drift: f64, var: f64, dt: f64) {
        if dt <= 0.0 || var <= 0.0 && drift == 0.0 {
            return;
        }
        let z = if var > 0.0 { self.gauss() } else { 0.0 };
        let f = (drift * dt + (var * dt).sqrt() * z).exp();
        match side {
            Side::Zero => {
                self.x = (self.x * f).min(0.5);
                self.y = 1.0 - self.x;
            }
            Side::One => {
                self.y = (self.y * f).min(0.5);
                self.x = 1.0 - self.y;
            }
        }
    }

    /// Simulates marks and small jumps over a window of length h whose first
    /// flow half-step has been applied. Returns the window's actual length,
    /// which is shorter than h after a drastic change of state.
    fn window(&mut self, h: f64) -> f64 {
        let m = self.m;
        let eps = m.cfg.eps;
        let half = 0.5 * h;
        let mut end = h;
        let mut tau = 0.0;
        while tau < end {
            match m.plan(self.x, self.y) {
                Plan::Interior => {
                    let mut owed = 0.0;
                    let mut flip = false;
                    loop {
                        let e: f64 = if m.inv_big_rate.is_finite() {
                            self.rng.sample::<f64, _>(Exp1) * m.inv_big_rate
                        } else {
                            f64::INFINITY
                        };
                        if tau + e >= end {
                            owed += end - tau;
                            tau = end;
                            break;
                        }
                        tau += e;
                        owed += e;
                        let mark = m.big.sample(&m.tables, self.rng);
                        let u: f64 = self.rng.random();
                        if mark.z < eps {
                            continue;
                        }
                        self.jump(mark, u);
                        self.record_jump(self.t + tau);
                        if self.x.min(self.y) < m.boundary_s {
                            flip = true;
                            break;
                        }
                    }
                    self.interior_noise(owed);
                    if self.check_absorbed_at(self.t + tau) {
                        return tau;
                    }
                    if flip {
                        end = tau.max(half).min(end);
                    }
                }
                Plan::Boundary { side, s_plan, i_d, drift, var, q, r_mid, max_len } => {
                    let mut seg_end = end.min(tau + max_len);
                    if seg_end <= tau {
                        seg_end = end.min(tau + tau.abs().max(f64::MIN_POSITIVE) * 1e-12);
                    }
                    let r_big = m.big.rate();
                    let rate = r_big + r_mid;
                    let mut drastic = false;
                    loop {
                        let e: f64 = if rate > 0.0 { self.rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
                        if tau + e >= seg_end {
                            self.boundary_noise(side, drift, var, seg_end - tau);
                            tau = seg_end;
                            break;
                        }
                        self.boundary_noise(side, drift, var, e);
                        tau += e;
                        let moved = if self.rng.random::<f64>() * rate < r_big {
                            let mark = m.big.sample(&m.tables, self.rng);
                            let u: f64 = self.rng.random();
                            if mark.z < eps {
                                false
                            } else {
                                self.jump(mark, u);
                                true
                            }
                        } else {
                            let mark = m.tables.sample_between(self.rng, i_d, m.j_eps);
                            let s_cur = if side == Side::Zero { self.x } else { self.y };
                            if self.rng.random::<f64>() * q < s_cur {
                                // jump away from the boundary
                                let u = if side == Side::Zero { 0.0 } else { 1.0 };
                                self.jump(mark, u);
                                true
                            } else {
                                false
                            }
                        };
                        if moved {
                            self.record_jump(self.t + tau);
                            let s = self.x.min(self.y);
                            let flipped = (self.x <= self.y) != (side == Side::Zero);
                            if s > 2.0 * s_plan || s < 0.5 * s_plan || flipped || s >= m.boundary_s {
                                drastic = true;
                                break;
                            }
                        }
                        if self.check_absorbed_at(self.t + tau) {
                            return tau;
                        }
                    }
                    if self.check_absorbed_at(self.t + tau) {
                        return tau;
                    }
                    if drastic {
                        end = tau.max(half).min(end);
                    }
                }
            }
        }
        end
    }
}

/// E[X_t^n]; paths absorbed at 1 contribute 1, at 0 contribute 0.
pub fn moment_estimate(paths: &[FreqPath], n: u32, t: f64) -> Result<Stats> {
    if paths.is_empty() {
        return invalid("empty ensemble");
    }
    if n == 0 {
        for p in paths {
            p.state_at(t)?;
        }
        return Ok(Stats { n_paths: paths.len(), estimate: 1.0, std_error: 0.0 });
    }
    let vals: Vec<f64> = paths.iter().map(|p| p.state_at(t).map(|x| x.powi(n as i32))).collect::<Result<_>>()?;
    Ok(Stats::from_values(vals))
}

#[derive(Debug, Clone, Serialize)]
pub struct HitReport {
    pub p_hit_1: Stats,
    pub p_hit_0: Stats,
    pub p_neither: Stats,
    /// (level, quantile) of τ₁ among paths absorbed at 1.
    pub tau1_quantiles: Vec<(f64, f64)>,
    pub tau0_quantiles: Vec<(f64, f64)>,
}

fn quantiles(mut v: Vec<f64>) -> Vec<(f64, f64)> {
    if v.is_empty() {
        return vec![];
    }
    v.sort_by(f64::total_cmp);
    [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&q| {
            let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            (q, v[i])
        })
        .collect()
}

pub fn hit_estimate(paths: &[FreqPath]) -> Result<HitReport> {
    if paths.is_empty() {
        return invalid("empty ensemble");
    }
    let ind = |f: &dyn Fn(&FreqPath) -> bool| Stats::from_values(paths.iter().map(|p| if f(p) { 1.0 } else { 0.0 }));
    Ok(HitReport {
        p_hit_1: ind(&|p| p.tau1.is_some()),
        p_hit_0: ind(&|p| p.tau0.is_some()),
        p_neither: ind(&|p| p.tau0.is_none() && p.tau1.is_none()),
        tau1_quantiles: quantiles(paths.iter().filter_map(|p| p.tau1).collect()),
        tau0_quantiles: quantiles(paths.iter().filter_map(|p| p.tau0).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::SplittingMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn neutral() -> SelectionFunction {
        SelectionFunction::new(SplittingMeasure::point_mass(1, 1.0).unwrap())
    }

    #[test]
    fn zero_and_one_are_absorbing() {
        let lam = CoalescenceMeasure::uniform(1.0).unwrap();
        let m = WfModel::new(&lam, &neutral(), &SdeConfig::default(), WfMode::Minimal).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let p = m.simulate(&mut r, 0.0, 1.0, &[0.5, 1.0], 0).unwrap();
        assert_eq!(p.grid_x, vec![0.0, 0.0]);
        assert_eq!(p.tau0, Some(0.0));
        let p = m.simulate(&mut r, 1.0, 1.0, &[0.5, 1.0], 0).unwrap();
        assert_eq!(p.grid_x, vec![1.0, 1.0]);
        assert_eq!(moment_estimate(&[p], 3, 1.0).unwrap().estimate, 1.0);
    }

    #[test]
    fn pure_selection_follows_logistic_flow() {
        let lam = CoalescenceMeasure::uniform(1e-6).unwrap();
        let sel = SelectionFunction::new(SplittingMeasure::point_mass(2, 1.0).unwrap());
        let m = WfModel::new(&lam, &sel, &SdeConfig::default(), WfMode::Minimal).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = m.simulate(&mut r, 0.9, 1.0, &[1.0], 0).unwrap();
            if p.n_jumps == 0 {
                let want = 0.9 * (-1.0f64).exp() / (0.1 + 0.9 * (-1.0f64).exp());
                worst = worst.max((p.grid_x[0] - want).abs());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn states_stay_in_unit_interval() {
        let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
        let sel = SelectionFunction::new(SplittingMeasure::power_tail(0.24, 0.5).unwrap());
        let cfg = SdeConfig { eps: 1e-2, ..SdeConfig::default() };
        let m = WfModel::new(&lam, &sel, &cfg, WfMode::LambdaExtension { lam_mut: 0.01 }).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let x0 = (i as f64 + 0.5) / 200.0;
            let p = m.simulate(&mut r, x0, 0.5, &[0.1, 0.2, 0.5], 1000).unwrap();
            for &x in p.grid_x.iter().chain(p.jumps.iter().map(|j| &j.1)) {
                assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(SdeConfig { eps: 0.7, ..SdeConfig::default() }.validate().is_err());
        assert!(SdeConfig { eta0: 1e-3, ..SdeConfig::default() }.validate().is_err());
        assert!(SdeConfig { gen_eps: Some(2e-3), ..SdeConfig::default() }.validate().is_err());
        let lam = CoalescenceMeasure::uniform(1.0).unwrap();
        assert!(WfModel::new(&lam, &neutral(), &SdeConfig::default(), WfMode::LambdaExtension { lam_mut: 0.0 }).is_err());
    }
}
