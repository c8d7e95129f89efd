//! Classification of the boundary 1 of X and of ∞ of N.
//!
//! The analytic classifiers work from regular-variation parameters or from
//! sufficient conditions checked on geometric grids. The probes estimate
//! first-passage, occupation and absorption statistics by simulation and are
//! attached as evidence next to an analytic verdict, never in place of one.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::efc_chain::EfcChain;
use crate::ensemble::{Runner, Stats};
use crate::error::{invalid, Result};
use crate::measures::{CoalescenceMeasure, Family, Pt, SelectionFunction, SplittingMeasure};
use crate::quad::{integrate, Tol};
use crate::rates::{cdi_series, phi_real, Verdict as SeriesVerdict};
use crate::special::linear_fit;
use crate::wf_sde::{SdeConfig, WfMode, WfModel};

/// Ratios this close to a threshold are not classified.
pub const THRESHOLD_TOL: f64 = 1e-12;
/// Deepest grid point 1 - 2^{-J} of the condition checks.
pub const GRID_DEPTH: u32 = 40;
/// Trailing grid points used for "eventually" and limit clauses.
pub const TAIL_WINDOW: usize = 10;
/// Minimum R² for a tail fit to count.
pub const MIN_R2: f64 = 0.99;
/// Log-slope per grid step below which dyadic increments count as geometric decay.
const GEOMETRIC_MARGIN: f64 = 0.05;
/// Distance from -1 that a power-law exponent must keep to be decisive.
const POWER_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    XAt1,
    NAtInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Exit,
    Entrance,
    RegularReflecting,
    RegularForItself,
    Natural,
    Inconclusive,
}

impl Verdict {
    /// The verdict of the other process's boundary.
    pub fn dual(self) -> Verdict {
        match self {
            Verdict::Exit => Verdict::Entrance,
            Verdict::Entrance => Verdict::Exit,
            Verdict::RegularReflecting => Verdict::RegularForItself,
            Verdict::RegularForItself => Verdict::RegularReflecting,
            Verdict::Natural => Verdict::Natural,
            Verdict::Inconclusive => Verdict::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

impl Evidence {
    fn new(name: &str, value: f64, threshold: f64, satisfied: bool) -> Self {
        Evidence { name: name.to_string(), value, threshold, satisfied }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryVerdict {
    pub target: Target,
    pub verdict: Verdict,
    pub instantaneous: Option<bool>,
    pub evidence: Vec<Evidence>,
}

impl BoundaryVerdict {
    /// The same classification stated for the other process.
    pub fn dual(&self) -> BoundaryVerdict {
        BoundaryVerdict {
            target: match self.target {
                Target::XAt1 => Target::NAtInfinity,
                Target::NAtInfinity => Target::XAt1,
            },
            verdict: self.verdict.dual(),
            instantaneous: self.instantaneous,
            evidence: self.evidence.clone(),
        }
    }

    fn inconclusive(target: Target, evidence: Vec<Evidence>) -> Self {
        BoundaryVerdict { target, verdict: Verdict::Inconclusive, instantaneous: None, evidence }
    }
}

/// (lower, upper) thresholds on σ/ρ when α + β = 1.
pub fn rv_thresholds(alpha: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    (1.0 / ((1.0 - alpha) * (2.0 - alpha)), pi / ((2.0 - alpha) * (pi * alpha).sin()))
}

/// (lower, upper) thresholds on b/d when α + β = 1.
pub fn bd_thresholds(alpha: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    (alpha * (pi * alpha).sin() / pi, alpha * (1.0 - alpha))
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= THRESHOLD_TOL * a.abs().max(b.abs()).max(1.0)
}

fn in_open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// Λ ~ ρz^{-β} dz near 0 and μ(ℕ)(x - f(x)) ~ σ(1-x)^α near 1 → verdict on 1 for X.
pub fn classify_rv(alpha: f64, beta: f64, sigma: f64, rho: f64) -> Result<BoundaryVerdict> {
    if !in_open_unit(alpha) || !in_open_unit(beta) {
        return invalid("alpha and beta must lie in (0,1)");
    }
    if !(sigma > 0.0 && sigma.is_finite() && rho > 0.0 && rho.is_finite()) {
        return invalid("sigma and rho must be positive");
    }
    let s = alpha + beta;
    let mut ev = vec![Evidence::new("alpha_plus_beta", s, 1.0, !near(s, 1.0))];
    if !near(s, 1.0) {
        let (verdict, inst) = if s < 1.0 { (Verdict::Entrance, Some(true)) } else { (Verdict::Exit, None) };
        return Ok(BoundaryVerdict { target: Target::XAt1, verdict, instantaneous: inst, evidence: ev });
    }
    let ratio = sigma / rho;
    let (lo, hi) = rv_thresholds(alpha);
    ev.push(Evidence::new("sigma_over_rho_vs_lower", ratio, lo, ratio > lo));
    ev.push(Evidence::new("sigma_over_rho_vs_upper", ratio, hi, ratio > hi));
    if near(ratio, lo) || near(ratio, hi) {
        return Ok(BoundaryVerdict::inconclusive(Target::XAt1, ev));
    }
    let verdict = if ratio > hi {
        Verdict::Entrance
    } else if ratio > lo {
        Verdict::RegularReflecting
    } else {
        Verdict::Exit
    };
    Ok(BoundaryVerdict { target: Target::XAt1, verdict, instantaneous: None, evidence: ev })
}

/// Φ(n) ~ d n^{1+β} and μ(n) ~ b n^{-(1+α)} → verdict on ∞ for N.
pub fn classify_bd(alpha: f64, beta: f64, b: f64, d: f64) -> Result<BoundaryVerdict> {
    if !(alpha > 0.0 && alpha.is_finite()) || !in_open_unit(beta) {
        return invalid("need alpha > 0 and beta in (0,1)");
    }
    if !(b > 0.0 && b.is_finite() && d > 0.0 && d.is_finite()) {
        return invalid("b and d must be positive");
    }
    let s = alpha + beta;
    let mut ev = vec![Evidence::new("alpha_plus_beta", s, 1.0, !near(s, 1.0))];
    if !near(s, 1.0) {
        let (verdict, inst) = if s < 1.0 { (Verdict::Exit, Some(true)) } else { (Verdict::Entrance, None) };
        return Ok(BoundaryVerdict { target: Target::NAtInfinity, verdict, instantaneous: inst, evidence: ev });
    }
    let ratio = b / d;
    let (lo, hi) = bd_thresholds(alpha);
    ev.push(Evidence::new("b_over_d_vs_lower", ratio, lo, ratio > lo));
    ev.push(Evidence::new("b_over_d_vs_upper", ratio, hi, ratio > hi));
    if near(ratio, lo) || near(ratio, hi) {
        return Ok(BoundaryVerdict::inconclusive(Target::NAtInfinity, ev));
    }
    let verdict = if ratio > hi {
        Verdict::Exit
    } else if ratio > lo {
        Verdict::RegularForItself
    } else {
        Verdict::Entrance
    };
    Ok(BoundaryVerdict { target: Target::NAtInfinity, verdict, instantaneous: None, evidence: ev })
}

/// (b, d) from (σ, ρ): d = Γ(1-β)ρ/(β(1+β)), b = ασ/Γ(1-α).
pub fn rv_to_bd(alpha: f64, beta: f64, sigma: f64, rho: f64) -> Result<(f64, f64)> {
    if !in_open_unit(alpha) || !in_open_unit(beta) {
        return invalid("alpha and beta must lie in (0,1)");
    }
    let d = gamma(1.0 - beta) * rho / (beta * (1.0 + beta));
    let b = alpha * sigma / gamma(1.0 - alpha);
    Ok((b, d))
}

/// σ of a power-tail splitting measure: μ(ℕ)(x - f(x)) ~ bΓ(1-α)/α (1-x)^α.
pub fn power_tail_sigma(b: f64, alpha: f64) -> f64 {
    b * gamma(1.0 - alpha) / alpha
}

/// Classifies 1 for X from the measures when Λ carries rv metadata and μ is
/// a power tail; otherwise Inconclusive.
pub fn classify(lam: &CoalescenceMeasure, mu: &SplittingMeasure) -> Result<BoundaryVerdict> {
    let Some(rv) = lam.rv() else {
        return Ok(BoundaryVerdict::inconclusive(Target::XAt1, vec![]));
    };
    let Family::PowerTail { b, alpha } = *mu.family() else {
        return Ok(BoundaryVerdict::inconclusive(Target::XAt1, vec![]));
    };
    if mu.mass_at_infinity() > 0.0 || mu.truncation().is_some() || !in_open_unit(alpha) || !in_open_unit(rv.beta) {
        return Ok(BoundaryVerdict::inconclusive(Target::XAt1, vec![]));
    }
    classify_rv(alpha, rv.beta, power_tail_sigma(b, alpha), rv.rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

impl Outcome {
    fn all(parts: &[Outcome]) -> Outcome {
        if parts.contains(&Outcome::Fails) {
            Outcome::Fails
        } else if parts.iter().all(|&o| o == Outcome::Holds) {
            Outcome::Holds
        } else {
            Outcome::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseReport {
    pub clause: String,
    pub outcome: Outcome,
    /// First grid point at which the clause fails.
    pub failing_point: Option<f64>,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub outcome: Outcome,
    /// Grid indices of the tail window.
    pub window: (u32, u32),
    pub clauses: Vec<ClauseReport>,
    /// Verdicts implied when the condition holds, for X and for N.
    pub implies: Vec<BoundaryVerdict>,
}

impl ConditionReport {
    pub fn satisfied(&self) -> bool {
        self.outcome == Outcome::Holds
    }
}

/// Φ with the floor convention Φ(t) = Φ(⌊t⌋), and Φ = 0 below 2.
fn phi_floor(lam: &CoalescenceMeasure, t: f64) -> Result<f64> {
    let n = t.floor();
    if !(n >= 2.0) {
        return Ok(0.0);
    }
    phi_real(lam, n, 1e-10)
}

/// Decides ∫^∞ finiteness from integrals over consecutive dyadic pieces:
/// geometric decay, then a power law in the piece index (finite iff exponent < -1).
fn tail_integral(name: &str, increments: &[f64], first_index: u32) -> ClauseReport {
    let mut ev = Vec::new();
    if increments.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        ev.push(Evidence::new("non_finite_increment", f64::NAN, 0.0, false));
        return ClauseReport { clause: name.to_string(), outcome: Outcome::Fails, failing_point: None, evidence: ev };
    }
    let k = increments.len();
    let tail = &increments[k - TAIL_WINDOW.min(k)..];
    let js: Vec<f64> = (0..tail.len()).map(|i| (first_index as usize + k - tail.len() + i) as f64).collect();
    let logs: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let (g_slope, _, g_r2) = linear_fit(&js, &logs);
    ev.push(Evidence::new("geometric_log_slope", g_slope, -GEOMETRIC_MARGIN, g_slope < -GEOMETRIC_MARGIN));
    ev.push(Evidence::new("geometric_r2", g_r2, MIN_R2, g_r2 >= MIN_R2));
    let decided = |outcome| ClauseReport { clause: name.to_string(), outcome, failing_point: None, evidence: Vec::new() };
    let non_decreasing = tail.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    ev.push(Evidence::new("increments_non_decreasing", if non_decreasing { 1.0 } else { 0.0 }, 0.0, !non_decreasing));
    let mut rep = if non_decreasing {
        decided(Outcome::Fails)
    } else if g_r2 >= MIN_R2 && g_slope < -GEOMETRIC_MARGIN {
        decided(Outcome::Holds)
    } else if g_r2 >= MIN_R2 && g_slope > GEOMETRIC_MARGIN {
        decided(Outcome::Fails)
    } else {
        let lj: Vec<f64> = js.iter().map(|j| j.ln()).collect();
        let (p, _, p_r2) = linear_fit(&lj, &logs);
        ev.push(Evidence::new("power_exponent", p, -1.0, p < -1.0));
        ev.push(Evidence::new("power_r2", p_r2, MIN_R2, p_r2 >= MIN_R2));
        if p_r2 < MIN_R2 {
            decided(Outcome::Inconclusive)
        } else if p < -1.0 - POWER_MARGIN {
            decided(Outcome::Holds)
        } else if p > -1.0 + POWER_MARGIN {
            decided(Outcome::Fails)
        } else {
            decided(Outcome::Inconclusive)
        }
    };
    rep.evidence = ev;
    rep
}

/// A limit-to-zero clause on the trailing window: the values must decrease
/// with a negative log-slope and a good fit.
fn vanishing_trend(name: &str, points: &[f64], values: &[f64], steps: &[f64]) -> ClauseReport {
    let mut ev = Vec::new();
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        let bad = values.iter().position(|v| !(v.is_finite() && *v > 0.0)).map(|i| points[i]);
        ev.push(Evidence::new("positive_finite_values", 0.0, 0.0, false));
        return ClauseReport { clause: name.to_string(), outcome: Outcome::Inconclusive, failing_point: bad, evidence: ev };
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, _, r2) = linear_fit(steps, &logs);
    let rise = values.windows(2).position(|w| w[1] > w[0]);
    ev.push(Evidence::new("log_slope", slope, 0.0, slope < 0.0));
    ev.push(Evidence::new("fit_r2", r2, MIN_R2, r2 >= MIN_R2));
    ev.push(Evidence::new("last_value", values[values.len() - 1], 0.0, true));
    let outcome = if slope >= 0.0 {
        Outcome::Fails
    } else if rise.is_none() && r2 >= MIN_R2 {
        Outcome::Holds
    } else {
        Outcome::Inconclusive
    };
    let failing_point = match outcome {
        Outcome::Holds => None,
        _ => rise.map(|i| points[i + 1]),
    };
    ClauseReport { clause: name.to_string(), outcome, failing_point, evidence: ev }
}

/// x - f(x) for the normalised selection function.
fn drift_gap(sel: &SelectionFunction, pt: Pt) -> f64 {
    sel.gap(pt) / sel.total_mass()
}

/// Checks condition A with minorant `l(x, 1-x)` on x_j = 1 - 2^{-j}, j ≤ 40.
pub fn check_condition_a<L: Fn(f64, f64) -> f64>(lam: &CoalescenceMeasure, sel: &SelectionFunction, l: L) -> Result<ConditionReport> {
    let j_lo = GRID_DEPTH - TAIL_WINDOW as u32 + 1;
    let window: Vec<u32> = (j_lo..=GRID_DEPTH).collect();
    let ys: Vec<f64> = window.iter().map(|&j| (-(j as f64)).exp2()).collect();
    let xs: Vec<f64> = ys.iter().map(|y| 1.0 - y).collect();
    let steps: Vec<f64> = window.iter().map(|&j| j as f64).collect();
    let mut clauses = Vec::new();

    // (i) x - f(x) ≥ L(x)
    let gaps: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| drift_gap(sel, Pt::from_xy(x, y))).collect();
    let ls: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| l(x, y)).collect();
    let bad = (0..xs.len()).find(|&i| !(ls[i] > 0.0 && gaps[i] >= ls[i]));
    let worst = (0..xs.len()).map(|i| gaps[i] / ls[i]).fold(f64::INFINITY, f64::min);
    clauses.push(ClauseReport {
        clause: "minorant".into(),
        outcome: if bad.is_none() { Outcome::Holds } else { Outcome::Fails },
        failing_point: bad.map(|i| xs[i]),
        evidence: vec![Evidence::new("min_gap_over_minorant", worst, 1.0, worst >= 1.0)],
    });

    // (ii) h = L/((1-x)log(1/(1-x))) non-decreasing
    let hs: Vec<f64> = ls.iter().zip(&ys).map(|(&l, &y)| l / (y * (-y.ln()))).collect();
    let drop = hs.windows(2).position(|w| w[1] < w[0] * (1.0 - THRESHOLD_TOL));
    clauses.push(ClauseReport {
        clause: "h_non_decreasing".into(),
        outcome: if drop.is_none() { Outcome::Holds } else { Outcome::Fails },
        failing_point: drop.map(|i| xs[i + 1]),
        evidence: vec![Evidence::new("h_last", hs[hs.len() - 1], hs[0], hs[hs.len() - 1] >= hs[0])],
    });

    // (iii) ∫^{1-} dx/L(x) < ∞ through dyadic pieces in y = 1 - x
    let mut increments = Vec::with_capacity(GRID_DEPTH as usize);
    for j in 1..=GRID_DEPTH {
        let (a, b) = ((-(j as f64) - 1.0).exp2(), (-(j as f64)).exp2());
        let q = integrate(|y| 1.0 / l(1.0 - y, y), &[a, b], Tol::new(0.0, 1e-8))?;
        increments.push(q.value);
    }
    clauses.push(tail_integral("inverse_minorant_integrable", &increments, 1));

    // (iv) (1-x)²Φ(1/log(1/x))/(x - f(x)) → 0
    let mut ratios = Vec::with_capacity(xs.len());
    for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
        let pt = Pt::from_xy(x, y);
        ratios.push(y * y * phi_floor(lam, 1.0 / pt.lam)? / gaps[i]);
    }
    clauses.push(vanishing_trend("phi_ratio_vanishes", &xs, &ratios, &steps));

    let outcome = Outcome::all(&clauses.iter().map(|c| c.outcome).collect::<Vec<_>>());
    let implies = if outcome == Outcome::Holds {
        let v = BoundaryVerdict {
            target: Target::XAt1,
            verdict: Verdict::Entrance,
            instantaneous: Some(true),
            evidence: vec![Evidence::new("condition_a", 1.0, 1.0, true)],
        };
        vec![v.dual(), v]
    } else {
        Vec::new()
    };
    Ok(ConditionReport { condition: "A".into(), outcome, window: (j_lo, GRID_DEPTH), clauses, implies })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitIntegralReport {
    /// Some(true) finite, Some(false) divergent, None undecided.
    pub finite: Option<bool>,
    /// Integral over [1-10⁻¹, 1-10⁻⁸] plus the extrapolated tail when finite.
    pub value: f64,
    pub drift_index: Option<f64>,
    pub tail_exponent: f64,
    pub evidence: Vec<Evidence>,
    /// X-side verdict (Exit or Natural) when the integral is finite.
    pub verdict: BoundaryVerdict,
}

/// Index of regular variation of x - f(x) at 1 declared by the splitting family.
pub fn declared_drift_index(mu: &SplittingMeasure) -> Option<f64> {
    match mu.family() {
        Family::PowerTail { alpha, .. } if *alpha < 1.0 && mu.truncation().is_none() => Some(*alpha),
        _ => None,
    }
}

const EXIT_Y_LO: f64 = 1e-8;
const EXIT_Y_HI: f64 = 1e-1;

/// ∫^{1-} (x - f(x))/((1-x)³Φ(1/(1-x))) dx with an Exit/Natural sub-verdict.
/// `drift_index` asserts the regular-variation index; without it the family's
/// declared index is used, and with neither the result is Inconclusive.
pub fn check_exit_integral(
    lam: &CoalescenceMeasure,
    sel: &SelectionFunction,
    drift_index: Option<f64>,
    cdi_n_max: u64,
) -> Result<ExitIntegralReport> {
    let index = drift_index.or_else(|| declared_drift_index(sel.measure()));
    let mut ev = Vec::new();
    let none = |ev: Vec<Evidence>, index| ExitIntegralReport {
        finite: None,
        value: f64::NAN,
        drift_index: index,
        tail_exponent: f64::NAN,
        evidence: ev.clone(),
        verdict: BoundaryVerdict::inconclusive(Target::XAt1, ev),
    };
    if sel.measure().mass_at_infinity() > 0.0 {
        ev.push(Evidence::new("mass_at_infinity", sel.measure().mass_at_infinity(), 0.0, false));
        return Ok(none(ev, index));
    }
    match index {
        Some(a) if (0.0..1.0).contains(&a) => ev.push(Evidence::new("drift_index", a, 1.0, true)),
        Some(a) => {
            ev.push(Evidence::new("drift_index", a, 1.0, false));
            return Ok(none(ev, index));
        }
        None => return Ok(none(ev, index)),
    }
    let integrand = |y: f64| -> Result<f64> {
        // Φ at the real argument: flooring only changes Φ by a factor → 1 and
        // would put a jump at every integer 1/y
        let g = drift_gap(sel, Pt::from_xy(1.0 - y, y));
        Ok(g / (y * y * y * phi_real(lam, (1.0 / y).max(2.0), 1e-10)?))
    };
    // substitute y = e^s; one mesh point per decade
    let lo = EXIT_Y_LO.ln();
    let hi = EXIT_Y_HI.ln();
    let decades = (EXIT_Y_HI / EXIT_Y_LO).log10().round() as usize;
    let mesh: Vec<f64> = (0..=decades).map(|i| lo + (hi - lo) * i as f64 / decades as f64).collect();
    let failure = std::cell::RefCell::new(None);
    let q = integrate(
        |s| {
            let y = s.exp();
            match integrand(y) {
                Ok(v) => v * y,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &mesh,
        Tol::new(0.0, 1e-7),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let body = q?.value;
    let fit_y: Vec<f64> = (0..9).map(|i| EXIT_Y_LO * 10f64.powf(i as f64 / 8.0)).collect();
    let vals: Vec<f64> = fit_y.iter().map(|&y| integrand(y)).collect::<Result<_>>()?;
    let (p, _, r2) = linear_fit(&fit_y.iter().map(|y| y.ln()).collect::<Vec<_>>(), &vals.iter().map(|v| v.ln()).collect::<Vec<_>>());
    ev.push(Evidence::new("tail_exponent", p, -1.0, p > -1.0));
    ev.push(Evidence::new("tail_fit_r2", r2, MIN_R2, r2 >= MIN_R2));
    let finite = if r2 < MIN_R2 {
        None
    } else if p > -1.0 + POWER_MARGIN {
        Some(true)
    } else if p < -1.0 - POWER_MARGIN {
        Some(false)
    } else {
        None
    };
    let value = match finite {
        Some(true) => body + vals[0] * EXIT_Y_LO / (p + 1.0),
        _ => body,
    };
    ev.push(Evidence::new("integral_body", body, 0.0, true));
    let verdict = if finite == Some(true) {
        let cdi = cdi_series(lam, cdi_n_max, 1e-10)?;
        ev.push(Evidence::new("cdi_partial_sum", cdi.partial_sum, 0.0, cdi.verdict == SeriesVerdict::Converges));
        let v = match cdi.verdict {
            SeriesVerdict::Converges => Verdict::Exit,
            SeriesVerdict::Diverges => Verdict::Natural,
            SeriesVerdict::Inconclusive => Verdict::Inconclusive,
        };
        BoundaryVerdict { target: Target::XAt1, verdict: v, instantaneous: None, evidence: ev.clone() }
    } else {
        BoundaryVerdict::inconclusive(Target::XAt1, ev.clone())
    };
    Ok(ExitIntegralReport { finite, value, drift_index: index, tail_exponent: p, evidence: ev, verdict })
}

/// Checks condition ℍ with the user's g on n = 2^j ≤ n_max.
pub fn check_condition_h<G: Fn(f64) -> f64>(
    lam: &CoalescenceMeasure,
    mu: &SplittingMeasure,
    g: G,
    n_max: u64,
) -> Result<ConditionReport> {
    let j_max = 63 - n_max.leading_zeros();
    if j_max < TAIL_WINDOW as u32 + 1 {
        return invalid(format!("n_max must be at least 2^{}", TAIL_WINDOW + 1));
    }
    let j_lo = j_max - TAIL_WINDOW as u32 + 1;
    let window: Vec<u32> = (j_lo..=j_max).collect();
    let ns: Vec<f64> = window.iter().map(|&j| (j as f64).exp2()).collect();
    let mut clauses = Vec::new();
    if mu.mass_at_infinity() > 0.0 {
        clauses.push(ClauseReport {
            clause: "no_mass_at_infinity".into(),
            outcome: Outcome::Inconclusive,
            failing_point: None,
            evidence: vec![Evidence::new("mass_at_infinity", mu.mass_at_infinity(), 0.0, false)],
        });
        return Ok(ConditionReport { condition: "H".into(), outcome: Outcome::Inconclusive, window: (j_lo, j_max), clauses, implies: vec![] });
    }
    let ells: Vec<f64> = window.iter().map(|&j| mu.ell(1u64 << j)).collect();

    // ℓ(n) ≥ g(log n) log n
    let lower: Vec<f64> = ns.iter().map(|n| g(n.ln()) * n.ln()).collect();
    let bad = (0..ns.len()).find(|&i| !(ells[i] >= lower[i]));
    let worst = (0..ns.len()).map(|i| ells[i] / lower[i]).fold(f64::INFINITY, f64::min);
    clauses.push(ClauseReport {
        clause: "ell_lower_bound".into(),
        outcome: if bad.is_none() { Outcome::Holds } else { Outcome::Fails },
        failing_point: bad.map(|i| ns[i]),
        evidence: vec![Evidence::new("min_ell_over_bound", worst, 1.0, worst >= 1.0)],
    });

    // g eventually non-decreasing
    let gs: Vec<f64> = ns.iter().map(|n| g(n.ln())).collect();
    let drop = gs.windows(2).position(|w| !(w[1] >= w[0] * (1.0 - THRESHOLD_TOL)));
    let positive = gs.iter().all(|&v| v > 0.0);
    clauses.push(ClauseReport {
        clause: "g_non_decreasing".into(),
        outcome: if drop.is_none() && positive { Outcome::Holds } else { Outcome::Fails },
        failing_point: drop.map(|i| ns[i + 1]),
        evidence: vec![Evidence::new("g_last", gs[gs.len() - 1], gs[0], gs[gs.len() - 1] >= gs[0])],
    });

    // ∫^∞ dx/(x g(x)) < ∞ through dyadic pieces [2^k, 2^{k+1}]
    let mut increments = Vec::with_capacity(GRID_DEPTH as usize);
    for k in 0..GRID_DEPTH {
        let (a, b) = ((k as f64).exp2(), (k as f64 + 1.0).exp2());
        let q = integrate(|x| 1.0 / (x * g(x)), &[a, b], Tol::new(0.0, 1e-8))?;
        increments.push(q.value);
    }
    clauses.push(tail_integral("inverse_g_integrable", &increments, 0));

    // Φ(n)/(n ℓ(n)) → 0
    let mut ratios = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        ratios.push(phi_real(lam, n, 1e-10)? / (n * ells[i]));
    }
    let steps: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    clauses.push(vanishing_trend("phi_over_n_ell_vanishes", &ns, &ratios, &steps));

    let outcome = Outcome::all(&clauses.iter().map(|c| c.outcome).collect::<Vec<_>>());
    let implies = if outcome == Outcome::Holds {
        let v = BoundaryVerdict {
            target: Target::NAtInfinity,
            verdict: Verdict::Exit,
            instantaneous: None,
            evidence: vec![Evidence::new("condition_h", 1.0, 1.0, true)],
        };
        vec![v.dual(), v]
    } else {
        Vec::new()
    };
    Ok(ConditionReport { condition: "H".into(), outcome, window: (j_lo, j_max), clauses, implies })
}

/// Model and run settings shared by the probes.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub lam: CoalescenceMeasure,
    pub mu: SplittingMeasure,
    pub sde: SdeConfig,
    /// Mass at ∞ added to the selection for the extended process X^λ.
    pub lam_mut: f64,
    pub seed: u64,
    pub workers: usize,
}

impl ProbeConfig {
    fn model(&self, mode: WfMode) -> Result<WfModel> {
        WfModel::new(&self.lam, &SelectionFunction::new(self.mu.clone()), &self.sde, mode)
    }

    fn runner(&self) -> Runner {
        Runner::new(self.seed, self.workers)
    }
}

/// Kendall's τ of `ys` against their index with a two-sided normal p-value.
pub fn kendall_trend(ys: &[f64]) -> (f64, f64) {
    let n = ys.len();
    if n < 3 {
        return (0.0, 1.0);
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match ys[j].partial_cmp(&ys[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = s as f64 / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    (s as f64 / pairs, p)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 || v[m - 1].is_infinite() || v[m].is_infinite() {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn fraction(flags: impl IntoIterator<Item = bool>) -> Stats {
    Stats::from_values(flags.into_iter().map(|b| if b { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, Serialize)]
pub struct EntranceRow {
    pub j: u32,
    pub x_start: f64,
    /// Median first time below the level; ∞ when most paths stay above.
    pub median_time: f64,
    pub censored_fraction: f64,
    /// Paths of the minimal process reaching 1 - η₁ before the level.
    pub reach_one: Stats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRow {
    pub j: u32,
    pub n0: u64,
    pub median_time: f64,
    pub unreached_fraction: f64,
}

/// Dual chain probe: N from 2^j until it exceeds `n_max`.
#[derive(Debug, Clone, Copy)]
pub struct ChainProbe {
    pub n_max: u64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntranceProbe {
    pub level: f64,
    pub horizon: f64,
    pub rows: Vec<EntranceRow>,
    pub median_tau: f64,
    pub median_p: f64,
    /// No significant trend of the medians in j (p > 0.05).
    pub medians_stable: bool,
    pub reach_one_tau: f64,
    pub reach_one_p: f64,
    pub chain_rows: Vec<ChainRow>,
    pub analytic: BoundaryVerdict,
    /// Whether the probe's pattern matches the analytic verdict.
    pub agrees: Option<bool>,
}

/// First passage of X below `level` from x = 1 - 2^{-j}, with the dual chain
/// contrast when `chain` is given. Times are resolved at window ends.
pub fn probe_entrance(
    cfg: &ProbeConfig,
    js: &[u32],
    level: f64,
    horizon: f64,
    n_paths: usize,
    chain: Option<ChainProbe>,
) -> Result<EntranceProbe> {
    if !in_open_unit(level) || js.is_empty() || js.iter().any(|&j| j == 0 || j > 52) {
        return invalid("need level in (0,1) and 1 ≤ j ≤ 52");
    }
    if n_paths < 2 {
        return invalid("n_paths must be ≥ 2");
    }
    let ext = cfg.model(WfMode::LambdaExtension { lam_mut: cfg.lam_mut })?;
    let min = cfg.model(WfMode::Minimal)?;
    let runner = cfg.runner();
    let mut rows = Vec::new();
    for &j in js {
        let x_start = 1.0 - (-(j as f64)).exp2();
        let times: Vec<f64> = if x_start <= level {
            vec![0.0; n_paths]
        } else {
            runner
                .run(&format!("entrance/x/{j}"), n_paths, |_, rng| {
                    let mut hit = None;
                    let p = ext.simulate_observed(rng, x_start, horizon, &[], 0, &mut |t, x, _| {
                        if x < level {
                            hit = Some(t);
                        }
                        hit.is_none()
                    })?;
                    Ok(hit.or(p.tau0).unwrap_or(f64::INFINITY))
                })
                .into_iter()
                .collect::<Result<_>>()?
        };
        let reach: Vec<bool> = if x_start <= level {
            vec![false; n_paths]
        } else {
            runner
                .run(&format!("entrance/min/{j}"), n_paths, |_, rng| {
                    let p = min.simulate_observed(rng, x_start, horizon, &[], 0, &mut |_, x, _| x >= level)?;
                    Ok(p.tau1.is_some())
                })
                .into_iter()
                .collect::<Result<_>>()?
        };
        let censored = times.iter().filter(|t| t.is_infinite()).count() as f64 / n_paths as f64;
        rows.push(EntranceRow { j, x_start, median_time: median(times), censored_fraction: censored, reach_one: fraction(reach) });
    }
    let (median_tau, median_p) = kendall_trend(&rows.iter().map(|r| r.median_time).collect::<Vec<_>>());
    let (reach_one_tau, reach_one_p) = kendall_trend(&rows.iter().map(|r| r.reach_one.estimate).collect::<Vec<_>>());
    let mut chain_rows = Vec::new();
    if let Some(cp) = chain {
        let ch = EfcChain::new(&cfg.lam, &cfg.mu)?;
        for &j in js.iter().filter(|&&j| j < 63 && (1u64 << j) < cp.n_max) {
            let n0 = 1u64 << j;
            let hits: Vec<Option<f64>> = runner
                .run(&format!("entrance/n/{j}"), n_paths, |_, rng| {
                    ch.hitting_time_above(rng, n0, cp.n_max, cp.horizon, cp.n_max.max(10 * n0))
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let unreached = hits.iter().filter(|h| h.is_none()).count() as f64 / n_paths as f64;
            let times = hits.into_iter().map(|h| h.unwrap_or(f64::INFINITY)).collect();
            chain_rows.push(ChainRow { j, n0, median_time: median(times), unreached_fraction: unreached });
        }
    }
    let analytic = classify(&cfg.lam, &cfg.mu)?;
    let medians_stable = median_p > 0.05;
    let agrees = match analytic.verdict {
        Verdict::Entrance => Some(medians_stable),
        Verdict::Exit => Some(reach_one_tau > 0.0 && reach_one_p <= 0.05),
        _ => None,
    };
    Ok(EntranceProbe {
        level,
        horizon,
        rows,
        median_tau,
        median_p,
        medians_stable,
        reach_one_tau,
        reach_one_p,
        chain_rows,
        analytic,
        agrees,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub band: f64,
    /// Fraction of [0, horizon] spent in [1 - band, 1].
    pub occupation: Stats,
    /// Entries into the band from below.
    pub excursions: Stats,
    pub with_excursion: Stats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReflectionProbe {
    pub x0: f64,
    pub horizon: f64,
    pub bands: Vec<BandRow>,
    pub absorbed_at_0: Stats,
    /// Occupation falls as the band shrinks.
    pub occupation_shrinks: bool,
    pub analytic: BoundaryVerdict,
}

/// Occupation of bands below 1 and absorption at 0 for X^λ, resolved at window ends.
pub fn probe_reflection(cfg: &ProbeConfig, x0: f64, n_paths: usize, horizon: f64, bands: &[f64]) -> Result<ReflectionProbe> {
    if bands.is_empty() || bands.iter().any(|&b| !in_open_unit(b)) {
        return invalid("bands must lie in (0,1)");
    }
    if n_paths < 2 {
        return invalid("n_paths must be ≥ 2");
    }
    let model = cfg.model(WfMode::LambdaExtension { lam_mut: cfg.lam_mut })?;
    let k = bands.len();
    let per_path: Vec<(Vec<f64>, Vec<f64>, bool)> = cfg
        .runner()
        .run("reflection", n_paths, |_, rng| {
            let mut occ = vec![0.0; k];
            let mut exc = vec![0.0; k];
            let mut inside: Vec<bool> = bands.iter().map(|&b| 1.0 - x0 < b).collect();
            let mut t_prev = 0.0;
            let p = model.simulate_observed(rng, x0, horizon, &[], 0, &mut |t, _, y| {
                for i in 0..k {
                    let now = y < bands[i];
                    if now {
                        occ[i] += t - t_prev;
                        if !inside[i] {
                            exc[i] += 1.0;
                        }
                    }
                    inside[i] = now;
                }
                t_prev = t;
                true
            })?;
            Ok((occ.iter().map(|o| o / horizon).collect(), exc, p.absorbed_at_0()))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let rows: Vec<BandRow> = (0..k)
        .map(|i| BandRow {
            band: bands[i],
            occupation: Stats::from_values(per_path.iter().map(|p| p.0[i])),
            excursions: Stats::from_values(per_path.iter().map(|p| p.1[i])),
            with_excursion: fraction(per_path.iter().map(|p| p.1[i] > 0.0)),
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| bands[b].total_cmp(&bands[a]));
    let occupation_shrinks = order.windows(2).all(|w| rows[w[1]].occupation.estimate <= rows[w[0]].occupation.estimate);
    Ok(ReflectionProbe {
        x0,
        horizon,
        bands: rows,
        absorbed_at_0: fraction(per_path.iter().map(|p| p.2)),
        occupation_shrinks,
        analytic: classify(&cfg.lam, &cfg.mu)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FixationProbe {
    pub x0: f64,
    /// (horizon, absorption-at-0 fraction) for each doubling.
    pub steps: Vec<(f64, Stats)>,
    pub horizon: f64,
    pub absorbed_at_0: Stats,
    /// The last doubling changed the fraction by less than the tolerance.
    pub stable: bool,
}

/// Absorption at 0 of X^λ from x0, doubling the horizon from `h0` until the
/// fraction moves by less than `tol` or `max_doublings` is reached. A path
/// absorbed by one horizon is not re-run at the next.
pub fn probe_fixation(cfg: &ProbeConfig, x0: f64, n_paths: usize, h0: f64, max_doublings: u32, tol: f64) -> Result<FixationProbe> {
    if !(h0 > 0.0 && h0.is_finite()) || n_paths < 2 || !(tol > 0.0) {
        return invalid("need h0 > 0, tol > 0 and at least two paths");
    }
    let model = cfg.model(WfMode::LambdaExtension { lam_mut: cfg.lam_mut })?;
    let runner = cfg.runner();
    let mut absorbed = vec![false; n_paths];
    let mut steps: Vec<(f64, Stats)> = Vec::new();
    let mut h = h0;
    let mut stable = false;
    for _ in 0..=max_doublings {
        let todo: Vec<bool> = absorbed.iter().map(|a| !a).collect();
        let done: Vec<bool> = runner
            .run("fixation", n_paths, |i, rng| {
                if !todo[i as usize] {
                    return Ok(true);
                }
                Ok(model.simulate(rng, x0, h, &[], 0)?.absorbed_at_0())
            })
            .into_iter()
            .collect::<Result<_>>()?;
        absorbed = done;
        let f = fraction(absorbed.iter().copied());
        if let Some((_, prev)) = steps.last() {
            if (f.estimate - prev.estimate).abs() < tol {
                stable = true;
            }
        }
        steps.push((h, f));
        if stable || absorbed.iter().all(|&a| a) {
            stable = true;
            break;
        }
        h *= 2.0;
    }
    let (horizon, absorbed_at_0) = *steps.last().expect("at least one step");
    Ok(FixationProbe { x0, steps, horizon, absorbed_at_0, stable })
}
