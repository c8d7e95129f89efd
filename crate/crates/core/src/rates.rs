//! Coalescent rates λ_{n,k}, the total merger rate, Φ(n) and the series
//! tests for coming down from infinity and non-explosion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measures::{CoalescenceMeasure, SplittingMeasure};
use crate::quad::Tol;
use crate::special::linear_fit;

pub const N_TABLE: u64 = 2000;

fn tol_of(tol: f64) -> Result<Tol> {
    if !(tol > 0.0) {
        return invalid("tol must be positive");
    }
    Ok(Tol::new(tol, 0.0))
}

/// λ_{n,k} = ∫ z^{k-2}(1-z)^{n-k} Λ(dz).
pub fn lambda_nk(lam: &CoalescenceMeasure, n: u64, k: u64, tol: f64) -> Result<f64> {
    if k < 2 || k > n {
        return invalid(format!("need 2 ≤ k ≤ n, got n={n} k={k}"));
    }
    lam.integrate((k - 2) as f64, (n - k) as f64, |_| 1.0, tol_of(tol)?)
}

/// P(B ≥ 2) / z² for B ~ Binomial(n, z).
pub fn p_ge2_over_z2(n: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.5 * n * (n - 1.0);
    }
    if n * z < 0.5 {
        // Σ_{j≥2} C(n,j) z^{j-2} (1-z)^{n-j}
        let r = z / (1.0 - z);
        let mut term = 0.5 * n * (n - 1.0) * ((n - 2.0) * (-z).ln_1p()).exp();
        let mut sum = term;
        let mut j = 2.0;
        while j < n {
            term *= (n - j) / (j + 1.0) * r;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            j += 1.0;
        }
        sum
    } else {
        let l = (-z).ln_1p();
        let p0 = (n * l).exp();
        let p1 = n * z * ((n - 1.0) * l).exp();
        (1.0 - p0 - p1).max(0.0) / (z * z)
    }
}

/// ψ_n(z)/z² with ψ_n(z) = (1-z)^n - 1 + nz, for real n ≥ 2.
pub fn psi_over_z2(n: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.5 * n * (n - 1.0);
    }
    if n * z < 0.1 {
        // Σ_{j≥2} C(n,j)(-z)^j / z²
        let mut term = 0.5 * n * (n - 1.0);
        let mut sum = term;
        let mut j = 2.0;
        loop {
            term *= -(n - j) / (j + 1.0) * z;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() || j > 200.0 {
                break;
            }
            j += 1.0;
        }
        sum
    } else {
        ((n * (-z).ln_1p()).exp_m1() + n * z) / (z * z)
    }
}

/// Total merger intensity from n blocks, ∫ P(Bin(n,z) ≥ 2) z^{-2} Λ(dz).
pub fn total_coal_rate(lam: &CoalescenceMeasure, n: u64, tol: f64) -> Result<f64> {
    if n < 2 {
        return invalid("total_coal_rate needs n ≥ 2");
    }
    let nf = n as f64;
    lam.integrate(0.0, 0.0, move |z| p_ge2_over_z2(nf, z), tol_of(tol)?)
}

/// Φ(n) = ∫ ((1-x)^n - 1 + nx) x^{-2} Λ(dx) for integer n ≥ 2.
pub fn phi(lam: &CoalescenceMeasure, n: u64, tol: f64) -> Result<f64> {
    if n < 2 {
        return invalid("phi needs n ≥ 2");
    }
    phi_real(lam, n as f64, tol)
}

/// Φ at a real argument t ≥ 2 (the integral is smooth in t).
pub fn phi_real(lam: &CoalescenceMeasure, t: f64, tol: f64) -> Result<f64> {
    if !(t >= 2.0) {
        return invalid("phi needs argument ≥ 2");
    }
    lam.integrate(0.0, 0.0, move |z| psi_over_z2(t, z), tol_of(tol)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEntry {
    pub k: u64,
    pub lambda_nk: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTable {
    pub n: u64,
    pub entries: Vec<RateEntry>,
    pub total_rate: f64,
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

impl RateTable {
    pub fn build(lam: &CoalescenceMeasure, n: u64, tol: f64) -> Result<Self> {
        if !(2..=N_TABLE).contains(&n) {
            return invalid(format!("rate tables are built for 2 ≤ n ≤ {N_TABLE}"));
        }
        let entries: Vec<RateEntry> = (2..=n)
            .into_par_iter()
            .map(|k| {
                let l = lambda_nk(lam, n, k, tol)?;
                Ok(RateEntry { k, lambda_nk: l, rate: (ln_binomial(n, k)).exp() * l })
            })
            .collect::<Result<_>>()?;
        let total_rate = entries.iter().map(|e| e.rate).sum();
        Ok(RateTable { n, entries, total_rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesReport {
    pub partial_sum: f64,
    pub fitted_slope: f64,
    pub verdict: Verdict,
    pub evidence: Vec<(String, f64)>,
}

/// Σ_{n=2}^{n_max} a(n) for a smooth positive summand: exact up to 256,
/// then trapezoid in ln t of t·a(t) on 16 points per octave.
fn sum_series<F: Fn(u64) -> Result<f64>>(a: F, n_max: u64) -> Result<f64> {
    let head_end = n_max.min(256);
    let mut s = 0.0;
    for n in 2..=head_end {
        s += a(n)?;
    }
    if n_max <= head_end {
        return Ok(s);
    }
    // integrate from head_end + 1/2 to n_max + 1/2
    let lo = (head_end as f64 + 0.5).ln();
    let hi = (n_max as f64 + 0.5).ln();
    let steps = (((hi - lo) / (std::f64::consts::LN_2 / 16.0)).ceil() as usize).max(1);
    let h = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let t = (lo + h * i as f64).exp();
        let n = (t.round() as u64).max(2);
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += w * t * a(n)?;
    }
    Ok(s + acc * h)
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<u64> {
    (0..points)
        .map(|i| (lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).round() as u64)
        .collect()
}

fn loglog_slope(ns: &[u64], vals: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let (s, _, r2) = linear_fit(&xs, &ys);
    (s, r2)
}

/// Σ 1/Φ(n) with a convergence verdict.
pub fn cdi_series(lam: &CoalescenceMeasure, n_max: u64, tol: f64) -> Result<SeriesReport> {
    if n_max < 10 {
        return invalid("n_max must be ≥ 10");
    }
    let partial_sum = sum_series(|n| Ok(1.0 / phi(lam, n, tol)?), n_max)?;
    let top = n_max as f64;
    let last: Vec<u64> = log_grid(top / 10.0, top, 9);
    let prev: Vec<u64> = log_grid(top / 100.0, top / 10.0, 9);
    let phi_last: Vec<f64> = last.iter().map(|&n| phi(lam, n.max(2), tol)).collect::<Result<_>>()?;
    let phi_prev: Vec<f64> = prev.iter().map(|&n| phi(lam, n.max(2), tol)).collect::<Result<_>>()?;
    let (slope, r2) = loglog_slope(&last, &phi_last);
    let (slope_prev, _) = loglog_slope(&prev, &phi_prev);
    let mut evidence = vec![
        ("fitted_slope".to_string(), slope),
        ("fit_r2".to_string(), r2),
        ("previous_decade_slope".to_string(), slope_prev),
    ];
    let n_lo = last[0] as f64;
    let ratio_n = (phi_last[8] / top) / (phi_last[0] / n_lo);
    let ratio_nlogn = (phi_last[8] / (top * top.ln())) / (phi_last[0] / (n_lo * n_lo.ln()));
    evidence.push(("phi_over_n_decade_ratio".to_string(), ratio_n));
    evidence.push(("phi_over_nlogn_decade_ratio".to_string(), ratio_nlogn));
    let verdict = if let Some(rv) = lam.rv().filter(|rv| rv.beta > 0.0) {
        evidence.push(("rv_beta".to_string(), rv.beta));
        Verdict::Converges
    } else if (ratio_n - 1.0).abs() < 0.01 || (ratio_nlogn - 1.0).abs() < 0.01 {
        Verdict::Diverges
    } else if slope > 1.05 && (slope - 1.0) / (slope_prev - 1.0) > 0.9 {
        Verdict::Converges
    } else if slope < 0.95 {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    Ok(SeriesReport { partial_sum, fitted_slope: slope, verdict, evidence })
}

/// Σ n μ̄(n)/Φ(n) with a slope-fit verdict.
pub fn nonexplosion_series(
    lam: &CoalescenceMeasure,
    mu: &SplittingMeasure,
    n_max: u64,
) -> Result<SeriesReport> {
    if mu.mass_at_infinity() > 0.0 {
        return invalid("non-explosion series assumes no mass at infinity");
    }
    if n_max < 10 {
        return invalid("n_max must be ≥ 10");
    }
    let tol = 1e-10;
    let a = |n: u64| -> Result<f64> {
        let t = mu.tail(n);
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(n as f64 * t / phi(lam, n, tol)?)
    };
    let partial_sum = sum_series(a, n_max)?;
    let top = n_max as f64;
    let grid = log_grid(top / 10.0, top, 9);
    let vals: Vec<f64> = grid.iter().map(|&n| a(n)).collect::<Result<_>>()?;
    if vals.contains(&0.0) {
        return Ok(SeriesReport {
            partial_sum,
            fitted_slope: f64::NEG_INFINITY,
            verdict: Verdict::Converges,
            evidence: vec![("tail_vanishes_before".to_string(), top)],
        });
    }
    let (slope, r2) = loglog_slope(&grid, &vals);
    let verdict = if slope < -1.05 {
        Verdict::Converges
    } else if slope > -0.95 {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    Ok(SeriesReport {
        partial_sum,
        fitted_slope: slope,
        verdict,
        evidence: vec![("fitted_slope".to_string(), slope), ("fit_r2".to_string(), r2)],
    })
}
