//! Cell decomposition of Λ used by the chain and SDE samplers.
//!
//! (0,1) is cut at geometric breakpoints that refine toward both ends. Each
//! cell stores ∫h, ∫z⁻²h and the two log-moments ∫(-ln(1-z))z⁻²h,
//! ∫ln²(1-z)z⁻²h, with prefix/suffix sums so that any range of the
//! measures Λ(dz) or z⁻²Λ(dz) can be sampled exactly.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::measures::CoalescenceMeasure;
use crate::quad::{integrate_kernel, Tol};

const LOW_END: f64 = 1e-20;
const HIGH_END: f64 = 1e-15;

/// Inverse CDF of the density ∝ t^p on [l, h], with constants precomputed.
#[derive(Debug, Clone, Copy)]
enum PowerInv {
    LogUniform { l: f64, log_ratio: f64 },
    FromZero { h: f64, inv_q: f64 },
    General { l: f64, h: f64, lq: f64, span: f64, inv_q: f64 },
}

impl PowerInv {
    fn new(p: f64, l: f64, h: f64) -> Self {
        let q = p + 1.0;
        if q.abs() < 1e-12 {
            PowerInv::LogUniform { l, log_ratio: (h / l).ln() }
        } else if l == 0.0 {
            PowerInv::FromZero { h, inv_q: 1.0 / q }
        } else {
            let lq = l.powf(q);
            PowerInv::General { l, h, lq, span: h.powf(q) - lq, inv_q: 1.0 / q }
        }
    }

    #[inline]
    fn root(v: f64, inv_q: f64) -> f64 {
        const TWO_THIRDS: f64 = 2.0 / 3.0;
        match inv_q {
            -2.0 => 1.0 / (v * v),
            -1.0 => 1.0 / v,
            -0.5 => 1.0 / v.sqrt(),
            0.5 => v.sqrt(),
            1.0 => v,
            2.0 => v * v,
            _ if inv_q == -TWO_THIRDS => {
                let c = v.cbrt();
                1.0 / (c * c)
            }
            _ => v.powf(inv_q),
        }
    }

    #[inline]
    fn sample(&self, u: f64) -> f64 {
        match *self {
            PowerInv::LogUniform { l, log_ratio } => l * (u * log_ratio).exp(),
            PowerInv::FromZero { h, inv_q } => h * Self::root(u, inv_q),
            PowerInv::General { l, h, lq, span, inv_q } => Self::root(lq + u * span, inv_q).clamp(l, h),
        }
    }
}

/// Sampler for a kernel piece inside one cell: power-law inversion in z (or
/// in 1 - z on upper cells) followed by rejection on the remaining factor.
#[derive(Debug, Clone, Copy)]
struct Draw {
    inv: PowerInv,
    upper: bool,
    rej_exp: f64,
    rej_max: f64,
}

impl Draw {
    fn new(pz: f64, b: f64, lo: f64, hi: f64) -> Self {
        if hi <= 0.5 {
            let rej_max = (1.0 - if b < 0.0 { hi } else { lo }).powf(b);
            Draw { inv: PowerInv::new(pz, lo, hi), upper: false, rej_exp: b, rej_max }
        } else {
            let ul = if hi == 1.0 { 0.0 } else { 1.0 - hi };
            let rej_max = if pz < 0.0 { lo.powf(pz) } else { hi.powf(pz) };
            Draw { inv: PowerInv::new(b, ul, 1.0 - lo), upper: true, rej_exp: pz, rej_max }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Draws for Λ(dz) and z⁻²Λ(dz).
    Kernel { draw: [Draw; 2] },
    Atom { z: f64, zc: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Component {
    shape: Shape,
    l0: f64,
    l2: f64,
}

#[derive(Debug, Clone)]
struct Cell {
    comps: Vec<Component>,
    l0: f64,
    l2: f64,
    m1: f64,
    m2: f64,
}

/// A mark z together with 1 - z, the latter accurate even when z is near 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub z: f64,
    pub zc: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaTables {
    bps: Vec<f64>,
    cells: Vec<Cell>,
    /// p0[i] = Λ((0, bps[i])).
    p0: Vec<f64>,
    /// s2[i] = ∫_{bps[i]}^1 z⁻² Λ(dz).
    s2: Vec<f64>,
    m1s: Vec<f64>,
    m2s: Vec<f64>,
}

fn default_breakpoints() -> Vec<f64> {
    let mut bps = vec![0.0];
    let r = std::f64::consts::SQRT_2;
    let mut z = LOW_END;
    while z < 0.5 {
        bps.push(z);
        z *= r;
    }
    bps.push(0.5);
    let mut y = 0.5 / r;
    while y > HIGH_END {
        bps.push(1.0 - y);
        y /= r;
    }
    bps.push(1.0 - HIGH_END);
    bps.push(1.0);
    bps
}

fn edge_low(c: f64, a: f64, h: f64) -> (f64, f64, f64, f64) {
    // (1-z)^b ≈ 1 and -ln(1-z) ≈ z on [0, h] with h = 1e-20
    let l0 = c * h.powf(a + 1.0) / (a + 1.0);
    let l2 = if a > 1.0 { c * h.powf(a - 1.0) / (a - 1.0) } else { f64::INFINITY };
    let m1 = if a > 0.0 { c * h.powf(a) / a } else { f64::INFINITY };
    (l0, l2, m1, l0)
}

fn edge_high(c: f64, b: f64, e: f64) -> (f64, f64, f64, f64) {
    // z^a ≈ 1 on [1-e, 1]; integrate c u^b, c u^b(-ln u), c u^b ln²u over [0, e]
    let b1 = b + 1.0;
    let le = e.ln();
    let l0 = c * e.powf(b1) / b1;
    let m1 = c * e.powf(b1) * (-le / b1 + 1.0 / (b1 * b1));
    let m2 = c * e.powf(b1) * (le * le / b1 - 2.0 * le / (b1 * b1) + 2.0 / (b1 * b1 * b1));
    (l0, l0, m1, m2)
}

fn kernel_moments(c: f64, a: f64, b: f64, lo: f64, hi: f64) -> Result<(f64, f64, f64, f64)> {
    if lo == 0.0 {
        return Ok(edge_low(c, a, hi));
    }
    if hi == 1.0 {
        return Ok(edge_high(c, b, 1.0 - lo));
    }
    let tol = Tol::new(0.0, 1e-12);
    if lo >= 0.5 {
        // integrate in u = 1 - z, which is exact on these cells
        let (ul, uh) = (1.0 - hi, 1.0 - lo);
        let l0 = c * integrate_kernel(b, a, |_| 1.0, ul, uh, tol)?.value;
        let l2 = c * integrate_kernel(b, a - 2.0, |_| 1.0, ul, uh, tol)?.value;
        let m1 = c * integrate_kernel(b, a - 2.0, |u| -u.ln(), ul, uh, tol)?.value;
        let m2 = c * integrate_kernel(b, a - 2.0, |u| u.ln().powi(2), ul, uh, tol)?.value;
        return Ok((l0, l2, m1, m2));
    }
    let l0 = c * integrate_kernel(a, b, |_| 1.0, lo, hi, tol)?.value;
    let l2 = c * integrate_kernel(a - 2.0, b, |_| 1.0, lo, hi, tol)?.value;
    let m1 = c * integrate_kernel(a - 2.0, b, |z| -(-z).ln_1p(), lo, hi, tol)?.value;
    let m2 = c * integrate_kernel(a - 2.0, b, |z| (-z).ln_1p().powi(2), lo, hi, tol)?.value;
    Ok((l0, l2, m1, m2))
}

impl LambdaTables {
    /// Builds the tables; `extra` breakpoints (e.g. cutoffs ε, ε/2) are inserted exactly.
    pub fn new(lam: &CoalescenceMeasure, extra: &[f64]) -> Result<Self> {
        let mut bps = default_breakpoints();
        for p in lam.pieces() {
            bps.push(p.lo);
            bps.push(p.hi);
        }
        bps.extend(extra.iter().copied().filter(|&z| z > 0.0 && z < 1.0));
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let mut cells = Vec::with_capacity(bps.len() - 1);
        for w in bps.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut cell = Cell { comps: vec![], l0: 0.0, l2: 0.0, m1: 0.0, m2: 0.0 };
            for p in lam.pieces() {
                if p.lo <= lo && hi <= p.hi {
                    let (l0, l2, m1, m2) = kernel_moments(p.c, p.a, p.b, lo, hi)?;
                    let draw = [Draw::new(p.a, p.b, lo, hi), Draw::new(p.a - 2.0, p.b, lo, hi)];
                    cell.comps.push(Component { shape: Shape::Kernel { draw }, l0, l2 });
                    cell.l0 += l0;
                    cell.l2 += l2;
                    cell.m1 += m1;
                    cell.m2 += m2;
                }
            }
            for &(z, wgt) in lam.atoms() {
                if lo <= z && z < hi {
                    let zc = 1.0 - z;
                    let l2 = wgt / (z * z);
                    let ln = zc.ln();
                    cell.comps.push(Component { shape: Shape::Atom { z, zc }, l0: wgt, l2 });
                    cell.l0 += wgt;
                    cell.l2 += l2;
                    cell.m1 += -ln * l2;
                    cell.m2 += ln * ln * l2;
                }
            }
            cells.push(cell);
        }
        let m = cells.len();
        let mut p0 = vec![0.0; m + 1];
        for i in 0..m {
            p0[i + 1] = p0[i] + cells[i].l0;
        }
        let mut s2 = vec![0.0; m + 1];
        let mut m1s = vec![0.0; m + 1];
        let mut m2s = vec![0.0; m + 1];
        for i in (0..m).rev() {
            s2[i] = s2[i + 1] + cells[i].l2;
            m1s[i] = m1s[i + 1] + cells[i].m1;
            m2s[i] = m2s[i + 1] + cells[i].m2;
        }
        let rel = (p0[m] - lam.mass()).abs() / lam.mass();
        if rel > 1e-9 {
            return Err(Error::NumericFailure {
                msg: format!("cell masses sum to {} but Λ has mass {}", p0[m], lam.mass()),
                bound: rel,
            });
        }
        Ok(LambdaTables { bps, cells, p0, s2, m1s, m2s })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.bps
    }

    /// Largest breakpoint index i with bps[i] ≤ z.
    pub fn index_below(&self, z: f64) -> usize {
        self.bps.partition_point(|&b| b <= z).saturating_sub(1).min(self.cells.len())
    }

    /// Index of the breakpoint closest to z in log scale.
    pub fn index_nearest(&self, z: f64) -> usize {
        let i = self.index_below(z);
        if i + 1 < self.bps.len() && self.bps[i] > 0.0 && (self.bps[i + 1] / z) < (z / self.bps[i]) {
            i + 1
        } else {
            i.max(1)
        }
    }

    pub fn bp(&self, i: usize) -> f64 {
        self.bps[i]
    }

    /// Λ((0, bps[i])).
    pub fn mass_below(&self, i: usize) -> f64 {
        self.p0[i]
    }

    /// ∫_{bps[i]}^1 z⁻² Λ(dz).
    pub fn rate_above(&self, i: usize) -> f64 {
        self.s2[i]
    }

    /// ∫_{bps[i]}^{bps[j]} z⁻² Λ(dz) for i ≤ j.
    pub fn rate_between(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            0.0
        } else {
            self.s2[i] - self.s2[j]
        }
    }

    /// (∫ -ln(1-z) z⁻²Λ(dz), ∫ ln²(1-z) z⁻²Λ(dz)) over [bps[i], bps[j]).
    pub fn log_moments_between(&self, i: usize, j: usize) -> (f64, f64) {
        if j <= i {
            (0.0, 0.0)
        } else {
            (self.m1s[i] - self.m1s[j], self.m2s[i] - self.m2s[j])
        }
    }

    fn sample_in_cell<R: Rng + ?Sized>(&self, rng: &mut R, c: usize, weighted: bool) -> Mark {
        let cell = &self.cells[c];
        let comp = if cell.comps.len() == 1 {
            &cell.comps[0]
        } else {
            let total = if weighted { cell.l2 } else { cell.l0 };
            let mut r = rng.random::<f64>() * total;
            let mut pick = &cell.comps[cell.comps.len() - 1];
            for comp in &cell.comps {
                let w = if weighted { comp.l2 } else { comp.l0 };
                if r < w {
                    pick = comp;
                    break;
                }
                r -= w;
            }
            pick
        };
        match comp.shape {
            Shape::Atom { z, zc } => Mark { z, zc },
            Shape::Kernel { draw } => {
                let d = &draw[weighted as usize];
                loop {
                    let t = d.inv.sample(rng.random::<f64>());
                    let (z, zc) = if d.upper { (1.0 - t, t) } else { (t, 1.0 - t) };
                    if d.rej_exp == 0.0 {
                        return Mark { z, zc };
                    }
                    let f = if d.upper { z } else { zc };
                    if rng.random::<f64>() * d.rej_max <= f.powf(d.rej_exp) {
                        return Mark { z, zc };
                    }
                }
            }
        }
    }

    /// z from Λ restricted to (0, bps[j]).
    pub fn sample_below<R: Rng + ?Sized>(&self, rng: &mut R, j: usize) -> Mark {
        let r = rng.random::<f64>() * self.p0[j];
        let c = self.p0[..=j].partition_point(|&v| v <= r).saturating_sub(1).min(j - 1);
        self.sample_in_cell(rng, c, false)
    }

    /// z from z⁻²Λ(dz) restricted to [bps[i], bps[j]).
    pub fn sample_between<R: Rng + ?Sized>(&self, rng: &mut R, i: usize, j: usize) -> Mark {
        let total = self.s2[i] - self.s2[j];
        let target = self.s2[i] - rng.random::<f64>() * total;
        // largest c in [i, j) with s2[c] ≥ target
        let c = i + self.s2[i..j].partition_point(|&v| v >= target);
        let c = c.saturating_sub(1).clamp(i, j - 1);
        self.sample_in_cell(rng, c, true)
    }

    /// Alias sampler for z⁻²Λ(dz) on [bps[i], 1).
    pub fn range_sampler(&self, i: usize) -> Result<RangeSampler> {
        let weights: Vec<f64> = self.cells[i..].iter().map(|c| c.l2).collect();
        let rate: f64 = self.s2[i];
        if !(rate > 0.0) {
            return Ok(RangeSampler { offset: i, alias: None, rate: 0.0 });
        }
        let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::NumericFailure {
            msg: format!("alias table: {e}"),
            bound: f64::NAN,
        })?;
        Ok(RangeSampler { offset: i, alias: Some(alias), rate })
    }
}

/// O(1) sampler of marks from z⁻²Λ(dz) above a fixed cutoff.
#[derive(Debug, Clone)]
pub struct RangeSampler {
    offset: usize,
    alias: Option<WeightedAliasIndex<f64>>,
    rate: f64,
}

impl RangeSampler {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, tables: &LambdaTables, rng: &mut R) -> Mark {
        let alias = self.alias.as_ref().expect("sampling from an empty range");
        let c = self.offset + alias.sample(rng);
        tables.sample_in_cell(rng, c, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cell_sums_match_closed_forms() {
        let lam = CoalescenceMeasure::power(0.5, 1.0).unwrap();
        let t = LambdaTables::new(&lam, &[1e-3]).unwrap();
        let m = t.cells.len();
        assert!((t.mass_below(m) - 1.0).abs() < 1e-10);
        let i = t.index_below(1e-3);
        assert_eq!(t.bp(i), 1e-3);
        // ρ ∫_ε^1 z^{-2.5} dz = ρ (ε^{-1.5} - 1)/1.5
        let exact = 0.5 * (1e-3f64.powf(-1.5) - 1.0) / 1.5;
        assert!(((t.rate_above(i) - exact) / exact).abs() < 1e-10);
        // Λ((0,ε)) = 2ρ√ε
        assert!((t.mass_below(i) - 2.0 * 0.5 * 1e-3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn samplers_reproduce_cdfs() {
        let lam = CoalescenceMeasure::beta(0.6, 0.8, 1.0).unwrap();
        let t = LambdaTables::new(&lam, &[1e-2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let j = t.index_below(0.3);
        let cut = 0.3 * 0.3;
        let i_cut = t.index_below(cut);
        // P(z < bps[i_cut] | z < bps[j]) under Λ
        let p = t.mass_below(i_cut) / t.mass_below(j);
        let hits = (0..n).filter(|_| t.sample_below(&mut rng, j).z < t.bp(i_cut)).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
        // z⁻²Λ on [0.01, 1): split at 0.9
        let i = t.index_below(1e-2);
        let k = t.index_below(0.9);
        let rs = t.range_sampler(i).unwrap();
        let p = t.rate_between(i, k) / t.rate_above(i);
        let hits = (0..n).filter(|_| rs.sample(&t, &mut rng).z < t.bp(k)).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
        let m = t.cells.len();
        for _ in 0..1000 {
            let mk = t.sample_between(&mut rng, k, m);
            assert!(mk.z >= t.bp(k) && mk.z < 1.0 && (mk.z + mk.zc - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn atoms_are_sampled_exactly() {
        let lam = CoalescenceMeasure::atom(0.25, 2.0).unwrap();
        let t = LambdaTables::new(&lam, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((t.rate_above(1) - 32.0).abs() < 1e-12);
        let rs = t.range_sampler(1).unwrap();
        assert_eq!(rs.sample(&t, &mut rng).z, 0.25);
    }
}
