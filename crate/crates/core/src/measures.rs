//! The coalescence measure Λ on (0,1), the splitting measure μ on ℕ ∪ {∞}
//! and the selection function f built from μ.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad::{integrate_kernel, Tol};
use crate::special::{hurwitz_zeta, neg_log, power_exp_tail, power_partial_sum};

/// Density piece c·z^a(1-z)^b on [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPiece {
    pub lo: f64,
    pub hi: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
}

impl KernelPiece {
    pub fn density(&self, z: f64) -> f64 {
        if z < self.lo || z > self.hi || z <= 0.0 || z >= 1.0 {
            return 0.0;
        }
        self.c * z.powf(self.a) * (1.0 - z).powf(self.b)
    }

    /// c ∫ z^{a+p}(1-z)^{b+q} g(z) dz over [lo, hi] ∩ [from, to].
    pub fn integrate<G: Fn(f64) -> f64>(
        &self,
        p: f64,
        q: f64,
        g: G,
        from: f64,
        to: f64,
        tol: Tol,
    ) -> Result<f64> {
        let lo = self.lo.max(from);
        let hi = self.hi.min(to);
        if hi <= lo {
            return Ok(0.0);
        }
        let scaled = Tol::new(tol.abs / self.c, tol.rel);
        Ok(self.c * integrate_kernel(self.a + p, self.b + q, g, lo, hi, scaled)?.value)
    }
}

/// Regular-variation metadata: h(z) z^β → ρ as z → 0 on [0, x₀].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvParams {
    pub rho: f64,
    pub beta: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceMeasure {
    pieces: Vec<KernelPiece>,
    atoms: Vec<(f64, f64)>,
    rv: Option<RvParams>,
    mass: f64,
}

impl CoalescenceMeasure {
    pub fn new(
        mut pieces: Vec<KernelPiece>,
        mut atoms: Vec<(f64, f64)>,
        rv: Option<RvParams>,
    ) -> Result<Self> {
        pieces.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        for p in &pieces {
            if !(0.0 <= p.lo && p.lo < p.hi && p.hi <= 1.0) {
                return invalid(format!("density piece interval [{}, {}] not inside [0,1]", p.lo, p.hi));
            }
            if !(p.c > 0.0 && p.c.is_finite()) {
                return invalid("density piece coefficient must be positive");
            }
            if p.a <= -1.0 || p.b <= -1.0 {
                return invalid("density piece exponents must exceed -1 (finite mass)");
            }
        }
        for w in pieces.windows(2) {
            if w[1].lo < w[0].hi {
                return invalid("density pieces overlap");
            }
        }
        for &(z, w) in &atoms {
            if !(z > 0.0 && z < 1.0) {
                return invalid(format!("atom at {z} must lie strictly inside (0,1)"));
            }
            if !(w > 0.0 && w.is_finite()) {
                return invalid("atom mass must be positive");
            }
        }
        let mut mass: f64 = atoms.iter().map(|a| a.1).sum();
        for p in &pieces {
            mass += p.integrate(0.0, 0.0, |_| 1.0, 0.0, 1.0, Tol::new(0.0, 1e-13))?;
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return invalid("total mass of the coalescence measure must be positive and finite");
        }
        let me = CoalescenceMeasure { pieces, atoms, rv, mass };
        if let Some(rv) = rv {
            me.check_rv(rv)?;
        }
        Ok(me)
    }

    fn check_rv(&self, rv: RvParams) -> Result<()> {
        if !(rv.rho > 0.0) {
            return invalid("rv_rho must be positive");
        }
        if !(rv.beta > 0.0 && rv.beta < 1.0) {
            return invalid("rv_beta must lie in (0,1)");
        }
        if !(rv.x0 > 0.0 && rv.x0 <= 1.0) {
            return invalid("rv_x0 must lie in (0,1]");
        }
        for z in [rv.x0 / 10.0, rv.x0 / 100.0] {
            let h = self.density(z);
            let r = h * z.powf(rv.beta) / rv.rho;
            if (r - 1.0).abs() >= 0.05 {
                return invalid(format!(
                    "density inconsistent with rv metadata at z={z}: h(z)z^beta/rho = {r}"
                ));
            }
        }
        Ok(())
    }

    /// Lebesgue measure scaled to the given mass.
    pub fn uniform(mass: f64) -> Result<Self> {
        Self::new(vec![KernelPiece { lo: 0.0, hi: 1.0, c: mass, a: 0.0, b: 0.0 }], vec![], None)
    }

    /// Density ρ z^{-β} on (0,1) with ρ = mass·(1-β), declared regularly varying.
    pub fn power(beta: f64, mass: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return invalid("beta must lie in (0,1)");
        }
        let rho = mass * (1.0 - beta);
        Self::new(
            vec![KernelPiece { lo: 0.0, hi: 1.0, c: rho, a: -beta, b: 0.0 }],
            vec![],
            Some(RvParams { rho, beta, x0: 1.0 }),
        )
    }

    /// Beta(a, b) probability law scaled to the given mass.
    pub fn beta(a: f64, b: f64, mass: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return invalid("Beta parameters must be positive");
        }
        let norm = statrs::function::beta::beta(a, b);
        let rv = (a < 1.0).then(|| RvParams { rho: mass / norm, beta: 1.0 - a, x0: 1e-3 });
        Self::new(
            vec![KernelPiece { lo: 0.0, hi: 1.0, c: mass / norm, a: a - 1.0, b: b - 1.0 }],
            vec![],
            rv,
        )
    }

    pub fn atom(z: f64, mass: f64) -> Result<Self> {
        Self::new(vec![], vec![(z, mass)], None)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn rv(&self) -> Option<RvParams> {
        self.rv
    }

    pub fn pieces(&self) -> &[KernelPiece] {
        &self.pieces
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Density of the absolutely continuous part.
    pub fn density(&self, z: f64) -> f64 {
        self.pieces.iter().map(|p| p.density(z)).sum()
    }

    /// ∫ z^p (1-z)^q g(z) Λ(dz) over (0,1).
    pub fn integrate<G: Fn(f64) -> f64 + Copy>(&self, p: f64, q: f64, g: G, tol: Tol) -> Result<f64> {
        let mut total = 0.0;
        for piece in &self.pieces {
            total += piece.integrate(p, q, g, 0.0, 1.0, tol)?;
        }
        for &(z, w) in &self.atoms {
            total += w * z.powf(p) * (1.0 - z).powf(q) * g(z);
        }
        Ok(total)
    }
}

pub const K_TAB: u64 = 100_000;
const HEAD: u64 = 128;

/// Finite part of a splitting measure on ℕ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// μ(k) = table[k-1].
    Table { pmf: Vec<f64> },
    /// μ(k) = mass·p(1-p)^{k-1}.
    Geometric { mass: f64, p: f64 },
    /// μ(k) = b·k^{-(1+α)} for every k ≥ 1.
    PowerTail { b: f64, alpha: f64 },
}

impl Family {
    fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Family::Table { pmf } => pmf.get((k - 1) as usize).copied().unwrap_or(0.0),
            Family::Geometric { mass, p } => mass * p * (1.0 - p).powf((k - 1) as f64),
            Family::PowerTail { b, alpha } => b * (k as f64).powf(-1.0 - alpha),
        }
    }

    fn tail(&self, m: u64) -> f64 {
        let m = m.max(1);
        match self {
            Family::Table { pmf } => pmf.iter().skip((m - 1) as usize).rev().sum(),
            Family::Geometric { mass, p } => mass * (1.0 - p).powf((m - 1) as f64),
            Family::PowerTail { b, alpha } => b * hurwitz_zeta(1.0 + alpha, m),
        }
    }

    fn support_max(&self) -> Option<u64> {
        match self {
            Family::Table { pmf } => Some(pmf.iter().rposition(|&v| v > 0.0).map_or(0, |i| i as u64 + 1)),
            _ => None,
        }
    }

    /// Σ_{k≥m} μ(k)(1 - x^{k-c}) for c ∈ {0, 1}, with x^0 = 1.
    fn sum_one_minus(&self, pt: Pt, m: u64, c: u64) -> f64 {
        let m = m.max(1);
        if pt.x == 0.0 {
            let skip = if c == 1 && m == 1 { self.pmf(1) } else { 0.0 };
            return self.tail(m) - skip;
        }
        if pt.y == 0.0 {
            return 0.0;
        }
        let term = |k: u64| -> f64 {
            if k == c {
                0.0
            } else {
                -(-pt.lam * (k - c) as f64).exp_m1()
            }
        };
        match self {
            Family::Table { pmf } => {
                let mut s = 0.0;
                for k in (m..=pmf.len() as u64).rev() {
                    s += pmf[(k - 1) as usize] * term(k);
                }
                s
            }
            Family::Geometric { mass, p } => {
                let q = 1.0 - p;
                let e = (m as f64) - (c as f64) - 1.0;
                let num = pt.y + p * pt.x * -(-pt.lam * e).exp_m1();
                mass * q.powf((m - 1) as f64) * num / (pt.y + p * pt.x)
            }
            Family::PowerTail { b, alpha } => {
                let mut s = 0.0;
                let start = m.max(HEAD);
                for k in (m..start).rev() {
                    s += self.pmf(k) * term(k);
                }
                s + b * power_exp_tail(1.0 + alpha, pt.lam, c as f64, start)
            }
        }
    }

    /// Σ_{k≤n} k μ(k).
    fn first_moment_upto(&self, n: u64) -> f64 {
        match self {
            Family::Table { pmf } => pmf
                .iter()
                .take(n.min(pmf.len() as u64) as usize)
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v)
                .sum(),
            Family::Geometric { mass, p } => {
                let q = 1.0 - p;
                let nf = n as f64;
                mass * p * (1.0 - (nf + 1.0) * q.powf(nf) + nf * q.powf(nf + 1.0)) / (p * p)
            }
            Family::PowerTail { b, alpha } => b * power_partial_sum(*alpha, n),
        }
    }
}

/// Evaluation point carrying x, y = 1 - x and λ = -ln x, each accurate.
#[derive(Debug, Clone, Copy)]
pub struct Pt {
    pub x: f64,
    pub y: f64,
    pub lam: f64,
}

impl Pt {
    pub fn new(x: f64) -> Self {
        Self::from_xy(x, 1.0 - x)
    }

    /// Both coordinates are supplied so values extremely close to 1 keep precision.
    pub fn from_xy(x: f64, y: f64) -> Self {
        let lam = if x <= 0.0 { f64::INFINITY } else { neg_log(x, y) };
        Pt { x, y, lam }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingMeasure {
    family: Family,
    /// Truncation level m of μ_m (mass at ≥ m, including ∞, moved to m).
    trunc: Option<u64>,
    /// Mass at ∞ of the underlying measure (before truncation).
    lambda_inf: f64,
}

impl SplittingMeasure {
    pub fn new(family: Family, lambda_inf: f64) -> Result<Self> {
        match &family {
            Family::Table { pmf } => {
                if pmf.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return invalid("splitting pmf entries must be finite and non-negative");
                }
            }
            Family::Geometric { mass, p } => {
                if !(*mass >= 0.0 && *p > 0.0 && *p <= 1.0) {
                    return invalid("geometric family needs mass ≥ 0 and p in (0,1]");
                }
            }
            Family::PowerTail { b, alpha } => {
                if !(*b > 0.0 && *alpha > 0.0 && *alpha < 1.0) {
                    return invalid("power tail needs b > 0 and alpha in (0,1)");
                }
            }
        }
        if !(lambda_inf >= 0.0 && lambda_inf.is_finite()) {
            return invalid("mass_at_infinity must be finite and non-negative");
        }
        let me = SplittingMeasure { family, trunc: None, lambda_inf };
        if !(me.total_mass() > 0.0) {
            return invalid("splitting measure must have positive total mass");
        }
        Ok(me)
    }

    pub fn table(pmf: Vec<f64>, lambda_inf: f64) -> Result<Self> {
        Self::new(Family::Table { pmf }, lambda_inf)
    }

    pub fn point_mass(k: u64, mass: f64) -> Result<Self> {
        if k == 0 {
            return invalid("point mass location must be ≥ 1");
        }
        let mut pmf = vec![0.0; k as usize];
        pmf[(k - 1) as usize] = mass;
        Self::table(pmf, 0.0)
    }

    pub fn geometric(p: f64, mass: f64) -> Result<Self> {
        Self::new(Family::Geometric { mass, p }, 0.0)
    }

    pub fn power_tail(b: f64, alpha: f64) -> Result<Self> {
        Self::new(Family::PowerTail { b, alpha }, 0.0)
    }

    /// Pure mass at ∞.
    pub fn infinity_only(lambda_inf: f64) -> Result<Self> {
        Self::new(Family::Table { pmf: vec![] }, lambda_inf)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn truncation(&self) -> Option<u64> {
        self.trunc
    }

    /// μ(∞).
    pub fn mass_at_infinity(&self) -> f64 {
        if self.trunc.is_some() {
            0.0
        } else {
            self.lambda_inf
        }
    }

    /// μ(ℕ).
    pub fn finite_mass(&self) -> f64 {
        self.family.tail(1) + if self.trunc.is_some() { self.lambda_inf } else { 0.0 }
    }

    /// μ(ℕ̄).
    pub fn total_mass(&self) -> f64 {
        self.family.tail(1) + self.lambda_inf
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match self.trunc {
            Some(m) if k == m => self.family.tail(m) + self.lambda_inf,
            Some(m) if k > m => 0.0,
            _ => self.family.pmf(k),
        }
    }

    /// μ̄(m) = μ({m, …, ∞}).
    pub fn tail(&self, m: u64) -> f64 {
        let m = m.max(1);
        match self.trunc {
            Some(t) if m > t => 0.0,
            _ => self.family.tail(m) + self.lambda_inf,
        }
    }

    /// μ̄ restricted to ℕ: μ({m, m+1, …}).
    pub fn tail_finite(&self, m: u64) -> f64 {
        self.tail(m) - self.mass_at_infinity()
    }

    /// ℓ(n) = Σ_{k=1}^n μ̄(k).
    pub fn ell(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        // Σ_k μ̄(k) over k ≤ n equals Σ_j μ(j) min(j, n) + n μ(∞)
        match self.trunc {
            Some(t) if n >= t => {
                let head = self.family.first_moment_upto(t - 1);
                head + t as f64 * (self.family.tail(t) + self.lambda_inf)
            }
            _ => {
                self.family.first_moment_upto(n)
                    + n as f64 * (self.family.tail(n + 1) + self.lambda_inf)
            }
        }
    }

    /// Σ_k μ(k)(1 - x^{k-c}) over the finite part, c ∈ {0, 1}.
    fn sum_one_minus(&self, pt: Pt, c: u64) -> f64 {
        match self.trunc {
            None => self.family.sum_one_minus(pt, 1, c),
            Some(m) => {
                let atom = self.family.tail(m) + self.lambda_inf;
                let atom_term = if pt.x == 0.0 {
                    if m == c { 0.0 } else { 1.0 }
                } else {
                    -(-pt.lam * (m - c) as f64).exp_m1()
                };
                let head = if m <= 4096 || matches!(self.family, Family::Table { .. }) {
                    let mut s = 0.0;
                    for k in (1..m).rev() {
                        let t = if k == c {
                            0.0
                        } else if pt.x == 0.0 {
                            1.0
                        } else {
                            -(-pt.lam * (k - c) as f64).exp_m1()
                        };
                        s += self.family.pmf(k) * t;
                    }
                    s
                } else {
                    self.family.sum_one_minus(pt, 1, c) - self.family.sum_one_minus(pt, m, c)
                };
                head + atom * atom_term
            }
        }
    }

    /// Σ_k μ(k)(x - x^k) over the finite part (the selection gap without the ∞ term).
    pub fn gap_finite(&self, pt: Pt) -> f64 {
        pt.x * self.sum_one_minus(pt, 1)
    }

    /// Σ_k μ(k)(1 - x^k) over the finite part.
    pub fn one_minus_pgf(&self, pt: Pt) -> f64 {
        self.sum_one_minus(pt, 0)
    }

    /// μ + λδ_∞.
    pub fn with_infinity(&self, lam: f64) -> Result<Self> {
        if !(lam > 0.0 && lam.is_finite()) {
            return invalid("lambda must be positive");
        }
        if self.trunc.is_some() {
            return invalid("cannot add mass at ∞ to a truncated measure");
        }
        let mut mu = self.clone();
        mu.lambda_inf += lam;
        Ok(mu)
    }

    /// Up-jump sampler for the block-counting chain.
    pub fn up_sampler(&self) -> UpSampler {
        UpSampler::new(self)
    }
}

/// Outcome of an up-jump: a block splits into k ≥ 2 blocks or into infinitely many.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Finite(u64),
    Infinite,
}

#[derive(Debug, Clone)]
enum Beyond {
    None,
    Geometric(Geometric),
    Pareto { start: u64, alpha: f64 },
}

/// Samples the size of an effective split (k ≥ 2 or ∞) from μ conditioned on k ≠ 1.
#[derive(Debug, Clone)]
pub struct UpSampler {
    weight: f64,
    lambda_inf: f64,
    cum: Vec<f64>,
    beyond: Beyond,
    clamp: Option<u64>,
}

impl UpSampler {
    fn new(mu: &SplittingMeasure) -> Self {
        let fam = &mu.family;
        let lambda_inf = mu.lambda_inf;
        let weight = fam.tail(2) + lambda_inf;
        let mut cum = Vec::new();
        let beyond = match fam {
            Family::Geometric { p, .. } => {
                if *p >= 1.0 {
                    Beyond::None
                } else {
                    Beyond::Geometric(Geometric::new(*p).expect("valid p"))
                }
            }
            Family::Table { .. } => {
                let kmax = fam.support_max().unwrap_or(0);
                let mut acc = 0.0;
                for k in 2..=kmax {
                    acc += fam.pmf(k);
                    cum.push(acc);
                }
                Beyond::None
            }
            Family::PowerTail { alpha, .. } => {
                let kmax = match mu.trunc {
                    Some(m) => m.min(K_TAB),
                    None => K_TAB,
                };
                let mut acc = 0.0;
                for k in 2..=kmax {
                    acc += fam.pmf(k);
                    cum.push(acc);
                }
                Beyond::Pareto { start: kmax + 1, alpha: *alpha }
            }
        };
        UpSampler { weight, lambda_inf, cum, beyond, clamp: mu.trunc }
    }

    /// Rate per block of effective splits, μ(ℕ̄) - μ(1).
    pub fn rate_per_block(&self) -> f64 {
        self.weight
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Split {
        let raw = self.sample_raw(rng);
        match (raw, self.clamp) {
            (Split::Infinite, Some(m)) => Split::Finite(m),
            (Split::Finite(k), Some(m)) => Split::Finite(k.min(m)),
            (r, None) => r,
        }
    }

    fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> Split {
        let mut u = rng.random::<f64>() * self.weight;
        if u < self.lambda_inf {
            return Split::Infinite;
        }
        u -= self.lambda_inf;
        match &self.beyond {
            Beyond::Geometric(g) => Split::Finite(2u64.saturating_add(g.sample(rng))),
            Beyond::None => {
                let i = self.cum.partition_point(|&c| c <= u).min(self.cum.len().saturating_sub(1));
                Split::Finite(i as u64 + 2)
            }
            Beyond::Pareto { start, alpha } => {
                if u < *self.cum.last().unwrap_or(&0.0) {
                    let i = self.cum.partition_point(|&c| c <= u);
                    Split::Finite(i as u64 + 2)
                } else {
                    Split::Finite(sample_power_floor(rng, *start, *alpha))
                }
            }
        }
    }
}

/// Draws k ≥ start with P(k) ∝ k^{-(1+α)} by rejection from a floored Pareto.
fn sample_power_floor<R: Rng + ?Sized>(rng: &mut R, start: u64, alpha: f64) -> u64 {
    let s = start as f64;
    let r_max = (1.0 + 1.0 / s).powf(1.0 + alpha) / alpha;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let t = s * u.powf(-1.0 / alpha);
        if !(t < 9.0e18) {
            return u64::MAX;
        }
        let k = t.floor();
        let ratio = k.powf(-1.0 - alpha) / (k.powf(-alpha) - (k + 1.0).powf(-alpha));
        if rng.random::<f64>() * r_max <= ratio {
            return k as u64;
        }
    }
}

/// The generating function f(x) = Σ x^k μ(k)/μ(ℕ̄) of a splitting measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFunction {
    mu: SplittingMeasure,
    inv_total: f64,
}

impl SelectionFunction {
    pub fn new(mu: SplittingMeasure) -> Self {
        let inv_total = 1.0 / mu.total_mass();
        SelectionFunction { mu, inv_total }
    }

    pub fn measure(&self) -> &SplittingMeasure {
        &self.mu
    }

    pub fn total_mass(&self) -> f64 {
        self.mu.total_mass()
    }

    /// 1 - f(1) = μ(∞)/μ(ℕ̄).
    pub fn defect(&self) -> f64 {
        self.mu.mass_at_infinity() * self.inv_total
    }

    /// f(x). Family sums are closed-form or Euler–Maclaurin and accurate to
    /// about 1e-13 relative, below any admissible `tol`.
    pub fn eval_f(&self, x: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return invalid("tol must be positive");
        }
        if !(0.0..=1.0).contains(&x) {
            return invalid(format!("x = {x} outside [0,1]"));
        }
        Ok(self.f_at(Pt::new(x)))
    }

    pub fn f_at(&self, pt: Pt) -> f64 {
        if pt.x == 0.0 {
            return 0.0;
        }
        (self.mu.finite_mass() - self.mu.one_minus_pgf(pt)) * self.inv_total
    }

    /// v(x) = μ(ℕ̄)(x - f(x)) ≥ 0, computed without cancellation near 1.
    pub fn gap(&self, pt: Pt) -> f64 {
        self.mu.gap_finite(pt) + self.mu.mass_at_infinity() * pt.x
    }

    /// u(x) = μ(ℕ̄)(f(x) - x).
    pub fn drift(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return invalid(format!("x = {x} outside [0,1]"));
        }
        Ok(-self.gap(Pt::new(x)))
    }

    /// f_m: mass of μ on {m, …, ∞} collapsed onto m.
    pub fn truncate_f(&self, m: u64) -> Result<SelectionFunction> {
        if m < 2 {
            return invalid("truncation level must be ≥ 2");
        }
        if self.mu.trunc.is_some() {
            return invalid("measure is already truncated");
        }
        let mut mu = self.mu.clone();
        mu.trunc = Some(m);
        Ok(SelectionFunction::new(mu))
    }

    /// f^λ: adds mass λ at ∞.
    pub fn augment_lambda(&self, lam: f64) -> Result<SelectionFunction> {
        if !(lam > 0.0 && lam.is_finite()) {
            return invalid("lambda must be positive");
        }
        if self.mu.mass_at_infinity() > 0.0 || self.mu.trunc.is_some() {
            return invalid("augment_lambda expects a non-defective, untruncated measure");
        }
        let mut mu = self.mu.clone();
        mu.lambda_inf = lam;
        Ok(SelectionFunction::new(mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coalescence_constructors() {
        let u = CoalescenceMeasure::uniform(2.0).unwrap();
        assert!((u.mass() - 2.0).abs() < 1e-13);
        let p = CoalescenceMeasure::power(0.5, 1.0).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-12);
        assert!((p.rv().unwrap().rho - 0.5).abs() < 1e-15);
        let b = CoalescenceMeasure::beta(0.5, 1.5, 1.0).unwrap();
        assert!((b.mass() - 1.0).abs() < 1e-11);
        assert!(CoalescenceMeasure::atom(1.0, 1.0).is_err());
        assert!(CoalescenceMeasure::atom(0.0, 1.0).is_err());
        let bad_rv = RvParams { rho: 2.0, beta: 0.5, x0: 1.0 };
        let piece = KernelPiece { lo: 0.0, hi: 1.0, c: 0.5, a: -0.5, b: 0.0 };
        assert!(CoalescenceMeasure::new(vec![piece], vec![], Some(bad_rv)).is_err());
    }

    #[test]
    fn geometric_pgf_example() {
        let f = SelectionFunction::new(SplittingMeasure::geometric(0.5, 1.0).unwrap());
        let v = f.eval_f(0.5, 1e-12).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        // oracle: direct summation
        let direct: f64 = (1..200).map(|k| 0.5f64.powi(k) * 0.5 * 0.5f64.powi(k - 1)).sum();
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn point_mass_examples() {
        let f = SelectionFunction::new(SplittingMeasure::point_mass(2, 1.0).unwrap());
        assert!((f.eval_f(0.25, 1e-12).unwrap() - 0.0625).abs() < 1e-15);
        assert!((f.drift(0.5).unwrap() + 0.25).abs() < 1e-15);
        assert_eq!(f.drift(0.0).unwrap(), 0.0);
        assert!((f.eval_f(1.0, 1e-12).unwrap() - 1.0).abs() < 1e-15);
        assert!(f.eval_f(0.5, 0.0).is_err());
    }

    #[test]
    fn defective_drift_at_one() {
        let f = SelectionFunction::new(SplittingMeasure::point_mass(1, 0.5).unwrap())
            .augment_lambda(0.5)
            .unwrap();
        assert!((f.drift(1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((f.defect() - 0.5).abs() < 1e-15);
        let g = SelectionFunction::new(SplittingMeasure::point_mass(2, 1.0).unwrap())
            .augment_lambda(1.0)
            .unwrap();
        assert!((g.drift(1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(g.augment_lambda(1.0).is_err());
        assert!(g.augment_lambda(0.0).is_err());
    }

    #[test]
    fn tails_and_ell() {
        let d2 = SplittingMeasure::point_mass(2, 1.0).unwrap();
        assert_eq!(d2.tail(1), 1.0);
        assert_eq!(d2.tail(2), 1.0);
        assert_eq!(d2.tail(3), 0.0);
        let g = SplittingMeasure::geometric(0.5, 1.0).unwrap();
        assert!((g.tail(3) - 0.25).abs() < 1e-15);
        assert!((g.ell(3) - 1.75).abs() < 1e-14);
        let d1 = SplittingMeasure::point_mass(1, 1.0).unwrap();
        assert!((d1.ell(5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_tail_against_brute_force() {
        let b = 0.3;
        let mu = SplittingMeasure::power_tail(b, 0.5).unwrap();
        let brute: f64 = (100..10_000_000u64).rev().map(|k| b * (k as f64).powf(-1.5)).sum();
        // remainder beyond 10^7 ≈ 2b/√(10^7)
        let rem = 2.0 * b / (1e7f64).sqrt();
        let t = mu.tail(100);
        assert!(((t - brute - rem) / t).abs() < 1e-6);
        assert!(((t - 2.0 * b / 10.0) / t).abs() < 0.01);
        let brute_ell: f64 = (1..=10_000u64).map(|k| mu.tail(k)).sum();
        assert!(((mu.ell(10_000) - brute_ell) / brute_ell).abs() < 1e-10);
        assert!(((mu.ell(10_000) - 2.0 * b * 2.0 * 100.0) / mu.ell(10_000)).abs() < 0.02);
    }

    #[test]
    fn power_tail_pgf_matches_direct_sum() {
        let mu = SplittingMeasure::power_tail(0.2, 0.4).unwrap();
        let f = SelectionFunction::new(mu.clone());
        for &x in &[0.0f64, 0.1, 0.5, 0.9, 0.99, 0.999] {
            let n_direct = if x == 0.0 { 2 } else { (80.0 / -x.ln()) as u64 + 200 };
            let mut s = 0.0;
            for k in (1..n_direct).rev() {
                s += mu.pmf(k) * x.powi(k as i32);
            }
            let direct = s / mu.total_mass();
            let v = f.eval_f(x, 1e-12).unwrap();
            assert!((v - direct).abs() < 1e-12, "x={x}: {v} vs {direct}");
        }
    }

    #[test]
    fn gap_near_one_keeps_relative_accuracy() {
        // v(x) ~ σ y^α with σ = bΓ(1-α)/α
        let (b, alpha) = (0.25, 0.5);
        let f = SelectionFunction::new(SplittingMeasure::power_tail(b, alpha).unwrap());
        let sigma = b * statrs::function::gamma::gamma(1.0 - alpha) / alpha;
        for &y in &[1e-8, 1e-12, 1e-20] {
            let g = f.gap(Pt::from_xy(1.0 - y, y));
            let r = g / (sigma * y.powf(alpha));
            assert!((r - 1.0).abs() < 1e-3, "y={y}: ratio {r}");
        }
    }

    #[test]
    fn truncation_examples() {
        let d3 = SelectionFunction::new(SplittingMeasure::point_mass(3, 1.0).unwrap());
        let f2 = d3.truncate_f(2).unwrap();
        for &x in &[0.1, 0.5, 0.9] {
            assert!((f2.eval_f(x, 1e-12).unwrap() - x * x).abs() < 1e-15);
        }
        assert!(d3.truncate_f(1).is_err());
        let pt = SelectionFunction::new(SplittingMeasure::power_tail(0.3, 0.5).unwrap());
        let f0 = pt.eval_f(0.5, 1e-12).unwrap();
        let mut prev = f64::INFINITY;
        for m in [2u64, 5, 10, 20] {
            let fm = pt.truncate_f(m).unwrap().eval_f(0.5, 1e-12).unwrap();
            assert!(fm <= prev + 1e-15);
            assert!(fm >= f0 - 1e-15 && fm - f0 <= 0.5f64.powi(m as i32) + 1e-15);
            prev = fm;
        }
        assert_eq!(pt.truncate_f(7).unwrap().eval_f(0.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn up_sampler_point_and_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d2 = SplittingMeasure::point_mass(2, 1.0).unwrap().up_sampler();
        assert_eq!(d2.rate_per_block(), 1.0);
        for _ in 0..100 {
            assert_eq!(d2.sample(&mut rng), Split::Finite(2));
        }
        let inf = SplittingMeasure::infinity_only(1.0).unwrap().up_sampler();
        assert_eq!(inf.sample(&mut rng), Split::Infinite);
        let g = SplittingMeasure::geometric(0.5, 1.0).unwrap().up_sampler();
        let n = 200_000;
        let mut c2 = 0;
        for _ in 0..n {
            if g.sample(&mut rng) == Split::Finite(2) {
                c2 += 1;
            }
        }
        // P(k=2 | k≥2) = p
        assert!((c2 as f64 / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn power_floor_sampler_tail_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let start = 1000u64;
        let alpha = 0.5;
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            if sample_power_floor(&mut rng, start, alpha) >= 4 * start {
                hits += 1;
            }
        }
        let exact = hurwitz_zeta(1.5, 4 * start) / hurwitz_zeta(1.5, start);
        let p = hits as f64 / n as f64;
        assert!((p - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt());
    }
}
