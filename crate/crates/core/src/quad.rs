//! Adaptive Gauss–Kronrod (G7/K15) quadrature with endpoint substitution for
//! integrands of the form x^p (1-x)^q g(x).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Tol {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tol { abs, rel }
    }

    fn target(&self, value: f64, abs_total: f64) -> f64 {
        self.abs.max(self.rel * value.abs()).max(100.0 * f64::EPSILON * abs_total)
    }
}

impl Default for Tol {
    fn default() -> Self {
        Tol { abs: 1e-14, rel: 1e-11 }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kron.abs();
    let mut fv = [0.0; 14];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kron += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = kron * h;
    let abs_val = abs_sum * h.abs();
    let asc = asc * h.abs();
    let mut err = ((kron - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs_val > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs_val);
    }
    (value, err, abs_val)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over the mesh `points` (sorted, at least two entries),
/// bisecting the worst interval until the estimated error meets `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tol) -> Result<Quad> {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut abs_total = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (v, e, s) = gk15(&f, w[0], w[1]);
            value += v;
            error += e;
            abs_total += s;
            heap.push(Piece { a: w[0], b: w[1], value: v, error: e, abs: s });
        }
    }
    let mut frozen = 0.0;
    let mut count = heap.len();
    while error > tol.target(value, abs_total) {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            frozen += worst.error;
            continue;
        }
        if count >= MAX_INTERVALS {
            return Err(Error::NumericFailure {
                msg: format!("quadrature did not converge within {MAX_INTERVALS} intervals"),
                bound: error,
            });
        }
        let (v1, e1, s1) = gk15(&f, worst.a, mid);
        let (v2, e2, s2) = gk15(&f, mid, worst.b);
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        abs_total += s1 + s2 - worst.abs;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1, abs: s1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2, abs: s2 });
        count += 1;
    }
    // re-sum to shed accumulated update roundoff
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum::<f64>() + frozen;
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            msg: "non-finite integrand".into(),
            bound: f64::INFINITY,
        });
    }
    let target = tol.target(value, abs_total);
    if error > target && frozen > target {
        return Err(Error::NumericFailure {
            msg: "interval width reached machine resolution".into(),
            bound: error,
        });
    }
    Ok(Quad { value, error })
}

fn graded_mesh(a: f64, b: f64, left: bool, right: bool, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    let w = b - a;
    for i in 1..8 {
        pts.push(a + w * i as f64 / 8.0);
    }
    for j in 4..48 {
        let d = w * 0.5f64.powi(j);
        if left {
            pts.push(a + d);
        }
        if right {
            pts.push(b - d);
        }
    }
    pts.extend(extra.iter().copied().filter(|&x| x > a && x < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// ∫_lo^hi x^p (1-x)^q g(x) dx for 0 ≤ lo < hi ≤ 1, p, q > -1.
///
/// Singular endpoint factors at 0 or 1 are removed by the substitution
/// u = x^{p+1} (resp. (1-x)^{q+1}); the remaining part uses a graded mesh.
pub fn integrate_kernel<G: Fn(f64) -> f64>(
    p: f64,
    q: f64,
    g: G,
    lo: f64,
    hi: f64,
    tol: Tol,
) -> Result<Quad> {
    if !(0.0..1.0).contains(&lo) || hi > 1.0 || hi <= lo {
        return Err(Error::InvalidArgument(format!("bad kernel interval [{lo}, {hi}]")));
    }
    if (lo == 0.0 && p <= -1.0) || (hi == 1.0 && q <= -1.0) {
        return Err(Error::InvalidArgument(format!("non-integrable kernel exponents p={p} q={q}")));
    }
    let kern = |x: f64| -> f64 {
        let gx = g(x);
        if gx == 0.0 {
            return 0.0;
        }
        let lp = if p == 0.0 { 0.0 } else { p * x.ln() };
        let lq = if q == 0.0 { 0.0 } else { q * (-x).ln_1p() };
        (lp + lq).exp() * gx
    };
    let sub_left = lo == 0.0 && p < 0.0;
    let sub_right = hi == 1.0 && q < 0.0;
    let mut a = lo;
    let mut b = hi;
    let mut total = Quad { value: 0.0, error: 0.0 };
    // interior mode of x^p(1-x)^q for peaked kernels
    let mut extra = Vec::new();
    if p > 0.0 && q > 0.0 {
        let m = p / (p + q);
        let sd = (m * (1.0 - m) / (p + q + 1.0)).sqrt();
        for k in -6..=6 {
            extra.push(m + k as f64 * sd);
        }
    }
    let split = |lo: f64, hi: f64| -> f64 {
        let m = 0.5 * (lo + hi);
        m.min(0.5).max(lo + 0.25 * (hi - lo)).min(hi)
    };
    if sub_left {
        let c = if sub_right { split(lo, hi) } else { hi.min(0.5).max(0.5 * hi) };
        let e = 1.0 / (p + 1.0);
        let f = |u: f64| -> f64 {
            let x = u.powf(e);
            if x <= 0.0 {
                return g(0.0) * e;
            }
            let lq = if q == 0.0 { 0.0 } else { q * (-x).ln_1p() };
            lq.exp() * g(x) * e
        };
        let umax = c.powf(p + 1.0);
        let mesh: Vec<f64> = (0..=8).map(|i| umax * i as f64 / 8.0).collect();
        let r = integrate(f, &mesh, tol)?;
        total.value += r.value;
        total.error += r.error;
        a = c;
    }
    if sub_right {
        let c = if sub_left { a } else { (1.0 - 0.5 * (1.0 - lo)).max(0.5).min(hi) };
        let c = c.max(a);
        let e = 1.0 / (q + 1.0);
        let f = |v: f64| -> f64 {
            let y = v.powf(e);
            let x = 1.0 - y;
            let lp = if p == 0.0 { 0.0 } else { p * (-y).ln_1p() };
            lp.exp() * g(x) * e
        };
        let vmax = (1.0 - c).powf(q + 1.0);
        let mesh: Vec<f64> = (0..=8).map(|i| vmax * i as f64 / 8.0).collect();
        let r = integrate(f, &mesh, tol)?;
        total.value += r.value;
        total.error += r.error;
        b = c;
    }
    if b > a {
        let mesh = graded_mesh(a, b, a == 0.0, b == 1.0, &extra);
        let r = integrate(kern, &mesh, tol)?;
        total.value += r.value;
        total.error += r.error;
    }
    Ok(total)
}
