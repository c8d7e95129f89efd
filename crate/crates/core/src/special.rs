//! Power sums and small numeric helpers shared by the measures and rates.

use statrs::function::gamma::gamma_ui;

const BERNOULLI: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Rising factorial (s)_r.
fn rising(s: f64, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (s + i as f64))
}

/// Hurwitz zeta ζ(s, m) = Σ_{k≥m} k^{-s} for s > 1 and integer m ≥ 1.
pub fn hurwitz_zeta(s: f64, m: u64) -> f64 {
    debug_assert!(s > 1.0 && m >= 1);
    const START: u64 = 20;
    let a = m.max(START);
    let af = a as f64;
    let mut tail = af.powf(1.0 - s) / (s - 1.0) + 0.5 * af.powf(-s);
    for (j, b) in BERNOULLI.iter().enumerate() {
        let r = 2 * j + 1;
        tail += b / factorial(r + 1) * rising(s, r) * af.powf(-s - r as f64);
    }
    let mut head = 0.0;
    for k in (m..a).rev() {
        head += (k as f64).powf(-s);
    }
    head + tail
}

/// Σ_{k≥a} k^{-s} (1 - e^{-λ(k-c)}) for s ∈ (1, 2), λ ≥ 0, integer a ≥ 64 and c ≤ 1.
///
/// Euler–Maclaurin with the integral written through the upper incomplete
/// gamma function, so the result keeps full relative accuracy as λ → 0.
pub fn power_exp_tail(s: f64, lam: f64, c: f64, a: u64) -> f64 {
    if lam <= 0.0 {
        return 0.0;
    }
    let af = a as f64;
    let alpha = s - 1.0;
    let decay = lam * (af - c);
    if lam * af > 60.0 {
        return hurwitz_zeta(s, a);
    }
    let one_minus = -(-decay).exp_m1();
    let e = (-decay).exp();
    let integral = (af.powf(-alpha) * one_minus
        + (lam * c).exp() * lam.powf(alpha) * gamma_ui(1.0 - alpha, lam * af))
        / alpha;
    let mut sum = integral + 0.5 * af.powf(-s) * one_minus;
    for (j, b) in BERNOULLI.iter().take(4).enumerate() {
        let r = 2 * j + 1;
        // f^{(r)}(a) with f(t) = t^{-s} - e^{λc} t^{-s} e^{-λt}; r odd gives the leading minus.
        let mut mixed = 0.0;
        let mut binom = 1.0;
        for i in 0..=r {
            mixed += binom * rising(s, i) * af.powf(-s - i as f64) * lam.powi((r - i) as i32);
            binom = binom * (r - i) as f64 / (i + 1) as f64;
        }
        let deriv = -(rising(s, r) * af.powf(-s - r as f64) - e * mixed);
        sum -= b / factorial(r + 1) * deriv;
    }
    sum
}

/// Σ_{k=1}^{n} k^{-s} for any real s, by direct summation up to 20 and
/// Euler–Maclaurin beyond.
pub fn power_partial_sum(s: f64, n: u64) -> f64 {
    const START: u64 = 20;
    if n <= START {
        return (1..=n).rev().map(|k| (k as f64).powf(-s)).sum();
    }
    let head: f64 = (1..START).rev().map(|k| (k as f64).powf(-s)).sum();
    let a = START as f64;
    let b = n as f64;
    let integral = if (s - 1.0).abs() < 1e-15 {
        (b / a).ln()
    } else {
        (b.powf(1.0 - s) - a.powf(1.0 - s)) / (1.0 - s)
    };
    let mut body = integral + 0.5 * (a.powf(-s) + b.powf(-s));
    for (j, bern) in BERNOULLI.iter().enumerate() {
        let r = 2 * j + 1;
        // f^{(r)}(t) = -(s)_r t^{-s-r} for odd r
        let d = |t: f64| -rising(s, r) * t.powf(-s - r as f64);
        body += bern / factorial(r + 1) * (d(b) - d(a));
    }
    head + body
}

/// λ = -ln x computed from whichever of x, y = 1 - x is more accurate.
pub fn neg_log(x: f64, y: f64) -> f64 {
    if y < 0.5 {
        -(-y).ln_1p()
    } else {
        -x.ln()
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Least-squares slope and R² of y against x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(s: f64, m: u64, n: u64) -> f64 {
        (m..n).rev().map(|k| (k as f64).powf(-s)).sum::<f64>()
            + (n as f64).powf(1.0 - s) / (s - 1.0)
            + 0.5 * (n as f64).powf(-s)
    }

    #[test]
    fn hurwitz_matches_direct_sums() {
        for &s in &[1.2, 1.5, 1.9] {
            for &m in &[1u64, 3, 19, 20, 57, 1000] {
                let b = brute(s, m, 2_000_000);
                let h = hurwitz_zeta(s, m);
                assert!(((h - b) / b).abs() < 1e-11, "s={s} m={m} {h} {b}");
            }
        }
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0 - 1e-15, 1) - zeta2).abs() < 1e-9);
    }

    #[test]
    fn power_exp_tail_matches_direct_sum() {
        // beyond n_direct the exponential factor is below e^{-60}, so the
        // remainder is a plain Hurwitz tail
        for &s in &[1.3, 1.5, 1.8] {
            for &lam in &[1e-4, 3e-3, 0.05, 0.3] {
                for &c in &[0.0, 1.0] {
                    let a = 128u64;
                    let n_direct = (61.0 / lam) as u64 + 2;
                    let direct: f64 = (a..n_direct)
                        .rev()
                        .map(|k| {
                            let kf = k as f64;
                            kf.powf(-s) * -(-lam * (kf - c)).exp_m1()
                        })
                        .sum::<f64>()
                        + hurwitz_zeta(s, n_direct);
                    let em = power_exp_tail(s, lam, c, a);
                    assert!(((em - direct) / direct).abs() < 1e-10, "s={s} lam={lam} c={c}: {em} {direct}");
                }
            }
        }
    }

    #[test]
    fn power_exp_tail_small_lambda_asymptotics() {
        // Σ_{k≥1} k^{-s}(1-e^{-λk}) ≈ Γ(1-α)λ^α/α + O(λ) as λ → 0
        let s = 1.5;
        let alpha = s - 1.0;
        for &lam in &[1e-8, 1e-10] {
            let head: f64 = (1..128u64)
                .map(|k| (k as f64).powf(-s) * -(-lam * k as f64).exp_m1())
                .sum();
            let total = head + power_exp_tail(s, lam, 0.0, 128);
            let approx = statrs::function::gamma::gamma(1.0 - alpha) * lam.powf(alpha) / alpha;
            assert!(((total - approx) / approx).abs() < 50.0 * lam.powf(1.0 - alpha));
        }
    }

    #[test]
    fn partial_power_sums() {
        for &s in &[-0.5, 0.0, 0.5, 1.0, 1.5] {
            for &n in &[5u64, 20, 21, 1000, 123_457] {
                let direct: f64 = (1..=n).rev().map(|k| (k as f64).powf(-s)).sum();
                let em = power_partial_sum(s, n);
                assert!(((em - direct) / direct).abs() < 1e-12, "s={s} n={n}");
            }
        }
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let mut acc = Neumaier::default();
        for v in [1.0, 1e100, 1.0, -1e100] {
            acc.add(v);
        }
        assert_eq!(acc.value(), 2.0);
    }
}
