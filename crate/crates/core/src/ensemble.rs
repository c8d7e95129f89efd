//! Seeded parallel ensembles with worker-count independent results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::special::Neumaier;

/// Stateless 64-bit mixer (splitmix64 finaliser).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// RNG for path `index` of the ensemble identified by (`seed`, `tag`).
pub fn path_rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(tag_hash(tag))));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy)]
pub struct Runner {
    pub seed: u64,
    pub workers: usize,
}

impl Runner {
    pub fn new(seed: u64, workers: usize) -> Self {
        Runner { seed, workers: workers.max(1) }
    }

    /// Runs `f` on every path index and returns the results in index order.
    pub fn run<T, F>(&self, tag: &str, n_paths: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut ChaCha8Rng) -> T + Sync + Send,
    {
        let seed = self.seed;
        let work = || {
            (0..n_paths as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = path_rng(seed, tag, i);
                    f(i, &mut rng)
                })
                .collect()
        };
        if self.workers == 1 {
            return (0..n_paths as u64)
                .map(|i| {
                    let mut rng = path_rng(seed, tag, i);
                    f(i, &mut rng)
                })
                .collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.workers).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n_paths: usize,
    pub estimate: f64,
    pub std_error: f64,
}

impl Stats {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Stats {
        let mut n = 0usize;
        let mut sum = Neumaier::default();
        let mut sq = Neumaier::default();
        for v in values {
            n += 1;
            sum.add(v);
            sq.add(v * v);
        }
        if n == 0 {
            return Stats { n_paths: 0, estimate: f64::NAN, std_error: f64::NAN };
        }
        let nf = n as f64;
        let mean = sum.value() / nf;
        let var = if n > 1 { ((sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Stats { n_paths: n, estimate: mean, std_error: (var / nf).sqrt() }
    }

    /// z-score of the difference between two independent estimates.
    pub fn z_against(&self, other: &Stats) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let d = self.estimate - other.estimate;
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY * d.signum()
            }
        } else {
            d / se
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let f = |_: u64, rng: &mut ChaCha8Rng| rng.random::<f64>();
        let a = Runner::new(7, 1).run("t", 1000, f);
        let b = Runner::new(7, 4).run("t", 1000, f);
        assert_eq!(a, b);
        let c = Runner::new(7, 4).run("u", 1000, f);
        assert_ne!(a, c);
    }

    #[test]
    fn stats_of_constant_and_uniform() {
        let s = Stats::from_values(vec![0.5; 10]);
        assert_eq!(s.estimate, 0.5);
        assert_eq!(s.std_error, 0.0);
        let s = Stats::from_values((0..1000).map(|i| (i % 2) as f64));
        assert!((s.estimate - 0.5).abs() < 1e-15);
        assert!((s.std_error - (0.25f64 * 1000.0 / 999.0 / 1000.0).sqrt()).abs() < 1e-12);
    }
}
