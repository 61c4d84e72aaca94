//! Seeded random streams and reduction policy.
//!
//! Stream `i` of master seed `m` is seeded with
//! `mix(m + (i + 1) * 0x9E3779B97F4A7C15)`, where `mix` is the SplitMix64
//! finaliser. For a fixed master the map `i -> seed` is injective on
//! `u64`, because multiplication by an odd constant and `mix` are both
//! bijections. Each stream drives its own ChaCha8 generator, so results
//! never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream_id` derived from `master`.
pub fn seed_split(master: u64, stream_id: u64) -> u64 {
    mix(master.wrapping_add(stream_id.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Generator for stream `stream_id`.
pub fn stream_rng(master: u64, stream_id: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed_split(master, stream_id))
}

/// Summation order for parallel reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Per-item results are collected in index order and summed sequentially.
    #[default]
    Deterministic,
    /// Tree reduction in whatever order the pool produces.
    Fast,
}

impl std::str::FromStr for Reduction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deterministic" => Ok(Reduction::Deterministic),
            "fast" => Ok(Reduction::Fast),
            _ => Err(format!("unknown reduction mode '{s}' (expected deterministic|fast)")),
        }
    }
}

/// Sum of `f(i)` for `i in 0..count`, each a vector of length `len`.
pub fn par_vec_sum<F>(count: usize, len: usize, reduction: Reduction, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let add = |mut a: Vec<f64>, b: Vec<f64>| {
        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        a
    };
    match reduction {
        Reduction::Deterministic => {
            // fixed-size chunks in index order keep memory bounded and the
            // summation order independent of the thread count
            const CHUNK: usize = 256;
            let chunks: Vec<Vec<f64>> = (0..count.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; len];
                    for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                        acc = add(acc, f(i));
                    }
                    acc
                })
                .collect();
            chunks.into_iter().fold(vec![0.0; len], add)
        }
        Reduction::Fast => (0..count).into_par_iter().map(f).reduce(|| vec![0.0; len], add),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(seed_split(7, 3), seed_split(7, 3));
        assert_ne!(seed_split(7, 0), seed_split(7, 1));
        let mut a = stream_rng(1, 2);
        let mut b = stream_rng(1, 2);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn ten_thousand_streams_collision_free() {
        for master in [0u64, 42, u64::MAX] {
            let seeds: HashSet<u64> = (0..10_000).map(|i| seed_split(master, i)).collect();
            assert_eq!(seeds.len(), 10_000);
        }
    }

    #[test]
    fn deterministic_sum_is_thread_independent() {
        let f = |i: usize| vec![(i as f64).sqrt(), 1.0 / (1.0 + i as f64)];
        let a = par_vec_sum(5000, 2, Reduction::Deterministic, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| par_vec_sum(5000, 2, Reduction::Deterministic, f));
        assert_eq!(a, b);
        let c = par_vec_sum(5000, 2, Reduction::Fast, f);
        assert!((a[0] - c[0]).abs() < 1e-9 * a[0]);
    }

    #[test]
    fn parse_reduction() {
        assert_eq!("fast".parse::<Reduction>().unwrap(), Reduction::Fast);
        assert!("x".parse::<Reduction>().is_err());
    }
}
