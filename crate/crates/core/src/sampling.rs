//! Deterministic sample points.
//!
//! Boxes are filled with a Halton sequence under a Cranley-Patterson
//! rotation drawn from a seeded ChaCha stream, so a fixed seed always gives
//! the same points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    out
}

/// Rotated Halton points in the unit cube `[0,1)^dim`.
pub fn halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|k| (radical_inverse(i, PRIMES[k]) + shift[k]).fract())
                .collect()
        })
        .collect()
}

/// How to pick sample points on `E` (coordinates `x` then `y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleSpec {
    Points(Vec<Vec<f64>>),
    Box {
        bounds: Vec<(f64, f64)>,
        count: usize,
        seed: u64,
        /// Reject points whose fiber part `y` (the last `fiber_dim`
        /// coordinates) lies within this radius of 0.
        exclude_y_radius: f64,
        fiber_dim: usize,
    },
}

impl SampleSpec {
    /// Default sampling: 64 points in `[-1,1]^(m+n)` avoiding `|y| < 0.1`.
    pub fn default_for(m: usize, n: usize, seed: u64) -> Self {
        SampleSpec::Box {
            bounds: vec![(-1.0, 1.0); m + n],
            count: 64,
            seed,
            exclude_y_radius: 0.1,
            fiber_dim: n,
        }
    }

    pub fn cube(dim: usize, count: usize, seed: u64) -> Self {
        SampleSpec::Box {
            bounds: vec![(-1.0, 1.0); dim],
            count,
            seed,
            exclude_y_radius: 0.0,
            fiber_dim: 0,
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            SampleSpec::Points(p) => p.clone(),
            SampleSpec::Box {
                bounds,
                count,
                seed,
                exclude_y_radius,
                fiber_dim,
            } => {
                let dim = bounds.len();
                let fiber_dim = (*fiber_dim).min(dim);
                let mut out = Vec::with_capacity(*count);
                let mut batch = *count.max(&1);
                // Rejection can only remove a bounded fraction of a box, so
                // doubling the batch terminates quickly.
                while out.len() < *count {
                    out.clear();
                    for u in halton(dim, batch, *seed) {
                        let p: Vec<f64> = u
                            .iter()
                            .zip(bounds)
                            .map(|(t, (lo, hi))| lo + t * (hi - lo))
                            .collect();
                        let y_norm = p[dim - fiber_dim..].iter().map(|v| v * v).sum::<f64>().sqrt();
                        if fiber_dim > 0 && y_norm < *exclude_y_radius {
                            continue;
                        }
                        out.push(p);
                        if out.len() == *count {
                            break;
                        }
                    }
                    batch *= 2;
                    if batch > 1 << 24 {
                        break;
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(halton(3, 10, 7), halton(3, 10, 7));
        assert_ne!(halton(3, 10, 7), halton(3, 10, 8));
    }

    #[test]
    fn box_points_respect_bounds_and_exclusion() {
        let spec = SampleSpec::default_for(1, 2, 3);
        let pts = spec.points();
        assert_eq!(pts.len(), 64);
        for p in &pts {
            assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
            assert!((p[1] * p[1] + p[2] * p[2]).sqrt() >= 0.1);
        }
    }

    #[test]
    fn radical_inverse_base2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }
}
