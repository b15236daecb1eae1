//! Seeded low-discrepancy sampling of axis-aligned boxes.
//!
//! Points come from a Halton sequence with a Cranley–Patterson rotation
//! drawn from the seed, so different seeds give different (but equally
//! well spread) point sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    result
}

/// Randomly rotated Halton sequence in the unit cube.
#[derive(Debug, Clone)]
pub struct Halton {
    bases: Vec<u64>,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dims: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Halton {
            bases: first_primes(dims),
            shift: (0..dims).map(|_| rng.gen::<f64>()).collect(),
            index: 0,
        }
    }

    pub fn next_unit(&mut self) -> Vec<f64> {
        self.index += 1;
        self.bases
            .iter()
            .zip(&self.shift)
            .map(|(&b, &s)| (radical_inverse(self.index, b) + s).fract())
            .collect()
    }
}

/// `count` points inside the box `[lower, upper]`.
pub fn box_points(lower: &[f64], upper: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut seq = Halton::new(lower.len(), seed);
    (0..count)
        .map(|_| {
            seq.next_unit()
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
    }

    #[test]
    fn radical_inverse_base2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn points_stay_in_box_and_are_seeded() {
        let lo = [1.0, -2.0, 5.0];
        let hi = [2.0, -1.0, 9.0];
        let a = box_points(&lo, &hi, 500, 7);
        let b = box_points(&lo, &hi, 500, 7);
        let c = box_points(&lo, &hi, 500, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in &a {
            for d in 0..3 {
                assert!(p[d] >= lo[d] && p[d] <= hi[d]);
            }
        }
    }

    #[test]
    fn low_discrepancy_fills_halves_evenly() {
        let pts = box_points(&[0.0, 0.0], &[1.0, 1.0], 1024, 3);
        let left = pts.iter().filter(|p| p[0] < 0.5).count();
        assert!((left as i64 - 512).abs() <= 2);
    }
}
