//! Shared fixtures for the benchmarks.

use hk_core::{DiscreteMeasure, GroundSpace, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` atoms on the line, positions in `[offset, offset + 2)`, masses in `[0.5, 1.5)`.
pub fn line_measure(n: usize, offset: f64, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..n)
        .map(|_| (Point::Coords(vec![offset + 2.0 * rng.gen::<f64>()]), 0.5 + rng.gen::<f64>()))
        .collect();
    DiscreteMeasure::new(GroundSpace::euclidean(1).unwrap(), atoms).unwrap()
}

/// `n` atoms in the unit square.
pub fn plane_measure(n: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..n)
        .map(|_| (Point::Coords(vec![rng.gen(), rng.gen()]), 0.5 + rng.gen::<f64>()))
        .collect();
    DiscreteMeasure::new(GroundSpace::euclidean(2).unwrap(), atoms).unwrap()
}
