use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nearest::Point;
use crate::carpet::CarpetSpec;

pub const DEFAULT_BURN_IN: usize = 64;

/// Points drawn from the invariant measure by the chaos game.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    pub points: Vec<Point>,
    pub seed: u64,
    pub burn_in: usize,
}

impl SamplePool {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn mean(&self) -> Point {
        super::chunked_sum2(&self.points, |p| *p).map(|s| s / self.n() as f64)
    }
}

/// Iterate a randomly chosen map from `(1/2, 1/2)`, discarding `burn_in`
/// steps.
pub fn sample(spec: &CarpetSpec, n: usize, seed: u64, burn_in: usize) -> SamplePool {
    let entries = spec.entries();
    let dist = WeightedIndex::new(entries.iter().map(|e| e.p)).expect("validated probabilities");
    let (nf, mf) = (spec.n() as f64, spec.m() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = [0.5, 0.5];
    let mut points = Vec::with_capacity(n);
    for step in 0..burn_in + n {
        let c = entries[dist.sample(&mut rng)].cell;
        x = [(x[0] + c.i as f64) / nf, (x[1] + c.j as f64) / mf];
        if step >= burn_in {
            points.push(x);
        }
    }
    SamplePool {
        points,
        seed,
        burn_in,
    }
}
