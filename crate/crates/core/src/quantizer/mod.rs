//! Empirical quantization: sampling, codebooks and distortion estimates.

mod lloyd;
mod nearest;
mod sample;

use rayon::prelude::*;

pub use lloyd::{kmeans_pp, lloyd, lloyd_best, Init, LloydParams, LloydResult, DEFAULT_RESTARTS};
pub use nearest::{dist2, NearestIndex, Point};
pub use sample::{sample, SamplePool, DEFAULT_BURN_IN};

use crate::antichain::Antichain;
use crate::carpet::CarpetSpec;
use crate::error::Result;
use crate::numeric::{log_sum_exp, Sum};
use crate::word::rect;

/// Fixed chunk size for parallel reductions; partial results are combined
/// in chunk order so sums do not depend on the worker count.
pub(crate) const CHUNK: usize = 4096;

pub(crate) fn chunked_sum2<T: Sync>(items: &[T], f: impl Fn(&T) -> Point + Sync) -> Point {
    let parts: Vec<Point> = items
        .par_chunks(CHUNK)
        .map(|ch| {
            let mut s = [Sum::new(), Sum::new()];
            for x in ch {
                let v = f(x);
                s[0].add(v[0]);
                s[1].add(v[1]);
            }
            [s[0].value(), s[1].value()]
        })
        .collect();
    let mut s = [Sum::new(), Sum::new()];
    for p in parts {
        s[0].add(p[0]);
        s[1].add(p[1]);
    }
    [s[0].value(), s[1].value()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Lloyd,
    Antichain(usize),
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub points: Vec<Point>,
    pub origin: Origin,
}

impl Codebook {
    pub fn new(points: Vec<Point>, origin: Origin) -> Self {
        Codebook { points, origin }
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    /// All points lie in `[-0.5, 1.5]^2`.
    pub fn in_window(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.iter().all(|c| (-0.5..=1.5).contains(c)))
    }
}

/// `|x - a|^r` from a squared distance.
#[inline]
pub(crate) fn pow_r(d2: f64, r: f64) -> f64 {
    if r == 2.0 {
        d2
    } else {
        d2.powf(r / 2.0)
    }
}

/// Mean of `min_a |x - a|^r` over the pool with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub mean: f64,
    pub stderr: f64,
}

pub fn distortion(pool: &SamplePool, cb: &Codebook, r: f64) -> f64 {
    distortion_stats(pool, cb, r).mean
}

pub fn distortion_stats(pool: &SamplePool, cb: &Codebook, r: f64) -> Distortion {
    let idx = NearestIndex::new(&cb.points);
    let [s1, s2] = chunked_sum2(&pool.points, |x| {
        let v = pow_r(idx.nearest(x).1, r);
        [v, v * v]
    });
    let n = pool.n() as f64;
    let mean = s1 / n;
    let var = if pool.n() > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Distortion {
        mean,
        stderr: (var / n).sqrt(),
    }
}

/// One point per antichain word: the center of its approximate square.
pub fn antichain_codebook(spec: &CarpetSpec, upsilon: &Antichain) -> Result<Codebook> {
    let points = upsilon
        .words
        .iter()
        .map(|w| rect(spec, w).map(|s| s.center()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook::new(
        points,
        Origin::Antichain(upsilon.j.unwrap_or(0)),
    ))
}

/// `sum mu_sigma m^(-|sigma| r)` over the antichain.
pub fn theoretical_proxy(upsilon: &Antichain) -> f64 {
    log_sum_exp(upsilon.ln_weights.iter().copied()).exp()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `max / min` of `k^(r/s) e_k^r`, from `(k, e_k^r)` pairs.
pub fn band_ratio(points: &[(usize, f64)], r: f64, s: f64) -> f64 {
    let v: Vec<f64> = points
        .iter()
        .map(|(k, e)| (*k as f64).powf(r / s) * e)
        .collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}
