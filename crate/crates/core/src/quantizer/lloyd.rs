use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::nearest::{dist2, NearestIndex, Point};
use super::{pow_r, Codebook, Origin, SamplePool, CHUNK};
use crate::error::{Error, Result};
use crate::numeric::Sum;

pub const DEFAULT_RESTARTS: usize = 5;
const DESCENT_STEPS: usize = 50;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydParams {
    pub max_iters: usize,
    /// Stop once the relative improvement drops below this.
    pub tol: f64,
}

impl Default for LloydParams {
    fn default() -> Self {
        LloydParams {
            max_iters: 200,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Init {
    Codebook(Codebook),
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydResult {
    pub codebook: Codebook,
    pub distortion: f64,
    pub iters: usize,
    /// Distortion after the initial assignment and after every iteration.
    pub history: Vec<f64>,
    /// Number of empty cells reseeded on a far sample point.
    pub repairs: usize,
    pub restarts_used: usize,
}

/// k-means++ seeding with selection probability proportional to `d^r`.
pub fn kmeans_pp(pool: &SamplePool, k: usize, r: f64, seed: u64) -> Result<Codebook> {
    check_k(pool, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = &pool.points;
    let mut centers = vec![pts[rng.random_range(0..pts.len())]];
    let mut d2: Vec<f64> = pts.par_iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let weights: Vec<f64> = d2.iter().map(|&d| pow_r(d, r)).collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(&mut rng),
            Err(_) => rng.random_range(0..pts.len()),
        };
        let c = pts[pick];
        centers.push(c);
        d2.par_iter_mut()
            .zip(pts.par_iter())
            .for_each(|(d, x)| *d = d.min(dist2(x, &c)));
    }
    Ok(Codebook::new(centers, Origin::Random))
}

fn check_k(pool: &SamplePool, k: usize) -> Result<()> {
    if k < 1 || k > pool.n() {
        return Err(Error::BadK { k, pool: pool.n() });
    }
    Ok(())
}

/// Nearest-center assignment; returns the mean distortion.
fn assign(
    pool: &SamplePool,
    centers: &[Point],
    r: f64,
    labels: &mut [usize],
    d2: &mut [f64],
) -> f64 {
    let idx = NearestIndex::new(centers);
    let parts: Vec<f64> = pool
        .points
        .par_chunks(CHUNK)
        .zip(labels.par_chunks_mut(CHUNK))
        .zip(d2.par_chunks_mut(CHUNK))
        .map(|((pts, lab), dd)| {
            let mut s = Sum::new();
            for ((x, l), d) in pts.iter().zip(lab.iter_mut()).zip(dd.iter_mut()) {
                let (k, dist) = idx.nearest(x);
                *l = k;
                *d = dist;
                s.add(pow_r(dist, r));
            }
            s.value()
        })
        .collect();
    parts.into_iter().collect::<Sum>().value() / pool.n() as f64
}

fn cost(pts: &[Point], a: &Point, r: f64) -> f64 {
    pts.iter()
        .map(|x| pow_r(dist2(x, a), r))
        .collect::<Sum>()
        .value()
}

/// Damped gradient descent on `sum |x - a|^r` from the cell mean; the old
/// center is kept if it is still better.
fn r_center(pts: &[Point], mean: Point, old: Point, r: f64) -> Point {
    let mut a = mean;
    let mut fa = cost(pts, &a, r);
    let lip = r
        * (r - 1.0).max(1.0)
        * pts
            .iter()
            .map(|x| dist2(x, &a).sqrt().max(1e-6).powf(r - 2.0))
            .sum::<f64>();
    let mut step = 0.5 / lip;
    for _ in 0..DESCENT_STEPS {
        let mut g = [Sum::new(), Sum::new()];
        for x in pts {
            let d = dist2(x, &a).sqrt();
            if d > 0.0 {
                let w = r * d.powf(r - 2.0);
                g[0].add(w * (a[0] - x[0]));
                g[1].add(w * (a[1] - x[1]));
            }
        }
        let g = [g[0].value(), g[1].value()];
        if g[0] == 0.0 && g[1] == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = [a[0] - step * g[0], a[1] - step * g[1]];
            let fc = cost(pts, &cand, r);
            if fc <= fa {
                a = cand;
                fa = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if cost(pts, &old, r) < fa {
        old
    } else {
        a
    }
}

/// Lloyd iteration from `init` (a codebook or a k-means++ seed).
pub fn lloyd(
    pool: &SamplePool,
    k: usize,
    r: f64,
    init: Init,
    params: &LloydParams,
) -> Result<LloydResult> {
    check_k(pool, k)?;
    let mut centers = match init {
        Init::Codebook(cb) => {
            if cb.k() != k {
                return Err(Error::BadK {
                    k: cb.k(),
                    pool: pool.n(),
                });
            }
            cb.points
        }
        Init::Seed(seed) => kmeans_pp(pool, k, r, seed)?.points,
    };
    let n = pool.n();
    let mut labels = vec![0usize; n];
    let mut d2 = vec![0.0f64; n];
    let mut dist = assign(pool, &centers, r, &mut labels, &mut d2);
    let mut history = vec![dist];
    let mut repairs = 0;
    let mut iters = 0;

    while iters < params.max_iters && dist > 0.0 {
        iters += 1;
        // group point indices by cell
        let mut starts = vec![0usize; k + 1];
        for &l in &labels {
            starts[l + 1] += 1;
        }
        for c in 0..k {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut members = vec![0usize; n];
        for (i, &l) in labels.iter().enumerate() {
            members[fill[l]] = i;
            fill[l] += 1;
        }

        let mut next: Vec<Option<Point>> = (0..k)
            .into_par_iter()
            .map(|c| {
                let ids = &members[starts[c]..starts[c + 1]];
                if ids.is_empty() {
                    return None;
                }
                let pts: Vec<Point> = ids.iter().map(|&i| pool.points[i]).collect();
                let s: Vec<Sum> = (0..2).map(|a| pts.iter().map(|p| p[a]).collect()).collect();
                let mean = [
                    s[0].value() / pts.len() as f64,
                    s[1].value() / pts.len() as f64,
                ];
                Some(if r == 2.0 {
                    mean
                } else {
                    r_center(&pts, mean, centers[c], r)
                })
            })
            .collect();

        let empty: Vec<usize> = (0..k).filter(|&c| next[c].is_none()).collect();
        if !empty.is_empty() {
            let mut far: Vec<usize> = (0..n).collect();
            far.sort_by(|&a, &b| d2[b].total_cmp(&d2[a]).then(a.cmp(&b)));
            for (c, &i) in empty.iter().zip(&far) {
                next[*c] = Some(pool.points[i]);
            }
            repairs += empty.len();
        }
        centers = next.into_iter().map(|p| p.unwrap()).collect();

        let new = assign(pool, &centers, r, &mut labels, &mut d2);
        history.push(new);
        let done = dist - new <= params.tol * dist;
        dist = new;
        if done {
            break;
        }
    }
    Ok(LloydResult {
        codebook: Codebook::new(centers, Origin::Lloyd),
        distortion: dist,
        iters,
        history,
        repairs,
        restarts_used: 1,
    })
}

/// Best of `restarts` seeded runs (a single run for `k = 1`).
pub fn lloyd_best(
    pool: &SamplePool,
    k: usize,
    r: f64,
    seed: u64,
    restarts: usize,
    params: &LloydParams,
) -> Result<LloydResult> {
    let runs = if k == 1 { 1 } else { restarts.max(1) };
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<LloydResult> = None;
    for _ in 0..runs {
        let res = lloyd(pool, k, r, Init::Seed(seeds.next_u64()), params)?;
        if best.as_ref().is_none_or(|b| res.distortion < b.distortion) {
            best = Some(res);
        }
    }
    let mut best = best.unwrap();
    best.restarts_used = runs;
    Ok(best)
}
