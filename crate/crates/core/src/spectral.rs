//! The quantization dimension `s_r` and the constants derived from it.
//!
//! `s_r` is the unique root of
//!
//! ```text
//! (sum_{(i,j)} (p_ij m^-r)^t)^theta * (sum_j (q_j m^-r)^t)^(1-theta) = 1,   t = s/(s+r)
//! ```
//!
//! Every base `p_ij m^-r` and `q_j m^-r` is below one, so the left-hand side
//! is strictly decreasing in `s` and bisection certifies the root.

use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_BISECTIONS: usize = 200;

/// `ln P(t)` and `ln Q(t)` for the moment exponent `t`.
fn ln_sums(spec: &CarpetSpec, r: f64, t: f64) -> (f64, f64) {
    let ln_m = (spec.m() as f64).ln();
    let ln_p = log_sum_exp((0..spec.entries().len()).map(|k| t * (spec.ln_p_at(k) - r * ln_m)));
    let ln_q = log_sum_exp((0..spec.rows().len()).map(|k| t * (spec.ln_q_at(k) - r * ln_m)));
    (ln_p, ln_q)
}

/// Left-hand side of the dimension equation at trial dimension `s`.
pub fn lhs(spec: &CarpetSpec, r: f64, s: f64) -> f64 {
    let t = s / (s + r);
    let theta = spec.theta().value();
    let (ln_p, ln_q) = ln_sums(spec, r, t);
    (theta * ln_p + (1.0 - theta) * ln_q).exp()
}

/// Solve for `s_r` by doubling an upper bracket from 2 and bisecting.
pub fn solve_sr(spec: &CarpetSpec, r: f64, tol: f64) -> Result<f64> {
    assert!(r > 0.0 && tol > 0.0, "need r > 0 and tol > 0");
    let f = |s: f64| lhs(spec, r, s) - 1.0;
    let lhs0 = f(0.0) + 1.0;
    if lhs0 <= 1.0 {
        return Err(Error::NoBracket { lhs0 });
    }
    let mut lo = 0.0;
    let mut hi = 2.0;
    let mut doublings = 0;
    while f(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 {
            return Err(Error::NoBracket { lhs0 });
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever endpoint has the smaller residual
    let s = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    let residual = f(s).abs();
    if residual > tol {
        return Err(Error::NoConvergence { residual, tol });
    }
    Ok(s)
}

/// `s_r` and every constant the certificate checks need.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConstants {
    pub r: f64,
    pub s_r: f64,
    /// Moment exponent `s_r / (s_r + r)`.
    pub t_r: f64,
    pub p_r: f64,
    pub q_r: f64,
    /// `min { p_ij q_k m^-r }`: the smallest one-step weight factor.
    pub eta_lo: f64,
    /// `(max_j q_j m^-r)^t`: the largest one-step energy factor.
    pub eta_hi: f64,
    pub h1: usize,
    pub xi: f64,
    pub h2: f64,
    pub m_r: usize,
    pub h3: f64,
    pub h4: f64,
    pub h5: f64,
}

impl SpectralConstants {
    pub fn ln_eta_lo(&self) -> f64 {
        self.eta_lo.ln()
    }
}

pub fn constants(spec: &CarpetSpec, r: f64) -> Result<SpectralConstants> {
    let s_r = solve_sr(spec, r, DEFAULT_TOL)?;
    Ok(constants_at(spec, r, s_r))
}

/// Constants for a given (already solved) `s_r`.
pub fn constants_at(spec: &CarpetSpec, r: f64, s_r: f64) -> SpectralConstants {
    let t = s_r / (s_r + r);
    let (ln_p, ln_q) = ln_sums(spec, r, t);
    let p_r = ln_p.exp();
    let q_r = ln_q.exp();
    let m_pow = (spec.m() as f64).powf(-r);

    let p_min = spec.entries().iter().map(|e| e.p).fold(f64::MAX, f64::min);
    let q_min = spec
        .row_marginals()
        .iter()
        .copied()
        .fold(f64::MAX, f64::min);
    let eta_lo = p_min * q_min * m_pow;
    let eta_hi = (spec.q_max() * m_pow).powf(t);

    let h1 = first_power_below(eta_hi, eta_lo);

    let xi = (0..spec.rows().len())
        .map(|row| {
            let q = spec.q_at(row);
            spec.row_entries(row)
                .iter()
                .map(|e| (e.p / q).powf(t))
                .sum::<f64>()
        })
        .fold(f64::MIN, f64::max);

    let h2 = p_r.powi(3) * q_r.powi(-2) * eta_lo.powf(-t);
    let m_r = first_power_below(eta_hi, 1.0 / h2);
    let h3 = (0..=m_r).map(|h| xi.powi(h as i32)).sum();
    let h4 = p_r * p_r / q_r;
    let h5 = q_r * q_r / (h3 * p_r * p_r);

    SpectralConstants {
        r,
        s_r,
        t_r: t,
        p_r,
        q_r,
        eta_lo,
        eta_hi,
        h1,
        xi,
        h2,
        m_r,
        h3,
        h4,
        h5,
    }
}

/// Smallest `h >= 1` with `base^h < bound`, for `0 < base < 1`.
fn first_power_below(base: f64, bound: f64) -> usize {
    debug_assert!(base > 0.0 && base < 1.0);
    let mut h = 1usize;
    let mut pow = base;
    while pow >= bound {
        h += 1;
        pow *= base;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

    fn desk1() -> CarpetSpec {
        CarpetSpec::from_json(DESK1).unwrap()
    }

    #[test]
    fn lhs_at_zero_counts_digits() {
        let s = desk1();
        let theta = 2f64.ln() / 3f64.ln();
        // 3^theta = 2 exactly, so lhs(0) = 2 * 2^(1-theta) = 2^(2-theta)
        let expected = 2f64.powf(2.0 - theta);
        assert!((lhs(&s, 2.0, 0.0) - expected).abs() < 1e-13);
        assert!((expected - 2.583_040_468_660_39).abs() < 1e-12);
    }

    #[test]
    fn lhs_large_s_approaches_m_pow_minus_r() {
        let s = desk1();
        for r in [0.5, 1.0, 2.0] {
            let v = lhs(&s, r, 1e9);
            assert!((v - 2f64.powf(-r)).abs() < 1e-6, "r={r} v={v}");
        }
    }

    #[test]
    fn lhs_strictly_decreasing_on_grid() {
        let s = desk1();
        let vals: Vec<f64> = (0..=6).map(|k| lhs(&s, 2.0, 0.5 * k as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn solve_desk1() {
        let s = desk1();
        let s2 = solve_sr(&s, 2.0, DEFAULT_TOL).unwrap();
        assert!((lhs(&s, 2.0, s2) - 1.0).abs() <= 1e-12);
        assert!(s2 > 0.0 && s2 <= 2.0);
        assert!(lhs(&s, 2.0, 2.0) < 1.0);
    }

    #[test]
    fn desk1_constants() {
        let s = desk1();
        let c = constants(&s, 2.0).unwrap();
        assert!((c.eta_lo - 0.03).abs() < 1e-15);
        assert!(c.p_r >= 1.0 && 1.0 >= c.q_r && c.q_r > 0.0);
        assert!(c.eta_lo > 0.0 && c.eta_lo < 1.0);
        // H1 minimal: eta_hi^H1 < eta_lo <= eta_hi^(H1-1)
        assert!(c.eta_hi.powi(c.h1 as i32) < c.eta_lo);
        assert!(c.eta_lo <= c.eta_hi.powi(c.h1 as i32 - 1));
        // M minimal
        assert!(c.eta_hi.powi(c.m_r as i32) < 1.0 / c.h2);
        assert!(c.eta_hi.powi(c.m_r as i32 - 1) >= 1.0 / c.h2);
        assert!(c.xi >= 1.0 && c.h3 >= 1.0);
        assert!((c.t_r - c.s_r / (c.s_r + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn first_power_below_is_minimal() {
        assert_eq!(first_power_below(0.5, 0.3), 2);
        assert_eq!(first_power_below(0.5, 0.25), 3);
        assert_eq!(first_power_below(0.5, 0.6), 1);
    }
}
