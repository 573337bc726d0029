//! The product measure `W` on `G^N x G_y^N` and its cylinder pairs.
//!
//! `W` is the Bernoulli product of `p~_ij = P_r^-1 (p_ij m^-r)^t` on the cell
//! factor and `q~_j = Q_r^-1 (q_j m^-r)^t` on the row factor. A location code
//! `sigma_a * sigma_b` is embedded as the cylinder pair `[sigma_a] x [sigma_b]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::carpet::{CarpetSpec, Cell};
use crate::error::{Error, Result};
use crate::numeric::Sum;
use crate::spectral::SpectralConstants;
use crate::word::{ln_weight, Word};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CylinderPair {
    pub sigma: Vec<Cell>,
    pub omega: Vec<u32>,
}

impl CylinderPair {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sigma.len() + self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty() && self.omega.is_empty()
    }

    /// Both components of `self` are prefixes of the components of `other`.
    pub fn is_prefix_of(&self, other: &CylinderPair) -> bool {
        other.sigma.starts_with(&self.sigma) && other.omega.starts_with(&self.omega)
    }
}

impl fmt::Display for CylinderPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for c in &self.sigma {
            write!(f, "({},{})", c.i, c.j)?;
        }
        f.write_str("]x[")?;
        for (k, j) in self.omega.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str("]")
    }
}

/// Per-symbol weights of `W`, kept in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductWeights {
    ln_p_tilde: BTreeMap<Cell, f64>,
    ln_q_tilde: BTreeMap<u32, f64>,
}

impl ProductWeights {
    pub fn new(spec: &CarpetSpec, consts: &SpectralConstants) -> Self {
        let t = consts.t_r;
        let ln_m_r = consts.r * (spec.m() as f64).ln();
        let ln_p = consts.p_r.ln();
        let ln_q = consts.q_r.ln();
        let ln_p_tilde = spec
            .entries()
            .iter()
            .enumerate()
            .map(|(k, e)| (e.cell, t * (spec.ln_p_at(k) - ln_m_r) - ln_p))
            .collect();
        let ln_q_tilde = spec
            .rows()
            .iter()
            .enumerate()
            .map(|(k, &j)| (j, t * (spec.ln_q_at(k) - ln_m_r) - ln_q))
            .collect();
        ProductWeights {
            ln_p_tilde,
            ln_q_tilde,
        }
    }

    pub fn ln_p_tilde(&self, cell: Cell) -> f64 {
        self.ln_p_tilde[&cell]
    }

    pub fn ln_q_tilde(&self, j: u32) -> f64 {
        self.ln_q_tilde[&j]
    }

    pub fn p_tilde(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.ln_p_tilde.iter().map(|(c, l)| (*c, l.exp()))
    }

    pub fn q_tilde(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.ln_q_tilde.iter().map(|(j, l)| (*j, l.exp()))
    }
}

pub fn ln_w_mass(pw: &ProductWeights, c: &CylinderPair) -> f64 {
    let a: f64 = c.sigma.iter().map(|cell| pw.ln_p_tilde(*cell)).sum();
    let b: f64 = c.omega.iter().map(|j| pw.ln_q_tilde(*j)).sum();
    a + b
}

/// `W([sigma] x [omega])`.
pub fn w_mass(pw: &ProductWeights, c: &CylinderPair) -> f64 {
    ln_w_mass(pw, c).exp()
}

/// `sigma_a * sigma_b  ↦  [sigma_a] x [sigma_b]`.
pub fn embed(w: &Word) -> Result<CylinderPair> {
    if w.is_root() {
        return Err(Error::EmptyWord);
    }
    Ok(CylinderPair {
        sigma: w.a.clone(),
        omega: w.b.clone(),
    })
}

/// `|sigma| + ell(anchor) = ell(|sigma| + |omega| + anchor)`.
///
/// With `anchor = 0` this is the alignment of embedded location codes; with
/// `anchor = k1` it is membership in the pair family `H_{j,r}`.
pub fn is_aligned(spec: &CarpetSpec, c: &CylinderPair, anchor: usize) -> bool {
    c.sigma.len() + spec.ell(anchor) == spec.ell(c.len() + anchor)
}

/// One-step extensions of an aligned pair that stay aligned: a cell is
/// appended to `sigma` when `ell` increments, a row otherwise.
pub fn pair_children(spec: &CarpetSpec, c: &CylinderPair, anchor: usize) -> Vec<CylinderPair> {
    let total = c.len() + anchor;
    if spec.ell(total + 1) == spec.ell(total) {
        spec.rows()
            .iter()
            .map(|&j| {
                let mut omega = c.omega.clone();
                omega.push(j);
                CylinderPair {
                    sigma: c.sigma.clone(),
                    omega,
                }
            })
            .collect()
    } else {
        spec.entries()
            .iter()
            .map(|e| {
                let mut sigma = c.sigma.clone();
                sigma.push(e.cell);
                CylinderPair {
                    sigma,
                    omega: c.omega.clone(),
                }
            })
            .collect()
    }
}

/// `Gamma_h(c)`: aligned sub-pairs of `c` that are `h` symbols longer.
pub fn gamma_h(
    spec: &CarpetSpec,
    c: &CylinderPair,
    h: usize,
    anchor: usize,
) -> Result<Vec<CylinderPair>> {
    if !is_aligned(spec, c, anchor) {
        return Err(Error::MisalignedPair);
    }
    let mut level = vec![c.clone()];
    for _ in 0..h {
        level = level
            .iter()
            .flat_map(|p| pair_children(spec, p, anchor))
            .collect();
    }
    Ok(level)
}

/// Parent of an aligned non-empty pair: drop the last row digit or the last
/// cell, whichever keeps the pair aligned.
pub fn paired_flatten(spec: &CarpetSpec, c: &CylinderPair, anchor: usize) -> Result<CylinderPair> {
    if c.is_empty() {
        return Err(Error::EmptyPair);
    }
    if !is_aligned(spec, c, anchor) {
        return Err(Error::MisalignedPair);
    }
    let mut out = c.clone();
    if spec.ell(c.len() + anchor - 1) == c.sigma.len() + spec.ell(anchor) {
        out.omega.pop().ok_or(Error::MisalignedPair)?;
    } else {
        out.sigma.pop().ok_or(Error::MisalignedPair)?;
    }
    Ok(out)
}

/// `S_1(sigma)`: words of `upsilon` whose components both extend those of
/// `sigma` (non-strictly, so `sigma` itself is included).
pub fn s1_family<'a>(upsilon: &'a [Word], sigma: &Word) -> Vec<&'a Word> {
    upsilon
        .iter()
        .filter(|t| t.a.starts_with(&sigma.a) && t.b.starts_with(&sigma.b))
        .collect()
}

/// Result of the exhaustive overlap check over a threshold antichain.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSummary {
    /// `max_sigma sum_{S_1(sigma)} W / W(sigma)`.
    pub max_ratio: f64,
    pub max_ratio_word: Option<Word>,
    /// `max |tau| - |sigma|` over `tau ∈ S_1(sigma)`.
    pub max_gap: usize,
    /// `sum_{upsilon} W`.
    pub total_w: f64,
    /// `sum W` over words whose pair has no proper prefix pair in the set.
    pub roots_w: f64,
    pub roots: usize,
}

/// Compute every `S_1(sigma)` at once by looking up the aligned prefix pairs
/// of each word.
pub fn overlap_summary(spec: &CarpetSpec, pw: &ProductWeights, upsilon: &[Word]) -> OverlapSummary {
    let index: HashMap<(&[Cell], &[u32]), usize> = upsilon
        .iter()
        .enumerate()
        .map(|(k, w)| ((w.a.as_slice(), w.b.as_slice()), k))
        .collect();
    let ln_w: Vec<f64> = upsilon
        .iter()
        .map(|w| {
            ln_w_mass(
                pw,
                &CylinderPair {
                    sigma: w.a.clone(),
                    omega: w.b.clone(),
                },
            )
        })
        .collect();

    let mut family_sum = vec![Sum::new(); upsilon.len()];
    let mut has_ancestor = vec![false; upsilon.len()];
    let mut max_gap = 0;
    for (ti, tau) in upsilon.iter().enumerate() {
        for len in 0..=tau.order() {
            let x = spec.ell(len);
            let y = len - x;
            if x > tau.a.len() || y > tau.b.len() {
                continue;
            }
            if let Some(&si) = index.get(&(&tau.a[..x], &tau.b[..y])) {
                family_sum[si].add((ln_w[ti] - ln_w[si]).exp());
                max_gap = max_gap.max(tau.order() - upsilon[si].order());
                if si != ti {
                    has_ancestor[ti] = true;
                }
            }
        }
    }

    let mut max_ratio = 0.0;
    let mut max_ratio_word = None;
    for (k, s) in family_sum.iter().enumerate() {
        if s.value() > max_ratio {
            max_ratio = s.value();
            max_ratio_word = Some(upsilon[k].clone());
        }
    }
    let total_w = ln_w.iter().map(|l| l.exp()).collect::<Sum>().value();
    let roots_w = ln_w
        .iter()
        .zip(&has_ancestor)
        .filter(|(_, a)| !**a)
        .map(|(l, _)| l.exp())
        .collect::<Sum>()
        .value();
    OverlapSummary {
        max_ratio,
        max_ratio_word,
        max_gap,
        total_w,
        roots_w,
        roots: has_ancestor.iter().filter(|a| !**a).count(),
    }
}

/// `E_r(w) <= W(embed w) <= P_r Q_r^-1 E_r(w)`, returned as the two ratios
/// `W / E` and `P Q^-1 E / W` (both must be at least one).
pub fn embedding_ratios(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    pw: &ProductWeights,
    w: &Word,
) -> Result<(f64, f64)> {
    let ln_e = consts.t_r * ln_weight(spec, consts.r, w);
    let ln_w = ln_w_mass(pw, &embed(w)?);
    let ln_upper = (consts.p_r / consts.q_r).ln() + ln_e;
    Ok(((ln_w - ln_e).exp(), (ln_upper - ln_w).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::constants;
    use crate::word::{energy, omega};

    const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

    fn setup() -> (CarpetSpec, SpectralConstants, ProductWeights) {
        let s = CarpetSpec::from_json(DESK1).unwrap();
        let c = constants(&s, 2.0).unwrap();
        let pw = ProductWeights::new(&s, &c);
        (s, c, pw)
    }

    #[test]
    fn tilde_vectors_are_probabilities() {
        let (_, _, pw) = setup();
        let p: f64 = pw.p_tilde().map(|(_, v)| v).sum();
        let q: f64 = pw.q_tilde().map(|(_, v)| v).sum();
        assert!((p - 1.0).abs() < 1e-14 && (q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_pair_has_unit_mass() {
        let (_, _, pw) = setup();
        assert_eq!(w_mass(&pw, &CylinderPair::empty()), 1.0);
    }

    #[test]
    fn one_symbol_extensions_add_up() {
        let (s, _, pw) = setup();
        let c = CylinderPair {
            sigma: vec![Cell::new(1, 1)],
            omega: vec![0],
        };
        let base = w_mass(&pw, &c);
        let by_cell: f64 = s
            .entries()
            .iter()
            .map(|e| {
                let mut x = c.clone();
                x.sigma.push(e.cell);
                w_mass(&pw, &x)
            })
            .sum();
        let by_row: f64 = s
            .rows()
            .iter()
            .map(|&j| {
                let mut x = c.clone();
                x.omega.push(j);
                w_mass(&pw, &x)
            })
            .sum();
        assert!((by_cell - base).abs() < 1e-15 && (by_row - base).abs() < 1e-15);
    }

    #[test]
    fn embedded_mass_matches_direct_product() {
        let (s, c, pw) = setup();
        let word: Word = "a:(1,1)|b:0".parse().unwrap();
        let got = w_mass(&pw, &embed(&word).unwrap());
        let t = c.t_r;
        let expected = (0.3f64 * 0.25).powf(t) * (0.4f64 * 0.25).powf(t) / (c.p_r * c.q_r);
        assert!((got - expected).abs() < 1e-15 * expected.max(1.0));
        assert_eq!(embed(&word).unwrap().sigma, vec![Cell::new(1, 1)]);
        assert_eq!(embed(&word).unwrap().omega, vec![0]);
        assert!(matches!(embed(&Word::root()), Err(Error::EmptyWord)));
        let _ = s;
    }

    #[test]
    fn embed_is_injective_per_order() {
        let (s, _, _) = setup();
        for k in 1..=6 {
            let words = omega(&s, k);
            let pairs: std::collections::HashSet<_> =
                words.iter().map(|w| embed(w).unwrap()).collect();
            assert_eq!(pairs.len(), words.len());
        }
    }

    #[test]
    fn embedding_sandwich_holds_beyond_inverse_theta() {
        let (s, c, pw) = setup();
        let k0 = (1.0 / s.theta().value()).ceil() as usize;
        for k in k0..=8 {
            for w in omega(&s, k) {
                let (lo, hi) = embedding_ratios(&s, &c, &pw, &w).unwrap();
                assert!(lo >= 1.0 && hi >= 1.0, "{w}: {lo} {hi}");
            }
        }
    }

    #[test]
    fn gamma_one_has_the_two_forms() {
        let (s, _, _) = setup();
        // |sigma_a| = ell(2) = 1; ell(3) = 1 so the next step appends a row
        let c = embed(&"a:(1,1)|b:0".parse().unwrap()).unwrap();
        let g = gamma_h(&s, &c, 1, 0).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|x| x.sigma == c.sigma && x.omega.len() == 2));
        // ell(4) = 2, so from order 3 a cell is appended
        let c = embed(&"a:(1,1)|b:0 1".parse().unwrap()).unwrap();
        let g = gamma_h(&s, &c, 1, 0).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|x| x.omega == c.omega && x.sigma.len() == 2));
    }

    /// Brute force: every split of `h` extra symbols between the components,
    /// filtered by alignment.
    fn gamma_brute(s: &CarpetSpec, c: &CylinderPair, h: usize) -> Vec<CylinderPair> {
        let mut out = Vec::new();
        for x in 0..=h {
            let y = h - x;
            if c.sigma.len() + x != s.ell(c.len() + h) {
                continue;
            }
            let mut sig = vec![c.sigma.clone()];
            for _ in 0..x {
                sig = sig
                    .iter()
                    .flat_map(|p| {
                        s.entries().iter().map(move |e| {
                            let mut v = p.clone();
                            v.push(e.cell);
                            v
                        })
                    })
                    .collect();
            }
            let mut om = vec![c.omega.clone()];
            for _ in 0..y {
                om = om
                    .iter()
                    .flat_map(|p| {
                        s.rows().iter().map(move |&j| {
                            let mut v = p.clone();
                            v.push(j);
                            v
                        })
                    })
                    .collect();
            }
            for a in &sig {
                for b in &om {
                    out.push(CylinderPair {
                        sigma: a.clone(),
                        omega: b.clone(),
                    });
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn gamma_partition_identity() {
        let (s, c, pw) = setup();
        for word in omega(&s, 3).iter().chain(omega(&s, 4).iter()) {
            let cp = embed(word).unwrap();
            let base = w_mass(&pw, &cp);
            let e0 = energy(&s, &c, word);
            for h in 1..=4 {
                let mut g = gamma_h(&s, &cp, h, 0).unwrap();
                g.sort();
                if h == 3 {
                    assert_eq!(g, gamma_brute(&s, &cp, h));
                }
                let total = g.iter().map(|x| w_mass(&pw, x)).collect::<Sum>().value();
                assert!((total - base).abs() <= 1e-12 * base, "h={h}");
                // energy bracket
                for x in &g {
                    let w = Word::new(x.sigma.clone(), x.omega.clone());
                    let e = energy(&s, &c, &w);
                    let lo = c.eta_lo.powf(h as f64 * c.t_r) * e0;
                    let hi = c.eta_hi.powi(h as i32) * e0;
                    assert!(lo <= e * (1.0 + 1e-12) && e <= hi * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn paired_flatten_basics() {
        let (s, _, _) = setup();
        assert!(matches!(
            paired_flatten(&s, &CylinderPair::empty(), 3),
            Err(Error::EmptyPair)
        ));
        for k1 in 0..6 {
            for child in pair_children(&s, &CylinderPair::empty(), k1) {
                assert_eq!(
                    paired_flatten(&s, &child, k1).unwrap(),
                    CylinderPair::empty()
                );
            }
        }
    }

    #[test]
    fn paired_flatten_inverts_pair_children() {
        let (s, _, _) = setup();
        for k1 in [1usize, 2, 3, 4] {
            let mut level = vec![CylinderPair::empty()];
            for _ in 0..6 {
                let mut next = Vec::new();
                for p in &level {
                    for c in pair_children(&s, p, k1) {
                        assert!(is_aligned(&s, &c, k1));
                        assert_eq!(&paired_flatten(&s, &c, k1).unwrap(), p);
                        next.push(c);
                    }
                }
                level = next;
            }
        }
    }

    #[test]
    fn s1_contains_self() {
        let (s, _, _) = setup();
        let ws = omega(&s, 3);
        for w in &ws {
            let f = s1_family(&ws, w);
            assert_eq!(f, vec![w]);
        }
    }
}
