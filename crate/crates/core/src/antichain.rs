//! Antichain constructions on location codes and cylinder pairs.
//!
//! * `build_upsilon`: the threshold antichain of words whose weight
//!   `mu_sigma m^(-|sigma| r)` first falls below `eta^j`.
//! * `build_gamma_tau`: the threshold antichain of aligned cylinder pairs for
//!   an anchor word `tau` of the minimal order `k1`.
//! * `build_l1_l2`: the grafted words `(tau_a * sigma) * (tau_b * omega)` and
//!   their subset of maximal squares.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use crate::carpet::CarpetSpec;
use crate::error::{Error, Result};
use crate::numeric::Sum;
use crate::product::{is_aligned, pair_children, CylinderPair, ProductWeights};
use crate::spectral::SpectralConstants;
use crate::word::{children_with_ratio, flatten, ln_weight, omega, square, Word};

pub const DEFAULT_CAP: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AntichainKind {
    Upsilon,
    L1,
    L2,
    Slice,
}

/// A finite set of words with their log-weights `ln(mu m^(-|w| r))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Antichain {
    pub kind: AntichainKind,
    pub j: Option<usize>,
    pub words: Vec<Word>,
    pub ln_weights: Vec<f64>,
}

impl Antichain {
    fn from_pairs(kind: AntichainKind, j: Option<usize>, mut items: Vec<(Word, f64)>) -> Self {
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let (words, ln_weights) = items.into_iter().unzip();
        Antichain {
            kind,
            j,
            words,
            ln_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `sum mu_sigma`.
    pub fn total_measure(&self, spec: &CarpetSpec, r: f64) -> f64 {
        let ln_m = (spec.m() as f64).ln();
        self.words
            .iter()
            .zip(&self.ln_weights)
            .map(|(w, lw)| (lw + w.order() as f64 * r * ln_m).exp())
            .collect::<Sum>()
            .value()
    }

    /// `sum E_r(sigma)`.
    pub fn energy_sum(&self, consts: &SpectralConstants) -> f64 {
        self.ln_weights
            .iter()
            .map(|lw| (consts.t_r * lw).exp())
            .collect::<Sum>()
            .value()
    }

    /// `sum mu_sigma m^(-|sigma| r)`.
    pub fn weight_sum(&self) -> f64 {
        self.ln_weights
            .iter()
            .map(|lw| lw.exp())
            .collect::<Sum>()
            .value()
    }
}

/// `Upsilon_{j,r}` by depth-first refinement from the root.
///
/// A word is refined while its weight is at least `eta^j` (ties refine) and
/// collected as soon as it drops below. Weights strictly decrease along
/// refinement, so each collected word's parent is at or above the threshold.
pub fn build_upsilon(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    j: usize,
    cap: usize,
) -> Result<Antichain> {
    let threshold = j as f64 * consts.ln_eta_lo();
    let step = consts.r * (spec.m() as f64).ln();
    let mut stack = vec![(Word::root(), 0.0f64)];
    let mut out = Vec::new();
    while let Some((w, lw)) = stack.pop() {
        for (c, ratio) in children_with_ratio(spec, &w) {
            let lc = lw + ratio - step;
            if lc < threshold {
                out.push((c, lc));
                if out.len() > cap {
                    return Err(Error::CapExceeded {
                        cap,
                        found: out.len(),
                    });
                }
            } else {
                stack.push((c, lc));
            }
        }
    }
    Ok(Antichain::from_pairs(AntichainKind::Upsilon, Some(j), out))
}

/// Cardinality and order range of an antichain, with per-order counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slices {
    pub psi: usize,
    pub k1: usize,
    pub k2: usize,
    pub by_order: BTreeMap<usize, usize>,
}

pub fn slices(upsilon: &Antichain) -> Slices {
    let mut by_order = BTreeMap::new();
    for w in &upsilon.words {
        *by_order.entry(w.order()).or_insert(0) += 1;
    }
    Slices {
        psi: upsilon.len(),
        k1: by_order.keys().next().copied().unwrap_or(0),
        k2: by_order.keys().next_back().copied().unwrap_or(0),
        by_order,
    }
}

/// `Lambda_{j,r}(k)`: the words of order `k`.
pub fn lambda(upsilon: &Antichain, k: usize) -> Vec<&Word> {
    upsilon.words.iter().filter(|w| w.order() == k).collect()
}

/// Descendants of `sigma` (itself included) whose energy stays at least
/// `E_r(sigma) / H2`.
#[derive(Debug, Clone, PartialEq)]
pub struct S2Family {
    pub members: Vec<Word>,
    pub energy_sum: f64,
    pub energy_sigma: f64,
    pub max_gap: usize,
    /// Set if `depth_cap` cut the enumeration short.
    pub truncated: bool,
}

impl S2Family {
    pub fn ratio(&self) -> f64 {
        self.energy_sum / self.energy_sigma
    }
}

pub fn s2_family(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    sigma: &Word,
    depth_cap: usize,
) -> S2Family {
    let t = consts.t_r;
    let step = consts.r * (spec.m() as f64).ln();
    let le0 = t * ln_weight(spec, consts.r, sigma);
    let floor = le0 - consts.h2.ln();
    let mut members = vec![sigma.clone()];
    let mut sum = Sum::new();
    sum.add(le0.exp());
    let mut max_gap = 0;
    let mut truncated = false;
    let mut stack = vec![(sigma.clone(), le0)];
    while let Some((w, le)) = stack.pop() {
        let depth = w.order() - sigma.order();
        if depth >= depth_cap {
            truncated = true;
            continue;
        }
        for (c, ratio) in children_with_ratio(spec, &w) {
            let lc = le + t * (ratio - step);
            if lc >= floor {
                sum.add(lc.exp());
                max_gap = max_gap.max(depth + 1);
                members.push(c.clone());
                stack.push((c, lc));
            }
        }
    }
    members.sort();
    S2Family {
        members,
        energy_sum: sum.value(),
        energy_sigma: le0.exp(),
        max_gap,
        truncated,
    }
}

/// Threshold antichain on the aligned pair tree rooted at the empty pair:
/// pairs `c` with `W(parent) >= eps > W(c)`. Returns pairs with `ln W`.
pub fn threshold_pair_antichain(
    spec: &CarpetSpec,
    pw: &ProductWeights,
    ln_eps: f64,
    anchor: usize,
    cap: usize,
) -> Result<Vec<(CylinderPair, f64)>> {
    if ln_eps > 0.0 {
        return Err(Error::BadTau(format!(
            "threshold {} exceeds 1",
            ln_eps.exp()
        )));
    }
    let mut stack = vec![(CylinderPair::empty(), 0.0f64)];
    let mut out = Vec::new();
    while let Some((c, lw)) = stack.pop() {
        for child in pair_children(spec, &c, anchor) {
            let lc = if child.sigma.len() > c.sigma.len() {
                lw + pw.ln_p_tilde(*child.sigma.last().unwrap())
            } else {
                lw + pw.ln_q_tilde(*child.omega.last().unwrap())
            };
            if lc < ln_eps {
                out.push((child, lc));
                if out.len() > cap {
                    return Err(Error::CapExceeded {
                        cap,
                        found: out.len(),
                    });
                }
            } else {
                stack.push((child, lc));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// `eps(tau) = eta^(j t) / E_r(tau)`, in log form.
pub fn ln_epsilon(spec: &CarpetSpec, consts: &SpectralConstants, j: usize, tau: &Word) -> f64 {
    let t = consts.t_r;
    j as f64 * t * consts.ln_eta_lo() - t * ln_weight(spec, consts.r, tau)
}

/// `Gamma(tau)` for an order-`k1` word `tau` outside `Lambda_{j,r}(k1)`.
pub fn build_gamma_tau(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    pw: &ProductWeights,
    upsilon: &Antichain,
    tau: &Word,
    cap: usize,
) -> Result<Vec<(CylinderPair, f64)>> {
    let j = upsilon.j.unwrap_or(0);
    let k1 = slices(upsilon).k1;
    if tau.order() != k1 || !tau.is_location_code(spec) {
        return Err(Error::BadTau(format!(
            "{tau} is not a location code of order {k1}"
        )));
    }
    if upsilon.words.binary_search(tau).is_ok() {
        return Err(Error::BadTau(format!("{tau} belongs to Lambda(k1)")));
    }
    threshold_pair_antichain(spec, pw, ln_epsilon(spec, consts, j, tau), k1, cap)
}

/// The grafted set `L1`, its maximal squares `L2`, and bookkeeping used by
/// the certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct LConstruction {
    pub j: usize,
    pub k1: usize,
    pub l1: Antichain,
    pub l2: Antichain,
    /// Number of anchors `tau` in `Omega_{k1} \ Lambda(k1)`.
    pub anchors: usize,
    /// `max_tau |sum_{Gamma(tau)} W - 1|`.
    pub gamma_max_dev: f64,
    /// Largest `eps(tau)` seen (must be at most one).
    pub max_epsilon: f64,
    /// Every `Gamma(tau)` pair lies in `H_{j,r}`.
    pub gamma_aligned: bool,
    /// Every `L1` word is a valid location code.
    pub l1_valid: bool,
    /// No two grafts coincide.
    pub l1_distinct: bool,
    /// `sum_{L1} W(embed)`; the embedded cylinders partition the space.
    pub l1_w_sum: f64,
}

impl LConstruction {
    pub fn phi(&self) -> usize {
        self.l2.len()
    }
}

pub fn build_l1_l2(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    pw: &ProductWeights,
    upsilon: &Antichain,
    cap: usize,
) -> Result<LConstruction> {
    let j = upsilon.j.unwrap_or(0);
    let k1 = slices(upsilon).k1;
    let lambda_k1: HashSet<&Word> = lambda(upsilon, k1).into_iter().collect();

    let mut items: Vec<(Word, f64)> = Vec::new();
    let mut w_sum = Sum::new();
    for w in &lambda_k1 {
        let lw = ln_weight(spec, consts.r, w);
        w_sum.add(crate::product::w_mass(pw, &crate::product::embed(w)?));
        items.push(((*w).clone(), lw));
    }

    let mut anchors = 0;
    let mut gamma_max_dev: f64 = 0.0;
    let mut max_epsilon: f64 = 0.0;
    let mut gamma_aligned = true;
    for tau in omega(spec, k1) {
        if lambda_k1.contains(&tau) {
            continue;
        }
        anchors += 1;
        let ln_eps = ln_epsilon(spec, consts, j, &tau);
        max_epsilon = max_epsilon.max(ln_eps.exp());
        let gamma = threshold_pair_antichain(spec, pw, ln_eps, k1, cap)?;
        let ln_w_tau = crate::product::ln_w_mass(pw, &crate::product::embed(&tau)?);
        let mut sum = Sum::new();
        for (pair, ln_w) in &gamma {
            sum.add(ln_w.exp());
            w_sum.add((ln_w + ln_w_tau).exp());
            gamma_aligned &= is_aligned(spec, pair, k1);
            let mut a = tau.a.clone();
            a.extend_from_slice(&pair.sigma);
            let mut b = tau.b.clone();
            b.extend_from_slice(&pair.omega);
            let word = Word::new(a, b);
            let lw = ln_weight(spec, consts.r, &word);
            items.push((word, lw));
        }
        gamma_max_dev = gamma_max_dev.max((sum.value() - 1.0).abs());
        if items.len() > cap {
            return Err(Error::CapExceeded {
                cap,
                found: items.len(),
            });
        }
    }

    let l1_valid = items.iter().all(|(w, _)| w.is_location_code(spec));
    let set: HashSet<&Word> = items.iter().map(|(w, _)| w).collect();
    let l1_distinct = set.len() == items.len();

    // L2: words of L1 with no proper ancestor in L1 (the shortest word of T(rho))
    let mut l2_items = Vec::new();
    for (w, lw) in &items {
        let mut cur = w.clone();
        let mut covered = false;
        while cur.order() > k1 {
            cur = flatten(spec, &cur)?;
            if set.contains(&cur) {
                covered = true;
                break;
            }
        }
        if !covered {
            l2_items.push((w.clone(), *lw));
        }
    }

    Ok(LConstruction {
        j,
        k1,
        l1: Antichain::from_pairs(AntichainKind::L1, Some(j), items),
        l2: Antichain::from_pairs(AntichainKind::L2, Some(j), l2_items),
        anchors,
        gamma_max_dev,
        max_epsilon,
        gamma_aligned,
        l1_valid,
        l1_distinct,
        l1_w_sum: w_sum.value(),
    })
}

/// First pair of words (by index) whose approximate squares have
/// intersecting interiors, found by a sweep over exact integer coordinates.
pub fn find_overlap(spec: &CarpetSpec, words: &[Word]) -> Result<Option<(usize, usize)>> {
    if words.len() < 2 {
        return Ok(None);
    }
    let squares = words
        .iter()
        .map(|w| square(spec, w))
        .collect::<Result<Vec<_>>>()?;
    let big_l = squares.iter().map(|s| s.ell).max().unwrap();
    let big_k = squares.iter().map(|s| s.k).max().unwrap();
    let overflow = || Error::DepthOverflow { order: big_k };
    let n = spec.n() as u128;
    let m = spec.m() as u128;
    n.checked_pow(big_l as u32).ok_or_else(overflow)?;
    m.checked_pow(big_k as u32).ok_or_else(overflow)?;

    // [x0, x1) x [y0, y1) on the common grid n^-L x m^-K
    let boxes: Vec<(u128, u128, u128, u128)> = squares
        .iter()
        .map(|s| {
            let sx = n.pow((big_l - s.ell) as u32);
            let sy = m.pow((big_k - s.k) as u32);
            (s.p * sx, (s.p + 1) * sx, s.q * sy, (s.q + 1) * sy)
        })
        .collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&k| (boxes[k].0, k));

    // active boxes all straddle the sweep line; if no overlap has been found
    // their y-intervals are disjoint and can be kept in an ordered map
    let mut active: BTreeMap<u128, usize> = BTreeMap::new();
    let mut expiry: BinaryHeap<Reverse<(u128, usize)>> = BinaryHeap::new();
    for &k in &order {
        let (x0, x1, y0, y1) = boxes[k];
        while let Some(&Reverse((end, idx))) = expiry.peek() {
            if end > x0 {
                break;
            }
            expiry.pop();
            if active.get(&boxes[idx].2) == Some(&idx) {
                active.remove(&boxes[idx].2);
            }
        }
        if let Some((_, &other)) = active.range(..=y0).next_back() {
            if boxes[other].3 > y0 {
                return Ok(Some((other.min(k), other.max(k))));
            }
        }
        if let Some((_, &other)) = active.range(y0..y1).next() {
            return Ok(Some((other.min(k), other.max(k))));
        }
        active.insert(y0, k);
        expiry.push(Reverse((x1, k)));
    }
    Ok(None)
}

/// `(H6, H7)`: the smallest `h` with `eta^(-(h-1) t) > H4/H5`, and
/// `H7 = H4 H5^-1 eta^(-(H6+1) t)`.
pub fn growth_constants(consts: &SpectralConstants) -> (usize, f64) {
    let t = consts.t_r;
    let ln_eta = consts.ln_eta_lo();
    let target = (consts.h4 / consts.h5).ln();
    let mut h = 1usize;
    while -((h - 1) as f64) * t * ln_eta <= target {
        h += 1;
    }
    let h7 = consts.h4 / consts.h5 * (-((h + 1) as f64) * t * ln_eta).exp();
    (h, h7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::w_mass;
    use crate::spectral::constants;
    use crate::word::{energy, rect};

    const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

    fn setup() -> (CarpetSpec, SpectralConstants, ProductWeights) {
        let s = CarpetSpec::from_json(DESK1).unwrap();
        let c = constants(&s, 2.0).unwrap();
        let pw = ProductWeights::new(&s, &c);
        (s, c, pw)
    }

    #[test]
    fn upsilon_zero_is_first_level() {
        let (s, c, _) = setup();
        let u = build_upsilon(&s, &c, 0, DEFAULT_CAP).unwrap();
        let expect: Vec<Word> = vec!["a:|b:0".parse().unwrap(), "a:|b:1".parse().unwrap()];
        assert_eq!(u.words, expect);
        let sl = slices(&u);
        assert_eq!((sl.psi, sl.k1, sl.k2), (2, 1, 1));
    }

    #[test]
    fn upsilon_weight_band_and_mass() {
        let (s, c, _) = setup();
        let ln_eta = c.ln_eta_lo();
        for j in 0..=6 {
            let u = build_upsilon(&s, &c, j, DEFAULT_CAP).unwrap();
            for (w, lw) in u.words.iter().zip(&u.ln_weights) {
                assert!((ln_weight(&s, 2.0, w) - lw).abs() < 1e-12);
                assert!(*lw < j as f64 * ln_eta && *lw >= (j + 1) as f64 * ln_eta);
                let parent = flatten(&s, w).unwrap();
                assert!(ln_weight(&s, 2.0, &parent) >= j as f64 * ln_eta);
            }
            assert!((u.total_measure(&s, 2.0) - 1.0).abs() < 1e-12);
            assert_eq!(find_overlap(&s, &u.words).unwrap(), None);
            let sl = slices(&u);
            assert_eq!(sl.by_order.values().sum::<usize>(), sl.psi);
        }
    }

    #[test]
    fn cap_is_reported() {
        let (s, c, _) = setup();
        let e = build_upsilon(&s, &c, 5, 10).unwrap_err();
        assert!(matches!(e, Error::CapExceeded { cap: 10, found: 11 }));
    }

    #[test]
    fn overlap_sweep_matches_pairwise() {
        let (s, _, _) = setup();
        let mut words: Vec<Word> = omega(&s, 4);
        assert_eq!(find_overlap(&s, &words).unwrap(), None);
        words.push("a:(1,1)|b:0".parse().unwrap());
        let got = find_overlap(&s, &words).unwrap();
        assert!(got.is_some());
        let (a, b) = got.unwrap();
        assert!(rect(&s, &words[a])
            .unwrap()
            .interiors_overlap(&rect(&s, &words[b]).unwrap()));
    }

    #[test]
    fn s2_of_tiny_h2_is_singleton() {
        let (s, c, _) = setup();
        let mut c2 = c.clone();
        // below the inverse of the largest one-step energy factor
        c2.h2 = 0.5 / c.eta_hi;
        let sigma: Word = "a:(1,1)|b:0".parse().unwrap();
        let f = s2_family(&s, &c2, &sigma, 64);
        assert_eq!(f.members, vec![sigma]);
        assert!((f.ratio() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn s2_bound_and_gap() {
        let (s, c, _) = setup();
        for k in 1..=6 {
            for sigma in omega(&s, k) {
                let f = s2_family(&s, &c, &sigma, 64);
                assert!(!f.truncated);
                assert!(f.ratio() <= c.h3, "{sigma}: {}", f.ratio());
                assert!(f.max_gap <= c.m_r);
                assert!((f.energy_sigma - energy(&s, &c, &sigma)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gamma_at_unit_threshold_is_first_step() {
        let (s, _, pw) = setup();
        for k1 in 1..5 {
            let g = threshold_pair_antichain(&s, &pw, 0.0, k1, DEFAULT_CAP).unwrap();
            let mut expect = pair_children(&s, &CylinderPair::empty(), k1);
            expect.sort();
            assert_eq!(g.into_iter().map(|x| x.0).collect::<Vec<_>>(), expect);
        }
        assert!(matches!(
            threshold_pair_antichain(&s, &pw, 0.1, 1, DEFAULT_CAP),
            Err(Error::BadTau(_))
        ));
    }

    #[test]
    fn gamma_tau_partitions_and_aligns() {
        let (s, c, pw) = setup();
        let mut admissible = 0;
        for j in 1..=6 {
            let u = build_upsilon(&s, &c, j, DEFAULT_CAP).unwrap();
            let k1 = slices(&u).k1;
            for tau in omega(&s, k1) {
                match build_gamma_tau(&s, &c, &pw, &u, &tau, DEFAULT_CAP) {
                    Ok(g) => {
                        admissible += 1;
                        let total = g
                            .iter()
                            .map(|(p, _)| w_mass(&pw, p))
                            .collect::<Sum>()
                            .value();
                        assert!((total - 1.0).abs() < 1e-12);
                        assert!(g.iter().all(|(p, _)| is_aligned(&s, p, k1)));
                    }
                    Err(Error::BadTau(_)) => assert!(u.words.contains(&tau)),
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!(admissible > 0);
    }

    #[test]
    fn l_construction_small_j() {
        let (s, c, pw) = setup();
        for j in 2..=4 {
            let u = build_upsilon(&s, &c, j, DEFAULT_CAP).unwrap();
            let l = build_l1_l2(&s, &c, &pw, &u, DEFAULT_CAP).unwrap();
            assert!(l.l1_valid && l.l1_distinct && l.gamma_aligned);
            assert!(l.gamma_max_dev < 1e-12);
            assert!(l.max_epsilon <= 1.0);
            assert!((l.l1_w_sum - 1.0).abs() < 1e-12);
            assert_eq!(find_overlap(&s, &l.l2.words).unwrap(), None);
            assert!(l.phi() <= l.l1.len());
        }
    }

    #[test]
    fn growth_constants_minimal() {
        let (_, c, _) = setup();
        let (h6, h7) = growth_constants(&c);
        let t = c.t_r;
        let e = c.eta_lo;
        assert!(e.powf(-((h6 - 1) as f64) * t) > c.h4 / c.h5);
        assert!(h6 == 1 || e.powf(-((h6 - 2) as f64) * t) <= c.h4 / c.h5);
        assert!(h7 > 1.0);
    }
}
