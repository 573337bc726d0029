//! Location codes of approximate squares.
//!
//! A word of order `k` is `sigma = sigma_a * sigma_b` with `ell(k)` full grid
//! cells in `sigma_a` followed by `k - ell(k)` row digits in `sigma_b`. Its
//! approximate square has width `n^-ell(k)` and height `m^-k`.

use std::fmt;
use std::str::FromStr;

use crate::carpet::{CarpetSpec, Cell};
use crate::error::{Error, Result};
use crate::spectral::SpectralConstants;

/// `floor(k * theta)`.
pub fn ell(k: usize, theta: &crate::carpet::Theta) -> usize {
    theta.ell(k)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    pub a: Vec<Cell>,
    pub b: Vec<u32>,
}

impl Word {
    pub fn root() -> Self {
        Word::default()
    }

    pub fn new(a: Vec<Cell>, b: Vec<u32>) -> Self {
        Word { a, b }
    }

    pub fn order(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn is_root(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    /// The full row sequence: the rows of `sigma_a` followed by `sigma_b`.
    pub fn rows(&self) -> impl Iterator<Item = u32> + '_ {
        self.a.iter().map(|c| c.j).chain(self.b.iter().copied())
    }

    /// Check membership in `Omega_k` (the root is admitted).
    pub fn validate(&self, spec: &CarpetSpec) -> Result<()> {
        let k = self.order();
        if self.a.len() != spec.ell(k) {
            return Err(Error::InvalidWord(format!(
                "{self}: |sigma_a| = {} but ell({k}) = {}",
                self.a.len(),
                spec.ell(k)
            )));
        }
        if let Some(c) = self.a.iter().find(|c| spec.entry_index(**c).is_none()) {
            return Err(Error::InvalidWord(format!(
                "{self}: cell ({},{}) not in G",
                c.i, c.j
            )));
        }
        if let Some(j) = self.b.iter().find(|j| spec.row_index(**j).is_none()) {
            return Err(Error::InvalidWord(format!("{self}: row {j} not in G_y")));
        }
        Ok(())
    }

    pub fn is_location_code(&self, spec: &CarpetSpec) -> bool {
        self.validate(spec).is_ok()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a:")?;
        for c in &self.a {
            write!(f, "({},{})", c.i, c.j)?;
        }
        f.write_str("|b:")?;
        for (k, j) in self.b.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    /// Parse the canonical encoding `a:(i,j)(i,j)...|b:j j ...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidWord(format!("{s:?}: {why}"));
        let rest = s.strip_prefix("a:").ok_or_else(|| bad("missing 'a:'"))?;
        let (a_part, b_part) = rest.split_once("|b:").ok_or_else(|| bad("missing '|b:'"))?;

        let mut a = Vec::new();
        let mut cur = a_part;
        while !cur.is_empty() {
            let body = cur.strip_prefix('(').ok_or_else(|| bad("expected '('"))?;
            let (pair, tail) = body.split_once(')').ok_or_else(|| bad("unclosed '('"))?;
            let (i, j) = pair.split_once(',').ok_or_else(|| bad("expected 'i,j'"))?;
            let i = i.parse::<u32>().map_err(|_| bad("bad column"))?;
            let j = j.parse::<u32>().map_err(|_| bad("bad row"))?;
            a.push(Cell::new(i, j));
            cur = tail;
        }
        let b = if b_part.is_empty() {
            Vec::new()
        } else {
            b_part
                .split(' ')
                .map(|t| t.parse::<u32>().map_err(|_| bad("bad row digit")))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Word { a, b })
    }
}

/// Children of `w` together with `ln(mu_child / mu_w)`.
///
/// If `ell(k+1) = ell(k)` a row digit is appended to `sigma_b`. Otherwise the
/// head `j1` of `sigma_b` is promoted to a full cell `(i, j1)`, `i` ranging
/// over the fibre `G_{x,j1}`, and a new row digit is appended.
pub fn children_with_ratio(spec: &CarpetSpec, w: &Word) -> Vec<(Word, f64)> {
    let k = w.order();
    let rows = spec.rows();
    let mut out = Vec::new();
    if spec.ell(k + 1) == spec.ell(k) {
        for (r, &jh) in rows.iter().enumerate() {
            let mut b = Vec::with_capacity(w.b.len() + 1);
            b.extend_from_slice(&w.b);
            b.push(jh);
            out.push((Word { a: w.a.clone(), b }, spec.ln_q_at(r)));
        }
    } else {
        let j1 = w.b[0];
        let row1 = spec.row_index(j1).expect("word rows lie in G_y");
        let ln_q1 = spec.ln_q_at(row1);
        for e in spec.row_entry_range(row1) {
            let cell = spec.entries()[e].cell;
            let ln_cell = spec.ln_p_at(e) - ln_q1;
            for (r, &jh) in rows.iter().enumerate() {
                let mut a = Vec::with_capacity(w.a.len() + 1);
                a.extend_from_slice(&w.a);
                a.push(cell);
                let mut b = Vec::with_capacity(w.b.len());
                b.extend_from_slice(&w.b[1..]);
                b.push(jh);
                out.push((Word { a, b }, ln_cell + spec.ln_q_at(r)));
            }
        }
    }
    out
}

/// The order-`k+1` words whose flattening is `w`.
pub fn children(spec: &CarpetSpec, w: &Word) -> Vec<Word> {
    children_with_ratio(spec, w)
        .into_iter()
        .map(|(c, _)| c)
        .collect()
}

/// The parent `sigma^flat` of a word of order `k >= 1`.
pub fn flatten(spec: &CarpetSpec, w: &Word) -> Result<Word> {
    let k = w.order();
    if k == 0 {
        return Err(Error::EmptyWord);
    }
    let mut out = w.clone();
    if spec.ell(k) == spec.ell(k - 1) {
        out.b.pop();
    } else {
        let last = out
            .a
            .pop()
            .ok_or_else(|| Error::InvalidWord(format!("{w}: sigma_a is empty")))?;
        out.b.pop();
        out.b.insert(0, last.j);
    }
    Ok(out)
}

/// All words of order `k`, in canonical order.
pub fn omega(spec: &CarpetSpec, k: usize) -> Vec<Word> {
    let mut level = vec![Word::root()];
    for _ in 0..k {
        level = level.iter().flat_map(|w| children(spec, w)).collect();
    }
    level.sort();
    level
}

pub fn ln_measure(spec: &CarpetSpec, w: &Word) -> f64 {
    let a: f64 =
        w.a.iter()
            .map(|c| spec.ln_p_at(spec.entry_index(*c).expect("cell in G")))
            .sum();
    let b: f64 =
        w.b.iter()
            .map(|j| spec.ln_q_at(spec.row_index(*j).expect("row in G_y")))
            .sum();
    a + b
}

/// `mu_sigma`.
pub fn measure(spec: &CarpetSpec, w: &Word) -> f64 {
    ln_measure(spec, w).exp()
}

/// `ln(mu_sigma m^(-k r))`.
pub fn ln_weight(spec: &CarpetSpec, r: f64, w: &Word) -> f64 {
    ln_measure(spec, w) - w.order() as f64 * r * (spec.m() as f64).ln()
}

pub fn weight(spec: &CarpetSpec, r: f64, w: &Word) -> f64 {
    ln_weight(spec, r, w).exp()
}

/// `E_r(sigma) = (mu_sigma m^(-k r))^t_r`.
pub fn energy(spec: &CarpetSpec, consts: &SpectralConstants, w: &Word) -> f64 {
    (consts.t_r * ln_weight(spec, consts.r, w)).exp()
}

/// An approximate square `[p/n^l, (p+1)/n^l] x [q/m^k, (q+1)/m^k]` in exact
/// integer form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ApproxSquare {
    pub p: u128,
    pub q: u128,
    pub ell: usize,
    pub k: usize,
    pub n: u32,
    pub m: u32,
}

impl ApproxSquare {
    pub fn x_lo(&self) -> f64 {
        self.p as f64 / (self.n as f64).powi(self.ell as i32)
    }
    pub fn x_hi(&self) -> f64 {
        (self.p + 1) as f64 / (self.n as f64).powi(self.ell as i32)
    }
    pub fn y_lo(&self) -> f64 {
        self.q as f64 / (self.m as f64).powi(self.k as i32)
    }
    pub fn y_hi(&self) -> f64 {
        (self.q + 1) as f64 / (self.m as f64).powi(self.k as i32)
    }
    pub fn width(&self) -> f64 {
        (self.n as f64).powi(-(self.ell as i32))
    }
    pub fn height(&self) -> f64 {
        (self.m as f64).powi(-(self.k as i32))
    }
    pub fn center(&self) -> [f64; 2] {
        let w = self.width();
        let h = self.height();
        [(self.p as f64 + 0.5) * w, (self.q as f64 + 0.5) * h]
    }
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// `self ⊆ other`, decided in integers.
    pub fn is_within(&self, other: &ApproxSquare) -> bool {
        if self.ell < other.ell || self.k < other.k {
            return false;
        }
        let dx = (self.n as u128).pow((self.ell - other.ell) as u32);
        let dy = (self.m as u128).pow((self.k - other.k) as u32);
        self.p / dx == other.p && self.q / dy == other.q
    }

    /// Whether the interiors intersect. Grid-adic intervals are either nested
    /// or have disjoint interiors, so this is exact.
    pub fn interiors_overlap(&self, other: &ApproxSquare) -> bool {
        let (fx, cx) = if self.ell >= other.ell {
            (self, other)
        } else {
            (other, self)
        };
        let x = fx.p / (fx.n as u128).pow((fx.ell - cx.ell) as u32) == cx.p;
        let (fy, cy) = if self.k >= other.k {
            (self, other)
        } else {
            (other, self)
        };
        let y = fy.q / (fy.m as u128).pow((fy.k - cy.k) as u32) == cy.q;
        x && y
    }
}

/// Square of any word including the root (the unit square).
pub(crate) fn square(spec: &CarpetSpec, w: &Word) -> Result<ApproxSquare> {
    let k = w.order();
    let n = spec.n() as u128;
    let m = spec.m() as u128;
    let overflow = || Error::DepthOverflow { order: k };
    let mut p: u128 = 0;
    for c in &w.a {
        p = p
            .checked_mul(n)
            .and_then(|v| v.checked_add(c.i as u128))
            .ok_or_else(overflow)?;
    }
    let mut q: u128 = 0;
    for j in w.rows() {
        q = q
            .checked_mul(m)
            .and_then(|v| v.checked_add(j as u128))
            .ok_or_else(overflow)?;
    }
    n.checked_pow(w.a.len() as u32).ok_or_else(overflow)?;
    m.checked_pow(k as u32).ok_or_else(overflow)?;
    Ok(ApproxSquare {
        p,
        q,
        ell: w.a.len(),
        k,
        n: spec.n(),
        m: spec.m(),
    })
}

/// The approximate square `F_sigma` of a word of order at least one.
pub fn rect(spec: &CarpetSpec, w: &Word) -> Result<ApproxSquare> {
    if w.is_root() {
        return Err(Error::EmptyWord);
    }
    square(spec, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Equal,
    /// `w1 ≺ w2`: `F_w2 ⊆ F_w1`.
    Precedes,
    /// `w2 ≺ w1`.
    Follows,
    Incomparable,
}

/// Order relation by rectangle containment.
pub fn compare(spec: &CarpetSpec, w1: &Word, w2: &Word) -> Result<Relation> {
    let s1 = square(spec, w1)?;
    let s2 = square(spec, w2)?;
    Ok(match (s2.is_within(&s1), s1.is_within(&s2)) {
        (true, true) => Relation::Equal,
        (true, false) => Relation::Precedes,
        (false, true) => Relation::Follows,
        (false, false) => Relation::Incomparable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

    fn desk1() -> CarpetSpec {
        CarpetSpec::from_json(DESK1).unwrap()
    }

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn ell_desk1() {
        let s = desk1();
        let got: Vec<usize> = (0..=4).map(|k| ell(k, s.theta())).collect();
        assert_eq!(got, vec![0, 0, 1, 1, 2]);
        for k in 1..200 {
            let d = s.ell(k + 1) - s.ell(k);
            assert!(d <= 1);
        }
    }

    #[test]
    fn encoding_round_trip() {
        for text in ["a:|b:", "a:(1,1)|b:0", "a:(0,0)(2,1)|b:1 0 1"] {
            assert_eq!(w(text).to_string(), text);
        }
        assert!("a:(1,1|b:0".parse::<Word>().is_err());
        assert!("(1,1)|b:0".parse::<Word>().is_err());
        assert!("a:(1,1)|b:0  1".parse::<Word>().is_err());
        assert!("a:(x,1)|b:".parse::<Word>().is_err());
    }

    #[test]
    fn root_children_are_rows() {
        let s = desk1();
        let c = children(&s, &Word::root());
        assert_eq!(c, vec![w("a:|b:0"), w("a:|b:1")]);
    }

    #[test]
    fn children_when_ell_increments() {
        let s = desk1();
        let c = children(&s, &w("a:|b:0"));
        assert_eq!(c, vec![w("a:(0,0)|b:0"), w("a:(0,0)|b:1")]);
        let c = children(&s, &w("a:|b:1"));
        assert_eq!(c.len(), 4);
        assert!(c.contains(&w("a:(1,1)|b:0")));
        assert!(c.contains(&w("a:(2,1)|b:1")));
    }

    #[test]
    fn flatten_forms() {
        let s = desk1();
        assert_eq!(flatten(&s, &w("a:(0,0)|b:1")).unwrap(), w("a:|b:0"));
        assert_eq!(flatten(&s, &w("a:(1,1)|b:0 1")).unwrap(), w("a:(1,1)|b:0"));
        assert_eq!(flatten(&s, &w("a:|b:1")).unwrap(), Word::root());
        assert!(matches!(flatten(&s, &Word::root()), Err(Error::EmptyWord)));
    }

    #[test]
    fn flatten_inverts_children_to_order_12() {
        let s = desk1();
        let mut level = vec![Word::root()];
        for _ in 0..12 {
            let mut next = Vec::new();
            for parent in &level {
                for c in children(&s, parent) {
                    assert_eq!(&flatten(&s, &c).unwrap(), parent);
                    assert!(c.is_location_code(&s));
                    next.push(c);
                }
            }
            // keep the tree small: follow a deterministic subset past order 8
            if next.len() > 2000 {
                next.truncate(2000);
            }
            level = next;
        }
    }

    #[test]
    fn measures() {
        let s = desk1();
        assert!((measure(&s, &w("a:(1,1)|b:0")) - 0.12).abs() < 1e-15);
        assert_eq!(measure(&s, &Word::root()), 1.0);
        assert_eq!(weight(&s, 2.0, &Word::root()), 1.0);
    }

    #[test]
    fn mass_conservation() {
        let s = desk1();
        for k in 0..7 {
            for parent in omega(&s, k) {
                let total: f64 = children(&s, &parent).iter().map(|c| measure(&s, c)).sum();
                assert!((total - measure(&s, &parent)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rectangles() {
        let s = desk1();
        let r = rect(&s, &w("a:(1,1)|b:0")).unwrap();
        assert_eq!((r.p, r.q), (1, 2));
        assert_eq!([r.x_lo(), r.x_hi()], [1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!([r.y_lo(), r.y_hi()], [0.5, 0.75]);
        let r = rect(&s, &w("a:|b:0")).unwrap();
        assert_eq!(
            [r.x_lo(), r.x_hi(), r.y_lo(), r.y_hi()],
            [0.0, 1.0, 0.0, 0.5]
        );
        assert!(matches!(rect(&s, &Word::root()), Err(Error::EmptyWord)));
    }

    #[test]
    fn diameters_within_bounds() {
        let s = desk1();
        let bound = ((s.n() * s.n() + 1) as f64).sqrt();
        for k in 1..=8 {
            for word in omega(&s, k) {
                let d = rect(&s, &word).unwrap().diameter();
                let h = 2f64.powi(-(k as i32));
                assert!(d >= h && d <= h * bound * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn children_nest_and_compare() {
        let s = desk1();
        for k in 0..6 {
            for parent in omega(&s, k) {
                for c in children(&s, &parent) {
                    assert_eq!(compare(&s, &parent, &c).unwrap(), Relation::Precedes);
                    assert_eq!(compare(&s, &c, &parent).unwrap(), Relation::Follows);
                }
            }
        }
        assert_eq!(
            compare(&s, &w("a:|b:0"), &w("a:|b:1")).unwrap(),
            Relation::Incomparable
        );
        let x = w("a:(1,1)|b:0");
        assert_eq!(compare(&s, &x, &x).unwrap(), Relation::Equal);
    }

    #[test]
    fn containment_matches_descent() {
        // F_tau ⊆ F_sigma exactly when tau is reached from sigma by children
        let s = desk1();
        let words: Vec<Word> = (1..=5).flat_map(|k| omega(&s, k)).collect();
        for a in &words {
            for b in &words {
                let mut anc = b.clone();
                let mut is_desc = false;
                while anc.order() > a.order() {
                    anc = flatten(&s, &anc).unwrap();
                }
                if &anc == a {
                    is_desc = true;
                }
                let geo = rect(&s, b).unwrap().is_within(&rect(&s, a).unwrap());
                assert_eq!(geo, is_desc, "{a} vs {b}");
                // incomparable implies disjoint interiors
                if compare(&s, a, b).unwrap() == Relation::Incomparable {
                    assert!(!rect(&s, a)
                        .unwrap()
                        .interiors_overlap(&rect(&s, b).unwrap()));
                }
            }
        }
    }

    #[test]
    fn validate_rejects_misaligned() {
        let s = desk1();
        assert!(w("a:(1,1)|b:0").is_location_code(&s));
        assert!(!w("a:|b:0 1").is_location_code(&s));
        assert!(!w("a:(1,0)|b:0").is_location_code(&s));
        assert!(!w("a:(1,1)|b:7").is_location_code(&s));
    }
}
