//! Carpet instances: the grid, digit set and probability vector, plus the
//! index sets and affine maps derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum(p) - 1|` when validating a probability vector.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// A grid cell `(i, j)`: column `i` (x-axis), row `j` (y-axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: u32,
    pub j: u32,
}

impl Cell {
    pub const fn new(i: u32, j: u32) -> Self {
        Cell { i, j }
    }
}

/// A probability as it appears in a config: a JSON number, a decimal string
/// (`"0.25"`) or a ratio (`"1/4"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    Number(f64),
    Text(String),
}

impl Probability {
    pub fn value(&self) -> Result<f64> {
        match self {
            Probability::Number(x) => Ok(*x),
            Probability::Text(s) => parse_probability(s),
        }
    }
}

/// Parse `"0.3"`, `"3e-1"` or `"3/10"`.
pub fn parse_probability(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::BadProbabilities(format!("cannot parse probability {s:?}"));
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// One `[i, j, p]` row of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEntry(pub u32, pub u32, pub Probability);

/// Unvalidated carpet description, exactly as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub m: u32,
    pub n: u32,
    pub entries: Vec<RawEntry>,
}

impl RawSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub cell: Cell,
    pub p: f64,
}

/// `theta = log m / log n`, with an exact floor for `k * theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    value: f64,
    /// `Some((num, den))` when `theta` is rational (m and n are powers of a
    /// common integer). Then `floor(k * theta)` is computed in integers.
    rational: Option<(u64, u64)>,
}

impl Theta {
    pub fn new(m: u32, n: u32) -> Self {
        Theta {
            value: (m as f64).ln() / (n as f64).ln(),
            rational: rational_log_ratio(m, n),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_rational(&self) -> bool {
        self.rational.is_some()
    }

    /// `ell(k) = floor(k * theta)`.
    pub fn ell(&self, k: usize) -> usize {
        match self.rational {
            Some((num, den)) => ((k as u64 * num) / den) as usize,
            // theta is irrational, so k * theta is never an integer for k >= 1
            None => (k as f64 * self.value).floor() as usize,
        }
    }
}

fn factorize(mut x: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= x as u64 {
        if x.is_multiple_of(d) {
            let mut e = 0;
            while x.is_multiple_of(d) {
                x /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 1;
    }
    if x > 1 {
        out.push((x, 1));
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// If `log m / log n = a/b` exactly, return the reduced `(a, b)`.
fn rational_log_ratio(m: u32, n: u32) -> Option<(u64, u64)> {
    let fm = factorize(m);
    let fn_ = factorize(n);
    if fm.len() != fn_.len() || fm.is_empty() {
        return None;
    }
    let mut ratio: Option<(u64, u64)> = None;
    for (&(pm, em), &(pn, en)) in fm.iter().zip(&fn_) {
        if pm != pn {
            return None;
        }
        let g = gcd(em as u64, en as u64);
        let r = (em as u64 / g, en as u64 / g);
        match ratio {
            None => ratio = Some(r),
            Some(prev) if prev != r => return None,
            _ => {}
        }
    }
    ratio
}

/// Index sets derived from the digit set.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    pub g_x: BTreeSet<u32>,
    pub g_y: BTreeSet<u32>,
    /// Row `j` to the columns occupying it.
    pub g_xj: BTreeMap<u32, Vec<u32>>,
    /// Row marginals `q_j`.
    pub q: BTreeMap<u32, f64>,
    pub theta: f64,
    pub uniform_fibres: bool,
}

/// A validated carpet instance. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CarpetSpec {
    m: u32,
    n: u32,
    /// Sorted by `(j, i)`.
    entries: Vec<Entry>,
    ln_p: Vec<f64>,
    rows: Vec<u32>,
    q: Vec<f64>,
    ln_q: Vec<f64>,
    /// `row_ranges[r]` is the slice of `entries` lying in row `rows[r]`.
    row_ranges: Vec<(usize, usize)>,
    theta: Theta,
    indices: IndexSets,
}

/// Check every hypothesis on a raw description and build the instance.
pub fn validate_spec(raw: &RawSpec) -> Result<CarpetSpec> {
    let (m, n) = (raw.m, raw.n);
    if m < 2 || m >= n {
        return Err(Error::DegenerateGrid { m, n });
    }
    let mut entries = Vec::with_capacity(raw.entries.len());
    let mut seen = BTreeSet::new();
    for RawEntry(i, j, p) in &raw.entries {
        let (i, j) = (*i, *j);
        if i >= n || j >= m {
            return Err(Error::CellOutOfGrid { i, j, n, m });
        }
        if !seen.insert((j, i)) {
            return Err(Error::DuplicateCell { i, j });
        }
        entries.push((Cell::new(i, j), p));
    }
    if entries.len() < 2 {
        return Err(Error::ThinDigitSet(format!(
            "card(G) = {} < 2",
            entries.len()
        )));
    }
    let g_x: BTreeSet<u32> = entries.iter().map(|(c, _)| c.i).collect();
    let g_y: BTreeSet<u32> = entries.iter().map(|(c, _)| c.j).collect();
    if g_x.len() < 2 {
        return Err(Error::ThinDigitSet(format!(
            "card(G_x) = {} < 2",
            g_x.len()
        )));
    }
    if g_y.len() < 2 {
        return Err(Error::ThinDigitSet(format!(
            "card(G_y) = {} < 2",
            g_y.len()
        )));
    }

    let mut parsed = Vec::with_capacity(entries.len());
    for (cell, p) in entries {
        let p = p.value()?;
        if p.is_nan() || p <= 0.0 || !p.is_finite() {
            return Err(Error::BadProbabilities(format!(
                "p({},{}) = {p} is not positive",
                cell.i, cell.j
            )));
        }
        parsed.push(Entry { cell, p });
    }
    let total = crate::numeric::kahan_sum(parsed.iter().map(|e| e.p));
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::BadProbabilities(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    parsed.sort_by_key(|e| (e.cell.j, e.cell.i));
    Ok(CarpetSpec::from_sorted(m, n, parsed))
}

impl CarpetSpec {
    fn from_sorted(m: u32, n: u32, entries: Vec<Entry>) -> Self {
        let mut rows = Vec::new();
        let mut row_ranges = Vec::new();
        let mut q = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let j = entries[start].cell.j;
            let end = start
                + entries[start..]
                    .iter()
                    .take_while(|e| e.cell.j == j)
                    .count();
            rows.push(j);
            row_ranges.push((start, end));
            q.push(crate::numeric::kahan_sum(
                entries[start..end].iter().map(|e| e.p),
            ));
            start = end;
        }
        let ln_p = entries.iter().map(|e| e.p.ln()).collect();
        let ln_q = q.iter().map(|x| x.ln()).collect();
        let mut spec = CarpetSpec {
            m,
            n,
            entries,
            ln_p,
            rows,
            q,
            ln_q,
            row_ranges,
            theta: Theta::new(m, n),
            indices: IndexSets {
                g_x: BTreeSet::new(),
                g_y: BTreeSet::new(),
                g_xj: BTreeMap::new(),
                q: BTreeMap::new(),
                theta: 0.0,
                uniform_fibres: false,
            },
        };
        spec.indices = derive_indices(&spec);
        spec
    }

    pub fn from_json(text: &str) -> Result<Self> {
        validate_spec(&RawSpec::from_json(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The raw form of this spec (probabilities as numbers).
    pub fn to_raw(&self) -> RawSpec {
        RawSpec {
            m: self.m,
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|e| RawEntry(e.cell.i, e.cell.j, Probability::Number(e.p)))
                .collect(),
        }
    }

    /// Rows of the grid (y-axis).
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Columns of the grid (x-axis).
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn ell(&self, k: usize) -> usize {
        self.theta.ell(k)
    }

    pub fn indices(&self) -> &IndexSets {
        &self.indices
    }

    /// `G_y` in increasing order.
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn entry_index(&self, cell: Cell) -> Option<usize> {
        self.entries
            .binary_search_by_key(&(cell.j, cell.i), |e| (e.cell.j, e.cell.i))
            .ok()
    }

    pub fn row_index(&self, j: u32) -> Option<usize> {
        self.rows.binary_search(&j).ok()
    }

    pub fn p(&self, cell: Cell) -> Option<f64> {
        self.entry_index(cell).map(|k| self.entries[k].p)
    }

    pub fn q(&self, j: u32) -> Option<f64> {
        self.row_index(j).map(|r| self.q[r])
    }

    pub fn ln_p_at(&self, entry: usize) -> f64 {
        self.ln_p[entry]
    }

    pub fn q_at(&self, row: usize) -> f64 {
        self.q[row]
    }

    pub fn ln_q_at(&self, row: usize) -> f64 {
        self.ln_q[row]
    }

    pub fn row_marginals(&self) -> &[f64] {
        &self.q
    }

    /// Entries of row index `row` (all cells `(i, rows[row])`).
    pub fn row_entries(&self, row: usize) -> &[Entry] {
        let (a, b) = self.row_ranges[row];
        &self.entries[a..b]
    }

    /// Entry indices of row index `row`.
    pub fn row_entry_range(&self, row: usize) -> std::ops::Range<usize> {
        let (a, b) = self.row_ranges[row];
        a..b
    }

    pub fn q_max(&self) -> f64 {
        self.q.iter().copied().fold(f64::MIN, f64::max)
    }

    /// The affine map `f_ij(x, y) = ((x + i) / n, (y + j) / m)`.
    pub fn apply_map(&self, cell: Cell, point: [f64; 2]) -> Result<[f64; 2]> {
        if self.entry_index(cell).is_none() {
            return Err(Error::CellNotInG {
                i: cell.i,
                j: cell.j,
            });
        }
        Ok(self.map_unchecked(cell, point))
    }

    #[inline]
    pub(crate) fn map_unchecked(&self, cell: Cell, [x, y]: [f64; 2]) -> [f64; 2] {
        (
            (x + cell.i as f64) / self.n as f64,
            (y + cell.j as f64) / self.m as f64,
        )
            .into()
    }
}

/// Compute `G_x`, `G_y`, the fibres `G_{x,j}`, marginals `q_j`, theta and the
/// uniform-fibre flag.
pub fn derive_indices(spec: &CarpetSpec) -> IndexSets {
    let g_x = spec.entries.iter().map(|e| e.cell.i).collect();
    let g_y = spec.rows.iter().copied().collect();
    let mut g_xj = BTreeMap::new();
    let mut q = BTreeMap::new();
    for (r, &j) in spec.rows.iter().enumerate() {
        g_xj.insert(
            j,
            spec.row_entries(r)
                .iter()
                .map(|e| e.cell.i)
                .collect::<Vec<_>>(),
        );
        q.insert(j, spec.q[r]);
    }
    let first = spec.row_entries(0).len();
    let uniform_fibres = (0..spec.rows.len()).all(|r| spec.row_entries(r).len() == first);
    IndexSets {
        g_x,
        g_y,
        g_xj,
        q,
        theta: spec.theta.value(),
        uniform_fibres,
    }
}
