//! End-to-end runs and their CSV tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::antichain::{build_upsilon, growth_constants, DEFAULT_CAP};
use crate::carpet::CarpetSpec;
use crate::certify::{certify, CertificateReport, CertifyOptions};
use crate::error::{Error, Result};
use crate::numeric::fmt_f64;
use crate::quantizer::{
    antichain_codebook, band_ratio, distortion_stats, lloyd_best, loglog_slope, sample,
    theoretical_proxy, LloydParams, SamplePool, DEFAULT_BURN_IN, DEFAULT_RESTARTS,
};
use crate::spectral::{constants, lhs, SpectralConstants};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Path of the carpet JSON.
    pub carpet: PathBuf,
    pub r_values: Vec<f64>,
    /// Inclusive range of threshold indices.
    pub j_range: (usize, usize),
    pub k_grid: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub cap: usize,
    pub output_dir: PathBuf,
    pub burn_in: usize,
    pub restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            carpet: PathBuf::from("configs/desk1.json"),
            r_values: vec![2.0],
            j_range: (0, 8),
            k_grid: vec![1, 2, 4, 8, 16, 32, 64],
            samples: 200_000,
            seed: 1,
            cap: DEFAULT_CAP,
            output_dir: PathBuf::from("out"),
            burn_in: DEFAULT_BURN_IN,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn js(&self) -> Vec<usize> {
        (self.j_range.0..=self.j_range.1).collect()
    }

    /// Check every field and load the carpet; nothing is computed.
    pub fn validate(&self) -> Result<CarpetSpec> {
        let spec = CarpetSpec::from_path(&self.carpet)?;
        validate_r_values(&self.r_values)?;
        if self.j_range.0 > self.j_range.1 {
            return Err(Error::Config(format!("empty j range {:?}", self.j_range)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if let Some(k) = self.k_grid.iter().find(|&&k| k == 0 || k > self.samples) {
            return Err(Error::Config(format!("k={k} outside 1..={}", self.samples)));
        }
        let mut distinct = self.k_grid.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::Config(
                "k grid needs at least two distinct sizes".into(),
            ));
        }
        if self.burn_in < 32 {
            return Err(Error::Config(format!("burn-in {} below 32", self.burn_in)));
        }
        if self.restarts == 0 || self.cap == 0 {
            return Err(Error::Config("restarts and cap must be positive".into()));
        }
        Ok(spec)
    }
}

pub fn validate_r_values(rs: &[f64]) -> Result<()> {
    if rs.is_empty() {
        return Err(Error::Config("no r values".into()));
    }
    if let Some(r) = rs.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Config(format!(
            "r must be positive and finite, got {r}"
        )));
    }
    Ok(())
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let c = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[c].as_str()).collect())
    }
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn dimension_table(spec: &CarpetSpec, consts: &[SpectralConstants]) -> Table {
    let mut t = Table::new(&[
        "r",
        "s_r",
        "t_r",
        "lhs_residual",
        "P",
        "Q",
        "eta_lo",
        "eta_hi",
        "H1",
        "xi",
        "H2",
        "M",
        "H3",
        "H4",
        "H5",
        "H6",
        "H7",
    ]);
    for c in consts {
        let (h6, h7) = growth_constants(c);
        t.rows.push(vec![
            f(c.r),
            f(c.s_r),
            f(c.t_r),
            f(lhs(spec, c.r, c.s_r) - 1.0),
            f(c.p_r),
            f(c.q_r),
            f(c.eta_lo),
            f(c.eta_hi),
            c.h1.to_string(),
            f(c.xi),
            f(c.h2),
            c.m_r.to_string(),
            f(c.h3),
            f(c.h4),
            f(c.h5),
            h6.to_string(),
            f(h7),
        ]);
    }
    t
}

const ANTICHAIN_COLUMNS: [&str; 10] = [
    "j",
    "psi",
    "k1",
    "k2",
    "sumE",
    "H1_bound_ok",
    "lemma31_max_ratio",
    "lemma41_max_ratio",
    "phi",
    "s12_ok",
];

fn antichain_row(rec: &crate::certify::JRecord) -> Vec<String> {
    let ok = |name| rec.check(name).map(|c| c.pass);
    let s12 = match (ok("maximal_count_lower"), ok("maximal_count_upper")) {
        (Some(a), Some(b)) => Some(a && b),
        _ => None,
    };
    vec![
        rec.j.to_string(),
        rec.psi.to_string(),
        rec.k1.to_string(),
        rec.k2.to_string(),
        f(rec.sum_e),
        opt(ok("energy_sum")),
        f(rec.lemma31_max_ratio),
        f(rec.lemma41_max_ratio),
        opt(rec.phi),
        opt(s12),
    ]
}

/// One row per certified `j`.
pub fn antichain_table(report: &CertificateReport) -> Table {
    let mut t = Table::new(&ANTICHAIN_COLUMNS);
    t.rows.extend(report.records.iter().map(antichain_row));
    t
}

/// Every check of every report, growth checks with an empty `j`, and a
/// `cap` row for a truncated report.
pub fn certificates_table(reports: &[CertificateReport], cap: usize) -> Table {
    let mut t = Table::new(&[
        "r", "j", "check", "value", "cmp", "bound", "pass", "witness",
    ]);
    for rep in reports {
        let per_j = rep
            .records
            .iter()
            .flat_map(|rec| rec.checks.iter().map(move |c| (Some(rec.j), c)));
        for (j, c) in per_j.chain(rep.growth.iter().map(|c| (None, c))) {
            t.rows.push(vec![
                f(rep.r),
                opt(j),
                c.name.to_string(),
                f(c.value),
                c.cmp.to_string(),
                f(c.bound),
                c.pass.to_string(),
                c.witness.clone().unwrap_or_default(),
            ]);
        }
        if let Some((j, found)) = rep.truncated_at {
            t.rows.push(vec![
                f(rep.r),
                j.to_string(),
                "cap".into(),
                found.to_string(),
                "<=".into(),
                cap.to_string(),
                "false".into(),
                String::new(),
            ]);
        }
    }
    t
}

/// `e_{k,r}^r` estimates: best of `restarts` Lloyd runs per `k`.
pub fn quantize_table(
    pool: &SamplePool,
    r: f64,
    ks: &[usize],
    seed: u64,
    restarts: usize,
) -> Result<(Table, Vec<(usize, f64)>)> {
    let mut t = Table::new(&["k", "e_k_r", "distortion", "iters", "restarts_used"]);
    let mut points = Vec::new();
    for &k in ks {
        let res = lloyd_best(
            pool,
            k,
            r,
            seed ^ k as u64,
            restarts,
            &LloydParams::default(),
        )?;
        t.rows.push(vec![
            k.to_string(),
            f(res.distortion.powf(1.0 / r)),
            f(res.distortion),
            res.iters.to_string(),
            res.restarts_used.to_string(),
        ]);
        points.push((k, res.distortion));
    }
    Ok((t, points))
}

/// Antichain codebook distortion against the weight sum, per `j`.
pub fn proxy_table(
    spec: &CarpetSpec,
    consts: &SpectralConstants,
    js: &[usize],
    cap: usize,
    pool: &SamplePool,
) -> Result<Table> {
    let mut t = Table::new(&[
        "j",
        "psi",
        "proxy",
        "antichain_distortion",
        "stderr",
        "ratio",
    ]);
    for &j in js {
        let u = build_upsilon(spec, consts, j, cap)?;
        let cb = antichain_codebook(spec, &u)?;
        let d = distortion_stats(pool, &cb, consts.r);
        let p = theoretical_proxy(&u);
        t.rows.push(vec![
            j.to_string(),
            u.len().to_string(),
            f(p),
            f(d.mean),
            f(d.stderr),
            f(d.mean / p),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub r: f64,
    pub s_r: f64,
    pub slope: f64,
    /// `|slope + 1/s_r| s_r`: deviation relative to the predicted slope.
    pub slope_err: f64,
    pub band_ratio: f64,
    pub all_certificates_pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Vec<SummaryRow>,
    pub reports: Vec<CertificateReport>,
    pub exit_code: i32,
}

fn with_r(r: f64, mut t: Table) -> Table {
    t.header.insert(0, "r");
    for row in &mut t.rows {
        row.insert(0, f(r));
    }
    t
}

fn append(into: &mut Table, t: Table) {
    if into.header.is_empty() {
        into.header = t.header;
    }
    into.rows.extend(t.rows);
}

/// Validate, then run every stage in order, writing each CSV as soon as
/// its stage completes.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let spec = config.validate().map_err(Error::at("validate"))?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::at("output")(e.into()))?;
    let js = config.js();

    let consts = config
        .r_values
        .iter()
        .map(|&r| constants(&spec, r))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at("dimension"))?;
    dimension_table(&spec, &consts)
        .write_file(out.join("dimension.csv"))
        .map_err(Error::at("dimension"))?;

    let pool = sample(&spec, config.samples, config.seed, config.burn_in);
    let opts = CertifyOptions {
        cap: config.cap,
        ..Default::default()
    };
    let mut reports = Vec::new();
    let mut antichain = Table::default();
    for c in &consts {
        let rep = certify(&spec, c, &js, &opts);
        let done: Vec<usize> = rep.records.iter().map(|r| r.j).collect();
        let proxy =
            proxy_table(&spec, c, &done, config.cap, &pool).map_err(Error::at("antichain"))?;
        let mut t = antichain_table(&rep);
        for (row, p) in t.rows.iter_mut().zip(proxy.rows) {
            row.extend(p.into_iter().skip(2));
        }
        t.header.extend([
            "proxy",
            "antichain_distortion",
            "antichain_stderr",
            "distortion_ratio",
        ]);
        append(&mut antichain, with_r(c.r, t));
        reports.push(rep);
    }
    antichain
        .write_file(out.join("antichain.csv"))
        .map_err(Error::at("antichain"))?;
    certificates_table(&reports, config.cap)
        .write_file(out.join("certificates.csv"))
        .map_err(Error::at("certify"))?;

    let mut quantize = Table::default();
    let mut summary = Vec::new();
    for (c, rep) in consts.iter().zip(&reports) {
        let (t, points) = quantize_table(&pool, c.r, &config.k_grid, config.seed, config.restarts)
            .map_err(Error::at("quantize"))?;
        append(&mut quantize, with_r(c.r, t));
        let ks: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
        let es: Vec<f64> = points.iter().map(|p| p.1.powf(1.0 / c.r)).collect();
        let slope = loglog_slope(&ks, &es);
        summary.push(SummaryRow {
            r: c.r,
            s_r: c.s_r,
            slope,
            slope_err: (slope + 1.0 / c.s_r).abs() * c.s_r,
            band_ratio: band_ratio(&points, c.r, c.s_r),
            all_certificates_pass: rep.is_valid(),
        });
    }
    quantize
        .write_file(out.join("quantize.csv"))
        .map_err(Error::at("quantize"))?;

    let mut t = Table::new(&[
        "r",
        "s_r",
        "slope",
        "slope_err",
        "band_ratio",
        "all_certificates_pass",
    ]);
    for s in &summary {
        t.rows.push(vec![
            f(s.r),
            f(s.s_r),
            f(s.slope),
            f(s.slope_err),
            f(s.band_ratio),
            s.all_certificates_pass.to_string(),
        ]);
    }
    t.write_file(out.join("summary.csv"))
        .map_err(Error::at("summary"))?;

    let exit_code = if reports.iter().any(|r| !r.is_valid()) {
        1
    } else if reports.iter().any(|r| r.truncated_at.is_some()) {
        3
    } else {
        0
    };
    Ok(RunOutcome {
        summary,
        reports,
        exit_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

    fn small(dir: &Path) -> RunConfig {
        let carpet = dir.join("desk1.json");
        fs::write(&carpet, DESK1).unwrap();
        RunConfig {
            carpet,
            j_range: (0, 4),
            k_grid: vec![1, 2, 4],
            samples: 4000,
            output_dir: dir.join("out"),
            ..Default::default()
        }
    }

    #[test]
    fn small_run_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let outcome = run(&cfg).unwrap();
        assert_eq!(outcome.exit_code, 0);
        for name in [
            "dimension",
            "antichain",
            "certificates",
            "quantize",
            "summary",
        ] {
            assert!(
                cfg.output_dir.join(format!("{name}.csv")).exists(),
                "{name}"
            );
        }
        assert_eq!(outcome.summary.len(), 1);
    }

    #[test]
    fn invalid_config_fails_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        fs::write(
            &cfg.carpet,
            r#"{"m":3,"n":3,"entries":[[0,0,0.5],[1,1,0.5]]}"#,
        )
        .unwrap();
        let e = run(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(!cfg.output_dir.exists());
        cfg.carpet = dir.path().join("missing.json");
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn cap_maps_to_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.cap = 50;
        let outcome = run(&cfg).unwrap();
        assert_eq!(outcome.exit_code, 3);
        let text = fs::read_to_string(cfg.output_dir.join("certificates.csv")).unwrap();
        assert!(text.lines().any(|l| l.contains(",cap,")));
    }
}
