mod lists;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use carpet_quant::antichain::DEFAULT_CAP;
use carpet_quant::certify::{certify, CertificateReport, CertifyOptions};
use carpet_quant::experiment::{
    antichain_table, certificates_table, dimension_table, proxy_table, quantize_table, run,
    validate_r_values, RunConfig,
};
use carpet_quant::quantizer::{sample, DEFAULT_BURN_IN, DEFAULT_RESTARTS};
use carpet_quant::{constants, CarpetSpec, Error, Result};
use clap::{Args, Parser, Subcommand};

use lists::{floats, ints, Floats, Ints};

#[derive(Parser)]
#[command(
    name = "carpet-quant",
    version,
    about = "Quantization of self-affine measures on Bedford-McMullen carpets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a carpet config and print its index sets
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Quantization dimension and constants per r
    Dimension {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "2", value_parser = floats)]
        r: Floats,
    },
    /// Threshold antichain statistics per j
    Antichain(CertArgs),
    /// Every certificate check per j
    Certify(CertArgs),
    /// Lloyd codebooks on a sample of the measure
    Quantize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value = "1,2,4,8,16,32,64", value_parser = ints)]
        k: Ints,
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
    },
    /// Antichain codebook distortion against the weight sum
    Proxy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value = "2..=6", value_parser = ints)]
        j: Ints,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Full pipeline writing five CSV files
    Run {
        /// Carpet config (overrides the run config's path)
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON run config; flags below override its fields
        #[arg(long)]
        run_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = floats)]
        r: Option<Floats>,
        #[arg(long, value_parser = ints)]
        j: Option<Ints>,
        #[arg(long, value_parser = ints)]
        k: Option<Ints>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cap: Option<usize>,
    },
}

#[derive(Args)]
struct CertArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value = "0..=8", value_parser = ints)]
    j: Ints,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
}

fn load(config: &PathBuf, r: &[f64]) -> Result<CarpetSpec> {
    let spec = CarpetSpec::from_path(config)?;
    validate_r_values(r)?;
    Ok(spec)
}

fn check_pool(p: &PoolArgs) -> Result<()> {
    if p.samples == 0 || p.burn_in < 32 {
        return Err(Error::Config("need samples >= 1 and burn-in >= 32".into()));
    }
    Ok(())
}

fn report_code(rep: &CertificateReport) -> i32 {
    if !rep.is_valid() {
        eprintln!("certificate failure: {}", rep.summary_line());
        1
    } else if let Some((j, found)) = rep.truncated_at {
        eprintln!("cap exceeded at j={j} (found at least {found})");
        3
    } else {
        0
    }
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn execute(cmd: Cmd) -> Result<i32> {
    let stdout = io::stdout().lock();
    match cmd {
        Cmd::Validate { config } => {
            let spec = CarpetSpec::from_path(&config)?;
            let ix = spec.indices();
            let mut out = stdout;
            writeln!(
                out,
                "ok: m={} n={} cells={} theta={}",
                spec.m(),
                spec.n(),
                spec.entries().len(),
                ix.theta
            )?;
            writeln!(
                out,
                "G_x={:?} G_y={:?} uniform_fibres={}",
                ix.g_x, ix.g_y, ix.uniform_fibres
            )?;
            Ok(0)
        }
        Cmd::Dimension {
            config,
            r: Floats(r),
        } => {
            let spec = load(&config, &r)?;
            let consts = r
                .iter()
                .map(|&r| constants(&spec, r))
                .collect::<Result<Vec<_>>>()?;
            dimension_table(&spec, &consts).write_to(stdout)?;
            Ok(0)
        }
        Cmd::Antichain(a) => {
            let (rep, _) = certify_args(&a)?;
            antichain_table(&rep).write_to(stdout)?;
            Ok(report_code(&rep))
        }
        Cmd::Certify(a) => {
            let (rep, cap) = certify_args(&a)?;
            certificates_table(std::slice::from_ref(&rep), cap).write_to(stdout)?;
            Ok(report_code(&rep))
        }
        Cmd::Quantize {
            config,
            r,
            k: Ints(k),
            pool,
            restarts,
        } => {
            let spec = load(&config, &[r])?;
            check_pool(&pool)?;
            if let Some(bad) = k.iter().find(|&&k| k == 0 || k > pool.samples) {
                return Err(Error::Config(format!(
                    "k={bad} outside 1..={}",
                    pool.samples
                )));
            }
            let p = sample(&spec, pool.samples, pool.seed, pool.burn_in);
            let (t, _) = quantize_table(&p, r, &k, pool.seed, restarts.max(1))?;
            t.write_to(stdout)?;
            Ok(0)
        }
        Cmd::Proxy {
            config,
            r,
            j: Ints(j),
            cap,
            pool,
        } => {
            let spec = load(&config, &[r])?;
            check_pool(&pool)?;
            let consts = constants(&spec, r)?;
            let p = sample(&spec, pool.samples, pool.seed, pool.burn_in);
            proxy_table(&spec, &consts, &sorted_unique(j), cap, &p)?.write_to(stdout)?;
            Ok(0)
        }
        Cmd::Run {
            config,
            run_config,
            out,
            r,
            j,
            k,
            samples,
            seed,
            cap,
        } => {
            let mut cfg = match run_config {
                Some(p) => RunConfig::from_path(p)?,
                None => RunConfig::default(),
            };
            if let Some(c) = config {
                cfg.carpet = c;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(Floats(r)) = r {
                cfg.r_values = r;
            }
            if let Some(Ints(j)) = j {
                let j = sorted_unique(j);
                let (lo, hi) = (j[0], j[j.len() - 1]);
                if hi - lo + 1 != j.len() {
                    return Err(Error::Config("run needs a contiguous j range".into()));
                }
                cfg.j_range = (lo, hi);
            }
            if let Some(Ints(k)) = k {
                cfg.k_grid = k;
            }
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = cap {
                cfg.cap = c;
            }
            let outcome = run(&cfg)?;
            let mut out = stdout;
            for s in &outcome.summary {
                writeln!(
                    out,
                    "r={} s_r={:.12} slope={:.6} slope_err={:.4} band_ratio={:.4} certificates={}",
                    s.r,
                    s.s_r,
                    s.slope,
                    s.slope_err,
                    s.band_ratio,
                    if s.all_certificates_pass {
                        "pass"
                    } else {
                        "FAIL"
                    }
                )?;
            }
            for rep in &outcome.reports {
                report_code(rep);
            }
            Ok(outcome.exit_code)
        }
    }
}

fn certify_args(a: &CertArgs) -> Result<(CertificateReport, usize)> {
    let spec = load(&a.config, &[a.r])?;
    let consts = constants(&spec, a.r)?;
    let opts = CertifyOptions {
        cap: a.cap,
        ..Default::default()
    };
    Ok((
        certify(&spec, &consts, &sorted_unique(a.j.0.clone()), &opts),
        a.cap,
    ))
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CARPET_QUANT_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!(
                "CARPET_QUANT_THREADS={v} is not a positive integer"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = init_threads().and_then(|_| execute(cli.cmd));
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
