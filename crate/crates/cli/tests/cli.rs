use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const DESK1: &str = r#"{"m":2,"n":3,"entries":[[0,0,0.4],[1,1,0.3],[2,1,0.3]]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carpet-quant"))
}

fn carpet(dir: &Path, body: &str) -> String {
    let p = dir.join("carpet.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["validate", "--config", &carpet(dir.path(), DESK1)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("ok: m=2 n=3"));

    let bad = run(&[
        "validate",
        "--config",
        &carpet(
            dir.path(),
            r#"{"m":3,"n":3,"entries":[[0,0,0.5],[1,1,0.5]]}"#,
        ),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let sum = run(&[
        "validate",
        "--config",
        &carpet(
            dir.path(),
            r#"{"m":2,"n":3,"entries":[[0,0,0.5],[1,1,0.6]]}"#,
        ),
    ]);
    assert_eq!(sum.status.code(), Some(2));
}

#[test]
fn dimension_has_one_row_per_r() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "dimension",
        "--config",
        &carpet(dir.path(), DESK1),
        "--r",
        "0.5,1,2,3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rows.records().count(), 4);
}

#[test]
fn antichain_columns_and_first_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "antichain",
        "--config",
        &carpet(dir.path(), DESK1),
        "--j",
        "0..=3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "j,psi,k1,k2,sumE,H1_bound_ok,lemma31_max_ratio,lemma41_max_ratio,phi,s12_ok"
    );
    assert!(lines.next().unwrap().starts_with("0,2,1,1,"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn certify_reports_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "certify",
        "--config",
        &carpet(dir.path(), DESK1),
        "--j",
        "0..=6",
        "--cap",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.contains(",cap,")));
}

#[test]
fn quantize_and_proxy_small() {
    let dir = tempfile::tempdir().unwrap();
    let c = carpet(dir.path(), DESK1);
    let q = run(&[
        "quantize",
        "--config",
        &c,
        "--k",
        "1,2,4",
        "--samples",
        "3000",
        "--seed",
        "5",
    ]);
    assert_eq!(q.status.code(), Some(0));
    let text = stdout(&q);
    assert!(text.starts_with("k,e_k_r,distortion,iters,restarts_used"));
    assert_eq!(text.lines().count(), 4);
    let too_big = run(&["quantize", "--config", &c, "--k", "10", "--samples", "5"]);
    assert_eq!(too_big.status.code(), Some(2));

    let p = run(&["proxy", "--config", &c, "--j", "2,3", "--samples", "3000"]);
    assert_eq!(p.status.code(), Some(0));
    assert!(stdout(&p).starts_with("j,psi,proxy,antichain_distortion"));
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let c = carpet(dir.path(), DESK1);
    let outs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for (k, out) in outs.iter().enumerate() {
        let threads = if k == 0 { "1" } else { "2" };
        let o = bin()
            .env("CARPET_QUANT_THREADS", threads)
            .args(["run", "--config", &c, "--out", out.to_str().unwrap()])
            .args([
                "--j",
                "0..=4",
                "--k",
                "1,2,4,8",
                "--samples",
                "5000",
                "--seed",
                "9",
            ])
            .output()
            .unwrap();
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in [
        "dimension",
        "antichain",
        "certificates",
        "quantize",
        "summary",
    ] {
        let a = fs::read(outs[0].join(format!("{name}.csv"))).unwrap();
        let b = fs::read(outs[1].join(format!("{name}.csv"))).unwrap();
        assert_eq!(a, b, "{name}.csv differs");
    }
}

#[test]
fn run_rejects_bad_config_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let c = carpet(
        dir.path(),
        r#"{"m":3,"n":3,"entries":[[0,0,0.5],[1,1,0.5]]}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("CARPET_QUANT_THREADS", "zero")
        .args(["validate", "--config", &carpet(dir.path(), DESK1)])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
