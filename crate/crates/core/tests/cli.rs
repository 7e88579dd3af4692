use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "grid.N = 32\ngrid.L = 10\nrun.horizon = 0.01\nrun.snapshot_every = 5\n";

fn fpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_small(dir: &Path, extra: &str) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, format!("{SMALL}{extra}")).unwrap();
    let out = dir.join("out");
    fpm(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "1",
    ])
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn zero_preset_run_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_small(tmp.path(), "initial.u.preset = \"zero\"\ninitial.p.preset = \"zero\"\n");
    assert!(o.status.success(), "{}{}", text(&o.stdout), text(&o.stderr));
    let out = tmp.path().join("out");
    for f in [
        "config.resolved",
        "series.csv",
        "terms.csv",
        "report.toml",
        "summary.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("PARTIAL").exists());
    let report: toml::Table = std::fs::read_to_string(out.join("report.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(report["passed"].as_bool(), Some(true));
}

#[test]
fn bump_run_then_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_small(tmp.path(), "");
    assert!(o.status.success(), "{}{}", text(&o.stdout), text(&o.stderr));
    let out = tmp.path().join("out");
    let v = fpm(&["validate", out.to_str().unwrap()]);
    assert!(v.status.success(), "{}{}", text(&v.stdout), text(&v.stderr));
    assert!(text(&v.stdout).contains("check_energy_budget PASS"));
    assert!(out.join("validate.toml").exists());
}

#[test]
fn validate_flags_tampered_energy() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_small(tmp.path(), "").status.success());
    let out = tmp.path().join("out");
    let series = out.join("series.csv");
    let mut rdr = csv::Reader::from_path(&series).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "energy").unwrap();
    let mut rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let raised: f64 = rows[4][col].parse::<f64>().unwrap() * 1.01;
    rows[4] = rows[4]
        .iter()
        .enumerate()
        .map(|(i, f)| if i == col { raised.to_string() } else { f.to_string() })
        .collect();
    let mut w = csv::Writer::from_path(&series).unwrap();
    w.write_record(&headers).unwrap();
    for r in &rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();

    let v = fpm(&["validate", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(
        text(&v.stdout).contains("check_energy_budget FAIL"),
        "{}",
        text(&v.stdout)
    );
    assert!(text(&v.stderr).contains("check_energy_budget"));
}

#[test]
fn plotdata_energy_is_nonincreasing() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_small(tmp.path(), "").status.success());
    let out = tmp.path().join("out");
    let csv_path = tmp.path().join("energy.csv");
    let o = fpm(&[
        "plotdata",
        out.to_str().unwrap(),
        "energy",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let energy: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(energy.len(), 11);
    assert!(energy.windows(2).all(|w| w[1] <= w[0]), "{energy:?}");

    let r = fpm(&["plotdata", out.to_str().unwrap(), "radial"]);
    assert!(r.status.success());
    assert!(text(&r.stdout).starts_with("r,u,p"));
}

#[test]
fn bad_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_small(tmp.path(), "scheme.bta = 2\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("scheme.bta"), "{}", text(&o.stderr));
}

#[test]
fn validate_missing_dir_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fpm(&["validate", tmp.path().join("nope").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
