use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fluxscale_cli::store::Store;
use fluxscale_cli::{run_from, CliError, EXIT_INSUFFICIENT, EXIT_SCHEMA, EXIT_THRESHOLD};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxscale"))
        .args(args)
        .env("FLUXSCALE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth then ingest; returns (raw dir, store dir).
fn synth_store(root: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let raw = root.join("raw");
    let store = root.join("store");
    let mut args = vec!["fluxscale", "synth", "--seed", "5", "--out", p(&raw)];
    args.extend_from_slice(extra);
    run_from(args).unwrap();
    ingest(&raw, &store).unwrap();
    (raw, store)
}

fn ingest(raw: &Path, store: &Path) -> Result<(), CliError> {
    run_from([
        "fluxscale",
        "ingest",
        "--bars",
        p(&raw.join("bars")),
        "--calendar",
        p(&raw.join("calendar.csv")),
        "--meta",
        p(&raw.join("meta.csv")),
        "--out",
        p(store),
    ])
}

const CALENDAR: &str = "date,open1,close1,open2,close2\n2011-01-04,09:30,11:30,13:00,15:00\n";

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn ingest_round_trip_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = synth_store(dir.path(), &["--family", "bar-level", "--instruments", "12", "--samples", "480"]);
    let s = Store::open(&store).unwrap();
    assert_eq!(s.manifest.instruments.len(), 12);
    assert!(s.manifest.instruments.iter().all(|e| e.rows == 2 * 241 && e.market.is_some()));
    assert_eq!(s.manifest.ingest.rows_rejected, 0);
    assert_eq!(s.meta.len(), 12);
}

#[test]
fn corrupt_header_is_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cal = write(dir.path(), "cal.csv", CALENDAR);
    let bars = write(dir.path(), "bars.csv", "code,day,minute,close,volume\n600000,2011-01-04,09:31,10,100\n");
    let out = bin(&["ingest", "--bars", p(&bars), "--calendar", p(&cal), "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(EXIT_SCHEMA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema error"));
}

#[test]
fn malformed_rows_over_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cal = write(dir.path(), "cal.csv", CALENDAR);
    let mut body = String::from("instrument_id,date,minute,close,dollar_volume\n");
    for m in 0..100 {
        let minute = format!("{:02}:{:02}", 9 + (31 + m) / 60, (31 + m) % 60);
        if m % 100 < 15 {
            body.push_str(&format!("600000,2011-01-04,{minute},abc,100\n"));
        } else {
            body.push_str(&format!("600000,2011-01-04,{minute},10,100\n"));
        }
    }
    let bars = write(dir.path(), "bars.csv", &body);
    let out = bin(&["ingest", "--bars", p(&bars), "--calendar", p(&cal), "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(EXIT_THRESHOLD));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejection threshold exceeded"));
}

#[test]
fn missing_input_is_generic_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cal = write(dir.path(), "cal.csv", CALENDAR);
    let out = bin(&["ingest", "--bars", "/nonexistent.csv", "--calendar", p(&cal), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = bin(&["synth", "--family", "gamma", "--k", "4", "--instruments", "6", "--samples", "300", "--seed", "17", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(a.join("bars")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for name in names {
        assert_eq!(fs::read(a.join("bars").join(&name)).unwrap(), fs::read(b.join("bars").join(&name)).unwrap());
    }
    for name in ["meta.csv", "calendar.csv", "synth.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn synth_rejects_bad_family_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert!(!bin(&["synth", "--family", "weibull", "--out", out]).status.success());
    assert!(!bin(&["synth", "--family", "gamma", "--params", "k=-1", "--out", out]).status.success());
    assert!(!bin(&["synth", "--family", "gamma", "--params", "shape=2", "--out", out]).status.success());
    assert!(!bin(&["synth", "--family", "gamma", "--instruments", "2", "--out", out]).status.success());
}

#[test]
fn params_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_from(["fluxscale", "synth", "--family", "lognormal", "--params", "b=2.24,log_a=4.7,instruments=4,samples=100,m_lo=1e-22,m_hi=1e-18", "--out", p(&a)]).unwrap();
    run_from([
        "fluxscale", "synth", "--family", "lognormal", "--b", "2.24", "--log-a", "4.7", "--instruments", "4", "--samples", "100",
        "--mean-lo", "1e-22", "--mean-hi", "1e-18", "--out", p(&b),
    ])
    .unwrap();
    assert_eq!(fs::read(a.join("bars/000000.csv")).unwrap(), fs::read(b.join("bars/000000.csv")).unwrap());
}

#[test]
fn gamma_fit_all_and_market() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = synth_store(dir.path(), &["--family", "gamma", "--k", "4", "--instruments", "60", "--samples", "2400"]);
    let out = dir.path().join("res");
    run_from(["fluxscale", "fit", "--store", p(&store), "--dt", "1", "--group", "all", "--out", p(&out)]).unwrap();
    let table = fs::read_to_string(out.join("fit_all_dt1.tsv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    let b: f64 = lines[1].split('\t').nth(3).unwrap().parse().unwrap();
    assert!((b - 2.0).abs() < 0.05, "{table}");
    assert!(out.join("scatter_all_dt1/All__All.tsv").exists());
    let fit_lines = fs::read_to_string(out.join("fit_lines_all_dt1.tsv")).unwrap();
    assert_eq!(fit_lines.lines().count(), 2);

    run_from(["fluxscale", "fit", "--store", p(&store), "--group", "market", "--out", p(&out)]).unwrap();
    let table = fs::read_to_string(out.join("fit_market_dt1.tsv")).unwrap();
    let groups: Vec<_> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(groups, ["All", "SZMB", "SZSMEB", "SZSB", "SHA", "SZB", "SHB"]);
    let scatter = fs::read_to_string(out.join("scatter_market_dt1/SHA__All.tsv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("log10_m\tlog10_V"));
    assert_eq!(scatter.lines().count(), 11);
}

#[test]
fn category_without_metadata_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    run_from(["fluxscale", "synth", "--family", "gamma", "--instruments", "6", "--samples", "240", "--out", p(&raw)]).unwrap();
    let store = dir.path().join("store");
    run_from([
        "fluxscale", "ingest", "--bars", p(&raw.join("bars")), "--calendar", p(&raw.join("calendar.csv")), "--out", p(&store),
    ])
    .unwrap();
    let out = bin(&["fit", "--store", p(&store), "--group", "category"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let table = fs::read_to_string(store.join("results/fit_category_dt1.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1);
}

#[test]
fn empty_store_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let cal = write(dir.path(), "cal.csv", CALENDAR);
    let bars = write(dir.path(), "bars.csv", "instrument_id,date,minute,close,dollar_volume\n");
    let store = dir.path().join("s");
    assert!(bin(&["ingest", "--bars", p(&bars), "--calendar", p(&cal), "--out", p(&store)]).status.success());
    let out = bin(&["fit", "--store", p(&store)]);
    assert_eq!(out.status.code(), Some(EXIT_INSUFFICIENT));
    assert_eq!(bin(&["stats", "--store", p(&store)]).status.code(), Some(EXIT_INSUFFICIENT));
}

#[test]
fn sweep_grid_and_scope() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = synth_store(dir.path(), &["--family", "poisson", "--instruments", "18", "--samples", "960"]);
    let out = dir.path().join("res");
    run_from(["fluxscale", "sweep", "--store", p(&store), "--grid", "1", "--out", p(&out)]).unwrap();
    let tsv = fs::read_to_string(out.join("sweep_All.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 2);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep_All.json")).unwrap()).unwrap();
    assert_eq!(sidecar["dt_max"], 1);

    let bad = bin(&["sweep", "--store", p(&store), "--grid", "0,1"]);
    assert!(!bad.status.success());
    assert!(!bin(&["sweep", "--store", p(&store), "--grid", "4,2"]).status.success());

    let per = dir.path().join("per");
    run_from(["fluxscale", "sweep", "--store", p(&store), "--grid", "1,2,4,8", "--scope", "per-market", "--out", p(&per)]).unwrap();
    let mut files: Vec<_> = fs::read_dir(&per)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".tsv"))
        .collect();
    files.sort();
    assert_eq!(files.len(), 6);
}

#[test]
fn per_market_with_one_market_writes_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    run_from(["fluxscale", "synth", "--family", "poisson", "--instruments", "6", "--samples", "480", "--out", p(&raw)]).unwrap();
    let store = dir.path().join("store");
    run_from([
        "fluxscale", "ingest", "--bars", p(&raw.join("bars/600000.csv")), p(&raw.join("bars/000000.csv")),
        "--calendar", p(&raw.join("calendar.csv")), "--prefix-map", "600=SHA", "--out", p(&store),
    ])
    .unwrap();
    let s = Store::open(&store).unwrap();
    assert_eq!(s.manifest.instruments.len(), 2);
    assert_eq!(s.manifest.instruments.iter().filter(|e| e.market.is_none()).count(), 1);
    let out = dir.path().join("res");
    run_from(["fluxscale", "sweep", "--store", p(&store), "--grid", "1,2", "--scope", "per-market", "--out", p(&out)]).unwrap_err();
}

#[test]
fn stats_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let cal = write(dir.path(), "cal.csv", "date,open1,close1\n2011-01-04,09:30,09:33\n");
    let e3 = 3f64.exp();
    let bars = write(
        dir.path(),
        "bars.csv",
        &format!(
            "instrument_id,date,minute,close,dollar_volume\n\
             600000,2011-01-04,09:30,1,0\n600000,2011-01-04,09:31,1,1\n600000,2011-01-04,09:32,1,1\n600000,2011-01-04,09:33,{e3},1\n\
             600001,2011-01-04,09:30,1,0\n600001,2011-01-04,09:31,1,1\n"
        ),
    );
    let store = dir.path().join("s");
    run_from(["fluxscale", "ingest", "--bars", p(&bars), "--calendar", p(&cal), "--out", p(&store)]).unwrap();
    let out = dir.path().join("res");
    run_from(["fluxscale", "stats", "--store", p(&store), "--group", "all", "--out", p(&out)]).unwrap();
    let tsv = fs::read_to_string(out.join("stats_all_dt1.tsv")).unwrap();
    let row: Vec<_> = tsv.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[..6], ["All", "4", "3", "0", "0.75", "0"]);

    // A single-value pool: std 0, shape measures undefined.
    let cal1 = write(dir.path(), "cal1.csv", "date,open1,close1\n2011-01-04,09:30,09:31\n");
    let bars1 = write(
        dir.path(),
        "bars1.csv",
        "instrument_id,date,minute,close,dollar_volume\n600000,2011-01-04,09:30,1,0\n600000,2011-01-04,09:31,2,5\n",
    );
    let store1 = dir.path().join("s1");
    run_from(["fluxscale", "ingest", "--bars", p(&bars1), "--calendar", p(&cal1), "--out", p(&store1)]).unwrap();
    run_from(["fluxscale", "stats", "--store", p(&store1), "--group", "market", "--out", p(&out)]).unwrap();
    let tsv = fs::read_to_string(out.join("stats_market_dt1.tsv")).unwrap();
    let row: Vec<_> = tsv.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "SHA");
    assert_eq!(row[6], "0");
    assert_eq!(&row[7..], ["/", "/"]);
}

#[test]
fn gamma_stats_are_right_skewed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = synth_store(dir.path(), &["--family", "gamma", "--k", "4", "--instruments", "12", "--samples", "960"]);
    let out = dir.path().join("res");
    run_from(["fluxscale", "stats", "--store", p(&store), "--out", p(&out)]).unwrap();
    let tsv = fs::read_to_string(out.join("stats_market_dt1.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 7);
    for line in tsv.lines().skip(1) {
        let skew: f64 = line.split('\t').nth(7).unwrap().parse().unwrap();
        assert!(skew > 0.0, "{line}");
    }
}

#[test]
fn full_precision_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = synth_store(dir.path(), &["--family", "gamma", "--instruments", "6", "--samples", "240"]);
    let out = dir.path().join("res");
    run_from(["fluxscale", "--precision", "full", "fit", "--store", p(&store), "--out", p(&out)]).unwrap();
    let table = fs::read_to_string(out.join("fit_all_dt1.tsv")).unwrap();
    let b = table.lines().nth(1).unwrap().split('\t').nth(3).unwrap();
    assert!(b.len() > 8, "{b}");
}
