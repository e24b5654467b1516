use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn zflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zflow"))
        .args(args)
        .env_remove("ZFLOW_RPC_URL")
        .output()
        .expect("run zflow")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generates a small chain and imports it; returns (tempdir, store, bundle).
fn imported(blocks: &str, seed: &str) -> (TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let store = dir.path().join("store");
    let o = zflow(&["synth", "--out", p(&bundle), "--blocks", blocks, "--seed", seed]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = zflow(&["--store", p(&store), "import", p(&bundle.join("chain.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("inputs_unresolvable,0"));
    let (s, b) = (p(&store).to_string(), p(&bundle).to_string());
    (dir, s, b)
}

#[test]
fn empty_store_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    for cmd in [&["stats"][..], &["cluster"], &["link"], &["check"], &["report", "--out", "x"]] {
        let mut args = vec!["--store", p(&store)];
        args.extend_from_slice(cmd);
        let o = zflow(&args);
        assert_eq!(o.status.code(), Some(2), "{cmd:?}");
        assert!(stderr(&o).contains("empty store"), "{cmd:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(zflow(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(zflow(&["stats"]).status.code(), Some(1), "missing store");
    assert_eq!(zflow(&["--store", "x", "link", "--max-gap", "many"]).status.code(), Some(1));
    assert_eq!(zflow(&["--store", "x", "import", "/no/such/dump"]).status.code(), Some(1));
    assert_eq!(zflow(&["--store", "x", "ingest"]).status.code(), Some(1), "no endpoint");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "max_gapp = 3\n").unwrap();
    let o = zflow(&["--config", p(&cfg), "--store", "x", "link"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(zflow(&["--help"]).status.success());
    assert!(zflow(&["--version"]).status.success());
}

#[test]
fn malformed_dump_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("bad.jsonl");
    std::fs::write(&dump, "{\"height\":0,\"hash\":\"00\",\"time\":1,\"txs\":[]}\nnot json\n").unwrap();
    let o = zflow(&["--store", p(&dir.path().join("s")), "import", p(&dump)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn check_scores_against_manifest() {
    let (_dir, store, bundle) = imported("1500", "3");
    let manifest = format!("{bundle}/manifest.json");
    let o = zflow(&["--store", &store, "--bundle", &bundle, "check", "--manifest", &manifest]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for line in ["conservation_failures,0", "unresolved_inputs,0", "h3_fp,0", "h4_fp,0", "h5_fp,0", "h5_fn,0"] {
        assert!(out.lines().any(|l| l == line), "missing {line} in\n{out}");
    }
}

#[test]
fn link_summary_is_monotone_in_gap() {
    let (_dir, store, _) = imported("1500", "5");
    let mut last = (0u64, 0u64);
    for gap in ["1", "2", "5", "20", "100", "1000"] {
        let o = zflow(&["--store", &store, "link", "--max-gap", gap]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], gap);
        let now = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(now.0 >= last.0 && now.1 >= last.1, "gap {gap}: {now:?} < {last:?}");
        last = now;
    }
    let o = zflow(&["--store", &store, "link", "--curve", "1,2,5,20,100,1000"]);
    let curve: Vec<String> = stdout(&o).lines().skip(1).map(str::to_string).collect();
    assert_eq!(curve.len(), 6);
    assert!(curve.last().unwrap().starts_with(&format!("1000,{},{}", last.0, last.1)));
    assert_eq!(zflow(&["--store", &store, "link", "--curve", "10,1"]).status.code(), Some(1));
}

#[test]
fn report_is_reproducible_from_scratch() {
    let run = || {
        let (dir, store, bundle) = imported("1200", "9");
        let out = dir.path().join("report");
        let o = zflow(&["--store", &store, "--bundle", &bundle, "report", "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        (stdout(&o), files)
    };
    let (digest_a, a) = run();
    let (digest_b, b) = run();
    assert_eq!(digest_a, digest_b);
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for f in ["kinds.csv", "pool_series.csv", "clusters.csv", "attribution.csv", "round_trips.csv", "tsb_table.csv"] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
}

#[test]
fn tables_have_headers_and_no_floats_in_amounts() {
    let (_dir, store, bundle) = imported("800", "2");
    let kinds = stdout(&zflow(&["--store", &store, "stats", "--table", "kinds"]));
    assert_eq!(kinds.lines().next(), Some("kind,count,percent"));
    assert_eq!(kinds.lines().count(), 8);
    assert!(kinds.lines().last().unwrap().starts_with("total,"));
    let pool = stdout(&zflow(&["--store", &store, "stats", "--table", "pool"]));
    assert_eq!(pool.lines().count(), 801);
    let last: Vec<&str> = pool.lines().last().unwrap().split(',').collect();
    let zat: u64 = last[5].parse().unwrap();
    let zec = last[6];
    assert_eq!(zec.split('.').nth(1).map(str::len), Some(8));
    assert_eq!(zec.replace('.', "").parse::<u64>().unwrap(), zat);

    let tags = zflow(&["--store", &store, "--bundle", &bundle, "tag", "--discover"]);
    assert!(tags.status.success());
    assert!(stdout(&tags).starts_with("address,category,name,source,round\n"));
    assert!(stdout(&tags).contains(",founder,"));

    let clusters = stdout(&zflow(&["--store", &store, "cluster", "--assignments"]));
    assert_eq!(clusters.lines().next(), Some("address,cluster_id"));
}

#[test]
fn config_file_and_flags_combine() {
    let (dir, store, bundle) = imported("1000", "4");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("store = {store}\nmax_gap = 2\n")).unwrap();
    let from_file = stdout(&zflow(&["--config", p(&cfg), "link"]));
    assert!(from_file.lines().nth(1).unwrap().starts_with("2,"));
    let flag_wins = stdout(&zflow(&["--config", p(&cfg), "link", "--max-gap", "7"]));
    assert!(flag_wins.lines().nth(1).unwrap().starts_with("7,"));

    let o = zflow(&["--store", &store, "--bundle", &bundle, "tsb", "--deposit-tol", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = zflow(&["--store", &store, "--bundle", &bundle, "tsb", "--deposit-tol", "lots"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_replays_from_its_own_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = zflow(&["synth", "--out", p(&first), "--blocks", "600", "--seed", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("b");
    let o2 = zflow(&["--config", p(&first.join("run.cfg")), "synth", "--out", p(&second)]);
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert_eq!(stdout(&o), stdout(&o2));
    assert_eq!(
        std::fs::read(first.join("chain.jsonl")).unwrap(),
        std::fs::read(second.join("chain.jsonl")).unwrap()
    );
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "blocks = 0\n").unwrap();
    let o = zflow(&["--config", p(&bad), "synth", "--out", p(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(1));
}
