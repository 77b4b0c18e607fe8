use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn nlcomp(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlcomp"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn small_copy(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(scenario(name)).unwrap().replace("n = 100", "n = 40");
    let path = dir.join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn classify_reports_each_branch() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, branch) in [("coexistence.toml", "i"), ("v_wins.toml", "ii"), ("u_wins.toml", "iii")] {
        let cfg = small_copy(tmp.path(), name, |s| s);
        let out = tmp.path().join(name.trim_end_matches(".toml"));
        let o = nlcomp(&["classify"], &cfg, &out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = csv::Reader::from_path(out.join("classify.csv")).unwrap();
        let headers = r.headers().unwrap().clone();
        let row = r.records().next().unwrap().unwrap();
        let col = |h: &str| row[headers.iter().position(|x| x == h).unwrap()].to_string();
        assert_eq!(col("branch"), branch);
        assert!(out.join("classify.txt").exists());
    }
}

#[test]
fn floats_carry_seventeen_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "coexistence.toml", |s| s);
    let o = nlcomp(&["spectral"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(tmp.path().join("spectral.csv")).unwrap();
    let mu0 = text.lines().find(|l| l.starts_with("mu0,")).unwrap();
    let mantissa = mu0.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn verify_agrees_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "v_wins.toml", |s| s.replace("trials = 20", "trials = 3"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(nlcomp(&["verify"], &cfg, &a).status.code(), Some(0));
    assert_eq!(nlcomp(&["verify"], &cfg, &b).status.code(), Some(0));
    let ra = fs::read(a.join("runs.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("runs.csv")).unwrap());
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 3 + 2);
}

#[test]
fn disagreement_exits_with_two() {
    // u wins in the limit, but d = 2 is far outside the small-d regime and the
    // run is cut off long before it settles.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "u_wins.toml", |s| {
        s.replace("trials = 20", "trials = 2")
            .replace("d = 0.01", "d = 2.0")
            .replace("[verify]", "[simulation]\nt_max = 1.0\n\n[verify]")
    });
    let o = nlcomp(&["verify"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let summary = fs::read_to_string(tmp.path().join("verify.txt")).unwrap();
    assert!(summary.contains("small-d regime"));
}

#[test]
fn hypothesis_violation_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "coexistence.toml", |s| s.replace("b = 0.5\nc = 0.5", "b = 2.0\nc = 2.0"));
    assert_eq!(nlcomp(&["audit"], &cfg, tmp.path()).status.code(), Some(3));
    assert_eq!(nlcomp(&["classify"], &cfg, tmp.path()).status.code(), Some(3));
}

#[test]
fn steady_limit_and_simulate_write_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "coexistence.toml", |s| s);
    for (cmd, file) in [("steady", "steady.csv"), ("limit", "limit.csv"), ("simulate", "terminal.csv")] {
        let o = nlcomp(&[cmd], &cfg, tmp.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let mut r = csv::Reader::from_path(tmp.path().join(file)).unwrap();
        let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 40);
        let second: f64 = rows[7][1].parse().unwrap();
        let expected = if cmd == "steady" { 1.0 } else { 2.0 / 3.0 };
        assert!((second - expected).abs() < 1e-6, "{cmd}: {second}");
    }
    let series = fs::read_to_string(tmp.path().join("series.csv")).unwrap();
    assert!(series.starts_with("t,u_max,v_max,u_min,v_min,rhs_norm"));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_copy(tmp.path(), "coexistence.toml", |s| s);
    let o = Command::new(env!("CARGO_BIN_EXE_nlcomp"))
        .args(["sweep", "--b", "0.25,0.75,1.25", "--c", "0.5,1.5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let (b, c): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        let expected = if b > 1.0 { "iii" } else if c > 1.0 { "ii" } else { "i" };
        if b * c < 1.0 {
            assert_eq!(&row[6], expected);
        } else {
            assert!(!row[9].is_empty());
        }
    }
}
