use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn peelperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peelperc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("peelperc-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn thresholds_table_has_every_pair() {
    let o = peelperc(&["thresholds", "--all"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 15);
    let unknown: Vec<&&str> = rows.iter().filter(|r| r.contains("open problem")).collect();
    assert_eq!(unknown, [&"quad,site,unknown (open problem),"]);
    assert!(rows.contains(&"tri2,bond,1/4,2.5000000000000000e-1"));
    assert!(rows.contains(&"quad,face,3/4,7.5000000000000000e-1"));
}

#[test]
fn site_on_quad_reports_open_problem() {
    let o = peelperc(&["explore", "--type", "quad", "--model", "site", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("open problem"), "{err}");
}

#[test]
fn exit_codes() {
    assert_eq!(peelperc(&["explore", "--p", "1.5"]).status.code(), Some(1));
    assert_eq!(peelperc(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        peelperc(&["drift", "--p-grid", "0:1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        peelperc(&["selftest", "--only", "9"]).status.code(),
        Some(1)
    );
    let budget = peelperc(&[
        "boltzmann",
        "--perimeter",
        "300",
        "--samples",
        "5",
        "--step-budget",
        "3",
    ]);
    assert_eq!(budget.status.code(), Some(2));
    assert!(peelperc(&["--help"]).status.success());
}

#[test]
fn selftest_exit_status_follows_criteria() {
    assert_eq!(
        peelperc(&["selftest", "--only", "1"]).status.code(),
        Some(0)
    );
    // the p = 10 volume mean sits far below the asymptotic value
    let o = peelperc(&["selftest", "--only", "7", "--scale", "0.1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("[FAIL]"));
}

#[test]
fn weights_rows_sum_to_one_on_tri2() {
    let o = peelperc(&["weights", "--type", "tri2", "--k-max", "60"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut total = 0.0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 5, "{line}");
        if !f[1].starts_with("threshold") {
            total += f[4].parse::<f64>().unwrap();
        }
    }
    // the jump tail beyond 60 carries about 2e-2 of the mass
    assert!(total < 1.0 && total > 0.97, "{total}");
}

#[test]
fn explore_output_is_independent_of_thread_count() {
    let dir = scratch("threads");
    let run = |threads: &str, name: &str| {
        let out = dir.join(name);
        let o = peelperc(&[
            "explore",
            "--p",
            "0.6",
            "--trials",
            "400",
            "--escape",
            "300",
            "--seed",
            "42",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("trial,survived,tau,hull_volume,volume_censored,dh1\n"));
    assert_eq!(text.lines().count(), 401);

    let ma = manifest(&dir.join("a.csv.manifest.json"));
    let mb = manifest(&dir.join("b.csv.manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(
        ma["files"]["a.csv"]["sha256"],
        mb["files"]["b.csv"]["sha256"]
    );
    assert_eq!(ma["seed"], 42);
    assert!(ma["paper_claim"].as_str().unwrap().len() > 10);
    let leftovers: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reduced_theta_example() {
    // escape height 10^5 keeps the escape bias near 2e-3, below the noise
    let o = peelperc(&[
        "theta", "--type", "tri2", "--model", "site", "--p", "0.75", "--trials", "3000",
        "--escape", "100000", "--seed", "7",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    let (mc, exact, se) = (row[1], row[2], row[3]);
    assert!((exact - 1.0 / 3.0).abs() < 1e-15);
    assert!((mc - exact).abs() <= 3.0 * se, "{mc} vs {exact} +- {se}");
}

#[test]
fn json_format_names_the_claim() {
    let o = peelperc(&[
        "--format",
        "json",
        "drift",
        "--type",
        "quad",
        "--model",
        "bond",
        "--p-grid",
        "1/3:1/3:1",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["paper_claim"].is_string());
    assert_eq!(v["rows"][0]["drift_exact"], "0");
}

#[test]
fn exponents_writes_curves_and_summary() {
    let dir = scratch("exponents");
    let o = peelperc(&[
        "exponents",
        "--trials",
        "2000",
        "--max-steps",
        "100000",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["tau.csv", "hull_volume.csv", "dh1.csv"] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        assert!(text.starts_with("n,exceed_frac\n"));
    }
    let summary = manifest(&dir.join("summary.json"));
    for key in ["tau", "hull_volume", "dh1"] {
        let entry = &summary[key];
        for field in ["exponent", "stderr", "fit_range", "censored_frac"] {
            assert!(entry.get(field).is_some(), "{key}.{field}");
        }
    }
    let m = manifest(&dir.join("manifest.json"));
    assert_eq!(m["files"].as_object().unwrap().len(), 4);
    fs::remove_dir_all(&dir).unwrap();
}
