use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ordcopula"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["simulate", "--out", path_str(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn tau_conversion() {
    let o = run(&["tau", "--family", "gumbel", "--theta", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.5");
    let o = run(&["tau", "--family", "frank", "--tau", "0.5"]);
    let theta: f64 = stdout(&o).trim().parse().unwrap();
    assert!((theta - 5.736282707019971).abs() < 1e-9);
    let o = run(&["tau", "--family", "bvn", "--theta", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["tau", "--family", "clayton", "--theta", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("clayton"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--seed", "7", "--n", "40", "--t", "3", "--beta-m", "0.3,-0.2"];
    let a = simulate(&dir, "a.csv", &args);
    let b = simulate(&dir, "b.csv", &args);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = simulate(&dir, "c.csv", &["--seed", "8", "--n", "40", "--t", "3", "--beta-m", "0.3,-0.2"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("couple_id,wave,y_m,y_f,x_m_1,x_m_2,x_f_1,x_f_2\n"));
    assert_eq!(text.lines().count(), 1 + 40 * 3);
}

fn read_matrix(p: &Path) -> (Vec<f64>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let centres: Vec<f64> = lines.next().unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    let rows = lines.map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect()).collect();
    (centres, rows)
}

#[test]
fn contour_survival_gumbel_has_heavier_lower_tail() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("grid.csv");
    let o = run(&["contour", "--family", "sgumbel", "--tau", "0.5", "--grid", "40", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (z, d) = read_matrix(&out);
    assert_eq!(d.len(), 40);
    let h = z[1] - z[0];
    let mass = |pick: &dyn Fn(f64) -> bool| -> f64 {
        let mut m = 0.0;
        for (i, row) in d.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if pick(z[i]) && pick(z[j]) {
                    m += v * h * h;
                }
            }
        }
        m
    };
    assert!(mass(&|c| c < 0.0) > mass(&|c| c > 0.0));
    assert!(mass(&|c| c < -2.0) > 2.0 * mass(&|c| c > 2.0));
    let total = mass(&|_| true);
    assert!((0.99..=1.0).contains(&total), "{total}");
}

#[test]
fn missing_data_file_is_an_input_error() {
    let o = run(&["fit", "--data", "/definitely/not/here.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/not/here.csv"));
    let o = run(&["fit"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_files_report_location() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &str, &[&str]); 4] = [
        ("couple_id,wave,y_m,y_f\na,1,2,3\na,2,12,1\n", "line 3", &["--k-m", "11", "--k-f", "11"]),
        ("couple_id,wave,y_m,y_f\na,1,2,3\na,3,1,1\n", "not consecutive", &[]),
        ("couple_id,wave,y_m,y_f\nc9,1,2,\n", "c9", &[]),
        ("couple_id,wave,y_m,y_f,x_m_1,x_f_1\na,1,2,3,1,0\nb,1,1,1,1,2\n", "constant", &[]),
    ];
    for (i, (text, needle, extra)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("bad{i}.csv"));
        fs::write(&p, text).unwrap();
        let mut args = vec!["fit", "--data", path_str(&p)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "case {i}");
        assert!(stderr(&o).contains(needle), "case {i}: {}", stderr(&o));
    }
}

#[test]
fn fit_report_layout_and_files() {
    let dir = TempDir::new().unwrap();
    let data = simulate(
        &dir,
        "d.csv",
        &["--seed", "3", "--n", "300", "--t", "4", "--beta-m", "0.4", "--serial-m", "t4", "--serial-f", "t5", "--coupling", "t5"],
    );
    let prefix = dir.path().join("fit");
    let o = run(&["fit", "--data", path_str(&data), "--serial-m", "t4", "--serial-f", "t5", "--coupling", "t5", "--out", path_str(&prefix)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("fit.txt")).unwrap();
    assert_eq!(text, stdout(&o));
    assert!(text.contains("serial t4 (male), t5 (female); coupling t5"));
    let labels: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    let order = ["alpha_1", "alpha_2", "alpha_3", "alpha_4", "x_1", "tau_j", "tau", "loglik"];
    let pos: Vec<usize> = order.iter().map(|l| labels.iter().position(|x| x == l).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] + 1 == w[1]), "{text}");
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["families"]["coupling"]["nu"], 5.0);
    assert_eq!(json["standard_errors"]["status"], "available");
}

#[test]
fn fit_on_independent_data_finds_no_dependence() {
    let dir = TempDir::new().unwrap();
    let data = simulate(
        &dir,
        "d.csv",
        &["--seed", "11", "--n", "1000", "--t", "5", "--serial-m", "bvn", "--serial-f", "bvn", "--tau-m", "0", "--tau-f", "0", "--tau-coupling", "0"],
    );
    let prefix = dir.path().join("fit");
    let o = run(&["fit", "--data", path_str(&data), "--no-se", "--out", path_str(&prefix)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let taus = [&json["tau"]["serial"][0], &json["tau"]["serial"][1], &json["tau"]["coupling"]];
    for t in taus {
        assert!(t.as_f64().unwrap().abs() <= 0.03, "{t}");
    }
}

#[test]
fn optimizer_failure_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", &["--seed", "5", "--n", "200", "--t", "3", "--beta-m", "0.5"]);
    let o = run(&["fit", "--data", path_str(&data), "--no-se", "--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("did not converge"));
}

#[test]
fn scan_with_two_candidates() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", &["--seed", "9", "--n", "200", "--t", "4"]);
    let prefix = dir.path().join("scan");
    let o = run(&["scan", "--data", path_str(&data), "--candidates", "bvn,frank", "--out", path_str(&prefix)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("scan.json")).unwrap()).unwrap();
    assert_eq!(json["coupling"]["ranked"].as_array().unwrap().len(), 2);
    for s in json["serial"].as_array().unwrap() {
        assert_eq!(s["ranked"].as_array().unwrap().len(), 2);
    }
    let text = stdout(&o);
    let table_head = text.lines().skip_while(|l| !l.starts_with("Coupling")).nth(1).unwrap();
    assert_eq!(table_head.split_whitespace().count(), 2, "{table_head}");
    assert!(text.contains("Vuong vs BVN"));
}

#[test]
fn config_file_and_flags() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", &["--seed", "2", "--n", "150", "--t", "3"]);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("# test run\ndata = {}\nserial_m = frank\ncoupling = gumbel\nstandard_errors = no\n", data.display())).unwrap();
    let o = run(&["--config", path_str(&cfg), "fit", "--serial-f", "t3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("serial Frank (male), t3 (female); coupling Gumbel"));
    assert!(stdout(&o).contains("Standard errors not computed"));
    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = run(&["--config", path_str(&cfg), "tau", "--family", "bvn", "--theta", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn vuong_swapping_models_flips_sign() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "d.csv", &["--seed", "4", "--n", "300", "--t", "4", "--coupling", "sgumbel", "--tau-coupling", "0.4"]);
    let prefix = dir.path().join("fit");
    let o = run(&["fit", "--data", path_str(&data), "--serial-m", "gumbel", "--serial-f", "gumbel", "--coupling", "sgumbel", "--no-se", "--out", path_str(&prefix)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fitted = dir.path().join("fit.json");
    let z = |m1: &str, m2: &str| -> f64 {
        let out = dir.path().join("v");
        let o = run(&["vuong", "--data", path_str(&data), "--model1", m1, "--model2", m2, "--out", path_str(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
        json["z0"].as_f64().unwrap()
    };
    let a = z("gumbel,gumbel,bvn", path_str(&fitted));
    let b = z(path_str(&fitted), "gumbel,gumbel,bvn");
    assert_eq!(a, -b);
    assert!(a > 0.0);
}
