use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evmt_core::sim::toy_example;

fn evmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evmt"))
        .args(args)
        .env("EVMT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write(name: &str, text: &str) -> String {
    let p = scratch(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Rows of an output table with `rejected == 1`.
fn rejected_rows(csv: &str) -> usize {
    csv.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("1")).count()
}

fn pvalue_csv(name: &str) -> String {
    let mut s = String::from("pvalue,truth\n");
    for i in 0..60 {
        let p = if i < 20 { 1e-4 * (i + 1) as f64 } else { (i as f64 + 0.5) / 60.0 };
        s.push_str(&format!("{p},{}\n", u8::from(i < 20)));
    }
    write(name, &s)
}

#[test]
fn toy_groups_reject_forty() {
    let (p, labels) = toy_example();
    let mut s = String::from("pvalue,group\n");
    for (v, g) in p.iter().zip(&labels) {
        s.push_str(&format!("{v},g{g}\n"));
    }
    let input = write("toy.csv", &s);
    let o = evmt(&["groups", "--input", &input, "--alpha", "0.05", "--weights", "adaptive"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rejected_rows(&String::from_utf8_lossy(&o.stdout)), 40);
    let o = evmt(&["groups", "--input", &input, "--weights", "unit"]);
    assert_eq!(rejected_rows(&String::from_utf8_lossy(&o.stdout)), 0);
}

#[test]
fn zero_evalues_reject_nothing() {
    let input = write("zeros.csv", "evalue\n0\n0\n0\n0\n");
    let o = evmt(&["ebh", "--input", &input]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().count(), 5);
    assert_eq!(rejected_rows(&out), 0);
}

#[test]
fn evalue_output_round_trips_through_ebh() {
    let input = pvalue_csv("round.csv");
    for cmd in ["bh", "storey", "bc", "hybrid"] {
        let table = scratch(&format!("round_{cmd}.csv"));
        let table_s = table.to_string_lossy();
        let o = evmt(&[cmd, "--input", &input, "--out", &table_s]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let first = fs::read_to_string(&table).unwrap();
        assert_eq!(summary["rejections"].as_u64().unwrap() as usize, rejected_rows(&first));
        assert!(summary["power"].is_number(), "truth column yields metrics");
        let o = evmt(&["ebh", "--input", &table_s]);
        assert_eq!(code(&o), 0);
        assert_eq!(rejected_rows(&String::from_utf8_lossy(&o.stdout)), rejected_rows(&first), "{cmd}");
    }
}

#[test]
fn adaptive_and_fbc_run_on_covariates() {
    let mut s = String::from("pvalue,x,lfdr_pi,lfdr_kappa\n");
    for i in 0..80 {
        let p = if i % 4 == 0 { 1e-3 * (i + 1) as f64 / 80.0 } else { (i as f64 + 0.5) / 80.0 };
        s.push_str(&format!("{p},{},0.7,0.5\n", i as f64 / 80.0));
    }
    let input = write("cov.csv", &s);
    let a = evmt(&["adaptive", "--input", &input, "--seed", "7"]);
    let b = evmt(&["adaptive", "--input", &input, "--seed", "7"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout, "seeded runs repeat");
    let o = evmt(&["fbc", "--input", &input]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = evmt(&["adaptive", "--input", &input]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: "));
}

#[test]
fn knockoff_combine_needs_two_files() {
    let a = write("ko_a.csv", "w\n3\n2.5\n-0.1\n2\n0\n1.5\n");
    let b = write("ko_b.csv", "w\n2\n-1\n0.5\n3\n1\n2\n");
    let o = evmt(&["knockoff-combine", "--input", &a, "--input", &b, "--alpha", "0.3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 7);
    assert_eq!(code(&evmt(&["knockoff-combine", "--input", &a])), 3);
    let short = write("ko_short.csv", "w\n1\n");
    assert_eq!(code(&evmt(&["knockoff-combine", "--input", &a, "--input", &short])), 2);
}

#[test]
fn input_errors_exit_two() {
    let cases = [
        ("bad_p.csv", "pvalue\n0.1\n1.5\n"),
        ("nan_p.csv", "pvalue\n0.1\nNaN\n"),
        ("text_p.csv", "pvalue\n0.1\nabc\n"),
        ("no_col.csv", "p\n0.1\n"),
        ("empty.csv", "pvalue\n"),
        ("dup.csv", "pvalue,pvalue\n0.1,0.2\n"),
        ("ragged.csv", "pvalue,x\n0.1,1\n0.2\n"),
        ("bad_truth.csv", "pvalue,truth\n0.1,yes\n"),
    ];
    for (name, text) in cases {
        let input = write(name, text);
        let o = evmt(&["bh", "--input", &input]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = evmt(&["bh", "--input", &write("line.csv", "pvalue\n0.1\n0.2\n7\n")]);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":4:"), "error names the line");
    assert_eq!(code(&evmt(&["bh", "--input", "/nonexistent/file.csv"])), 2);
    let neg = write("neg_e.csv", "evalue\n1\n-2\n");
    assert_eq!(code(&evmt(&["ebh", "--input", &neg])), 2);
    assert_eq!(code(&evmt(&["groups", "--input", &pvalue_csv("nogroup.csv")])), 2);
}

#[test]
fn configuration_errors_exit_three() {
    let input = pvalue_csv("cfg.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["bh", "--input", &input, "--alpha", "0"],
        vec!["bh", "--input", &input, "--alpha", "1.5"],
        vec!["bh", "--input", &input, "--alpha", "x"],
        vec!["bh", "--input", &input, "--weights", "unit"],
        vec!["bh", "--input", &input, "--reps", "3"],
        vec!["bh", "--input", &input, "--seed", "3"],
        vec!["bh"],
        vec!["hybrid", "--input", &input, "--weights", "size"],
        vec!["groups", "--input", &input, "--weights", "cheap"],
        vec!["adaptive", "--input", &input, "--weights", "fast"],
        vec!["simulate"],
        vec!["simulate", "--setting", "nope"],
        vec!["simulate", "--setting", "E1", "--reps", "0"],
        vec!["frobnicate"],
        vec![],
    ];
    for args in cases {
        let o = evmt(&args);
        assert_eq!(code(&o), 3, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&evmt(&["--help"])), 0);
    assert_eq!(code(&evmt(&["--version"])), 0);
}

#[test]
fn misuse_never_panics() {
    let input = pvalue_csv("misuse.csv");
    let cmds = ["bh", "storey", "bc", "fbc", "ebh", "groups", "hybrid", "adaptive", "knockoff-combine"];
    let extras: [&[&str]; 5] = [&[], &["--alpha", "0.999"], &["--alpha", "1e-9"], &["--weights", "full"], &["--input", &input]];
    for cmd in cmds {
        for extra in extras {
            let mut args = vec![cmd, "--input", &input];
            args.extend_from_slice(extra);
            let o = evmt(&args);
            let c = code(&o);
            assert!([0, 2, 3].contains(&c), "{args:?} exited {c}: {}", String::from_utf8_lossy(&o.stderr));
            assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"), "{args:?}");
        }
    }
}

#[test]
fn simulate_writes_metrics() {
    let out = scratch("sim.csv");
    let out_s = out.to_string_lossy();
    let args = ["simulate", "--setting", "E1", "--reps", "4", "--seed", "11", "--out", &out_s];
    let o = evmt(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(&out).unwrap();
    assert!(first.starts_with("setting,family,method,metric,value,se,replications"));
    assert!(first.lines().count() > 1);
    evmt(&args);
    assert_eq!(fs::read_to_string(&out).unwrap(), first, "same seed, same table");

    let toml = write("camp.toml", "setting = \"E1\"\nreplications = 3\nseed = 5\n");
    let o = evmt(&["simulate", "--input", &toml]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains(",3\n"));
}
