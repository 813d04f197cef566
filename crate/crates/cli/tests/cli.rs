use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qflow::trainer::CSV_HEADER;

const TINY: &str = r#"
algo = "fm"
seed = 1
seeds = [1, 2]

[env]
type = "hypergrid"
H = 4
D = 2

[model]
hidden = [16]

[train]
steps = 20
batch = 4
lr = 1e-3
eval_interval = 10
"#;

fn qflow(args: &[&str]) -> Output {
    qflow_env(args, &[])
}

fn qflow_env(args: &[&str], vars: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qflow"));
    cmd.args(args).env_remove("QFLOW_SEED");
    for (k, v) in vars {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "algo = \"qm\"\n[env]\ntype = \"hypergrid\"\nD = 2\n");
    let out = dir.path().join("run");
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("`H`"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_values_exit_2_with_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[explore]\nepsilon = 2.0\n", "explore.epsilon"),
        ("[train]\nlr = -1.0\n", "train.lr"),
        ("[qm]\nN = 0\n", "qm.N"),
        ("[train]\nbogus = 1\n", "bogus"),
    ];
    for (extra, key) in cases {
        let text = format!("algo = \"qm\"\n[env]\ntype = \"hypergrid\"\nH = 4\nD = 2\n{extra}");
        let cfg = write_config(dir.path(), "c.toml", &text);
        let o = qflow(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
        assert_eq!(o.status.code(), Some(2), "{key}: {}", stderr(&o));
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
    let cfg = write_config(dir.path(), "c.toml", "algo = \"qm\"\n[env\n");
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bad_seed_variable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let o = qflow_env(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("r"))], &[("QFLOW_SEED", "x")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("QFLOW_SEED"));
}

#[test]
fn oracle_dp_matches_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "algo = \"fm\"\n[env]\ntype = \"hypergrid\"\nH = 2\nD = 2\n");
    let o = qflow(&["oracle", "dp", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("oracle_dp.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["state", "encoding", "probability", "target"]);
    let mut probs: Vec<(String, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[2].parse().unwrap())
        })
        .collect();
    probs.sort_by(|a, b| a.0.cmp(&b.0));
    let expected = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0];
    assert_eq!(probs.len(), 4);
    let mut got: Vec<f64> = probs.iter().map(|p| p.1).collect();
    let mut want = expected.to_vec();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-10, "{probs:?}");
    }
    // The corners (0,0) and (1,1) carry 1/3 each.
    let corner = probs.iter().filter(|p| (p.1 - 1.0 / 3.0).abs() < 1e-10).count();
    assert_eq!(corner, 2);
}

#[test]
fn train_writes_outputs_and_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("run");
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(out.join("checkpoint.qfc").exists());
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 1"));
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.contains("partial") || n.starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");

    let o = qflow(&["eval", "--checkpoint", s(&out.join("checkpoint.qfc")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(printed, fs::read_to_string(out.join("eval.csv")).unwrap());
    let eval_row: Vec<&str> = printed.lines().nth(1).unwrap().split(',').collect();
    let last_row: Vec<&str> = lines[2].split(',').collect();
    // Everything but the interval loss matches the final training row.
    for (i, (a, b)) in eval_row.iter().zip(&last_row).enumerate() {
        if i != 2 {
            assert_eq!(a, b, "column {i}");
        }
    }
}

#[test]
fn seeds_are_deterministic_and_env_override_works() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let run = |name: &str, args: &[&str], vars: &[(&str, &str)]| {
        let out = dir.path().join(name);
        let mut all = vec!["train", "--config", s(&cfg), "--out", s(&out), "--quiet"];
        all.extend_from_slice(args);
        let o = qflow_env(&all, vars);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = run("a", &["--seed", "7"], &[]);
    let b = run("b", &["--seed", "7"], &[]);
    let c = run("c", &[], &[("QFLOW_SEED", "7")]);
    let d = run("d", &[], &[]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
    assert!(fs::read_to_string(dir.path().join("c/config.toml")).unwrap().contains("seed = 7"));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&full), "--steps", "40", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&part), "--steps", "20", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = qflow(&["train", "--config", s(&cfg), "--out", s(&part), "--steps", "40", "--resume", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(full.join("metrics.csv")).unwrap(), fs::read(part.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(full.join("checkpoint.qfc")).unwrap(), fs::read(part.join("checkpoint.qfc")).unwrap());

    // A checkpoint from different settings is refused.
    let other = write_config(dir.path(), "o.toml", &TINY.replace("lr = 1e-3", "lr = 2e-3"));
    let o = qflow(&["train", "--config", s(&other), "--out", s(&part), "--steps", "60", "--resume"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_aggregates_and_parallel_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    let o = qflow(&["sweep", "--config", s(&cfg), "--out", s(&seq), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = qflow(&["sweep", "--config", s(&cfg), "--out", s(&par), "--parallel", "2", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let agg = fs::read_to_string(seq.join("aggregate.csv")).unwrap();
    assert_eq!(agg, fs::read_to_string(par.join("aggregate.csv")).unwrap());
    let lines: Vec<&str> = agg.lines().collect();
    assert_eq!(lines.len(), 1 + 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 1 + 2 * (CSV_HEADER.split(',').count() - 1));
    assert_eq!(header[1], "states_visited_mean");
    assert_eq!(header[2], "states_visited_std");
    for seed in [1, 2] {
        assert_eq!(
            fs::read(seq.join(format!("seed-{seed}/metrics.csv"))).unwrap(),
            fs::read(par.join(format!("seed-{seed}/metrics.csv"))).unwrap()
        );
    }
}

#[test]
fn plot_data_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let sweep = dir.path().join("grid");
    let o = qflow(&["sweep", "--config", s(&cfg), "--out", s(&sweep), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m1 = sweep.join("seed-1/metrics.csv");
    let m2 = sweep.join("seed-2/metrics.csv");
    let out = dir.path().join("plots");

    let o = qflow(&["plot-data", s(&m1), "--metric", "l1_error", "--x", "step", "--out", s(&out), "--name", "one.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(out.join("one.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["series", "seed", "x", "y"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "grid/l1_error");
    assert_eq!(&rows[0][1], "1");
    assert_eq!(&rows[0][2], "10");

    let o = qflow(&["plot-data", s(&m1), s(&m2), "--out", s(&out), "--name", "two.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(out.join("two.csv")).unwrap();
    let mut seeds = std::collections::BTreeMap::<String, std::collections::BTreeSet<String>>::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        seeds.entry(rec[0].to_string()).or_default().insert(rec[1].to_string());
    }
    assert!(seeds.contains_key("grid/loss"));
    assert!(seeds.values().all(|s| s.len() == 2), "{seeds:?}");

    let o = qflow(&["plot-data", "--out", s(&out), "--name", "none.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("none.csv").exists());

    let odd = write_config(dir.path(), "odd.csv", "step,other\n10,1\n");
    let o = qflow(&["plot-data", s(&m1), s(&odd), "--out", s(&out), "--name", "bad.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("inconsistent columns"), "{}", stderr(&o));
    assert!(!out.join("bad.csv").exists());
}

#[test]
fn presets_are_listed_and_runnable_configs() {
    let o = qflow(&["presets"]);
    assert!(o.status.success());
    let names = String::from_utf8(o.stdout).unwrap();
    for n in [
        "hypergrid-8x8x8",
        "hypergrid-16x16x16",
        "hypergrid-20^4",
        "risky-small",
        "risky-large",
        "sparse-R0-sweep",
        "seqgen-desk",
        "seqgen-120",
    ] {
        assert!(names.lines().any(|l| l == n), "{n}");
        let o = qflow(&["presets", n]);
        assert!(o.status.success());
    }
    assert_eq!(qflow(&["presets", "nope"]).status.code(), Some(2));
}
