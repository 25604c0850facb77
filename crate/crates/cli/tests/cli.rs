use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unipotent"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn stdout_hash(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stdout);
    s.lines().find_map(|l| l.strip_prefix("config_hash=")).expect("hash line").to_string()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("structured diagnostic")
}

#[test]
fn same_config_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in ["sphere-dist", "density", "nondiv", "tree"] {
        let (da, db) = (a.join(cmd), b.join(cmd));
        assert!(run(&[cmd], &da).status.success(), "{cmd}");
        assert!(run(&[cmd], &db).status.success(), "{cmd}");
        let (fa, fb) = (files(&da), files(&db));
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (name, bytes) in &fa {
            if name == "metadata.json" {
                let strip = |b: &[u8]| {
                    let mut v: Value = serde_json::from_slice(b).unwrap();
                    v.as_object_mut().unwrap().remove("timestamp_unix").expect("timestamp present");
                    v
                };
                assert_eq!(strip(bytes), strip(&fb[name]));
            } else {
                assert_eq!(bytes, &fb[name], "{cmd}/{name} differs between runs");
            }
        }
    }
}

#[test]
fn every_artifact_carries_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["density", "--set", "l_max=3"], tmp.path());
    assert!(o.status.success());
    let hash = stdout_hash(&o);
    let all = files(tmp.path());
    for name in ["density.csv", "generators.txt", "density.json", "metadata.json"] {
        assert!(all.contains_key(name), "missing {name}");
    }
    for (name, bytes) in &all {
        let text = String::from_utf8(bytes.clone()).unwrap();
        if name.ends_with(".json") {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_hash"], hash.as_str(), "{name}");
        } else {
            assert_eq!(text.lines().next().unwrap(), format!("# config_hash={hash}"), "{name}");
        }
    }
    let summary: Value = serde_json::from_slice(&all["density.json"]).unwrap();
    assert_eq!(summary["config"]["values"]["l_max"], "3");
    assert_eq!(summary["config"]["command"], "density");
    assert!(summary.get("timestamp_unix").is_none());
}

#[test]
fn config_file_flags_and_overrides_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tree.cfg");
    fs::write(&cfg, "# tree run\nseed = 4\nradius = 3\nsamples = 20\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = run(&["tree", "--config", cfg], &tmp.path().join("f"));
    let from_flags = run(&["tree", "--seed", "4", "--set", "radius=3", "--set", "samples=20"], &tmp.path().join("g"));
    assert!(from_file.status.success() && from_flags.status.success());
    assert_eq!(stdout_hash(&from_file), stdout_hash(&from_flags));
    assert_eq!(files(&tmp.path().join("f"))["tree.json"], files(&tmp.path().join("g"))["tree.json"]);
    // dedicated flags beat --set, which beats the file
    let layered = run(&["tree", "--config", cfg, "--set", "seed=9", "--seed", "4"], &tmp.path().join("h"));
    assert_eq!(stdout_hash(&layered), stdout_hash(&from_file));
    let changed = run(&["tree", "--config", cfg, "--set", "seed=9"], &tmp.path().join("i"));
    assert_ne!(stdout_hash(&changed), stdout_hash(&from_file));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_file = tmp.path().join("bad.cfg");
    fs::write(&bad_file, "seed 4\n").unwrap();
    let cases: [&[&str]; 6] = [
        &["tree", "--set", "bogus=1"],
        &["tree", "--set", "radius=six"],
        &["sphere-dist", "--prime", "5"],
        &["sphere-dist", "--set", "coupling=sideways"],
        &["limit-poly", "--set", "sequence=upper"],
        &["tree", "--config", bad_file.to_str().unwrap()],
    ];
    for args in cases {
        let o = run(args, &tmp.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&o)["error"]["kind"], "config", "{args:?}");
    }
    assert!(!tmp.path().join("out").exists(), "config errors write nothing");
}

#[test]
fn module_errors_exit_1_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    // -1 is not a square mod 7
    let o = run(&["density", "--prime", "7"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let d = stderr_json(&o);
    assert_eq!(d["error"]["kind"], "module");
    assert_eq!(d["error"]["module"], "lattices");
    let o = run(&["limit-poly", "--set", "threshold=30"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["module"], "linearize");
}

#[test]
fn check_failure_exits_1_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    // three digits are not enough to decide every LDU round trip
    let o = run(&["verify-identities", "--precision", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("verify-identities.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(v["result"]["suites"]["ldu-round-trip"]["distinct"], 0);
}

#[test]
fn default_runs_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify-identities"], &tmp.path().join("v"));
    assert!(o.status.success());
    let o = run(&["nondiv"], &tmp.path().join("n"));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("1000/1000 pass"));
    let o = run(&["limit-poly", "--set", "sequence=pair"], &tmp.path().join("l"));
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&fs::read(tmp.path().join("l/limit-poly.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["alpha"], serde_json::json!(["0", "-2"]));
    assert_eq!(v["result"]["beta"], serde_json::json!(["-1", "0"]));
}

#[test]
fn sphere_dist_tv_table_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["sphere-dist"], tmp.path());
    assert!(o.status.success());
    let actual = fs::read_to_string(tmp.path().join("tv.csv")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sphere_dist_k5_seed1_tv.csv");
    if std::env::var_os("UPDATE_GOLDENS").is_some() || !golden.exists() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &actual).unwrap();
    }
    assert_eq!(actual, fs::read_to_string(&golden).unwrap());
    let rows: Vec<&str> = actual.lines().skip(2).collect();
    assert_eq!(rows.len(), 31);
    // surjective from radius 4 on, never before
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row.ends_with(",true"), n >= 4, "row {n}: {row}");
    }
}

#[test]
fn graph_files_are_read() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("k4.graph");
    fs::write(&g, "p 2\nvertices 4\nedge 0 1\nedge 0 2\nedge 0 3\nedge 1 2\nedge 1 3\nedge 2 3\n").unwrap();
    let spec = format!("graph1=file:{}", g.display());
    let o = run(&["sphere-dist", "--set", &spec, "--set", "graph2=complete:4", "--set", "n_max=8"], &tmp.path().join("o"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["sphere-dist", "--set", "graph1=file:/nonexistent/graph"], &tmp.path().join("p"));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["module"], "treequot");
}
