use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdt")).args(args).output().expect("gdt runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name} in {report}"))
}

#[test]
fn one_wl_cannot_split_csl_8_2_from_8_3() {
    let out = gdt(&["wl", "--csl", "8,2,3", "--algorithm", "1-wl", "--expect", "indistinguishable"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["data"]["distinguishable"], false);
    assert_eq!(r["data"]["algorithm"], "1-wl");
    assert_eq!(check(&r, "expected-verdict")["passed"], true);
}

#[test]
fn wrong_expectation_exits_one() {
    let out = gdt(&["wl", "--csl", "8,2,3", "--expect", "distinguishable"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["passed"], false);
}

#[test]
fn rrwp_distance_splits_a_non_isomorphic_csl_pair() {
    let out = gdt(&["wl", "--csl", "13,2,3", "--algorithm", "gd-wl", "--distance", "rrwp", "--k", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["data"]["distinguishable"], true);
    assert_eq!(r["data"]["distance"], "rrwp:8");
}

#[test]
fn hierarchy_defaults_pass() {
    let out = gdt(&["hierarchy", "--family", "csl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json_of(&out);
    for name in ["csl-1-wl-blind", "csl-rwse-threshold", "csl-rwse-blind-11", "csl-rrwp-separates"] {
        assert_eq!(check(&r, name)["passed"], true, "{name}");
    }
    let pairs = r["data"]["pairs"].as_array().unwrap();
    let iso = r["data"]["isomorphic"].as_array().unwrap();
    let rrwp = r["data"]["matrix"]["rrwp"].as_array().unwrap();
    let nope = r["data"]["matrix"]["nope"].as_array().unwrap();
    assert_eq!(pairs.len(), rrwp.len());
    for i in 0..pairs.len() {
        assert_eq!(nope[i], false);
        assert_eq!(rrwp[i], Value::Bool(iso[i] == false), "{}", pairs[i]);
    }
}

#[test]
fn unknown_family_is_a_usage_error_with_a_report() {
    let out = gdt(&["hierarchy", "--family", "srg"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json_of(&out);
    assert_eq!(r["passed"], false);
    assert!(r["error"].as_str().unwrap().contains("srg"));
}

#[test]
fn corrupted_gradient_fails_and_names_the_check() {
    let out = gdt(&["verify", "--only", "gradients", "--corrupt-gradient"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json_of(&out);
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|n| n.starts_with("gradient ")));
    assert!(check(&r, failed[0])["summary"].as_str().unwrap().contains("parameters off"));
}

#[test]
fn clean_gradients_pass() {
    let out = gdt(&["verify", "--only", "gradients"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn report_goes_to_out_even_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let p = path.to_str().unwrap();
    let out = gdt(&["wl", "--csl", "8,2,3", "--expect", "distinguishable", "--out", p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["command"], "wl");
    assert_eq!(r["passed"], false);
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(gdt(&["wl", "--csl", "8,2"]).status.code(), Some(2));
    assert_eq!(gdt(&["pe", "--csl", "8,2", "--kind", "bogus"]).status.code(), Some(2));
    assert_eq!(gdt(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn gen_is_deterministic_and_seed_dependent() {
    let a = gdt(&["gen", "--task", "bridges", "--n", "10", "--count", "4", "--seed", "3"]);
    let b = gdt(&["gen", "--task", "bridges", "--n", "10", "--count", "4", "--seed", "3"]);
    let c = gdt(&["gen", "--task", "bridges", "--n", "10", "--count", "4", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
}

#[test]
fn gen_first_offsets_into_the_same_sequence() {
    let all = gdt(&["gen", "--task", "mst", "--n", "8", "--count", "3"]);
    let tail = gdt(&["gen", "--task", "mst", "--n", "8", "--count", "2", "--first", "1"]);
    let all = String::from_utf8(all.stdout).unwrap();
    let tail = String::from_utf8(tail.stdout).unwrap();
    assert_eq!(all.lines().skip(1).collect::<Vec<_>>(), tail.lines().collect::<Vec<_>>());
}

#[test]
fn gen_csv_has_one_row_per_instance() {
    let out = gdt(&["gen", "--task", "flow", "--n", "8", "--count", "5", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("task,seed,n,edges,target"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with("flow,") && r.split(',').count() == 5));
}

#[test]
fn pe_csv_for_rwse_and_rrwp() {
    let out = gdt(&["pe", "--csl", "11,3", "--kind", "rwse", "--k", "4", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "node,f0,f1,f2,f3");
    assert_eq!(lines.len(), 12);
    // vertex-transitive: every node has the same return probabilities
    let first: Vec<&str> = lines[1].split(',').skip(1).collect();
    assert!(lines[2..].iter().all(|l| l.split(',').skip(1).collect::<Vec<_>>() == first));
    // no return after one step, 1/4 after two on a 4-regular graph
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(first[1].parse::<f64>().unwrap(), 0.25);

    let out = gdt(&["pe", "--csl", "5,2", "--kind", "rrwp", "--k", "3", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 25);
    assert!(text.starts_with("i,j,t0,t1,t2\n0,0,1,0,"));
}

#[test]
fn pe_reads_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let gen = gdt(&["gen", "--task", "cycles", "--n", "6", "--count", "1"]);
    let inst: Value = serde_json::from_slice(&gen.stdout).unwrap();
    std::fs::write(&path, inst["graph"].to_string()).unwrap();
    let out = gdt(&["pe", "--graph", path.to_str().unwrap(), "--kind", "lpe", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dump = json_of(&out);
    assert!(dump.is_object());
}

fn train_small(dir: &Path, seed: &str) -> (Output, std::path::PathBuf) {
    let ckpt = dir.join(format!("model-{seed}.json"));
    let out = gdt(&[
        "train",
        "--task",
        "bridges",
        "--pe",
        "rrwp",
        "--seed",
        seed,
        "--n",
        "8",
        "--d",
        "8",
        "--d-f",
        "16",
        "--layers",
        "1",
        "--heads",
        "2",
        "--pe-k",
        "4",
        "--steps",
        "60",
        "--batch-size",
        "2",
        "--train-graphs",
        "20",
        "--eval-graphs",
        "8",
        "--log-every",
        "20",
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    (out, ckpt)
}

#[test]
fn train_eval_fewshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (out, ckpt) = train_small(dir.path(), "5");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json_of(&out);
    assert_eq!(r["data"]["curve"].as_array().unwrap().len(), 3);
    let trained = r["metrics"][0]["value"].as_f64().unwrap();
    assert_eq!(r["metrics"][0]["metric"], "f1");

    // the checkpoint reproduces the in-distribution score
    let out = gdt(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--task",
        "bridges",
        "--n",
        "8",
        "--count",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_of(&out)["metrics"][0]["value"].as_f64().unwrap(), trained);

    let out = gdt(&[
        "fewshot",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--n",
        "8",
        "--graphs",
        "6",
        "--shots",
        "12",
        "--k",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = &json_of(&out)["data"]["result"];
    assert_eq!(res["queries"], 6 * 8 - 12);
    let acc = res["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn training_is_reproducible_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, ca) = train_small(dir.path(), "7");
    let sub = dir.path().join("again");
    std::fs::create_dir(&sub).unwrap();
    let (b, cb) = train_small(&sub, "7");
    let (ra, rb) = (json_of(&a), json_of(&b));
    assert_eq!(ra["metrics"], rb["metrics"]);
    assert_eq!(ra["data"]["curve"], rb["data"]["curve"]);
    assert_eq!(std::fs::read(ca).unwrap(), std::fs::read(cb).unwrap());
}

#[test]
fn fewshot_rejects_graph_level_targets() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = train_small(dir.path(), "1");
    let out = gdt(&["fewshot", "--checkpoint", ckpt.to_str().unwrap(), "--task", "mst", "--n", "8", "--graphs", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
