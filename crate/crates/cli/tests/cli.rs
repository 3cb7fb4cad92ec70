use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meandim-lab"))
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&p);
    p
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().expect("binary runs")
}

#[test]
fn widim_on_line_writes_order_one() {
    let out = scratch("widim");
    let o = run(&out, &["widim", "--space", &data("line11.json"), "--eps", "0.35", "--lam", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("widim.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "order").expect("order column");
    assert_eq!(row[col], "1");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("widim.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 0);
    assert_eq!(json["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn towers_then_verify() {
    let out = scratch("towers");
    let o = run(&out, &["towers", "--alpha", "0.41421356237309515", "--n", "10", "--resolution", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let check = scratch("verify");
    let sys = out.join("system.json").to_string_lossy().into_owned();
    let tw = out.join("towers.json").to_string_lossy().into_owned();
    let v = run(&check, &["verify", "--system", &sys, "--towers", &tw]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
    let verdict: serde_json::Value = serde_json::from_slice(&std::fs::read(check.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["result"]["valid"], true);
}

#[test]
fn towers_mismatched_with_system_is_invalid() {
    let out = scratch("towers-small");
    let o = run(&out, &["towers", "--alpha", "0.41421356237309515", "--n", "10", "--resolution", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let check = scratch("verify-mismatch");
    let tw = out.join("towers.json").to_string_lossy().into_owned();
    let v = run(&check, &["verify", "--system", &data("golden200.json"), "--towers", &tw]);
    assert_eq!(v.status.code(), Some(3));
}

#[test]
fn unattainable_towers_exit_with_code_three_and_no_output() {
    let out = scratch("coarse");
    let o = run(&out, &["towers", "--alphas", "0.6180339887498949,0.41421356237309515", "--n", "6", "--resolution", "64"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resolution too coarse"));
    assert!(!out.exists());
}

#[test]
fn malformed_input_exits_with_code_two() {
    let dir = scratch("bad-input");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let out = dir.join("out");
    let o = run(&out, &["widim", "--space", &bad.to_string_lossy(), "--eps", "0.3", "--lam", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let out = scratch("bad-args");
    assert_eq!(run(&out, &["widim", "--eps", "0.3"]).status.code(), Some(2));
    assert_eq!(run(&out, &["genlin", "--enumerate", "3,2"]).status.code(), Some(2));
    assert_eq!(run(&out, &["genlin", "--enumerate", "2,3,3"]).status.code(), Some(2));
    assert_eq!(run(&out, &["towers", "--n", "3", "--resolution", "10"]).status.code(), Some(2));
}

#[test]
fn rational_rotation_is_rejected() {
    let out = scratch("rational");
    let o = run(&out, &["towers", "--alpha", "0.25", "--n", "3", "--resolution", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1/4"));
}

#[test]
fn seed_changes_random_outputs_and_reruns_match() {
    let args = ["generic", "--system", &data("golden200.json"), "--d", "1", "--seeds", "5"];
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    let c = scratch("seed-c");
    assert_eq!(bin().arg("--out").arg(&a).args(["--seed", "1"]).args(args).status().unwrap().code(), Some(0));
    assert_eq!(bin().arg("--out").arg(&b).args(["--seed", "1"]).args(args).status().unwrap().code(), Some(0));
    assert_eq!(bin().arg("--out").arg(&c).args(["--seed", "2"]).args(args).status().unwrap().code(), Some(0));
    let read = |p: &Path| std::fs::read(p.join("generic.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn output_directory_does_not_enter_the_digest() {
    let a = scratch("digest-a");
    let b = scratch("digest-b");
    for d in [&a, &b] {
        assert_eq!(run(d, &["genlin", "--pattern", "[[1,2],[3,1]]", "--trials", "50"]).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.join("genlin.json")).unwrap(), std::fs::read(b.join("genlin.json")).unwrap());
}
