use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vosreid::io;

fn vosreid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vosreid")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, preset: &str) {
    let out = vosreid(&["synth", "--preset", preset, "--seed", "3", "--out", s(root)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_frames_labels_and_flow() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "occlusion");
    let seq = io::load_sequence(&dir.path().join("frames")).unwrap();
    assert_eq!(seq.len(), 16);
    let gt = io::load_masks(&dir.path().join("gt")).unwrap();
    assert_eq!(gt.len(), 16);
    assert_eq!(gt[0].max_label(), 1);
    let flows = io::numbered_files(&dir.path().join("flow"), "vsfl").unwrap();
    assert_eq!(flows.len(), 15);
    assert!(flows[0].ends_with("00001.vsfl"));

    let spec: vosreid::synth::SyntheticSpec =
        serde_json::from_str(&fs::read_to_string(dir.path().join("spec.json")).unwrap()).unwrap();
    let scene = vosreid::synth::generate(&spec, 3).unwrap();
    assert_eq!(scene.ground_truth, gt);
    assert_eq!(io::load_flow(&flows[4]).unwrap(), scene.flows[4]);
}

#[test]
fn run_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth(&root.join("scene"), "unoccluded");
    let out = vosreid(&[
        "run",
        "--frames",
        s(&root.join("scene/frames")),
        "--first-mask",
        s(&root.join("scene/gt/00000.png")),
        "--out",
        s(&root.join("run")),
        "--overlays",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let masks = io::load_masks(&root.join("run/masks")).unwrap();
    assert_eq!(masks.len(), 12);
    assert_eq!(io::numbered_files(&root.join("run/overlays"), "png").unwrap().len(), 12);
    let log = fs::read_to_string(root.join("run/iterations.log")).unwrap();
    assert!(log.lines().last().unwrap().starts_with("stop="));

    let out = vosreid(&[
        "eval",
        "--pred",
        s(&root.join("run/masks")),
        "--gt",
        s(&root.join("scene/gt")),
        "--out",
        s(&root.join("eval")),
    ]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    for row in ["Global Mean", "J Mean", "J Recall", "J Decay", "F Mean", "F Recall", "F Decay"] {
        assert!(table.contains(row), "missing {row}");
    }
    assert_eq!(fs::read_to_string(root.join("eval/eval.txt")).unwrap(), table);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("eval/eval.json")).unwrap()).unwrap();
    assert_eq!(json["instances"], 2);
    assert!(json["global_mean"].as_f64().unwrap() > 0.5);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "occlusion");
    let gt = dir.path().join("gt");
    let out = vosreid(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--out", s(&dir.path().join("e"))]);
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/eval.json")).unwrap()).unwrap();
    assert_eq!(json["global_mean"].as_f64().unwrap(), 1.0);
}

#[test]
fn missing_frame_is_named_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "occlusion");
    fs::remove_file(dir.path().join("frames/00004.png")).unwrap();
    let out = vosreid(&[
        "run",
        "--frames",
        s(&dir.path().join("frames")),
        "--first-mask",
        s(&dir.path().join("gt/00000.png")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing frame index 4"));
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "occlusion");
    fs::write(dir.path().join("bad.cfg"), "rho_reid = 0.7\nwarp_speed = 9\n").unwrap();
    let out = vosreid(&[
        "run",
        "--frames",
        s(&dir.path().join("frames")),
        "--first-mask",
        s(&dir.path().join("gt/00000.png")),
        "--config",
        s(&dir.path().join("bad.cfg")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("warp_speed"), "{err}");
}

#[test]
fn ablate_without_ground_truth_source_fails() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "occlusion");
    let out = vosreid(&[
        "ablate",
        "--frames",
        s(&dir.path().join("frames")),
        "--first-mask",
        s(&dir.path().join("gt/00000.png")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_thread_count_exits_1() {
    let out = Command::new(env!("CARGO_BIN_EXE_vosreid"))
        .args(["synth", "--out", "/tmp/unused-vosreid"])
        .env("VOSREID_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
