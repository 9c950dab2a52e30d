use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TUNE_A: &str = "X:1\nT:Reel\nM:4/4\nL:1/8\nK:G\nGABc d2e2|f2g2 a4|]\n";
const TUNE_B: &str = "X:2\nT:Waltz\nM:3/4\nL:1/4\nK:D\nDEF|A2B|d3|]\n";

fn omrkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omrkit")).args(args).current_dir(dir).output().unwrap()
}

fn rows(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn corpus(dir: &Path, pred: &[(&str, &str)], gold: &[(&str, &str)]) {
    for (sub, files) in [("pred", pred), ("gold", gold)] {
        fs::create_dir_all(dir.join(sub)).unwrap();
        for (name, text) in files {
            fs::write(dir.join(sub).join(name), text).unwrap();
        }
    }
}

#[test]
fn identical_directories_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let files = [("a.abc", TUNE_A), ("b.abc", TUNE_B)];
    corpus(dir.path(), &files, &files);
    for (metric, key) in [("tedn", "tedn"), ("omrned", "omr_ned")] {
        let out = omrkit(&["eval", metric, "--pred", "pred", "--gold", "gold", "-o", "r.jsonl"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = rows(&fs::read_to_string(dir.path().join("r.jsonl")).unwrap());
        assert!(report.iter().all(|r| r[key] == 0.0));
        let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.jsonl.summary.json")).unwrap()).unwrap();
        assert_eq!(summary["mean"], 0.0);
        assert_eq!(summary["count"], 2);
    }
}

#[test]
fn unconvertible_prediction_scores_one_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), &[("a.abc", TUNE_A), ("b.abc", "not a tune")], &[("a.abc", TUNE_A), ("b.abc", TUNE_B)]);
    let out = omrkit(&["eval", "tedn", "--pred", "pred", "--gold", "gold"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(report[1]["id"], "b");
    assert_eq!(report[1]["tedn"], 1.0);
    assert_eq!(report[1]["convert_failed"], true);
}

#[test]
fn unmatched_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), &[("a.abc", TUNE_A), ("extra.abc", TUNE_B)], &[("a.abc", TUNE_A), ("missing.abc", TUNE_B)]);
    let out = omrkit(&["eval", "er", "--pred", "pred", "--gold", "gold", "--summary", "s.json"], dir.path());
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("extra") && stderr.contains("missing"), "{stderr}");
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["metric"], "cer");
    assert_eq!(summary[0]["unmatched_pred"][0], "extra");
    assert_eq!(summary[0]["unmatched_gold"][0], "missing");
}

#[test]
fn single_file_pair_with_report_flag() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), &[("x.abc", TUNE_B)], &[("x.abc", TUNE_B)]);
    let out = omrkit(&["eval", "omrned", "--pred", "pred/x.abc", "--gold", "gold/x.abc", "--report", "r.jsonl"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = rows(&fs::read_to_string(dir.path().join("r.jsonl")).unwrap());
    assert_eq!(report.len(), 1);
    assert_eq!(report[0]["id"], "x");
    assert_eq!(report[0]["omr_ned"], 0.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.00%"));
    let mixed = omrkit(&["eval", "tedn", "--pred", "pred/x.abc", "--gold", "gold"], dir.path());
    assert_eq!(mixed.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(omrkit(&["eval", "tedn", "--pred"], dir.path()).status.code(), Some(1));
    assert_eq!(omrkit(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(omrkit(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(omrkit(&["eval", "tedn", "--pred", "nope", "--gold", "nope"], dir.path()).status.code(), Some(2));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_omrkit"))
        .args(["report", "summarize", "x.jsonl"])
        .env("OMRKIT_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn summarize_recomputes_report() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [0.5, 0.25, 1.0, 0.0].map(|s| format!("{{\"id\":\"x\",\"omr_ned\":{s}}}")).join("\n");
    fs::write(dir.path().join("r.jsonl"), lines + "\n{\"id\":\"y\",\"omr_ned\":null}\n").unwrap();
    let out = omrkit(&["report", "summarize", "r.jsonl"], dir.path());
    assert!(out.status.success());
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["metric"], "omr_ned");
    assert_eq!(s["mean"], 0.4375);
    assert_eq!(s["median"], 0.375);
    assert_eq!(s["count"], 4);
    assert_eq!(s["failures"], 1);
}

#[test]
fn canon_and_convert_directories() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), &[("a.abc", TUNE_A), ("b.abc", TUNE_B), ("bad.abc", "junk")], &[]);
    let out = omrkit(&["canon", "pred", "-o", "canon", "--mask"], dir.path());
    assert!(out.status.success());
    let b = fs::read_to_string(dir.path().join("canon/b.abc")).unwrap();
    assert!(b.contains("L:1/8") && b.contains("T:<|text|>"), "{b}");
    assert!(!dir.path().join("canon/bad.abc").exists());
    let out = omrkit(&["convert", "canon", "-o", "xml"], dir.path());
    assert!(out.status.success());
    let xml = fs::read_to_string(dir.path().join("xml/a.musicxml")).unwrap();
    assert!(xml.contains("<score-partwise version=\"4.0\">"));
}

#[test]
fn bpe_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), &[("a.abc", TUNE_A), ("b.abc", TUNE_B)], &[]);
    assert!(omrkit(&["bpe", "train", "--corpus", "pred", "--vocab-size", "270", "-o", "v.json"], dir.path()).status.success());
    let strict = omrkit(&["bpe", "train", "--corpus", "pred", "--vocab-size", "4097", "-o", "w.json", "--strict"], dir.path());
    assert_eq!(strict.status.code(), Some(2));
    let enc = omrkit(&["bpe", "encode", "--vocab", "v.json", "pred/a.abc", "-o", "ids.txt"], dir.path());
    assert!(enc.status.success());
    let dec = omrkit(&["bpe", "decode", "--vocab", "v.json", "ids.txt"], dir.path());
    assert_eq!(String::from_utf8(dec.stdout).unwrap(), TUNE_A);
}

#[test]
fn imgprep_segment_writes_tensor_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    image::RgbImage::from_pixel(100, 1000, image::Rgb([255, 255, 255])).save(dir.path().join("page.png")).unwrap();
    let out = omrkit(&["imgprep", "segment", "page.png", "-o", "page.f32"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("page.f32.json")).unwrap()).unwrap();
    let shape: Vec<u64> = sidecar["shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    // 1000 rows in 400-row bands with stride 300.
    assert_eq!(shape, [3, 4, 3, 448, 448]);
    let bytes = fs::metadata(dir.path().join("page.f32")).unwrap().len();
    assert_eq!(bytes, shape.iter().product::<u64>() * 4);
    let aug = omrkit(&["imgprep", "augment", "page.png", "--seed", "7", "-o", "aug.png"], dir.path());
    assert!(aug.status.success());
    let again = omrkit(&["imgprep", "augment", "page.png", "--seed", "7", "-o", "aug2.png"], dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read(dir.path().join("aug.png")).unwrap(), fs::read(dir.path().join("aug2.png")).unwrap());
}
