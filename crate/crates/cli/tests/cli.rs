use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "model": {"dim": 8, "heads": 2, "ffn_dim": 16, "decoder_layers": 2, "latent_queries": 3,
            "strides": [4, 8], "text_layers": 1},
  "data": {"canvas": 16, "train_count": 6, "eval_count": 3, "max_objects": 2, "min_radius": 3, "max_radius": 5},
  "train": {"seg_batch": 3, "itp_batch": 3, "ref_batch": 3, "itp_ratio": [1, 1]},
  "eval": {"max_caption_len": 6}
}"#;

fn xdec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdec"))
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    assert!(text.starts_with("error: "), "{text}");
    text
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("config.json"), CONFIG).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn config(&self) -> String {
        self.p("config.json")
    }

    /// Dataset plus a checkpoint trained for `steps` steps.
    fn trained(&self, steps: usize) -> String {
        ok_json(&xdec(&["datagen", "--config", &self.config(), "--out", &self.p("data")]));
        let train = self.p("data/train");
        let out = ok_json(&xdec(&[
            "train", "--config", &self.config(), "--data", &train, "--steps", &steps.to_string(), "--out", &self.p("run"),
        ]));
        out["checkpoint"].as_str().unwrap().to_string()
    }

    fn image(&self) -> String {
        self.p("data/eval/images/000000.png")
    }
}

#[test]
fn datagen_writes_splits_and_refuses_to_clobber() {
    let f = Fixture::new();
    let out = ok_json(&xdec(&["datagen", "--config", &f.config(), "--out", &f.p("data")]));
    assert_eq!(out["train"]["samples"], 6);
    assert_eq!(out["eval"]["samples"], 3);
    let again = xdec(&["datagen", "--config", &f.config(), "--out", &f.p("data")]);
    assert!(error_line(&again).starts_with("error: input:"));
    assert_eq!(again.status.code(), Some(1));
    ok_json(&xdec(&["datagen", "--config", &f.config(), "--out", &f.p("data"), "--force"]));
    ok_json(&xdec(&["datagen", "--config", &f.config(), "--out", &f.p("data2")]));
    let m1 = std::fs::read(f.root.join("data/train/manifest.json")).unwrap();
    let m2 = std::fs::read(f.root.join("data2/train/manifest.json")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn canvas_must_divide_by_the_stride() {
    let f = Fixture::new();
    let bad = CONFIG.replace("\"canvas\": 16", "\"canvas\": 30");
    std::fs::write(f.root.join("bad.json"), bad).unwrap();
    let out = xdec(&["datagen", "--config", &f.p("bad.json"), "--out", &f.p("d")]);
    assert!(error_line(&out).contains("divisible"));
}

#[test]
fn zero_steps_writes_only_the_initial_checkpoint() {
    let f = Fixture::new();
    let ckpt = f.trained(0);
    assert!(Path::new(&ckpt).exists());
    let log = std::fs::read_to_string(f.root.join("run/train_log.jsonl")).unwrap();
    assert!(log.is_empty());
}

#[test]
fn train_eval_infer_compose() {
    let f = Fixture::new();
    let ckpt = f.trained(2);
    let log = std::fs::read_to_string(f.root.join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["losses"]["total"].as_f64().unwrap().is_finite());

    let report = ok_json(&xdec(&["eval", "--checkpoint", &ckpt, "--data", &f.p("data/eval")]));
    for key in ["pq", "sq", "rq", "miou", "map50", "ir_at_1", "tr_at_1", "caption_exact", "ciou"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} {v}");
    }
    let bad = xdec(&["eval", "--checkpoint", &ckpt, "--data", &f.p("data/eval"), "--tasks", "panoptic,nope"]);
    assert!(error_line(&bad).starts_with("error: usage:"));
    assert_eq!(bad.status.code(), Some(2));

    let caption = ok_json(&xdec(&["infer", "--checkpoint", &ckpt, "--image", &f.image(), "--task", "caption"]));
    assert!(caption["caption"].is_string());
    let refer = xdec(&["infer", "--checkpoint", &ckpt, "--image", &f.image(), "--task", "refer"]);
    assert!(error_line(&refer).contains("--phrase"));
    assert_eq!(refer.status.code(), Some(2));

    let overlay = f.p("overlay.png");
    ok_json(&xdec(&[
        "infer", "--checkpoint", &ckpt, "--image", &f.image(), "--task", "panoptic", "--overlay", &overlay,
    ]));
    let img = image::open(&overlay).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));

    let vqa = ok_json(&xdec(&[
        "infer", "--checkpoint", &ckpt, "--image", &f.image(), "--task", "vqa", "--question", "what color is the circle",
    ]));
    assert!(vqa["answer"].is_string());

    let one = ok_json(&xdec(&[
        "compose", "--checkpoint", &ckpt, "--mode", "region-retrieval", "--image", &f.image(), "--phrase", "the circle",
    ]));
    assert_eq!(one["image_index"], 0);
    let args = ["compose", "--checkpoint", &ckpt, "--mode", "refer-caption", "--image", &f.image(), "--phrase", "circle"];
    let a = xdec(&args);
    let b = xdec(&args);
    assert_eq!(ok_json(&a), ok_json(&b));
}

#[test]
fn missing_files_and_bad_flags() {
    let f = Fixture::new();
    let out = xdec(&["eval", "--checkpoint", &f.p("nothing.xdec")]);
    assert!(error_line(&out).starts_with("error: io:"));
    let out = xdec(&["train", "--bogus"]);
    assert!(error_line(&out).starts_with("error: usage:"));
    assert_eq!(out.status.code(), Some(2));
}
