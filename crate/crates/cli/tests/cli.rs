use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use visdiag::dataset::{predictions_to_json, write_ground_truth, write_predictions};
use visdiag::synth::{synthetic_ground_truth, Census, SceneSpec};
use visdiag::{evaluate, CategoryId, Dataset, EvalConfig, ErrorKind, TrackPrediction};

fn visdiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visdiag"))
        .args(args)
        .env_remove("VISDIAG_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    gt: PathBuf,
    dataset: Dataset,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let dataset = synthetic_ground_truth(&SceneSpec::uniform(5, 12, 2..=3, 20, 32, 48, 3));
    let gt = dir.path().join("gt.json");
    write_ground_truth(&dataset, &gt).unwrap();
    Fixture { dir, gt, dataset }
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn spec(&self, name: &str, json: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, json).unwrap();
        p
    }

    fn synth(&self, spec: &Path, out: &Path, extra: &[&str]) -> Output {
        let mut args = vec!["synth", s(&self.gt), s(spec), "--out", s(out)];
        args.extend_from_slice(extra);
        visdiag(&args)
    }
}

fn replayed(d: &Dataset) -> Vec<TrackPrediction> {
    d.gt_tracks
        .iter()
        .map(|g| TrackPrediction {
            video_id: g.video_id,
            category_id: g.category_id,
            score: 1.0,
            masks: g.masks.clone(),
        })
        .collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn empty_spec_writes_ground_truth_replay() {
    let f = fixture();
    let spec = f.spec("spec.json", "{}");
    let out = f.path("pred.json");
    let o = f.synth(&spec, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), predictions_to_json(&replayed(&f.dataset)));
    assert!(f.path("pred.census.json").exists());
}

#[test]
fn miss_spec_drops_k_predictions() {
    let f = fixture();
    let spec = f.spec("spec.json", r#"{"counts": {"Miss": 4}}"#);
    let out = f.path("pred.json");
    assert!(f.synth(&spec, &out, &[]).status.success());
    let preds = read_json(&out);
    assert_eq!(preds.as_array().unwrap().len(), f.dataset.gt_tracks.len() - 4);
}

#[test]
fn seeded_rerun_is_identical() {
    let f = fixture();
    let spec = f.spec("spec.json", r#"{"counts": {"Spat": 2, "Bkg": 3, "Dup": 2}}"#);
    let (a, b, c) = (f.path("a.json"), f.path("b.json"), f.path("c.json"));
    assert!(f.synth(&spec, &a, &["--seed", "11"]).status.success());
    assert!(f.synth(&spec, &b, &["--seed", "11"]).status.success());
    assert!(f.synth(&spec, &c, &["--seed", "12"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(f.path("a.census.json")).unwrap(), fs::read(f.path("b.census.json")).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn replay_evaluates_to_one_hundred_with_zero_weights() {
    let f = fixture();
    let pred = f.path("pred.json");
    write_predictions(&replayed(&f.dataset), &pred).unwrap();
    let out = f.path("report");
    let o = visdiag(&["evaluate", s(&f.gt), s(&pred), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("mAP") && l.trim_end().ends_with("100.00")));
    let w = read_json(&out.join("weights.json"));
    for (_, v) in w["weights"].as_object().unwrap() {
        assert_eq!(v.as_f64(), Some(0.0));
    }
    for name in [
        "summary.json",
        "errors.jsonl",
        "ranges.json",
        "metrics.csv",
        "weights.svg",
        "ranges.svg",
        "timings.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["map"].as_f64(), Some(100.0));
    assert_eq!(summary["manifest"]["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_prediction_file_exits_2_without_outputs() {
    let f = fixture();
    let out = f.path("report");
    let o = visdiag(&["evaluate", s(&f.gt), s(&f.path("nope.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!o.stderr.is_empty());
}

#[test]
fn invalid_predictions_exit_2_with_the_report_on_stderr() {
    let f = fixture();
    let pred = f.path("pred.json");
    fs::write(
        &pred,
        r#"[{"video_id": 999, "category_id": 1, "score": 0.5, "segmentations": [null]}]"#,
    )
    .unwrap();
    let out = f.path("report");
    let o = visdiag(&["evaluate", s(&f.gt), s(&pred), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("999"));
    assert!(!out.exists());
}

#[test]
fn bad_flags_exit_2() {
    let f = fixture();
    let pred = f.path("pred.json");
    write_predictions(&replayed(&f.dataset), &pred).unwrap();
    for flags in [
        &["--thr-f", "1.5"][..],
        &["--thr-b", "0.6"],
        &["--iou-sweep", "0.9:0.05:0.5"],
        &["--range-bins", "16,1"],
        &["--temporal-length-mode", "sometimes"],
        &["--format", "pdf"],
        &["--max-dets", "0"],
    ] {
        let out = f.path("report");
        let mut args = vec!["evaluate", s(&f.gt), s(&pred), "--out", s(&out)];
        args.extend_from_slice(flags);
        let o = visdiag(&args);
        assert_eq!(o.status.code(), Some(2), "{flags:?}");
        assert!(!out.exists());
    }
}

#[test]
fn deterministic_reports_are_byte_identical_across_worker_counts() {
    let f = fixture();
    let spec = f.spec(
        "spec.json",
        r#"{"seed": 3, "tp_score": [0.4, 1.0], "counts": {"Cls": 2, "Spat": 2, "Temp": 1, "Bkg": 4, "Miss": 1}}"#,
    );
    let pred = f.path("pred.json");
    assert!(f.synth(&spec, &pred, &[]).status.success());
    let run = |name: &str, threads: &str| {
        let out = f.path(name);
        let o = visdiag(&[
            "evaluate",
            s(&f.gt),
            s(&pred),
            "--out",
            s(&out),
            "--deterministic",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b, c) = (run("a", "1"), run("b", "1"), run("c", "4"));
    assert!(!a.join("timings.json").exists());
    for name in [
        "summary.json",
        "errors.jsonl",
        "weights.json",
        "ranges.json",
        "metrics.csv",
        "weights.svg",
        "ranges.svg",
    ] {
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(bytes, fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(bytes, fs::read(c.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn weights_match_double_evaluation() {
    let f = fixture();
    let spec = f.spec(
        "spec.json",
        r#"{"seed": 8, "tp_score": [0.3, 1.0], "counts": {"Cls": 2, "Dup": 2, "Bkg": 3, "Miss": 2}}"#,
    );
    let pred = f.path("pred.json");
    assert!(f.synth(&spec, &pred, &[]).status.success());
    let out = f.path("report");
    let o = visdiag(&["evaluate", s(&f.gt), s(&pred), "--out", s(&out), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = read_json(&out.join("weights.json"));
    let census: Census = serde_json::from_str(&fs::read_to_string(f.path("pred.census.json")).unwrap()).unwrap();

    let base = Dataset::load(&f.gt, &pred).unwrap();
    let config = EvalConfig::default();
    let ap50 = |d: &Dataset| evaluate(d, &config).unwrap().ap50.unwrap();
    let base_ap = ap50(&base);
    let injected = |kind: ErrorKind| census.injections.iter().filter(move |i| i.kind == kind);

    // Bkg and Dup: delete the injected predictions
    for kind in [ErrorKind::Bkg, ErrorKind::Dup] {
        let drop: Vec<usize> = injected(kind).filter_map(|i| i.prediction).collect();
        let mut d = base.clone();
        d.predictions = (0..d.predictions.len())
            .filter(|p| !drop.contains(p))
            .map(|p| d.predictions[p].clone())
            .collect();
        let want = ap50(&d) - base_ap;
        let got = w["weights"][kind.name()].as_f64().unwrap();
        assert!((got - want).abs() < 1e-9, "{kind}: {got} vs {want}");
    }
    // Cls: give the copies their track's class back
    let mut d = base.clone();
    for i in injected(ErrorKind::Cls) {
        let g = d.gt_tracks.iter().find(|g| Some(g.id) == i.gt_id).unwrap();
        let category: CategoryId = g.category_id;
        d.predictions[i.prediction.unwrap()].category_id = category;
    }
    let got = w["weights"]["Cls"].as_f64().unwrap();
    assert!((got - (ap50(&d) - base_ap)).abs() < 1e-9);
    // Miss: remove the dropped tracks from the ground truth
    let mut d = base.clone();
    let missed: Vec<_> = injected(ErrorKind::Miss).map(|i| i.gt_id).collect();
    d.gt_tracks.retain(|g| !missed.contains(&Some(g.id)));
    let got = w["weights"]["Miss"].as_f64().unwrap();
    assert!((got - (ap50(&d) - base_ap)).abs() < 1e-9);
}

#[test]
fn thread_count_comes_from_the_environment() {
    let f = fixture();
    let pred = f.path("pred.json");
    write_predictions(&replayed(&f.dataset), &pred).unwrap();
    let out = f.path("report");
    let o = Command::new(env!("CARGO_BIN_EXE_visdiag"))
        .args(["evaluate", s(&f.gt), s(&pred), "--out", s(&out), "--format", "json"])
        .env("VISDIAG_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read_json(&out.join("timings.json"))["threads"].as_u64(), Some(3));
}
