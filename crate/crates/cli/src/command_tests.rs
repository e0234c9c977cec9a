//! End-to-end runs of every command on a tiny dataset.

use std::fs;
use std::path::Path;

use clap::Parser;
use slotrack::metrics::{GtVideo, PredSlot, PredictionFile, VideoPredictions};
use slotrack::synthdata::read_dataset;

use crate::{run, Cli, CliError};

fn slotrack(args: &[&str]) -> Result<(), CliError> {
    let mut full = vec!["slotrack"];
    full.extend_from_slice(args);
    run(Cli::try_parse_from(full).expect("arguments parse"))
}

fn text(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Small dataset plus a briefly trained checkpoint.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        slotrack(&["--seed", "2", "gen", "--out", &ws.data(), "--videos", "2", "--stills", "3"]).unwrap();
        slotrack(&["--seed", "2", "train", "--data", &ws.data(), "--out", &ws.path("run"), "--steps", "3"]).unwrap();
        ws
    }

    fn path(&self, name: &str) -> String {
        text(&self.dir.path().join(name))
    }

    fn data(&self) -> String {
        self.path("data")
    }

    fn checkpoint(&self) -> String {
        self.path("run/checkpoint.json")
    }

    fn predictions(&self, name: &str) -> PredictionFile {
        PredictionFile::from_json(&fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

fn mean_owta(report_dir: &str) -> f64 {
    let csv = fs::read_to_string(Path::new(report_dir).join("report.csv")).unwrap();
    let mean = csv.lines().find(|l| l.starts_with("all,all,mean,")).unwrap();
    mean.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn gen_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = text(&dir.path().join("d"));
    let args = ["gen", "--out", out.as_str(), "--videos", "1", "--stills", "1"];
    slotrack(&args).unwrap();
    let err = slotrack(&args).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("--force"), "{err}");
    let mut forced = args.to_vec();
    forced.push("--force");
    slotrack(&forced).unwrap();
}

#[test]
fn unknown_config_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[eval]\ncalibration_factr = 0.3\n").unwrap();
    let err = slotrack(&["--config", &text(&cfg), "gen", "--out", &text(&dir.path().join("d"))]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("calibration_factr"), "{err}");
}

#[test]
fn perfect_predictions_score_one() {
    let ws = Workspace::new();
    let dataset = read_dataset(Path::new(&ws.data())).unwrap();
    let videos: Vec<VideoPredictions> = dataset
        .split("eval")
        .map(|v| {
            let gt = GtVideo::from_scene(v);
            VideoPredictions {
                video_id: gt.video_id.clone(),
                frames: (0..gt.len())
                    .map(|f| {
                        gt.tracks
                            .iter()
                            .filter_map(|t| {
                                t.entries[f].get().map(|bbox| PredSlot {
                                    slot_id: t.track_id,
                                    bbox,
                                    objectness: 3.0,
                                })
                            })
                            .collect()
                    })
                    .collect(),
            }
        })
        .collect();
    let preds = ws.path("perfect.json");
    fs::write(&preds, PredictionFile::new(videos).to_json()).unwrap();
    let report = ws.path("report");
    slotrack(&["eval", "--predictions", &preds, "--data", &ws.data(), "--out", &report, "--no-constraint"]).unwrap();
    assert!((mean_owta(&report) - 1.0).abs() < 1e-12);
}

#[test]
fn track_eval_and_plot_at_four_times_fps() {
    let ws = Workspace::new();
    let preds = ws.path("preds.json");
    slotrack(&["track", "--checkpoint", &ws.checkpoint(), "--data", &ws.data(), "--out", &preds, "--fps", "4"]).unwrap();
    let dataset = read_dataset(Path::new(&ws.data())).unwrap();
    let file = ws.predictions("preds.json");
    assert_eq!(file.videos.len(), dataset.split("eval").count());
    for (p, v) in file.videos.iter().zip(dataset.split("eval")) {
        assert_eq!(p.video_id, v.video_id);
        assert_eq!(p.frames.len(), v.annotated.iter().filter(|&&a| a).count());
    }
    let report = ws.path("report");
    slotrack(&["eval", "--predictions", &preds, "--data", &ws.data(), "--out", &report]).unwrap();
    assert!((0.0..=1.0).contains(&mean_owta(&report)));
    let svg = ws.path("owta.svg");
    slotrack(&["plot", "--report", &format!("{report}/report.csv"), "--out", &svg]).unwrap();
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn fractional_fps_multiple_is_a_config_error() {
    let ws = Workspace::new();
    let err = slotrack(&["track", "--checkpoint", &ws.checkpoint(), "--data", &ws.data(), "--out", &ws.path("p.json"), "--fps", "1.5"]).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn baseline_and_sot_run() {
    let ws = Workspace::new();
    let (checkpoint, data, out) = (ws.checkpoint(), ws.data(), ws.path("b.json"));
    for extra in [&[][..], &["--random"][..]] {
        let mut args = vec!["baseline", "--checkpoint", &checkpoint, "--data", &data, "--out", &out, "--top-k", "4"];
        args.extend(extra);
        slotrack(&args).unwrap();
        assert!(ws.predictions("b.json").videos.iter().flat_map(|v| &v.frames).all(|f| f.len() <= 4));
    }
    let dataset = read_dataset(Path::new(&data)).unwrap();
    let v = dataset.split("eval").next().unwrap();
    let id = v.tracks[0].track_id.to_string();
    slotrack(&["track", "--checkpoint", &checkpoint, "--data", &data, "--out", &ws.path("s.json"), "--video", &v.video_id, "--sot", &id]).unwrap();
    let sot = ws.predictions("s.json");
    let slots: std::collections::BTreeSet<u32> = sot.videos[0].frames.iter().flatten().map(|s| s.slot_id).collect();
    assert_eq!(slots.len(), 1);
}

#[test]
fn slot_dump_with_high_floor_is_header_only() {
    let ws = Workspace::new();
    let out = ws.path("slots.csv");
    slotrack(&["slots", "--checkpoint", &ws.checkpoint(), "--data", &ws.data(), "--out", &out, "--floor", "0.99999"]).unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap(), "slot,frame,cx,cy,w,h,objectness\n");
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let ws = Workspace::new();
    let err = slotrack(&["track", "--checkpoint", &ws.path("nope.json"), "--data", &ws.data(), "--out", &ws.path("p.json")]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
