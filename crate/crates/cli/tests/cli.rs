use std::path::Path;

use av2t_cli::run_from;
use av2t_core::avsbench_io::media::read_mask;
use av2t_core::pipeline::RunManifest;
use av2t_core::MetricsReport;

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn av2t(args: &[&str]) -> i32 {
    run_from(std::iter::once("av2t").chain(args.iter().copied()))
}

fn synth(root: &Path, subset: &str, split: &str, clips: &str, frames: &str) {
    let code = av2t(&[
        "--seed",
        "3",
        "synth",
        "--root",
        &s(root),
        "--subset",
        subset,
        "--split",
        split,
        "--clips",
        clips,
        "--frames",
        frames,
        "--height",
        "32",
        "--width",
        "32",
        "--sample-rate",
        "800",
    ]);
    assert_eq!(code, 0);
}

const QUICK: [&str; 4] = [
    "--set",
    "train.epochs=2",
    "--set",
    "train.optimizer.learning_rate=0.02",
];

fn train(data: &Path, out: &Path) {
    let mut args = QUICK.to_vec();
    let (d, o) = (s(data), s(out));
    args.extend(["train", "--data", &d, "--out-dir", &o]);
    assert_eq!(av2t(&args), 0);
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth(root, "S4", "train", "2", "3");
    let ingest = |subset: &str, split: &str, root: &Path| {
        av2t(&[
            "ingest",
            "--root",
            &s(root),
            "--subset",
            subset,
            "--split",
            split,
            "--sample-rate",
            "800",
        ])
    };
    assert_eq!(ingest("S4", "train", root), 0);
    assert!(root.join("S4/train/manifest.json").is_file());
    assert!(root.join("S4/train/run_manifest.json").is_file());

    // A fully annotated clip filed under S4/train breaks the one-mask convention.
    synth(&root.join("other"), "S4", "val", "1", "3");
    std::fs::create_dir_all(root.join("bad/S4")).unwrap();
    std::fs::rename(root.join("other/S4/val"), root.join("bad/S4/train")).unwrap();
    assert_eq!(ingest("S4", "train", &root.join("bad")), 1);

    assert_eq!(ingest("S4", "train", &root.join("absent")), 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let code = av2t(&[
        "--set",
        "train.epoch=3",
        "synth",
        "--root",
        &s(dir.path()),
        "--subset",
        "S4",
        "--split",
        "test",
    ]);
    assert_eq!(code, 1);
    assert!(!dir.path().join("S4").exists());
    let missing = av2t(&[
        "--config",
        &s(&dir.path().join("none.toml")),
        "synth",
        "--root",
        &s(dir.path()),
        "--subset",
        "S4",
        "--split",
        "test",
    ]);
    assert_eq!(missing, 2);
}

fn mask_area(path: &Path) -> f64 {
    read_mask(path).unwrap().sum()
}

#[test]
fn train_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, "MS3", "train", "2", "3");
    synth(&root, "MS3", "test", "1", "3");
    let run = dir.path().join("run");
    train(&root.join("MS3/train"), &run);
    for f in [
        "model.av2t",
        "loss.csv",
        "run_manifest.json",
        "checkpoints/epoch_0001.av2t",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let ckpt = s(&run.join("model.av2t"));

    // Synthetic MS3 clips live under the "mixed" category folder.
    let clip_dir = std::fs::read_dir(root.join("MS3/test/mixed"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let clip_id = clip_dir.file_name().unwrap().to_string_lossy().into_owned();

    let mut areas = Vec::new();
    for (name, threshold) in [("lo", "0.2"), ("hi", "0.8")] {
        let out = dir.path().join(name);
        let code = av2t(&[
            "--threshold",
            threshold,
            "infer",
            "--checkpoint",
            &ckpt,
            "--input",
            &s(&clip_dir),
            "--out-dir",
            &s(&out),
            "--overlay",
        ]);
        assert_eq!(code, 0);
        let clip_out = out.join(&clip_id);
        let mut area = 0.0;
        for i in 1..=3 {
            let m = clip_out.join(format!("masks/{i:04}.png"));
            assert!(m.is_file(), "{}", m.display());
            assert!(clip_out.join(format!("overlays/{i:04}.png")).is_file());
            area += mask_area(&m);
        }
        assert_eq!(
            std::fs::read_dir(clip_out.join("masks")).unwrap().count(),
            3
        );
        areas.push(area);
    }
    assert!(areas[1] <= areas[0], "{areas:?}");

    let eval_out = dir.path().join("eval");
    let code = av2t(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--data",
        &s(&root.join("MS3/test")),
        "--out-dir",
        &s(&eval_out),
    ]);
    assert_eq!(code, 0);
    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("metrics.json")).unwrap())
            .unwrap();
    assert!((0.0..=100.0).contains(&report.m_j));
    assert_eq!(report.frames, 3);

    let absent = av2t(&[
        "eval",
        "--checkpoint",
        &s(&run.join("nope.av2t")),
        "--data",
        &s(&root.join("MS3/test")),
        "--out-dir",
        &s(&eval_out),
    ]);
    assert_eq!(absent, 2);
}

fn manifest_without_time(path: &Path) -> RunManifest {
    let mut m = RunManifest::read(path).unwrap();
    m.created_unix = 0;
    m
}

#[test]
fn identical_invocations_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, "S4", "train", "2", "3");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&root.join("S4/train"), &a);
    train(&root.join("S4/train"), &b);
    for f in ["model.av2t", "loss.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let (ma, mb) = (
        manifest_without_time(&a.join("run_manifest.json")),
        manifest_without_time(&b.join("run_manifest.json")),
    );
    assert_eq!(ma.loss_curve, mb.loss_curve);
    assert_eq!(ma.frozen_checksums_after, mb.frozen_checksums_after);
    assert_eq!(ma.config, mb.config);
}

#[test]
fn ablation_without_checkpoints_names_the_arm() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, "S4", "test", "1", "2");
    let code = av2t(&[
        "ablate",
        "--eval-data",
        &s(&root.join("S4/test")),
        "--out-dir",
        &s(&dir.path().join("out")),
        "--sources",
        "fused",
        "--adapters",
        "on",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn manifests_record_an_absolute_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth(&root, "S4", "test", "1", "2");
    let manifest = av2t_cli::commands::read_manifest(&root.join("S4/test")).unwrap();
    assert!(manifest.root.is_absolute());
    assert_eq!(manifest.root, root);
}
