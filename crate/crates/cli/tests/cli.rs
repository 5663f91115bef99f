use std::path::Path;
use std::process::{Command, Output};

use gisr_core::io::{load_dataset, TensorContainer};

fn gisr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gisr"))
        .args(args)
        .current_dir(dir)
        .env_remove("GISR_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SYNTH: &[&str] = &[
    "synth", "--pairs", "8", "--size", "16", "--ratio", "2", "--bands", "3",
];

fn synth_to(dir: &Path, name: &str, seed: &str) {
    let mut args = SYNTH.to_vec();
    args.extend(["--out", name, "--seed", seed]);
    ok(&gisr(&args, dir));
}

fn train_tiny(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "--dataset",
        "d.gisr",
        "--out-dir",
        "run",
        "--channels",
        "4",
    ];
    args.extend(extra);
    for (flag, default) in [("--epochs", "2"), ("--stages", "1")] {
        if !extra.contains(&flag) {
            args.extend([flag, default]);
        }
    }
    ok(&gisr(&args, dir));
}

#[test]
fn synth_writes_three_entries_per_pair_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = gisr(
        &[
            "synth", "--out", "a.gisr", "--pairs", "8", "--size", "32", "--ratio", "2",
        ],
        dir.path(),
    );
    ok(&out);
    let c = TensorContainer::read(dir.path().join("a.gisr")).unwrap();
    assert_eq!(c.len(), 24);
    assert_eq!(c.entries()[0].name, "pair0.L");

    synth_to(dir.path(), "b.gisr", "5");
    synth_to(dir.path(), "c.gisr", "5");
    let b = std::fs::read(dir.path().join("b.gisr")).unwrap();
    assert_eq!(b, std::fs::read(dir.path().join("c.gisr")).unwrap());
}

#[test]
fn seed_env_fallback_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let mut args = SYNTH.to_vec();
        args.extend(["--out", name]);
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gisr"));
        cmd.args(&args)
            .current_dir(dir.path())
            .env_remove("GISR_SEED");
        if let Some(e) = env {
            cmd.env("GISR_SEED", e);
        }
        ok(&cmd.output().unwrap());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let flag7 = run("f.gisr", None, Some("7"));
    assert_eq!(run("e.gisr", Some("7"), None), flag7);
    assert_eq!(run("g.gisr", Some("3"), Some("7")), flag7);
    assert_ne!(run("h.gisr", Some("3"), None), flag7);
}

#[test]
fn indivisible_size_names_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = gisr(
        &["synth", "--out", "x.gisr", "--size", "30", "--ratio", "4"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let e = stderr(&out);
    assert!(e.contains("30") && e.contains('4'), "{e}");
    assert!(!dir.path().join("x.gisr").exists());
}

#[test]
fn usage_and_missing_files_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gisr(&["--bogus"], dir.path()).status.code(), Some(1));
    let out = gisr(&["train", "--dataset", "nope.gisr"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.gisr"));
    assert_eq!(gisr(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"data": {"pairz": 3}}"#).unwrap();
    let out = gisr(&["--config", "c.json", "synth"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pairz"));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"data": {"pairs": 5, "size": 16}, "model": {"ratio": 2, "target_bands": 2},
            "paths": {"dataset": "from_config.gisr"}}"#,
    )
    .unwrap();
    ok(&gisr(&["--config", "c.json", "synth"], dir.path()));
    let d = load_dataset(dir.path().join("from_config.gisr")).unwrap();
    assert_eq!(d.len(), 5);
    assert_eq!(d[0].lr.shape(), &[2, 8, 8]);

    ok(&gisr(
        &[
            "--config", "c.json", "synth", "--pairs", "2", "--out", "o.gisr",
        ],
        dir.path(),
    ));
    assert_eq!(load_dataset(dir.path().join("o.gisr")).unwrap().len(), 2);
}

#[test]
fn train_emits_checkpoints_log_and_config() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "1");
    train_tiny(dir.path(), &[]);
    let run = dir.path().join("run");
    for f in ["best.gisr", "last.gisr", "log.csv", "config.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_psnr,lr");
    assert_eq!(lines.len(), 4);
    let best = TensorContainer::read(run.join("best.gisr")).unwrap();
    assert!(!best.entries().iter().any(|e| e.name.starts_with("adam.")));
    let last = TensorContainer::read(run.join("last.gisr")).unwrap();
    assert!(last.entries().iter().any(|e| e.name.starts_with("adam.m.")));
}

fn stored_model(dir: &Path) -> (f64, f64, f64) {
    let c = TensorContainer::read(dir.join("run/best.gisr")).unwrap();
    let m = c.require("meta.model_config").unwrap().values::<f64>();
    (m[0], m[7], m[8])
}

#[test]
fn stage_and_ablation_flags_reach_the_model() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "2");
    train_tiny(dir.path(), &["--stages", "2", "--epochs", "1"]);
    assert_eq!(stored_model(dir.path()), (2.0, 1.0, 1.0));
    train_tiny(dir.path(), &["--epochs", "1", "--no-memory"]);
    assert_eq!(stored_model(dir.path()), (1.0, 0.0, 1.0));
    train_tiny(dir.path(), &["--epochs", "1", "--no-cnl"]);
    assert_eq!(stored_model(dir.path()), (1.0, 1.0, 0.0));
}

#[test]
fn resume_continues_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "3");
    let p = dir.path();
    ok(&gisr(
        &[
            "train",
            "--dataset",
            "d.gisr",
            "--out-dir",
            "full",
            "--epochs",
            "2",
            "--stages",
            "1",
            "--channels",
            "4",
        ],
        p,
    ));
    ok(&gisr(
        &[
            "train",
            "--dataset",
            "d.gisr",
            "--out-dir",
            "part",
            "--epochs",
            "1",
            "--stages",
            "1",
            "--channels",
            "4",
        ],
        p,
    ));
    ok(&gisr(
        &[
            "train",
            "--dataset",
            "d.gisr",
            "--out-dir",
            "part",
            "--epochs",
            "2",
            "--resume",
            "part/last.gisr",
        ],
        p,
    ));
    for f in ["last.gisr", "log.csv"] {
        assert_eq!(
            std::fs::read(p.join("full").join(f)).unwrap(),
            std::fs::read(p.join("part").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_reports_model_and_bicubic_columns_with_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "4");
    train_tiny(dir.path(), &["--epochs", "1"]);
    let args = [
        "eval",
        "--checkpoint",
        "run/best.gisr",
        "--dataset",
        "d.gisr",
    ];
    let csv = ok(&gisr(&args, dir.path()));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 8 + 1);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 15);
    assert!(header.contains(&"psnr") && header.contains(&"bicubic_psnr"));
    assert!(lines[9].starts_with("mean,"));
    assert_eq!(ok(&gisr(&args, dir.path())), csv);

    let val_only = ok(&gisr(
        &[
            "eval",
            "--checkpoint",
            "run/best.gisr",
            "--dataset",
            "d.gisr",
            "--split",
            "val",
        ],
        dir.path(),
    ));
    assert_eq!(val_only.lines().count(), 1 + 2 + 1);
}

#[test]
fn eval_rejects_mismatched_bands_by_key() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "5");
    train_tiny(dir.path(), &["--epochs", "1"]);
    ok(&gisr(
        &[
            "synth",
            "--out",
            "four.gisr",
            "--pairs",
            "2",
            "--size",
            "16",
            "--ratio",
            "2",
            "--bands",
            "4",
        ],
        dir.path(),
    ));
    let out = gisr(
        &[
            "eval",
            "--checkpoint",
            "run/best.gisr",
            "--dataset",
            "four.gisr",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("target_bands"), "{}", stderr(&out));
}

#[test]
fn infer_writes_scaled_png_residual_and_container() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "6");
    train_tiny(dir.path(), &["--epochs", "1"]);
    ok(&gisr(
        &[
            "infer",
            "--checkpoint",
            "run/best.gisr",
            "--dataset",
            "d.gisr",
            "--index",
            "2",
            "--out-dir",
            "inf",
        ],
        dir.path(),
    ));
    let inf = dir.path().join("inf");
    let png = image::open(inf.join("pred.png")).unwrap();
    assert_eq!((png.width(), png.height()), (16, 16));
    assert!(png.color().has_color());
    let full = TensorContainer::read(inf.join("pred.gisr")).unwrap();
    assert_eq!(full.require("H").unwrap().dims, vec![3, 16, 16]);
    assert!(inf.join("residual.png").exists());
}

#[test]
fn infer_from_pngs_and_gt_against_itself_is_black() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth_to(p, "d.gisr", "7");
    train_tiny(p, &["--epochs", "1"]);
    ok(&gisr(
        &[
            "infer",
            "--checkpoint",
            "run/best.gisr",
            "--dataset",
            "d.gisr",
            "--out-dir",
            "a",
        ],
        p,
    ));
    let pred = gisr_core::io::TensorContainer::read(p.join("a/pred.gisr")).unwrap();
    let mut only = TensorContainer::new();
    only.push(pred.require("H").unwrap().clone()).unwrap();
    only.write(p.join("h.gisr")).unwrap();

    let pair = &load_dataset(p.join("d.gisr")).unwrap()[0];
    let mut l = TensorContainer::new();
    l.insert("L", &pair.lr).unwrap();
    l.write(p.join("l.gisr")).unwrap();
    let mut g = TensorContainer::new();
    g.insert("P", &pair.guide).unwrap();
    g.write(p.join("g.gisr")).unwrap();

    ok(&gisr(
        &[
            "infer",
            "--checkpoint",
            "run/best.gisr",
            "--lr",
            "l.gisr",
            "--guide",
            "g.gisr",
            "--gt",
            "h.gisr",
            "--out-dir",
            "b",
        ],
        p,
    ));
    let res = image::open(p.join("b/residual.png")).unwrap().to_rgb8();
    assert!(res.pixels().all(|px| px.0 == [0, 0, 0]));
    let round = image::open(p.join("b/pred.png")).unwrap();
    assert_eq!((round.width(), round.height()), (16, 16));

    // PNG input: bands (2, 1, 0) as RGB, so it reads back as the same bands.
    let v = pair.lr.to_vec();
    let png = image::RgbImage::from_fn(8, 8, |x, y| {
        let at = |b: usize| (v[b * 64 + (y * 8 + x) as usize] * 255.0).round() as u8;
        image::Rgb([at(2), at(1), at(0)])
    });
    png.save(p.join("l.png")).unwrap();
    ok(&gisr(
        &[
            "infer",
            "--checkpoint",
            "run/best.gisr",
            "--lr",
            "l.png",
            "--guide",
            "g.gisr",
            "--out-dir",
            "c",
        ],
        p,
    ));
    let up = image::open(p.join("c/pred.png")).unwrap();
    assert_eq!((up.width(), up.height()), (16, 16));
}

#[test]
fn infer_rejects_band_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth_to(p, "d.gisr", "8");
    train_tiny(p, &["--epochs", "1"]);
    let pair = &load_dataset(p.join("d.gisr")).unwrap()[0];
    let mut l = TensorContainer::new();
    let two = gisr_tensor::Tensor::from_vec(&[2, 8, 8], pair.lr.to_vec()[..128].to_vec()).unwrap();
    l.insert("L", &two).unwrap();
    l.write(p.join("l.gisr")).unwrap();
    let mut g = TensorContainer::new();
    g.insert("P", &pair.guide).unwrap();
    g.write(p.join("g.gisr")).unwrap();
    let out = gisr(
        &[
            "infer",
            "--checkpoint",
            "run/best.gisr",
            "--lr",
            "l.gisr",
            "--guide",
            "g.gisr",
            "--out-dir",
            "o",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bands"), "{}", stderr(&out));
}

#[test]
fn gradcheck_single_op_and_unknown_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&gisr(&["gradcheck", "--op", "conv2d"], dir.path()));
    let rows: Vec<&str> = out.lines().filter(|l| l.ends_with("pass")).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("conv2d "));
    let bad = gisr(&["gradcheck", "--op", "nope"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("conv2d"));
}

#[test]
fn gradcheck_full_suite_lists_each_check_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&gisr(&["gradcheck"], dir.path()));
    for name in gisr_core::gradcheck_suite::CHECK_NAMES {
        let n = out
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(name))
            .count();
        assert_eq!(n, 1, "{name}");
    }
    assert!(out.contains(&format!(
        "all {} checks passed",
        gisr_core::gradcheck_suite::CHECK_NAMES.len()
    )));
}

#[test]
fn divergent_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    synth_to(dir.path(), "d.gisr", "9");
    let out = gisr(
        &[
            "train",
            "--dataset",
            "d.gisr",
            "--out-dir",
            "run",
            "--epochs",
            "3",
            "--stages",
            "1",
            "--channels",
            "4",
            "--lr",
            "1e30",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));
}
