use std::path::Path;
use std::process::{Command, Output};

fn labelsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelsynth"))
        .args(args)
        .env_remove("LABELSYNTH_CONFIG")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = labelsynth(&["generate", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--maps"));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = labelsynth(&["generate", "--count", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--maps"));
}

#[test]
fn unreadable_input_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.nii.gz");
    let out = labelsynth(&["preprocess", "--in", s(&missing), "--out", s(&dir.path().join("o.nii"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn phantom_generate_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    let map = maps.join("phantom.nii.gz");
    assert_eq!(labelsynth(&["phantom", "--out", s(&map), "--size", "32"]).status.code(), Some(0));

    let cfg = dir.path().join("gen.toml");
    std::fs::write(&cfg, "crop_size = [24, 24, 24]\nseed = 5\n").unwrap();
    let out_dir = dir.path().join("out");
    let run = |extra: &[&str]| {
        let mut args = vec!["generate", "--config", s(&cfg), "--maps", s(&maps), "--count", "2", "--out", s(&out_dir)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_labelsynth")).args(&args).output().unwrap()
    };
    let first = run(&["--workers", "1"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    for i in 0..2 {
        for name in [format!("sample_{i:05}_image.nii.gz"), format!("sample_{i:05}_target.nii.gz"), format!("sample_{i:05}.manifest")] {
            assert!(out_dir.join(&name).is_file(), "{name}");
        }
    }
    assert!(out_dir.join("run_config.toml").exists());
    let config_text = std::fs::read_to_string(out_dir.join("run_config.toml")).unwrap();
    assert!(config_text.contains("seed = 5"));

    let image = std::fs::read(out_dir.join("sample_00000_image.nii.gz")).unwrap();
    let second = run(&[]);
    assert_eq!(second.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&second.stderr).contains("2 skipped"));
    assert_eq!(std::fs::read(out_dir.join("sample_00000_image.nii.gz")).unwrap(), image);
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("p.nii");
    labelsynth(&["phantom", "--out", s(&map), "--size", "24"]);
    let cfg = dir.path().join("env.toml");
    std::fs::write(&cfg, "crop_size = [16, 16, 16]\nseed = 77\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = Command::new(env!("CARGO_BIN_EXE_labelsynth"))
        .args(["generate", "--maps", s(&map), "--count", "1", "--out", s(&out_dir)])
        .env("LABELSYNTH_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("run_config.toml")).unwrap();
    assert!(text.contains("seed = 77"));
}

#[test]
fn bad_config_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("p.nii");
    labelsynth(&["phantom", "--out", s(&map), "--size", "16"]);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "a_rot = 20.0\nb_rot = -20.0\n").unwrap();
    let out = labelsynth(&["generate", "--config", s(&cfg), "--maps", s(&map), "--count", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a_rot"));
}

#[test]
fn evaluate_identical_segmentations() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("p.nii.gz");
    labelsynth(&["phantom", "--out", s(&map), "--size", "32"]);
    let csv = dir.path().join("m.csv");
    let out = labelsynth(&["evaluate", "--pred", s(&map), "--gt", s(&map), "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("label,dice,sd95_mm,volume_pred_mm3,volume_gt_mm3"));
    let mean = text.lines().last().unwrap();
    assert!(mean.starts_with("mean,1"), "{mean}");
}

#[test]
fn postprocess_keeps_clean_segmentation() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("p.nii.gz");
    labelsynth(&["phantom", "--out", s(&map), "--size", "32"]);
    let post = dir.path().join("post.nii.gz");
    let out = labelsynth(&["postprocess", "--in", s(&map), "--out", s(&post)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("m.csv");
    labelsynth(&["evaluate", "--pred", s(&post), "--gt", s(&map), "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().last().unwrap().starts_with("mean,1"));
}

#[test]
fn preprocess_and_enhance_labels() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("p.nii.gz");
    labelsynth(&["phantom", "--out", s(&map), "--size", "24"]);

    // A synthetic sample doubles as an intensity image for both commands.
    let cfg = dir.path().join("g.toml");
    std::fs::write(&cfg, "crop_size = [24, 24, 24]\nb_res = 1.0\n").unwrap();
    let gen = dir.path().join("gen");
    let out = labelsynth(&["generate", "--config", s(&cfg), "--maps", s(&map), "--count", "1", "--out", s(&gen)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let image = gen.join("sample_00000_image.nii.gz");
    let target = gen.join("sample_00000_target.nii.gz");

    let pre = dir.path().join("pre.nii");
    let out = labelsynth(&["preprocess", "--in", s(&image), "--out", s(&pre)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pre.exists());

    let sub = dir.path().join("sub.nii.gz");
    let mapping = dir.path().join("sub.csv");
    let out = labelsynth(&[
        "enhance-labels", "--image", s(&image), "--labels", s(&target), "--out", s(&sub), "--map", s(&mapping),
        "--bg-classes", "3", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&mapping).unwrap();
    assert!(text.starts_with("sub_label,parent_label"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",0")).count(), 3);

    // The subdivided map trains like the original once the mapping is given.
    let sub_dir = dir.path().join("sub");
    let out = labelsynth(&["generate", "--config", s(&cfg), "--maps", s(&sub), "--count", "1", "--out", s(&sub_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let out = labelsynth(&[
        "generate", "--config", s(&cfg), "--maps", s(&sub), "--count", "1", "--out", s(&sub_dir), "--sub-labels",
        s(&mapping),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
