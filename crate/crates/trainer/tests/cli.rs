use std::path::Path;
use std::process::{Command, Output};

fn smsnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smsnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn generate_tiny(cwd: &Path) {
    let out = smsnet(
        &["generate", "--out", "data", "--smoke", "--size", "16", "--slices", "4", "--directions", "6"],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const TINY: &[&str] = &["--epochs", "1", "--base-channels", "4", "--depth", "3", "--batch-size", "4"];

#[test]
fn train_evaluate_and_export_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    generate_tiny(cwd);

    let mut args = vec!["train", "--data", "data", "--model", "2D-Single-Mag", "--name", "tiny"];
    args.extend_from_slice(TINY);
    let out = smsnet(&args, cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = cwd.join("runs/tiny");
    for f in ["config.toml", "log.csv", "report.md", "checkpoints/best/manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read_to_string(run.join("report.md")).unwrap();
    assert!(report.contains("2D-Single-Mag") && report.contains("Input (uncorrected)"));

    let out = smsnet(
        &["evaluate", "--checkpoint", "runs/tiny/checkpoints/best", "--data", "data", "--csv", "m.csv"],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("| Model |"));
    assert!(cwd.join("m.csv").exists());

    let out = smsnet(
        &["export-maps", "--checkpoint", "runs/tiny/checkpoints/best", "--data", "data", "--out", "maps"],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pngs = std::fs::read_dir(cwd.join("maps"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    // one test heart of 4 slices x {pred, clean, input} x 4 maps
    assert_eq!(pngs, 4 * 3 * 4);
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    generate_tiny(cwd);
    std::fs::write(
        cwd.join("cfg.toml"),
        "model = \"2D-All-Comp\"\nbase_channels = 4\ndepth = 3\nepochs = 5\nbatch_size = 4\n",
    )
    .unwrap();
    let out = smsnet(&["train", "--data", "data", "--config", "cfg.toml", "--epochs", "1"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = std::fs::read_to_string(cwd.join("runs/2D-All-Comp/config.toml")).unwrap();
    assert!(saved.contains("epochs = 1"));
    let log = std::fs::read_to_string(cwd.join("runs/2D-All-Comp/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    generate_tiny(cwd);
    std::fs::write(cwd.join("bad.toml"), "epochz = 3\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--data", "data", "--model", "4D-All-Mag"],
        vec!["train", "--data", "data", "--batch-size", "1"],
        vec!["train", "--data", "data", "--config", "bad.toml"],
        vec!["train", "--data", "data", "--config", "missing.toml"],
        vec!["train", "--data", "nowhere"],
        vec!["generate", "--out", "d2", "--alpha-max", "1.5"],
        vec!["evaluate", "--checkpoint", "nowhere", "--data", "data"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = smsnet(&args, cwd);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    generate_tiny(cwd);
    let mut args = vec!["train", "--data", "data", "--lr", "1e300"];
    args.extend_from_slice(TINY);
    let out = smsnet(&args, cwd);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smsnet(&["--help"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["generate", "train", "evaluate", "compare", "export-maps"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
