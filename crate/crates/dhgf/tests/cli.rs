mod common;

use std::path::Path;
use std::process::{Command, Output};

use dhgf::metrics::read_csv;

fn dhgf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhgf"))
        .args(args)
        .env_remove("DHGF_DATA_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn no_partials(dir: &Path) {
    for e in std::fs::read_dir(dir).unwrap() {
        let name = e.unwrap().file_name();
        assert!(!name.to_string_lossy().ends_with(".partial"), "{name:?}");
    }
}

#[test]
fn unknown_protocol_is_a_config_error() {
    let out = dhgf(&["bench", "sideways"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sideways"));
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[experiment]\nseeds = [3, 3]\n").unwrap();
    assert_eq!(code(&dhgf(&["--config", s(&cfg), "verify"])), 2);
    std::fs::write(&cfg, "not = [toml").unwrap();
    assert_eq!(code(&dhgf(&["--config", s(&cfg), "verify"])), 2);
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("missing");
    let out = dhgf(&[
        "--data-dir",
        s(&missing),
        "--output-dir",
        s(&out_dir),
        "bench",
        "direct",
        "--epochs",
        "1",
    ]);
    assert_eq!(code(&out), 3);
    assert!(!out_dir.join("direct.csv").exists());
}

#[test]
fn dataset_info_reads_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    common::write_dir(dir.path());
    let out = dhgf(&["--data-dir", s(dir.path()), "dataset-info"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("400") && text.contains("200"), "{text}");
}

#[test]
fn train_spiral_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("model.bin");
    let out = dhgf(&[
        "--output-dir",
        s(dir.path()),
        "train",
        "--task",
        "spiral",
        "--depth",
        "2",
        "--width",
        "4",
        "--epochs",
        "2",
        "--save",
        s(&snap),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(std::fs::File::open(dir.path().join("train.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.metric == "test_accuracy").count(), 2);
    assert!(dhgf::snapshot::load_model(&snap).is_ok());
    no_partials(dir.path());
}

#[test]
fn bench_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    common::write_dir(dir.path());
    let out_dir = dir.path().join("out");
    let out = dhgf(&[
        "--data-dir",
        s(dir.path()),
        "--output-dir",
        s(&out_dir),
        "bench",
        "direct",
        "--methods",
        "hgf,mlp",
        "--depths",
        "2",
        "--widths",
        "8",
        "--seeds",
        "0",
        "--hgf-lrs",
        "1e-3",
        "--baseline-lrs",
        "1e-3",
        "--epochs",
        "2",
        "--plot",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(out_dir.join("direct_d2_w8.svg")).unwrap();
    assert!(svg.contains("hgf") && svg.contains("mlp"));
    let rows = read_csv(std::fs::File::open(out_dir.join("direct.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.metric == "test_accuracy").count(), 4);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("hgf") && text.contains("mlp"), "{text}");
    no_partials(&out_dir);
}
