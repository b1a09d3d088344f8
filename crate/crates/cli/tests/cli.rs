use std::path::Path;
use std::process::Command;

fn ovg(config: &Path, out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ovg"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("OVG_OUTPUT_DIR", out)
        .output()
        .expect("ovg runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("ovg.toml");
    let status = Command::new(env!("CARGO_BIN_EXE_ovg"))
        .args(["config", "init"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("grounding_scenes_per_split = 500", "grounding_scenes_per_split = 10")
        .replace("grasp_scenes_per_split = 100", "grasp_scenes_per_split = 4");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    for stage in ["generate", "ground", "grasp", "ablate", "report"] {
        let o = ovg(&config, &out, &[stage]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("## Module ablation"));
    assert!(out.join("manifest.jsonl").exists());
}

#[test]
fn missing_dataset_is_an_actionable_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let o = ovg(&config, &dir.path().join("empty"), &["ground"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `ovg generate` first"));
}

#[test]
fn config_init_does_not_clobber() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_ovg"))
        .args(["config", "init"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
}

#[test]
fn bad_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = \"x\"\n").unwrap();
    let o = ovg(&path, dir.path(), &["generate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
}
