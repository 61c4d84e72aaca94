use std::path::PathBuf;
use std::process::Command;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/v1").join(name)
}

#[test]
fn evolve_reproduces_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("evolve.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_spinkac"))
        .args(["evolve", "--model"])
        .arg(data("demo_n2.model"))
        .arg("--p0")
        .arg(data("demo_n2.p0"))
        .args(["--t-end", "5", "--dt", "0.01", "--store-every", "25", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let got = std::fs::read(&out).unwrap();
    let want = std::fs::read(data("demo_n2_evolve.csv")).unwrap();
    assert!(got == want, "evolve output differs from the golden file");
    assert!(dir.path().join("evolve.csv.meta.json").exists());
}
