use std::process::Command;

fn tlc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tlc"));
    c.env_remove("TLC_MODEL_DIR");
    c
}

#[test]
fn config_reflects_profile_seed_and_file() {
    let out = tlc().args(["--profile", "paper", "--seed", "5", "config"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("profile = \"paper\"") && text.contains("seed = 5") && text.contains("max_len = 196"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[vqvae]\nepochs = 7\n").unwrap();
    let out = tlc().args(["--config", path.to_str().unwrap(), "config"]).output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("epochs = 7"));
}

#[test]
fn gen_data_writes_the_configured_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[data]\ncorpus_size = 6\n").unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let status = tlc()
        .args(["--config", path.to_str().unwrap(), "gen-data", "--out", corpus.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&corpus).unwrap().lines().count(), 6);
}

#[test]
fn generate_reads_the_model_dir_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = tlc().env("TLC_MODEL_DIR", &missing).args(["generate", "--text", "walk"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("nowhere"), "{err}");
}

#[test]
fn unknown_profile_is_a_usage_error() {
    let out = tlc().args(["--profile", "huge", "config"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
