#![allow(dead_code)]

use std::path::{Path, PathBuf};

use repro_bench::model::{ChallengeManifest, EvaluationType, ExperimentSpec, TrainFraction};
use repro_bench::server::{Server, ServerConfig, ServerHandle};

pub const CHALLENGE: &str = "cifar10-synthetic";

pub fn manifest() -> ChallengeManifest {
    ChallengeManifest::synthetic(CHALLENGE, 200, TrainFraction::new(4, 5).unwrap())
}

pub fn config(dir: &Path, halt_on_mismatch: bool) -> ServerConfig {
    ServerConfig {
        listen_address: "127.0.0.1:0".into(),
        seed_journal: dir.join("seeds.journal"),
        metrics_journal: dir.join("metrics.journal"),
        manifests: vec![],
        halt_on_mismatch,
        master_key: String::new(),
    }
}

pub fn start(dir: &Path) -> ServerHandle {
    start_with(&config(dir, false), vec![manifest()])
}

pub fn start_with(config: &ServerConfig, manifests: Vec<ChallengeManifest>) -> ServerHandle {
    Server::bind_with_manifests(config, manifests).expect("server binds").spawn()
}

pub fn spec(bug: &str, evaluation_type: EvaluationType, planned_runs: u32) -> ExperimentSpec {
    ExperimentSpec {
        bug_identifier: bug.into(),
        evaluation_type,
        model: "lenet5".into(),
        challenge: CHALLENGE.into(),
        state: 0,
        artifact: format!("torch-{evaluation_type}"),
        software: "torch".into(),
        epochs: 30,
        planned_runs,
    }
}

/// Writes a manifest file and a config file referring to it; returns the
/// config path.
pub fn write_config_files(dir: &Path, halt_on_mismatch: bool) -> PathBuf {
    let manifest_path = dir.join("challenge.manifest");
    std::fs::write(&manifest_path, repro_bench::record::encode(&manifest())).unwrap();
    let mut cfg = config(dir, halt_on_mismatch);
    cfg.seed_journal = "seeds.journal".into();
    cfg.metrics_journal = "metrics.journal".into();
    cfg.manifests = vec!["challenge.manifest".into()];
    let path = dir.join("server.config");
    std::fs::write(&path, repro_bench::record::encode(&cfg)).unwrap();
    path
}
