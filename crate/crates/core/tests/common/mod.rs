#![allow(dead_code)]

use multiverse::report::{execute, write_artifacts, RunConfig, RunOptions};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests").join("fixtures").join(name)
}

pub fn small_config() -> RunConfig {
    RunConfig::load(&fixture("small.json")).expect("fixture config")
}

/// Executes `config` and writes its artifacts into `out`; returns the
/// manifest hash.
pub fn run_into(config: &RunConfig, workers: usize, out: &Path) -> u64 {
    let opts = RunOptions { workers, config_dir: fixture(""), dataset_files: None };
    let state = execute(config, &opts).expect("run succeeds");
    write_artifacts(&state, out).expect("artifacts written")
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
