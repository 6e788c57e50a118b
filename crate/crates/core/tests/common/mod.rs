#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use skillbank::config::RunConfig;
use skillbank::gateway::{Gateway, ScriptRule, ScriptedBackend};
use skillbank::index::{CachedEmbedder, Embedder, EmbeddingBackend, HashingEmbedder};
use skillbank::retry::RetryPolicy;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn e2e_config() -> RunConfig {
    RunConfig::load(&fixtures().join("e2e/config.yaml")).expect("e2e config loads")
}

pub fn script(name: &str) -> Vec<ScriptRule> {
    let text = std::fs::read_to_string(fixtures().join("e2e").join(name)).expect("script readable");
    serde_yaml::from_str(&text).expect("script parses")
}

pub fn gateway(exec: Arc<ScriptedBackend>, kb: Arc<ScriptedBackend>) -> Gateway {
    Gateway::new(exec, kb).with_retry(RetryPolicy::immediate(1))
}

pub fn hashing_embedder(dim: usize) -> Embedder {
    CachedEmbedder::new(Arc::new(HashingEmbedder::new(dim)) as Arc<dyn EmbeddingBackend>)
}

/// Byte contents of every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut std::collections::BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
