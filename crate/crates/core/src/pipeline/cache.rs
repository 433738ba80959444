use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Content-addressed stage outputs under `<root>/<stage>/<key>/`.
///
/// A directory counts as present only once it holds the `.complete` marker,
/// which is written last.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

const MARKER: &str = ".complete";

/// SHA-256 over the stage name, the JSON of the config subset and the keys
/// of the inputs, in order.
pub fn stage_key<T: Serialize + ?Sized>(stage: &str, subset: &T, inputs: &[&str]) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(subset).expect("config subset serializes"));
    for i in inputs {
        h.update([0]);
        h.update(i.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(stage).join(key)
    }

    pub fn is_complete(&self, stage: &str, key: &str) -> bool {
        self.dir(stage, key).join(MARKER).is_file()
    }

    /// Runs `build` into a scratch directory unless the entry exists, then
    /// moves it into place. Returns the entry directory and whether it was a hit.
    pub fn get_or_build<E>(
        &self,
        stage: &str,
        key: &str,
        build: impl FnOnce(&Path) -> Result<(), E>,
    ) -> Result<(PathBuf, bool), E>
    where
        E: From<std::io::Error>,
    {
        let dir = self.dir(stage, key);
        if self.is_complete(stage, key) {
            return Ok((dir, true));
        }
        let tmp = self
            .root
            .join(stage)
            .join(format!("{key}.partial-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir_all(&tmp)?;
        build(&tmp)?;
        std::fs::write(tmp.join(MARKER), key)?;
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::rename(&tmp, &dir)?;
        Ok((dir, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_part() {
        let k = stage_key("train", &serde_json::json!({"lr": 1e-4}), &["abc"]);
        assert_eq!(k.len(), 64);
        assert_eq!(
            k,
            stage_key("train", &serde_json::json!({"lr": 1e-4}), &["abc"])
        );
        assert_ne!(
            k,
            stage_key("evaluate", &serde_json::json!({"lr": 1e-4}), &["abc"])
        );
        assert_ne!(
            k,
            stage_key("train", &serde_json::json!({"lr": 1e-3}), &["abc"])
        );
        assert_ne!(
            k,
            stage_key("train", &serde_json::json!({"lr": 1e-4}), &["abd"])
        );
        assert_ne!(
            stage_key("s", &1, &["ab", "c"]),
            stage_key("s", &1, &["a", "bc"])
        );
    }

    #[test]
    fn builds_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let mut calls = 0;
        let (p, hit) = cache
            .get_or_build::<std::io::Error>("s", "k", |d| {
                calls += 1;
                std::fs::write(d.join("x"), b"1")
            })
            .unwrap();
        assert!(!hit);
        assert_eq!(std::fs::read(p.join("x")).unwrap(), b"1");
        let (_, hit) = cache
            .get_or_build::<std::io::Error>("s", "k", |_| panic!("rebuilt"))
            .unwrap();
        assert!(hit);
        assert_eq!(calls, 1);
    }

    #[test]
    fn failed_build_leaves_no_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let r = cache.get_or_build("s", "k", |_| Err(std::io::Error::other("boom")));
        assert!(r.is_err());
        assert!(!cache.is_complete("s", "k"));
    }
}
