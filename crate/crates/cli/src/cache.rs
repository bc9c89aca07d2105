//! Content-addressed JSON cache. Each entry records the hash of its payload;
//! an entry whose payload no longer matches is discarded and rebuilt.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CACHE_ENV: &str = "BIUNITARY_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    sha256: String,
    payload: serde_json::Value,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `inputs`, prefixed by the tool version.
pub fn key_for<T: Serialize>(kind: &str, inputs: &T) -> Result<String, CliError> {
    let body = serde_json::to_vec(&serde_json::to_value(inputs)?)?;
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(&body);
    Ok(format!("{kind}-{}", hex::encode(h.finalize())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    Corrupt,
}

pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Cache { dir })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_deref().map(|d: &Path| d.join(format!("{key}.json")))
    }

    fn load<T: DeserializeOwned>(&self, key: &str) -> (Lookup, Option<T>) {
        let Some(path) = self.path(key) else { return (Lookup::Miss, None) };
        let Ok(text) = fs::read_to_string(&path) else { return (Lookup::Miss, None) };
        let Ok(entry) = serde_json::from_str::<Entry>(&text) else { return (Lookup::Corrupt, None) };
        let Ok(bytes) = serde_json::to_vec(&entry.payload) else { return (Lookup::Corrupt, None) };
        if entry.key != key || digest(&bytes) != entry.sha256 {
            return (Lookup::Corrupt, None);
        }
        match serde_json::from_value(entry.payload) {
            Ok(v) => (Lookup::Hit, Some(v)),
            Err(_) => (Lookup::Corrupt, None),
        }
    }

    fn store<T: Serialize>(&self, key: &str, value: &T) -> Result<(), CliError> {
        let Some(path) = self.path(key) else { return Ok(()) };
        let payload = serde_json::to_value(value)?;
        let sha256 = digest(&serde_json::to_vec(&payload)?);
        let entry = Entry { key: key.to_string(), sha256, payload };
        // write then rename so readers never see a partial entry
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&entry)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Returns the cached value for `key`, or computes and stores it.
    pub fn get_or_compute<T, F>(&self, key: &str, compute: F) -> Result<T, CliError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, CliError>,
    {
        match self.load(key) {
            (Lookup::Hit, Some(v)) => {
                log::info!("cache hit {key}");
                return Ok(v);
            }
            (Lookup::Corrupt, _) => log::warn!("cache entry {key} is corrupt, regenerating"),
            _ => {}
        }
        let v = compute()?;
        self.store(key, &v)?;
        Ok(v)
    }
}
