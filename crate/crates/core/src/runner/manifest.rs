//! Run manifest: what went in, what came out, and which stages are done.
//!
//! A stage counts as complete when its recorded input digest matches the
//! current one and every output it recorded still exists with the recorded
//! digest. Anything else reruns the stage.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scorer::BackendInfo;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_digest: String,
    /// Output path relative to the run directory, mapped to its SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Config values as written, after command-line overrides.
    pub config: BTreeMap<String, String>,
    /// Input file path mapped to its SHA-256.
    pub datasets: BTreeMap<String, String>,
    pub model_id: String,
    pub backend: Option<BackendInfo>,
    /// Digest over everything that affects results: resolved config,
    /// dataset digests and backend identity.
    pub results_digest: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn is_complete(&self, dir: &Path, stage: &str, input_digest: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.input_digest == input_digest
            && rec
                .outputs
                .iter()
                .all(|(rel, digest)| file_digest(&dir.join(rel)).is_ok_and(|d| d == *digest))
    }

    /// Records a finished stage, hashing each of its outputs.
    pub fn complete(
        &mut self,
        dir: &Path,
        stage: &str,
        input_digest: String,
        outputs: &[String],
        seconds: f64,
    ) -> Result<()> {
        let mut rec = StageRecord {
            input_digest,
            outputs: BTreeMap::new(),
            seconds,
        };
        for rel in outputs {
            rec.outputs
                .insert(rel.clone(), file_digest(&dir.join(rel))?);
        }
        self.stages.insert(stage.to_string(), rec);
        self.save(dir)
    }

    pub fn invalidate(&mut self, stage: &str) {
        self.stages.remove(stage);
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes_digest(&bytes))
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a sequence of labelled fields.
pub fn fields_digest<'a>(fields: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut h = Sha256::new();
    for (k, v) in fields {
        for part in [k.as_bytes(), v.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
    }
    hex::encode(h.finalize())
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
