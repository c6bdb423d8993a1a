use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    /// Call providers; responses are memoized in memory only.
    Live,
    /// Call providers for unseen requests and persist every response.
    Record,
    /// Serve every request from the transcript; never touch the network.
    Replay,
}

impl FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(LlmMode::Live),
            "record" => Ok(LlmMode::Record),
            "replay" => Ok(LlmMode::Replay),
            other => Err(format!("unknown llm mode {other:?} (expected live, record or replay)")),
        }
    }
}

/// One JSONL line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub request: Value,
    pub response: String,
}

/// Map from request digest to raw response text.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: RwLock<BTreeMap<String, TranscriptEntry>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = fs::File::open(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                GatewayError::Io(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            entries.insert(entry.digest.clone(), entry);
        }
        Ok(Transcript { entries: RwLock::new(entries) })
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.entries.read().unwrap().get(digest).map(|e| e.response.clone())
    }

    pub fn insert(&self, entry: TranscriptEntry) {
        self.entries.write().unwrap().insert(entry.digest.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSONL bytes, one entry per line, ordered by digest.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in self.entries.read().unwrap().values() {
            serde_json::to_writer(&mut out, e).expect("transcript entry serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let bytes = self.to_jsonl();
        let mut f = fs::File::create(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(&bytes).map_err(|e| GatewayError::Io(e.to_string()))
    }

    /// SHA-256 over the serialized form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl()))
    }
}
