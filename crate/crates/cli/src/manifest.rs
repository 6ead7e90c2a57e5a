use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Replay record attached to every command's output.
pub struct Manifest {
    command: &'static str,
    seed: u64,
    deterministic: bool,
    inputs: Map<String, Value>,
    params: Value,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, deterministic: bool) -> Self {
        Manifest {
            command,
            seed,
            deterministic,
            inputs: Map::new(),
            params: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        let digest = hex::encode(Sha256::digest(bytes));
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.insert(name, Value::String(digest));
    }

    pub fn params(&mut self, params: Value) {
        self.params = params;
    }

    pub fn to_value(&self) -> Value {
        let mut v = json!({
            "command": self.command,
            "inputs": self.inputs,
            "params": self.params,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
        });
        if !self.deterministic {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            v["timestamp_unix"] = json!(now);
        }
        v
    }
}
