//! Config hashing for artifact provenance.
//!
//! Every file the pipeline writes embeds the SHA-256 of the producing
//! config's canonical JSON, so outputs can be traced back to exact settings.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn config_hash_bytes<T: Serialize>(value: &T) -> [u8; 32] {
    let json = serde_json::to_string(value).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().into()
}

pub fn config_hash_hex<T: Serialize>(value: &T) -> String {
    let bytes = config_hash_bytes(value);
    let mut out = String::with_capacity(64);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
