//! Canonical JSON: compact, object keys sorted, numbers in shortest
//! round-trip form.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Serializes through `serde_json::Value`, whose map type keeps keys
/// sorted, then writes without whitespace. Callers validate that floats
/// are finite; serde_json would render NaN as `null`.
pub fn to_canonical_vec<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_vec(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
