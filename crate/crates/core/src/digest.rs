//! Stable digests over canonical serializations.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON form. Maps are `BTreeMap`s throughout, so the
/// serialization is canonical.
pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("state types always serialize");
    sha256_hex(&bytes)
}
