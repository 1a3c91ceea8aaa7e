//! Canonical encoding and SHA-256 digests.
//!
//! Every payload that is hashed or written to disk goes through
//! [`to_canonical_bytes`]: JSON with object keys sorted by name and no
//! insignificant whitespace. Two implementations that agree on the value
//! agree on the bytes, and therefore on the hash chain.

use std::fmt;

use serde::{de::DeserializeOwned, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// 256-bit digest, hex-encoded lowercase when serialized.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("digest must be 64 lowercase hex chars"));
        }
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid hex digest"))
    }
}

/// Canonical JSON value: serde_json's `Map` is a `BTreeMap`, so keys come out sorted.
pub fn to_canonical_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("engine types always serialize")
}

pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(&to_canonical_value(value)).expect("json values always serialize")
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("json is utf-8")
}

pub fn from_canonical_bytes<T: DeserializeOwned>(bytes: &[u8]) -> serde_json::Result<T> {
    serde_json::from_slice(bytes)
}

/// Hash-chain link: `H(prev_hash || payload)`.
pub fn chain_hash(prev: &Digest, payload: &[u8]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(prev.0);
    hasher.update(payload);
    Digest(hasher.finalize().into())
}

/// Digest of a value's canonical encoding.
pub fn digest_of<T: Serialize>(value: &T) -> Digest {
    Digest::of(&to_canonical_bytes(value))
}

/// Marker prefix for values replaced by their digest.
pub const HASHED_PREFIX: &str = "sha256:";

/// `sha256:<hex>` form used when a sensitive string is kept off the log.
pub fn hashed_form(plain: &str) -> String {
    format!("{HASHED_PREFIX}{}", Digest::of(plain.as_bytes()).to_hex())
}

pub fn is_hashed_form(s: &str) -> bool {
    s.strip_prefix(HASHED_PREFIX)
        .is_some_and(|h| h.len() == 64 && h.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
}
