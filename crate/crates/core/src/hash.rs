//! 64-bit FNV-1a fingerprints over canonical byte encodings.

use core::hash::Hasher;
use fnv::FnvHasher;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Hex rendering used in reports and CLI output.
pub fn fingerprint_hex(value: u64) -> alloc::string::String {
    alloc::format!("{value:016x}")
}
