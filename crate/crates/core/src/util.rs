use sha2::{Digest, Sha256};

/// Hex SHA-256, truncated to 16 characters for artifact tags.
pub fn hash_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
