use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use sha2::{Digest, Sha256};

use crate::tokens::{CToken, SessionToken};

pub const OUTER_INFO: &[u8] = b"loc-auth/outer";
pub const INNER_INFO: &[u8] = b"loc-auth/inner";
pub const AUTH_HASH_SEPARATOR: u8 = 0x1F;
pub const PBKDF2_ITERATIONS: u32 = 100_000;
pub const VERIFIER_BYTES: usize = 32;
pub const SALT_BYTES: usize = 16;
pub const NONCE_BYTES: usize = 12;
pub const TAG_BYTES: usize = 16;

fn hkdf_key(ikm: &[u8], info: &[u8]) -> [u8; 32] {
    let mut okm = [0u8; 32];
    Hkdf::<Sha256>::new(None, ikm)
        .expand(info, &mut okm)
        .expect("32 bytes is a valid HKDF-SHA-256 output length");
    okm
}

/// AEAD key for the outer login layer.
pub fn outer_key(token: &SessionToken) -> [u8; 32] {
    hkdf_key(&token.0, OUTER_INFO)
}

/// AEAD key for the inner login layer.
pub fn inner_key(token: &CToken) -> [u8; 32] {
    hkdf_key(&token.0, INNER_INFO)
}

/// `PBKDF2-HMAC-SHA-256(password, salt, 100 000)`, 32 bytes.
pub fn password_verifier(password: &str, salt: &[u8; SALT_BYTES]) -> [u8; VERIFIER_BYTES] {
    pbkdf2::pbkdf2_hmac_array::<Sha256, VERIFIER_BYTES>(password.as_bytes(), salt, PBKDF2_ITERATIONS)
}

/// `SHA-256(session_token || 0x1F || pwd_verifier)`.
pub fn auth_hash(token: &SessionToken, verifier: &[u8; VERIFIER_BYTES]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(token.0);
    h.update([AUTH_HASH_SEPARATOR]);
    h.update(verifier);
    h.finalize().into()
}

pub fn seal(key: &[u8; 32], nonce: &[u8; NONCE_BYTES], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    Aes256Gcm::new_from_slice(key)
        .expect("32-byte key")
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("AES-GCM sealing of short messages cannot fail")
}

pub fn open(key: &[u8; 32], nonce: &[u8; NONCE_BYTES], ciphertext: &[u8], aad: &[u8]) -> Option<Vec<u8>> {
    Aes256Gcm::new_from_slice(key)
        .expect("32-byte key")
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .ok()
}

/// Constant-time equality for digests.
pub fn digest_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
