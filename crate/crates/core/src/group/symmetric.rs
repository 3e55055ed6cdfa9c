use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};

use super::{Group, GroupError};

pub const NONCE_LEN: usize = 12;

/// A ChaCha20-Poly1305 key derived from a Diffie-Hellman element.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; 32]);

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Key derivation `K(dh)`.
pub fn derive_symmetric_key<G: Group>(dh: &G::Element) -> SymmetricKey {
    let mut h = Sha256::new();
    h.update(b"tce-share-kdf");
    h.update(G::NAME.as_bytes());
    h.update(G::encode_element(dh));
    SymmetricKey(h.finalize().into())
}

impl SymmetricKey {
    /// Encrypts under a fresh random nonce; the nonce is prepended to the
    /// ciphertext.
    pub fn encrypt<R: Rng + CryptoRng + ?Sized>(&self, rng: &mut R, plaintext: &[u8]) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&self.0));
        let body = cipher
            .encrypt(Nonce::from_slice(&nonce), plaintext)
            .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
        let mut out = nonce.to_vec();
        out.extend_from_slice(&body);
        out
    }

    pub fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, GroupError> {
        if ciphertext.len() < NONCE_LEN {
            return Err(GroupError::Decryption);
        }
        let (nonce, body) = ciphertext.split_at(NONCE_LEN);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&self.0));
        cipher
            .decrypt(Nonce::from_slice(nonce), body)
            .map_err(|_| GroupError::Decryption)
    }
}
