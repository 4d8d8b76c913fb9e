//! Salted one-way digests for PINs, passwords and secret answers, plus the
//! random secrets the service hands out.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, ErrorCode};

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// `salt$hash`, both hex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretDigest {
    salt: String,
    hash: String,
}

impl SecretDigest {
    pub fn create(secret: &str, rng: &mut dyn RngCore) -> Self {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let salt = hex::encode(salt);
        let hash = sha256_hex(&[salt.as_bytes(), secret.as_bytes()]);
        Self { salt, hash }
    }

    pub fn matches(&self, secret: &str) -> bool {
        let candidate = sha256_hex(&[self.salt.as_bytes(), secret.as_bytes()]);
        // constant-time-ish compare; both are fixed-length hex
        candidate
            .bytes()
            .zip(self.hash.bytes())
            .fold(candidate.len() ^ self.hash.len(), |acc, (a, b)| {
                acc | usize::from(a ^ b)
            })
            == 0
    }
}

impl fmt::Display for SecretDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}${}", self.salt, self.hash)
    }
}

impl FromStr for SecretDigest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (salt, hash) = s
            .split_once('$')
            .ok_or_else(|| Error::with_message(ErrorCode::CorruptJournal, "malformed digest"))?;
        let hex_ok = |v: &str| !v.is_empty() && v.bytes().all(|b| b.is_ascii_hexdigit());
        if !hex_ok(salt) || !hex_ok(hash) {
            return Err(Error::with_message(ErrorCode::CorruptJournal, "malformed digest"));
        }
        Ok(Self {
            salt: salt.into(),
            hash: hash.into(),
        })
    }
}

impl Serialize for SecretDigest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SecretDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Uniform integer in `0..bound` by rejection sampling.
pub fn uniform_below(rng: &mut dyn RngCore, bound: u32) -> u32 {
    let zone = u32::MAX - (u32::MAX % bound);
    loop {
        let v = rng.next_u32();
        if v < zone {
            return v % bound;
        }
    }
}

pub fn random_digits(rng: &mut dyn RngCore, len: usize) -> String {
    (0..len)
        .map(|_| char::from(b'0' + uniform_below(rng, 10) as u8))
        .collect()
}

pub fn random_alphanumeric(rng: &mut dyn RngCore, len: usize) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnpqrstuvwxyz23456789";
    (0..len)
        .map(|_| char::from(ALPHABET[uniform_below(rng, ALPHABET.len() as u32) as usize]))
        .collect()
}

pub fn random_hex(rng: &mut dyn RngCore, bytes: usize) -> String {
    let mut buf = alloc::vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    hex::encode(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn digest_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = SecretDigest::create("1234", &mut rng);
        assert!(d.matches("1234"));
        assert!(!d.matches("1235"));
        let parsed: SecretDigest = alloc::format!("{d}").parse().unwrap();
        assert_eq!(parsed, d);
        assert!(!alloc::format!("{d}").contains("1234$"));
    }

    #[test]
    fn same_secret_different_salt() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = SecretDigest::create("1234", &mut rng);
        let b = SecretDigest::create("1234", &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = random_digits(&mut rng, 8);
        assert_eq!(code.len(), 8);
        assert!(code.bytes().all(|b| b.is_ascii_digit()));
        let pw = random_alphanumeric(&mut rng, 10);
        assert_eq!(pw.len(), 10);
        assert!(pw.bytes().all(|b| b.is_ascii_alphanumeric()));
    }

    #[test]
    fn digits_are_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u32; 10];
        for _ in 0..20_000 {
            counts[uniform_below(&mut rng, 10) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (1_700..2_300).contains(&c)), "{counts:?}");
    }
}
