//! Canonical byte encoding and content digests.
//!
//! Every object that is hashed or signed goes through [`Encoder`]: fields are
//! length-prefixed, integers are big-endian and sets are written in ascending
//! digest order. Two processes encoding the same object always produce the
//! same bytes, so signatures issued by one verify at every other.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// The all-zero digest, used as the encoding of the null certificate.
    pub const NULL: Digest = Digest([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    /// First eight hex characters, for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
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
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid digest"))
    }
}

/// Incremental canonical encoder. Bytes go straight into the hasher.
pub struct Encoder {
    hasher: Sha256,
}

impl Encoder {
    /// Starts an encoding under a domain-separation tag.
    pub fn new(tag: &str) -> Self {
        let mut enc = Encoder {
            hasher: Sha256::new(),
        };
        enc.bytes(tag.as_bytes());
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.hasher.update([v]);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.hasher.update(v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.hasher.update(v.to_be_bytes());
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.hasher.update(b);
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.hasher.update(d.0);
        self
    }

    /// Writes a set of digests. The iterator must already be in ascending order.
    pub fn digest_set<'a, I>(&mut self, items: I) -> &mut Self
    where
        I: IntoIterator<Item = &'a Digest>,
        I::IntoIter: ExactSizeIterator,
    {
        let it = items.into_iter();
        self.u32(it.len() as u32);
        for d in it {
            self.digest(d);
        }
        self
    }

    pub fn finish(&mut self) -> Digest {
        let out = std::mem::take(&mut self.hasher).finalize();
        Digest(out.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_separates_domains() {
        let a = Encoder::new("a").u64(1).finish();
        let b = Encoder::new("b").u64(1).finish();
        assert_ne!(a, b);
    }

    #[test]
    fn length_prefix_prevents_ambiguity() {
        let a = Encoder::new("t").bytes(b"ab").bytes(b"c").finish();
        let b = Encoder::new("t").bytes(b"a").bytes(b"bc").finish();
        assert_ne!(a, b);
    }

    #[test]
    fn hex_round_trip() {
        let d = Encoder::new("x").finish();
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("zz"), None);
    }
}
