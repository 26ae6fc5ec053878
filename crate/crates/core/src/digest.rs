use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// SHA-256 of a canonical serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    /// Digest of the canonical JSON encoding of `value`.
    pub fn of<T: Serialize + ?Sized>(value: &T) -> Digest {
        let bytes = serde_json::to_vec(value).expect("in-memory values always serialize");
        Digest::of_bytes(&bytes)
    }

    /// Chains tagged parts into one digest; used for DAG fingerprints.
    pub fn chain(tag: &str, parent: &Digest, text: &str) -> Digest {
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        h.update([0]);
        h.update(parent.0);
        h.update(text.as_bytes());
        Digest(h.finalize().into())
    }

    pub const ZERO: Digest = Digest([0; 32]);
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &hex::encode(self.0)[..12])
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Digest, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_answer() {
        assert_eq!(
            Digest::of_bytes(b"abc").to_string(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn serde_round_trip() {
        let d = Digest::of(&vec![1, 2, 3]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json.len(), 66);
        assert_eq!(serde_json::from_str::<Digest>(&json).unwrap(), d);
        assert!(serde_json::from_str::<Digest>("\"zz\"").is_err());
    }

    #[test]
    fn chain_depends_on_every_part() {
        let p = Digest::of_bytes(b"p");
        let base = Digest::chain("m", &p, "x");
        assert_ne!(base, Digest::chain("b", &p, "x"));
        assert_ne!(base, Digest::chain("m", &Digest::ZERO, "x"));
        assert_ne!(base, Digest::chain("m", &p, "y"));
        assert_eq!(base, Digest::chain("m", &p, "x"));
    }
}
