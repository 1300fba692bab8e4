//! Hashed sparse features.
//!
//! A feature id is the 64-bit FNV-1a hash of the UTF-8 feature string
//! `template ␟ field₁ ␟ field₂ …`, where `␟` is the unit separator byte
//! `0x1f`. Because FNV-1a is a left fold over bytes, extending a hasher with
//! more fields yields the hash of the extended string; scorers use this to
//! conjoin a state or arc feature with every candidate label or action.

use std::collections::BTreeMap;

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
pub const FIELD_SEPARATOR: u8 = 0x1f;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureHasher(u64);

impl FeatureHasher {
    pub fn new(template: &str) -> Self {
        let mut hasher = FeatureHasher(FNV_OFFSET);
        hasher.write(template.as_bytes());
        hasher
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    #[must_use]
    pub fn field(mut self, value: &str) -> Self {
        self.write(&[FIELD_SEPARATOR]);
        self.write(value.as_bytes());
        self
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// FNV-1a of a complete feature string.
pub fn hash_feature(text: &str) -> u64 {
    let mut hasher = FeatureHasher(FNV_OFFSET);
    hasher.write(text.as_bytes());
    hasher.finish()
}

/// Sparse multiset of feature ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureVector {
    counts: BTreeMap<u64, u32>,
}

impl FeatureVector {
    pub fn new() -> Self {
        FeatureVector::default()
    }

    pub fn add(&mut self, id: u64) {
        *self.counts.entry(id).or_insert(0) += 1;
    }

    pub fn count(&self, id: u64) -> u32 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }
}

impl FromIterator<u64> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut fv = FeatureVector::new();
        for id in iter {
            fv.add(id);
        }
        fv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(hash_feature(""), 0xcbf29ce484222325);
        assert_eq!(hash_feature("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(hash_feature("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn fields_extend_the_string() {
        let incremental = FeatureHasher::new("hp").field("NOUN").field("L").finish();
        assert_eq!(incremental, hash_feature("hp\u{1f}NOUN\u{1f}L"));
    }

    #[test]
    fn vector_counts() {
        let fv: FeatureVector = [3, 1, 3].into_iter().collect();
        assert_eq!(fv.count(3), 2);
        assert_eq!(fv.count(1), 1);
        assert_eq!(fv.len(), 2);
    }
}
