//! Sparse weight vectors, weight dropout and averaged-update accumulation.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;

/// Inference-time dropout applied to model weights.
///
/// Mask generation: feature ids are visited in ascending order; for each id
/// one `f64` is drawn uniformly from `[0, 1)` by a `ChaCha8Rng` seeded with
/// `seed` (`SeedableRng::seed_from_u64`). The weight is dropped when the draw
/// is `< rate`; surviving weights are scaled by `1 / (1 - rate)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutConfig {
    rate: f64,
    seed: u64,
}

impl DropoutConfig {
    pub fn new(rate: f64, seed: u64) -> Result<Self, Error> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {}", rate)));
        }
        Ok(DropoutConfig { rate, seed })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Feature ids are already FNV hashes, so the map uses them directly.
#[derive(Default)]
pub(crate) struct IdHasher(u64);

impl Hasher for IdHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, _: &[u8]) {
        unreachable!("only u64 keys are hashed");
    }

    fn write_u64(&mut self, id: u64) {
        self.0 = id;
    }
}

pub(crate) type IdMap<V> = HashMap<u64, V, BuildHasherDefault<IdHasher>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Weights {
    map: IdMap<f64>,
}

impl Weights {
    pub fn new() -> Self {
        Weights::default()
    }

    pub fn get(&self, id: u64) -> f64 {
        self.map.get(&id).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, id: u64, value: f64) {
        if value == 0.0 {
            self.map.remove(&id);
        } else {
            self.map.insert(id, value);
        }
    }

    /// Sum of the weights of `ids`, accumulated in the given order.
    pub fn dot(&self, ids: &[u64]) -> f64 {
        ids.iter().map(|&id| self.get(id)).sum()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `(id, weight)` pairs in ascending id order.
    pub fn sorted(&self) -> Vec<(u64, f64)> {
        let mut pairs: Vec<(u64, f64)> = self.map.iter().map(|(&k, &v)| (k, v)).collect();
        pairs.sort_unstable_by_key(|&(k, _)| k);
        pairs
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut weights = Weights::new();
        for (id, value) in pairs {
            weights.set(id, value);
        }
        weights
    }

    /// Copy of the weights with a dropout mask applied (see [`DropoutConfig`]).
    pub fn with_dropout(&self, dropout: &DropoutConfig) -> Weights {
        if dropout.rate == 0.0 {
            return self.clone();
        }
        let scale = 1.0 / (1.0 - dropout.rate);
        let mut rng = ChaCha8Rng::seed_from_u64(dropout.seed);
        let mut map = IdMap::with_capacity_and_hasher(self.map.len(), Default::default());
        for (id, value) in self.sorted() {
            let draw: f64 = rng.gen();
            if draw >= dropout.rate {
                map.insert(id, value * scale);
            }
        }
        Weights { map }
    }
}

/// Lazily averaged weight accumulator used by both trainers.
///
/// Each update first credits the current value for the steps it was held,
/// so `finish` returns the mean weight over all `tick`s without touching
/// every feature on every step.
#[derive(Debug, Default)]
pub(crate) struct Accumulator {
    entries: IdMap<Entry>,
    step: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Entry {
    value: f64,
    total: f64,
    stamp: u64,
}

impl Accumulator {
    pub fn new() -> Self {
        Accumulator::default()
    }

    pub fn get(&self, id: u64) -> f64 {
        self.entries.get(&id).map_or(0.0, |e| e.value)
    }

    pub fn dot(&self, ids: &[u64]) -> f64 {
        ids.iter().map(|&id| self.get(id)).sum()
    }

    pub fn add(&mut self, id: u64, delta: f64) {
        if delta != 0.0 {
            self.update(id, |_| delta);
        }
    }

    /// Adds `delta(current value)` to the weight of `id`.
    pub fn update(&mut self, id: u64, delta: impl FnOnce(f64) -> f64) {
        let step = self.step;
        let e = self.entries.entry(id).or_default();
        e.total += (step - e.stamp) as f64 * e.value;
        e.stamp = step;
        e.value += delta(e.value);
    }

    pub fn tick(&mut self) {
        self.step += 1;
    }

    pub fn finish(self) -> Weights {
        let steps = self.step.max(1) as f64;
        let mut entries: Vec<(u64, Entry)> = self.entries.into_iter().collect();
        entries.sort_unstable_by_key(|&(id, _)| id);
        let mut weights = Weights::new();
        for (id, e) in entries {
            let total = e.total + (self.step - e.stamp) as f64 * e.value;
            weights.set(id, total / steps);
        }
        weights
    }
}
