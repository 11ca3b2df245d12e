//! Seeded, hierarchical random streams.
//!
//! Every stream carries a 64-bit derivation key. Child streams are derived by
//! hashing the parent key with a label, never by drawing from the parent, so a
//! child's sequence depends only on its lineage and not on how many values
//! any other stream has consumed. Draws come from Xoshiro256++ seeded from the
//! key through SplitMix64 (the generator is pinned; changing it changes every
//! output of the toolkit).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scene seed. Equal seeds with equal configs give byte-identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, then finalized so short labels spread over all 64 bits.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(h ^ GOLDEN)
}

fn child_key(parent: u64, label: &str) -> u64 {
    mix64(parent.rotate_left(23) ^ hash_label(label))
}

fn indexed_key(parent: u64, index: u64) -> u64 {
    mix64(parent.rotate_left(11) ^ mix64(index.wrapping_add(GOLDEN)))
}

#[derive(Debug, Clone)]
enum LineageLabel {
    Name(Arc<str>),
    Index(u64),
}

#[derive(Debug)]
struct LineageNode {
    parent: Option<Arc<LineageNode>>,
    label: LineageLabel,
}

/// A single-owner deterministic random stream.
#[derive(Clone)]
pub struct RngStream {
    key: u64,
    lineage: Option<Arc<LineageNode>>,
    rng: Xoshiro256PlusPlus,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("key", &format_args!("{:#018x}", self.key))
            .field("lineage", &self.lineage())
            .finish()
    }
}

impl RngStream {
    /// Root stream of a scene seed.
    pub fn new(seed: Seed) -> Self {
        Self::from_key(mix64(seed.0 ^ GOLDEN), None)
    }

    fn from_key(key: u64, lineage: Option<Arc<LineageNode>>) -> Self {
        RngStream {
            key,
            lineage,
            rng: Xoshiro256PlusPlus::seed_from_u64(key),
        }
    }

    /// Child stream named `label`. Pure function of this stream's lineage and
    /// `label`; unaffected by how much this stream has been consumed.
    pub fn derive(&self, label: &str) -> Self {
        assert!(!label.is_empty(), "stream label must be non-empty");
        let node = LineageNode {
            parent: self.lineage.clone(),
            label: LineageLabel::Name(Arc::from(label)),
        };
        Self::from_key(child_key(self.key, label), Some(Arc::new(node)))
    }

    /// Child stream keyed by an integer, for per-item streams in hot loops.
    pub fn derive_index(&self, index: u64) -> Self {
        let node = LineageNode {
            parent: self.lineage.clone(),
            label: LineageLabel::Index(index),
        };
        Self::from_key(indexed_key(self.key, index), Some(Arc::new(node)))
    }

    /// Derivation key; stable identifier of the lineage.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Seed value usable by seed-driven (stateless) generators such as noise.
    pub fn seed(&self) -> Seed {
        Seed(self.key)
    }

    pub fn lineage(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut node = self.lineage.as_deref();
        while let Some(n) = node {
            out.push(match &n.label {
                LineageLabel::Name(s) => s.to_string(),
                LineageLabel::Index(i) => format!("#{i}"),
            });
            node = n.parent.as_deref();
        }
        out.reverse();
        out
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when the interval is empty.
    /// Advances the stream exactly one step.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Argument(format!(
                "uniform interval [{lo}, {hi}) is invalid"
            )));
        }
        Ok(self.range(lo, hi))
    }

    /// Infallible [`uniform`](Self::uniform) for internally validated bounds.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        let u = self.unit();
        if lo == hi {
            return lo;
        }
        let v = lo + (hi - lo) * u;
        if v >= hi {
            hi.next_down()
        } else {
            v
        }
    }

    /// Gaussian draw; `sigma == 0` returns `mean` exactly.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> Result<f64> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::Argument(format!("normal sigma {sigma} is negative")));
        }
        if sigma == 0.0 {
            return Ok(mean);
        }
        let z: f64 = self.rng.sample(StandardNormal);
        Ok(mean + sigma * z)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
