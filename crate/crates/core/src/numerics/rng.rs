//! Deterministic, hierarchically addressed random streams.
//!
//! A stream is identified by a root seed plus a path of `(label, index)`
//! pairs, e.g. `root / ("gbm-hist", 0) / ("sample", 4711)`. The path is
//! absorbed into a 256-bit ChaCha key with a SplitMix64-style mixer, so a
//! sample's randomness depends only on its address and never on the order
//! in which samples were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<(String, u64)>,
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    /// A sub-stream one level below `self`.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((label.to_owned(), index));
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    fn key(&self) -> [u8; 32] {
        let mut h = mix64(self.root_seed ^ GOLDEN);
        let mut absorb = |word: u64| {
            h = mix64(h.wrapping_add(GOLDEN) ^ word);
        };
        absorb(self.path.len() as u64);
        for (label, index) in &self.path {
            absorb(label_hash(label));
            absorb(label.len() as u64);
            absorb(*index);
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix64(h.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// Fill `out` with iid `N(0, std^2)` draws.
#[inline]
pub fn fill_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64], std: f64) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = std * z;
    }
}

#[inline]
pub fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
