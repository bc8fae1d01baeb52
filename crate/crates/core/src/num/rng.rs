//! Named, splittable random streams.
//!
//! One CLI seed fans out into independent counter-based generators, one per
//! consumer (init, dropout, sampler, ...), so adding draws in one place never
//! shifts another's stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct RngTree {
    state: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl RngTree {
    pub fn new(seed: u64) -> Self {
        RngTree { state: splitmix64(seed) }
    }

    /// Derive an independent child stream from a label.
    pub fn child(&self, name: &str) -> RngTree {
        RngTree { state: splitmix64(self.state ^ fnv1a(name.as_bytes())) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let a = RngTree::new(7).child("init");
        let b = RngTree::new(7).child("init");
        let (x, y): (u64, u64) = (a.rng().gen(), b.rng().gen());
        assert_eq!(x, y);
    }

    #[test]
    fn children_are_independent() {
        let root = RngTree::new(7);
        let x: u64 = root.child("init").rng().gen();
        let y: u64 = root.child("dropout").rng().gen();
        assert_ne!(x, y);
    }
}
