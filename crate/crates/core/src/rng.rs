//! Counter-based splittable random streams.
//!
//! A [`RandomStream`] is identified by a 64-bit key. Child streams are derived
//! from the key alone (never from the parent's position), so the stream for
//! `(seed, epoch, example)` is the same no matter which thread asks for it or
//! in what order. The generator behind each key is ChaCha8.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes apart.
pub mod domain {
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const MIXUP_LAMBDA: u64 = 0x4d49_584c;
    pub const INIT: u64 = 0x494e_4954;
    pub const SYNTHETIC: u64 = 0x5359_4e54;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(splitmix64(seed))
    }

    fn from_key(key: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut s = key;
        for chunk in seed.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self {
            key,
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream `id`. Depends only on this stream's key and `id`.
    pub fn derive(&self, id: u64) -> Self {
        Self::from_key(splitmix64(
            self.key ^ splitmix64(id.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    /// Shorthand for a chain of [`derive`](Self::derive) calls.
    pub fn derive_path(&self, ids: &[u64]) -> Self {
        ids.iter().fold(self.clone(), |s, &id| s.derive(id))
    }
}

impl RngCore for RandomStream {
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
