//! Counter-based random number streams.
//!
//! Every random draw in the engine comes from a stream addressed by
//! `(seed, chain, update kind, iteration, site, subject)`. A stream is a
//! Philox-2x64 block cipher evaluated on that address, so draws are pure
//! functions of their coordinates: the same seed produces bit-identical
//! results no matter how sites are scheduled across worker threads, and a
//! chain can be resumed mid-run from nothing but its iteration counter.
//!
//! The address tuple is packed injectively into the 128-bit Philox counter
//! (no hashing), so distinct draws can never collide:
//!
//! ```text
//! key = seed ^ (chain << 8 | kind)
//! x0  = iteration << 24 | block        x1 = site << 32 | subject
//! ```

use rand::RngCore;

/// Philox 2x64 multiplier (Random123).
const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
/// Weyl constant added to the key each round (golden ratio).
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;
/// Round count; 10 is the Random123 default for philox2x64.
const PHILOX_ROUNDS: u32 = 10;

/// Which conditional update a stream belongs to. The discriminant is part of
/// the stream address, so renumbering breaks reproducibility with old seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum UpdateKind {
    Init = 1,
    Latent = 2,
    Coefficient = 3,
    Gamma = 4,
    Precision = 5,
    SimSubject = 6,
    Monitor = 7,
}

/// Factory for the streams of one chain.
#[derive(Clone, Copy, Debug)]
pub struct Streams {
    seed: u64,
    chain: u64,
}

impl Streams {
    pub fn new(seed: u64, chain: u64) -> Self {
        Streams { seed, chain }
    }

    /// Stream for a specific update at a specific coordinate.
    #[inline]
    pub fn stream(&self, kind: UpdateKind, iteration: u64, site: u64, subject: u64) -> CounterRng {
        debug_assert!(iteration < 1 << 40);
        debug_assert!(site < 1 << 32);
        debug_assert!(subject < 1 << 32);
        CounterRng {
            key: self.seed ^ (self.chain << 8 | kind as u64),
            hi_base: iteration << 24,
            lo: site << 32 | subject,
            block: 0,
            buf: [0; 2],
            rem: 0,
        }
    }

    /// Stream for per-run draws that have no site/subject coordinate.
    #[inline]
    pub fn scalar_stream(&self, kind: UpdateKind, iteration: u64) -> CounterRng {
        self.stream(kind, iteration, 0, 0)
    }
}

/// One addressed random stream. Implements [`rand::RngCore`], so any
/// `rand_distr` distribution can sample from it deterministically.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    hi_base: u64,
    lo: u64,
    block: u64,
    buf: [u64; 2],
    rem: u8,
}

#[inline(always)]
fn philox2x64(mut x0: u64, mut x1: u64, mut key: u64) -> (u64, u64) {
    for _ in 0..PHILOX_ROUNDS {
        let prod = (x0 as u128) * (PHILOX_M as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        x0 = hi ^ key ^ x1;
        x1 = lo;
        key = key.wrapping_add(PHILOX_W);
    }
    (x0, x1)
}

impl CounterRng {
    #[inline]
    fn refill(&mut self) {
        debug_assert!(self.block < 1 << 24, "stream exhausted its block space");
        let (a, b) = philox2x64(self.hi_base | self.block, self.lo, self.key);
        self.block += 1;
        self.buf = [a, b];
        self.rem = 2;
    }

    /// Uniform draw on the open interval (0, 1); never returns an endpoint,
    /// so it is safe under `ln`.
    #[inline]
    pub fn u01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Modulo bias is < n / 2^64; irrelevant for the small n used here.
        self.next_u64() % n
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.rem == 0 {
            self.refill();
        }
        self.rem -= 1;
        self.buf[self.rem as usize]
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
