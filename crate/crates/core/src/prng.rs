//! splitmix64, the only source of randomness in the crate.
//!
//! The algorithm is fixed so that a campaign replays byte-for-byte from its
//! seed on any platform and in any other implementation of the fuzzer.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub const fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish value in `0..bound` by modulo reduction. `bound` must be
    /// non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    pub fn below_usize(&mut self, bound: usize) -> usize {
        self.below(bound as u64) as usize
    }
}

/// Derives an independent stream seed from a parent seed and a label. Used to
/// give each havoc batch its own replayable generator.
pub fn derive_seed(parent: u64, a: u64, b: u64) -> u64 {
    let mut p = Prng::new(parent ^ a.rotate_left(32));
    let x = p.next_u64();
    let mut q = Prng::new(x ^ b);
    q.next_u64()
}
