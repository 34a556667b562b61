use super::constants::{ARITH_MAX, INTERESTING_16, INTERESTING_32, INTERESTING_8};

/// Deterministic stages, in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Flip1,
    Flip2,
    Flip4,
    Byte1,
    Byte2,
    Byte4,
    Arith8,
    Arith16,
    Arith32,
    Interest8,
    Interest16,
    Interest32,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Flip1,
        Stage::Flip2,
        Stage::Flip4,
        Stage::Byte1,
        Stage::Byte2,
        Stage::Byte4,
        Stage::Arith8,
        Stage::Arith16,
        Stage::Arith32,
        Stage::Interest8,
        Stage::Interest16,
        Stage::Interest32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Flip1 => "flip1",
            Stage::Flip2 => "flip2",
            Stage::Flip4 => "flip4",
            Stage::Byte1 => "flip8",
            Stage::Byte2 => "flip16",
            Stage::Byte4 => "flip32",
            Stage::Arith8 => "arith8",
            Stage::Arith16 => "arith16",
            Stage::Arith32 => "arith32",
            Stage::Interest8 => "int8",
            Stage::Interest16 => "int16",
            Stage::Interest32 => "int32",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Width in bytes of the unit the stage mutates (bit stages: 1).
    fn width(self) -> usize {
        match self {
            Stage::Flip1
            | Stage::Flip2
            | Stage::Flip4
            | Stage::Byte1
            | Stage::Arith8
            | Stage::Interest8 => 1,
            Stage::Byte2 | Stage::Arith16 | Stage::Interest16 => 2,
            Stage::Byte4 | Stage::Arith32 | Stage::Interest32 => 4,
        }
    }

    fn variants(self) -> u64 {
        match self {
            Stage::Arith8 | Stage::Arith16 | Stage::Arith32 => 2 * ARITH_MAX as u64,
            Stage::Interest8 => INTERESTING_8.len() as u64,
            Stage::Interest16 => INTERESTING_16.len() as u64,
            Stage::Interest32 => INTERESTING_32.len() as u64,
            _ => 1,
        }
    }

    /// Number of inputs the stage emits over an `n`-byte region.
    pub fn count(self, n: usize) -> u64 {
        let bits = 8 * n as u64;
        let positions = |w: usize| (n + 1).saturating_sub(w) as u64;
        match self {
            Stage::Flip1 => bits,
            Stage::Flip2 => bits.saturating_sub(1),
            Stage::Flip4 => bits.saturating_sub(3),
            _ => positions(self.width()) * self.variants(),
        }
    }
}

/// Applies step `step` of `stage` to `buf[lo..lo + n]`.
pub fn apply(stage: Stage, step: u64, buf: &mut [u8], lo: usize, n: usize) {
    debug_assert!(step < stage.count(n));
    let flip_bits = |buf: &mut [u8], first: u64, k: u64| {
        for b in first..first + k {
            buf[lo + (b / 8) as usize] ^= 0x80 >> (b % 8);
        }
    };
    let (pos, var) = (
        lo + (step / stage.variants()) as usize,
        step % stage.variants(),
    );
    match stage {
        Stage::Flip1 => flip_bits(buf, step, 1),
        Stage::Flip2 => flip_bits(buf, step, 2),
        Stage::Flip4 => flip_bits(buf, step, 4),
        Stage::Byte1 | Stage::Byte2 | Stage::Byte4 => {
            for b in &mut buf[pos..pos + stage.width()] {
                *b ^= 0xFF;
            }
        }
        Stage::Arith8 | Stage::Arith16 | Stage::Arith32 => {
            // variant 2k adds k+1, 2k+1 subtracts it
            let delta = (var / 2 + 1) as u32;
            let w = stage.width();
            let mut word = [0u8; 4];
            word[..w].copy_from_slice(&buf[pos..pos + w]);
            let v = u32::from_le_bytes(word);
            let v = if var % 2 == 0 {
                v.wrapping_add(delta)
            } else {
                v.wrapping_sub(delta)
            };
            buf[pos..pos + w].copy_from_slice(&v.to_le_bytes()[..w]);
        }
        Stage::Interest8 => buf[pos] = INTERESTING_8[var as usize] as u8,
        Stage::Interest16 => {
            buf[pos..pos + 2].copy_from_slice(&INTERESTING_16[var as usize].to_le_bytes());
        }
        Stage::Interest32 => {
            buf[pos..pos + 4].copy_from_slice(&INTERESTING_32[var as usize].to_le_bytes());
        }
    }
}

/// Walks every deterministic mutant of `seed` over a region.
#[derive(Debug, Clone)]
pub struct DeterministicStages {
    seed: Vec<u8>,
    lo: usize,
    n: usize,
    stage: usize,
    step: u64,
}

impl DeterministicStages {
    /// `region` is `(offset, len)` within `seed`; `None` covers all of it.
    pub fn new(seed: Vec<u8>, region: Option<(usize, usize)>) -> Self {
        let (lo, n) = match region {
            Some((off, len)) => {
                let lo = off.min(seed.len());
                (lo, len.min(seed.len() - lo))
            }
            None => (0, seed.len()),
        };
        DeterministicStages {
            seed,
            lo,
            n,
            stage: 0,
            step: 0,
        }
    }

    /// Clamped `(offset, len)` actually mutated.
    pub fn region(&self) -> (usize, usize) {
        (self.lo, self.n)
    }

    /// Total number of mutants.
    pub fn total(&self) -> u64 {
        Stage::ALL.iter().map(|s| s.count(self.n)).sum()
    }

    /// Next `(stage, step, mutant)`.
    pub fn next_mutant(&mut self) -> Option<(Stage, u64, Vec<u8>)> {
        while self.stage < Stage::ALL.len() {
            let st = Stage::ALL[self.stage];
            if self.step < st.count(self.n) {
                let mut buf = self.seed.clone();
                apply(st, self.step, &mut buf, self.lo, self.n);
                let step = self.step;
                self.step += 1;
                return Some((st, step, buf));
            }
            self.stage += 1;
            self.step = 0;
        }
        None
    }
}

impl Iterator for DeterministicStages {
    type Item = (Stage, u64, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        self.next_mutant()
    }
}
