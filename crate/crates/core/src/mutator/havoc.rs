use super::constants::*;
use crate::prng::Prng;

/// Where havoc may write. With a region set the input length is frozen and
/// block-structure operators are disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HavocLimits {
    pub region: Option<(usize, usize)>,
    pub max_len: usize,
}

fn block_len(prng: &mut Prng, limit: usize) -> usize {
    let cap = match prng.below(3) {
        0 => HAVOC_BLK_SMALL,
        1 => HAVOC_BLK_MEDIUM,
        _ => HAVOC_BLK_LARGE,
    };
    1 + prng.below_usize(limit.min(cap).max(1))
}

/// Applies one stack of `2^(1 + next % 7)` operators to `buf`. Returns the
/// stack size.
pub fn havoc_mutate(buf: &mut Vec<u8>, prng: &mut Prng, limits: HavocLimits) -> usize {
    let max_len = limits.max_len.max(1);
    if buf.is_empty() {
        buf.push(0);
    }
    buf.truncate(max_len);
    let stack = 1usize << (1 + prng.below(7));
    for _ in 0..stack {
        let (lo, n) = match limits.region {
            Some((off, len)) => {
                let lo = off.min(buf.len());
                (lo, len.min(buf.len() - lo))
            }
            None => (0, buf.len()),
        };
        if n == 0 {
            break;
        }
        let op = if limits.region.is_some() {
            // delete and insert change the length
            [0, 1, 2, 3, 4, 7][prng.below_usize(6)]
        } else {
            prng.below(8)
        };
        match op {
            0 => {
                let bit = prng.below_usize(8 * n);
                buf[lo + bit / 8] ^= 0x80 >> (bit % 8);
            }
            1 => {
                let pos = lo + prng.below_usize(n);
                buf[pos] = INTERESTING_8[prng.below_usize(INTERESTING_8.len())] as u8;
            }
            2 => {
                if prng.below(2) == 0 {
                    if n >= 2 {
                        let pos = lo + 2 * prng.below_usize(n / 2);
                        let v = INTERESTING_16[prng.below_usize(INTERESTING_16.len())];
                        buf[pos..pos + 2].copy_from_slice(&v.to_le_bytes());
                    }
                } else if n >= 4 {
                    let pos = lo + 4 * prng.below_usize(n / 4);
                    let v = INTERESTING_32[prng.below_usize(INTERESTING_32.len())];
                    buf[pos..pos + 4].copy_from_slice(&v.to_le_bytes());
                }
            }
            3 => {
                let w = [1usize, 2, 4][prng.below_usize(3)];
                let delta = 1 + prng.below(ARITH_MAX as u64) as u32;
                let sub = prng.below(2) == 1;
                if n >= w {
                    let pos = lo + prng.below_usize(n - w + 1);
                    let mut word = [0u8; 4];
                    word[..w].copy_from_slice(&buf[pos..pos + w]);
                    let v = u32::from_le_bytes(word);
                    let v = if sub {
                        v.wrapping_sub(delta)
                    } else {
                        v.wrapping_add(delta)
                    };
                    buf[pos..pos + w].copy_from_slice(&v.to_le_bytes()[..w]);
                }
            }
            4 => {
                let pos = lo + prng.below_usize(n);
                // xor with a non-zero value so the byte always changes
                buf[pos] ^= 1 + prng.below(255) as u8;
            }
            5 => {
                if buf.len() >= 2 {
                    let del = block_len(prng, buf.len() - 1);
                    let from = prng.below_usize(buf.len() - del + 1);
                    buf.drain(from..from + del);
                }
            }
            6 => {
                if buf.len() < max_len {
                    let constant = prng.below(4) == 0;
                    let len = block_len(prng, if constant { HAVOC_BLK_SMALL } else { buf.len() });
                    let to = prng.below_usize(buf.len() + 1);
                    let block: Vec<u8> = if constant {
                        vec![prng.below(256) as u8; len]
                    } else {
                        let from = prng.below_usize(buf.len() - len + 1);
                        buf[from..from + len].to_vec()
                    };
                    buf.splice(to..to, block);
                    buf.truncate(max_len);
                }
            }
            _ => {
                if n >= 2 {
                    let len = block_len(prng, n - 1);
                    let to = lo + prng.below_usize(n - len + 1);
                    if prng.below(4) == 0 {
                        let v = prng.below(256) as u8;
                        buf[to..to + len].fill(v);
                    } else {
                        let from = lo + prng.below_usize(n - len + 1);
                        buf.copy_within(from..from + len, to);
                    }
                }
            }
        }
    }
    stack
}
