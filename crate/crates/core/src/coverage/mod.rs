//! Edge and block coverage collected at block entry.
//!
//! Edges are AFL-style: `idx = prev_loc ^ loc_hash(block)`, then
//! `prev_loc = loc_hash(block) >> 1`. Counters saturate at 255 and are
//! compared against the virgin map through hit-count buckets.
//!
//! Blocks listed in the block blacklist are transparent: they record nothing
//! and leave `prev_loc` alone, exactly like out-of-bounds blocks. An
//! interrupt handler that runs between two blocks therefore leaves the edge
//! between them intact instead of replacing it with two spurious ones.

mod snapshot;

use std::collections::BTreeSet;

pub use snapshot::{CoverageSnapshot, SnapshotParseError};

pub const MAP_SIZE: usize = 1 << 16;
pub const RING_LEN: usize = 64;

/// Murmur3 64-bit finalizer over the word index, truncated to 16 bits.
#[inline]
pub fn loc_hash(block_addr: u32) -> u16 {
    let mut h = (block_addr >> 2) as u64;
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h & 0xFFFF) as u16
}

/// One-hot hit-count class.
#[inline]
pub fn bucketize(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 0x01,
        2 => 0x02,
        3 => 0x04,
        4..=7 => 0x08,
        8..=15 => 0x10,
        16..=31 => 0x20,
        32..=127 => 0x40,
        128..=255 => 0x80,
    }
}

/// Strongest kind of novelty a window produced. Ordered weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Novelty {
    None,
    NewBucket,
    NewEdge,
}

impl Novelty {
    pub fn name(self) -> &'static str {
        match self {
            Novelty::None => "none",
            Novelty::NewBucket => "bucket",
            Novelty::NewEdge => "edge",
        }
    }

    pub fn is_new(self) -> bool {
        self != Novelty::None
    }
}

/// Growable bitset keyed by word index (`addr >> 2`).
#[derive(Debug, Clone, Default)]
struct AddrBits {
    words: Vec<u64>,
}

impl AddrBits {
    /// Sets the bit; returns true if it was clear.
    #[inline]
    fn insert(&mut self, addr: u32) -> bool {
        let i = (addr >> 2) as usize;
        let (w, b) = (i / 64, 1u64 << (i % 64));
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        fresh
    }

    #[inline]
    fn remove(&mut self, addr: u32) {
        let i = (addr >> 2) as usize;
        if let Some(w) = self.words.get_mut(i / 64) {
            *w &= !(1u64 << (i % 64));
        }
    }
}

/// Completed-window coverage.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecTrace {
    pub window: u64,
    /// `(edge index, hit count)`, ascending by index.
    pub edges: Vec<(u16, u8)>,
    /// Block start addresses, ascending.
    pub blocks: Vec<u32>,
    /// Most recent in-bounds blocks, oldest first.
    pub ring: Vec<u32>,
}

impl ExecTrace {
    pub fn edge_set(&self) -> BTreeSet<u16> {
        self.edges.iter().map(|&(i, _)| i).collect()
    }

    pub fn block_set(&self) -> BTreeSet<u32> {
        self.blocks.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Blacklist {
    pub edges: BTreeSet<u16>,
    pub blocks: BTreeSet<u32>,
}

impl Blacklist {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.blocks.is_empty()
    }
}

/// Union minus intersection over repeated runs, for edges and blocks
/// independently.
pub fn blacklist_from_traces(traces: &[ExecTrace]) -> Blacklist {
    fn spurious<T: Ord + Copy>(sets: Vec<BTreeSet<T>>) -> BTreeSet<T> {
        let mut iter = sets.iter();
        let Some(first) = iter.next() else {
            return BTreeSet::new();
        };
        let mut union = first.clone();
        let mut inter = first.clone();
        for s in iter {
            union.extend(s.iter().copied());
            inter.retain(|x| s.contains(x));
        }
        union.difference(&inter).copied().collect()
    }
    Blacklist {
        edges: spurious(traces.iter().map(ExecTrace::edge_set).collect()),
        blocks: spurious(traces.iter().map(ExecTrace::block_set).collect()),
    }
}

/// Runs `run(i)` for `i in 0..k`, each producing one window of unmodified
/// input, and derives the blacklist from the resulting traces.
pub fn blacklist_analysis<E>(
    k: usize,
    mut run: impl FnMut(usize) -> Result<ExecTrace, E>,
) -> Result<Blacklist, E> {
    assert!(k >= 2, "blacklist analysis needs at least two runs");
    let traces = (0..k).map(&mut run).collect::<Result<Vec<_>, E>>()?;
    Ok(blacklist_from_traces(&traces))
}

pub struct CoverageMap {
    edge_map: Vec<u8>,
    /// Indices with a non-zero counter in the current window.
    touched: Vec<u16>,
    window_blocks: AddrBits,
    window_block_list: Vec<u32>,
    prev_loc: u16,
    bounds: Vec<(u32, u32)>,
    edge_blacklist: Vec<bool>,
    block_blacklist: AddrBits,
    blacklisted_blocks: BTreeSet<u32>,
    blacklisted_edges: BTreeSet<u16>,
    /// Bit set while the edge has never been seen.
    virgin_edges: Vec<u64>,
    /// AFL-style per-edge bucket bits still unclaimed.
    virgin_bits: Vec<u8>,
    /// Max counter ever observed per edge, for snapshots.
    accum: Vec<u8>,
    edges_seen: usize,
    blocks_seen: AddrBits,
    block_count: usize,
    ring: [u32; RING_LEN],
    ring_pos: usize,
    ring_len: usize,
    window: u64,
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self::new()
    }
}

impl CoverageMap {
    pub fn new() -> Self {
        CoverageMap {
            edge_map: vec![0; MAP_SIZE],
            touched: Vec::with_capacity(1024),
            window_blocks: AddrBits::default(),
            window_block_list: Vec::with_capacity(256),
            prev_loc: 0,
            bounds: Vec::new(),
            edge_blacklist: vec![false; MAP_SIZE],
            block_blacklist: AddrBits::default(),
            blacklisted_blocks: BTreeSet::new(),
            blacklisted_edges: BTreeSet::new(),
            virgin_edges: vec![u64::MAX; MAP_SIZE / 64],
            virgin_bits: vec![0xFF; MAP_SIZE],
            accum: vec![0; MAP_SIZE],
            edges_seen: 0,
            blocks_seen: AddrBits::default(),
            block_count: 0,
            ring: [0; RING_LEN],
            ring_pos: 0,
            ring_len: 0,
            window: 0,
        }
    }

    /// Restricts tracing to the given `[lo, hi)` ranges. Empty means
    /// everything is in bounds.
    pub fn set_bounds(&mut self, bounds: Vec<(u32, u32)>) {
        self.bounds = bounds;
    }

    pub fn bounds(&self) -> &[(u32, u32)] {
        &self.bounds
    }

    pub fn set_blacklist(&mut self, bl: &Blacklist) {
        for &i in &self.blacklisted_edges {
            self.edge_blacklist[i as usize] = false;
        }
        for &a in &self.blacklisted_blocks {
            self.block_blacklist.remove(a);
        }
        for &i in &bl.edges {
            self.edge_blacklist[i as usize] = true;
        }
        for &a in &bl.blocks {
            self.block_blacklist.insert(a);
        }
        self.blacklisted_edges = bl.edges.clone();
        self.blacklisted_blocks = bl.blocks.clone();
    }

    pub fn blacklist(&self) -> Blacklist {
        Blacklist {
            edges: self.blacklisted_edges.clone(),
            blocks: self.blacklisted_blocks.clone(),
        }
    }

    #[inline]
    fn in_bounds(&self, addr: u32) -> bool {
        self.bounds.is_empty() || self.bounds.iter().any(|&(lo, hi)| addr >= lo && addr < hi)
    }

    #[inline]
    fn is_block_blacklisted(&self, addr: u32) -> bool {
        if self.blacklisted_blocks.is_empty() {
            return false;
        }
        let i = (addr >> 2) as usize;
        self.block_blacklist
            .words
            .get(i / 64)
            .is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    /// Clears the per-window state and resets `prev_loc`.
    pub fn begin_window(&mut self) {
        for &i in &self.touched {
            self.edge_map[i as usize] = 0;
        }
        self.touched.clear();
        for &a in &self.window_block_list {
            self.window_blocks.remove(a);
        }
        self.window_block_list.clear();
        self.prev_loc = 0;
        self.ring_len = 0;
        self.ring_pos = 0;
        self.window += 1;
    }

    pub fn window_id(&self) -> u64 {
        self.window
    }

    pub fn prev_loc(&self) -> u16 {
        self.prev_loc
    }

    /// Records entry into the block at `addr`.
    #[inline]
    pub fn observe_block(&mut self, addr: u32) {
        if !self.in_bounds(addr) || self.is_block_blacklisted(addr) {
            return;
        }
        let cur = loc_hash(addr);
        let idx = (self.prev_loc ^ cur) as usize;
        if !self.edge_blacklist[idx] {
            let c = &mut self.edge_map[idx];
            if *c == 0 {
                self.touched.push(idx as u16);
            }
            *c = c.saturating_add(1);
        }
        if self.window_blocks.insert(addr) {
            self.window_block_list.push(addr);
        }
        self.ring[self.ring_pos] = addr;
        self.ring_pos = (self.ring_pos + 1) % RING_LEN;
        self.ring_len = (self.ring_len + 1).min(RING_LEN);
        self.prev_loc = cur >> 1;
    }

    /// Hit count of `idx` in the current window.
    pub fn count(&self, idx: u16) -> u8 {
        self.edge_map[idx as usize]
    }

    /// Compares the current window against the virgin maps, claims any new
    /// bits and returns the strongest novelty seen.
    pub fn has_new_bits(&mut self) -> Novelty {
        let mut best = Novelty::None;
        for &i in &self.touched {
            let i = i as usize;
            let count = self.edge_map[i];
            let b = bucketize(count);
            if self.accum[i] < count {
                self.accum[i] = count;
            }
            let v = self.virgin_bits[i];
            if b & v != 0 {
                let class = if v == 0xFF {
                    Novelty::NewEdge
                } else {
                    Novelty::NewBucket
                };
                best = best.max(class);
                self.virgin_bits[i] = v & !b;
            }
            let (w, bit) = (i / 64, 1u64 << (i % 64));
            if self.virgin_edges[w] & bit != 0 {
                self.virgin_edges[w] &= !bit;
                self.edges_seen += 1;
            }
        }
        for &a in &self.window_block_list {
            if self.blocks_seen.insert(a) {
                self.block_count += 1;
            }
        }
        best
    }

    /// Number of cleared virgin edge bits.
    pub fn edges_seen(&self) -> usize {
        self.edges_seen
    }

    /// Number of distinct blocks ever committed by `has_new_bits`.
    pub fn blocks_seen(&self) -> usize {
        self.block_count
    }

    pub fn ring(&self) -> Vec<u32> {
        let start = (self.ring_pos + RING_LEN - self.ring_len) % RING_LEN;
        (0..self.ring_len)
            .map(|k| self.ring[(start + k) % RING_LEN])
            .collect()
    }

    /// The current window as an [`ExecTrace`].
    pub fn trace(&self) -> ExecTrace {
        let mut edges: Vec<(u16, u8)> = self
            .touched
            .iter()
            .map(|&i| (i, self.edge_map[i as usize]))
            .collect();
        edges.sort_unstable();
        let mut blocks = self.window_block_list.clone();
        blocks.sort_unstable();
        ExecTrace {
            window: self.window,
            edges,
            blocks,
            ring: self.ring(),
        }
    }

    /// Campaign-cumulative coverage: max counter per edge plus every block.
    pub fn snapshot(&self) -> CoverageSnapshot {
        let edges = (0..MAP_SIZE)
            .filter(|&i| self.accum[i] > 0)
            .map(|i| (i as u16, self.accum[i]))
            .collect();
        let mut blocks = BTreeSet::new();
        for (w, &bits) in self.blocks_seen.words.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                blocks.insert(((w * 64 + b) as u32) << 2);
                bits &= bits - 1;
            }
        }
        CoverageSnapshot { edges, blocks }
    }
}
