use std::sync::Arc;

use crate::isa::Instruction;

/// Why translation stopped where it did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminator {
    Branch,
    Jump,
    /// `JAL` / `CALLR`.
    Call,
    /// `JR`.
    RetIndirect,
    Halt,
    /// The next instruction carries a hook and must start its own block.
    HookSplit,
    /// Ends on an undecodable word; executing it faults.
    Illegal,
    /// End of RAM or the per-block instruction cap.
    Boundary,
}

/// A translated basic block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub start: u32,
    pub insns: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BlockRecord {
    pub fn len_insns(&self) -> usize {
        self.insns.len()
    }

    /// One past the last byte.
    pub fn end(&self) -> u32 {
        self.start + 4 * self.insns.len() as u32
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.start && addr < self.end()
    }
}

pub(crate) const PAGE_SHIFT: u32 = 12;

/// Direct-mapped translation cache keyed by block start, with a per-page
/// index for invalidating blocks that overlap written memory.
pub(crate) struct BlockCache {
    slots: Vec<Option<Arc<BlockRecord>>>,
    by_page: Vec<Vec<u32>>,
    pub(crate) translations: u64,
}

impl BlockCache {
    pub fn new(ram_len: usize) -> Self {
        let pages = ram_len.div_ceil(1 << PAGE_SHIFT);
        BlockCache {
            slots: vec![None; ram_len / 4],
            by_page: vec![Vec::new(); pages],
            translations: 0,
        }
    }

    #[inline]
    pub fn get(&self, pc: u32) -> Option<&Arc<BlockRecord>> {
        self.slots.get((pc >> 2) as usize).and_then(|s| s.as_ref())
    }

    pub fn insert(&mut self, block: Arc<BlockRecord>) {
        let first = (block.start >> PAGE_SHIFT) as usize;
        let last = ((block.end() - 1) >> PAGE_SHIFT) as usize;
        for page in first..=last {
            self.by_page[page].push(block.start);
        }
        self.translations += 1;
        let slot = (block.start >> 2) as usize;
        self.slots[slot] = Some(block);
    }

    #[inline]
    pub fn page_has_code(&self, page: usize) -> bool {
        self.by_page.get(page).is_some_and(|v| !v.is_empty())
    }

    /// Drops every cached block overlapping `[lo, hi)`. Returns true if any
    /// block was removed.
    pub fn invalidate(&mut self, lo: u32, hi: u32) -> bool {
        if hi <= lo {
            return false;
        }
        let mut removed = false;
        let first = (lo >> PAGE_SHIFT) as usize;
        let last = (((hi - 1) >> PAGE_SHIFT) as usize).min(self.by_page.len().saturating_sub(1));
        for page in first..=last {
            let slots = &mut self.slots;
            self.by_page[page].retain(|&start| {
                let idx = (start >> 2) as usize;
                match &slots[idx] {
                    Some(b) if b.start < hi && lo < b.end() => {
                        slots[idx] = None;
                        removed = true;
                        false
                    }
                    Some(_) => true,
                    None => false,
                }
            });
        }
        removed
    }

    pub fn invalidate_page(&mut self, page: usize) -> bool {
        let lo = (page as u32) << PAGE_SHIFT;
        self.invalidate(lo, lo + (1 << PAGE_SHIFT))
    }

    pub fn flush(&mut self) {
        for s in self.slots.iter_mut() {
            *s = None;
        }
        for p in self.by_page.iter_mut() {
            p.clear();
        }
    }
}
