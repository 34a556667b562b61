//! The FB32 guest machine.
//!
//! A deterministic 32-bit CPU with flat little-endian RAM, two memory-mapped
//! device words and a privileged region that faults on any access. Code runs
//! one basic block at a time through a translation cache; hooks are keyed by
//! block start address and always force a block boundary, so a hook fires
//! before the hooked instruction executes.
//!
//! The block API is split in two so callers can inspect and rewrite guest
//! state between a block's entry callback and its execution:
//!
//! ```text
//! let entry = m.begin_block()?;   // translate or fetch from cache, collect hooks
//! /* coverage, interception, injection */
//! let outcome = m.exec_block(&entry.block);
//! ```
//!
//! [`Machine::run_block`] bundles both with a callback.

mod block;
mod snapshot;
mod timer;

use std::collections::HashMap;
use std::sync::Arc;

use smallvec::SmallVec;

pub use block::{BlockRecord, Terminator};
pub use snapshot::{Snapshot, SnapshotError};
pub use timer::TimerState;

use crate::isa::{decode, Instruction, Reg};
use block::{BlockCache, PAGE_SHIFT};

pub const DEFAULT_RAM_LEN: usize = 1 << 20;
pub const MAILBOX_ADDR: u32 = 0xE000_0000;
pub const TIMER_CTRL_ADDR: u32 = 0xE000_0010;
pub const PRIVILEGED_BASE: u32 = 0xF000_0000;
pub const PRIVILEGED_END: u32 = 0xF000_1000;

/// Longest block the translator will build before cutting it.
const MAX_BLOCK_INSNS: usize = 256;

pub fn is_privileged(addr: u32) -> bool {
    (PRIVILEGED_BASE..PRIVILEGED_END).contains(&addr)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultKind {
    MemoryFault { addr: u32, privileged: bool },
    IllegalInstruction { pc: u32, word: u32 },
    MisalignedAccess { addr: u32 },
    Halt { code: u32 },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::MemoryFault { .. } => "memory-fault",
            FaultKind::IllegalInstruction { .. } => "illegal-instruction",
            FaultKind::MisalignedAccess { .. } => "misaligned-access",
            FaultKind::Halt { .. } => "halt",
        }
    }
}

/// A stop of the guest: a hardware fault or an explicit `HALT`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: FaultKind,
    pub pc: u32,
    pub regs: [u32; 16],
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            FaultKind::MemoryFault { addr, privileged } => write!(
                f,
                "memory fault at 0x{addr:08X}{} (pc 0x{:08X})",
                if privileged { " [privileged]" } else { "" },
                self.pc
            ),
            FaultKind::IllegalInstruction { pc, word } => {
                write!(f, "illegal instruction 0x{word:08X} at 0x{pc:08X}")
            }
            FaultKind::MisalignedAccess { addr } => {
                write!(f, "misaligned access 0x{addr:08X} (pc 0x{:08X})", self.pc)
            }
            FaultKind::Halt { code } => write!(f, "halt with code {code} at 0x{:08X}", self.pc),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeviceEvent {
    /// A store to the mailbox word; carries the stored value.
    Response(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    Event(DeviceEvent),
    Fault(Fault),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockOutcome {
    Continue,
    Fault(Fault),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HookId(u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HookKind {
    /// Self-clears after its first fire.
    BlockEntryOnce,
    BlockEntryAlways,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("range [0x{addr:08X}, +{len}) is outside guest RAM")]
    Range { addr: u32, len: usize },
    #[error("a {kind:?} hook is already registered at 0x{addr:08X}")]
    DuplicateHook { addr: u32, kind: HookKind },
    #[error("hook address 0x{0:08X} is not word-aligned")]
    MisalignedHook(u32),
    #[error("register index {0} out of range")]
    BadRegister(usize),
}

/// Machine construction parameters.
#[derive(Clone, Debug)]
pub struct MachineConfig {
    pub ram_len: usize,
    /// Where the timer interrupt vectors to. Without it the timer never fires.
    pub isr_addr: Option<u32>,
    pub timer_period: u32,
    pub timer_jitter: bool,
    pub timer_seed: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            ram_len: DEFAULT_RAM_LEN,
            isr_addr: None,
            timer_period: 0,
            timer_jitter: false,
            timer_seed: 0,
        }
    }
}

/// Architectural CPU state. Together with RAM it forms the full machine
/// state captured by snapshots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CpuState {
    pub regs: [u32; 16],
    pub pc: u32,
    pub insn_count: u64,
    pub in_isr: bool,
    pub timer: TimerState,
    /// Exit code once `HALT` has executed.
    pub halted: Option<u32>,
}

/// What `begin_block` hands back: the block about to run and the hooks that
/// fired on entry.
#[derive(Clone, Debug)]
pub struct BlockEntry {
    pub block: Arc<BlockRecord>,
    pub hooks: SmallVec<[HookId; 2]>,
}

enum Exec {
    Next,
    Fault(FaultKind),
}

pub struct Machine {
    cpu: CpuState,
    ram: Vec<u8>,
    isr_addr: Option<u32>,
    cache: BlockCache,
    hooks_at: HashMap<u32, SmallVec<[(HookId, HookKind); 2]>>,
    hook_index: HashMap<HookId, (u32, HookKind)>,
    /// One bit per RAM word: some hook is registered there.
    hook_bits: Vec<u64>,
    next_hook: u32,
    events: Vec<DeviceEvent>,
    dirty: Vec<bool>,
    synced_snapshot: Option<u64>,
    /// Bumped whenever a store invalidates translated code.
    code_gen: u64,
}

impl Machine {
    pub fn new(config: MachineConfig) -> Self {
        let ram_len = config.ram_len.max(4096).next_multiple_of(4096);
        Machine {
            cpu: CpuState {
                regs: [0; 16],
                pc: 0,
                insn_count: 0,
                in_isr: false,
                timer: TimerState::new(config.timer_period, config.timer_jitter, config.timer_seed),
                halted: None,
            },
            ram: vec![0; ram_len],
            isr_addr: config.isr_addr,
            cache: BlockCache::new(ram_len),
            hooks_at: HashMap::new(),
            hook_index: HashMap::new(),
            hook_bits: vec![0; ram_len.div_ceil(256)],
            next_hook: 0,
            events: Vec::new(),
            dirty: vec![true; ram_len >> PAGE_SHIFT],
            synced_snapshot: None,
            code_gen: 0,
        }
    }

    pub fn cpu(&self) -> &CpuState {
        &self.cpu
    }

    pub fn ram(&self) -> &[u8] {
        &self.ram
    }

    pub fn ram_len(&self) -> usize {
        self.ram.len()
    }

    pub fn pc(&self) -> u32 {
        self.cpu.pc
    }

    pub fn set_pc(&mut self, pc: u32) {
        self.cpu.pc = pc;
    }

    pub fn insn_count(&self) -> u64 {
        self.cpu.insn_count
    }

    pub fn halted(&self) -> Option<u32> {
        self.cpu.halted
    }

    pub fn isr_addr(&self) -> Option<u32> {
        self.isr_addr
    }

    pub fn set_isr_addr(&mut self, addr: Option<u32>) {
        self.isr_addr = addr;
    }

    pub fn set_timer(&mut self, period: u32, jitter: bool, seed: u64) {
        self.cpu.timer = TimerState::new(0, jitter, seed);
        self.cpu.timer.set_period(period, self.cpu.insn_count);
    }

    /// Number of blocks translated so far (cache misses).
    pub fn translations(&self) -> u64 {
        self.cache.translations
    }

    pub fn read_register(&self, idx: usize) -> Result<u32, MachineError> {
        if idx >= 16 {
            return Err(MachineError::BadRegister(idx));
        }
        Ok(if idx == 0 { 0 } else { self.cpu.regs[idx] })
    }

    pub fn write_register(&mut self, idx: usize, val: u32) -> Result<(), MachineError> {
        if idx >= 16 {
            return Err(MachineError::BadRegister(idx));
        }
        if idx != 0 {
            self.cpu.regs[idx] = val;
        }
        Ok(())
    }

    #[inline]
    fn reg(&self, r: Reg) -> u32 {
        self.cpu.regs[r.index()]
    }

    #[inline]
    fn set_reg(&mut self, r: Reg, val: u32) {
        if r != Reg::ZERO {
            self.cpu.regs[r.index()] = val;
        }
    }

    fn ram_range(&self, addr: u32, len: usize) -> Result<std::ops::Range<usize>, MachineError> {
        let start = addr as usize;
        match start.checked_add(len) {
            Some(end) if end <= self.ram.len() => Ok(start..end),
            _ => Err(MachineError::Range { addr, len }),
        }
    }

    /// Host-side read of guest RAM. Device and privileged addresses are not
    /// RAM and are refused.
    pub fn read_memory(&self, addr: u32, len: usize) -> Result<Vec<u8>, MachineError> {
        Ok(self.ram[self.ram_range(addr, len)?].to_vec())
    }

    pub fn read_u32(&self, addr: u32) -> Result<u32, MachineError> {
        let r = self.ram_range(addr, 4)?;
        Ok(u32::from_le_bytes(self.ram[r].try_into().unwrap()))
    }

    /// Host-side write of guest RAM; drops any translated code it overlaps.
    pub fn write_memory(&mut self, addr: u32, bytes: &[u8]) -> Result<(), MachineError> {
        let r = self.ram_range(addr, bytes.len())?;
        self.ram[r].copy_from_slice(bytes);
        self.touch(addr, bytes.len() as u32);
        Ok(())
    }

    pub fn write_u32(&mut self, addr: u32, val: u32) -> Result<(), MachineError> {
        self.write_memory(addr, &val.to_le_bytes())
    }

    fn touch(&mut self, addr: u32, len: u32) {
        if len == 0 {
            return;
        }
        let first = (addr >> PAGE_SHIFT) as usize;
        let last = ((addr + len - 1) >> PAGE_SHIFT) as usize;
        for page in first..=last {
            self.dirty[page] = true;
            if self.cache.page_has_code(page) && self.cache.invalidate(addr, addr + len) {
                self.code_gen += 1;
            }
        }
    }

    /// Drains device events raised since the last call.
    pub fn take_events(&mut self) -> Vec<DeviceEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn has_events(&self) -> bool {
        !self.events.is_empty()
    }

    // ---- hooks -------------------------------------------------------------

    pub fn register_hook(&mut self, addr: u32, kind: HookKind) -> Result<HookId, MachineError> {
        if !addr.is_multiple_of(4) {
            return Err(MachineError::MisalignedHook(addr));
        }
        let list = self.hooks_at.entry(addr).or_default();
        if list.iter().any(|&(_, k)| k == kind) {
            return Err(MachineError::DuplicateHook { addr, kind });
        }
        let id = HookId(self.next_hook);
        self.next_hook += 1;
        list.push((id, kind));
        self.hook_index.insert(id, (addr, kind));
        self.set_hook_bit(addr, true);
        // Any cached block running through `addr` must be re-split.
        if addr as usize + 4 <= self.ram.len() {
            self.cache.invalidate(addr, addr + 4);
        }
        Ok(id)
    }

    /// Removes a hook. Returns false if it was already gone.
    pub fn clear_hook(&mut self, id: HookId) -> bool {
        let Some((addr, _)) = self.hook_index.remove(&id) else {
            return false;
        };
        if let Some(list) = self.hooks_at.get_mut(&addr) {
            list.retain(|(h, _)| *h != id);
            if list.is_empty() {
                self.hooks_at.remove(&addr);
                self.set_hook_bit(addr, false);
            }
        }
        true
    }

    pub fn hook_addr(&self, id: HookId) -> Option<u32> {
        self.hook_index.get(&id).map(|&(a, _)| a)
    }

    fn set_hook_bit(&mut self, addr: u32, on: bool) {
        let base = addr & !3;
        let on = on || (base..base + 4).any(|a| self.hooks_at.contains_key(&a));
        let w = (addr >> 2) as usize;
        if let Some(word) = self.hook_bits.get_mut(w / 64) {
            if on {
                *word |= 1 << (w % 64);
            } else {
                *word &= !(1 << (w % 64));
            }
        }
    }

    #[inline]
    fn is_hooked(&self, addr: u32) -> bool {
        let w = (addr >> 2) as usize;
        match self.hook_bits.get(w / 64) {
            Some(word) => word & (1 << (w % 64)) != 0,
            None => self.hooks_at.contains_key(&addr),
        }
    }

    fn fire_hooks(&mut self, pc: u32) -> SmallVec<[HookId; 2]> {
        let mut fired = SmallVec::new();
        if !self.is_hooked(pc) {
            return fired;
        }
        let mut emptied = false;
        if let Some(list) = self.hooks_at.get_mut(&pc) {
            for &(id, _) in list.iter() {
                fired.push(id);
            }
            let index = &mut self.hook_index;
            list.retain(|&mut (id, kind)| {
                if kind == HookKind::BlockEntryOnce {
                    index.remove(&id);
                    false
                } else {
                    true
                }
            });
            emptied = list.is_empty();
        }
        if emptied {
            self.hooks_at.remove(&pc);
            self.set_hook_bit(pc, false);
        }
        fired
    }

    // ---- execution ---------------------------------------------------------

    fn fault(&self, kind: FaultKind) -> Fault {
        Fault {
            kind,
            pc: self.cpu.pc,
            regs: self.cpu.regs,
        }
    }

    fn fetch(&self, pc: u32) -> Result<u32, FaultKind> {
        if is_privileged(pc) {
            return Err(FaultKind::MemoryFault {
                addr: pc,
                privileged: true,
            });
        }
        if !pc.is_multiple_of(4) {
            return Err(FaultKind::MisalignedAccess { addr: pc });
        }
        let i = pc as usize;
        if i + 4 > self.ram.len() {
            return Err(FaultKind::MemoryFault {
                addr: pc,
                privileged: false,
            });
        }
        Ok(u32::from_le_bytes(self.ram[i..i + 4].try_into().unwrap()))
    }

    fn load(&self, addr: u32, width: u32) -> Result<u32, FaultKind> {
        if is_privileged(addr) {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: true,
            });
        }
        if width == 4 && !addr.is_multiple_of(4) {
            return Err(FaultKind::MisalignedAccess { addr });
        }
        if addr & !3 == MAILBOX_ADDR {
            return Ok(0);
        }
        if addr & !3 == TIMER_CTRL_ADDR {
            return Ok(if width == 4 {
                self.cpu.timer.period
            } else {
                self.cpu.timer.period & 0xFF
            });
        }
        let i = addr as usize;
        if i + width as usize > self.ram.len() {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: false,
            });
        }
        Ok(if width == 4 {
            u32::from_le_bytes(self.ram[i..i + 4].try_into().unwrap())
        } else {
            self.ram[i] as u32
        })
    }

    fn store(&mut self, addr: u32, width: u32, val: u32) -> Result<(), FaultKind> {
        if is_privileged(addr) {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: true,
            });
        }
        if width == 4 && !addr.is_multiple_of(4) {
            return Err(FaultKind::MisalignedAccess { addr });
        }
        if addr & !3 == MAILBOX_ADDR {
            let v = if width == 4 { val } else { val & 0xFF };
            self.events.push(DeviceEvent::Response(v));
            return Ok(());
        }
        if addr & !3 == TIMER_CTRL_ADDR {
            let v = if width == 4 { val } else { val & 0xFF };
            // counted from the retirement of this store
            self.cpu.timer.set_period(v, self.cpu.insn_count + 1);
            return Ok(());
        }
        let i = addr as usize;
        if i + width as usize > self.ram.len() {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: false,
            });
        }
        if width == 4 {
            self.ram[i..i + 4].copy_from_slice(&val.to_le_bytes());
        } else {
            self.ram[i] = val as u8;
        }
        self.touch(addr, width);
        Ok(())
    }

    /// Executes `insn` as the instruction at the current pc. On a fault the
    /// architectural state is left untouched.
    #[inline]
    fn execute(&mut self, insn: &Instruction) -> Exec {
        let pc = self.cpu.pc;
        let mut next = pc.wrapping_add(4);
        match *insn {
            Instruction::Halt => {
                self.cpu.insn_count += 1;
                self.cpu.halted = Some(self.cpu.regs[3]);
                return Exec::Fault(FaultKind::Halt {
                    code: self.cpu.regs[3],
                });
            }
            Instruction::Alu { op, rd, rs1, rs2 } => {
                let v = op.apply(self.reg(rs1), self.reg(rs2));
                self.set_reg(rd, v);
            }
            Instruction::Addi { rd, rs1, imm } => {
                let v = self.reg(rs1).wrapping_add(imm as u32);
                self.set_reg(rd, v);
            }
            Instruction::Ori { rd, rs1, imm } => {
                let v = self.reg(rs1) | imm;
                self.set_reg(rd, v);
            }
            Instruction::Lui { rd, imm } => self.set_reg(rd, imm << 12),
            Instruction::Lw { rd, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                match self.load(addr, 4) {
                    Ok(v) => self.set_reg(rd, v),
                    Err(k) => return Exec::Fault(k),
                }
            }
            Instruction::Lb { rd, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                match self.load(addr, 1) {
                    Ok(v) => self.set_reg(rd, v),
                    Err(k) => return Exec::Fault(k),
                }
            }
            Instruction::Sw { src, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                if let Err(k) = self.store(addr, 4, self.reg(src)) {
                    return Exec::Fault(k);
                }
            }
            Instruction::Sb { src, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                if let Err(k) = self.store(addr, 1, self.reg(src)) {
                    return Exec::Fault(k);
                }
            }
            Instruction::Branch {
                cond,
                rs1,
                rs2,
                offset,
            } => {
                if cond.holds(self.reg(rs1), self.reg(rs2)) {
                    next = pc.wrapping_add((offset as u32).wrapping_mul(4));
                }
            }
            Instruction::Jal { target } => {
                self.cpu.regs[Reg::LR.index()] = next;
                next = target.wrapping_mul(4);
            }
            Instruction::Jmp { target } => next = target.wrapping_mul(4),
            Instruction::Jr { rs } => {
                if rs == Reg::IRQ_LINK && self.cpu.in_isr {
                    self.cpu.in_isr = false;
                }
                next = self.reg(rs);
            }
            Instruction::Callr { rs } => {
                let target = self.reg(rs);
                self.cpu.regs[Reg::LR.index()] = next;
                next = target;
            }
            Instruction::Illegal(word) => {
                return Exec::Fault(FaultKind::IllegalInstruction { pc, word });
            }
        }
        self.cpu.pc = next;
        self.cpu.insn_count += 1;
        if insn.is_control_transfer() {
            self.poll_timer();
        }
        Exec::Next
    }

    fn poll_timer(&mut self) {
        if self.cpu.in_isr || !self.cpu.timer.due(self.cpu.insn_count) {
            return;
        }
        let Some(isr) = self.isr_addr else { return };
        self.cpu.regs[Reg::IRQ_LINK.index()] = self.cpu.pc;
        self.cpu.pc = isr;
        self.cpu.in_isr = true;
        self.cpu.timer.fired();
    }

    /// Executes exactly one instruction, decoding straight from memory.
    pub fn step(&mut self) -> StepOutcome {
        if let Some(code) = self.cpu.halted {
            return StepOutcome::Fault(self.fault(FaultKind::Halt { code }));
        }
        let word = match self.fetch(self.cpu.pc) {
            Ok(w) => w,
            Err(k) => return StepOutcome::Fault(self.fault(k)),
        };
        let before = self.events.len();
        match self.execute(&decode(word)) {
            Exec::Next => {}
            Exec::Fault(k) => return StepOutcome::Fault(self.fault(k)),
        }
        if self.events.len() > before {
            StepOutcome::Event(self.events.pop().unwrap())
        } else {
            StepOutcome::Ok
        }
    }

    fn translate(&mut self, start: u32) -> Result<Arc<BlockRecord>, FaultKind> {
        let mut insns = Vec::new();
        let mut addr = start;
        let terminator = loop {
            let insn = decode(self.fetch(addr)?);
            insns.push(insn);
            if insn.ends_block() {
                break match insn {
                    Instruction::Branch { .. } => Terminator::Branch,
                    Instruction::Jmp { .. } => Terminator::Jump,
                    Instruction::Jal { .. } | Instruction::Callr { .. } => Terminator::Call,
                    Instruction::Jr { .. } => Terminator::RetIndirect,
                    Instruction::Halt => Terminator::Halt,
                    _ => Terminator::Illegal,
                };
            }
            addr += 4;
            if self.is_hooked(addr) {
                break Terminator::HookSplit;
            }
            if insns.len() >= MAX_BLOCK_INSNS || addr as usize + 4 > self.ram.len() {
                break Terminator::Boundary;
            }
        };
        let block = Arc::new(BlockRecord {
            start,
            insns,
            terminator,
        });
        self.cache.insert(block.clone());
        Ok(block)
    }

    /// Looks up (or translates) the block at pc and fires its entry hooks.
    /// One-shot hooks are removed here.
    pub fn begin_block(&mut self) -> Result<BlockEntry, Fault> {
        if let Some(code) = self.cpu.halted {
            return Err(self.fault(FaultKind::Halt { code }));
        }
        let pc = self.cpu.pc;
        let block = match self.cache.get(pc) {
            Some(b) => b.clone(),
            None => self.translate(pc).map_err(|k| self.fault(k))?,
        };
        let hooks = self.fire_hooks(pc);
        Ok(BlockEntry { block, hooks })
    }

    /// Runs the members of a block obtained from [`Machine::begin_block`].
    /// Stops early on a fault, or when a store rewrote translated code (the
    /// remainder is re-translated on the next `begin_block`).
    pub fn exec_block(&mut self, block: &BlockRecord) -> BlockOutcome {
        debug_assert_eq!(block.start, self.cpu.pc);
        let gen = self.code_gen;
        for insn in &block.insns {
            if let Exec::Fault(k) = self.execute(insn) {
                return BlockOutcome::Fault(self.fault(k));
            }
            if insn.is_store() && self.code_gen != gen {
                break;
            }
        }
        BlockOutcome::Continue
    }

    /// Translates/fetches the block at pc, calls `on_entry` once, then
    /// executes it.
    pub fn run_block<F>(
        &mut self,
        mut on_entry: F,
    ) -> Result<(Arc<BlockRecord>, BlockOutcome), Fault>
    where
        F: FnMut(&mut Machine, &BlockRecord, &[HookId]),
    {
        let entry = self.begin_block()?;
        on_entry(self, &entry.block, &entry.hooks);
        let outcome = self.exec_block(&entry.block);
        Ok((entry.block, outcome))
    }

    // ---- snapshots ---------------------------------------------------------

    pub fn take_snapshot(&mut self) -> Snapshot {
        let snap = Snapshot::capture(&self.cpu, &self.ram);
        self.synced_snapshot = Some(snap.id());
        self.dirty.iter_mut().for_each(|d| *d = false);
        snap
    }

    /// Makes the machine bit-identical to `snap`. When `snap` is the last
    /// snapshot taken or restored, only pages written since are copied back.
    pub fn restore_snapshot(&mut self, snap: &Snapshot) {
        self.cpu = snap.cpu().clone();
        let src = snap.ram();
        if self.synced_snapshot == Some(snap.id()) && src.len() == self.ram.len() {
            for page in 0..self.dirty.len() {
                if !self.dirty[page] {
                    continue;
                }
                let lo = page << PAGE_SHIFT;
                let hi = lo + (1 << PAGE_SHIFT);
                self.ram[lo..hi].copy_from_slice(&src[lo..hi]);
                if self.cache.page_has_code(page) && self.cache.invalidate_page(page) {
                    self.code_gen += 1;
                }
                self.dirty[page] = false;
            }
        } else {
            if self.ram.len() != src.len() {
                self.ram = vec![0; src.len()];
                self.cache = BlockCache::new(src.len());
                self.dirty = vec![false; src.len() >> PAGE_SHIFT];
            } else {
                self.cache.flush();
            }
            self.ram.copy_from_slice(src);
            self.code_gen += 1;
            self.dirty.iter_mut().for_each(|d| *d = false);
        }
        self.events.clear();
        self.synced_snapshot = Some(snap.id());
    }
}

impl std::fmt::Debug for Machine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Machine")
            .field("cpu", &self.cpu)
            .field("ram_len", &self.ram.len())
            .finish()
    }
}
