//! Interception and injection.
//!
//! An [`ArmedTarget`] owns a block-entry hook on the target function. Each
//! fire yields a [`HarnessEvent::Pre`] with a [`Frame`] describing the
//! arguments. For post-invocation targets the entry fire also reads the
//! return address from the convention's link register and arms a one-shot
//! hook there; the matching [`HarnessEvent::Post`] carries the frame captured
//! at entry. Pending returns form a per-target stack, so recursion pairs
//! every post event with its own pre event.

mod convention;
mod spec;

use std::sync::Arc;

use smallvec::SmallVec;

pub use convention::{ArgLoc, ConventionProfile};
pub use spec::{ParamMode, ParamSpec, SizeRule, TargetSpec, When, Window};

use crate::loader::{SymbolError, SymbolTable};
use crate::machine::{HookId, HookKind, Machine, MachineError, Snapshot};

pub const DEFAULT_MAX_SEED_LEN: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error("symbol `{0}` is not a code (T) symbol")]
    NotCode(String),
    #[error("harness memory access failed: {0}")]
    Range(#[from] MachineError),
    #[error("parameter {index}: resolved size {size} exceeds max_seed_len {max}")]
    SizeOverflow { index: usize, size: u32, max: u32 },
    #[error("parameter {index}: window [{offset}, +{len}) exceeds the resolved size {size}")]
    WindowOutOfRange {
        index: usize,
        offset: u32,
        len: u32,
        size: u32,
    },
    #[error("invalid target spec: {0}")]
    BadSpec(String),
}

/// Location and size of a pointer parameter, resolved at entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferLoc {
    /// Position of the parameter in `TargetSpec::params`.
    pub param: usize,
    pub addr: u32,
    /// Size resolved from the size rule at entry.
    pub size: u32,
    /// Bytes the harness may write: `max(size, capacity)`.
    pub cap: u32,
}

/// Arguments of one invocation, read at the entry hook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub invocation: u64,
    pub entry_insn: u64,
    /// Return address read from the link register at entry.
    pub return_addr: u32,
    /// Raw argument word for every declared parameter, in spec order.
    pub values: Vec<u32>,
    pub buffers: Vec<BufferLoc>,
}

impl Frame {
    pub fn buffer(&self, param: usize) -> Option<&BufferLoc> {
        self.buffers.iter().find(|b| b.param == param)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedBuffer {
    pub param: usize,
    pub addr: u32,
    pub bytes: Vec<u8>,
}

/// Argument values captured at an interception; the raw material of a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRecord {
    pub insn_count: u64,
    /// `(spec position, value)` for every value-mode parameter.
    pub values: Vec<(usize, u32)>,
    pub buffers: Vec<CapturedBuffer>,
    /// Machine state at the interception point, in snapshot execution.
    pub snapshot: Option<Arc<Snapshot>>,
}

impl SeedRecord {
    /// Lays the record out as a fuzz input: fuzzed value parameters as
    /// little-endian words, then the fuzzed buffer (its window if one is set).
    pub fn to_input(&self, spec: &TargetSpec) -> Vec<u8> {
        let mut out = Vec::new();
        for (pos, p) in spec.params.iter().enumerate() {
            if p.fuzz && p.mode == ParamMode::Value {
                let v = self
                    .values
                    .iter()
                    .find(|(i, _)| *i == pos)
                    .map_or(0, |&(_, v)| v);
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some((pos, p)) = spec.fuzzed_pointer() {
            if let Some(buf) = self.buffers.iter().find(|b| b.param == pos) {
                match p.window {
                    Some(w) => out.extend_from_slice(
                        &buf.bytes[w.offset as usize..(w.offset + w.len) as usize],
                    ),
                    None => out.extend_from_slice(&buf.bytes),
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HarnessEvent {
    Pre(Frame),
    Post(Frame),
}

struct PendingReturn {
    ra: u32,
    frame: Frame,
}

/// A target function with its entry hook registered.
pub struct ArmedTarget {
    spec: TargetSpec,
    profile: ConventionProfile,
    entry: u32,
    entry_hook: HookId,
    max_seed_len: u32,
    pending: Vec<PendingReturn>,
    /// One-shot hooks currently registered, by return address.
    return_hooks: Vec<(u32, HookId)>,
    next_invocation: u64,
}

impl ArmedTarget {
    /// Resolves the target symbol and hooks its first instruction.
    pub fn arm(
        spec: TargetSpec,
        profile: ConventionProfile,
        table: &SymbolTable,
        m: &mut Machine,
        max_seed_len: u32,
    ) -> Result<ArmedTarget, HarnessError> {
        spec.validate()?;
        profile.validate()?;
        let entry = resolve_code(table, &spec.symbol)?;
        let entry_hook = m.register_hook(entry, HookKind::BlockEntryAlways)?;
        Ok(ArmedTarget {
            spec,
            profile,
            entry,
            entry_hook,
            max_seed_len,
            pending: Vec::new(),
            return_hooks: Vec::new(),
            next_invocation: 0,
        })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn profile(&self) -> &ConventionProfile {
        &self.profile
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn entry_hook(&self) -> HookId {
        self.entry_hook
    }

    pub fn pending_returns(&self) -> usize {
        self.pending.len()
    }

    /// Interprets the hooks that fired on entry to the current block.
    pub fn on_block(
        &mut self,
        m: &mut Machine,
        fired: &[HookId],
    ) -> Result<SmallVec<[HarnessEvent; 1]>, HarnessError> {
        let mut events = SmallVec::new();
        if fired.is_empty() {
            return Ok(events);
        }
        for &id in fired {
            if let Some(k) = self.return_hooks.iter().position(|&(_, h)| h == id) {
                let (ra, _) = self.return_hooks.swap_remove(k);
                let Some(p) = self.pending.iter().rposition(|p| p.ra == ra) else {
                    continue;
                };
                let done = self.pending.remove(p);
                if self.pending.iter().any(|p| p.ra == ra) {
                    let h = m.register_hook(ra, HookKind::BlockEntryOnce)?;
                    self.return_hooks.push((ra, h));
                }
                events.push(HarnessEvent::Post(done.frame));
            }
        }
        if fired.contains(&self.entry_hook) {
            let frame = self.read_frame(m)?;
            if self.spec.when == When::Post {
                let ra = frame.return_addr;
                if !self.return_hooks.iter().any(|&(a, _)| a == ra) {
                    let h = m.register_hook(ra, HookKind::BlockEntryOnce)?;
                    self.return_hooks.push((ra, h));
                }
                self.pending.push(PendingReturn {
                    ra,
                    frame: frame.clone(),
                });
            }
            events.push(HarnessEvent::Pre(frame));
        }
        Ok(events)
    }

    /// Drops every pending return and its hook, after the machine was reset.
    pub fn clear_pending(&mut self, m: &mut Machine) {
        for (_, h) in self.return_hooks.drain(..) {
            m.clear_hook(h);
        }
        self.pending.clear();
    }

    /// Reads the arguments of the invocation the machine is paused at.
    pub fn read_frame(&mut self, m: &Machine) -> Result<Frame, HarnessError> {
        let invocation = self.next_invocation;
        self.next_invocation += 1;
        let values = (0..self.spec.params.len())
            .map(|pos| self.profile.read_arg(m, self.spec.params[pos].index))
            .collect::<Result<Vec<_>, _>>()?;
        let mut buffers = Vec::new();
        for (pos, p) in self.spec.params.iter().enumerate() {
            if p.mode != ParamMode::Pointer {
                continue;
            }
            let size = match p.size {
                Some(SizeRule::Static(n)) => n,
                Some(SizeRule::FromParam(j)) => self.profile.read_arg(m, j)?,
                None => {
                    return Err(HarnessError::BadSpec(format!(
                        "parameter {} has no size rule",
                        p.index
                    )))
                }
            };
            if size > self.max_seed_len {
                return Err(HarnessError::SizeOverflow {
                    index: p.index,
                    size,
                    max: self.max_seed_len,
                });
            }
            if let Some(w) = p.window {
                if w.offset as u64 + w.len as u64 > size as u64 {
                    return Err(HarnessError::WindowOutOfRange {
                        index: p.index,
                        offset: w.offset,
                        len: w.len,
                        size,
                    });
                }
            }
            let cap = match p.size {
                Some(SizeRule::FromParam(_)) => {
                    size.max(p.capacity.unwrap_or(0)).min(self.max_seed_len)
                }
                _ => size,
            };
            let addr = values[pos];
            m.read_memory(addr, cap as usize)?;
            buffers.push(BufferLoc {
                param: pos,
                addr,
                size,
                cap,
            });
        }
        let return_addr = m.read_register(self.profile.ra_reg.index())?;
        Ok(Frame {
            invocation,
            entry_insn: m.insn_count(),
            return_addr,
            values,
            buffers,
        })
    }

    /// Copies the current argument values and buffers into a seed record.
    pub fn capture(&self, m: &Machine, frame: &Frame) -> Result<SeedRecord, HarnessError> {
        let values = self
            .spec
            .params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.mode == ParamMode::Value)
            .map(|(pos, _)| (pos, frame.values[pos]))
            .collect();
        let buffers = frame
            .buffers
            .iter()
            .map(|b| {
                Ok(CapturedBuffer {
                    param: b.param,
                    addr: b.addr,
                    bytes: m.read_memory(b.addr, b.size as usize)?,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(SeedRecord {
            insn_count: m.insn_count(),
            values,
            buffers,
            snapshot: None,
        })
    }

    /// Writes `input` into the paused invocation described by `frame`.
    pub fn inject(&self, m: &mut Machine, frame: &Frame, input: &[u8]) -> Result<(), HarnessError> {
        let mut off = 0usize;
        let mut fuzzed_values: Vec<(usize, u32)> = Vec::new();
        for (pos, p) in self.spec.params.iter().enumerate() {
            if !(p.fuzz && p.mode == ParamMode::Value) {
                continue;
            }
            let mut word = [0u8; 4];
            let avail = input.len().saturating_sub(off).min(4);
            word[..avail].copy_from_slice(&input[off..off + avail]);
            off += 4;
            fuzzed_values.push((pos, u32::from_le_bytes(word)));
        }
        let segment = &input[off.min(input.len())..];

        let mut len_override: Option<(usize, u32)> = None;
        if let Some((pos, p)) = self.spec.fuzzed_pointer() {
            let loc = frame
                .buffer(pos)
                .expect("frame resolves every pointer parameter");
            match p.window {
                Some(w) => {
                    let n = segment.len().min(w.len as usize);
                    m.write_memory(loc.addr + w.offset, &segment[..n])?;
                }
                None => {
                    let n = segment.len().min(loc.cap as usize);
                    m.write_memory(loc.addr, &segment[..n])?;
                    if let (Some(SizeRule::FromParam(j)), When::Pre) = (p.size, self.spec.when) {
                        len_override = Some((j, n as u32));
                    }
                }
            }
        }

        for (pos, mut v) in fuzzed_values {
            let index = self.spec.params[pos].index;
            // a fuzzed length field never exceeds the buffer allocation
            if let Some((j, _)) = len_override {
                if j == index {
                    let (bpos, _) = self.spec.fuzzed_pointer().unwrap();
                    v = v.min(frame.buffer(bpos).unwrap().cap);
                    len_override = None;
                }
            }
            self.profile.write_arg(m, index, v)?;
        }
        if let Some((j, n)) = len_override {
            self.profile.write_arg(m, j, n)?;
        }
        Ok(())
    }
}

fn resolve_code(table: &SymbolTable, name: &str) -> Result<u32, HarnessError> {
    let (addr, kind) = table
        .get(name)
        .ok_or_else(|| SymbolError::SymbolNotFound(name.to_string()))?;
    if !kind.is_code() {
        return Err(HarnessError::NotCode(name.to_string()));
    }
    Ok(addr)
}

/// Entry hooks on crash or error-handling functions.
#[derive(Debug, Clone, Default)]
pub struct CrashHooks {
    hooks: Vec<(HookId, String)>,
}

impl CrashHooks {
    pub fn arm(
        names: &[String],
        table: &SymbolTable,
        m: &mut Machine,
    ) -> Result<CrashHooks, HarnessError> {
        let mut hooks = Vec::with_capacity(names.len());
        for name in names {
            let addr = resolve_code(table, name)?;
            hooks.push((
                m.register_hook(addr, HookKind::BlockEntryAlways)?,
                name.clone(),
            ));
        }
        Ok(CrashHooks { hooks })
    }

    /// Name of the first crash function among the fired hooks.
    pub fn check(&self, fired: &[HookId]) -> Option<&str> {
        fired.iter().find_map(|id| {
            self.hooks
                .iter()
                .find(|(h, _)| h == id)
                .map(|(_, n)| n.as_str())
        })
    }

    pub fn is_empty(&self) -> bool {
        self.hooks.is_empty()
    }
}
