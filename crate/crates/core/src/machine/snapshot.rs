use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{CpuState, TimerState};
use crate::prng::Prng;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Whole-machine state: CPU, timer (including its jitter PRNG) and RAM.
/// Cloning is cheap; RAM is shared.
#[derive(Clone, Debug)]
pub struct Snapshot {
    id: u64,
    cpu: CpuState,
    ram: Arc<[u8]>,
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.cpu == other.cpu && self.ram == other.ram
    }
}

impl Eq for Snapshot {}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("not a snapshot file")]
    BadMagic,
    #[error("snapshot file truncated")]
    Truncated,
}

const MAGIC: &[u8; 4] = b"FBSN";

impl Snapshot {
    pub(crate) fn capture(cpu: &CpuState, ram: &[u8]) -> Self {
        Snapshot {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            cpu: cpu.clone(),
            ram: ram.into(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn cpu(&self) -> &CpuState {
        &self.cpu
    }

    pub fn ram(&self) -> &[u8] {
        &self.ram
    }

    /// Flat little-endian encoding, used to persist recorded fuzz states.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.cpu;
        let mut out = Vec::with_capacity(128 + self.ram.len());
        out.extend_from_slice(MAGIC);
        for r in c.regs {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&c.pc.to_le_bytes());
        out.extend_from_slice(&c.insn_count.to_le_bytes());
        out.push(c.in_isr as u8);
        out.push(c.halted.is_some() as u8);
        out.extend_from_slice(&c.halted.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&c.timer.period.to_le_bytes());
        out.push(c.timer.jitter_enabled as u8);
        out.extend_from_slice(&c.timer.next_fire.to_le_bytes());
        out.extend_from_slice(&c.timer.prng.state().to_le_bytes());
        out.extend_from_slice(&(self.ram.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.ram);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut rd = Reader { buf: bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let mut regs = [0u32; 16];
        for r in regs.iter_mut() {
            *r = rd.u32()?;
        }
        let pc = rd.u32()?;
        let insn_count = rd.u64()?;
        let in_isr = rd.u8()? != 0;
        let has_halt = rd.u8()? != 0;
        let code = rd.u32()?;
        let period = rd.u32()?;
        let jitter_enabled = rd.u8()? != 0;
        let next_fire = rd.u64()?;
        let prng = Prng::new(rd.u64()?);
        let ram_len = rd.u32()? as usize;
        let ram = rd.take(ram_len)?;
        let cpu = CpuState {
            regs,
            pc,
            insn_count,
            in_isr,
            timer: TimerState {
                period,
                jitter_enabled,
                next_fire,
                prng,
            },
            halted: has_halt.then_some(code),
        };
        Ok(Snapshot::capture(&cpu, ram))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(SnapshotError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
