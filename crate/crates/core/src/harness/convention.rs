use crate::isa::Reg;
use crate::machine::{Machine, MachineError};

use super::HarnessError;

/// Where a positional argument lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgLoc {
    Reg(Reg),
    /// Byte offset from sp.
    Stack(u32),
}

/// Maps argument positions to registers and stack slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConventionProfile {
    pub name: String,
    pub arg_regs: Vec<Reg>,
    /// Offset from sp of the first argument not passed in a register.
    pub stack_arg_base: u32,
    pub ret_reg: Reg,
    /// Holds the return address on entry.
    pub ra_reg: Reg,
}

impl ConventionProfile {
    pub const BUILTIN: [&'static str; 2] = ["fb32-std", "fb32-stack"];

    /// Arguments in r3..r10, the rest at `[sp+0]`, `[sp+4]`, ...
    pub fn fb32_std() -> ConventionProfile {
        ConventionProfile {
            name: "fb32-std".into(),
            arg_regs: (3..=10).map(|i| Reg::new(i).unwrap()).collect(),
            stack_arg_base: 0,
            ret_reg: Reg::new(3).unwrap(),
            ra_reg: Reg::LR,
        }
    }

    /// Every argument on the stack.
    pub fn fb32_stack() -> ConventionProfile {
        ConventionProfile {
            name: "fb32-stack".into(),
            arg_regs: Vec::new(),
            stack_arg_base: 0,
            ret_reg: Reg::new(3).unwrap(),
            ra_reg: Reg::LR,
        }
    }

    pub fn by_name(name: &str) -> Option<ConventionProfile> {
        match name {
            "fb32-std" => Some(Self::fb32_std()),
            "fb32-stack" => Some(Self::fb32_stack()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.arg_regs.contains(&Reg::ZERO) {
            return Err(HarnessError::BadSpec(format!(
                "{}: r0 cannot carry an argument",
                self.name
            )));
        }
        if self.ra_reg == Reg::SP {
            return Err(HarnessError::BadSpec(format!(
                "{}: the return address cannot live in sp",
                self.name
            )));
        }
        Ok(())
    }

    pub fn arg_loc(&self, index: usize) -> ArgLoc {
        match self.arg_regs.get(index) {
            Some(&r) => ArgLoc::Reg(r),
            None => ArgLoc::Stack(self.stack_arg_base + 4 * (index - self.arg_regs.len()) as u32),
        }
    }

    fn slot_addr(m: &Machine, off: u32) -> Result<u32, MachineError> {
        Ok(m.read_register(Reg::SP.index())?.wrapping_add(off))
    }

    pub fn read_arg(&self, m: &Machine, index: usize) -> Result<u32, HarnessError> {
        Ok(match self.arg_loc(index) {
            ArgLoc::Reg(r) => m.read_register(r.index())?,
            ArgLoc::Stack(off) => m.read_u32(Self::slot_addr(m, off)?)?,
        })
    }

    pub fn write_arg(&self, m: &mut Machine, index: usize, val: u32) -> Result<(), HarnessError> {
        match self.arg_loc(index) {
            ArgLoc::Reg(r) => m.write_register(r.index(), val)?,
            ArgLoc::Stack(off) => {
                let a = Self::slot_addr(m, off)?;
                m.write_u32(a, val)?
            }
        }
        Ok(())
    }
}
