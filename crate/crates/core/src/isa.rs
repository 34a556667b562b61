//! FB32 instruction encoding.
//!
//! Every instruction is one little-endian 32-bit word with the opcode in the
//! top byte. Five layouts exist:
//!
//! ```text
//! R  [31:24 op][23:20 rd][19:16 rs1][15:12 rs2][11:0 = 0]
//! I  [31:24 op][23:20 rd][19:16 rs1][15:12 = 0][11:0 imm12]
//! U  [31:24 op][23:20 rd][19:0 imm20]
//! B  [31:24 op][23:20 = 0][19:16 rs1][15:12 rs2][11:0 imm12]
//! J  [31:24 op][23:0 imm24]
//! ```
//!
//! Decoding is strict: a word whose reserved fields are non-zero decodes to
//! [`Instruction::Illegal`], so every legal word re-encodes to itself.

use std::fmt;

/// A general-purpose register index, `r0..=r15`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    /// Interrupt link register; holds the resume pc while the timer ISR runs.
    pub const IRQ_LINK: Reg = Reg(12);
    pub const SP: Reg = Reg(13);
    pub const LR: Reg = Reg(14);

    /// Returns `None` for indices above 15.
    pub const fn new(idx: u8) -> Option<Reg> {
        if idx < 16 {
            Some(Reg(idx))
        } else {
            None
        }
    }

    const fn from_field(bits: u32) -> Reg {
        Reg((bits & 0xF) as u8)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

pub mod opcode {
    pub const HALT: u8 = 0x00;
    pub const ADD: u8 = 0x01;
    pub const SUB: u8 = 0x02;
    pub const AND: u8 = 0x03;
    pub const OR: u8 = 0x04;
    pub const XOR: u8 = 0x05;
    pub const SHL: u8 = 0x06;
    pub const SHR: u8 = 0x07;
    pub const ADDI: u8 = 0x08;
    pub const ORI: u8 = 0x09;
    pub const LUI: u8 = 0x0A;
    pub const LW: u8 = 0x0B;
    pub const LB: u8 = 0x0C;
    pub const SW: u8 = 0x0D;
    pub const SB: u8 = 0x0E;
    pub const BEQ: u8 = 0x10;
    pub const BNE: u8 = 0x11;
    pub const BLT: u8 = 0x12;
    pub const BGE: u8 = 0x13;
    pub const JAL: u8 = 0x14;
    pub const JMP: u8 = 0x15;
    pub const JR: u8 = 0x16;
    pub const CALLR: u8 = 0x17;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl AluOp {
    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Shl => a << (b & 31),
            AluOp::Shr => a >> (b & 31),
        }
    }

    fn opcode(self) -> u8 {
        match self {
            AluOp::Add => opcode::ADD,
            AluOp::Sub => opcode::SUB,
            AluOp::And => opcode::AND,
            AluOp::Or => opcode::OR,
            AluOp::Xor => opcode::XOR,
            AluOp::Shl => opcode::SHL,
            AluOp::Shr => opcode::SHR,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "ADD",
            AluOp::Sub => "SUB",
            AluOp::And => "AND",
            AluOp::Or => "OR",
            AluOp::Xor => "XOR",
            AluOp::Shl => "SHL",
            AluOp::Shr => "SHR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    /// Signed less-than.
    Lt,
    /// Signed greater-or-equal.
    Ge,
}

impl Cond {
    pub fn holds(self, a: u32, b: u32) -> bool {
        match self {
            Cond::Eq => a == b,
            Cond::Ne => a != b,
            Cond::Lt => (a as i32) < (b as i32),
            Cond::Ge => (a as i32) >= (b as i32),
        }
    }

    fn opcode(self) -> u8 {
        match self {
            Cond::Eq => opcode::BEQ,
            Cond::Ne => opcode::BNE,
            Cond::Lt => opcode::BLT,
            Cond::Ge => opcode::BGE,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Eq => "BEQ",
            Cond::Ne => "BNE",
            Cond::Lt => "BLT",
            Cond::Ge => "BGE",
        }
    }
}

/// A decoded FB32 instruction. Immediates are stored already extended:
/// `offset` fields are in instructions (the machine scales them by 4) and
/// `target` fields are absolute word indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Halt,
    Alu {
        op: AluOp,
        rd: Reg,
        rs1: Reg,
        rs2: Reg,
    },
    /// `rd := rs1 + sext(imm12)`
    Addi {
        rd: Reg,
        rs1: Reg,
        imm: i32,
    },
    /// `rd := rs1 | zext(imm12)`
    Ori {
        rd: Reg,
        rs1: Reg,
        imm: u32,
    },
    /// `rd := imm20 << 12`
    Lui {
        rd: Reg,
        imm: u32,
    },
    Lw {
        rd: Reg,
        base: Reg,
        offset: i32,
    },
    /// Byte load, zero-extended.
    Lb {
        rd: Reg,
        base: Reg,
        offset: i32,
    },
    Sw {
        src: Reg,
        base: Reg,
        offset: i32,
    },
    Sb {
        src: Reg,
        base: Reg,
        offset: i32,
    },
    Branch {
        cond: Cond,
        rs1: Reg,
        rs2: Reg,
        offset: i32,
    },
    Jal {
        target: u32,
    },
    Jmp {
        target: u32,
    },
    Jr {
        rs: Reg,
    },
    Callr {
        rs: Reg,
    },
    /// Any word that does not decode; faults when executed.
    Illegal(u32),
}

const IMM12_MASK: u32 = 0xFFF;
const IMM20_MASK: u32 = 0xF_FFFF;
const IMM24_MASK: u32 = 0xFF_FFFF;

fn sext12(v: u32) -> i32 {
    ((v << 20) as i32) >> 20
}

/// Decodes one instruction word. Total: unknown or malformed words become
/// [`Instruction::Illegal`].
pub fn decode(word: u32) -> Instruction {
    let op = (word >> 24) as u8;
    let rd = Reg::from_field(word >> 20);
    let rs1 = Reg::from_field(word >> 16);
    let rs2 = Reg::from_field(word >> 12);
    let imm12 = word & IMM12_MASK;
    let rd_bits = (word >> 20) & 0xF;
    let rs2_bits = (word >> 12) & 0xF;

    let illegal = Instruction::Illegal(word);
    match op {
        opcode::HALT => {
            if word == 0 {
                Instruction::Halt
            } else {
                illegal
            }
        }
        opcode::ADD..=opcode::SHR => {
            if imm12 != 0 {
                return illegal;
            }
            let op = match op {
                opcode::ADD => AluOp::Add,
                opcode::SUB => AluOp::Sub,
                opcode::AND => AluOp::And,
                opcode::OR => AluOp::Or,
                opcode::XOR => AluOp::Xor,
                opcode::SHL => AluOp::Shl,
                _ => AluOp::Shr,
            };
            Instruction::Alu { op, rd, rs1, rs2 }
        }
        opcode::ADDI | opcode::ORI | opcode::LW | opcode::LB => {
            if rs2_bits != 0 {
                return illegal;
            }
            match op {
                opcode::ADDI => Instruction::Addi {
                    rd,
                    rs1,
                    imm: sext12(imm12),
                },
                opcode::ORI => Instruction::Ori {
                    rd,
                    rs1,
                    imm: imm12,
                },
                opcode::LW => Instruction::Lw {
                    rd,
                    base: rs1,
                    offset: sext12(imm12),
                },
                _ => Instruction::Lb {
                    rd,
                    base: rs1,
                    offset: sext12(imm12),
                },
            }
        }
        opcode::LUI => Instruction::Lui {
            rd,
            imm: word & IMM20_MASK,
        },
        opcode::SW | opcode::SB | opcode::BEQ..=opcode::BGE => {
            if rd_bits != 0 {
                return illegal;
            }
            let offset = sext12(imm12);
            match op {
                opcode::SW => Instruction::Sw {
                    src: rs2,
                    base: rs1,
                    offset,
                },
                opcode::SB => Instruction::Sb {
                    src: rs2,
                    base: rs1,
                    offset,
                },
                opcode::BEQ => Instruction::Branch {
                    cond: Cond::Eq,
                    rs1,
                    rs2,
                    offset,
                },
                opcode::BNE => Instruction::Branch {
                    cond: Cond::Ne,
                    rs1,
                    rs2,
                    offset,
                },
                opcode::BLT => Instruction::Branch {
                    cond: Cond::Lt,
                    rs1,
                    rs2,
                    offset,
                },
                _ => Instruction::Branch {
                    cond: Cond::Ge,
                    rs1,
                    rs2,
                    offset,
                },
            }
        }
        opcode::JAL => Instruction::Jal {
            target: word & IMM24_MASK,
        },
        opcode::JMP => Instruction::Jmp {
            target: word & IMM24_MASK,
        },
        opcode::JR | opcode::CALLR => {
            if rd_bits != 0 || rs2_bits != 0 || imm12 != 0 {
                return illegal;
            }
            if op == opcode::JR {
                Instruction::Jr { rs: rs1 }
            } else {
                Instruction::Callr { rs: rs1 }
            }
        }
        _ => illegal,
    }
}

/// An instruction operand did not fit its encoding field.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{field} value {value} does not fit the encoding")]
pub struct EncodeError {
    pub field: &'static str,
    pub value: i64,
}

fn r_word(op: u8, rd: Reg, rs1: Reg, rs2: Reg) -> u32 {
    (op as u32) << 24 | (rd.0 as u32) << 20 | (rs1.0 as u32) << 16 | (rs2.0 as u32) << 12
}

fn simm12(field: &'static str, v: i32) -> Result<u32, EncodeError> {
    if (-2048..=2047).contains(&v) {
        Ok(v as u32 & IMM12_MASK)
    } else {
        Err(EncodeError {
            field,
            value: v as i64,
        })
    }
}

fn check_mask(field: &'static str, v: u32, mask: u32) -> Result<u32, EncodeError> {
    if v & !mask == 0 {
        Ok(v)
    } else {
        Err(EncodeError {
            field,
            value: v as i64,
        })
    }
}

/// Encodes an instruction. `Illegal(w)` encodes back to `w`.
pub fn encode(insn: &Instruction) -> Result<u32, EncodeError> {
    use Instruction::*;
    Ok(match *insn {
        Halt => 0,
        Alu { op, rd, rs1, rs2 } => r_word(op.opcode(), rd, rs1, rs2),
        Addi { rd, rs1, imm } => r_word(opcode::ADDI, rd, rs1, Reg::ZERO) | simm12("imm12", imm)?,
        Ori { rd, rs1, imm } => {
            r_word(opcode::ORI, rd, rs1, Reg::ZERO) | check_mask("imm12", imm, IMM12_MASK)?
        }
        Lui { rd, imm } => {
            r_word(opcode::LUI, rd, Reg::ZERO, Reg::ZERO) | check_mask("imm20", imm, IMM20_MASK)?
        }
        Lw { rd, base, offset } => {
            r_word(opcode::LW, rd, base, Reg::ZERO) | simm12("offset", offset)?
        }
        Lb { rd, base, offset } => {
            r_word(opcode::LB, rd, base, Reg::ZERO) | simm12("offset", offset)?
        }
        Sw { src, base, offset } => {
            r_word(opcode::SW, Reg::ZERO, base, src) | simm12("offset", offset)?
        }
        Sb { src, base, offset } => {
            r_word(opcode::SB, Reg::ZERO, base, src) | simm12("offset", offset)?
        }
        Branch {
            cond,
            rs1,
            rs2,
            offset,
        } => r_word(cond.opcode(), Reg::ZERO, rs1, rs2) | simm12("branch offset", offset)?,
        Jal { target } => (opcode::JAL as u32) << 24 | check_mask("imm24", target, IMM24_MASK)?,
        Jmp { target } => (opcode::JMP as u32) << 24 | check_mask("imm24", target, IMM24_MASK)?,
        Jr { rs } => r_word(opcode::JR, Reg::ZERO, rs, Reg::ZERO),
        Callr { rs } => r_word(opcode::CALLR, Reg::ZERO, rs, Reg::ZERO),
        Illegal(w) => w,
    })
}

impl Instruction {
    /// True for instructions that may transfer control and therefore end a
    /// basic block. Timer interrupts are only taken after one of these.
    pub fn is_control_transfer(&self) -> bool {
        matches!(
            self,
            Instruction::Branch { .. }
                | Instruction::Jal { .. }
                | Instruction::Jmp { .. }
                | Instruction::Jr { .. }
                | Instruction::Callr { .. }
        )
    }

    /// Ends a basic block at translation time.
    pub fn ends_block(&self) -> bool {
        self.is_control_transfer() || matches!(self, Instruction::Halt | Instruction::Illegal(_))
    }

    /// Memory-writing instruction; used to detect self-modifying code.
    pub fn is_store(&self) -> bool {
        matches!(self, Instruction::Sw { .. } | Instruction::Sb { .. })
    }
}

fn fmt_mem(f: &mut fmt::Formatter<'_>, base: Reg, offset: i32) -> fmt::Result {
    if offset < 0 {
        write!(f, "[{}-{}]", base, -(offset as i64))
    } else {
        write!(f, "[{}+{}]", base, offset)
    }
}

impl Instruction {
    /// Renders in assembler syntax. Branch and jump targets are printed as
    /// absolute addresses, so the instruction's own address is required.
    pub fn display_at(&self, pc: u32) -> DisplayAt<'_> {
        DisplayAt { insn: self, pc }
    }
}

pub struct DisplayAt<'a> {
    insn: &'a Instruction,
    pc: u32,
}

impl fmt::Display for DisplayAt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        match *self.insn {
            Halt => write!(f, "HALT"),
            Alu { op, rd, rs1, rs2 } => write!(f, "{} {}, {}, {}", op.mnemonic(), rd, rs1, rs2),
            Addi { rd, rs1, imm } => write!(f, "ADDI {}, {}, {}", rd, rs1, imm),
            Ori { rd, rs1, imm } => write!(f, "ORI {}, {}, 0x{:03X}", rd, rs1, imm),
            Lui { rd, imm } => write!(f, "LUI {}, 0x{:05X}", rd, imm),
            Lw { rd, base, offset } => {
                write!(f, "LW {}, ", rd)?;
                fmt_mem(f, base, offset)
            }
            Lb { rd, base, offset } => {
                write!(f, "LB {}, ", rd)?;
                fmt_mem(f, base, offset)
            }
            Sw { src, base, offset } => {
                write!(f, "SW {}, ", src)?;
                fmt_mem(f, base, offset)
            }
            Sb { src, base, offset } => {
                write!(f, "SB {}, ", src)?;
                fmt_mem(f, base, offset)
            }
            Branch {
                cond,
                rs1,
                rs2,
                offset,
            } => {
                let target = self.pc.wrapping_add((offset as u32).wrapping_mul(4));
                write!(f, "{} {}, {}, 0x{:08X}", cond.mnemonic(), rs1, rs2, target)
            }
            Jal { target } => write!(f, "JAL 0x{:08X}", target * 4),
            Jmp { target } => write!(f, "JMP 0x{:08X}", target * 4),
            Jr { rs } => write!(f, "JR {}", rs),
            Callr { rs } => write!(f, "CALLR {}", rs),
            Illegal(w) => write!(f, ".word 0x{:08X}", w),
        }
    }
}
