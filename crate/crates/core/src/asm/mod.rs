//! Two-pass FB32 assembler and a matching disassembler.
//!
//! Source is line-oriented: `[label:] mnemonic operands… [; comment]`.
//! Pass one lays out addresses and collects labels; pass two encodes.
//!
//! Directives: `.org addr`, `.word v…`, `.byte v…`, `.ascii "…"`,
//! `.global name`, plus `.align n` and `.space n` for laying out buffers.
//! Pseudo-instructions: `LI rd, imm32` (always `LUI` + `ORI`), `RET`,
//! `NOP`, `CALL label`.
//!
//! Branch and jump operands are absolute addresses, written either as a
//! label or a number; the disassembler prints them the same way, so
//! disassembled output re-assembles to identical bytes.

mod disasm;
mod parse;

use std::collections::{BTreeMap, HashMap, HashSet};

pub use disasm::disassemble;

use crate::isa::{encode, AluOp, Cond, Instruction, Reg};
use crate::loader::{GuestImage, Symbol, SymbolKind, SymbolTable};
use parse::{parse_line, Item, Operand, Stmt};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: undefined label `{name}`")]
    UndefinedLabel { line: usize, name: String },
    #[error("line {line}: duplicate label `{name}`")]
    DuplicateLabel { line: usize, name: String },
    #[error("line {line}: branch target 0x{target:08X} out of range")]
    BranchOutOfRange { line: usize, target: u32 },
}

pub(crate) fn syntax(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        msg: msg.into(),
    }
}

/// Assembled program: a flat code/data blob at `base` plus its symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub base: u32,
    pub code: Vec<u8>,
    /// Exported symbols in address order (nm style).
    pub symbols: Vec<Symbol>,
    /// Every label, exported or not.
    pub labels: BTreeMap<String, u32>,
}

impl Assembly {
    /// Entry point: the `main` label if present, otherwise the base.
    pub fn entry(&self) -> u32 {
        self.labels.get("main").copied().unwrap_or(self.base)
    }

    pub fn image(&self) -> GuestImage {
        GuestImage {
            load_addr: self.base,
            entry: self.entry(),
            code: self.code.clone(),
        }
    }

    pub fn symbol_table(&self) -> SymbolTable {
        SymbolTable::from_symbols(self.symbols.iter().cloned())
            .expect("assembler labels are unique")
    }
}

struct Placed<'a> {
    line: usize,
    addr: u32,
    stmt: Stmt<'a>,
}

fn stmt_size(stmt: &Stmt<'_>) -> u32 {
    match stmt {
        Stmt::Insn { mnemonic, .. } if mnemonic.eq_ignore_ascii_case("LI") => 8,
        Stmt::Insn { .. } => 4,
        Stmt::Word(vals) => 4 * vals.len() as u32,
        Stmt::Bytes(b) => b.len() as u32,
        Stmt::Space(n) => *n,
        _ => 0,
    }
}

/// Assembles `source` into a flat image with symbols.
pub fn assemble(source: &str) -> Result<Assembly, AsmError> {
    // pass 1: layout
    let mut placed = Vec::new();
    let mut labels: BTreeMap<String, u32> = BTreeMap::new();
    let mut label_line: HashMap<String, usize> = HashMap::new();
    let mut globals: HashSet<String> = HashSet::new();
    // labels waiting for the next emitting statement, to classify T vs D
    let mut pending: Vec<String> = Vec::new();
    let mut is_data: HashMap<String, bool> = HashMap::new();
    let mut base: Option<u32> = None;
    let mut addr: u32 = 0;

    for (idx, text) in source.lines().enumerate() {
        let line = idx + 1;
        let Item { labels: defs, stmt } = parse_line(text, line)?;
        for name in defs {
            if labels.insert(name.to_string(), addr).is_some() {
                return Err(AsmError::DuplicateLabel {
                    line,
                    name: name.to_string(),
                });
            }
            label_line.insert(name.to_string(), line);
            pending.push(name.to_string());
        }
        let Some(stmt) = stmt else { continue };
        match &stmt {
            Stmt::Org(target) => {
                if base.is_none() && placed.is_empty() && pending.is_empty() {
                    base = Some(*target);
                } else if *target < addr {
                    return Err(syntax(line, format!(".org 0x{target:X} moves backwards")));
                }
                addr = *target;
                // labels written just before `.org` refer to the new address
                for name in &pending {
                    labels.insert(name.clone(), addr);
                }
                continue;
            }
            Stmt::Align(n) => {
                if *n == 0 || !n.is_power_of_two() {
                    return Err(syntax(line, ".align needs a power of two"));
                }
                let aligned = addr.next_multiple_of(*n);
                placed.push(Placed {
                    line,
                    addr,
                    stmt: Stmt::Space(aligned - addr),
                });
                addr = aligned;
                for name in &pending {
                    labels.insert(name.clone(), addr);
                }
                continue;
            }
            Stmt::Global(name) => {
                globals.insert(name.to_string());
                continue;
            }
            _ => {}
        }
        base.get_or_insert(0);
        let data = !matches!(stmt, Stmt::Insn { .. });
        if matches!(stmt, Stmt::Insn { .. } | Stmt::Word(_)) && !addr.is_multiple_of(4) {
            return Err(syntax(
                line,
                format!("unaligned address 0x{addr:X} for a word or instruction"),
            ));
        }
        for name in pending.drain(..) {
            is_data.insert(name, data);
        }
        let size = stmt_size(&stmt);
        placed.push(Placed { line, addr, stmt });
        addr = addr
            .checked_add(size)
            .ok_or_else(|| syntax(line, "program runs past the end of the address space"))?;
    }
    for g in &globals {
        if !labels.contains_key(g) {
            let line = source
                .lines()
                .position(|l| l.contains(g.as_str()))
                .map_or(0, |p| p + 1);
            return Err(AsmError::UndefinedLabel {
                line,
                name: g.clone(),
            });
        }
    }

    // pass 2: encode
    let base = base.unwrap_or(0);
    let mut code = vec![0u8; (addr - base) as usize];
    let ctx = Ctx { labels: &labels };
    for p in &placed {
        let off = (p.addr - base) as usize;
        let mut put = |bytes: &[u8]| code[off..off + bytes.len()].copy_from_slice(bytes);
        match &p.stmt {
            Stmt::Insn { mnemonic, operands } => {
                let words = ctx.encode_insn(p.line, p.addr, mnemonic, operands)?;
                let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
                put(&bytes);
            }
            Stmt::Word(vals) => {
                let mut bytes = Vec::with_capacity(vals.len() * 4);
                for v in vals {
                    bytes.extend_from_slice(&ctx.value_u32(p.line, v)?.to_le_bytes());
                }
                put(&bytes);
            }
            Stmt::Bytes(b) => put(b),
            _ => {}
        }
    }

    let mut symbols: Vec<Symbol> = labels
        .iter()
        .filter_map(|(name, &a)| {
            let data = is_data.get(name).copied().unwrap_or(false);
            let kind = if data {
                SymbolKind::DATA
            } else if globals.contains(name) {
                SymbolKind::TEXT
            } else {
                return None;
            };
            Some(Symbol {
                addr: a,
                kind,
                name: name.clone(),
            })
        })
        .collect();
    symbols.sort_by(|a, b| (a.addr, &a.name).cmp(&(b.addr, &b.name)));

    Ok(Assembly {
        base,
        code,
        symbols,
        labels,
    })
}

struct Ctx<'a> {
    labels: &'a BTreeMap<String, u32>,
}

impl Ctx<'_> {
    fn value(&self, line: usize, op: &Operand<'_>) -> Result<i64, AsmError> {
        match op {
            Operand::Num(n) => Ok(*n),
            Operand::Ident(name) => {
                self.labels
                    .get(*name)
                    .map(|&a| a as i64)
                    .ok_or_else(|| AsmError::UndefinedLabel {
                        line,
                        name: name.to_string(),
                    })
            }
            _ => Err(syntax(line, "expected a number or label")),
        }
    }

    fn value_u32(&self, line: usize, op: &Operand<'_>) -> Result<u32, AsmError> {
        let v = self.value(line, op)?;
        if (i32::MIN as i64..=u32::MAX as i64).contains(&v) {
            Ok(v as u32)
        } else {
            Err(syntax(line, format!("value {v} does not fit in 32 bits")))
        }
    }

    fn encode_insn(
        &self,
        line: usize,
        pc: u32,
        mnemonic: &str,
        ops: &[Operand<'_>],
    ) -> Result<Vec<u32>, AsmError> {
        let m = mnemonic.to_ascii_uppercase();
        let arity = |n: usize| {
            if ops.len() == n {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    format!("{m} takes {n} operand(s), got {}", ops.len()),
                ))
            }
        };
        let reg = |i: usize| match ops[i] {
            Operand::Reg(r) => Ok(r),
            _ => Err(syntax(
                line,
                format!("{m}: operand {} must be a register", i + 1),
            )),
        };
        let mem = |i: usize| match ops[i] {
            Operand::Mem(base, off) => Ok((base, off)),
            _ => Err(syntax(
                line,
                format!("{m}: operand {} must be [reg+offset]", i + 1),
            )),
        };
        let imm = |i: usize, lo: i64, hi: i64| {
            let v = self.value(line, &ops[i])?;
            if (lo..=hi).contains(&v) {
                Ok(v)
            } else {
                Err(syntax(
                    line,
                    format!("{m}: immediate {v} outside [{lo}, {hi}]"),
                ))
            }
        };
        let off12 = |off: i64| {
            if (-2048..=2047).contains(&off) {
                Ok(off as i32)
            } else {
                Err(syntax(
                    line,
                    format!("{m}: offset {off} does not fit 12 bits"),
                ))
            }
        };
        let jump_target = |i: usize| {
            let t = self.value_u32(line, &ops[i])?;
            if t % 4 != 0 || t / 4 > 0xFF_FFFF {
                return Err(AsmError::BranchOutOfRange { line, target: t });
            }
            Ok(t / 4)
        };

        let alu = |op: AluOp| -> Result<Instruction, AsmError> {
            arity(3)?;
            Ok(Instruction::Alu {
                op,
                rd: reg(0)?,
                rs1: reg(1)?,
                rs2: reg(2)?,
            })
        };
        let branch = |cond: Cond| -> Result<Instruction, AsmError> {
            arity(3)?;
            let target = self.value_u32(line, &ops[2])?;
            let delta = target.wrapping_sub(pc) as i32;
            if delta % 4 != 0 || !(-2048..=2047).contains(&(delta / 4)) {
                return Err(AsmError::BranchOutOfRange { line, target });
            }
            Ok(Instruction::Branch {
                cond,
                rs1: reg(0)?,
                rs2: reg(1)?,
                offset: delta / 4,
            })
        };

        let insn = match m.as_str() {
            "HALT" => {
                arity(0)?;
                Instruction::Halt
            }
            "ADD" => alu(AluOp::Add)?,
            "SUB" => alu(AluOp::Sub)?,
            "AND" => alu(AluOp::And)?,
            "OR" => alu(AluOp::Or)?,
            "XOR" => alu(AluOp::Xor)?,
            "SHL" => alu(AluOp::Shl)?,
            "SHR" => alu(AluOp::Shr)?,
            "ADDI" => {
                arity(3)?;
                Instruction::Addi {
                    rd: reg(0)?,
                    rs1: reg(1)?,
                    imm: imm(2, -2048, 2047)? as i32,
                }
            }
            "ORI" => {
                arity(3)?;
                Instruction::Ori {
                    rd: reg(0)?,
                    rs1: reg(1)?,
                    imm: imm(2, 0, 0xFFF)? as u32,
                }
            }
            "LUI" => {
                arity(2)?;
                Instruction::Lui {
                    rd: reg(0)?,
                    imm: imm(1, 0, 0xF_FFFF)? as u32,
                }
            }
            "LW" | "LB" => {
                arity(2)?;
                let (base, off) = mem(1)?;
                let offset = off12(off)?;
                if m == "LW" {
                    Instruction::Lw {
                        rd: reg(0)?,
                        base,
                        offset,
                    }
                } else {
                    Instruction::Lb {
                        rd: reg(0)?,
                        base,
                        offset,
                    }
                }
            }
            "SW" | "SB" => {
                arity(2)?;
                let (base, off) = mem(1)?;
                let offset = off12(off)?;
                if m == "SW" {
                    Instruction::Sw {
                        src: reg(0)?,
                        base,
                        offset,
                    }
                } else {
                    Instruction::Sb {
                        src: reg(0)?,
                        base,
                        offset,
                    }
                }
            }
            "BEQ" => branch(Cond::Eq)?,
            "BNE" => branch(Cond::Ne)?,
            "BLT" => branch(Cond::Lt)?,
            "BGE" => branch(Cond::Ge)?,
            "JAL" | "CALL" => {
                arity(1)?;
                Instruction::Jal {
                    target: jump_target(0)?,
                }
            }
            "JMP" => {
                arity(1)?;
                Instruction::Jmp {
                    target: jump_target(0)?,
                }
            }
            "JR" => {
                arity(1)?;
                Instruction::Jr { rs: reg(0)? }
            }
            "CALLR" => {
                arity(1)?;
                Instruction::Callr { rs: reg(0)? }
            }
            "RET" => {
                arity(0)?;
                Instruction::Jr { rs: Reg::LR }
            }
            "NOP" => {
                arity(0)?;
                Instruction::Alu {
                    op: AluOp::Add,
                    rd: Reg::ZERO,
                    rs1: Reg::ZERO,
                    rs2: Reg::ZERO,
                }
            }
            "LI" => {
                arity(2)?;
                let rd = reg(0)?;
                let v = self.value_u32(line, &ops[1])?;
                let hi = Instruction::Lui { rd, imm: v >> 12 };
                let lo = Instruction::Ori {
                    rd,
                    rs1: rd,
                    imm: v & 0xFFF,
                };
                return Ok(vec![enc(line, &hi)?, enc(line, &lo)?]);
            }
            _ => return Err(syntax(line, format!("unknown mnemonic `{mnemonic}`"))),
        };
        Ok(vec![enc(line, &insn)?])
    }
}

fn enc(line: usize, insn: &Instruction) -> Result<u32, AsmError> {
    encode(insn).map_err(|e| syntax(line, e.to_string()))
}
