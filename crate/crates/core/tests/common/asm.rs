//! Assembler and encoder round-trips.

use fbx::asm::{assemble, disassemble};
use fbx::isa::{decode, encode, AluOp, Cond, Instruction, Reg};
use fbx::loader::{parse_symbols, GuestImage};
use fbx::prng::Prng;
use fbx::targets;

pub const ALU: [AluOp; 7] = [
    AluOp::Add,
    AluOp::Sub,
    AluOp::And,
    AluOp::Or,
    AluOp::Xor,
    AluOp::Shl,
    AluOp::Shr,
];
pub const CONDS: [Cond; 4] = [Cond::Eq, Cond::Ne, Cond::Lt, Cond::Ge];
const SIMM12: [i32; 9] = [-2048, -2047, -1000, -1, 0, 1, 4, 1000, 2047];
const UIMM12: [u32; 6] = [0, 1, 0x7FF, 0x800, 0xABC, 0xFFF];
const IMM20: [u32; 5] = [0, 1, 0x8_0000, 0xF_0000, 0xF_FFFF];
const IMM24: [u32; 5] = [0, 1, 0x40_0000, 0x80_0000, 0xFF_FFFF];

fn regs() -> impl Iterator<Item = Reg> + Clone {
    (0..16).map(|i| Reg::new(i).unwrap())
}

/// Every encodable instruction shape: all register combinations for the
/// register-only forms, every register pair crossed with boundary and
/// interior immediates for the rest.
pub fn all_shapes() -> Vec<Instruction> {
    use Instruction as I;
    let mut out = vec![I::Halt];
    for op in ALU {
        for rd in regs() {
            for rs1 in regs() {
                for rs2 in regs() {
                    out.push(I::Alu { op, rd, rs1, rs2 });
                }
            }
        }
    }
    for a in regs() {
        for b in regs() {
            for imm in SIMM12 {
                out.push(I::Addi { rd: a, rs1: b, imm });
                out.push(I::Lw {
                    rd: a,
                    base: b,
                    offset: imm,
                });
                out.push(I::Lb {
                    rd: a,
                    base: b,
                    offset: imm,
                });
                out.push(I::Sw {
                    src: a,
                    base: b,
                    offset: imm,
                });
                out.push(I::Sb {
                    src: a,
                    base: b,
                    offset: imm,
                });
                for cond in CONDS {
                    out.push(I::Branch {
                        cond,
                        rs1: a,
                        rs2: b,
                        offset: imm,
                    });
                }
            }
            for imm in UIMM12 {
                out.push(I::Ori { rd: a, rs1: b, imm });
            }
        }
        for imm in IMM20 {
            out.push(I::Lui { rd: a, imm });
        }
        out.push(I::Jr { rs: a });
        out.push(I::Callr { rs: a });
    }
    for target in IMM24 {
        out.push(I::Jal { target });
        out.push(I::Jmp { target });
    }
    out
}

/// `decode(encode(i)) == i` over [`all_shapes`], and every legal word in a
/// sample of each opcode byte re-encodes to itself.
pub fn encode_decode() -> Result<usize, String> {
    let shapes = all_shapes();
    for insn in &shapes {
        let w = encode(insn).map_err(|e| format!("{insn:?}: {e}"))?;
        let back = decode(w);
        if back != *insn {
            return Err(format!("{insn:?} -> 0x{w:08X} -> {back:?}"));
        }
    }
    let mut p = Prng::new(2);
    for op in 0..=255u32 {
        for _ in 0..2048 {
            let w = op << 24 | (p.next_u64() as u32 & 0xFF_FFFF);
            let w = if p.below(2) == 0 { w & 0xFFFF_F000 } else { w };
            let d = decode(w);
            match encode(&d) {
                Ok(e) if e == w => {}
                other => return Err(format!("0x{w:08X} -> {d:?} -> {other:?}")),
            }
        }
    }
    Ok(shapes.len())
}

/// For each bundled target: the source assembles to the prebuilt image and
/// symbol files, and its disassembly re-assembles to identical bytes.
pub fn bundled_round_trip() -> Result<usize, String> {
    for t in &targets::ALL {
        let a = assemble(t.source).map_err(|e| format!("{}: {e}", t.name))?;
        let prebuilt =
            GuestImage::parse(t.prebuilt_image).map_err(|e| format!("{}: {e}", t.name))?;
        if a.image() != prebuilt {
            return Err(format!("{}: prebuilt image is stale", t.name));
        }
        let syms = parse_symbols(t.prebuilt_symbols).map_err(|e| format!("{}: {e}", t.name))?;
        if syms.symbols() != a.symbol_table().symbols() {
            return Err(format!("{}: prebuilt symbols are stale", t.name));
        }
        let text = disassemble(&a.code, a.base);
        let b = assemble(&text)
            .map_err(|e| format!("{}: disassembly does not assemble: {e}", t.name))?;
        if (b.base, &b.code) != (a.base, &a.code) {
            let at = a.code.iter().zip(&b.code).position(|(x, y)| x != y);
            return Err(format!("{}: round trip differs at byte {at:?}", t.name));
        }
    }
    Ok(targets::ALL.len())
}
