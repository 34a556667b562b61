//! ISA oracles: a table of hand-encoded words with hand-computed effects,
//! an independent word-level reference interpreter, and the block-versus-step
//! differential over random programs.

use fbx::machine::{
    BlockOutcome, DeviceEvent, Fault, FaultKind, Machine, MachineConfig, StepOutcome,
};
use fbx::prng::Prng;

const BASE: u32 = 0x100;

pub struct Case {
    pub name: &'static str,
    pub words: &'static [u32],
    pub regs: &'static [(usize, u32)],
    pub mem: &'static [(u32, u32)],
    pub steps: usize,
    pub want_regs: &'static [(usize, u32)],
    pub want_mem: &'static [(u32, u32)],
    pub want_pc: u32,
    pub want_count: u64,
    /// Outcome of the last step.
    pub want: Want,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Ok,
    Response(u32),
    Fault(FaultKind),
}

const fn ok(
    name: &'static str,
    words: &'static [u32],
    regs: &'static [(usize, u32)],
    want_regs: &'static [(usize, u32)],
) -> Case {
    Case {
        name,
        words,
        regs,
        mem: &[],
        steps: 1,
        want_regs,
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    }
}

const fn jump(
    name: &'static str,
    words: &'static [u32],
    regs: &'static [(usize, u32)],
    want_pc: u32,
) -> Case {
    Case {
        name,
        words,
        regs,
        mem: &[],
        steps: 1,
        want_regs: &[],
        want_mem: &[],
        want_pc,
        want_count: 1,
        want: Want::Ok,
    }
}

/// The faulting instruction retires nothing: pc and count stay put.
const fn fault(
    name: &'static str,
    words: &'static [u32],
    regs: &'static [(usize, u32)],
    kind: FaultKind,
) -> Case {
    Case {
        name,
        words,
        regs,
        mem: &[],
        steps: 1,
        want_regs: &[],
        want_mem: &[],
        want_pc: BASE,
        want_count: 0,
        want: Want::Fault(kind),
    }
}

const fn mem_fault(addr: u32, privileged: bool) -> FaultKind {
    FaultKind::MemoryFault { addr, privileged }
}

pub const CASES: &[Case] = &[
    // ALU, R-format
    ok("add", &[0x0131_2000], &[(1, 7), (2, 5)], &[(3, 12)]),
    ok(
        "add wraps",
        &[0x0131_2000],
        &[(1, 0xFFFF_FFFF), (2, 1)],
        &[(3, 0)],
    ),
    ok("sub", &[0x0231_2000], &[(1, 7), (2, 5)], &[(3, 2)]),
    ok(
        "sub wraps",
        &[0x0231_2000],
        &[(1, 0), (2, 1)],
        &[(3, 0xFFFF_FFFF)],
    ),
    ok(
        "and",
        &[0x0331_2000],
        &[(1, 0xF0F0), (2, 0xFF00)],
        &[(3, 0xF000)],
    ),
    ok(
        "or",
        &[0x0431_2000],
        &[(1, 0xF0F0), (2, 0x0F00)],
        &[(3, 0xFFF0)],
    ),
    ok("xor", &[0x0531_2000], &[(1, 0xFF), (2, 0x0F)], &[(3, 0xF0)]),
    ok("shl", &[0x0631_2000], &[(1, 3), (2, 4)], &[(3, 48)]),
    ok(
        "shl masks amount",
        &[0x0631_2000],
        &[(1, 1), (2, 33)],
        &[(3, 2)],
    ),
    ok(
        "shl drops high bits",
        &[0x0631_2000],
        &[(1, 0x8000_0001), (2, 1)],
        &[(3, 2)],
    ),
    ok(
        "shr is logical",
        &[0x0731_2000],
        &[(1, 0x8000_0000), (2, 31)],
        &[(3, 1)],
    ),
    ok(
        "shr masks amount",
        &[0x0731_2000],
        &[(1, 0x100), (2, 36)],
        &[(3, 0x10)],
    ),
    ok("rd may alias rs", &[0x0111_1000], &[(1, 21)], &[(1, 42)]),
    ok("r0 reads zero", &[0x0130_2000], &[(2, 9)], &[(3, 9)]),
    ok("r0 ignores writes", &[0x0800_0005], &[], &[(0, 0)]),
    // I-format immediates
    ok("addi", &[0x0831_0005], &[(1, 10)], &[(3, 15)]),
    ok("addi sign-extends", &[0x0831_0FFF], &[(1, 10)], &[(3, 9)]),
    ok(
        "addi most negative",
        &[0x0831_0800],
        &[(1, 0)],
        &[(3, 0xFFFF_F800)],
    ),
    ok(
        "addi most positive",
        &[0x0831_07FF],
        &[(1, 0)],
        &[(3, 0x7FF)],
    ),
    ok(
        "addi wraps",
        &[0x0831_0001],
        &[(1, 0x7FFF_FFFF)],
        &[(3, 0x8000_0000)],
    ),
    ok(
        "ori zero-extends",
        &[0x0931_0FFF],
        &[(1, 0x1000)],
        &[(3, 0x1FFF)],
    ),
    ok("lui", &[0x0A3F_0000], &[], &[(3, 0xF000_0000)]),
    ok("lui all ones", &[0x0A3F_FFFF], &[], &[(3, 0xFFFF_F000)]),
    // loads and stores
    Case {
        name: "lw little-endian",
        words: &[0x0B31_0004],
        regs: &[(1, 0x800)],
        mem: &[(0x804, 0x1234_5678)],
        steps: 1,
        want_regs: &[(3, 0x1234_5678)],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "lw negative offset",
        words: &[0x0B31_0FFC],
        regs: &[(1, 0x804)],
        mem: &[(0x800, 0xCAFE_F00D)],
        steps: 1,
        want_regs: &[(3, 0xCAFE_F00D)],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "lw effective address wraps",
        words: &[0x0B31_0008],
        regs: &[(1, 0xFFFF_FFFC)],
        mem: &[(0x4, 0xABCD_0123)],
        steps: 1,
        want_regs: &[(3, 0xABCD_0123)],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "lb zero-extends",
        words: &[0x0C31_0003],
        regs: &[(1, 0x800)],
        mem: &[(0x800, 0x8000_0000)],
        steps: 1,
        want_regs: &[(3, 0x80)],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "lb unaligned is fine",
        words: &[0x0C31_0001],
        regs: &[(1, 0x800)],
        mem: &[(0x800, 0x0000_AB00)],
        steps: 1,
        want_regs: &[(3, 0xAB)],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "sw",
        words: &[0x0D01_2FF8],
        regs: &[(1, 0x808), (2, 0x0102_0304)],
        mem: &[],
        steps: 1,
        want_regs: &[],
        want_mem: &[(0x800, 0x0102_0304)],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "sb stores the low byte",
        words: &[0x0E01_2003],
        regs: &[(1, 0x800), (2, 0x1234_56AB)],
        mem: &[(0x800, 0x1111_1111)],
        steps: 1,
        want_regs: &[],
        want_mem: &[(0x800, 0xAB11_1111)],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "mailbox store responds",
        words: &[0x0D01_2000],
        regs: &[(1, 0xE000_0000), (2, 77)],
        mem: &[],
        steps: 1,
        want_regs: &[],
        want_mem: &[],
        want_pc: BASE + 4,
        want_count: 1,
        want: Want::Response(77),
    },
    ok(
        "mailbox loads zero",
        &[0x0B31_0000],
        &[(1, 0xE000_0000), (3, 5)],
        &[(3, 0)],
    ),
    // branches: offset counts instructions from the branch itself
    jump("beq taken", &[0x1001_2003], &[(1, 4), (2, 4)], BASE + 12),
    jump("beq not taken", &[0x1001_2003], &[(1, 4), (2, 5)], BASE + 4),
    jump("beq backwards", &[0x1001_2FFF], &[], BASE - 4),
    jump("beq offset zero loops", &[0x1001_2000], &[], BASE),
    jump(
        "beq most negative wraps",
        &[0x1001_2800],
        &[],
        BASE.wrapping_sub(0x2000),
    ),
    jump("bne taken", &[0x1101_2003], &[(1, 4), (2, 5)], BASE + 12),
    jump("bne not taken", &[0x1101_2003], &[(1, 4), (2, 4)], BASE + 4),
    jump(
        "blt is signed",
        &[0x1201_2003],
        &[(1, 0xFFFF_FFFF), (2, 1)],
        BASE + 12,
    ),
    jump(
        "blt extremes",
        &[0x1201_2003],
        &[(1, 0x8000_0000), (2, 0x7FFF_FFFF)],
        BASE + 12,
    ),
    jump(
        "blt equal not taken",
        &[0x1201_2003],
        &[(1, 3), (2, 3)],
        BASE + 4,
    ),
    jump(
        "bge equal taken",
        &[0x1301_2003],
        &[(1, 3), (2, 3)],
        BASE + 12,
    ),
    jump(
        "bge is signed",
        &[0x1301_2003],
        &[(1, 1), (2, 0xFFFF_FFFF)],
        BASE + 12,
    ),
    jump(
        "bge not taken",
        &[0x1301_2003],
        &[(1, 0x8000_0000), (2, 0)],
        BASE + 4,
    ),
    // jumps
    Case {
        name: "jal links",
        words: &[0x1400_0080],
        regs: &[],
        mem: &[],
        steps: 1,
        want_regs: &[(14, BASE + 4)],
        want_mem: &[],
        want_pc: 0x200,
        want_count: 1,
        want: Want::Ok,
    },
    jump("jmp", &[0x1500_0080], &[(14, 9)], 0x200),
    jump("jr", &[0x1601_0000], &[(1, 0x300)], 0x300),
    Case {
        name: "callr links",
        words: &[0x1701_0000],
        regs: &[(1, 0x300)],
        mem: &[],
        steps: 1,
        want_regs: &[(14, BASE + 4)],
        want_mem: &[],
        want_pc: 0x300,
        want_count: 1,
        want: Want::Ok,
    },
    Case {
        name: "halt reports r3",
        words: &[0x0000_0000],
        regs: &[(3, 42)],
        mem: &[],
        steps: 1,
        want_regs: &[],
        want_mem: &[],
        want_pc: BASE,
        want_count: 1,
        want: Want::Fault(FaultKind::Halt { code: 42 }),
    },
    Case {
        name: "halt is sticky",
        words: &[0x0000_0000],
        regs: &[(3, 1)],
        mem: &[],
        steps: 3,
        want_regs: &[],
        want_mem: &[],
        want_pc: BASE,
        want_count: 1,
        want: Want::Fault(FaultKind::Halt { code: 1 }),
    },
    // faults
    fault(
        "lw privileged",
        &[0x0B31_0000],
        &[(1, 0xF000_0FFC)],
        mem_fault(0xF000_0FFC, true),
    ),
    fault(
        "lb privileged",
        &[0x0C31_0000],
        &[(1, 0xF000_0000)],
        mem_fault(0xF000_0000, true),
    ),
    fault(
        "sw privileged",
        &[0x0D01_2000],
        &[(1, 0xF000_0800)],
        mem_fault(0xF000_0800, true),
    ),
    fault(
        "sb privileged",
        &[0x0E01_2000],
        &[(1, 0xF000_0FFF)],
        mem_fault(0xF000_0FFF, true),
    ),
    fault(
        "privileged beats misaligned",
        &[0x0B31_0000],
        &[(1, 0xF000_0001)],
        mem_fault(0xF000_0001, true),
    ),
    fault(
        "end of privileged region",
        &[0x0C31_0000],
        &[(1, 0xF000_1000)],
        mem_fault(0xF000_1000, false),
    ),
    fault(
        "below privileged region",
        &[0x0E01_2000],
        &[(1, 0xEFFF_FFFF)],
        mem_fault(0xEFFF_FFFF, false),
    ),
    fault(
        "past ram",
        &[0x0B31_0000],
        &[(1, 0x0010_0000)],
        mem_fault(0x0010_0000, false),
    ),
    fault(
        "lw misaligned",
        &[0x0B31_0000],
        &[(1, 0x802)],
        FaultKind::MisalignedAccess { addr: 0x802 },
    ),
    fault(
        "sw misaligned",
        &[0x0D01_2000],
        &[(1, 0x801)],
        FaultKind::MisalignedAccess { addr: 0x801 },
    ),
    fault(
        "unknown opcode",
        &[0x0F00_0000],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x0F00_0000,
        },
    ),
    fault(
        "opcode above range",
        &[0x1800_0000],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x1800_0000,
        },
    ),
    fault(
        "r-format reserved bits",
        &[0x0131_2001],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x0131_2001,
        },
    ),
    fault(
        "i-format reserved bits",
        &[0x0831_1005],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x0831_1005,
        },
    ),
    fault(
        "b-format reserved bits",
        &[0x0D11_2000],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x0D11_2000,
        },
    ),
    fault(
        "jr reserved bits",
        &[0x1601_1000],
        &[],
        FaultKind::IllegalInstruction {
            pc: BASE,
            word: 0x1601_1000,
        },
    ),
    fault(
        "halt reserved bits",
        &[0x0000_0001],
        &[],
        FaultKind::IllegalInstruction { pc: BASE, word: 1 },
    ),
    Case {
        name: "fetch misaligned",
        words: &[0x1601_0000],
        regs: &[(1, 0x302)],
        mem: &[],
        steps: 2,
        want_regs: &[],
        want_mem: &[],
        want_pc: 0x302,
        want_count: 1,
        want: Want::Fault(FaultKind::MisalignedAccess { addr: 0x302 }),
    },
    Case {
        name: "fetch privileged",
        words: &[0x1601_0000],
        regs: &[(1, 0xF000_0000)],
        mem: &[],
        steps: 2,
        want_regs: &[],
        want_mem: &[],
        want_pc: 0xF000_0000,
        want_count: 1,
        want: Want::Fault(mem_fault(0xF000_0000, true)),
    },
    Case {
        name: "fetch past ram",
        words: &[0x1500_0000 | 0x3F_FFFF],
        regs: &[],
        mem: &[],
        steps: 2,
        want_regs: &[],
        want_mem: &[],
        want_pc: 0x00FF_FFFC,
        want_count: 1,
        want: Want::Fault(mem_fault(0x00FF_FFFC, false)),
    },
];

fn check_case(c: &Case) -> Result<(), String> {
    let mut m = Machine::new(MachineConfig::default());
    let bytes: Vec<u8> = c.words.iter().flat_map(|w| w.to_le_bytes()).collect();
    m.write_memory(BASE, &bytes).unwrap();
    m.set_pc(BASE);
    for &(r, v) in c.regs {
        m.write_register(r, v).unwrap();
    }
    for &(a, v) in c.mem {
        m.write_u32(a, v).unwrap();
    }
    let before = m.cpu().regs;
    let mut last = StepOutcome::Ok;
    for _ in 0..c.steps {
        last = m.step();
    }
    let got = match last {
        StepOutcome::Ok => Want::Ok,
        StepOutcome::Event(DeviceEvent::Response(v)) => Want::Response(v),
        StepOutcome::Fault(f) => {
            if f.pc != m.pc() || f.regs != m.cpu().regs {
                return Err(format!(
                    "{}: fault context {f:?} does not match the machine",
                    c.name
                ));
            }
            Want::Fault(f.kind)
        }
    };
    let fail = |what: String| Err(format!("{}: {what}", c.name));
    if got != c.want {
        return fail(format!("outcome {got:?}, want {:?}", c.want));
    }
    if m.pc() != c.want_pc {
        return fail(format!("pc 0x{:08X}, want 0x{:08X}", m.pc(), c.want_pc));
    }
    if m.insn_count() != c.want_count {
        return fail(format!(
            "insn_count {}, want {}",
            m.insn_count(),
            c.want_count
        ));
    }
    let mut want = before;
    for &(r, v) in c.want_regs {
        want[r] = v;
    }
    if m.cpu().regs != want {
        return fail(format!("regs {:X?}, want {want:X?}", m.cpu().regs));
    }
    for &(a, v) in c.want_mem {
        let got = m.read_u32(a).unwrap();
        if got != v {
            return fail(format!("mem[0x{a:X}] = 0x{got:08X}, want 0x{v:08X}"));
        }
    }
    Ok(())
}

/// Runs every hand-computed case; returns how many ran.
pub fn hand_semantics() -> Result<usize, String> {
    let mut opcodes: Vec<u8> = CASES
        .iter()
        .flat_map(|c| c.words.iter().map(|w| (w >> 24) as u8))
        .collect();
    opcodes.sort_unstable();
    opcodes.dedup();
    let missing: Vec<u8> = (0x00..=0x17)
        .filter(|op| *op != 0x0F && !opcodes.contains(op))
        .collect();
    if !missing.is_empty() {
        return Err(format!(
            "opcodes without a hand-computed case: {missing:02X?}"
        ));
    }
    for c in CASES {
        check_case(c)?;
    }
    Ok(CASES.len())
}

// ---- reference interpreter -------------------------------------------------

/// A word-level interpreter written straight from the encoding table, sharing
/// no code with the crate's decoder or executor.
pub struct Reference {
    pub regs: [u32; 16],
    pub pc: u32,
    pub ram: Vec<u8>,
    pub count: u64,
    pub responses: Vec<u32>,
}

impl Reference {
    pub fn new(ram: Vec<u8>, pc: u32, regs: [u32; 16]) -> Self {
        Reference {
            regs,
            pc,
            ram,
            count: 0,
            responses: Vec::new(),
        }
    }

    fn check(&self, addr: u32, width: u32) -> Result<Option<usize>, FaultKind> {
        if (0xF000_0000..0xF000_1000).contains(&addr) {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: true,
            });
        }
        if width == 4 && !addr.is_multiple_of(4) {
            return Err(FaultKind::MisalignedAccess { addr });
        }
        if addr & !3 == 0xE000_0000 {
            return Ok(None);
        }
        if addr as u64 + width as u64 > self.ram.len() as u64 {
            return Err(FaultKind::MemoryFault {
                addr,
                privileged: false,
            });
        }
        Ok(Some(addr as usize))
    }

    /// One instruction; `Err` leaves the state untouched except for `HALT`,
    /// which retires.
    pub fn step(&mut self) -> Result<(), FaultKind> {
        let pc = self.pc;
        let Some(at) = self.check(pc, 4)? else {
            return Err(FaultKind::MemoryFault {
                addr: pc,
                privileged: false,
            });
        };
        let w = u32::from_le_bytes(self.ram[at..at + 4].try_into().unwrap());
        let op = w >> 24;
        let rd = ((w >> 20) & 15) as usize;
        let rs1 = ((w >> 16) & 15) as usize;
        let rs2 = ((w >> 12) & 15) as usize;
        let imm = w & 0xFFF;
        let sx = (((imm << 20) as i32) >> 20) as u32;
        let r = |i: usize| if i == 0 { 0 } else { self.regs[i] };
        let (a, b) = (r(rs1), r(rs2));
        let illegal = Err(FaultKind::IllegalInstruction { pc, word: w });
        let mut next = pc.wrapping_add(4);
        let mut write: Option<(usize, u32)> = None;
        match op {
            0x00 => {
                if w != 0 {
                    return illegal;
                }
                self.count += 1;
                return Err(FaultKind::Halt { code: self.regs[3] });
            }
            0x01..=0x07 => {
                if imm != 0 {
                    return illegal;
                }
                let v = match op {
                    0x01 => a.wrapping_add(b),
                    0x02 => a.wrapping_sub(b),
                    0x03 => a & b,
                    0x04 => a | b,
                    0x05 => a ^ b,
                    0x06 => a.wrapping_shl(b & 31),
                    _ => a.wrapping_shr(b & 31),
                };
                write = Some((rd, v));
            }
            0x08 | 0x09 | 0x0B | 0x0C => {
                if rs2 != 0 {
                    return illegal;
                }
                let v = match op {
                    0x08 => a.wrapping_add(sx),
                    0x09 => a | imm,
                    0x0B => {
                        let addr = a.wrapping_add(sx);
                        match self.check(addr, 4)? {
                            None => 0,
                            Some(i) => u32::from_le_bytes(self.ram[i..i + 4].try_into().unwrap()),
                        }
                    }
                    _ => {
                        let addr = a.wrapping_add(sx);
                        match self.check(addr, 1)? {
                            None => 0,
                            Some(i) => self.ram[i] as u32,
                        }
                    }
                };
                write = Some((rd, v));
            }
            0x0A => write = Some((rd, (w & 0xF_FFFF) << 12)),
            0x0D | 0x0E => {
                if rd != 0 {
                    return illegal;
                }
                let addr = a.wrapping_add(sx);
                let width = if op == 0x0D { 4 } else { 1 };
                match self.check(addr, width)? {
                    None => self.responses.push(if width == 4 { b } else { b & 0xFF }),
                    Some(i) if width == 4 => self.ram[i..i + 4].copy_from_slice(&b.to_le_bytes()),
                    Some(i) => self.ram[i] = b as u8,
                }
            }
            0x10..=0x13 => {
                if rd != 0 {
                    return illegal;
                }
                let taken = match op {
                    0x10 => a == b,
                    0x11 => a != b,
                    0x12 => (a as i32) < (b as i32),
                    _ => (a as i32) >= (b as i32),
                };
                if taken {
                    next = pc.wrapping_add(sx.wrapping_mul(4));
                }
            }
            0x14 => {
                write = Some((14, next));
                next = (w & 0xFF_FFFF) * 4;
            }
            0x15 => next = (w & 0xFF_FFFF) * 4,
            0x16 | 0x17 => {
                if rd != 0 || rs2 != 0 || imm != 0 {
                    return illegal;
                }
                if op == 0x17 {
                    write = Some((14, next));
                }
                next = a;
            }
            _ => return illegal,
        }
        if let Some((i, v)) = write {
            if i != 0 {
                self.regs[i] = v;
            }
        }
        self.pc = next;
        self.count += 1;
        Ok(())
    }
}

// ---- random programs -------------------------------------------------------

pub const PROG_BASE: u32 = 0x1000;
pub const DATA_BASE: u32 = 0x8000;
pub const PROG_LEN: usize = 50;
/// Instruction budget per program; loops are common.
pub const BUDGET: u64 = 4_000;

fn reg(p: &mut Prng) -> u32 {
    p.below(16) as u32
}

fn random_word(p: &mut Prng, k: usize) -> u32 {
    let rd = reg(p);
    let rs1 = reg(p);
    let rs2 = reg(p);
    // base registers biased towards r1 (data) and r2 (code)
    let base = match p.below(4) {
        0 => 1,
        1 => 2,
        _ => rs1,
    };
    let small = |p: &mut Prng| (p.below(64) as u32 * 4).wrapping_sub(64) & 0xFFF;
    match p.below(20) {
        0..=4 => (1 + p.below(7) as u32) << 24 | rd << 20 | rs1 << 16 | rs2 << 12,
        5 | 6 => 0x08 << 24 | rd << 20 | rs1 << 16 | p.below(4096) as u32,
        7 => 0x09 << 24 | rd << 20 | rs1 << 16 | p.below(4096) as u32,
        8 => 0x0A << 24 | rd << 20 | p.below(1 << 20) as u32,
        9 => 0x0B << 24 | rd << 20 | base << 16 | small(p),
        10 => 0x0C << 24 | rd << 20 | base << 16 | (p.below(256) as u32).wrapping_sub(128) & 0xFFF,
        11 => 0x0D << 24 | base << 16 | rs2 << 12 | small(p),
        12 => 0x0E << 24 | base << 16 | rs2 << 12 | (p.below(256) as u32).wrapping_sub(128) & 0xFFF,
        13 | 14 => {
            let lo = -(k as i64);
            let off = (lo + p.below((PROG_LEN + 4) as u64) as i64) as u32 & 0xFFF;
            (0x10 + p.below(4) as u32) << 24 | rs1 << 16 | rs2 << 12 | off
        }
        15 => (0x14 + p.below(2) as u32) << 24 | (PROG_BASE / 4 + p.below(PROG_LEN as u64) as u32),
        16 => (0x16 + p.below(2) as u32) << 24 | rs1 << 16,
        17 => 0,
        18 => p.next_u64() as u32,
        _ => 0x08 << 24 | rd << 20 | rd << 16 | 1,
    }
}

pub struct Program {
    pub words: Vec<u32>,
    pub regs: [u32; 16],
}

pub fn random_program(p: &mut Prng) -> Program {
    let words = (0..PROG_LEN).map(|k| random_word(p, k)).collect();
    let mut regs = [0u32; 16];
    for r in regs.iter_mut().skip(3) {
        *r = match p.below(4) {
            0 => p.next_u64() as u32,
            1 => p.below(32) as u32,
            2 => DATA_BASE + p.below(256) as u32 * 4,
            _ => PROG_BASE + p.below(PROG_LEN as u64) as u32 * 4,
        };
    }
    regs[1] = DATA_BASE + 0x100;
    regs[2] = PROG_BASE + 0x40;
    Program { words, regs }
}

fn machine_for(prog: &Program, timer: Option<(u32, u64)>) -> Machine {
    let mut cfg = MachineConfig {
        ram_len: 1 << 16,
        ..Default::default()
    };
    if let Some((period, seed)) = timer {
        // the ISR is the program itself
        cfg.isr_addr = Some(PROG_BASE);
        cfg.timer_period = period;
        cfg.timer_jitter = true;
        cfg.timer_seed = seed;
    }
    let mut m = Machine::new(cfg);
    let bytes: Vec<u8> = prog.words.iter().flat_map(|w| w.to_le_bytes()).collect();
    m.write_memory(PROG_BASE, &bytes).unwrap();
    m.set_pc(PROG_BASE);
    for (i, &v) in prog.regs.iter().enumerate().skip(1) {
        m.write_register(i, v).unwrap();
    }
    m
}

#[derive(Debug, PartialEq)]
struct End {
    fault: Option<Fault>,
    responses: Vec<u32>,
}

/// Steps until `until` instructions retired; when a fault is expected, on
/// until it shows up (a faulting instruction does not retire).
fn run_steps(m: &mut Machine, until: u64, expect_fault: bool) -> End {
    let mut responses = Vec::new();
    while m.insn_count() < until || (expect_fault && m.insn_count() == until) {
        match m.step() {
            StepOutcome::Ok => {}
            StepOutcome::Event(DeviceEvent::Response(v)) => responses.push(v),
            StepOutcome::Fault(f) => {
                return End {
                    fault: Some(f),
                    responses,
                }
            }
        }
    }
    End {
        fault: None,
        responses,
    }
}

fn run_blocks(m: &mut Machine, budget: u64) -> End {
    let mut fault = None;
    while m.insn_count() < budget {
        match m.run_block(|_, _, _| {}) {
            Ok((_, BlockOutcome::Continue)) => {}
            Ok((_, BlockOutcome::Fault(f))) | Err(f) => {
                fault = Some(f);
                break;
            }
        }
    }
    let responses = m
        .take_events()
        .into_iter()
        .map(|DeviceEvent::Response(v)| v)
        .collect();
    End { fault, responses }
}

/// Block execution against single-stepping on `n` random programs, half
/// of them with a jittered timer; timer-free programs are also checked
/// against [`Reference`]. Returns the total instructions compared.
pub fn differential(n: usize, seed: u64) -> Result<u64, String> {
    let mut p = Prng::new(seed);
    let mut total = 0;
    for i in 0..n {
        let prog = random_program(&mut p);
        let timer = (i % 2 == 1).then(|| (3 + p.below(40) as u32, p.next_u64()));
        let mut blocks = machine_for(&prog, timer);
        let b = run_blocks(&mut blocks, BUDGET);
        let mut steps = machine_for(&prog, timer);
        let s = run_steps(&mut steps, blocks.insn_count(), b.fault.is_some());
        let fail = |what: &str| {
            Err(format!(
                "program {i} (seed {seed}): {what}\n{:08X?}",
                prog.words
            ))
        };
        if b != s {
            return fail(&format!("block end {b:?} != step end {s:?}"));
        }
        if blocks.cpu() != steps.cpu() {
            return fail(&format!("cpu {:?} != {:?}", blocks.cpu(), steps.cpu()));
        }
        if blocks.ram() != steps.ram() {
            return fail("ram differs");
        }
        if timer.is_none() {
            let mut rf = Reference::new(
                machine_for(&prog, None).ram().to_vec(),
                PROG_BASE,
                prog.regs,
            );
            rf.regs[0] = 0;
            let mut rfault = None;
            while rf.count < steps.insn_count() || (s.fault.is_some() && rfault.is_none()) {
                if let Err(k) = rf.step() {
                    rfault = Some(k);
                    break;
                }
            }
            if rfault != s.fault.as_ref().map(|f| f.kind) {
                return fail(&format!("reference fault {rfault:?} != {:?}", s.fault));
            }
            if rf.regs != steps.cpu().regs || rf.pc != steps.pc() || rf.count != steps.insn_count()
            {
                return fail(&format!(
                    "reference state {:X?} pc {:X} != {:X?}",
                    rf.regs,
                    rf.pc,
                    steps.cpu()
                ));
            }
            if rf.ram != steps.ram() || rf.responses != s.responses {
                return fail("reference memory or responses differ");
            }
        }
        total += blocks.insn_count();
    }
    Ok(total)
}
