//! Assembles a small FB32 program, runs it block by block until `HALT`, and
//! prints the machine state and a disassembly listing.
//!
//! ```text
//! cargo run --example run_guest
//! ```

use fbx::asm::{assemble, disassemble};
use fbx::loader::load_image;
use fbx::machine::{is_privileged, BlockOutcome, Machine, MachineConfig};

const SOURCE: &str = "
        .org 0x1000
        .global main
; sum of 1..=10 into r3, then a signed wrap-around in r4
main:
        ADDI r3, r0, 0
        ADDI r5, r0, 10
loop:
        ADD r3, r3, r5
        ADDI r5, r5, -1
        BNE r5, r0, loop
        LI r4, 0x7FFFFFFF
        ADDI r4, r4, 1
        HALT
";

fn main() -> anyhow::Result<()> {
    let asm = assemble(SOURCE)?;
    let image = asm.image();
    let mut m = Machine::new(MachineConfig::default());
    load_image(&mut m, &image)?;
    let mut blocks = 0;
    let fault = loop {
        let (_, outcome) = m
            .run_block(|_, _, _| blocks += 1)
            .map_err(|f| anyhow::anyhow!("{f}"))?;
        if let BlockOutcome::Fault(f) = outcome {
            break f;
        }
    };
    // HALT stops the machine with a sticky fault
    println!("stopped: {fault}");
    println!("blocks: {blocks}, instructions: {}", m.insn_count());
    println!(
        "r3 = {} (sum), r4 = 0x{:08X} (wrapped)",
        m.cpu().regs[3],
        m.cpu().regs[4]
    );
    println!("0xF0000000 privileged: {}", is_privileged(0xF000_0000));
    print!("{}", disassemble(&image.code, image.load_addr));
    Ok(())
}
