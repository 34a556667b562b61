//! Re-assembles the bundled guests into `targets/<name>.img` and `.sym`.
//!
//! ```text
//! cargo run --example build_targets
//! ```

use std::path::Path;

use fbx::asm::assemble;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("targets");
    for t in &fbx::targets::ALL {
        let src = std::fs::read_to_string(dir.join(format!("{}.s", t.name)))?;
        let asm = assemble(&src).map_err(|e| std::io::Error::other(format!("{}: {e}", t.name)))?;
        std::fs::write(dir.join(format!("{}.img", t.name)), asm.image().to_bytes())?;
        std::fs::write(
            dir.join(format!("{}.sym", t.name)),
            asm.symbol_table().render(),
        )?;
        println!(
            "{:<14} {:>5} bytes  entry 0x{:08X}",
            t.name,
            asm.code.len(),
            asm.entry()
        );
    }
    Ok(())
}
