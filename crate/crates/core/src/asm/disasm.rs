use std::fmt::Write;

use crate::isa::decode;

/// Renders `image` (loaded at `base`) one word per line, preceded by an
/// `.org`. Undecodable words come out as `.word 0x…`, and a trailing partial
/// word as `.byte`, so the text always re-assembles to the same bytes.
pub fn disassemble(image: &[u8], base: u32) -> String {
    let mut out = String::new();
    writeln!(out, ".org 0x{base:08X}").unwrap();
    let mut chunks = image.chunks_exact(4);
    let mut pc = base;
    for chunk in &mut chunks {
        let word = u32::from_le_bytes(chunk.try_into().unwrap());
        writeln!(out, "    {}", decode(word).display_at(pc)).unwrap();
        pc = pc.wrapping_add(4);
    }
    let tail = chunks.remainder();
    if !tail.is_empty() {
        let bytes: Vec<String> = tail.iter().map(|b| format!("0x{b:02X}")).collect();
        writeln!(out, "    .byte {}", bytes.join(", ")).unwrap();
    }
    out
}
