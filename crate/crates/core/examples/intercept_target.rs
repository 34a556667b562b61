//! Boots a bundled guest, stops at its first call to `parse_msg`, and runs
//! the same invocation once per input, each from the same snapshot.
//!
//! ```text
//! cargo run --example intercept_target -- [target] [input...]
//! cargo run --example intercept_target -- brackets_easy '[{}]' '{}' '{'
//! ```

use fbx::orchestrator::{
    Detector, Executor, Guest, WindowEnd, DEFAULT_MAX_INPUT_LEN, DEFAULT_RECORD_BUDGET,
    DEFAULT_TIMEOUT_INSNS,
};
use fbx::targets;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "brackets_easy".into());
    let t = targets::by_name(&name).ok_or_else(|| anyhow::anyhow!("unknown target {name}"))?;
    let mut inputs: Vec<String> = args.collect();
    if inputs.is_empty() {
        inputs = vec!["[{}]".into(), "{]".into(), "{}".into()];
    }

    let guest = Guest::bundled(t);
    let mut ex = Executor::new(&guest, DEFAULT_TIMEOUT_INSNS, DEFAULT_MAX_INPUT_LEN as u32)?;
    let frame = ex.advance(DEFAULT_RECORD_BUDGET)?.clone();
    let buf = frame.buffer(0).expect("parse_msg takes a buffer");
    println!(
        "{name}: parse_msg entered after {} insns, buffer 0x{:08X} len {} cap {}, returns to 0x{:08X}",
        frame.entry_insn, buf.addr, buf.size, buf.cap, frame.return_addr
    );
    let seed = ex.capture_seed(true)?;
    println!(
        "seed input: {:?}",
        String::from_utf8_lossy(&seed.to_input(&guest.spec))
    );
    let snap = seed.snapshot.expect("captured with a snapshot");

    for input in &inputs {
        ex.resume_from(&snap, &frame)?;
        let r = ex.run_window(input.as_bytes(), WindowEnd::TargetDone)?;
        let verdict = match r.outcome(Detector::Emulation).kind().name() {
            "ok" => format!("returned r3 = {}", r.regs[3]),
            _ => r.outcome(Detector::Emulation).to_string(),
        };
        println!("{input:>12?}: {verdict} after {} insns", r.insns);
    }
    Ok(())
}
