//! Shows why the blacklist pre-analysis exists: with a jittered timer, the
//! interrupt handler lands at a different point in every window, so
//! replaying one unchanged input keeps reporting "new" coverage until the
//! handler's blocks are blacklisted.
//!
//! ```text
//! cargo run --example coverage_noise
//! ```

use fbx::coverage::blacklist_analysis;
use fbx::orchestrator::{
    CampaignError, Executor, Guest, WindowEnd, DEFAULT_MAX_INPUT_LEN, DEFAULT_RECORD_BUDGET,
    DEFAULT_TIMEOUT_INSNS,
};
use fbx::targets;

fn novelty(blacklist_runs: usize) -> Result<usize, CampaignError> {
    let t = targets::by_name("brackets_hard").unwrap();
    let guest = Guest::bundled(t).with_timer(10_000, true, 1);
    let mut ex = Executor::new(&guest, DEFAULT_TIMEOUT_INSNS, DEFAULT_MAX_INPUT_LEN as u32)?;
    ex.advance(DEFAULT_RECORD_BUDGET)?;
    let seed = ex.capture_seed(false)?.to_input(&guest.spec);
    if blacklist_runs >= 2 {
        let bl = blacklist_analysis(blacklist_runs, |_| {
            ex.run_window(&seed, WindowEnd::Interception)?;
            Ok::<_, CampaignError>(ex.coverage().trace())
        })?;
        println!("blacklisted blocks: {:08X?}", bl.blocks);
        ex.coverage_mut().set_blacklist(&bl);
    }
    let mut novel = 0;
    for i in 0..=100 {
        ex.run_window(&seed, WindowEnd::Interception)?;
        let n = ex.coverage_mut().has_new_bits();
        if i > 0 && n.is_new() {
            novel += 1;
        }
    }
    Ok(novel)
}

fn main() -> Result<(), CampaignError> {
    println!("novel windows without blacklist: {} of 100", novelty(0)?);
    println!("novel windows with blacklist:    {} of 100", novelty(10)?);
    Ok(())
}
