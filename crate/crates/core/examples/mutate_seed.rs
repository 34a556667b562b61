//! Prints the first inputs the scheduler derives from a seed: the
//! deterministic stages in order, then havoc, each with its lineage.
//!
//! ```text
//! cargo run --example mutate_seed -- [seed] [count]
//! ```

use fbx::coverage::Novelty;
use fbx::mutator::{MutatorConfig, Scheduler, Step};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().unwrap_or_else(|| "AA".into());
    let count: usize = args.next().map_or(Ok(40), |s| s.parse())?;

    let mut sched = Scheduler::new(MutatorConfig::new(0, 64));
    sched.add_seed(seed.into_bytes());
    let mut last_stage = None;
    for i in 0..count {
        let input = sched.next_input()?;
        let stage = match input.lineage.step {
            Step::Det { stage, .. } => stage.name(),
            Step::Havoc { .. } => "havoc",
            Step::Verbatim => "verbatim",
        };
        if last_stage != Some(stage) {
            println!("-- {stage}");
            last_stage = Some(stage);
        }
        println!(
            "{i:4} {:<34} {:?}",
            input.lineage.to_string(),
            String::from_utf8_lossy(&input.bytes)
        );
        // pretend every 10th input found new coverage
        if i % 10 == 9 {
            sched.admit(input.bytes, Novelty::NewEdge);
        }
    }
    println!("queue: {} entries", sched.len());
    Ok(())
}
