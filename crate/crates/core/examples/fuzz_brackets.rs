//! Records the `AA` seed of `brackets_easy` and fuzzes it until the first
//! crash, then prints the crashing input and where it came from.
//!
//! ```text
//! cargo run --release --example fuzz_brackets -- [rng_seed]
//! ```

use fbx::orchestrator::{Campaign, CampaignConfig, Execution, Guest, Mode};
use fbx::targets;

fn main() -> anyhow::Result<()> {
    let rng_seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let t = targets::by_name("brackets_easy").unwrap();
    let guest = Guest::bundled(t).with_bounds(vec![t.parser_bounds()]);

    let mut cfg = CampaignConfig::new(Mode::Fuzz, Execution::Snapshot);
    cfg.rng_seed = rng_seed;
    cfg.blacklist_runs = 0;
    cfg.limits.max_execs = Some(200_000);
    cfg.limits.stop_on_crash = true;

    let rec = Campaign::record(
        &CampaignConfig {
            mode: Mode::Record,
            ..cfg.clone()
        },
        &guest,
    )?;
    println!("seed: {:?}", String::from_utf8_lossy(&rec.seeds[0].bytes));
    let state = Campaign::new(cfg, guest, rec.seeds)?.run()?;
    println!(
        "{} execs, {} edges, {} queue entries, {:.0} execs/s",
        state.execs,
        state.edges,
        state.corpus_len,
        state.execs_per_s()
    );
    match state.crashes.first() {
        Some(c) => {
            println!("crash after {} execs: {}", c.exec, c.ground_truth);
            println!("input: {:?}", String::from_utf8_lossy(&c.input));
            println!("lineage: {}", c.lineage);
        }
        None => println!("no crash"),
    }
    Ok(())
}
