//! Runs the grey-box fuzzer and the black-box baseline on one hard target
//! with the same seed and budget, and compares time-to-crash and coverage.
//!
//! ```text
//! cargo run --release --example grey_vs_black -- [target] [rng_seed]
//! ```

use fbx::orchestrator::{Campaign, CampaignConfig, CampaignState, Execution, Guest, Mode};
use fbx::targets;

fn run(
    guest: &Guest,
    mode: Mode,
    execution: Execution,
    rng_seed: u64,
) -> anyhow::Result<CampaignState> {
    let mut cfg = CampaignConfig::new(mode, execution);
    cfg.rng_seed = rng_seed;
    cfg.blacklist_runs = 0;
    cfg.limits.max_execs = Some(500_000);
    cfg.limits.stop_on_crash = true;
    let rec = Campaign::record(
        &CampaignConfig {
            mode: Mode::Record,
            ..cfg.clone()
        },
        guest,
    )?;
    Ok(Campaign::new(cfg, guest.clone(), rec.seeds)?.run()?)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "brackets_hard".into());
    let rng_seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let t = targets::by_name(&name).ok_or_else(|| anyhow::anyhow!("unknown target {name}"))?;
    let guest = Guest::bundled(t).with_bounds(vec![t.parser_bounds()]);

    let fuzz = run(&guest, Mode::Fuzz, Execution::Snapshot, rng_seed)?;
    let base = run(&guest, Mode::Baseline, Execution::Persistent, rng_seed)?;
    for (label, s) in [("grey-box", &fuzz), ("black-box", &base)] {
        let ttc = s.first_crash.as_ref().map_or("none".to_string(), |c| {
            format!("{} execs ({:.2} s)", c.execs, c.wall_s)
        });
        println!(
            "{label:>9}: first crash {ttc}; {} edges; {:.0} execs/s",
            s.edges,
            s.execs_per_s()
        );
    }
    if let Some(c) = &fuzz.first_crash {
        println!(
            "baseline edges at {} execs: {}",
            c.execs,
            base.edges_at(c.execs)
        );
    }
    for g in base.ground_truth.iter().take(3) {
        println!(
            "baseline saw `{}` where the emulator saw {}",
            g.view.name(),
            g.truth
        );
    }
    Ok(())
}
