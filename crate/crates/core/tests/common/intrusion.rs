//! Armed-but-idle runs against unarmed runs of the same guest.

use fbx::coverage::CoverageMap;
use fbx::harness::{ArmedTarget, CrashHooks, HarnessEvent, When};
use fbx::loader::load_image;
use fbx::machine::{BlockOutcome, Machine};
use fbx::orchestrator::Guest;
use fbx::targets::GuestTarget;
use sha2::{Digest, Sha256};

pub const INSNS: u64 = 1_000_000;
/// Longer than any translated block.
const TAIL: u64 = 512;

#[derive(Debug, PartialEq, Eq)]
pub struct Final {
    pub regs: [u32; 16],
    pub pc: u32,
    pub insn_count: u64,
    pub ram_sha256: [u8; 32],
}

fn finish(m: &Machine) -> Final {
    Final {
        regs: m.cpu().regs,
        pc: m.pc(),
        insn_count: m.insn_count(),
        ram_sha256: Sha256::digest(m.ram()).into(),
    }
}

fn guest(t: &GuestTarget) -> Guest {
    Guest::bundled(t).with_timer(10_000, true, 1)
}

/// Runs by blocks, then single-steps the last stretch to land on exactly
/// `insns`. `on_entry` sees every block entry.
fn run(
    m: &mut Machine,
    insns: u64,
    mut on_entry: impl FnMut(&mut Machine, &[fbx::machine::HookId], u32),
) -> Result<(), String> {
    while m.insn_count() + TAIL < insns {
        let e = m.begin_block().map_err(|f| f.to_string())?;
        on_entry(m, &e.hooks, e.block.start);
        if let BlockOutcome::Fault(f) = m.exec_block(&e.block) {
            return Err(f.to_string());
        }
    }
    while m.insn_count() < insns {
        if let fbx::machine::StepOutcome::Fault(f) = m.step() {
            return Err(f.to_string());
        }
    }
    Ok(())
}

pub fn unarmed(t: &GuestTarget, insns: u64) -> Result<Final, String> {
    let g = guest(t);
    let mut m = Machine::new(g.machine.clone());
    load_image(&mut m, &g.image).unwrap();
    run(&mut m, insns, |_, _, _| {})?;
    Ok(finish(&m))
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Observed {
    pub pre: usize,
    pub post: usize,
    pub blocks: u64,
}

/// Entry hook, return hooks for `post`, crash hooks and coverage all live;
/// every interception is captured and snapshotted, nothing is injected.
pub fn armed(t: &GuestTarget, when: When, insns: u64) -> Result<(Final, Observed), String> {
    let mut g = guest(t);
    g.spec.when = when;
    let mut m = Machine::new(g.machine.clone());
    load_image(&mut m, &g.image).unwrap();
    let mut target = ArmedTarget::arm(g.spec.clone(), g.profile.clone(), &g.symbols, &mut m, 4096)
        .map_err(|e| e.to_string())?;
    let crash = CrashHooks::arm(&g.crash_symbols, &g.symbols, &mut m).map_err(|e| e.to_string())?;
    let mut cov = CoverageMap::new();
    cov.begin_window();
    let mut seen = Observed::default();
    let mut err = None;
    run(&mut m, insns, |m, fired, start| {
        cov.observe_block(start);
        seen.blocks += 1;
        if crash.check(fired).is_some() {
            err.get_or_insert_with(|| "crash hook fired".to_string());
        }
        match target.on_block(m, fired) {
            Ok(evs) => {
                for ev in evs {
                    let frame = match ev {
                        HarnessEvent::Pre(f) => {
                            seen.pre += 1;
                            f
                        }
                        HarnessEvent::Post(f) => {
                            seen.post += 1;
                            f
                        }
                    };
                    if let Err(e) = target.capture(m, &frame) {
                        err.get_or_insert(e.to_string());
                    }
                    m.take_snapshot();
                }
            }
            Err(e) => {
                err.get_or_insert(e.to_string());
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok((finish(&m), seen))
}

/// Armed runs in both interception modes must end bit-identical to the
/// unarmed run.
pub fn check(t: &GuestTarget, insns: u64) -> Result<Observed, String> {
    let want = unarmed(t, insns)?;
    let mut total = Observed::default();
    for when in [When::Pre, When::Post] {
        let (got, seen) = armed(t, when, insns)?;
        if got != want {
            return Err(format!(
                "{} armed ({when:?}) ended at {got:?}, unarmed at {want:?}",
                t.name
            ));
        }
        if seen.pre == 0 || (when == When::Post && seen.post == 0) {
            return Err(format!(
                "{} armed ({when:?}) never intercepted: {seen:?}",
                t.name
            ));
        }
        total.pre += seen.pre;
        total.post += seen.post;
        total.blocks += seen.blocks;
    }
    Ok(total)
}
