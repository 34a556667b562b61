use std::sync::Arc;

use super::{classify, CampaignError, Detector, Outcome, WindowEvent};
use crate::coverage::CoverageMap;
use crate::harness::{
    ArmedTarget, ConventionProfile, CrashHooks, Frame, HarnessEvent, SeedRecord, TargetSpec, When,
};
use crate::loader::{load_image, GuestImage, SymbolTable};
use crate::machine::{
    BlockEntry, BlockOutcome, DeviceEvent, HookId, HookKind, Machine, MachineConfig, Snapshot,
};
use crate::targets::{GuestTarget, CRASH_SYMBOL, ISR_SYMBOL};

/// Everything needed to boot and instrument one guest.
#[derive(Debug, Clone)]
pub struct Guest {
    pub image: GuestImage,
    pub symbols: SymbolTable,
    pub spec: TargetSpec,
    pub profile: ConventionProfile,
    pub crash_symbols: Vec<String>,
    pub machine: MachineConfig,
    /// Coverage bounds; empty traces everything.
    pub bounds: Vec<(u32, u32)>,
}

impl Guest {
    /// A bundled target with its default spec, `vb_suspend` as crash symbol
    /// and the timer vectored to `__timer_isr` but disabled.
    pub fn bundled(t: &GuestTarget) -> Guest {
        let asm = t.assemble();
        let symbols = asm.symbol_table();
        let isr = symbols.resolve(ISR_SYMBOL).ok();
        Guest {
            image: asm.image(),
            symbols,
            spec: t.target_spec(),
            profile: ConventionProfile::fb32_std(),
            crash_symbols: vec![CRASH_SYMBOL.to_string()],
            machine: MachineConfig {
                isr_addr: isr,
                ..MachineConfig::default()
            },
            bounds: Vec::new(),
        }
    }

    pub fn with_timer(mut self, period: u32, jitter: bool, seed: u64) -> Guest {
        self.machine.timer_period = period;
        self.machine.timer_jitter = jitter;
        self.machine.timer_seed = seed;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(u32, u32)>) -> Guest {
        self.bounds = bounds;
        self
    }
}

/// Where an execution window closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowEnd {
    /// The next interception of the target (persistent execution).
    Interception,
    /// The target finished: its return for `pre` targets, its next entry
    /// for `post` targets (snapshot execution).
    TargetDone,
    /// The first mailbox response (black-box liveness).
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowResult {
    pub window: u64,
    pub events: Vec<WindowEvent>,
    /// Instructions retired inside the window.
    pub insns: u64,
    /// Registers when the window closed (the fault's for faults).
    pub regs: [u32; 16],
    /// The window closed at the next interception, which is now paused.
    pub at_interception: bool,
}

impl WindowResult {
    pub fn outcome(&self, detector: Detector) -> Outcome {
        classify(&self.events, detector)
    }
}

struct Paused {
    entry: BlockEntry,
    frame: Frame,
}

/// One machine with the target and crash symbols armed, plus its coverage.
pub struct Executor {
    m: Machine,
    target: ArmedTarget,
    crash: CrashHooks,
    cov: CoverageMap,
    pristine: Snapshot,
    timeout: u64,
    paused: Option<Paused>,
    ret_hooks: Vec<(u32, HookId)>,
}

impl Executor {
    pub fn new(
        guest: &Guest,
        timeout_insns: u64,
        max_seed_len: u32,
    ) -> Result<Executor, CampaignError> {
        let mut m = Machine::new(guest.machine.clone());
        load_image(&mut m, &guest.image).map_err(|e| CampaignError::Unreachable(e.to_string()))?;
        let target = ArmedTarget::arm(
            guest.spec.clone(),
            guest.profile.clone(),
            &guest.symbols,
            &mut m,
            max_seed_len,
        )?;
        let crash = CrashHooks::arm(&guest.crash_symbols, &guest.symbols, &mut m)?;
        let mut cov = CoverageMap::new();
        cov.set_bounds(guest.bounds.clone());
        let pristine = m.take_snapshot();
        Ok(Executor {
            m,
            target,
            crash,
            cov,
            pristine,
            timeout: timeout_insns,
            paused: None,
            ret_hooks: Vec::new(),
        })
    }

    pub fn machine(&self) -> &Machine {
        &self.m
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.m
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.cov
    }

    pub fn coverage_mut(&mut self) -> &mut CoverageMap {
        &mut self.cov
    }

    pub fn target(&self) -> &ArmedTarget {
        &self.target
    }

    /// Frame of the interception the machine is paused at.
    pub fn paused_frame(&self) -> Option<&Frame> {
        self.paused.as_ref().map(|p| &p.frame)
    }

    /// Reloads the pristine image. Hooks stay armed.
    pub fn reset(&mut self) {
        self.m.restore_snapshot(&self.pristine);
        self.target.clear_pending(&mut self.m);
        self.paused = None;
    }

    fn is_interception(&self, ev: &HarnessEvent) -> bool {
        matches!(
            (ev, self.target.spec().when),
            (HarnessEvent::Pre(_), When::Pre) | (HarnessEvent::Post(_), When::Post)
        )
    }

    /// Runs uninstrumented until the next interception, at most `budget`
    /// instructions. A paused interception is executed first, untouched.
    pub fn advance(&mut self, budget: u64) -> Result<&Frame, CampaignError> {
        let start = self.m.insn_count();
        let mut pending = self.paused.take().map(|p| p.entry);
        loop {
            let entry = match pending.take() {
                Some(e) => e,
                None => {
                    if self.m.insn_count() - start >= budget {
                        return Err(CampaignError::Unreachable(format!(
                            "no interception within {budget} instructions"
                        )));
                    }
                    let e = self
                        .m
                        .begin_block()
                        .map_err(|f| CampaignError::GuestCrashed(Outcome::HwFault(f)))?;
                    if let Some(name) = self.crash.check(&e.hooks) {
                        return Err(CampaignError::GuestCrashed(Outcome::CrashSymbol(
                            name.to_string(),
                        )));
                    }
                    let evs = self.target.on_block(&mut self.m, &e.hooks)?;
                    if let Some(HarnessEvent::Pre(frame) | HarnessEvent::Post(frame)) =
                        evs.into_iter().find(|ev| self.is_interception(ev))
                    {
                        self.m.take_events();
                        self.paused = Some(Paused { entry: e, frame });
                        return Ok(&self.paused.as_ref().unwrap().frame);
                    }
                    e
                }
            };
            if let BlockOutcome::Fault(f) = self.m.exec_block(&entry.block) {
                return Err(CampaignError::GuestCrashed(Outcome::HwFault(f)));
            }
        }
    }

    /// Records the paused interception, with a snapshot when asked.
    pub fn capture_seed(&mut self, with_snapshot: bool) -> Result<SeedRecord, CampaignError> {
        let p = self
            .paused
            .as_ref()
            .ok_or_else(|| CampaignError::Unreachable("not paused at an interception".into()))?;
        let mut rec = self.target.capture(&self.m, &p.frame)?;
        if with_snapshot {
            rec.snapshot = Some(Arc::new(self.m.take_snapshot()));
        }
        Ok(rec)
    }

    /// Restores a recorded interception and pauses there. `frame` is the
    /// frame read when the snapshot was taken.
    pub fn resume_from(&mut self, snap: &Snapshot, frame: &Frame) -> Result<(), CampaignError> {
        self.m.restore_snapshot(snap);
        self.target.clear_pending(&mut self.m);
        // the entry hook fires again here; the interception is already known
        let entry = self
            .m
            .begin_block()
            .map_err(|f| CampaignError::Unreachable(f.to_string()))?;
        self.paused = Some(Paused {
            entry,
            frame: frame.clone(),
        });
        Ok(())
    }

    fn return_hook(&mut self, ra: u32) -> Result<HookId, CampaignError> {
        if let Some(&(_, h)) = self.ret_hooks.iter().find(|(a, _)| *a == ra) {
            return Ok(h);
        }
        let h = self
            .m
            .register_hook(ra, HookKind::BlockEntryAlways)
            .map_err(|e| CampaignError::Harness(e.into()))?;
        self.ret_hooks.push((ra, h));
        Ok(h)
    }

    /// Injects `input` at the paused interception and runs one window.
    pub fn run_window(
        &mut self,
        input: &[u8],
        end: WindowEnd,
    ) -> Result<WindowResult, CampaignError> {
        let Paused { entry, frame } = self
            .paused
            .take()
            .ok_or_else(|| CampaignError::Unreachable("not paused at an interception".into()))?;
        self.target.inject(&mut self.m, &frame, input)?;
        let done_hook = match (end, self.target.spec().when) {
            (WindowEnd::TargetDone, When::Pre) => Some(self.return_hook(frame.return_addr)?),
            _ => None,
        };
        self.cov.begin_window();
        let window = self.cov.window_id();
        let start = self.m.insn_count();
        let mut events = Vec::new();
        let mut regs = None;
        let mut at_interception = false;
        let mut pending = Some(entry);
        loop {
            let entry = match pending.take() {
                Some(e) => e,
                None => {
                    if self.m.insn_count() - start >= self.timeout {
                        events.push(WindowEvent::Timeout);
                        break;
                    }
                    let e = match self.m.begin_block() {
                        Ok(e) => e,
                        Err(f) => {
                            regs = Some(f.regs);
                            events.push(WindowEvent::Fault(f));
                            break;
                        }
                    };
                    if let Some(name) = self.crash.check(&e.hooks) {
                        events.push(WindowEvent::CrashSymbol(name.to_string()));
                        break;
                    }
                    let evs = self.target.on_block(&mut self.m, &e.hooks)?;
                    match end {
                        WindowEnd::Interception => {
                            if let Some(HarnessEvent::Pre(frame) | HarnessEvent::Post(frame)) =
                                evs.into_iter().find(|ev| self.is_interception(ev))
                            {
                                self.paused = Some(Paused { entry: e, frame });
                                at_interception = true;
                                break;
                            }
                        }
                        WindowEnd::TargetDone => {
                            let done = match done_hook {
                                Some(h) => e.hooks.contains(&h),
                                None => evs.iter().any(|ev| matches!(ev, HarnessEvent::Pre(_))),
                            };
                            if done {
                                break;
                            }
                        }
                        WindowEnd::Response => {}
                    }
                    e
                }
            };
            self.cov.observe_block(entry.block.start);
            if let BlockOutcome::Fault(f) = self.m.exec_block(&entry.block) {
                regs = Some(f.regs);
                events.push(WindowEvent::Fault(f));
                break;
            }
            if self.m.has_events() {
                events.extend(
                    self.m
                        .take_events()
                        .into_iter()
                        .map(|DeviceEvent::Response(v)| WindowEvent::Response(v)),
                );
                if end == WindowEnd::Response {
                    break;
                }
            }
        }
        Ok(WindowResult {
            window,
            events,
            insns: self.m.insn_count() - start,
            regs: regs.unwrap_or(self.m.cpu().regs),
            at_interception,
        })
    }
}
