use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use super::artifacts::{
    ensure_dir, write_corpus_entry, write_seed, CrashReport, StatsRow, StatsWriter,
};
use super::exec::{Executor, Guest, WindowEnd, WindowResult};
use super::{
    CampaignConfig, CampaignError, Detector, Execution, Mode, Outcome, OutcomeKind, Verdict,
    WindowEvent,
};
use crate::coverage::{blacklist_analysis, Blacklist};
use crate::harness::{Frame, ParamMode, SeedRecord};
use crate::machine::Snapshot;
use crate::mutator::{Lineage, MutatorConfig, Scheduler, Step};

/// A corpus seed: fuzz-input bytes plus, for snapshot execution, the
/// machine state and frame of the interception it was recorded at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed {
    pub bytes: Vec<u8>,
    pub snapshot: Option<Arc<Snapshot>>,
    pub frame: Option<Frame>,
}

impl Seed {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Seed {
        Seed {
            bytes: bytes.into(),
            snapshot: None,
            frame: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecordResult {
    pub seeds: Vec<Seed>,
    pub records: Vec<SeedRecord>,
    /// Set when the guest crashed before `record_count` seeds were seen.
    pub crashed: Option<Outcome>,
}

/// First ground-truth crash of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Ttc {
    pub execs: u64,
    pub wall_s: f64,
    pub outcome: Outcome,
}

/// A baseline window whose real outcome was a crash, next to what the
/// black-box driver concluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub exec: u64,
    pub view: OutcomeKind,
    pub truth: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignState {
    pub mode: Mode,
    pub execs: u64,
    pub crashes: Vec<CrashReport>,
    /// Crash directories written, parallel to `crashes`.
    pub crash_dirs: Vec<PathBuf>,
    pub timeouts: u64,
    pub corpus_len: usize,
    pub edges: usize,
    pub blocks: usize,
    /// `(execs, edges)` at every change of the edge count.
    pub edge_history: Vec<(u64, usize)>,
    pub first_crash: Option<Ttc>,
    pub ground_truth: Vec<GroundTruth>,
    pub stats: Vec<StatsRow>,
    pub blacklist: Blacklist,
    pub wall_s: f64,
}

impl CampaignState {
    fn new(mode: Mode) -> Self {
        CampaignState {
            mode,
            execs: 0,
            crashes: Vec::new(),
            crash_dirs: Vec::new(),
            timeouts: 0,
            corpus_len: 0,
            edges: 0,
            blocks: 0,
            edge_history: Vec::new(),
            first_crash: None,
            ground_truth: Vec::new(),
            stats: Vec::new(),
            blacklist: Blacklist::default(),
            wall_s: 0.0,
        }
    }

    /// Edge count after `execs` executions.
    pub fn edges_at(&self, execs: u64) -> usize {
        match self.edge_history.partition_point(|&(e, _)| e <= execs) {
            0 => 0,
            i => self.edge_history[i - 1].1,
        }
    }

    /// Executions per second over the whole campaign.
    pub fn execs_per_s(&self) -> f64 {
        if self.wall_s > 0.0 {
            self.execs as f64 / self.wall_s
        } else {
            0.0
        }
    }
}

/// Executions per second between two `(wall_s, execs)` samples.
pub(crate) fn interval_rate(prev: (f64, u64), now: (f64, u64)) -> f64 {
    let dt = now.0 - prev.0;
    if dt > 0.0 {
        (now.1 - prev.1) as f64 / dt
    } else {
        0.0
    }
}

/// A fuzz or baseline campaign over one guest.
pub struct Campaign {
    cfg: CampaignConfig,
    guest: Guest,
    exec: Executor,
    sched: Scheduler,
    seeds: Vec<Seed>,
    /// Seed each queue entry descends from.
    roots: Vec<usize>,
    state: CampaignState,
    stats: Option<StatsWriter>,
    truth_log: Option<csv::Writer<fs::File>>,
    started: Instant,
    last_row: (f64, u64),
    crash_keys: HashSet<(OutcomeKind, u32)>,
}

impl Campaign {
    /// Runs the guest and captures a seed at each of the first
    /// `record_count` interceptions. Seeds are written to the corpus
    /// directory when one is configured.
    pub fn record(cfg: &CampaignConfig, guest: &Guest) -> Result<RecordResult, CampaignError> {
        let mut out = RecordResult {
            seeds: Vec::new(),
            records: Vec::new(),
            crashed: None,
        };
        if cfg.record_count == 0 {
            return Ok(out);
        }
        let with_snapshot = cfg.execution == Execution::Snapshot;
        let mut exec = Executor::new(guest, cfg.timeout_insns, cfg.max_input_len as u32)?;
        for idx in 0..cfg.record_count {
            match exec.advance(cfg.record_budget_insns) {
                Ok(_) => {}
                Err(CampaignError::GuestCrashed(o)) => {
                    out.crashed = Some(o);
                    break;
                }
                Err(e) if idx > 0 && matches!(e, CampaignError::Unreachable(_)) => break,
                Err(e) => return Err(e),
            }
            let frame = exec.paused_frame().cloned();
            let rec = exec.capture_seed(with_snapshot)?;
            let seed = Seed {
                bytes: rec.to_input(&guest.spec),
                snapshot: rec.snapshot.clone(),
                frame: if with_snapshot { frame } else { None },
            };
            if let Some(dir) = &cfg.corpus_dir {
                write_seed(dir, idx, &seed)?;
            }
            out.seeds.push(seed);
            out.records.push(rec);
        }
        Ok(out)
    }

    /// Sets up a fuzz or baseline campaign: reaches the first interception,
    /// runs the blacklist pre-analysis and executes every seed once.
    pub fn new(
        cfg: CampaignConfig,
        guest: Guest,
        seeds: Vec<Seed>,
    ) -> Result<Campaign, CampaignError> {
        if cfg.mode == Mode::Record {
            return Err(CampaignError::ConfigMismatch(
                "record mode does not fuzz".into(),
            ));
        }
        if seeds.is_empty() {
            return Err(CampaignError::EmptyCorpus);
        }
        if cfg.execution == Execution::Snapshot
            && seeds
                .iter()
                .any(|s| s.snapshot.is_none() || s.frame.is_none())
        {
            return Err(CampaignError::ConfigMismatch(
                "snapshot execution needs seeds recorded with snapshots (record with execution kind `snapshot`)".into(),
            ));
        }
        let mut exec = Executor::new(&guest, cfg.timeout_insns, cfg.max_input_len as u32)?;
        let frame = match cfg.execution {
            Execution::Persistent => exec.advance(cfg.record_budget_insns)?.clone(),
            Execution::Snapshot => seeds[0].frame.clone().unwrap(),
        };
        let value_bytes = guest.spec.value_bytes();
        let (region, buf_len) = match guest.spec.fuzzed_pointer() {
            Some((pos, p)) => {
                let cap = frame.buffer(pos).map_or(0, |b| b.cap as usize);
                match p.window {
                    Some(w) => (Some((value_bytes, w.len as usize)), w.len as usize),
                    None => (None, cap),
                }
            }
            None => (None, 0),
        };
        let mut mcfg = MutatorConfig::new(
            cfg.rng_seed,
            (value_bytes + buf_len).clamp(1, cfg.max_input_len.max(1)),
        );
        mcfg.region = region;
        mcfg.frozen = cfg.mode == Mode::Baseline;
        let no_fuzzed_params = guest
            .spec
            .params
            .iter()
            .all(|p| !p.fuzz || (p.mode == ParamMode::Pointer && buf_len == 0));
        if no_fuzzed_params {
            return Err(CampaignError::ConfigMismatch(
                "the target spec fuzzes no bytes".into(),
            ));
        }

        let stats = cfg
            .stats_path
            .as_deref()
            .map(StatsWriter::create)
            .transpose()?;
        if let Some(dir) = &cfg.corpus_dir {
            ensure_dir(dir)?;
        }
        let truth_log = match (&cfg.crashes_dir, cfg.mode) {
            (Some(dir), Mode::Baseline) => {
                ensure_dir(dir)?;
                let path = dir.join("ground_truth.csv");
                let file = fs::File::create(&path).map_err(CampaignError::io(&path))?;
                let mut w = csv::Writer::from_writer(file);
                w.write_record(["exec", "baseline_view", "ground_truth", "pc"])
                    .map_err(|e| CampaignError::Io {
                        path: path.clone(),
                        source: std::io::Error::other(e),
                    })?;
                Some(w)
            }
            _ => None,
        };

        let mut sched = Scheduler::new(mcfg);
        for s in &seeds {
            sched.add_seed(s.bytes.clone());
        }
        let roots = (0..seeds.len()).collect();
        let mut c = Campaign {
            state: CampaignState::new(cfg.mode),
            cfg,
            guest,
            exec,
            sched,
            seeds,
            roots,
            stats,
            truth_log,
            started: Instant::now(),
            last_row: (0.0, 0),
            crash_keys: HashSet::new(),
        };
        c.analyse_blacklist()?;
        c.calibrate()?;
        Ok(c)
    }

    fn detector(&self) -> Detector {
        match self.cfg.mode {
            Mode::Baseline => Detector::Liveness,
            _ => Detector::Emulation,
        }
    }

    fn window_end(&self) -> WindowEnd {
        match (self.cfg.mode, self.cfg.execution) {
            (Mode::Baseline, _) => WindowEnd::Response,
            (_, Execution::Persistent) => WindowEnd::Interception,
            (_, Execution::Snapshot) => WindowEnd::TargetDone,
        }
    }

    /// Runs `input` in one window, starting from seed `root` in snapshot
    /// execution. Persistent execution is left paused at the next
    /// interception, reloading the image after a crash or hang.
    fn window(&mut self, root: usize, input: &[u8]) -> Result<WindowResult, CampaignError> {
        let end = self.window_end();
        match self.cfg.execution {
            Execution::Snapshot => {
                let seed = &self.seeds[root];
                let (snap, frame) = (seed.snapshot.clone().unwrap(), seed.frame.clone().unwrap());
                self.exec.resume_from(&snap, &frame)?;
                self.exec.run_window(input, end)
            }
            Execution::Persistent => {
                if self.exec.paused_frame().is_none() {
                    self.exec.reset();
                    self.exec.advance(self.cfg.record_budget_insns)?;
                }
                let r = self.exec.run_window(input, end)?;
                if !r.at_interception {
                    let stopped = r.events.iter().any(|e| {
                        matches!(
                            e,
                            WindowEvent::Fault(_)
                                | WindowEvent::CrashSymbol(_)
                                | WindowEvent::Timeout
                        )
                    });
                    if stopped || self.exec.advance(self.cfg.record_budget_insns).is_err() {
                        self.exec.reset();
                        self.exec.advance(self.cfg.record_budget_insns)?;
                    }
                }
                Ok(r)
            }
        }
    }

    fn analyse_blacklist(&mut self) -> Result<(), CampaignError> {
        let k = self.cfg.blacklist_runs;
        if k < 2 {
            return Ok(());
        }
        let n = self.seeds.len();
        let bl = blacklist_analysis(k, |i| {
            let bytes = self.seeds[i % n].bytes.clone();
            let r = self.window(i % n, &bytes)?;
            let truth = r.outcome(Detector::Emulation);
            if truth != Outcome::Ok {
                return Err(CampaignError::BlacklistCrash(truth.to_string()));
            }
            Ok(self.exec.coverage().trace())
        })?;
        self.exec.coverage_mut().set_blacklist(&bl);
        self.state.blacklist = bl;
        Ok(())
    }

    fn calibrate(&mut self) -> Result<(), CampaignError> {
        let mut responded = false;
        for i in 0..self.seeds.len() {
            let bytes = self.seeds[i].bytes.clone();
            let lineage = Lineage {
                parent: i as u32,
                step: Step::Verbatim,
            };
            let r = self.window(i, &bytes)?;
            responded |= r
                .events
                .iter()
                .any(|e| matches!(e, WindowEvent::Response(_)));
            self.judge(&bytes, lineage, &r, false)?;
        }
        if self.cfg.mode == Mode::Baseline && !responded {
            return Err(CampaignError::ConfigMismatch(
                "baseline mode needs a guest that answers on the mailbox; no seed window produced a response".into(),
            ));
        }
        if let Some(dir) = &self.cfg.corpus_dir {
            if self.cfg.mode == Mode::Fuzz {
                for e in self.sched.queue() {
                    write_corpus_entry(dir, e)?;
                }
            }
        }
        Ok(())
    }

    /// Generates and runs one input.
    pub fn step(&mut self) -> Result<Verdict, CampaignError> {
        let input = self
            .sched
            .next_input()
            .map_err(|_| CampaignError::EmptyCorpus)?;
        let root = self.roots[input.lineage.parent as usize];
        let r = self.window(root, &input.bytes)?;
        self.judge(&input.bytes, input.lineage, &r, true)
    }

    /// Runs a caller-chosen input from seed 0 and judges it like a
    /// generated one.
    pub fn run_input(&mut self, input: &[u8]) -> Result<Verdict, CampaignError> {
        let r = self.window(0, input)?;
        self.judge(
            input,
            Lineage {
                parent: 0,
                step: Step::Verbatim,
            },
            &r,
            true,
        )
    }

    fn judge(
        &mut self,
        bytes: &[u8],
        lineage: Lineage,
        r: &WindowResult,
        admit: bool,
    ) -> Result<Verdict, CampaignError> {
        self.state.execs += 1;
        let outcome = r.outcome(self.detector());
        let truth = r.outcome(Detector::Emulation);
        let novelty = self.exec.coverage_mut().has_new_bits();
        if admit && self.cfg.mode == Mode::Fuzz && outcome == Outcome::Ok && novelty.is_new() {
            if let Some(id) = self.sched.admit(bytes.to_vec(), novelty) {
                let root = self.roots[lineage.parent as usize];
                self.roots.push(root);
                if let Some(dir) = &self.cfg.corpus_dir {
                    write_corpus_entry(dir, &self.sched.queue()[id as usize])?;
                }
            }
        }
        let edges = self.exec.coverage().edges_seen();
        if edges != self.state.edges {
            self.state.edge_history.push((self.state.execs, edges));
        }
        self.state.edges = edges;
        self.state.blocks = self.exec.coverage().blocks_seen();
        self.state.corpus_len = self.sched.len();
        if truth == Outcome::Timeout {
            self.state.timeouts += 1;
        }
        if truth.is_crash() && self.state.first_crash.is_none() {
            self.state.first_crash = Some(Ttc {
                execs: self.state.execs,
                wall_s: self.started.elapsed().as_secs_f64(),
                outcome: truth.clone(),
            });
        }
        if self.cfg.mode == Mode::Baseline && truth.is_crash() {
            let g = GroundTruth {
                exec: self.state.execs,
                view: outcome.kind(),
                truth: truth.clone(),
            };
            if let Some(w) = &mut self.truth_log {
                let path = self
                    .cfg
                    .crashes_dir
                    .clone()
                    .unwrap_or_default()
                    .join("ground_truth.csv");
                w.write_record([
                    g.exec.to_string(),
                    g.view.name().to_string(),
                    g.truth.kind().name().to_string(),
                    format!("0x{:08X}", g.truth.pc()),
                ])
                .and_then(|_| w.flush().map_err(csv::Error::from))
                .map_err(|e| CampaignError::Io {
                    path,
                    source: std::io::Error::other(e),
                })?;
            }
            self.state.ground_truth.push(g);
        }
        if outcome.kind().is_failure() && self.crash_keys.insert((outcome.kind(), truth.pc())) {
            self.save_crash(bytes, lineage, &outcome, &truth, r)?;
        }
        self.maybe_emit_stats(false)?;
        Ok(Verdict {
            window: r.window,
            outcome,
            lineage,
        })
    }

    fn save_crash(
        &mut self,
        bytes: &[u8],
        lineage: Lineage,
        outcome: &Outcome,
        truth: &Outcome,
        r: &WindowResult,
    ) -> Result<(), CampaignError> {
        let report = CrashReport {
            id: self.state.crashes.len() as u32 + 1,
            exec: self.state.execs,
            outcome: outcome.clone(),
            ground_truth: truth.clone(),
            input: bytes.to_vec(),
            lineage,
            pc: match truth {
                Outcome::HwFault(f) => f.pc,
                _ => self.exec.machine().pc(),
            },
            regs: r.regs,
            ring: self.exec.coverage().ring(),
        };
        if let Some(dir) = &self.cfg.crashes_dir {
            let path = report.write(dir, &self.guest.symbols, self.cfg.config_path.as_deref())?;
            self.state.crash_dirs.push(path);
        }
        self.state.crashes.push(report);
        Ok(())
    }

    fn maybe_emit_stats(&mut self, force: bool) -> Result<(), CampaignError> {
        let now = self.started.elapsed().as_secs_f64();
        if !force && now - self.last_row.0 < self.cfg.stats_interval {
            return Ok(());
        }
        let row = StatsRow {
            wall_s: now,
            execs: self.state.execs,
            execs_per_s: interval_rate(self.last_row, (now, self.state.execs)),
            edges: self.state.edges as u64,
            blocks: self.state.blocks as u64,
            crashes: self
                .state
                .crashes
                .iter()
                .filter(|c| c.outcome.kind() != OutcomeKind::Timeout)
                .count() as u64,
            timeouts: self.state.timeouts,
            corpus_len: self.state.corpus_len as u64,
        };
        if let Some(w) = &mut self.stats {
            w.write(&row)?;
        }
        self.state.stats.push(row);
        self.last_row = (now, self.state.execs);
        Ok(())
    }

    pub fn should_stop(&self) -> bool {
        let l = &self.cfg.limits;
        l.max_execs.is_some_and(|m| self.state.execs >= m)
            || l.max_seconds
                .is_some_and(|s| self.started.elapsed().as_secs_f64() >= s)
            || (l.stop_on_crash && self.state.first_crash.is_some())
    }

    /// Steps until a limit is reached, then writes the final stats row and
    /// the coverage snapshot.
    pub fn run(mut self) -> Result<CampaignState, CampaignError> {
        while !self.should_stop() {
            self.step()?;
        }
        self.finish()
    }

    pub fn finish(mut self) -> Result<CampaignState, CampaignError> {
        self.maybe_emit_stats(true)?;
        self.state.wall_s = self.started.elapsed().as_secs_f64();
        if let Some(p) = &self.cfg.stats_path {
            let path = p.with_extension("coverage");
            fs::write(&path, self.exec.coverage().snapshot().render())
                .map_err(CampaignError::io(&path))?;
        }
        Ok(self.state)
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    /// Injects `input` at the first interception of a fresh boot and judges
    /// the window as the configured mode would. Returns the mode's verdict
    /// and the emulator's ground truth.
    pub fn replay(
        cfg: &CampaignConfig,
        guest: &Guest,
        input: &[u8],
    ) -> Result<(Outcome, Outcome), CampaignError> {
        let mut exec = Executor::new(guest, cfg.timeout_insns, cfg.max_input_len as u32)?;
        exec.coverage_mut().set_bounds(guest.bounds.clone());
        exec.advance(cfg.record_budget_insns)?;
        let (end, detector) = match (cfg.mode, cfg.execution) {
            (Mode::Baseline, _) => (WindowEnd::Response, Detector::Liveness),
            (_, Execution::Persistent) => (WindowEnd::Interception, Detector::Emulation),
            (_, Execution::Snapshot) => (WindowEnd::TargetDone, Detector::Emulation),
        };
        let r = exec.run_window(input, end)?;
        Ok((r.outcome(detector), r.outcome(Detector::Emulation)))
    }
}
