//! Campaigns: seed recording, grey-box intercept-and-fuzz and the black-box
//! baseline.
//!
//! An [`Executor`] owns one machine with the target armed. It advances the
//! guest to an interception, injects an input and runs one execution window.
//! [`Campaign`] drives the executor with a [`Scheduler`], feeds coverage back
//! (or not, for the baseline) and writes corpus, crash and stats artifacts.
//!
//! Window bracketing:
//!
//! * persistent, fuzz: from the injection at interception `i` to
//!   interception `i + 1`. A crash or timeout reloads the pristine image.
//! * snapshot: restore the seed's snapshot, inject, run to the target's
//!   return (`pre` targets) or its next entry (`post` targets).
//! * baseline: from the injection to the guest's mailbox response.
//!
//! [`Scheduler`]: crate::mutator::Scheduler

mod artifacts;
mod campaign;
mod exec;

use std::path::PathBuf;

pub use artifacts::{
    frame_from_text, frame_to_text, load_seeds, CrashReport, StatsRow, StatsWriter, STATS_HEADER,
};
pub use campaign::{Campaign, CampaignState, GroundTruth, RecordResult, Seed, Ttc};
pub use exec::{Executor, Guest, WindowEnd, WindowResult};

use crate::harness::HarnessError;
use crate::machine::{Fault, FaultKind};
use crate::mutator::Lineage;

pub const DEFAULT_TIMEOUT_INSNS: u64 = 5_000_000;
pub const DEFAULT_BLACKLIST_RUNS: usize = 10;
pub const DEFAULT_MAX_INPUT_LEN: usize = 4096;
pub const DEFAULT_STATS_INTERVAL: f64 = 1.0;
/// Instruction budget for reaching each interception while recording.
pub const DEFAULT_RECORD_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Record,
    Fuzz,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Record => "record",
            Mode::Fuzz => "fuzz",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Persistent,
    Snapshot,
}

impl Execution {
    pub fn name(self) -> &'static str {
        match self {
            Execution::Persistent => "persistent",
            Execution::Snapshot => "snapshot",
        }
    }
}

/// When a campaign stops on its own. All unset means run until killed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Limits {
    pub max_execs: Option<u64>,
    pub max_seconds: Option<f64>,
    /// Stop at the first ground-truth crash (crash symbol or hardware fault).
    pub stop_on_crash: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub execution: Execution,
    pub timeout_insns: u64,
    pub record_count: usize,
    pub record_budget_insns: u64,
    pub blacklist_runs: usize,
    pub rng_seed: u64,
    /// Wall seconds between stats rows.
    pub stats_interval: f64,
    pub max_input_len: usize,
    pub limits: Limits,
    pub corpus_dir: Option<PathBuf>,
    pub crashes_dir: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    /// Config file quoted in reproduction commands.
    pub config_path: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn new(mode: Mode, execution: Execution) -> Self {
        CampaignConfig {
            mode,
            execution,
            timeout_insns: DEFAULT_TIMEOUT_INSNS,
            record_count: 1,
            record_budget_insns: DEFAULT_RECORD_BUDGET,
            blacklist_runs: DEFAULT_BLACKLIST_RUNS,
            rng_seed: 0,
            stats_interval: DEFAULT_STATS_INTERVAL,
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            limits: Limits::default(),
            corpus_dir: None,
            crashes_dir: None,
            stats_path: None,
            config_path: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("the corpus is empty; record seeds first")]
    EmptyCorpus,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("guest never reached the target: {0}")]
    Unreachable(String),
    #[error("guest crashed outside an execution window: {0}")]
    GuestCrashed(Outcome),
    #[error("guest crashed during blacklist analysis: {0}")]
    BlacklistCrash(String),
}

impl CampaignError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CampaignError {
        let path = path.into();
        move |source| CampaignError::Io { path, source }
    }
}

/// How a window's outcome is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// Emulator-level: crash hooks, hardware faults, instruction budget.
    Emulation,
    /// Black-box liveness: a mailbox response or nothing.
    Liveness,
}

/// Something observed inside an execution window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowEvent {
    CrashSymbol(String),
    Fault(Fault),
    Timeout,
    Response(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CrashSymbol(String),
    HwFault(Fault),
    Timeout,
    Unresponsive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeKind {
    Ok,
    Unresponsive,
    Timeout,
    HwFault,
    CrashSymbol,
}

impl OutcomeKind {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Ok => "ok",
            OutcomeKind::Unresponsive => "unresponsive",
            OutcomeKind::Timeout => "timeout",
            OutcomeKind::HwFault => "hwfault",
            OutcomeKind::CrashSymbol => "crashsymbol",
        }
    }

    pub fn from_name(s: &str) -> Option<OutcomeKind> {
        [
            OutcomeKind::Ok,
            OutcomeKind::Unresponsive,
            OutcomeKind::Timeout,
            OutcomeKind::HwFault,
            OutcomeKind::CrashSymbol,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    /// Worth a crash artifact.
    pub fn is_failure(self) -> bool {
        self != OutcomeKind::Ok
    }
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::Ok => OutcomeKind::Ok,
            Outcome::CrashSymbol(_) => OutcomeKind::CrashSymbol,
            Outcome::HwFault(_) => OutcomeKind::HwFault,
            Outcome::Timeout => OutcomeKind::Timeout,
            Outcome::Unresponsive => OutcomeKind::Unresponsive,
        }
    }

    /// A crash symbol or a hardware fault: the guest really failed.
    pub fn is_crash(&self) -> bool {
        matches!(self, Outcome::CrashSymbol(_) | Outcome::HwFault(_))
    }

    /// Faulting pc, for deduplication. Zero when there is none.
    pub fn pc(&self) -> u32 {
        match self {
            Outcome::HwFault(f) => f.pc,
            _ => 0,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Ok => write!(f, "ok"),
            Outcome::CrashSymbol(name) => write!(f, "crashsymbol ({name})"),
            Outcome::HwFault(fault) => write!(f, "hwfault ({fault})"),
            Outcome::Timeout => write!(f, "timeout"),
            Outcome::Unresponsive => write!(f, "unresponsive"),
        }
    }
}

/// Collapses a window's events into its single outcome. Under
/// [`Detector::Emulation`] the order is crash symbol, hardware fault,
/// timeout, ok; the first event of the winning class is kept. Under
/// [`Detector::Liveness`] only a mailbox response counts.
pub fn classify(events: &[WindowEvent], detector: Detector) -> Outcome {
    if detector == Detector::Liveness {
        return if events.iter().any(|e| matches!(e, WindowEvent::Response(_))) {
            Outcome::Ok
        } else {
            Outcome::Unresponsive
        };
    }
    if let Some(name) = events.iter().find_map(|e| match e {
        WindowEvent::CrashSymbol(n) => Some(n),
        _ => None,
    }) {
        return Outcome::CrashSymbol(name.clone());
    }
    if let Some(fault) = events.iter().find_map(|e| match e {
        WindowEvent::Fault(f) => Some(f),
        _ => None,
    }) {
        return Outcome::HwFault(fault.clone());
    }
    if events.contains(&WindowEvent::Timeout) {
        return Outcome::Timeout;
    }
    Outcome::Ok
}

/// True for a `HALT`: the guest stopped on purpose.
pub fn is_halt(fault: &Fault) -> bool {
    matches!(fault.kind, FaultKind::Halt { .. })
}

/// One judged execution window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// Coverage window id.
    pub window: u64,
    pub outcome: Outcome,
    pub lineage: Lineage,
}
