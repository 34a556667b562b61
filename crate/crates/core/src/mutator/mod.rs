//! Input generation: deterministic stages, havoc and the round-robin queue.
//!
//! Every generated input carries a [`Lineage`] naming its parent entry and
//! the exact step that produced it. Havoc batches draw from a generator
//! seeded by `(rng_seed, parent id, batch number)`, so any input can be
//! regenerated from the corpus alone with [`Scheduler::replay`].

pub mod constants;
mod det;
mod havoc;

use std::fmt;

pub use det::{apply as apply_stage, DeterministicStages, Stage};
pub use havoc::{havoc_mutate, HavocLimits};

use crate::coverage::Novelty;
use crate::prng::{derive_seed, Prng};
use constants::HAVOC_BATCH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Seed,
    Novel(Novelty),
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::Novel(n) => n.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueEntry {
    pub id: u32,
    pub bytes: Vec<u8>,
    pub origin: Origin,
    pub det_done: bool,
    pub havoc_batches: u32,
}

impl QueueEntry {
    /// Corpus file name: `id%06u_<novelty>`.
    pub fn file_name(&self) -> String {
        format!("id{:06}_{}", self.id, self.origin.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// The parent itself, unmodified.
    Verbatim,
    Det {
        stage: Stage,
        step: u64,
    },
    Havoc {
        batch: u32,
        index: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub parent: u32,
    pub step: Step,
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parent id{:06} ", self.parent)?;
        match self.step {
            Step::Verbatim => write!(f, "verbatim"),
            Step::Det { stage, step } => write!(f, "{} step {step}", stage.name()),
            Step::Havoc { batch, index } => write!(f, "havoc batch {batch} index {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzInput {
    pub bytes: Vec<u8>,
    pub lineage: Lineage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutatorConfig {
    pub rng_seed: u64,
    /// Mutable `(offset, len)` of every input. Freezes the input length.
    pub region: Option<(usize, usize)>,
    pub max_len: usize,
    /// Admit nothing beyond the initial seeds.
    pub frozen: bool,
    pub deterministic: bool,
}

impl MutatorConfig {
    pub fn new(rng_seed: u64, max_len: usize) -> Self {
        MutatorConfig {
            rng_seed,
            region: None,
            max_len,
            frozen: false,
            deterministic: true,
        }
    }

    fn limits(&self) -> HavocLimits {
        HavocLimits {
            region: self.region,
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutatorError {
    #[error("the corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone)]
enum Cursor {
    Start,
    Det(DeterministicStages),
    Havoc {
        prng: Prng,
        batch: u32,
        emitted: u32,
    },
}

/// Queue plus round-robin schedule: each entry runs its deterministic stages
/// once, then one havoc batch per visit.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: MutatorConfig,
    queue: Vec<QueueEntry>,
    cur: usize,
    cursor: Cursor,
}

impl Scheduler {
    pub fn new(cfg: MutatorConfig) -> Self {
        Scheduler {
            cfg,
            queue: Vec::new(),
            cur: 0,
            cursor: Cursor::Start,
        }
    }

    pub fn config(&self) -> &MutatorConfig {
        &self.cfg
    }

    pub fn queue(&self) -> &[QueueEntry] {
        &self.queue
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn push(&mut self, bytes: Vec<u8>, origin: Origin) -> u32 {
        let id = self.queue.len() as u32;
        self.queue.push(QueueEntry {
            id,
            bytes,
            origin,
            det_done: false,
            havoc_batches: 0,
        });
        id
    }

    /// Adds an initial seed. Allowed even when the queue is frozen.
    pub fn add_seed(&mut self, mut bytes: Vec<u8>) -> u32 {
        bytes.truncate(self.cfg.max_len.max(1));
        self.push(bytes, Origin::Seed)
    }

    /// Admits an input that produced new coverage. Frozen queues refuse.
    pub fn admit(&mut self, bytes: Vec<u8>, novelty: Novelty) -> Option<u32> {
        if self.cfg.frozen || !novelty.is_new() {
            return None;
        }
        Some(self.push(bytes, Origin::Novel(novelty)))
    }

    pub fn next_input(&mut self) -> Result<FuzzInput, MutatorError> {
        if self.queue.is_empty() {
            return Err(MutatorError::EmptyCorpus);
        }
        loop {
            let entry = &self.queue[self.cur];
            let parent = entry.id;
            match &mut self.cursor {
                Cursor::Start => {
                    self.cursor = if !entry.det_done && self.cfg.deterministic {
                        Cursor::Det(DeterministicStages::new(
                            entry.bytes.clone(),
                            self.cfg.region,
                        ))
                    } else {
                        self.havoc_cursor()
                    };
                }
                Cursor::Det(it) => match it.next_mutant() {
                    Some((stage, step, bytes)) => {
                        return Ok(FuzzInput {
                            bytes,
                            lineage: Lineage {
                                parent,
                                step: Step::Det { stage, step },
                            },
                        });
                    }
                    None => {
                        self.queue[self.cur].det_done = true;
                        self.cursor = self.havoc_cursor();
                    }
                },
                Cursor::Havoc {
                    prng,
                    batch,
                    emitted,
                } => {
                    if *emitted == HAVOC_BATCH {
                        self.queue[self.cur].havoc_batches += 1;
                        self.cur = (self.cur + 1) % self.queue.len();
                        self.cursor = Cursor::Start;
                        continue;
                    }
                    let mut bytes = entry.bytes.clone();
                    havoc_mutate(&mut bytes, prng, self.cfg.limits());
                    let lineage = Lineage {
                        parent,
                        step: Step::Havoc {
                            batch: *batch,
                            index: *emitted,
                        },
                    };
                    *emitted += 1;
                    return Ok(FuzzInput { bytes, lineage });
                }
            }
        }
    }

    fn havoc_cursor(&self) -> Cursor {
        let e = &self.queue[self.cur];
        Cursor::Havoc {
            prng: Prng::new(derive_seed(
                self.cfg.rng_seed,
                e.id as u64,
                e.havoc_batches as u64,
            )),
            batch: e.havoc_batches,
            emitted: 0,
        }
    }

    /// Regenerates the input described by `lineage` from the queue.
    pub fn replay(&self, lineage: &Lineage) -> Option<Vec<u8>> {
        let parent = self.queue.get(lineage.parent as usize)?;
        replay_from(&parent.bytes, lineage, &self.cfg)
    }
}

/// Regenerates an input from its parent's bytes and lineage.
pub fn replay_from(parent_bytes: &[u8], lineage: &Lineage, cfg: &MutatorConfig) -> Option<Vec<u8>> {
    match lineage.step {
        Step::Verbatim => Some(parent_bytes.to_vec()),
        Step::Det { stage, step } => {
            let (lo, n) = DeterministicStages::new(parent_bytes.to_vec(), cfg.region).region();
            if step >= stage.count(n) {
                return None;
            }
            let mut buf = parent_bytes.to_vec();
            apply_stage(stage, step, &mut buf, lo, n);
            Some(buf)
        }
        Step::Havoc { batch, index } => {
            let mut prng = Prng::new(derive_seed(
                cfg.rng_seed,
                lineage.parent as u64,
                batch as u64,
            ));
            let mut out = Vec::new();
            for _ in 0..=index {
                out = parent_bytes.to_vec();
                havoc_mutate(&mut out, &mut prng, cfg.limits());
            }
            Some(out)
        }
    }
}
