//! Emulation-based grey-box fuzzing for FB32 guest binaries.
//!
//! The crate runs unmodified guest images on a small block-translating
//! virtual machine, intercepts a configured target function, injects fuzz
//! inputs straight into guest registers and memory, and steers mutation with
//! edge coverage collected at block entry. A black-box baseline mode shares
//! the same machinery for controlled comparisons.
//!
//! Layers, bottom-up:
//!
//! * [`isa`], [`machine`]: the FB32 CPU, block cache, hooks and snapshots.
//! * [`asm`], [`loader`]: assembler, disassembler, image and symbol files.
//! * [`harness`]: interception and injection under a calling convention.
//! * [`coverage`]: edge/block maps, hit-count buckets, blacklist pre-analysis.
//! * [`mutator`]: deterministic stages, havoc and the queue.
//! * [`orchestrator`]: record, fuzz and baseline campaigns.
//! * [`config`], [`report`], [`cli`]: the `fbx` front-end.
//! * [`targets`]: bundled guest programs with injected bugs.

pub mod asm;
pub mod cli;
pub mod config;
pub mod coverage;
pub mod harness;
pub mod isa;
pub mod loader;
pub mod machine;
pub mod mutator;
pub mod orchestrator;
pub mod prng;
pub mod report;
pub mod targets;
