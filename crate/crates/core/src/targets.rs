//! Bundled guest programs.
//!
//! Three small parsers, each in an `easy` and a `hard` variant that differ
//! only in the injected bug. Every guest runs the same cyclic main loop:
//! copy its embedded seed into `msg_buf`, call `parse_msg(buf, len)`, store
//! the result to the mailbox, idle, repeat. Every bug ends in a load or
//! store into the privileged region. The exact trigger predicate of each
//! variant is documented in the header of its `.s` file.

use crate::asm::{assemble, Assembly};
use crate::harness::{ParamSpec, SizeRule, TargetSpec, When};
use crate::loader::{GuestImage, SymbolTable};

/// Capacity of `msg_buf` in every bundled guest.
pub const MSG_BUF_CAP: u32 = 32;

/// Symbol of the fuzzed function.
pub const TARGET_SYMBOL: &str = "parse_msg";

/// Crash handler symbol exported by every guest.
pub const CRASH_SYMBOL: &str = "vb_suspend";

/// Timer ISR symbol exported by every guest.
pub const ISR_SYMBOL: &str = "__timer_isr";

/// Symbol marking the end of the parser code.
pub const PARSE_END_SYMBOL: &str = "parse_end";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuestTarget {
    /// `<family>_<variant>`, also the file stem under `targets/`.
    pub name: &'static str,
    pub family: &'static str,
    pub hard: bool,
    pub source: &'static str,
    /// Bytes the guest feeds its own parser on every loop iteration.
    pub seed: &'static [u8],
    /// Prebuilt image and symbol files shipped next to the source.
    pub prebuilt_image: &'static [u8],
    pub prebuilt_symbols: &'static str,
}

macro_rules! target {
    ($name:literal, $family:literal, $hard:literal, $seed:expr) => {
        GuestTarget {
            name: $name,
            family: $family,
            hard: $hard,
            source: include_str!(concat!("../targets/", $name, ".s")),
            seed: $seed,
            prebuilt_image: include_bytes!(concat!("../targets/", $name, ".img")),
            prebuilt_symbols: include_str!(concat!("../targets/", $name, ".sym")),
        }
    };
}

pub static ALL: [GuestTarget; 6] = [
    target!("brackets_easy", "brackets", false, b"AA"),
    target!("brackets_hard", "brackets", true, b"{bbbbbbb}"),
    target!("addr_easy", "addr", false, b"ABCDEFG"),
    target!("addr_hard", "addr", true, b"AAAAA"),
    target!("expr_easy", "expr", false, b"help("),
    target!("expr_hard", "expr", true, b"1+2"),
];

pub fn by_name(name: &str) -> Option<&'static GuestTarget> {
    ALL.iter().find(|t| t.name == name)
}

/// The three hard variants.
pub fn hard() -> impl Iterator<Item = &'static GuestTarget> {
    ALL.iter().filter(|t| t.hard)
}

impl GuestTarget {
    /// Assembles the bundled source. The sources are part of the crate, so
    /// failure is a build defect.
    pub fn assemble(&self) -> Assembly {
        assemble(self.source).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }

    pub fn image(&self) -> GuestImage {
        self.assemble().image()
    }

    pub fn symbols(&self) -> SymbolTable {
        self.assemble().symbol_table()
    }

    /// `parse_msg(buf, len)` intercepted on entry: the buffer is fuzzed,
    /// its length register follows the injected length.
    pub fn target_spec(&self) -> TargetSpec {
        TargetSpec {
            symbol: TARGET_SYMBOL.to_string(),
            when: When::Pre,
            params: vec![
                ParamSpec::pointer(0, SizeRule::FromParam(1)).with_capacity(MSG_BUF_CAP),
                ParamSpec::value(1).fixed(),
            ],
            convention: "fb32-std".to_string(),
        }
    }

    /// `[parse_msg, parse_end)`: the parser code only.
    pub fn parser_bounds(&self) -> (u32, u32) {
        let syms = self.symbols();
        let lo = syms
            .resolve(TARGET_SYMBOL)
            .expect("bundled guest exports parse_msg");
        let hi = syms
            .resolve(PARSE_END_SYMBOL)
            .expect("bundled guest exports parse_end");
        (lo, hi)
    }
}
