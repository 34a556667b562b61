use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

/// Cumulative coverage in its text form: `edge %04X %u` lines, then
/// `block %08X` lines, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageSnapshot {
    pub edges: BTreeMap<u16, u8>,
    pub blocks: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("coverage snapshot line {line}: {msg}")]
pub struct SnapshotParseError {
    pub line: usize,
    pub msg: String,
}

impl CoverageSnapshot {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (idx, count) in &self.edges {
            writeln!(out, "edge {idx:04X} {count}").unwrap();
        }
        for b in &self.blocks {
            writeln!(out, "block {b:08X}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<CoverageSnapshot, SnapshotParseError> {
        let mut snap = CoverageSnapshot::default();
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| SnapshotParseError {
                line: i + 1,
                msg: msg.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] => {}
                ["edge", idx, count] if idx.len() == 4 => {
                    let idx = u16::from_str_radix(idx, 16).map_err(|_| err("bad edge index"))?;
                    let count: u8 = count.parse().map_err(|_| err("bad edge count"))?;
                    snap.edges.insert(idx, count);
                }
                ["block", addr] if addr.len() == 8 => {
                    snap.blocks.insert(
                        u32::from_str_radix(addr, 16).map_err(|_| err("bad block address"))?,
                    );
                }
                _ => return Err(err("expected `edge %04X %u` or `block %08X`")),
            }
        }
        Ok(snap)
    }

    /// Offline aggregation: max of counters, union of blocks.
    pub fn merge(&mut self, other: &CoverageSnapshot) {
        for (&i, &c) in &other.edges {
            let e = self.edges.entry(i).or_insert(0);
            *e = (*e).max(c);
        }
        self.blocks.extend(other.blocks.iter().copied());
    }
}
