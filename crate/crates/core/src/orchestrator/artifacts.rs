use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::campaign::Seed;
use super::{CampaignError, Outcome};
use crate::harness::{BufferLoc, Frame};
use crate::loader::SymbolTable;
use crate::machine::Snapshot;
use crate::mutator::{Lineage, QueueEntry};

pub const STATS_HEADER: [&str; 8] = [
    "wall_s",
    "execs",
    "execs_per_s",
    "edges",
    "blocks",
    "crashes",
    "timeouts",
    "corpus_len",
];

/// One line of the stats CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub wall_s: f64,
    pub execs: u64,
    /// Over the interval since the previous row.
    pub execs_per_s: f64,
    pub edges: u64,
    pub blocks: u64,
    pub crashes: u64,
    pub timeouts: u64,
    pub corpus_len: u64,
}

/// Appends stats rows to a CSV file, header first.
pub struct StatsWriter {
    path: PathBuf,
    out: csv::Writer<fs::File>,
}

impl StatsWriter {
    pub fn create(path: &Path) -> Result<StatsWriter, CampaignError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(CampaignError::io(dir))?;
        }
        let file = fs::File::create(path).map_err(CampaignError::io(path))?;
        Ok(StatsWriter {
            path: path.to_path_buf(),
            out: csv::Writer::from_writer(file),
        })
    }

    pub fn write(&mut self, row: &StatsRow) -> Result<(), CampaignError> {
        self.out.serialize(row).map_err(|e| CampaignError::Io {
            path: self.path.clone(),
            source: std::io::Error::other(e),
        })?;
        self.out.flush().map_err(CampaignError::io(&self.path))
    }
}

/// Everything needed to understand and reproduce one failing window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashReport {
    /// 1-based, in discovery order.
    pub id: u32,
    pub exec: u64,
    pub outcome: Outcome,
    /// What the emulator saw, which differs from `outcome` for the baseline.
    pub ground_truth: Outcome,
    pub input: Vec<u8>,
    pub lineage: Lineage,
    pub pc: u32,
    pub regs: [u32; 16],
    /// Last blocks of the window, oldest first.
    pub ring: Vec<u32>,
}

impl CrashReport {
    pub fn dir_name(&self) -> String {
        format!("crash_{:06}_{}", self.id, self.outcome.kind().name())
    }

    pub fn repro_command(&self, config: Option<&Path>, crashes_dir: &Path) -> String {
        let cfg = config.map_or_else(|| "<config.json>".to_string(), |p| p.display().to_string());
        format!(
            "fbx run {cfg} --replay {}",
            crashes_dir
                .join(self.dir_name())
                .join("input.bin")
                .display()
        )
    }

    pub fn render(&self, symbols: &SymbolTable, repro: &str) -> String {
        let sym = |addr: u32| match symbols.symbolize(addr) {
            Some((name, 0)) => format!("0x{addr:08X} {name}"),
            Some((name, off)) => format!("0x{addr:08X} {name}+0x{off:X}"),
            None => format!("0x{addr:08X}"),
        };
        let mut s = String::new();
        let _ = writeln!(s, "outcome: {}", self.outcome);
        let _ = writeln!(s, "ground truth: {}", self.ground_truth);
        let _ = writeln!(s, "exec: {}", self.exec);
        let _ = writeln!(s, "lineage: {}", self.lineage);
        let hex: Vec<String> = self.input.iter().map(|b| format!("{b:02X}")).collect();
        let _ = writeln!(s, "input: {} bytes: {}", self.input.len(), hex.join(" "));
        let _ = writeln!(s, "pc: {}", sym(self.pc));
        for row in 0..4 {
            let line: Vec<String> = (0..4)
                .map(|c| row * 4 + c)
                .map(|r| format!("r{r:<2} 0x{:08X}", self.regs[r]))
                .collect();
            let _ = writeln!(s, "{}", line.join("  "));
        }
        let _ = writeln!(s, "last blocks (oldest first):");
        for &b in &self.ring {
            let _ = writeln!(s, "  {}", sym(b));
        }
        let _ = writeln!(s, "repro: {repro}");
        s
    }

    /// Writes `<dir_name>/input.bin` and `report.txt` under `crashes_dir`.
    pub fn write(
        &self,
        crashes_dir: &Path,
        symbols: &SymbolTable,
        config: Option<&Path>,
    ) -> Result<PathBuf, CampaignError> {
        let dir = crashes_dir.join(self.dir_name());
        fs::create_dir_all(&dir).map_err(CampaignError::io(&dir))?;
        let input = dir.join("input.bin");
        fs::write(&input, &self.input).map_err(CampaignError::io(&input))?;
        let report = dir.join("report.txt");
        let text = self.render(symbols, &self.repro_command(config, crashes_dir));
        fs::write(&report, text).map_err(CampaignError::io(&report))?;
        Ok(dir)
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CampaignError> {
    fs::create_dir_all(dir).map_err(CampaignError::io(dir))
}

pub(crate) fn write_corpus_entry(dir: &Path, entry: &QueueEntry) -> Result<(), CampaignError> {
    let path = dir.join(entry.file_name());
    fs::write(&path, &entry.bytes).map_err(CampaignError::io(&path))
}

pub(crate) fn seed_file_name(idx: usize) -> String {
    format!("id{idx:06}_seed")
}

/// Writes seed `idx`, and its snapshot and frame under `snapshots/`.
pub(crate) fn write_seed(dir: &Path, idx: usize, seed: &Seed) -> Result<(), CampaignError> {
    ensure_dir(dir)?;
    let path = dir.join(seed_file_name(idx));
    fs::write(&path, &seed.bytes).map_err(CampaignError::io(&path))?;
    if let (Some(snap), Some(frame)) = (&seed.snapshot, &seed.frame) {
        let sdir = dir.join("snapshots");
        ensure_dir(&sdir)?;
        let sp = sdir.join(format!("id{idx:06}.snap"));
        fs::write(&sp, snap.to_bytes()).map_err(CampaignError::io(&sp))?;
        let fp = sdir.join(format!("id{idx:06}.frame"));
        fs::write(&fp, frame_to_text(frame)).map_err(CampaignError::io(&fp))?;
    }
    Ok(())
}

/// Loads every `id%06u_seed` file of a corpus directory, in id order, with
/// snapshots when present.
pub fn load_seeds(dir: &Path) -> Result<Vec<Seed>, CampaignError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(CampaignError::io(dir))?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| {
            n.len() == 13
                && n.starts_with("id")
                && n.ends_with("_seed")
                && n[2..8].bytes().all(|b| b.is_ascii_digit())
        })
        .collect();
    names.sort();
    let mut seeds = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(CampaignError::io(&path))?;
        let stem = &name[..8];
        let sp = dir.join("snapshots").join(format!("{stem}.snap"));
        let fp = dir.join("snapshots").join(format!("{stem}.frame"));
        let (snapshot, frame) = if sp.exists() && fp.exists() {
            let raw = fs::read(&sp).map_err(CampaignError::io(&sp))?;
            let snap = Snapshot::from_bytes(&raw).map_err(|e| CampaignError::Io {
                path: sp.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
            let text = fs::read_to_string(&fp).map_err(CampaignError::io(&fp))?;
            let frame = frame_from_text(&text).ok_or_else(|| CampaignError::Io {
                path: fp.clone(),
                source: std::io::Error::other("malformed frame file"),
            })?;
            (Some(Arc::new(snap)), Some(frame))
        } else {
            (None, None)
        };
        seeds.push(Seed {
            bytes,
            snapshot,
            frame,
        });
    }
    Ok(seeds)
}

pub fn frame_to_text(f: &Frame) -> String {
    let mut s = format!(
        "invocation {}\nentry_insn {}\nreturn_addr {:08X}\nvalues",
        f.invocation, f.entry_insn, f.return_addr
    );
    for v in &f.values {
        let _ = write!(s, " {v:08X}");
    }
    s.push('\n');
    for b in &f.buffers {
        let _ = writeln!(s, "buffer {} {:08X} {} {}", b.param, b.addr, b.size, b.cap);
    }
    s
}

pub fn frame_from_text(text: &str) -> Option<Frame> {
    let mut f = Frame {
        invocation: 0,
        entry_insn: 0,
        return_addr: 0,
        values: Vec::new(),
        buffers: Vec::new(),
    };
    let hex = |t: &str| u32::from_str_radix(t, 16).ok();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next()? {
            "invocation" => f.invocation = it.next()?.parse().ok()?,
            "entry_insn" => f.entry_insn = it.next()?.parse().ok()?,
            "return_addr" => f.return_addr = hex(it.next()?)?,
            "values" => f.values = it.map(hex).collect::<Option<Vec<_>>>()?,
            "buffer" => f.buffers.push(BufferLoc {
                param: it.next()?.parse().ok()?,
                addr: hex(it.next()?)?,
                size: it.next()?.parse().ok()?,
                cap: it.next()?.parse().ok()?,
            }),
            _ => return None,
        }
    }
    Some(f)
}
