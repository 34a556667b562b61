//! The `fbx` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 anything that aborted the
//! command (bad config, assembly error, campaign failure).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::asm::assemble;
use crate::config::{self, Loaded};
use crate::orchestrator::{load_seeds, Campaign, CampaignState, Mode};
use crate::report::{self, JoinKey};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fbx",
    version,
    about = "Emulation-based grey-box fuzzer for FB32 guests"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum By {
    #[value(name = "wall_s")]
    WallS,
    Execs,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Assemble a source file into an image and a symbol file.
    Asm {
        input: PathBuf,
        #[arg(short = 'o')]
        output: PathBuf,
        #[arg(long = "sym")]
        sym: PathBuf,
    },
    /// Run one window at the first interception and print its outcome kind.
    Run {
        config: PathBuf,
        /// Inject this input instead of the guest's own arguments.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Record seeds into the corpus directory.
    Record { config: PathBuf },
    /// Grey-box campaign over the recorded corpus.
    Fuzz { config: PathBuf },
    /// Black-box baseline campaign over the recorded corpus.
    Baseline { config: PathBuf },
    /// Turn a stats CSV into a growth table, or join a fuzz and a baseline
    /// CSV into a comparison table.
    Report {
        stats: PathBuf,
        baseline: Option<PathBuf>,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
        /// Join column for comparisons.
        #[arg(long, value_enum, default_value = "wall_s")]
        by: By,
    },
}

type Failure = Box<dyn std::error::Error>;

/// Parses `argv` (program name first) and runs the command.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch_to(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`dispatch`] with explicit output streams.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.cmd, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "fbx: {e}");
            EXIT_ABORT
        }
    }
}

fn load(path: &Path, mode: Option<Mode>) -> Result<Loaded, Failure> {
    let mut l = config::load(path)?;
    if let Some(m) = mode {
        l.campaign.mode = m;
    }
    Ok(l)
}

fn execute(cmd: Cmd, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Cmd::Asm { input, output, sym } => {
            let src =
                fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let a = assemble(&src).map_err(|e| format!("{}: {e}", input.display()))?;
            fs::write(&output, a.image().to_bytes())
                .map_err(|e| format!("{}: {e}", output.display()))?;
            fs::write(&sym, a.symbol_table().render())
                .map_err(|e| format!("{}: {e}", sym.display()))?;
            writeln!(
                out,
                "{}: {} bytes, entry 0x{:08X}",
                output.display(),
                a.code.len(),
                a.entry()
            )?;
        }
        Cmd::Run { config, replay } => {
            let l = load(&config, None)?;
            let input = match replay {
                Some(p) => fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?,
                None => {
                    let mut cfg = l.campaign.clone();
                    cfg.record_count = 1;
                    cfg.corpus_dir = None;
                    let rec = Campaign::record(&cfg, &l.guest)?;
                    match rec.seeds.into_iter().next() {
                        Some(s) => s.bytes,
                        None => {
                            return Err(format!(
                                "guest crashed before the first interception: {}",
                                rec.crashed.unwrap()
                            )
                            .into())
                        }
                    }
                }
            };
            let (view, truth) = Campaign::replay(&l.campaign, &l.guest, &input)?;
            writeln!(out, "{}", view.kind().name())?;
            if truth.kind() != view.kind() {
                writeln!(out, "ground truth: {truth}")?;
            } else if view.is_crash() {
                writeln!(out, "{truth}")?;
            }
        }
        Cmd::Record { config } => {
            let l = load(&config, Some(Mode::Record))?;
            let rec = Campaign::record(&l.campaign, &l.guest)?;
            writeln!(out, "recorded {} seed(s)", rec.seeds.len())?;
            if let Some(o) = rec.crashed {
                writeln!(
                    err,
                    "fbx: guest crashed during recording ({o}); partial seeds kept"
                )?;
            }
        }
        Cmd::Fuzz { config } => campaign(&config, Mode::Fuzz, out)?,
        Cmd::Baseline { config } => campaign(&config, Mode::Baseline, out)?,
        Cmd::Report {
            stats,
            baseline,
            output,
            by,
        } => {
            let read = |p: &Path| -> Result<_, Failure> {
                let f = fs::File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Ok(report::growth(
                    &report::read_stats(f).map_err(|e| format!("{}: {e}", p.display()))?,
                ))
            };
            let first = read(&stats)?;
            let mut buf = Vec::new();
            match baseline {
                None => report::write_growth(&mut buf, &first)?,
                Some(b) => {
                    let key = match by {
                        By::WallS => JoinKey::WallS,
                        By::Execs => JoinKey::Execs,
                    };
                    report::write_join(&mut buf, &first, &read(&b)?, key)?;
                }
            }
            match output {
                Some(p) => fs::write(&p, buf).map_err(|e| format!("{}: {e}", p.display()))?,
                None => out.write_all(&buf)?,
            }
        }
    }
    Ok(())
}

fn campaign(config: &Path, mode: Mode, out: &mut dyn Write) -> Result<(), Failure> {
    let l = load(config, Some(mode))?;
    let dir = l
        .campaign
        .corpus_dir
        .clone()
        .ok_or("`corpus_dir` is required to load seeds")?;
    let seeds = load_seeds(&dir)?;
    let state = Campaign::new(l.campaign, l.guest, seeds)?.run()?;
    summarize(&state, out)?;
    Ok(())
}

fn summarize(s: &CampaignState, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "mode: {}", s.mode.name())?;
    writeln!(
        out,
        "execs: {} in {:.2} s ({:.1} execs/s)",
        s.execs,
        s.wall_s,
        s.execs_per_s()
    )?;
    writeln!(out, "coverage: {} edges, {} blocks", s.edges, s.blocks)?;
    writeln!(
        out,
        "corpus: {} entries, {} timeouts",
        s.corpus_len, s.timeouts
    )?;
    match &s.first_crash {
        Some(t) => writeln!(
            out,
            "first crash: {} after {} execs ({:.2} s)",
            t.outcome, t.execs, t.wall_s
        )?,
        None => writeln!(out, "first crash: none")?,
    }
    for (i, c) in s.crashes.iter().enumerate() {
        match s.crash_dirs.get(i) {
            Some(dir) => writeln!(
                out,
                "crash {}: {} -> {}",
                c.id,
                c.outcome.kind().name(),
                dir.display()
            )?,
            None => writeln!(out, "crash {}: {}", c.id, c.outcome.kind().name())?,
        }
    }
    Ok(())
}
