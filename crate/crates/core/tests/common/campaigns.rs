//! Whole-campaign drivers built on the shipped configs, rewritten into a
//! scratch directory so every run starts from an empty corpus.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fbx::cli;
use fbx::config;
use fbx::coverage::blacklist_analysis;
use fbx::orchestrator::{
    load_seeds, Campaign, CampaignError, CampaignState, Executor, Guest, StatsRow, WindowEnd,
    DEFAULT_MAX_INPUT_LEN, DEFAULT_RECORD_BUDGET, DEFAULT_TIMEOUT_INSNS,
};
use fbx::report::read_stats;
use fbx::targets::GuestTarget;
use serde_json::{json, Value};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Limits and seed applied on top of a shipped config.
#[derive(Debug, Clone, Copy)]
pub struct Overrides {
    pub rng_seed: u64,
    pub max_execs: Option<u64>,
    pub max_seconds: Option<f64>,
    pub stop_on_crash: bool,
}

impl Overrides {
    pub fn execs(rng_seed: u64, max_execs: u64, stop_on_crash: bool) -> Self {
        Overrides {
            rng_seed,
            max_execs: Some(max_execs),
            max_seconds: None,
            stop_on_crash,
        }
    }

    pub fn seconds(rng_seed: u64, max_seconds: f64) -> Self {
        Overrides {
            rng_seed,
            max_execs: None,
            max_seconds: Some(max_seconds),
            stop_on_crash: false,
        }
    }
}

/// Copies `configs/<name>.json` into `dir` with absolute guest paths and
/// outputs under `dir/<tag>/`; the corpus is shared by `<t>` and
/// `<t>_baseline` within one `dir`.
pub fn write_config(dir: &Path, name: &str, tag: &str, o: Overrides) -> PathBuf {
    let src = crate_dir().join("configs").join(format!("{name}.json"));
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&src).unwrap()).unwrap();
    let base = src.parent().unwrap();
    for key in ["image", "symbols"] {
        let rel = v[key].as_str().unwrap().to_string();
        v[key] = json!(fs::canonicalize(base.join(rel)).unwrap());
    }
    v["corpus_dir"] = json!("corpus");
    v["crashes_dir"] = json!(format!("{tag}/crashes"));
    v["stats_path"] = json!(format!("{tag}/stats.csv"));
    v["rng_seed"] = json!(o.rng_seed);
    let mut limits = serde_json::Map::new();
    if let Some(n) = o.max_execs {
        limits.insert("max_execs".into(), json!(n));
    }
    if let Some(s) = o.max_seconds {
        limits.insert("max_seconds".into(), json!(s));
    }
    limits.insert("stop_on_crash".into(), json!(o.stop_on_crash));
    v["limits"] = Value::Object(limits);
    fs::create_dir_all(dir.join(tag)).unwrap();
    let path = dir.join(format!("{tag}.json"));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

/// Runs `fbx` in-process and returns (exit code, stdout, stderr).
pub fn fbx(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::dispatch_to(
        std::iter::once("fbx").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

/// `fbx record` on `cfg` unless its corpus already holds seeds.
pub fn record(cfg: &Path) -> Result<(), String> {
    let corpus = cfg.parent().unwrap().join("corpus");
    if load_seeds(&corpus).is_ok_and(|s| !s.is_empty()) {
        return Ok(());
    }
    let (code, _, err) = fbx(&["record", cfg.to_str().unwrap()]);
    if code != 0 {
        return Err(err);
    }
    Ok(())
}

/// Records if needed, then runs the campaign the config describes.
pub fn campaign(cfg: &Path) -> Result<CampaignState, String> {
    record(cfg)?;
    let l = config::load(cfg).map_err(|e| e.to_string())?;
    let seeds = load_seeds(l.campaign.corpus_dir.as_ref().unwrap()).map_err(|e| e.to_string())?;
    Campaign::new(l.campaign, l.guest, seeds)
        .and_then(Campaign::run)
        .map_err(|e| e.to_string())
}

/// File name to contents for every file below `dir`, with paths relative
/// to it.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let Ok(rd) = fs::read_dir(dir) else { return };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// What two runs of one config must agree on.
#[derive(Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub corpus: BTreeMap<String, Vec<u8>>,
    pub crash_inputs: BTreeMap<String, Vec<u8>>,
    pub coverage: String,
    pub execs: u64,
}

/// Runs `name` once in a fresh directory and fingerprints the result.
pub fn fingerprint(name: &str, o: Overrides) -> Result<(Fingerprint, CampaignState), String> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), name, "fuzz", o);
    let state = campaign(&cfg)?;
    let crash_inputs = tree(&dir.path().join("fuzz/crashes"))
        .into_iter()
        .filter(|(k, _)| k.ends_with("input.bin"))
        .collect();
    let fp = Fingerprint {
        corpus: tree(&dir.path().join("corpus")),
        crash_inputs,
        coverage: fs::read_to_string(dir.path().join("fuzz/stats.coverage")).unwrap(),
        execs: state.execs,
    };
    Ok((fp, state))
}

/// Novelty reports over `windows` replays of the unmodified seed in
/// persistent windows, after a `k`-run blacklist analysis (`k < 2` skips
/// it) and one calibration window. Coverage is unbounded so the timer
/// handler is traced.
pub fn spurious_admissions(
    t: &GuestTarget,
    period: u32,
    k: usize,
    windows: usize,
) -> Result<(usize, usize), CampaignError> {
    let g = Guest::bundled(t).with_timer(period, true, 1);
    let mut ex = Executor::new(&g, DEFAULT_TIMEOUT_INSNS, DEFAULT_MAX_INPUT_LEN as u32)?;
    ex.advance(DEFAULT_RECORD_BUDGET)?;
    let seed = ex.capture_seed(false)?.to_input(&g.spec);
    let window = |ex: &mut Executor| -> Result<(), CampaignError> {
        let r = ex.run_window(&seed, WindowEnd::Interception)?;
        assert!(
            r.at_interception,
            "seed window did not reach the next interception: {:?}",
            r.events
        );
        Ok(())
    };
    let mut blacklisted = 0;
    if k >= 2 {
        let bl = blacklist_analysis(k, |_| {
            window(&mut ex)?;
            Ok::<_, CampaignError>(ex.coverage().trace())
        })?;
        blacklisted = bl.blocks.len();
        ex.coverage_mut().set_blacklist(&bl);
    }
    window(&mut ex)?;
    ex.coverage_mut().has_new_bits();
    let mut novel = 0;
    for _ in 0..windows {
        window(&mut ex)?;
        novel += ex.coverage_mut().has_new_bits().is_new() as usize;
    }
    Ok((novel, blacklisted))
}

/// Reads a stats CSV, rejecting it unless every cumulative column is
/// monotone.
pub fn stats(path: &Path) -> Result<Vec<StatsRow>, String> {
    let f = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_stats(f).map_err(|e| format!("{}: {e}", path.display()))
}

/// Replays a crash directory through `fbx run --replay` and returns the
/// reported kind next to the one in the directory name.
pub fn replay_crash(cfg: &Path, crash_dir: &Path) -> (String, String) {
    let name = crash_dir.file_name().unwrap().to_str().unwrap();
    let want = name.rsplit('_').next().unwrap().to_string();
    let input = crash_dir.join("input.bin");
    let (code, out, err) = fbx(&[
        "run",
        cfg.to_str().unwrap(),
        "--replay",
        input.to_str().unwrap(),
    ]);
    let got = if code == 0 {
        out.lines().next().unwrap_or("").to_string()
    } else {
        format!("exit {code}: {err}")
    };
    (got, want)
}
