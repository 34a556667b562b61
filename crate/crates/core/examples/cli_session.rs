//! Drives the `fbx` front-end end to end in a scratch directory: record,
//! fuzz, baseline, replay the first crash, and join both stats CSVs.
//!
//! ```text
//! cargo run --release --example cli_session
//! ```

use std::fs;
use std::path::Path;

use fbx::cli::dispatch;

fn fbx(args: &[&str]) -> anyhow::Result<()> {
    println!("$ fbx {}", args.join(" "));
    match dispatch(std::iter::once("fbx").chain(args.iter().copied())) {
        0 => Ok(()),
        code => anyhow::bail!("fbx exited with {code}"),
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let d = dir.path();
    let targets = fs::canonicalize(Path::new(env!("CARGO_MANIFEST_DIR")).join("targets"))?;
    for (file, mode, execution) in [
        ("fuzz.json", "fuzz", "snapshot"),
        ("baseline.json", "baseline", "persistent"),
    ] {
        let cfg = serde_json::json!({
            "image": targets.join("brackets_hard.img"),
            "symbols": targets.join("brackets_hard.sym"),
            "arch_profile": "fb32-std",
            "target": {
                "symbol": "parse_msg",
                "when": "pre",
                "params": [
                    { "index": 0, "mode": "pointer", "size": { "from_param": 1 }, "capacity": 32 },
                    { "index": 1, "mode": "value", "fuzz": false }
                ]
            },
            "crash_symbols": ["vb_suspend"],
            "coverage": { "bounds": [["parse_msg", "parse_end"]], "blacklist_runs": 10 },
            "mode": mode,
            "execution": { "kind": execution },
            "rng_seed": 0,
            "corpus_dir": "corpus",
            "crashes_dir": format!("{mode}/crashes"),
            "stats_path": format!("{mode}/stats.csv"),
            "limits": { "max_execs": 100000, "stop_on_crash": true }
        });
        fs::write(d.join(file), serde_json::to_string_pretty(&cfg)?)?;
    }
    let p = |s: &str| d.join(s).to_string_lossy().into_owned();

    fbx(&["record", &p("fuzz.json")])?;
    fbx(&["fuzz", &p("fuzz.json")])?;
    fbx(&["baseline", &p("baseline.json")])?;
    if let Some(crash) = fs::read_dir(d.join("fuzz/crashes"))?
        .flatten()
        .map(|e| e.path())
        .find(|p| p.is_dir())
    {
        fbx(&[
            "run",
            &p("fuzz.json"),
            "--replay",
            &crash.join("input.bin").to_string_lossy(),
        ])?;
        print!("{}", fs::read_to_string(crash.join("report.txt"))?);
    }
    fbx(&[
        "report",
        &p("fuzz/stats.csv"),
        &p("baseline/stats.csv"),
        "--by",
        "execs",
    ])?;
    Ok(())
}
