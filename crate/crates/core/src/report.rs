//! Coverage growth tables from stats CSVs, ready for external plotting.

use std::io;

use serde::Serialize;

use crate::orchestrator::{StatsRow, STATS_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed stats CSV, line {line}: {msg}")]
    MalformedCsv { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(line: u64, msg: impl Into<String>) -> ReportError {
    ReportError::MalformedCsv {
        line,
        msg: msg.into(),
    }
}

/// One point of a growth curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub wall_s: f64,
    pub execs: u64,
    pub edges: u64,
    pub blocks: u64,
}

/// Column the two tables of a comparison are aligned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKey {
    WallS,
    Execs,
}

/// Reads a stats CSV and checks that its cumulative columns never fall.
pub fn read_stats(input: impl io::Read) -> Result<Vec<StatsRow>, ReportError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if header.iter().ne(STATS_HEADER.iter().copied()) {
        return Err(malformed(
            1,
            format!("header must be `{}`", STATS_HEADER.join(",")),
        ));
    }
    let mut rows: Vec<StatsRow> = Vec::new();
    for rec in rd.deserialize::<StatsRow>() {
        let line = rows.len() as u64 + 2;
        let row = rec.map_err(|e| malformed(line, e.to_string()))?;
        if let Some(prev) = rows.last() {
            let checks = [
                ("wall_s", prev.wall_s <= row.wall_s),
                ("execs", prev.execs <= row.execs),
                ("edges", prev.edges <= row.edges),
                ("blocks", prev.blocks <= row.blocks),
            ];
            if let Some((col, _)) = checks.iter().find(|(_, ok)| !ok) {
                return Err(malformed(
                    line,
                    format!("`{col}` decreases; the column must be cumulative"),
                ));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn growth(rows: &[StatsRow]) -> Vec<GrowthRow> {
    rows.iter()
        .map(|r| GrowthRow {
            wall_s: r.wall_s,
            execs: r.execs,
            edges: r.edges,
            blocks: r.blocks,
        })
        .collect()
}

pub fn write_growth(out: impl io::Write, rows: &[GrowthRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["wall_s", "execs", "edges", "blocks"])
            .map_err(io::Error::other)?;
    }
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

/// Latest point of `rows` at or before `at`, none before the first or
/// past the last.
fn at_point(rows: &[GrowthRow], key: JoinKey, at: f64) -> Option<&GrowthRow> {
    let k = |r: &GrowthRow| match key {
        JoinKey::WallS => r.wall_s,
        JoinKey::Execs => r.execs as f64,
    };
    let last = rows.last()?;
    if at > k(last) {
        return None;
    }
    match rows.partition_point(|r| k(r) <= at) {
        0 => None,
        i => Some(&rows[i - 1]),
    }
}

/// Aligns a fuzz and a baseline curve on `key`: one row per distinct key
/// value of either, each side carrying its latest point. Cells past the end
/// of a curve stay empty.
pub fn write_join(
    out: impl io::Write,
    fuzz: &[GrowthRow],
    baseline: &[GrowthRow],
    key: JoinKey,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let (key_name, others): (&str, [&str; 3]) = match key {
        JoinKey::WallS => ("wall_s", ["execs", "edges", "blocks"]),
        JoinKey::Execs => ("execs", ["wall_s", "edges", "blocks"]),
    };
    let mut header = vec![key_name.to_string()];
    for side in ["fuzz", "baseline"] {
        header.extend(others.iter().map(|c| format!("{c}_{side}")));
    }
    w.write_record(&header).map_err(io::Error::other)?;
    let key_of = |r: &GrowthRow| match key {
        JoinKey::WallS => r.wall_s,
        JoinKey::Execs => r.execs as f64,
    };
    let mut keys: Vec<f64> = fuzz.iter().chain(baseline).map(key_of).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    for at in keys {
        let mut rec = vec![match key {
            JoinKey::WallS => format!("{at:?}"),
            JoinKey::Execs => (at as u64).to_string(),
        }];
        for side in [fuzz, baseline] {
            match at_point(side, key, at) {
                Some(r) => {
                    let first = match key {
                        JoinKey::WallS => r.execs.to_string(),
                        JoinKey::Execs => format!("{:?}", r.wall_s),
                    };
                    rec.extend([first, r.edges.to_string(), r.blocks.to_string()]);
                }
                None => rec.extend(["".into(), "".into(), "".into()]),
            }
        }
        w.write_record(&rec).map_err(io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}
