//! The JSON campaign configuration.
//!
//! Parsing is strict: unknown keys are rejected and every error names the
//! offending key path or source position. Relative paths are resolved
//! against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::{ConventionProfile, ParamSpec, TargetSpec, When};
use crate::loader::{parse_image, parse_symbols, SymbolTable};
use crate::machine::{MachineConfig, DEFAULT_RAM_LEN};
use crate::orchestrator::{
    CampaignConfig, Execution, Guest, Limits, Mode, DEFAULT_BLACKLIST_RUNS, DEFAULT_MAX_INPUT_LEN,
    DEFAULT_RECORD_BUDGET, DEFAULT_STATS_INTERVAL, DEFAULT_TIMEOUT_INSNS,
};
use crate::targets::ISR_SYMBOL;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {msg}")]
    ParseError {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("unknown key `{key}` (line {line}, column {column})")]
    UnknownKey {
        key: String,
        line: usize,
        column: usize,
    },
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("symbol `{name}` (from `{key}`) not found in the symbol file")]
    SymbolNotFound { key: String, name: String },
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Record,
    Fuzz,
    Baseline,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Mode {
        match m {
            ModeName::Record => Mode::Record,
            ModeName::Fuzz => Mode::Fuzz,
            ModeName::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionKind {
    Persistent,
    Snapshot,
}

impl From<ExecutionKind> for Execution {
    fn from(k: ExecutionKind) -> Execution {
        match k {
            ExecutionKind::Persistent => Execution::Persistent,
            ExecutionKind::Snapshot => Execution::Snapshot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub symbol: String,
    pub when: When,
    pub params: Vec<ParamSpec>,
}

/// An address: a number, a `0x` string or a symbol name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AddrRef {
    Addr(u32),
    Name(String),
}

impl AddrRef {
    fn resolve(&self, key: &str, syms: &SymbolTable) -> Result<u32, ConfigError> {
        match self {
            AddrRef::Addr(a) => Ok(*a),
            AddrRef::Name(s) => match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                Some(hex) => u32::from_str_radix(hex, 16)
                    .map_err(|_| bad(key, format!("`{s}` is not a hex address"))),
                None => syms.resolve(s).map_err(|_| ConfigError::SymbolNotFound {
                    key: key.into(),
                    name: s.clone(),
                }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    /// Half-open `[lo, hi)` ranges; empty traces every block.
    #[serde(default)]
    pub bounds: Vec<(AddrRef, AddrRef)>,
    #[serde(default = "default_blacklist_runs")]
    pub blacklist_runs: usize,
}

impl Default for CoverageSection {
    fn default() -> Self {
        CoverageSection {
            bounds: Vec::new(),
            blacklist_runs: DEFAULT_BLACKLIST_RUNS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    pub kind: ExecutionKind,
    #[serde(default = "default_timeout")]
    pub timeout_insns: u64,
}

impl Default for ExecutionSection {
    fn default() -> Self {
        ExecutionSection {
            kind: ExecutionKind::Persistent,
            timeout_insns: DEFAULT_TIMEOUT_INSNS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimerSection {
    /// Instructions between ticks; 0 disables the timer.
    pub period: u32,
    #[serde(default)]
    pub jitter: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_isr")]
    pub isr: AddrRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    #[serde(default)]
    pub max_execs: Option<u64>,
    #[serde(default)]
    pub max_seconds: Option<f64>,
    #[serde(default)]
    pub stop_on_crash: bool,
}

fn default_blacklist_runs() -> usize {
    DEFAULT_BLACKLIST_RUNS
}
fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_INSNS
}
fn default_isr() -> AddrRef {
    AddrRef::Name(ISR_SYMBOL.to_string())
}
fn default_profile() -> String {
    "fb32-std".to_string()
}
fn default_mode() -> ModeName {
    ModeName::Fuzz
}
fn default_record_count() -> usize {
    1
}
fn default_record_budget() -> u64 {
    DEFAULT_RECORD_BUDGET
}
fn default_max_input_len() -> usize {
    DEFAULT_MAX_INPUT_LEN
}
fn default_stats_interval() -> f64 {
    DEFAULT_STATS_INTERVAL
}

/// The config file as written, defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub image: PathBuf,
    pub symbols: PathBuf,
    #[serde(default = "default_profile")]
    pub arch_profile: String,
    pub target: TargetSection,
    #[serde(default)]
    pub crash_symbols: Vec<String>,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub execution: ExecutionSection,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub timer: Option<TimerSection>,
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub crashes_dir: Option<PathBuf>,
    #[serde(default)]
    pub stats_path: Option<PathBuf>,
    #[serde(default = "default_record_count")]
    pub record_count: usize,
    /// Instruction budget for reaching each interception.
    #[serde(default = "default_record_budget")]
    pub record_budget_insns: u64,
    #[serde(default = "default_max_input_len")]
    pub max_input_len: usize,
    #[serde(default = "default_stats_interval")]
    pub stats_interval: f64,
    #[serde(default)]
    pub limits: LimitsSection,
}

/// A parsed config resolved against its image and symbols.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: ConfigFile,
    pub campaign: CampaignConfig,
    pub guest: Guest,
}

impl ConfigFile {
    pub fn parse_str(text: &str) -> Result<ConfigFile, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            let (line, column) = (inner.line(), inner.column());
            let msg = inner.to_string();
            match inner.classify() {
                serde_json::error::Category::Data => match msg.strip_prefix("unknown field `") {
                    Some(rest) => {
                        let field = rest.split('`').next().unwrap_or_default();
                        let key = if key == "." {
                            field.to_string()
                        } else {
                            key.trim_end_matches(field).to_string() + field
                        };
                        ConfigError::UnknownKey { key, line, column }
                    }
                    None => ConfigError::BadValue {
                        key,
                        msg: strip_position(&msg),
                    },
                },
                _ => ConfigError::ParseError {
                    line,
                    column,
                    msg: strip_position(&msg),
                },
            }
        })?;
        file.check()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that need no files.
    fn check(&self) -> Result<(), ConfigError> {
        if ConventionProfile::by_name(&self.arch_profile).is_none() {
            return Err(bad(
                "arch_profile",
                format!(
                    "unknown profile `{}`; built-ins: {}",
                    self.arch_profile,
                    ConventionProfile::BUILTIN.join(", ")
                ),
            ));
        }
        self.target_spec()
            .validate()
            .map_err(|e| bad("target", e.to_string()))?;
        if self.execution.timeout_insns == 0 {
            return Err(bad("execution.timeout_insns", "must be positive"));
        }
        if self.max_input_len == 0 {
            return Err(bad("max_input_len", "must be positive"));
        }
        if self.stats_interval.is_nan() || self.stats_interval <= 0.0 {
            return Err(bad("stats_interval", "must be positive"));
        }
        if self.timer.as_ref().is_some_and(|t| t.period == 0) {
            return Err(bad(
                "timer.period",
                "must be positive; omit `timer` to disable it",
            ));
        }
        Ok(())
    }

    pub fn target_spec(&self) -> TargetSpec {
        TargetSpec {
            symbol: self.target.symbol.clone(),
            when: self.target.when,
            params: self.target.params.clone(),
            convention: self.arch_profile.clone(),
        }
    }

    /// Reads the image and symbols and builds the campaign and guest.
    /// Relative paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<(CampaignConfig, Guest), ConfigError> {
        let at = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let read = |key: &str, p: &Path| {
            fs::read(at(p)).map_err(|e| bad(key, format!("cannot read {}: {e}", at(p).display())))
        };
        let machine_base = MachineConfig::default();
        let image = parse_image(&read("image", &self.image)?, DEFAULT_RAM_LEN)
            .map_err(|e| bad("image", e.to_string()))?;
        let sym_text = String::from_utf8(read("symbols", &self.symbols)?)
            .map_err(|_| bad("symbols", "not UTF-8"))?;
        let symbols = parse_symbols(&sym_text).map_err(|e| bad("symbols", e.to_string()))?;
        symbols
            .resolve(&self.target.symbol)
            .map_err(|_| ConfigError::SymbolNotFound {
                key: "target.symbol".into(),
                name: self.target.symbol.clone(),
            })?;
        for name in &self.crash_symbols {
            symbols
                .resolve(name)
                .map_err(|_| ConfigError::SymbolNotFound {
                    key: "crash_symbols".into(),
                    name: name.clone(),
                })?;
        }
        let mut bounds = Vec::with_capacity(self.coverage.bounds.len());
        for (lo, hi) in &self.coverage.bounds {
            let (lo, hi) = (
                lo.resolve("coverage.bounds", &symbols)?,
                hi.resolve("coverage.bounds", &symbols)?,
            );
            if lo >= hi {
                return Err(bad(
                    "coverage.bounds",
                    format!("empty range [0x{lo:X}, 0x{hi:X})"),
                ));
            }
            bounds.push((lo, hi));
        }
        let machine = match &self.timer {
            Some(t) => MachineConfig {
                isr_addr: Some(t.isr.resolve("timer.isr", &symbols)?),
                timer_period: t.period,
                timer_jitter: t.jitter,
                timer_seed: t.seed,
                ..machine_base
            },
            None => machine_base,
        };
        let guest = Guest {
            image,
            symbols,
            spec: self.target_spec(),
            profile: ConventionProfile::by_name(&self.arch_profile).expect("checked at parse"),
            crash_symbols: self.crash_symbols.clone(),
            machine,
            bounds,
        };
        let campaign = CampaignConfig {
            mode: self.mode.into(),
            execution: self.execution.kind.into(),
            timeout_insns: self.execution.timeout_insns,
            record_count: self.record_count,
            record_budget_insns: self.record_budget_insns,
            blacklist_runs: self.coverage.blacklist_runs,
            rng_seed: self.rng_seed,
            stats_interval: self.stats_interval,
            max_input_len: self.max_input_len,
            limits: Limits {
                max_execs: self.limits.max_execs,
                max_seconds: self.limits.max_seconds,
                stop_on_crash: self.limits.stop_on_crash,
            },
            corpus_dir: self.corpus_dir.as_deref().map(at),
            crashes_dir: self.crashes_dir.as_deref().map(at),
            stats_path: self.stats_path.as_deref().map(at),
            config_path: None,
        };
        Ok((campaign, guest))
    }
}

/// serde_json appends " at line L column C"; the variants carry those.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Reads, validates and resolves a config file.
pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = ConfigFile::parse_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (mut campaign, guest) = file.resolve(base)?;
    campaign.config_path = Some(path.to_path_buf());
    Ok(Loaded {
        file,
        campaign,
        guest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "image": "t.img",
        "symbols": "t.sym",
        "target": {
            "symbol": "parse_msg",
            "when": "pre",
            "params": [
                {"index": 0, "mode": "pointer", "size": {"from_param": 1}, "capacity": 32},
                {"index": 1, "mode": "value", "fuzz": false}
            ]
        }
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ConfigFile::parse_str(MINIMAL).unwrap();
        assert_eq!(c.arch_profile, "fb32-std");
        assert_eq!(c.mode, ModeName::Fuzz);
        assert_eq!(c.execution.kind, ExecutionKind::Persistent);
        assert_eq!(c.execution.timeout_insns, 5_000_000);
        assert_eq!(c.coverage.blacklist_runs, 10);
        assert_eq!(c.max_input_len, 4096);
        assert_eq!(c.stats_interval, 1.0);
        assert_eq!(c.record_count, 1);
        assert!(c.timer.is_none() && c.crash_symbols.is_empty() && c.coverage.bounds.is_empty());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = ConfigFile::parse_str(MINIMAL).unwrap();
        c.coverage.bounds = vec![(AddrRef::Name("parse_msg".into()), AddrRef::Addr(0x2000))];
        c.timer = Some(TimerSection {
            period: 10_000,
            jitter: true,
            seed: 7,
            isr: default_isr(),
        });
        c.limits.max_execs = Some(5);
        c.corpus_dir = Some("out/corpus".into());
        assert_eq!(ConfigFile::parse_str(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replacen("\"image\"", "\"imgae\": 1, \"image\"", 1);
        match ConfigFile::parse_str(&text) {
            Err(ConfigError::UnknownKey { key, line, .. }) => {
                assert_eq!((key.as_str(), line), ("imgae", 2))
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replacen("\"when\"", "\"wehn\": \"pre\", \"when\"", 1);
        match ConfigFile::parse_str(&text) {
            Err(ConfigError::UnknownKey { key, .. }) => assert_eq!(key, "target.wehn"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match ConfigFile::parse_str("{\n  \"image\": ,\n}") {
            Err(ConfigError::ParseError { line, column, .. }) => {
                assert_eq!((line, column), (2, 12))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_name_their_key() {
        let key_of = |text: &str| match ConfigFile::parse_str(text) {
            Err(ConfigError::BadValue { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            key_of(&MINIMAL.replacen("\"pre\"", "\"during\"", 1)),
            "target.when"
        );
        assert_eq!(
            key_of(&MINIMAL.replacen("\"image\"", "\"rng_seed\": -1, \"image\"", 1)),
            "rng_seed"
        );
        let profile = MINIMAL.replacen("\"image\"", "\"arch_profile\": \"x86\", \"image\"", 1);
        match ConfigFile::parse_str(&profile) {
            Err(ConfigError::BadValue { key, msg }) => {
                assert_eq!(key, "arch_profile");
                assert!(
                    msg.contains("fb32-std") && msg.contains("fb32-stack"),
                    "{msg}"
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn post_without_pointer_is_rejected() {
        let text = r#"{"image": "a", "symbols": "b",
            "target": {"symbol": "f", "when": "post", "params": [{"index": 0, "mode": "value"}]}}"#;
        match ConfigFile::parse_str(text) {
            Err(ConfigError::BadValue { key, .. }) => assert_eq!(key, "target"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolves_against_bundled_files() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("targets");
        let text = MINIMAL
            .replace("t.img", "brackets_easy.img")
            .replace("t.sym", "brackets_easy.sym");
        let mut c = ConfigFile::parse_str(&text).unwrap();
        c.crash_symbols = vec!["vb_suspend".into()];
        c.coverage.bounds = vec![(
            AddrRef::Name("parse_msg".into()),
            AddrRef::Name("parse_end".into()),
        )];
        c.timer = Some(TimerSection {
            period: 10_000,
            jitter: false,
            seed: 0,
            isr: default_isr(),
        });
        c.corpus_dir = Some("corpus".into());
        let (cc, g) = c.resolve(&dir).unwrap();
        let t = crate::targets::by_name("brackets_easy").unwrap();
        assert_eq!(g.image, t.image());
        assert_eq!(g.bounds, vec![t.parser_bounds()]);
        assert_eq!(g.machine.isr_addr, t.symbols().resolve(ISR_SYMBOL).ok());
        assert_eq!(g.spec, t.target_spec());
        assert_eq!(cc.corpus_dir, Some(dir.join("corpus")));

        c.target.symbol = "parse_json".into();
        match c.resolve(&dir) {
            Err(ConfigError::SymbolNotFound { key, name }) => assert_eq!(
                (key.as_str(), name.as_str()),
                ("target.symbol", "parse_json")
            ),
            other => panic!("{other:?}"),
        }
        c.target.symbol = "parse_msg".into();
        c.image = "missing.img".into();
        assert!(
            matches!(c.resolve(&dir), Err(ConfigError::BadValue { key, .. }) if key == "image")
        );
    }
}
