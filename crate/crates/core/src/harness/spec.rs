use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum When {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    Value,
    Pointer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeRule {
    Static(u32),
    /// Size read from another positional argument.
    FromParam(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub offset: u32,
    pub len: u32,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    /// 0-based argument position.
    pub index: usize,
    pub mode: ParamMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<SizeRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default = "yes")]
    pub fuzz: bool,
    /// Guest allocation behind a `from_param` buffer. Injected lengths may
    /// grow up to this many bytes; without it they stay within the size seen
    /// at entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
}

impl ParamSpec {
    pub fn value(index: usize) -> ParamSpec {
        ParamSpec {
            index,
            mode: ParamMode::Value,
            size: None,
            window: None,
            fuzz: true,
            capacity: None,
        }
    }

    pub fn pointer(index: usize, size: SizeRule) -> ParamSpec {
        ParamSpec {
            index,
            mode: ParamMode::Pointer,
            size: Some(size),
            window: None,
            fuzz: true,
            capacity: None,
        }
    }

    pub fn with_window(mut self, offset: u32, len: u32) -> ParamSpec {
        self.window = Some(Window { offset, len });
        self
    }

    pub fn with_capacity(mut self, cap: u32) -> ParamSpec {
        self.capacity = Some(cap);
        self
    }

    pub fn fixed(mut self) -> ParamSpec {
        self.fuzz = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub symbol: String,
    pub when: When,
    pub params: Vec<ParamSpec>,
    /// Name of a [`super::ConventionProfile`].
    pub convention: String,
}

impl TargetSpec {
    /// The fuzzed pointer parameter and its position, if any.
    pub fn fuzzed_pointer(&self) -> Option<(usize, &ParamSpec)> {
        self.params
            .iter()
            .enumerate()
            .find(|(_, p)| p.fuzz && p.mode == ParamMode::Pointer)
    }

    /// Number of leading input bytes taken by fuzzed value parameters.
    pub fn value_bytes(&self) -> usize {
        4 * self
            .params
            .iter()
            .filter(|p| p.fuzz && p.mode == ParamMode::Value)
            .count()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::BadSpec(msg));
        if !self.params.iter().any(|p| p.fuzz) {
            return bad("at least one parameter must have fuzz = true".into());
        }
        for (k, p) in self.params.iter().enumerate() {
            if self.params[..k].iter().any(|q| q.index == p.index) {
                return bad(format!("parameter {} declared twice", p.index));
            }
            match p.mode {
                ParamMode::Value => {
                    if p.size.is_some() || p.window.is_some() || p.capacity.is_some() {
                        return bad(format!(
                            "value parameter {} cannot have size, window or capacity",
                            p.index
                        ));
                    }
                }
                ParamMode::Pointer => {
                    let Some(size) = p.size else {
                        return bad(format!("pointer parameter {} needs a size rule", p.index));
                    };
                    match size {
                        SizeRule::FromParam(j) if j == p.index => {
                            return bad(format!(
                                "parameter {} takes its size from itself",
                                p.index
                            ));
                        }
                        SizeRule::Static(n) => {
                            if let Some(w) = p.window {
                                if w.offset as u64 + w.len as u64 > n as u64 {
                                    return bad(format!(
                                        "parameter {}: window exceeds static size {n}",
                                        p.index
                                    ));
                                }
                            }
                            if p.capacity.is_some() {
                                return bad(format!(
                                    "parameter {}: capacity only applies to from_param sizes",
                                    p.index
                                ));
                            }
                        }
                        SizeRule::FromParam(_) => {}
                    }
                    if p.window.is_some_and(|w| w.len == 0) {
                        return bad(format!("parameter {}: empty window", p.index));
                    }
                }
            }
        }
        let fuzzed_ptrs = self
            .params
            .iter()
            .filter(|p| p.fuzz && p.mode == ParamMode::Pointer)
            .count();
        if fuzzed_ptrs > 1 {
            return bad("at most one pointer parameter can be fuzzed".into());
        }
        if self.when == When::Post {
            if !self.params.iter().any(|p| p.mode == ParamMode::Pointer) {
                return bad("when = post requires a pointer parameter".into());
            }
            if self
                .params
                .iter()
                .any(|p| p.fuzz && p.mode == ParamMode::Value)
            {
                return bad("when = post can only fuzz pointer parameters".into());
            }
        }
        Ok(())
    }
}
