//! Byte-level models of the bundled parsers, written from their documented
//! behaviour, and a driver that runs the real guests on the same inputs.

use fbx::machine::FaultKind;
use fbx::orchestrator::{
    Campaign, CampaignConfig, Detector, Execution, Executor, Guest, Mode, Outcome, Seed, WindowEnd,
};
use fbx::prng::Prng;
use fbx::targets::{self, GuestTarget, MSG_BUF_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
    /// Privileged access from inside the parser.
    Bug,
}

use Verdict::*;

pub fn brackets(b: &[u8], hard: bool) -> Verdict {
    if !hard && b.starts_with(b"{}") {
        return Bug;
    }
    let mut stack: Vec<u8> = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        i += 1;
        match c {
            b'{' | b'[' => {
                if stack.len() == 16 {
                    return Reject;
                }
                stack.push(c);
            }
            b'}' | b']' => {
                let want = if c == b'}' { b'{' } else { b'[' };
                if stack.pop() != Some(want) {
                    return Reject;
                }
            }
            b'"' => loop {
                let Some(&s) = b.get(i) else { return Reject };
                i += 1;
                match s {
                    b'"' => break,
                    b'\\' => {
                        if i == b.len() {
                            return Reject;
                        }
                        i += 1;
                    }
                    _ => {
                        if hard && s == 0x08 && stack.last() == Some(&b'{') {
                            return Bug;
                        }
                        if s < 0x20 {
                            return Reject;
                        }
                    }
                }
            },
            _ => {}
        }
    }
    if stack.is_empty() {
        Accept
    } else {
        Reject
    }
}

pub fn addr(b: &[u8], hard: bool) -> Verdict {
    let at = b.iter().position(|&c| c == b'@');
    let local = &b[..at.unwrap_or(b.len())];
    if !hard {
        if let Some(k) = local.iter().position(|&c| c >= 0x80) {
            if k <= 32 {
                return Bug;
            }
        }
    }
    let Some(at) = at else { return Reject };
    if local.len() > 32 {
        return Reject;
    }
    if hard && local.first() == Some(&b'X') {
        let dom = &b[at + 1..];
        if let Some(gt) = dom.iter().position(|&c| c == b'>') {
            if dom[gt + 1..].contains(&b'A') {
                return Bug;
            }
        }
    }
    if local.is_empty() {
        Reject
    } else {
        Accept
    }
}

pub fn expr(b: &[u8], hard: bool) -> Verdict {
    if !hard && b.starts_with(b"help") && (b.len() == 4 || b[4] != b'(') {
        return Bug;
    }
    let mut i = 0;
    let mut run = 0;
    loop {
        let Some(&c) = b.get(i) else { return Reject };
        i += 1;
        if c == b'e' || c == b'E' {
            run += 1;
            if run == 16 {
                return if hard { Bug } else { Reject };
            }
        } else if c.is_ascii_digit() {
            run = 0;
            let digits = 1 + b[i..].iter().take_while(|c| c.is_ascii_digit()).count();
            if digits > 8 {
                return Reject;
            }
            i += digits - 1;
        } else {
            return Reject;
        }
        match b.get(i) {
            None => return Accept,
            Some(b'+') => i += 1,
            Some(_) => return Reject,
        }
    }
}

pub fn model(t: &GuestTarget) -> fn(&[u8], bool) -> Verdict {
    match t.family {
        "brackets" => brackets,
        "addr" => addr,
        "expr" => expr,
        f => panic!("no model for {f}"),
    }
}

/// Runs parse_msg on inputs from a snapshot of its first interception.
pub struct GuestRunner {
    ex: Executor,
    seed: Seed,
}

impl GuestRunner {
    pub fn new(t: &GuestTarget) -> GuestRunner {
        let g = Guest::bundled(t);
        let mut cfg = CampaignConfig::new(Mode::Record, Execution::Snapshot);
        cfg.record_count = 1;
        let seed = Campaign::record(&cfg, &g).unwrap().seeds.remove(0);
        let ex = Executor::new(&g, 100_000, 4096).unwrap();
        GuestRunner { ex, seed }
    }

    pub fn verdict(&mut self, input: &[u8]) -> Result<Verdict, String> {
        self.ex
            .resume_from(
                self.seed.snapshot.as_ref().unwrap(),
                self.seed.frame.as_ref().unwrap(),
            )
            .unwrap();
        let r = self.ex.run_window(input, WindowEnd::TargetDone).unwrap();
        match r.outcome(Detector::Emulation) {
            Outcome::Ok => match r.regs[3] {
                0 => Ok(Accept),
                1 => Ok(Reject),
                v => Err(format!("parse_msg returned {v}")),
            },
            Outcome::HwFault(f)
                if matches!(
                    f.kind,
                    FaultKind::MemoryFault {
                        privileged: true,
                        ..
                    }
                ) =>
            {
                Ok(Bug)
            }
            other => Err(format!("unexpected outcome {other}")),
        }
    }
}

fn alphabet(t: &GuestTarget) -> &'static [u8] {
    match t.family {
        "brackets" => b"{}[]\"\\\x08\x1f b",
        "addr" => b"@>AXa\x80\xff",
        _ => b"eE+019hlp(x",
    }
}

/// Every input over the family alphabet up to `exhaustive_len` bytes, then
/// `random` inputs up to the buffer capacity: alphabet-heavy, a few raw bytes.
pub fn inputs(t: &GuestTarget, exhaustive_len: usize, random: usize, seed: u64) -> Vec<Vec<u8>> {
    let a = alphabet(t);
    let mut out: Vec<Vec<u8>> = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..exhaustive_len {
        layer = layer
            .iter()
            .flat_map(|p: &Vec<u8>| a.iter().map(move |&c| [p.as_slice(), &[c]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    let mut p = Prng::new(seed);
    for _ in 0..random {
        let len = 1 + p.below_usize(MSG_BUF_CAP as usize);
        out.push(
            (0..len)
                .map(|_| {
                    if p.below(8) == 0 {
                        p.next_u64() as u8
                    } else {
                        a[p.below_usize(a.len())]
                    }
                })
                .collect(),
        );
    }
    out.extend(hand_picked(t));
    out
}

/// Inputs near each bug's boundary.
pub fn hand_picked(t: &GuestTarget) -> Vec<Vec<u8>> {
    let e_run = |n: usize, sep: &str| vec!["e"; n].join(sep).into_bytes();
    let v: Vec<Vec<u8>> = match t.family {
        "brackets" => vec![
            b"{}".to_vec(),
            b"{}}".to_vec(),
            b"x{}".to_vec(),
            b"{\"\x08\"}".to_vec(),
            b"{\"\\\x08\"}".to_vec(),
            b"[\"\x08\"]".to_vec(),
            b"{[\"\x08\"]}".to_vec(),
            b"[{\"\x08".to_vec(),
            b"\"\x08\"".to_vec(),
            b"{\"\x07\x08\"}".to_vec(),
            b"{bbbbbbb}".to_vec(),
            [vec![b'{'; 16], b"\"\x08".to_vec()].concat(),
            vec![b'{'; 17],
        ],
        "addr" => vec![
            b"X@>A".to_vec(),
            b"X@A>".to_vec(),
            b"X@>>zA".to_vec(),
            b"@X>A".to_vec(),
            b"xX@>A".to_vec(),
            [b"X".to_vec(), vec![b'a'; 31], b"@>A".to_vec()].concat(),
            [vec![b'a'; 32], vec![0x80]].concat(),
            [vec![b'a'; 31], vec![0x80]].concat(),
            b"\x80@".to_vec(),
            b"a@\x80".to_vec(),
            b"ABCDEFG".to_vec(),
        ],
        _ => vec![
            e_run(15, "+"),
            e_run(16, "+"),
            [b"1+".to_vec(), e_run(15, "+")].concat(),
            [e_run(8, "+"), b"+1+".to_vec(), e_run(8, "+")].concat(),
            [e_run(15, "+"), b"+E".to_vec()].concat(),
            e_run(16, "++"),
            b"help".to_vec(),
            b"help(".to_vec(),
            b"helpx".to_vec(),
            b"hel".to_vec(),
            b"12345678+1".to_vec(),
            b"123456789".to_vec(),
        ],
    };
    v.into_iter()
        .map(|mut b| {
            b.truncate(MSG_BUF_CAP as usize);
            b
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct Tally {
    pub accept: usize,
    pub reject: usize,
    pub bug: usize,
}

/// Every input gets the same verdict from the model and the guest.
pub fn agree(t: &GuestTarget, inputs: &[Vec<u8>]) -> Result<Tally, String> {
    let model = model(t);
    let mut g = GuestRunner::new(t);
    let mut tally = Tally::default();
    for input in inputs {
        let want = model(input, t.hard);
        let got = g
            .verdict(input)
            .map_err(|e| format!("{}: {input:?}: {e}", t.name))?;
        if got != want {
            return Err(format!(
                "{}: {:?} -> guest {got:?}, model {want:?}",
                t.name,
                String::from_utf8_lossy(input)
            ));
        }
        match got {
            Accept => tally.accept += 1,
            Reject => tally.reject += 1,
            Bug => tally.bug += 1,
        }
    }
    Ok(tally)
}

pub fn all() -> impl Iterator<Item = &'static GuestTarget> {
    targets::ALL.iter()
}
