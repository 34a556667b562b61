use super::{syntax, AsmError};
use crate::isa::Reg;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Operand<'a> {
    Reg(Reg),
    Num(i64),
    Ident(&'a str),
    /// `[base+offset]`
    Mem(Reg, i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Stmt<'a> {
    Insn {
        mnemonic: &'a str,
        operands: Vec<Operand<'a>>,
    },
    Org(u32),
    Word(Vec<Operand<'a>>),
    Bytes(Vec<u8>),
    Space(u32),
    Align(u32),
    Global(&'a str),
}

pub(super) struct Item<'a> {
    pub labels: Vec<&'a str>,
    pub stmt: Option<Stmt<'a>>,
}

/// Cuts a trailing `; comment`, ignoring semicolons inside quotes.
fn strip_comment(text: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (None, '"') | (None, '\'') => quote = Some(c),
            (None, ';') => return &text[..i],
            _ => {}
        }
    }
    text
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn ident_len(s: &str) -> usize {
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, c)) if is_ident_start(c) => {}
        _ => return 0,
    }
    chars
        .find(|&(_, c)| !is_ident_char(c))
        .map_or(s.len(), |(i, _)| i)
}

pub(super) fn parse_line(text: &str, line: usize) -> Result<Item<'_>, AsmError> {
    let mut rest = strip_comment(text).trim();
    let mut labels = Vec::new();
    loop {
        let n = ident_len(rest);
        if n > 0 && rest[n..].starts_with(':') {
            labels.push(&rest[..n]);
            rest = rest[n + 1..].trim_start();
        } else {
            break;
        }
    }
    if rest.is_empty() {
        return Ok(Item { labels, stmt: None });
    }
    let (head, args) = match rest.find(char::is_whitespace) {
        Some(i) => (&rest[..i], rest[i..].trim()),
        None => (rest, ""),
    };
    let stmt = if let Some(dir) = head.strip_prefix('.') {
        parse_directive(dir, args, line)?
    } else {
        if ident_len(head) != head.len() {
            return Err(syntax(line, format!("bad mnemonic `{head}`")));
        }
        let operands = split_operands(args, line)?
            .into_iter()
            .map(|s| parse_operand(s, line))
            .collect::<Result<Vec<_>, _>>()?;
        Stmt::Insn {
            mnemonic: head,
            operands,
        }
    };
    Ok(Item {
        labels,
        stmt: Some(stmt),
    })
}

fn parse_directive<'a>(dir: &str, args: &'a str, line: usize) -> Result<Stmt<'a>, AsmError> {
    let parts = split_operands(args, line)?;
    let single_num = |what: &str| -> Result<u32, AsmError> {
        if parts.len() != 1 {
            return Err(syntax(line, format!(".{what} takes one operand")));
        }
        match parse_number(parts[0]) {
            Some(v) if (0..=u32::MAX as i64).contains(&v) => Ok(v as u32),
            _ => Err(syntax(line, format!(".{what}: bad number `{}`", parts[0]))),
        }
    };
    match dir.to_ascii_lowercase().as_str() {
        "org" => Ok(Stmt::Org(single_num("org")?)),
        "space" => Ok(Stmt::Space(single_num("space")?)),
        "align" => Ok(Stmt::Align(single_num("align")?)),
        "global" | "globl" => {
            if parts.len() != 1 || ident_len(parts[0]) != parts[0].len() {
                return Err(syntax(line, ".global takes one symbol name"));
            }
            Ok(Stmt::Global(parts[0]))
        }
        "word" => {
            if parts.is_empty() {
                return Err(syntax(line, ".word needs a value"));
            }
            let ops = parts
                .into_iter()
                .map(|p| parse_operand(p, line))
                .collect::<Result<Vec<_>, _>>()?;
            if ops
                .iter()
                .any(|o| matches!(o, Operand::Reg(_) | Operand::Mem(..)))
            {
                return Err(syntax(line, ".word takes numbers or labels"));
            }
            Ok(Stmt::Word(ops))
        }
        "byte" => {
            if parts.is_empty() {
                return Err(syntax(line, ".byte needs a value"));
            }
            let mut out = Vec::with_capacity(parts.len());
            for p in parts {
                match parse_number(p) {
                    Some(v) if (-128..=255).contains(&v) => out.push(v as u8),
                    _ => return Err(syntax(line, format!(".byte: bad value `{p}`"))),
                }
            }
            Ok(Stmt::Bytes(out))
        }
        "ascii" => {
            let s = args.trim();
            let body = s
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .ok_or_else(|| syntax(line, ".ascii needs a quoted string"))?;
            Ok(Stmt::Bytes(
                unescape(body).ok_or_else(|| syntax(line, "bad escape in string"))?,
            ))
        }
        other => Err(syntax(line, format!("unknown directive `.{other}`"))),
    }
}

fn split_operands(args: &str, line: usize) -> Result<Vec<&str>, AsmError> {
    let mut out = Vec::new();
    if args.trim().is_empty() {
        return Ok(out);
    }
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in args.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"') | (None, '\'') => quote = Some(c),
            (None, '[') => depth += 1,
            (None, ']') => depth -= 1,
            (None, ',') if depth == 0 => {
                out.push(args[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if quote.is_some() || depth != 0 {
        return Err(syntax(line, "unbalanced quote or bracket"));
    }
    out.push(args[start..].trim());
    if out.iter().any(|s| s.is_empty()) {
        return Err(syntax(line, "empty operand"));
    }
    Ok(out)
}

pub(super) fn parse_reg(s: &str) -> Option<Reg> {
    let l = s.to_ascii_lowercase();
    match l.as_str() {
        "sp" => return Some(Reg::SP),
        "lr" => return Some(Reg::LR),
        "zero" => return Some(Reg::ZERO),
        _ => {}
    }
    let digits = l.strip_prefix('r')?;
    if digits.is_empty() || digits.len() > 2 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() == 2 && digits.starts_with('0') {
        return None;
    }
    Reg::new(digits.parse().ok()?)
}

fn unescape(body: &str) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            if !c.is_ascii() {
                return None;
            }
            out.push(c as u8);
            continue;
        }
        out.push(match chars.next()? {
            'n' => b'\n',
            't' => b'\t',
            'r' => b'\r',
            'b' => 0x08,
            '0' => 0,
            '\\' => b'\\',
            '\'' => b'\'',
            '"' => b'"',
            'x' => {
                let hi = chars.next()?.to_digit(16)?;
                let lo = chars.next()?.to_digit(16)?;
                (hi * 16 + lo) as u8
            }
            _ => return None,
        });
    }
    Some(out)
}

/// Decimal, `0x` hex, optionally signed, or a `'c'` character literal.
pub(super) fn parse_number(s: &str) -> Option<i64> {
    if let Some(body) = s.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')) {
        let bytes = unescape(body)?;
        return (bytes.len() == 1).then(|| bytes[0] as i64);
    }
    let (neg, digits) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let v = if let Some(hex) = digits
        .strip_prefix("0x")
        .or_else(|| digits.strip_prefix("0X"))
    {
        if hex.is_empty() || hex.len() > 8 {
            return None;
        }
        i64::from_str_radix(hex, 16).ok()?
    } else {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.len() > 10 {
            return None;
        }
        digits.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_operand(s: &str, line: usize) -> Result<Operand<'_>, AsmError> {
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| syntax(line, format!("bad memory operand `{s}`")))?;
        let split = inner.find(['+', '-']);
        let (reg_s, off) = match split {
            Some(i) => {
                let sign = if &inner[i..i + 1] == "-" { -1 } else { 1 };
                let n = parse_number(inner[i + 1..].trim())
                    .filter(|n| *n >= 0)
                    .ok_or_else(|| syntax(line, format!("bad offset in `{s}`")))?;
                (&inner[..i], sign * n)
            }
            None => (inner, 0),
        };
        let base = parse_reg(reg_s.trim())
            .ok_or_else(|| syntax(line, format!("bad base register in `{s}`")))?;
        return Ok(Operand::Mem(base, off));
    }
    if let Some(r) = parse_reg(s) {
        return Ok(Operand::Reg(r));
    }
    if let Some(n) = parse_number(s) {
        return Ok(Operand::Num(n));
    }
    if ident_len(s) == s.len() {
        return Ok(Operand::Ident(s));
    }
    Err(syntax(line, format!("cannot parse operand `{s}`")))
}
