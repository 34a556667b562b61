//! Guest image (`FBIM` v1) and nm-style symbol files.
//!
//! Image layout, all words little-endian:
//!
//! ```text
//! 0  "FBIM"
//! 4  version   (1)
//! 8  load_addr
//! 12 entry
//! 16 code_len
//! 20 code[code_len]
//! ```
//!
//! Symbol lines are `%08X %c %s`: address, kind (`T` code, `D` data), name.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::machine::{Machine, MachineError};

pub const IMAGE_MAGIC: [u8; 4] = *b"FBIM";
pub const IMAGE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("bad magic {0:02X?}, expected \"FBIM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported image version {0}")]
    BadVersion(u32),
    #[error("image truncated: header declares {declared} code bytes, {actual} present")]
    TruncatedImage { declared: usize, actual: usize },
    #[error("image [0x{load_addr:08X}, +{len}) does not fit in {ram_len} bytes of RAM")]
    ImageTooLarge {
        load_addr: u32,
        len: usize,
        ram_len: usize,
    },
    #[error("entry 0x{entry:08X} lies outside the loaded code")]
    BadEntry { entry: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuestImage {
    pub load_addr: u32,
    pub entry: u32,
    pub code: Vec<u8>,
}

impl GuestImage {
    /// Parses and validates an image against the default RAM size.
    pub fn parse(bytes: &[u8]) -> Result<GuestImage, ImageError> {
        parse_image(bytes, crate::machine::DEFAULT_RAM_LEN)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.code.len());
        out.extend_from_slice(&IMAGE_MAGIC);
        for w in [
            IMAGE_VERSION,
            self.load_addr,
            self.entry,
            self.code.len() as u32,
        ] {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.code);
        out
    }

    pub fn end(&self) -> u32 {
        self.load_addr + self.code.len() as u32
    }
}

/// Parses an image, checking that it fits a machine with `ram_len` bytes.
pub fn parse_image(bytes: &[u8], ram_len: usize) -> Result<GuestImage, ImageError> {
    if bytes.len() < 4 {
        return Err(ImageError::TruncatedImage {
            declared: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != IMAGE_MAGIC {
        return Err(ImageError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ImageError::TruncatedImage {
            declared: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != IMAGE_VERSION {
        return Err(ImageError::BadVersion(version));
    }
    let (load_addr, entry, code_len) = (word(2), word(3), word(4) as usize);
    let code = &bytes[HEADER_LEN..];
    if code.len() < code_len {
        return Err(ImageError::TruncatedImage {
            declared: code_len,
            actual: code.len(),
        });
    }
    if load_addr as usize + code_len > ram_len {
        return Err(ImageError::ImageTooLarge {
            load_addr,
            len: code_len,
            ram_len,
        });
    }
    if entry < load_addr || entry as usize >= load_addr as usize + code_len {
        return Err(ImageError::BadEntry { entry });
    }
    Ok(GuestImage {
        load_addr,
        entry,
        code: code[..code_len].to_vec(),
    })
}

/// Copies the image into RAM and points pc at its entry.
pub fn load_image(m: &mut Machine, image: &GuestImage) -> Result<(), MachineError> {
    m.write_memory(image.load_addr, &image.code)?;
    m.set_pc(image.entry);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolKind(pub char);

impl SymbolKind {
    pub const TEXT: SymbolKind = SymbolKind('T');
    pub const DATA: SymbolKind = SymbolKind('D');

    pub fn is_code(self) -> bool {
        self == SymbolKind::TEXT
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub addr: u32,
    pub kind: SymbolKind,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolError {
    #[error("symbol file line {0}: expected `%08X <kind> <name>`")]
    MalformedLine(usize),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("code symbol `{name}` at 0x{addr:08X} is not word-aligned")]
    MisalignedCode { name: String, addr: u32 },
    #[error(
        "symbol `{0}` not found; if the binary is stripped, recover the address with a \
         reverse-engineering tool and add it to the symbol file by hand"
    )]
    SymbolNotFound(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    by_name: HashMap<String, (u32, SymbolKind)>,
    by_addr: BTreeMap<u32, Vec<String>>,
}

impl SymbolTable {
    pub fn from_symbols(
        symbols: impl IntoIterator<Item = Symbol>,
    ) -> Result<SymbolTable, SymbolError> {
        let mut t = SymbolTable::default();
        for s in symbols {
            t.insert(s)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, sym: Symbol) -> Result<(), SymbolError> {
        if sym.kind.is_code() && !sym.addr.is_multiple_of(4) {
            return Err(SymbolError::MisalignedCode {
                name: sym.name,
                addr: sym.addr,
            });
        }
        if self.by_name.contains_key(&sym.name) {
            return Err(SymbolError::DuplicateSymbol(sym.name));
        }
        self.by_addr
            .entry(sym.addr)
            .or_default()
            .push(sym.name.clone());
        self.by_name.insert(sym.name, (sym.addr, sym.kind));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<(u32, SymbolKind)> {
        self.by_name.get(name).copied()
    }

    pub fn resolve(&self, name: &str) -> Result<u32, SymbolError> {
        self.get(name)
            .map(|(a, _)| a)
            .ok_or_else(|| SymbolError::SymbolNotFound(name.to_string()))
    }

    /// Names defined at `addr`, in insertion order.
    pub fn names_at(&self, addr: u32) -> &[String] {
        self.by_addr.get(&addr).map_or(&[], |v| v.as_slice())
    }

    /// The symbol covering `addr`: the closest one at or below it.
    pub fn symbolize(&self, addr: u32) -> Option<(&str, u32)> {
        let (&base, names) = self.by_addr.range(..=addr).next_back()?;
        Some((names[0].as_str(), addr - base))
    }

    /// Symbols ordered by (address, name).
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = self
            .by_name
            .iter()
            .map(|(name, &(addr, kind))| Symbol {
                addr,
                kind,
                name: name.clone(),
            })
            .collect();
        out.sort_by(|a, b| (a.addr, &a.name).cmp(&(b.addr, &b.name)));
        out
    }

    pub fn render(&self) -> String {
        self.symbols()
            .iter()
            .map(|s| format!("{:08X} {} {}\n", s.addr, s.kind, s.name))
            .collect()
    }
}

pub fn parse_symbols(text: &str) -> Result<SymbolTable, SymbolError> {
    let mut t = SymbolTable::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sym = parse_symbol_line(line).ok_or(SymbolError::MalformedLine(i + 1))?;
        t.insert(sym)?;
    }
    Ok(t)
}

fn parse_symbol_line(line: &str) -> Option<Symbol> {
    let mut parts = line.split_whitespace();
    let (addr, kind, name) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || addr.len() != 8 || !addr.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let mut kc = kind.chars();
    let k = kc.next()?;
    if kc.next().is_some() || !k.is_ascii_alphabetic() {
        return None;
    }
    Some(Symbol {
        addr: u32::from_str_radix(addr, 16).ok()?,
        kind: SymbolKind(k),
        name: name.to_string(),
    })
}
