//! Mask and stage-map file formats.
//!
//! Masks are read from plain PBM (`P1`) or from a JSON array of rows of 0/1.
//! Stage maps are written as a JSON array of rows of stage numbers, or as a
//! packed binary dump:
//!
//! ```text
//! bytes 0..4   magic "STG2"
//! bytes 4..8   height, u32 little endian
//! bytes 8..12  width, u32 little endian
//! bytes 12..   ceil(h*w/4) bytes; token i (row-major) occupies bits
//!              2*(i%4)..2*(i%4)+2 of byte i/4, unused high bits zero
//! ```

use std::path::Path;

use super::{BinaryMask, Stage, StageMap};
use crate::error::{Error, Result};

const PACKED_MAGIC: &[u8; 4] = b"STG2";

/// Parses a plain PBM (`P1`) bitmap; `1` marks a masked token.
pub fn parse_pbm(text: &str) -> Result<BinaryMask> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace());
    if tokens.next() != Some("P1") {
        return Err(Error::Parse("PBM must start with magic `P1`".into()));
    }
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("PBM missing {name}")))?
            .parse()
            .map_err(|e| Error::Parse(format!("PBM {name}: {e}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;

    // Plain PBM allows pixel digits without separating whitespace.
    let mut bits = Vec::with_capacity(width * height);
    for tok in tokens {
        for ch in tok.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => return Err(Error::Parse(format!("PBM pixel `{other}` is not 0 or 1"))),
            }
        }
    }
    if bits.len() != width * height {
        return Err(Error::Parse(format!(
            "PBM declares {width}x{height} but holds {} pixels",
            bits.len()
        )));
    }
    BinaryMask::from_bits(height, width, bits)
}

/// Parses a JSON array of equal-length rows of 0/1.
pub fn parse_json_mask(text: &str) -> Result<BinaryMask> {
    let rows: Vec<Vec<u8>> =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("mask JSON: {e}")))?;
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let mut bits = Vec::with_capacity(height * width);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse(format!(
                "mask JSON row {r} has {} entries, expected {width}",
                row.len()
            )));
        }
        for (c, &v) in row.iter().enumerate() {
            match v {
                0 => bits.push(false),
                1 => bits.push(true),
                _ => return Err(Error::Parse(format!("mask JSON [{r}][{c}] = {v} is not 0 or 1"))),
            }
        }
    }
    BinaryMask::from_bits(height, width, bits)
}

/// Picks the parser from the content: `P1` header means PBM, otherwise JSON.
pub fn parse_mask(text: &str) -> Result<BinaryMask> {
    if text.trim_start().starts_with("P1") {
        parse_pbm(text)
    } else {
        parse_json_mask(text)
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text)
}

impl BinaryMask {
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.width, self.height);
        for row in self.bits.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl StageMap {
    /// Rows of stage numbers.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.stages
            .chunks(self.width)
            .map(|row| row.iter().map(|s| s.code()).collect())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_rows()).expect("rows of integers serialize")
    }

    pub fn from_json(text: &str) -> Result<StageMap> {
        let rows: Vec<Vec<u8>> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("stage map JSON: {e}")))?;
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let mut stages = Vec::with_capacity(height * width);
        for row in &rows {
            if row.len() != width {
                return Err(Error::Parse("stage map JSON rows differ in length".into()));
            }
            for &c in row {
                stages.push(Stage::from_code(c)?);
            }
        }
        StageMap::from_stages(height, width, stages)
    }
}

/// Packed 2-bit stage map encoding.
pub trait StageMapPacked: Sized {
    fn to_packed(&self) -> Vec<u8>;
    fn from_packed(bytes: &[u8]) -> Result<Self>;
}

impl StageMapPacked for StageMap {
    fn to_packed(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.len().div_ceil(4));
        out.extend_from_slice(PACKED_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for quad in self.stages.chunks(4) {
            let byte = quad
                .iter()
                .enumerate()
                .fold(0u8, |b, (i, s)| b | (s.code() << (2 * i)));
            out.push(byte);
        }
        out
    }

    fn from_packed(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != PACKED_MAGIC {
            return Err(Error::Parse("packed stage map lacks the STG2 header".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let (height, width) = (word(4), word(8));
        let n = height * width;
        let body = &bytes[12..];
        if body.len() != n.div_ceil(4) {
            return Err(Error::Parse(format!(
                "packed stage map {height}x{width} needs {} payload bytes, got {}",
                n.div_ceil(4),
                body.len()
            )));
        }
        let stages = (0..n)
            .map(|i| Stage::from_code((body[i / 4] >> (2 * (i % 4))) & 0b11))
            .collect::<Result<Vec<_>>>()?;
        StageMap::from_stages(height, width, stages)
    }
}
