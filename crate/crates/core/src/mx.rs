//! MXINT block floating point.
//!
//! A block holds 32 two's-complement integer elements that share one biased
//! 8-bit power-of-two exponent. The decoded value of element `i` is
//! `elements[i] * 2^(shared_exp - 127)`; elements carry no implicit fractional
//! scale of their own.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elements per block.
pub const BLOCK_SIZE: usize = 32;

/// Bias of the shared exponent.
pub const EXP_BIAS: i32 = 127;

/// Element precision of an MX block.
///
/// The derived ordering is by element width, so `max` picks the wider format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "MXINT2")]
    Mxint2,
    #[serde(rename = "MXINT4")]
    Mxint4,
    #[serde(rename = "MXINT8")]
    Mxint8,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Mxint2, Precision::Mxint4, Precision::Mxint8];

    /// Element width in bits.
    pub const fn bits(self) -> u32 {
        match self {
            Precision::Mxint2 => 2,
            Precision::Mxint4 => 4,
            Precision::Mxint8 => 8,
        }
    }

    pub const fn min_element(self) -> i32 {
        -(1 << (self.bits() - 1))
    }

    pub const fn max_element(self) -> i32 {
        (1 << (self.bits() - 1)) - 1
    }

    /// Number of 2-bit activation slices, which is also the bit-serial cycle count.
    pub const fn slices(self) -> u32 {
        self.bits() / 2
    }

    /// 2-bit type signal driven into the processing elements.
    pub const fn type_code(self) -> u8 {
        match self {
            Precision::Mxint2 => 0b00,
            Precision::Mxint4 => 0b01,
            Precision::Mxint8 => 0b10,
        }
    }

    pub fn from_type_code(code: u8) -> Result<Self> {
        match code {
            0b00 => Ok(Precision::Mxint2),
            0b01 => Ok(Precision::Mxint4),
            0b10 => Ok(Precision::Mxint8),
            other => Err(Error::Range {
                what: "precision type code",
                value: other as i64,
                range: "{0b00, 0b01, 0b10}".into(),
            }),
        }
    }

    /// Storage for one block: packed elements plus the shared exponent byte.
    pub const fn block_bytes(self) -> u64 {
        (BLOCK_SIZE as u64 * self.bits() as u64) / 8 + 1
    }

    fn clamp(self, v: f64) -> i8 {
        v.clamp(self.min_element() as f64, self.max_element() as f64) as i8
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MXINT{}", self.bits())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MXINT2" | "2" => Ok(Precision::Mxint2),
            "MXINT4" | "4" => Ok(Precision::Mxint4),
            "MXINT8" | "8" => Ok(Precision::Mxint8),
            _ => Err(Error::Parse(format!("unknown precision `{s}`"))),
        }
    }
}

/// One MX block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MxBlock {
    elements: [i8; BLOCK_SIZE],
    shared_exp: u8,
    precision: Precision,
}

impl MxBlock {
    /// Builds a block from raw parts, checking every element against the
    /// two's-complement range of `precision`.
    pub fn new(elements: [i8; BLOCK_SIZE], shared_exp: u8, precision: Precision) -> Result<Self> {
        if let Some((i, &e)) = elements.iter().enumerate().find(|(_, &e)| {
            (e as i32) < precision.min_element() || (e as i32) > precision.max_element()
        }) {
            return Err(Error::InvalidValue(format!(
                "element {i} = {e} outside {precision} range [{}, {}]",
                precision.min_element(),
                precision.max_element()
            )));
        }
        Ok(MxBlock {
            elements,
            shared_exp,
            precision,
        })
    }

    pub fn zero(precision: Precision) -> Self {
        MxBlock {
            elements: [0; BLOCK_SIZE],
            shared_exp: 0,
            precision,
        }
    }

    pub fn elements(&self) -> &[i8; BLOCK_SIZE] {
        &self.elements
    }

    pub fn shared_exp(&self) -> u8 {
        self.shared_exp
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Power-of-two scale shared by every element.
    pub fn scale(&self) -> f64 {
        exp2i(self.shared_exp as i32 - EXP_BIAS)
    }
}

/// `2^e` for the exponent span reachable from biased 8-bit exponents, exact in f64.
pub(crate) fn exp2i(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// `floor(log2(x))` for finite positive `x`, exact including subnormals.
pub(crate) fn floor_log2(x: f64) -> i32 {
    debug_assert!(x.is_finite() && x > 0.0);
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let mantissa = bits & ((1u64 << 52) - 1);
        63 - mantissa.leading_zeros() as i32 - 1074
    } else {
        biased - 1023
    }
}

/// Quantizes exactly 32 values into one block.
///
/// The shared exponent aligns the largest magnitude to the top of the element
/// range: `clamp(floor(log2(max_abs)) - (bits - 2) + 127, 0, 255)`. Elements
/// round half to even and saturate at the range ends.
pub fn quantize_block(values: &[f64], precision: Precision) -> Result<MxBlock> {
    if values.len() != BLOCK_SIZE {
        return Err(Error::Shape(format!(
            "block needs {BLOCK_SIZE} values, got {}",
            values.len()
        )));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("value {i} is not finite ({v})")));
    }

    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(MxBlock::zero(precision));
    }

    let unclamped = floor_log2(max_abs) - (precision.bits() as i32 - 2) + EXP_BIAS;
    let shared_exp = unclamped.clamp(0, 255) as u8;
    let inv_scale = exp2i(EXP_BIAS - shared_exp as i32);

    let mut elements = [0i8; BLOCK_SIZE];
    for (e, v) in elements.iter_mut().zip(values) {
        *e = precision.clamp((v * inv_scale).round_ties_even());
    }
    Ok(MxBlock {
        elements,
        shared_exp,
        precision,
    })
}

/// Decodes a block. Exact in f64.
pub fn dequantize_block(block: &MxBlock) -> [f64; BLOCK_SIZE] {
    let scale = block.scale();
    block.elements.map(|e| e as f64 * scale)
}

/// Number of blocks needed for `len` values.
pub fn block_count(len: usize) -> usize {
    len.div_ceil(BLOCK_SIZE)
}

/// Quantizes a flat tensor in 32-element blocks, one precision per block.
///
/// A trailing partial block is zero-padded.
pub fn quantize_tensor(values: &[f64], precisions: &[Precision]) -> Result<Vec<MxBlock>> {
    let blocks = block_count(values.len());
    if precisions.len() != blocks {
        return Err(Error::Shape(format!(
            "{} values form {blocks} blocks but {} precisions were given",
            values.len(),
            precisions.len()
        )));
    }
    let mut padded = [0.0f64; BLOCK_SIZE];
    values
        .chunks(BLOCK_SIZE)
        .zip(precisions)
        .map(|(chunk, &p)| {
            if chunk.len() == BLOCK_SIZE {
                quantize_block(chunk, p)
            } else {
                padded.fill(0.0);
                padded[..chunk.len()].copy_from_slice(chunk);
                quantize_block(&padded, p)
            }
        })
        .collect()
}

/// Decodes a block list back to `len` values, dropping padding.
pub fn dequantize_tensor(blocks: &[MxBlock], len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = blocks.iter().flat_map(dequantize_block).collect();
    out.truncate(len);
    out
}
