//! Four-stage precision masks.
//!
//! A user mask marks the tokens to regenerate (Stage 3). Dilating it by the
//! convolution depth of a resolution gives Stage 2, a further dilation by the
//! depth inherited from the next-coarser resolution gives Stage 1, and the
//! rest is Stage 0. Attention-driven refinement can lift Stage 0 tokens to
//! Stage 1. Coarser resolutions get majority-downsampled masks.

mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_mask, parse_json_mask, parse_mask, parse_pbm, StageMapPacked};

/// Tile edge of the dilation engine.
pub const TILE: usize = 64;

/// Row-major grid of mask bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("mask must be non-empty, got {height}x{width}")));
        }
        Ok(BinaryMask {
            height,
            width,
            bits: vec![false; height * width],
        })
    }

    pub fn full(height: usize, width: usize) -> Result<Self> {
        let mut m = Self::new(height, width)?;
        m.bits.fill(true);
        Ok(m)
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(Error::Shape(format!(
                "{} bits do not form a {height}x{width} mask",
                bits.len()
            )));
        }
        Ok(BinaryMask { height, width, bits })
    }

    /// Centered blob of exactly `count` tokens, grown in order of distance from
    /// the grid center. Blobs of increasing `count` are nested.
    pub fn centered_blob(height: usize, width: usize, count: usize) -> Result<Self> {
        let mut m = Self::new(height, width)?;
        let mut order: Vec<(usize, usize)> = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .collect();
        // Doubled coordinates keep the center on the integer lattice.
        let (cy, cx) = (height as i64, width as i64);
        order.sort_by_key(|&(r, c)| {
            let dy = 2 * r as i64 + 1 - cy;
            let dx = 2 * c as i64 + 1 - cx;
            (dy * dy + dx * dx, r, c)
        });
        for &(r, c) in order.iter().take(count.min(height * width)) {
            m.set(r, c, true);
        }
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Row-major bits.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ratio(&self) -> f64 {
        self.count_ones() as f64 / self.len() as f64
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_shape(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Ok(BinaryMask { bits, ..*self })
    }

    fn same_shape(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn check_shape(&self, other: &BinaryMask) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    fn dilate_horizontal(&self) -> BinaryMask {
        let mut out = self.clone();
        for r in 0..self.height {
            let row = &self.bits[r * self.width..(r + 1) * self.width];
            for c in 0..self.width {
                out.bits[r * self.width + c] = row[c.saturating_sub(1)..=(c + 1).min(self.width - 1)]
                    .iter()
                    .any(|&b| b);
            }
        }
        out
    }

    fn dilate_vertical(&self) -> BinaryMask {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.bits[r * self.width + c] = (r.saturating_sub(1)..=(r + 1).min(self.height - 1))
                    .any(|rr| self.bits[rr * self.width + c]);
            }
        }
        out
    }

    fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> BinaryMask {
        let mut bits = Vec::with_capacity(height * width);
        for r in row..row + height {
            bits.extend_from_slice(&self.bits[r * self.width + col..r * self.width + col + width]);
        }
        BinaryMask { height, width, bits }
    }
}

/// Expands a mask by `distance` tokens in every direction including diagonals.
///
/// Runs `distance` rounds of a horizontal then a vertical 1-token dilation,
/// which equals dilation by a `(2d+1)x(2d+1)` square.
pub fn dilate(mask: &BinaryMask, distance: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..distance {
        if m.bits.iter().all(|&b| b) {
            break;
        }
        m = m.dilate_horizontal().dilate_vertical();
    }
    m
}

/// Dilation on 64x64 tiles. Each tile reads a halo of `distance` tokens from
/// its neighbours so the result matches [`dilate`] on the whole grid.
pub fn tile_dilate(mask: &BinaryMask, distance: usize) -> BinaryMask {
    let mut out = mask.clone();
    for tr in (0..mask.height).step_by(TILE) {
        for tc in (0..mask.width).step_by(TILE) {
            let th = TILE.min(mask.height - tr);
            let tw = TILE.min(mask.width - tc);
            let r0 = tr.saturating_sub(distance);
            let c0 = tc.saturating_sub(distance);
            let r1 = (tr + th + distance).min(mask.height);
            let c1 = (tc + tw + distance).min(mask.width);
            let window = dilate(&mask.crop(r0, c0, r1 - r0, c1 - c0), distance);
            for r in 0..th {
                for c in 0..tw {
                    out.set(tr + r, tc + c, window.get(tr - r0 + r, tc - c0 + c));
                }
            }
        }
    }
    out
}

/// Halves each dimension with 2x2 stride-2 windows; an output bit is set when
/// at least two of its four inputs are. Odd dimensions replicate the last
/// row or column.
pub fn downsample(mask: &BinaryMask) -> BinaryMask {
    let h = mask.height.div_ceil(2);
    let w = mask.width.div_ceil(2);
    let at = |r: usize, c: usize| mask.get(r.min(mask.height - 1), c.min(mask.width - 1)) as u8;
    let bits = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (r, c) = (2 * r, 2 * c);
            at(r, c) + at(r, c + 1) + at(r + 1, c) + at(r + 1, c + 1) >= 2
        })
        .collect();
    BinaryMask {
        height: h,
        width: w,
        bits,
    }
}

/// Nearest-neighbour upsampling to `height`x`width` (each token covers a 2x2
/// patch of the finer grid).
pub fn upsample(mask: &BinaryMask, height: usize, width: usize) -> Result<BinaryMask> {
    if mask.height != height.div_ceil(2) || mask.width != width.div_ceil(2) {
        return Err(Error::Shape(format!(
            "{}x{} is not the half resolution of {height}x{width}",
            mask.height, mask.width
        )));
    }
    let bits = (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .map(|(r, c)| mask.get(r / 2, c / 2))
        .collect();
    BinaryMask::from_bits(height, width, bits)
}

/// Precision stage of a token; the discriminant is its 2-bit hardware code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Stage {
    S0 = 0b00,
    S1 = 0b01,
    S2 = 0b10,
    S3 = 0b11,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::S0, Stage::S1, Stage::S2, Stage::S3];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Stage> {
        match code {
            0 => Ok(Stage::S0),
            1 => Ok(Stage::S1),
            2 => Ok(Stage::S2),
            3 => Ok(Stage::S3),
            _ => Err(Error::Range {
                what: "stage code",
                value: code as i64,
                range: "0..=3".into(),
            }),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Row-major grid of stage codes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StageMap {
    height: usize,
    width: usize,
    stages: Vec<Stage>,
}

impl StageMap {
    pub fn uniform(height: usize, width: usize, stage: Stage) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("stage map must be non-empty, got {height}x{width}")));
        }
        Ok(StageMap {
            height,
            width,
            stages: vec![stage; height * width],
        })
    }

    pub fn from_stages(height: usize, width: usize, stages: Vec<Stage>) -> Result<Self> {
        if height == 0 || width == 0 || stages.len() != height * width {
            return Err(Error::Shape(format!(
                "{} stages do not form a {height}x{width} map",
                stages.len()
            )));
        }
        Ok(StageMap {
            height,
            width,
            stages,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Stage {
        self.stages[row * self.width + col]
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Tokens per stage, indexed by stage number.
    pub fn histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for s in &self.stages {
            h[s.index()] += 1;
        }
        h
    }

    /// Tokens at `stage` or above.
    pub fn at_least(&self, stage: Stage) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.stages.iter().map(|&s| s >= stage).collect(),
        }
    }

    /// Tokens at exactly `stage`.
    pub fn region(&self, stage: Stage) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.stages.iter().map(|&s| s == stage).collect(),
        }
    }
}

/// Dilation distances for one resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilationEntry {
    /// 3x3 convolutions at this resolution; the Stage 2 dilation distance.
    pub conv_count: usize,
    /// Extra Stage 1 distance inherited from the next-coarser resolution.
    pub stage1_extra: usize,
}

/// One entry per resolution, finest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilationPlan {
    pub levels: Vec<DilationEntry>,
}

/// Builds the four-stage map of one resolution. Higher stages win where the
/// dilated regions overlap.
pub fn build_stage_map(main: &BinaryMask, entry: DilationEntry) -> StageMap {
    let stage2 = dilate(main, entry.conv_count);
    let stage1 = dilate(&stage2, entry.stage1_extra);
    let stages = main
        .bits
        .iter()
        .zip(&stage2.bits)
        .zip(&stage1.bits)
        .map(|((&s3, &s2), &s1)| match (s3, s2, s1) {
            (true, _, _) => Stage::S3,
            (_, true, _) => Stage::S2,
            (_, _, true) => Stage::S1,
            _ => Stage::S0,
        })
        .collect();
    StageMap {
        height: main.height,
        width: main.width,
        stages,
    }
}

/// Promotes Stage 0 tokens flagged in `promote` to Stage 1 by OR-ing the flag
/// into the low code bit. Stages 1 to 3 are untouched.
pub fn update_semantic(map: &StageMap, promote: &BinaryMask) -> Result<StageMap> {
    if map.height != promote.height || map.width != promote.width {
        return Err(Error::Shape(format!(
            "stage map {}x{} vs promote mask {}x{}",
            map.height, map.width, promote.height, promote.width
        )));
    }
    let stages = map
        .stages
        .iter()
        .zip(&promote.bits)
        .map(|(&s, &p)| {
            if s == Stage::S0 {
                Stage::from_code(s.code() | p as u8).expect("code stays in range")
            } else {
                s
            }
        })
        .collect();
    Ok(StageMap { stages, ..*map })
}
