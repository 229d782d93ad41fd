//! Bit-serial block multiply-accumulate.
//!
//! Each processing element (BMPE) multiplies 32 activation lanes against 32
//! MXINT8 weights. Activations enter two bits at a time, most significant
//! slice first; each lane's sign-aware multiplier (SAM) treats the top slice
//! as signed and the others as unsigned. Slice partial sums are shifted into a
//! fixed-point register, scaled by both block exponents into bfloat16, and
//! blocks are accumulated across in f32.

use half::bf16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mx::{exp2i, MxBlock, Precision, BLOCK_SIZE, EXP_BIAS};

/// Control word for one bit-serial cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceConfig {
    /// Precision type signal (`0b00` MXINT2, `0b01` MXINT4, `0b10` MXINT8).
    pub type_code: u8,
    /// Slice index counted from the least significant slice.
    pub cfg: u8,
}

impl SliceConfig {
    pub fn precision(self) -> Precision {
        // type_code is only ever built from a Precision.
        Precision::from_type_code(self.type_code).expect("valid type code")
    }

    /// True when this slice holds the element's sign bit.
    pub fn is_sign_slice(self) -> bool {
        self.cfg as u32 + 1 == self.precision().slices()
    }

    pub fn shift(self) -> u32 {
        2 * self.cfg as u32
    }
}

/// Issue order of slices for one block, most significant first.
pub fn slice_schedule(precision: Precision) -> impl Iterator<Item = SliceConfig> {
    (0..precision.slices() as u8).rev().map(move |cfg| SliceConfig {
        type_code: precision.type_code(),
        cfg,
    })
}

/// Raw 2-bit slice `cfg` of a two's-complement element of the given precision.
pub fn activation_slice(element: i8, precision: Precision, cfg: u8) -> u8 {
    let raw = (element as i32 as u32) & ((1u32 << precision.bits()) - 1);
    ((raw >> (2 * cfg as u32)) & 0b11) as u8
}

/// Interprets a 2-bit slice as signed `[-2, 1]` or unsigned `[0, 3]`.
pub fn interpret_slice(act_slice: u8, is_sign_slice: bool) -> i32 {
    let s = (act_slice & 0b11) as i32;
    if is_sign_slice && s >= 2 {
        s - 4
    } else {
        s
    }
}

/// Sign-aware multiply of one 2-bit activation slice by an 8-bit weight.
pub fn sam_multiply(act_slice: u8, is_sign_slice: bool, weight: i8) -> i32 {
    interpret_slice(act_slice, is_sign_slice) * weight as i32
}

/// Order in which slices are folded into the fixed-point register.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceOrder {
    MsbFirst,
    LsbFirst,
}

/// Accumulator state of one BMPE.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BmpeAccumulator {
    /// Block-local shifted slice sums. Worst case magnitude is
    /// 32 * 128 * 128 = 2^19, far inside 32 bits.
    pub fixed_acc: i32,
    /// Cross-block sum.
    pub fp_acc: f32,
}

impl BmpeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one cycle: 32 SAM products summed by the adder tree, shifted by
    /// slice significance and added into the fixed-point register.
    pub fn step(&mut self, act: &MxBlock, wgt: &MxBlock, slice: SliceConfig) {
        let sign = slice.is_sign_slice();
        let partial: i32 = act
            .elements()
            .iter()
            .zip(wgt.elements())
            .map(|(&a, &w)| sam_multiply(activation_slice(a, act.precision(), slice.cfg), sign, w))
            .sum();
        self.fixed_acc += partial << slice.shift();
    }

    /// Converts the fixed-point register to bfloat16 with both block scales
    /// applied, clears it, and folds the result into the f32 accumulator.
    pub fn finish_block(&mut self, act_exp: u8, wgt_exp: u8) -> bf16 {
        let v = scale_to_bf16(self.fixed_acc as i64, act_exp, wgt_exp);
        self.fixed_acc = 0;
        self.fp_acc += v.to_f32();
        v
    }

    pub fn output(&self) -> bf16 {
        bf16::from_f32(self.fp_acc)
    }
}

/// `bf16(acc * 2^(act_exp + wgt_exp - 254))`, round to nearest even.
///
/// `acc` has at most 20 significant bits, so the f64 product is exact and the
/// single conversion to bfloat16 is the only rounding.
pub fn scale_to_bf16(acc: i64, act_exp: u8, wgt_exp: u8) -> bf16 {
    let e = act_exp as i32 + wgt_exp as i32 - 2 * EXP_BIAS;
    bf16::from_f64(acc as f64 * exp2i(e))
}

/// Result of one block product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockDot {
    pub value: bf16,
    pub cycles: u32,
}

fn check_weight(wgt: &MxBlock) -> Result<()> {
    if wgt.precision() != Precision::Mxint8 {
        return Err(Error::config(
            "weight.precision",
            format!("weights must be MXINT8, got {}", wgt.precision()),
        ));
    }
    Ok(())
}

/// Fixed-point register contents after all slices of one block product.
pub fn fixed_point_dot(act: &MxBlock, wgt: &MxBlock, order: SliceOrder) -> i32 {
    let mut acc = BmpeAccumulator::new();
    let slices: Vec<SliceConfig> = slice_schedule(act.precision()).collect();
    match order {
        SliceOrder::MsbFirst => slices.iter().for_each(|&s| acc.step(act, wgt, s)),
        SliceOrder::LsbFirst => slices.iter().rev().for_each(|&s| acc.step(act, wgt, s)),
    }
    acc.fixed_acc
}

/// Bit-serial product of one activation block with one MXINT8 weight block.
pub fn block_dot(act: &MxBlock, wgt: &MxBlock) -> Result<BlockDot> {
    check_weight(wgt)?;
    let mut acc = BmpeAccumulator::new();
    let mut cycles = 0;
    for slice in slice_schedule(act.precision()) {
        acc.step(act, wgt, slice);
        cycles += 1;
    }
    Ok(BlockDot {
        value: acc.finish_block(act.shared_exp(), wgt.shared_exp()),
        cycles,
    })
}

/// Sums bfloat16 block results left to right in f32 and rounds once to bfloat16.
pub fn accumulate_output(partials: &[bf16]) -> bf16 {
    let sum = partials.iter().fold(0.0f32, |acc, p| acc + p.to_f32());
    bf16::from_f32(sum)
}

/// Full dot product over a row of blocks as one BMPE would run it.
pub fn dot_row(acts: &[MxBlock], wgts: &[MxBlock]) -> Result<BlockDot> {
    if acts.len() != wgts.len() {
        return Err(Error::Shape(format!(
            "{} activation blocks vs {} weight blocks",
            acts.len(),
            wgts.len()
        )));
    }
    let mut acc = BmpeAccumulator::new();
    let mut cycles = 0;
    for (a, w) in acts.iter().zip(wgts) {
        check_weight(w)?;
        for slice in slice_schedule(a.precision()) {
            acc.step(a, w, slice);
            cycles += 1;
        }
        acc.finish_block(a.shared_exp(), w.shared_exp());
    }
    Ok(BlockDot {
        value: acc.output(),
        cycles,
    })
}

/// Sizes of the compute engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineGeometry {
    pub num_mpu: u32,
    pub bmpe_per_mpu: u32,
    pub lanes_per_bmpe: u32,
}

impl Default for EngineGeometry {
    fn default() -> Self {
        EngineGeometry {
            num_mpu: 32,
            bmpe_per_mpu: 32,
            lanes_per_bmpe: BLOCK_SIZE as u32,
        }
    }
}

impl EngineGeometry {
    /// Block products that can run in the same cycle.
    pub fn parallel_block_dots(&self) -> u64 {
        self.num_mpu as u64 * self.bmpe_per_mpu as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_mpu == 0 {
            return Err(Error::config("geometry.num_mpu", "must be positive"));
        }
        if self.bmpe_per_mpu == 0 {
            return Err(Error::config("geometry.bmpe_per_mpu", "must be positive"));
        }
        if self.lanes_per_bmpe as usize != BLOCK_SIZE {
            return Err(Error::config(
                "geometry.lanes_per_bmpe",
                format!("must equal the MX block size {BLOCK_SIZE}"),
            ));
        }
        Ok(())
    }
}

/// Outputs of one MP-MPU dispatch.
#[derive(Clone, Debug, PartialEq)]
pub struct MpuDispatch {
    pub outputs: Vec<bf16>,
    pub cycles: u32,
}

/// Broadcasts one activation block to up to 32 BMPEs, each holding its own
/// weight block. All BMPEs share one precision, so the dispatch costs the
/// slice count of that precision once.
pub fn mpu_dispatch(act: &MxBlock, weights: &[MxBlock], precision: Precision) -> Result<MpuDispatch> {
    let bmpes = EngineGeometry::default().bmpe_per_mpu as usize;
    if weights.is_empty() || weights.len() > bmpes {
        return Err(Error::Shape(format!(
            "dispatch takes 1..={bmpes} weight blocks, got {}",
            weights.len()
        )));
    }
    if act.precision() != precision {
        return Err(Error::config(
            "dispatch.precision",
            format!(
                "activation block is {} but dispatch is configured for {precision}",
                act.precision()
            ),
        ));
    }
    let outputs = weights
        .iter()
        .map(|w| block_dot(act, w).map(|d| d.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(MpuDispatch {
        outputs,
        cycles: precision.slices(),
    })
}
