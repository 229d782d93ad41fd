//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the code under test except for constructors and
//! accessors of plain data types.

#![allow(dead_code)]

use mxsim_core::mask::{BinaryMask, Stage};
use mxsim_core::{MxBlock, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Round-to-nearest-even conversion of an f64 to bfloat16 bits, including
/// subnormals, overflow to infinity and signed zero.
pub fn bf16_bits_rne(x: f64) -> u16 {
    assert!(x.is_finite());
    let sign: u16 = if x.is_sign_negative() { 0x8000 } else { 0 };
    let a = x.abs();
    if a == 0.0 {
        return sign;
    }
    // bfloat16: 8 exponent bits (bias 127), 7 fraction bits.
    // Smallest subnormal 2^-133; quantum at exponent e (>= -126) is 2^(e-7).
    let mut e = a.log2().floor() as i32;
    // Guard against log2 rounding near powers of two.
    while 2f64.powi(e) > a {
        e -= 1;
    }
    while 2f64.powi(e + 1) <= a {
        e += 1;
    }
    let quantum_exp = e.max(-126) - 7;
    let q = a / 2f64.powi(quantum_exp); // exact: power-of-two scaling
    let fl = q.floor();
    let frac = q - fl;
    let mut m = fl as u64;
    if frac > 0.5 || (frac == 0.5 && m % 2 == 1) {
        m += 1;
    }
    // m * 2^quantum_exp, re-normalize into bfloat16 fields.
    let value_exp = quantum_exp; // value = m * 2^value_exp
    let mut bits: u32;
    if m == 0 {
        return sign;
    }
    let top = 63 - m.leading_zeros() as i32; // m in [2^top, 2^(top+1))
    let e_final = value_exp + top;
    if e_final > 127 {
        return sign | 0x7f80;
    }
    if e_final < -126 {
        // subnormal: m * 2^value_exp with value_exp = -133
        bits = m as u32;
    } else {
        let frac_bits = (m << (7 - top).max(0)) >> (top - 7).max(0);
        bits = (((e_final + 127) as u32) << 7) | (frac_bits as u32 & 0x7f);
    }
    if bits > 0x7f80 {
        bits = 0x7f80;
    }
    sign | bits as u16
}

/// Signed integer dot product of two blocks' elements.
pub fn int_dot(a: &MxBlock, w: &MxBlock) -> i64 {
    a.elements().iter().zip(w.elements()).map(|(&x, &y)| x as i64 * y as i64).sum()
}

/// Reference block product: the exact scaled dot product rounded once.
pub fn block_dot_oracle(a: &MxBlock, w: &MxBlock) -> u16 {
    let e = a.shared_exp() as i32 + w.shared_exp() as i32 - 254;
    bf16_bits_rne(int_dot(a, w) as f64 * 2f64.powi(e))
}

/// Random block with elements uniform over the precision's range.
pub fn random_block(rng: &mut ChaCha8Rng, p: Precision, exp: u8) -> MxBlock {
    let lo = p.min_element();
    let hi = p.max_element();
    let mut e = [0i8; 32];
    for v in e.iter_mut() {
        *v = rng.random_range(lo..=hi) as i8;
    }
    MxBlock::new(e, exp, p).unwrap()
}

/// Random mask with density `p`.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    let bits = (0..h * w).map(|_| rng.random::<f64>() < p).collect();
    BinaryMask::from_bits(h, w, bits).unwrap()
}

/// Brute-force Chebyshev dilation: a token is set when any set token lies
/// within `d` in both axes.
pub fn dilate_oracle(m: &BinaryMask, d: usize) -> BinaryMask {
    let (h, w) = (m.height(), m.width());
    let d = d as i64;
    let bits = (0..h as i64)
        .flat_map(|r| (0..w as i64).map(move |c| (r, c)))
        .map(|(r, c)| {
            (r - d..=r + d).any(|rr| {
                (c - d..=c + d).any(|cc| {
                    rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 && m.get(rr as usize, cc as usize)
                })
            })
        })
        .collect();
    BinaryMask::from_bits(h, w, bits).unwrap()
}

/// 2x2 majority (at least two of four) with edge replication.
pub fn downsample_oracle(m: &BinaryMask) -> BinaryMask {
    let (h, w) = (m.height(), m.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut bits = Vec::new();
    for r in 0..oh {
        for c in 0..ow {
            let mut n = 0;
            for dr in 0..2 {
                for dc in 0..2 {
                    let rr = (2 * r + dr).min(h - 1);
                    let cc = (2 * c + dc).min(w - 1);
                    n += m.get(rr, cc) as u32;
                }
            }
            bits.push(n >= 2);
        }
    }
    BinaryMask::from_bits(oh, ow, bits).unwrap()
}

/// Stage of every token from Chebyshev distance to the main mask.
pub fn stages_oracle(m: &BinaryMask, conv: usize, extra: usize) -> Vec<Stage> {
    let (h, w) = (m.height() as i64, m.width() as i64);
    let set: Vec<(i64, i64)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| m.get(r as usize, c as usize))
        .collect();
    (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| {
            let dist = set.iter().map(|&(sr, sc)| (sr - r).abs().max((sc - c).abs())).min();
            match dist {
                Some(0) => Stage::S3,
                Some(d) if d as usize <= conv => Stage::S2,
                Some(d) if d as usize <= conv + extra => Stage::S1,
                _ => Stage::S0,
            }
        })
        .collect()
}

/// Group norm over `groups` channel groups using only `included` tokens for
/// statistics, two-pass in f64.
pub fn group_norm_oracle(data: &[f64], tokens: usize, channels: usize, groups: usize, included: &[bool], eps: f64) -> Vec<f64> {
    let per = channels / groups;
    let mut out = vec![0.0; data.len()];
    let use_all = !included.iter().any(|&b| b);
    for g in 0..groups {
        let mut vals = Vec::new();
        for t in 0..tokens {
            if use_all || included[t] {
                for c in g * per..(g + 1) * per {
                    vals.push(data[t * channels + c]);
                }
            }
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for t in 0..tokens {
            for c in g * per..(g + 1) * per {
                out[t * channels + c] = (data[t * channels + c] - mean) / (var + eps).sqrt();
            }
        }
    }
    out
}

pub fn random_stages(rng: &mut ChaCha8Rng, n: usize) -> Vec<Stage> {
    (0..n).map(|_| Stage::ALL[rng.random_range(0..4)]).collect()
}

/// Closed-form matrix-unit cycles of one timestep: every matrix layer costs
/// `ceil(sum over tokens of block products x slices / parallel)`.
pub fn closed_form_mpu_cycles(
    layers: &[mxsim_core::workload::LayerInstance],
    level_stage_counts: &[[u64; 4]],
    table: &[Precision; 4],
    parallel: u64,
) -> u64 {
    layers
        .iter()
        .filter(|l| l.kind.is_matrix())
        .map(|l| {
            let blocks = (l.reduction as u64).div_ceil(32) * l.outputs_per_token as u64;
            let slices: u64 = (0..4)
                .map(|s| level_stage_counts[l.level][s] * (table[s].bits() as u64 / 2))
                .sum();
            (blocks * slices).div_ceil(parallel)
        })
        .sum()
}
