//! Non-matrix operations under stage-wise precision.
//!
//! Low-precision tokens are kept out of the statistics that would otherwise
//! let their quantization noise leak into high-precision regions: group norm
//! takes its mean and variance from Stage 2-3 tokens only, and softmax gives
//! Stage 0 keys zero probability.

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, Stage};
use crate::mx::{self, Precision, BLOCK_SIZE};

/// `tokens x channels` activations, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTensor {
    tokens: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TokenTensor {
    pub fn new(tokens: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != tokens * channels {
            return Err(Error::Shape(format!(
                "{} values do not form {tokens}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("element {i} is not finite")));
        }
        Ok(TokenTensor {
            tokens,
            channels,
            data,
        })
    }

    pub fn zeros(tokens: usize, channels: usize) -> Self {
        TokenTensor {
            tokens,
            channels,
            data: vec![0.0; tokens * channels],
        }
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, token: usize) -> &[f64] {
        &self.data[token * self.channels..(token + 1) * self.channels]
    }

    pub fn get(&self, token: usize, channel: usize) -> f64 {
        self.data[token * self.channels + channel]
    }

    /// Rounds every token through MX blocks along its channels at the given
    /// per-token precision.
    pub fn fake_quantize(&self, precisions: &[Precision]) -> Result<TokenTensor> {
        if precisions.len() != self.tokens {
            return Err(Error::Shape(format!(
                "{} precisions for {} tokens",
                precisions.len(),
                self.tokens
            )));
        }
        let blocks_per_token = mx::block_count(self.channels);
        let mut data = Vec::with_capacity(self.data.len());
        for (t, &p) in precisions.iter().enumerate() {
            let blocks = mx::quantize_tensor(self.row(t), &vec![p; blocks_per_token])?;
            data.extend(mx::dequantize_tensor(&blocks, self.channels));
        }
        Ok(TokenTensor { data, ..*self })
    }
}

/// Output of [`group_norm_stagewise`].
#[derive(Clone, Debug, PartialEq)]
pub struct GroupNormOutput {
    pub tensor: TokenTensor,
    /// Set when no Stage 2-3 token existed and all tokens fed the statistics.
    pub used_fallback: bool,
}

/// Per-channel affine parameters.
#[derive(Clone, Copy, Debug)]
pub struct Affine<'a> {
    pub scale: &'a [f64],
    pub shift: &'a [f64],
}

/// Group normalization whose statistics come from Stage 2-3 tokens only and
/// are applied to every token.
pub fn group_norm_stagewise(
    x: &TokenTensor,
    stages: &[Stage],
    groups: usize,
    eps: f64,
    affine: Option<Affine<'_>>,
) -> Result<GroupNormOutput> {
    if stages.len() != x.tokens {
        return Err(Error::Shape(format!(
            "{} stages for {} tokens",
            stages.len(),
            x.tokens
        )));
    }
    if groups == 0 || x.channels % groups != 0 {
        return Err(Error::Shape(format!(
            "{} channels not divisible into {groups} groups",
            x.channels
        )));
    }
    if let Some(a) = affine {
        if a.scale.len() != x.channels || a.shift.len() != x.channels {
            return Err(Error::Shape("affine parameters must have one entry per channel".into()));
        }
    }

    let mut included: Vec<usize> = (0..x.tokens).filter(|&t| stages[t] >= Stage::S2).collect();
    let used_fallback = included.is_empty();
    if used_fallback {
        log::warn!("group norm: no Stage 2-3 tokens, using all tokens for statistics");
        included = (0..x.tokens).collect();
    }

    let per_group = x.channels / groups;
    let mut out = x.data.clone();
    for g in 0..groups {
        let chans = g * per_group..(g + 1) * per_group;
        let n = (included.len() * per_group) as f64;
        let mean = included
            .iter()
            .flat_map(|&t| x.row(t)[chans.clone()].iter())
            .sum::<f64>()
            / n;
        let var = included
            .iter()
            .flat_map(|&t| x.row(t)[chans.clone()].iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let inv_std = 1.0 / (var + eps).sqrt();
        for t in 0..x.tokens {
            for c in chans.clone() {
                let i = t * x.channels + c;
                let mut v = (x.data[i] - mean) * inv_std;
                if let Some(a) = affine {
                    v = v * a.scale[c] + a.shift[c];
                }
                out[i] = v;
            }
        }
    }
    Ok(GroupNormOutput {
        tensor: TokenTensor { data: out, ..*x },
        used_fallback,
    })
}

/// Softmax over the keys at Stage 1 or above; Stage 0 keys get exactly zero.
pub fn softmax_stagemasked(logits: &[f64], key_stages: &[Stage]) -> Result<Vec<f64>> {
    if logits.len() != key_stages.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} key stages",
            logits.len(),
            key_stages.len()
        )));
    }
    let max = logits
        .iter()
        .zip(key_stages)
        .filter(|(_, &s)| s != Stage::S0)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::config(
            "softmax.key_stages",
            "every key is Stage 0; the attention row has no support",
        ));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(key_stages)
        .map(|(&l, &s)| if s == Stage::S0 { 0.0 } else { (l - max).exp() })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Square matrix of attention probabilities, row = query.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionScores {
    n: usize,
    probs: Vec<f64>,
}

impl AttentionScores {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * n {
            return Err(Error::Shape(format!("{} probabilities for {n}x{n}", probs.len())));
        }
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidValue(format!("probability {i} outside [0, 1]")));
        }
        Ok(AttentionScores { n, probs })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, query: usize) -> &[f64] {
        &self.probs[query * self.n..(query + 1) * self.n]
    }

    /// Element-wise mean of several heads.
    pub fn mean_over_heads(heads: &[AttentionScores]) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::Shape("no attention heads".into()))?;
        if heads.iter().any(|h| h.n != first.n) {
            return Err(Error::Shape("attention heads differ in size".into()));
        }
        let k = heads.len() as f64;
        let probs = (0..first.probs.len())
            .map(|i| heads.iter().map(|h| h.probs[i]).sum::<f64>() / k)
            .collect();
        Ok(AttentionScores { n: first.n, probs })
    }
}

/// Flags unmasked tokens whose mean attention onto masked tokens exceeds
/// `threshold`. Masked tokens are never flagged.
pub fn semantic_scores(attn: &AttentionScores, main: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    if attn.n != main.len() {
        return Err(Error::Shape(format!(
            "{}x{} attention for a {}-token mask",
            attn.n,
            attn.n,
            main.len()
        )));
    }
    let masked: Vec<usize> = (0..main.len()).filter(|&i| main.bits()[i]).collect();
    if masked.is_empty() {
        return BinaryMask::new(main.height(), main.width());
    }
    let bits = (0..attn.n)
        .map(|q| {
            if main.bits()[q] {
                return false;
            }
            let row = attn.row(q);
            let score = masked.iter().map(|&k| row[k]).sum::<f64>() / masked.len() as f64;
            score > threshold
        })
        .collect();
    BinaryMask::from_bits(main.height(), main.width(), bits)
}

/// Scaled dot-product attention probabilities of `queries` against `keys`
/// with Stage 0 keys masked out of the softmax.
pub fn attention_probs(queries: &TokenTensor, keys: &TokenTensor, key_stages: &[Stage]) -> Result<AttentionScores> {
    if queries.channels != keys.channels || queries.tokens != keys.tokens {
        return Err(Error::Shape("queries and keys must have the same shape".into()));
    }
    let n = queries.tokens;
    let scale = 1.0 / (queries.channels as f64).sqrt();
    let mut probs = Vec::with_capacity(n * n);
    let mut logits = vec![0.0; n];
    for q in 0..n {
        let qr = queries.row(q);
        for (k, l) in logits.iter_mut().enumerate() {
            *l = qr.iter().zip(keys.row(k)).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        probs.extend(softmax_stagemasked(&logits, key_stages)?);
    }
    AttentionScores::new(n, probs)
}

/// Precision used for the attention inputs of a refinement pass: MXINT8 for
/// Stage 2-3 tokens, MXINT4 for the rest.
pub fn refinement_precision(stage: Stage) -> Precision {
    if stage >= Stage::S2 {
        Precision::Mxint8
    } else {
        Precision::Mxint4
    }
}

/// Activation blocks per token for a reduction of `len` elements.
pub fn blocks_per_row(len: usize) -> usize {
    len.div_ceil(BLOCK_SIZE)
}
