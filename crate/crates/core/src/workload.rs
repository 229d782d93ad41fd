//! U-Net-like workload description.
//!
//! A graph is a list of resolution levels, finest first, each halving the
//! grid of the one before. Execution walks the levels down (encoder), runs the
//! coarsest level once, then walks back up (decoder) reusing each level's
//! stage map. Every level runs `conv3x3` ResNet convolutions (each preceded by
//! a group norm and an activation), `conv1x1` pointwise convolutions, and an
//! optional self-attention block.
//!
//! Config document:
//!
//! ```json
//! {
//!   "levels": [
//!     {"grid": [64, 64], "conv3x3": 2, "conv1x1": 1, "channels": 64, "attention": false},
//!     {"grid": [32, 32], "conv3x3": 2, "conv1x1": 1, "channels": 128, "attention": true}
//!   ],
//!   "timesteps": 50,
//!   "seed": 42,
//!   "semantic_refinement": true
//! }
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{self, BinaryMask, DilationEntry, DilationPlan, StageMap};
use crate::mx::{self, MxBlock, Precision, BLOCK_SIZE};
use crate::ops::TokenTensor;

/// One resolution level as written in the config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    /// Token grid `[height, width]`.
    pub grid: [usize; 2],
    pub conv3x3: usize,
    #[serde(default)]
    pub conv1x1: usize,
    pub channels: usize,
    #[serde(default)]
    pub attention: bool,
}

impl Level {
    pub fn tokens(&self) -> usize {
        self.grid[0] * self.grid[1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerGraph {
    pub levels: Vec<Level>,
    #[serde(default = "default_timesteps")]
    pub timesteps: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub semantic_refinement: bool,
}

fn default_timesteps() -> u32 {
    50
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Downsample,
    Upsample,
}

/// Resolution change between two levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    Linear,
    Attention,
    GroupNorm,
    Softmax,
    Elementwise,
}

impl LayerKind {
    /// Runs on the matrix units rather than the vector unit.
    pub fn is_matrix(self) -> bool {
        matches!(
            self,
            LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::Linear | LayerKind::Attention
        )
    }
}

/// Role of a layer inside an attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttentionRole {
    Query,
    Key,
    Value,
    Output,
    Score,
    Context,
}

/// One executed layer.
///
/// Matrix layers are described per output token: each token reduces
/// `reduction` activation elements for each of `outputs_per_token` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInstance {
    pub name: String,
    pub level: usize,
    pub kind: LayerKind,
    pub attention_role: Option<AttentionRole>,
    pub tokens: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Activation elements per token that feed one output (`9 * Cin` for a
    /// 3x3 convolution, the key count for the context product).
    pub reduction: usize,
    pub outputs_per_token: usize,
    /// Whether the second operand is a stored MXINT8 weight tensor.
    pub has_weights: bool,
}

impl LayerInstance {
    pub fn mac_count(&self) -> u64 {
        if self.kind.is_matrix() {
            self.tokens as u64 * self.reduction as u64 * self.outputs_per_token as u64
        } else {
            0
        }
    }

    /// 32-element block products per token.
    pub fn block_dots_per_token(&self) -> u64 {
        mx::block_count(self.reduction) as u64 * self.outputs_per_token as u64
    }

    /// Vector-unit operations for non-matrix layers.
    pub fn vector_ops(&self) -> u64 {
        let elems = self.tokens as u64 * self.out_channels as u64;
        match self.kind {
            // mean, variance, normalize, affine
            LayerKind::GroupNorm => 4 * elems,
            // max, exp, normalize
            LayerKind::Softmax => 3 * elems,
            LayerKind::Elementwise => elems,
            _ => 0,
        }
    }

    /// Total operations, counting one per MAC.
    pub fn op_count(&self) -> u64 {
        self.mac_count() + self.vector_ops()
    }
}

impl LayerGraph {
    /// Reads and validates a graph document.
    pub fn from_json(text: &str) -> Result<Self> {
        let graph: LayerGraph =
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("levels", "at least one level is required"));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if l.grid[0] == 0 || l.grid[1] == 0 {
                return Err(Error::config(format!("levels[{i}].grid"), "dimensions must be positive"));
            }
            if l.channels == 0 || l.channels % BLOCK_SIZE != 0 {
                return Err(Error::config(
                    format!("levels[{i}].channels"),
                    format!("must be a positive multiple of {BLOCK_SIZE}"),
                ));
            }
            if i > 0 {
                let prev = self.levels[i - 1].grid;
                let want = [prev[0].div_ceil(2), prev[1].div_ceil(2)];
                if l.grid != want {
                    return Err(Error::config(
                        format!("levels[{i}].grid"),
                        format!("expected {want:?}, half of {prev:?}"),
                    ));
                }
            }
        }
        if self.timesteps == 0 {
            return Err(Error::config("timesteps", "must be positive"));
        }
        if self.semantic_refinement && !self.levels.iter().any(|l| l.attention) {
            return Err(Error::config(
                "levels",
                "semantic refinement needs at least one attention level",
            ));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<Edge> {
        let n = self.levels.len();
        let down = (1..n).map(|i| Edge {
            from: i - 1,
            to: i,
            kind: EdgeKind::Downsample,
        });
        let up = (1..n).rev().map(|i| Edge {
            from: i,
            to: i - 1,
            kind: EdgeKind::Upsample,
        });
        down.chain(up).collect()
    }

    /// Layers in execution order.
    pub fn layers(&self) -> Vec<LayerInstance> {
        let mut out = Vec::new();
        let last = self.levels.len() - 1;
        for i in 0..=last {
            if i > 0 {
                self.push_resample(&mut out, format!("enc{i}.down"), i);
            }
            let cin = if i == 0 { self.levels[0].channels } else { self.levels[i - 1].channels };
            let prefix = if i == last { format!("mid{i}") } else { format!("enc{i}") };
            self.push_block(&mut out, &prefix, i, cin);
        }
        for i in (0..last).rev() {
            self.push_resample(&mut out, format!("dec{i}.up"), i);
            let cin = self.levels[i + 1].channels + self.levels[i].channels;
            self.push_block(&mut out, &format!("dec{i}"), i, cin);
        }
        out
    }

    fn push_resample(&self, out: &mut Vec<LayerInstance>, name: String, level: usize) {
        let l = &self.levels[level];
        out.push(vector_layer(name, level, LayerKind::Elementwise, l.tokens(), l.channels));
    }

    fn push_block(&self, out: &mut Vec<LayerInstance>, prefix: &str, level: usize, cin: usize) {
        let l = &self.levels[level];
        let n = l.tokens();
        let c = l.channels;
        let mut ch = cin;
        for k in 0..l.conv3x3 {
            out.push(vector_layer(format!("{prefix}.norm{k}"), level, LayerKind::GroupNorm, n, ch));
            out.push(vector_layer(format!("{prefix}.act{k}"), level, LayerKind::Elementwise, n, ch));
            out.push(matrix_layer(format!("{prefix}.conv3x3_{k}"), level, LayerKind::Conv3x3, n, ch, c, 9 * ch, c, true));
            ch = c;
        }
        for k in 0..l.conv1x1 {
            out.push(matrix_layer(format!("{prefix}.conv1x1_{k}"), level, LayerKind::Conv1x1, n, ch, c, ch, c, true));
            ch = c;
        }
        if l.attention {
            use AttentionRole::*;
            out.push(vector_layer(format!("{prefix}.attn.norm"), level, LayerKind::GroupNorm, n, ch));
            for (role, name) in [(Query, "q"), (Key, "k"), (Value, "v")] {
                let mut layer = matrix_layer(format!("{prefix}.attn.{name}"), level, LayerKind::Linear, n, ch, c, ch, c, true);
                layer.attention_role = Some(role);
                out.push(layer);
            }
            let mut score = matrix_layer(format!("{prefix}.attn.score"), level, LayerKind::Attention, n, c, n, c, n, false);
            score.attention_role = Some(Score);
            out.push(score);
            out.push(vector_layer(format!("{prefix}.attn.softmax"), level, LayerKind::Softmax, n, n));
            let mut ctx = matrix_layer(format!("{prefix}.attn.context"), level, LayerKind::Attention, n, n, c, n, c, false);
            ctx.attention_role = Some(Context);
            out.push(ctx);
            let mut o = matrix_layer(format!("{prefix}.attn.o"), level, LayerKind::Linear, n, c, c, c, c, true);
            o.attention_role = Some(Output);
            out.push(o);
        }
    }

    /// Level of the last self-attention block in execution order.
    pub fn final_attention_level(&self) -> Option<usize> {
        self.layers()
            .iter()
            .rev()
            .find(|l| l.attention_role == Some(AttentionRole::Score))
            .map(|l| l.level)
    }

    pub fn total_macs(&self) -> u64 {
        self.layers().iter().map(LayerInstance::mac_count).sum()
    }

    /// Share of all operations spent in matrix layers.
    pub fn matrix_op_fraction(&self) -> f64 {
        let layers = self.layers();
        let total: u64 = layers.iter().map(LayerInstance::op_count).sum();
        let matrix: u64 = layers.iter().map(LayerInstance::mac_count).sum();
        matrix as f64 / total as f64
    }
}

fn vector_layer(name: String, level: usize, kind: LayerKind, tokens: usize, channels: usize) -> LayerInstance {
    LayerInstance {
        name,
        level,
        kind,
        attention_role: None,
        tokens,
        in_channels: channels,
        out_channels: channels,
        reduction: 0,
        outputs_per_token: 0,
        has_weights: false,
    }
}

#[allow(clippy::too_many_arguments)]
fn matrix_layer(
    name: String,
    level: usize,
    kind: LayerKind,
    tokens: usize,
    cin: usize,
    cout: usize,
    reduction: usize,
    outputs: usize,
    has_weights: bool,
) -> LayerInstance {
    LayerInstance {
        name,
        level,
        kind,
        attention_role: None,
        tokens,
        in_channels: cin,
        out_channels: cout,
        reduction,
        outputs_per_token: outputs,
        has_weights,
    }
}

/// Per-level dilation distances: Stage 2 grows by the level's 3x3 conv count,
/// Stage 1 by twice the next-coarser level's count on top of that.
pub fn derive_dilation_plan(graph: &LayerGraph) -> DilationPlan {
    let levels = graph
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| DilationEntry {
            conv_count: l.conv3x3,
            stage1_extra: graph.levels.get(i + 1).map_or(0, |next| 2 * next.conv3x3),
        })
        .collect();
    DilationPlan { levels }
}

/// Main mask at every level, finest first.
pub fn level_masks(graph: &LayerGraph, main: &BinaryMask) -> Result<Vec<BinaryMask>> {
    let top = graph.levels[0].grid;
    if [main.height(), main.width()] != top {
        return Err(Error::Shape(format!(
            "mask is {}x{} but the top level grid is {}x{}",
            main.height(),
            main.width(),
            top[0],
            top[1]
        )));
    }
    let mut masks = vec![main.clone()];
    for _ in 1..graph.levels.len() {
        let next = mask::downsample(masks.last().expect("non-empty"));
        masks.push(next);
    }
    Ok(masks)
}

/// Stage map of every level, finest first.
pub fn propagate_masks(graph: &LayerGraph, main: &BinaryMask) -> Result<Vec<StageMap>> {
    let plan = derive_dilation_plan(graph);
    Ok(level_masks(graph, main)?
        .iter()
        .zip(&plan.levels)
        .map(|(m, &e)| mask::build_stage_map(m, e))
        .collect())
}

/// Deterministic synthetic tensors.
///
/// Every tensor comes from its own ChaCha8 stream (seeded with the graph seed,
/// stream id derived from what is generated) and holds values uniform in
/// `[-1, 1)`. ChaCha8 output and the float conversion are platform
/// independent, so tensors are byte-identical everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthTensors {
    seed: u64,
}

const STREAM_INPUT: u64 = 1 << 32;
const STREAM_WEIGHT: u64 = 2 << 32;
const STREAM_QUERY: u64 = 3 << 32;
const STREAM_KEY: u64 = 4 << 32;

impl SynthTensors {
    pub fn new(seed: u64) -> Self {
        SynthTensors { seed }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn uniform(&self, stream: u64, n: usize) -> Vec<f64> {
        let mut rng = self.rng(stream);
        (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
    }

    /// Input activations of layer `index`.
    pub fn layer_input(&self, index: usize, layer: &LayerInstance) -> TokenTensor {
        let cols = if layer.kind.is_matrix() { layer.in_channels } else { layer.out_channels };
        TokenTensor::new(layer.tokens, cols, self.uniform(STREAM_INPUT | index as u64, layer.tokens * cols))
            .expect("shape matches")
    }

    /// MXINT8 weights of layer `index`: one block row of `reduction` per output.
    pub fn layer_weights(&self, index: usize, layer: &LayerInstance) -> Option<Vec<MxBlock>> {
        if !layer.has_weights {
            return None;
        }
        let per_out = mx::block_count(layer.reduction);
        let mut blocks = Vec::with_capacity(per_out * layer.outputs_per_token);
        let values = self.uniform(STREAM_WEIGHT | index as u64, layer.reduction * layer.outputs_per_token);
        for row in values.chunks(layer.reduction) {
            blocks.extend(mx::quantize_tensor(row, &vec![Precision::Mxint8; per_out]).expect("finite values"));
        }
        Some(blocks)
    }

    /// Query and key tensors of the attention block at `level` for `timestep`.
    pub fn attention_qk(&self, graph: &LayerGraph, level: usize, timestep: u32) -> (TokenTensor, TokenTensor) {
        let l = &graph.levels[level];
        let n = l.tokens() * l.channels;
        let id = ((level as u64) << 16) | timestep as u64;
        let q = TokenTensor::new(l.tokens(), l.channels, self.uniform(STREAM_QUERY | id, n)).expect("shape");
        let k = TokenTensor::new(l.tokens(), l.channels, self.uniform(STREAM_KEY | id, n)).expect("shape");
        (q, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(levels: &[(usize, usize, usize, bool)]) -> LayerGraph {
        let mut g = 64;
        let levels = levels
            .iter()
            .map(|&(conv3x3, conv1x1, channels, attention)| {
                let l = Level {
                    grid: [g, g],
                    conv3x3,
                    conv1x1,
                    channels,
                    attention,
                };
                g /= 2;
                l
            })
            .collect();
        LayerGraph {
            levels,
            timesteps: 50,
            seed: 1,
            semantic_refinement: true,
        }
    }

    #[test]
    fn plan_examples() {
        let p = derive_dilation_plan(&graph(&[(2, 0, 32, true)]));
        assert_eq!(p.levels, vec![DilationEntry { conv_count: 2, stage1_extra: 0 }]);
        let p = derive_dilation_plan(&graph(&[(2, 0, 32, true), (3, 0, 32, false)]));
        assert_eq!(p.levels[0], DilationEntry { conv_count: 2, stage1_extra: 6 });
        assert_eq!(p.levels[1], DilationEntry { conv_count: 3, stage1_extra: 0 });
    }

    #[test]
    fn validation_paths() {
        let bad = r#"{"levels":[{"grid":[64,64],"conv3x3":2,"channels":64,"attention":true},
                                {"grid":[30,32],"conv3x3":2,"channels":64}]}"#;
        match LayerGraph::from_json(bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "levels[1].grid"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"levels":[{"grid":[8,8],"conv3x3":2,"channels":48,"attention":true}]}"#;
        assert!(matches!(LayerGraph::from_json(bad), Err(Error::Config { path, .. }) if path == "levels[0].channels"));
        let bad = r#"{"levels":[{"grid":[8,8],"conv3x3":2,"channels":32}]}"#;
        assert!(matches!(LayerGraph::from_json(bad), Err(Error::Config { path, .. }) if path == "levels"));
        let bad = r#"{"levels":[{"grid":[8,8],"conv3x3":2,"channels":32,"attention":true}],"extra":1}"#;
        assert!(matches!(LayerGraph::from_json(bad), Err(Error::Config { .. })));
        let ok = r#"{"levels":[{"grid":[8,8],"conv3x3":2,"channels":32}],"semantic_refinement":false}"#;
        assert!(LayerGraph::from_json(ok).is_ok());
    }

    #[test]
    fn layer_macs_consistent() {
        let g = graph(&[(2, 1, 64, false), (2, 1, 128, true)]);
        for l in g.layers() {
            match l.kind {
                LayerKind::Conv3x3 => assert_eq!(l.mac_count(), (l.tokens * l.in_channels * l.out_channels * 9) as u64),
                LayerKind::Conv1x1 | LayerKind::Linear => {
                    assert_eq!(l.mac_count(), (l.tokens * l.in_channels * l.out_channels) as u64)
                }
                LayerKind::Attention => assert_eq!(l.mac_count(), (l.tokens * l.tokens * 128) as u64),
                _ => assert_eq!(l.mac_count(), 0),
            }
        }
        assert_eq!(g.total_macs(), g.layers().iter().map(|l| l.mac_count()).sum::<u64>());
        assert_eq!(g.final_attention_level(), Some(1));
        assert_eq!(g.edges().len(), 2);
        // Decoder level 0 concatenates the skip connection.
        let dec = g.layers().into_iter().find(|l| l.name == "dec0.conv3x3_0").unwrap();
        assert_eq!(dec.in_channels, 192);
    }

    #[test]
    fn propagate_shapes() {
        let g = graph(&[(2, 0, 32, true), (1, 0, 32, false), (1, 0, 32, false)]);
        let main = BinaryMask::centered_blob(64, 64, 100).unwrap();
        let maps = propagate_masks(&g, &main).unwrap();
        assert_eq!(maps.iter().map(|m| m.height()).collect::<Vec<_>>(), vec![64, 32, 16]);
        assert_eq!(maps[0].region(crate::mask::Stage::S3), main);
        assert!(propagate_masks(&g, &BinaryMask::new(32, 32).unwrap()).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let g = graph(&[(1, 0, 32, true)]);
        let layers = g.layers();
        let conv = layers.iter().position(|l| l.has_weights).unwrap();
        let a = SynthTensors::new(9);
        let b = SynthTensors::new(9);
        assert_eq!(a.layer_input(conv, &layers[conv]), b.layer_input(conv, &layers[conv]));
        assert_eq!(a.layer_weights(conv, &layers[conv]), b.layer_weights(conv, &layers[conv]));
        assert_ne!(a.layer_input(conv, &layers[conv]), SynthTensors::new(10).layer_input(conv, &layers[conv]));
        let w = a.layer_weights(conv, &layers[conv]).unwrap();
        // 288-element reduction = 9 blocks, for each of 32 outputs.
        assert_eq!(w.len(), 9 * 32);
        assert!(w.iter().all(|b| b.precision() == Precision::Mxint8));
    }
}
