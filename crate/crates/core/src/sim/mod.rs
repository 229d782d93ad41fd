//! Cycle, traffic and energy accounting.
//!
//! Matrix layers are costed per 32-element block product: a token at
//! precision `p` issues `block_dots_per_token` products of `p.slices()` cycles
//! each, and `num_mpu * bmpe_per_mpu` products run concurrently. Non-matrix
//! layers run on the vector unit at a fixed throughput. DRAM time follows
//! from the bytes moved, and a layer takes the longer of compute and memory
//! time. Energy is integer picojoules so totals add up exactly.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bitserial::EngineGeometry;
use crate::error::{Error, Result};
use crate::mask::{self, BinaryMask, Stage, StageMap};
use crate::mx::{self, Precision};
use crate::ops;
use crate::schedule::{Phase, PrecisionSchedule};
use crate::workload::{self, AttentionRole, LayerGraph, LayerInstance, LayerKind, SynthTensors};

pub use report::{emit_report, ReportFormat};

/// Energy per event in picojoules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyTable {
    /// One BMPE cycle (32 lanes, one 2-bit slice), by activation precision.
    pub bmpe_cycle_pj: BTreeMap<Precision, u64>,
    pub vpu_op_pj: u64,
    pub onchip_byte_pj: u64,
    pub dram_byte_pj: u64,
    /// Control, mask manager and quantizer, charged per latency cycle.
    pub static_cycle_pj: u64,
}

impl Default for EnergyTable {
    /// Per-unit shares of a 5.68 W budget at 800 MHz: 2.29 W over 1024 BMPEs,
    /// 2.14 W over a 512-op/cycle vector unit, 0.78 W of SRAM at ~1 KiB/cycle,
    /// 0.47 W of control. DRAM at ~5 pJ/bit (LPDDR5).
    fn default() -> Self {
        EnergyTable {
            bmpe_cycle_pj: Precision::ALL.iter().map(|&p| (p, 3)).collect(),
            vpu_op_pj: 5,
            onchip_byte_pj: 1,
            dram_byte_pj: 40,
            static_cycle_pj: 588,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub geometry: EngineGeometry,
    pub freq_hz: f64,
    pub onchip_bytes: u64,
    pub dram_bw_bytes_per_s: f64,
    pub vpu_ops_per_cycle: u64,
    pub energy: EnergyTable,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self::edge()
    }
}

impl HardwareConfig {
    /// 800 MHz, 32x32 BMPEs, 2 MiB SRAM, 102.4 GB/s LPDDR5.
    pub fn edge() -> Self {
        HardwareConfig {
            geometry: EngineGeometry::default(),
            freq_hz: 800e6,
            onchip_bytes: 2 * 1024 * 1024,
            dram_bw_bytes_per_s: 102.4e9,
            vpu_ops_per_cycle: 512,
            energy: EnergyTable::default(),
        }
    }

    /// Edge compute with 2 TB/s HBM2E (~3.9 pJ/bit).
    pub fn server() -> Self {
        HardwareConfig {
            dram_bw_bytes_per_s: 2e12,
            energy: EnergyTable {
                dram_byte_pj: 31,
                ..EnergyTable::default()
            },
            ..Self::edge()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let hw: HardwareConfig =
            serde_json::from_str(text).map_err(|e| Error::config("<hardware>", e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.freq_hz.is_finite() && self.freq_hz > 0.0) {
            return Err(Error::config("freq_hz", "must be positive"));
        }
        if !(self.dram_bw_bytes_per_s.is_finite() && self.dram_bw_bytes_per_s > 0.0) {
            return Err(Error::config("dram_bw_bytes_per_s", "must be positive"));
        }
        if self.onchip_bytes == 0 {
            return Err(Error::config("onchip_bytes", "must be positive"));
        }
        if self.vpu_ops_per_cycle == 0 {
            return Err(Error::config("vpu_ops_per_cycle", "must be positive"));
        }
        for p in Precision::ALL {
            match self.energy.bmpe_cycle_pj.get(&p) {
                Some(&e) if e > 0 => {}
                _ => {
                    return Err(Error::config(
                        format!("energy.bmpe_cycle_pj.{p}"),
                        "needs a positive entry for every precision",
                    ))
                }
            }
        }
        let e = &self.energy;
        for (name, v) in [
            ("energy.vpu_op_pj", e.vpu_op_pj),
            ("energy.onchip_byte_pj", e.onchip_byte_pj),
            ("energy.dram_byte_pj", e.dram_byte_pj),
            ("energy.static_cycle_pj", e.static_cycle_pj),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// Power with every BMPE and the vector unit busy and SRAM streaming
    /// `vpu_ops_per_cycle * 2` bytes per cycle, excluding DRAM.
    pub fn full_utilization_power_w(&self) -> f64 {
        let e = &self.energy;
        let mpu = self.geometry.parallel_block_dots() * e.bmpe_cycle_pj[&Precision::Mxint8];
        let vpu = self.vpu_ops_per_cycle * e.vpu_op_pj;
        let sram = 2 * self.vpu_ops_per_cycle * e.onchip_byte_pj;
        (mpu + vpu + sram + e.static_cycle_pj) as f64 * 1e-12 * self.freq_hz
    }

    fn dram_cycles(&self, bytes: u64) -> u64 {
        (bytes as f64 * self.freq_hz / self.dram_bw_bytes_per_s).ceil() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Compute,
    Memory,
}

/// Cost of one layer at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub name: String,
    pub kind: LayerKind,
    pub level: usize,
    /// Tokens executed at MXINT2, MXINT4, MXINT8.
    pub precision_tokens: [u64; 3],
    /// BMPE cycles summed over all block products.
    pub slice_cycles: u64,
    pub mpu_cycles: u64,
    pub vpu_cycles: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub latency_cycles: u64,
    pub dram_bytes: u64,
    pub onchip_bytes: u64,
    pub energy_pj: u64,
    pub bound: Bound,
}

/// Sums over a set of layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub mpu_cycles: u64,
    pub vpu_cycles: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub latency_cycles: u64,
    pub dram_bytes: u64,
    pub onchip_bytes: u64,
    pub energy_pj: u64,
}

impl Totals {
    fn add_layer(&mut self, l: &LayerReport) {
        self.mpu_cycles += l.mpu_cycles;
        self.vpu_cycles += l.vpu_cycles;
        self.compute_cycles += l.compute_cycles;
        self.memory_cycles += l.memory_cycles;
        self.latency_cycles += l.latency_cycles;
        self.dram_bytes += l.dram_bytes;
        self.onchip_bytes += l.onchip_bytes;
        self.energy_pj += l.energy_pj;
    }

    fn add(&mut self, o: &Totals) {
        self.mpu_cycles += o.mpu_cycles;
        self.vpu_cycles += o.vpu_cycles;
        self.compute_cycles += o.compute_cycles;
        self.memory_cycles += o.memory_cycles;
        self.latency_cycles += o.latency_cycles;
        self.dram_bytes += o.dram_bytes;
        self.onchip_bytes += o.onchip_bytes;
        self.energy_pj += o.energy_pj;
    }

    fn of_layers(layers: &[LayerReport]) -> Totals {
        let mut t = Totals::default();
        layers.iter().for_each(|l| t.add_layer(l));
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestepReport {
    pub t: u32,
    pub phase: Option<Phase>,
    pub refined: bool,
    /// Tokens newly promoted from Stage 0 to Stage 1 at this timestep, all levels.
    pub promoted_tokens: u64,
    pub totals: Totals,
    /// The uniform-MXINT8 run at the same timestep.
    pub baseline: Totals,
    pub layers: Vec<LayerReport>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelHistogram {
    pub level: usize,
    pub grid: [usize; 2],
    pub mask_ratio: String,
    /// Tokens per stage (Stage 0 first) before any refinement.
    pub initial: [u64; 4],
    /// Tokens per stage after the last timestep.
    #[serde(rename = "final")]
    pub final_: [u64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub latency_s: f64,
    pub energy_j: f64,
    pub baseline_latency_s: f64,
    pub baseline_energy_j: f64,
    /// Baseline latency over this run's latency.
    pub speedup_vs_mxint8: f64,
    /// Baseline matrix-unit cycles over this run's matrix-unit cycles.
    pub compute_speedup_vs_mxint8: f64,
    /// Baseline energy over this run's energy.
    pub energy_gain_vs_mxint8: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: String,
    pub policy: Policy,
    pub hardware: HardwareConfig,
    /// Absent for the uniform-MXINT8 baseline.
    pub schedule: Option<PrecisionSchedule>,
    pub seed: u64,
    pub semantic_threshold: f64,
    pub levels: Vec<LevelHistogram>,
    pub totals: Totals,
    pub baseline_totals: Totals,
    pub summary: Summary,
    pub timesteps: Vec<TimestepReport>,
}

pub const REPORT_SCHEMA: &str = "mxsim-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Stagewise,
    UniformMxint8,
}

/// Options of a stage-wise run beyond the hardware and schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Mean attention onto masked tokens above which a Stage 0 token is promoted.
    pub semantic_threshold: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            semantic_threshold: 0.02,
        }
    }
}

/// Costs one layer given the precision of each of its tokens (ignored for
/// vector-unit layers).
pub fn account_layer(layer: &LayerInstance, precisions: &[Precision], hw: &HardwareConfig) -> Result<LayerReport> {
    let mut counts = [0u64; 3];
    if layer.kind.is_matrix() {
        if precisions.len() != layer.tokens {
            return Err(Error::Shape(format!(
                "layer {} has {} tokens but {} precisions",
                layer.name,
                layer.tokens,
                precisions.len()
            )));
        }
        for p in precisions {
            counts[precision_slot(*p)] += 1;
        }
    }

    let e = &hw.energy;
    let (slice_cycles, mpu_cycles, vpu_cycles, mpu_energy, vpu_energy, act_bytes, operand_bytes, out_bytes);
    if layer.kind.is_matrix() {
        let per_token = layer.block_dots_per_token();
        let in_blocks = mx::block_count(layer.reduction_input()) as u64;
        let mut sc = 0;
        let mut energy = 0;
        let mut abytes = 0;
        for p in Precision::ALL {
            let n = counts[precision_slot(p)];
            let cycles = n * per_token * p.slices() as u64;
            sc += cycles;
            energy += cycles * e.bmpe_cycle_pj[&p];
            abytes += n * in_blocks * p.block_bytes();
        }
        slice_cycles = sc;
        mpu_cycles = sc.div_ceil(hw.geometry.parallel_block_dots());
        vpu_cycles = 0;
        mpu_energy = energy;
        vpu_energy = 0;
        act_bytes = abytes;
        operand_bytes = layer.operand_blocks() * Precision::Mxint8.block_bytes();
        out_bytes = layer.tokens as u64 * layer.outputs_per_token as u64 * 2;
    } else {
        let ops = layer.vector_ops();
        slice_cycles = 0;
        mpu_cycles = 0;
        vpu_cycles = ops.div_ceil(hw.vpu_ops_per_cycle);
        mpu_energy = 0;
        vpu_energy = ops * e.vpu_op_pj;
        act_bytes = layer.tokens as u64 * layer.out_channels as u64 * 2;
        operand_bytes = 0;
        out_bytes = act_bytes;
    }

    let onchip_bytes = act_bytes + operand_bytes + out_bytes;
    let spills = onchip_bytes > hw.onchip_bytes;
    let mut dram_bytes = if layer.has_weights { operand_bytes } else { 0 };
    if spills {
        dram_bytes += act_bytes + out_bytes;
        if !layer.has_weights {
            dram_bytes += operand_bytes;
        }
    }

    let compute_cycles = mpu_cycles + vpu_cycles;
    let memory_cycles = hw.dram_cycles(dram_bytes);
    let latency_cycles = compute_cycles.max(memory_cycles);
    let energy_pj = mpu_energy
        + vpu_energy
        + onchip_bytes * e.onchip_byte_pj
        + dram_bytes * e.dram_byte_pj
        + latency_cycles * e.static_cycle_pj;

    Ok(LayerReport {
        name: layer.name.clone(),
        kind: layer.kind,
        level: layer.level,
        precision_tokens: counts,
        slice_cycles,
        mpu_cycles,
        vpu_cycles,
        compute_cycles,
        memory_cycles,
        latency_cycles,
        dram_bytes,
        onchip_bytes,
        energy_pj,
        bound: if compute_cycles >= memory_cycles { Bound::Compute } else { Bound::Memory },
    })
}

fn precision_slot(p: Precision) -> usize {
    match p {
        Precision::Mxint2 => 0,
        Precision::Mxint4 => 1,
        Precision::Mxint8 => 2,
    }
}

impl LayerInstance {
    /// Activation elements read per token (a 3x3 convolution reads each
    /// input channel once and reuses it across the window on chip).
    fn reduction_input(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => self.in_channels,
            _ => self.reduction,
        }
    }

    /// MXINT8 blocks of the second operand: weights, keys, or transposed
    /// values, one block row of `reduction` per output.
    fn operand_blocks(&self) -> u64 {
        self.outputs_per_token as u64 * mx::block_count(self.reduction) as u64
    }
}

/// Costs `layer` at `timestep` with token precisions resolved from `map`.
pub fn simulate_layer(
    layer: &LayerInstance,
    map: &StageMap,
    schedule: &PrecisionSchedule,
    timestep: u32,
    hw: &HardwareConfig,
) -> Result<LayerReport> {
    let precisions = schedule.token_precisions(map, timestep)?;
    account_layer(layer, &precisions, hw)
}

/// Layers whose inputs feed the refinement attention probabilities.
fn feeds_refinement(layer: &LayerInstance) -> bool {
    matches!(
        layer.attention_role,
        Some(AttentionRole::Query) | Some(AttentionRole::Key) | Some(AttentionRole::Score)
    )
}

fn validate_run(graph: &LayerGraph, schedule: &PrecisionSchedule, hw: &HardwareConfig) -> Result<()> {
    graph.validate()?;
    schedule.validate()?;
    hw.validate()?;
    if schedule.total_steps != graph.timesteps {
        return Err(Error::config(
            "schedule.total_steps",
            format!(
                "schedule has {} steps but the graph runs {} timesteps",
                schedule.total_steps, graph.timesteps
            ),
        ));
    }
    Ok(())
}

/// Uniform-MXINT8 run of the same graph with no mask machinery.
pub fn baseline_run(graph: &LayerGraph, hw: &HardwareConfig) -> Result<SimReport> {
    graph.validate()?;
    hw.validate()?;
    let layers = graph.layers();
    let mut steps = Vec::with_capacity(graph.timesteps as usize);
    for t in 0..graph.timesteps {
        let reports = layers
            .iter()
            .map(|l| account_layer(l, &vec![Precision::Mxint8; l.tokens], hw))
            .collect::<Result<Vec<_>>>()?;
        let totals = Totals::of_layers(&reports);
        steps.push(TimestepReport {
            t,
            phase: None,
            refined: false,
            promoted_tokens: 0,
            totals,
            baseline: totals,
            layers: reports,
        });
    }
    let levels = graph
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let n = l.tokens() as u64;
            LevelHistogram {
                level: i,
                grid: l.grid,
                mask_ratio: "n/a".into(),
                initial: [0, 0, 0, n],
                final_: [0, 0, 0, n],
            }
        })
        .collect();
    Ok(assemble(Policy::UniformMxint8, hw, None, graph.seed, f64::NAN, levels, steps))
}

fn assemble(
    policy: Policy,
    hw: &HardwareConfig,
    schedule: Option<PrecisionSchedule>,
    seed: u64,
    threshold: f64,
    levels: Vec<LevelHistogram>,
    steps: Vec<TimestepReport>,
) -> SimReport {
    let mut totals = Totals::default();
    steps.iter().for_each(|s| totals.add(&s.totals));
    let mut baseline = Totals::default();
    steps.iter().for_each(|s| baseline.add(&s.baseline));
    let secs = |cycles: u64| cycles as f64 / hw.freq_hz;
    let summary = Summary {
        latency_s: secs(totals.latency_cycles),
        energy_j: totals.energy_pj as f64 * 1e-12,
        baseline_latency_s: secs(baseline.latency_cycles),
        baseline_energy_j: baseline.energy_pj as f64 * 1e-12,
        speedup_vs_mxint8: ratio(baseline.latency_cycles, totals.latency_cycles),
        compute_speedup_vs_mxint8: ratio(baseline.mpu_cycles, totals.mpu_cycles),
        energy_gain_vs_mxint8: ratio(baseline.energy_pj, totals.energy_pj),
    };
    SimReport {
        schema: REPORT_SCHEMA.into(),
        policy,
        hardware: hw.clone(),
        schedule,
        seed,
        semantic_threshold: if threshold.is_nan() { 0.0 } else { threshold },
        levels,
        totals,
        baseline_totals: baseline,
        summary,
        timesteps: steps,
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Promotion mask of the final attention level, carried to every level.
fn refinement_masks(
    graph: &LayerGraph,
    maps: &[StageMap],
    mains: &[BinaryMask],
    synth: &SynthTensors,
    level: usize,
    timestep: u32,
    threshold: f64,
) -> Result<Vec<BinaryMask>> {
    let map = &maps[level];
    let precisions: Vec<Precision> = map.stages().iter().map(|&s| ops::refinement_precision(s)).collect();
    let (q, k) = synth.attention_qk(graph, level, timestep);
    let q = q.fake_quantize(&precisions)?;
    let k = k.fake_quantize(&precisions)?;
    let promote = if map.stages().iter().all(|&s| s == Stage::S0) {
        BinaryMask::new(map.height(), map.width())?
    } else {
        let attn = ops::attention_probs(&q, &k, map.stages())?;
        ops::semantic_scores(&attn, &mains[level], threshold)?
    };

    let mut out = vec![promote.clone(); maps.len()];
    for i in (0..level).rev() {
        out[i] = mask::upsample(&out[i + 1], maps[i].height(), maps[i].width())?;
    }
    for i in level + 1..maps.len() {
        out[i] = mask::downsample(&out[i - 1]);
    }
    Ok(out)
}

/// Full stage-wise run plus the uniform-MXINT8 baseline it is compared to.
pub fn simulate_run(
    graph: &LayerGraph,
    main: &BinaryMask,
    schedule: &PrecisionSchedule,
    hw: &HardwareConfig,
    options: &RunOptions,
) -> Result<SimReport> {
    validate_run(graph, schedule, hw)?;
    if !(options.semantic_threshold > 0.0 && options.semantic_threshold <= 1.0) {
        return Err(Error::config("semantic_threshold", "must lie in (0, 1]"));
    }
    let mains = workload::level_masks(graph, main)?;
    let mut maps = workload::propagate_masks(graph, main)?;
    let initial: Vec<[usize; 4]> = maps.iter().map(StageMap::histogram).collect();
    let layers = graph.layers();
    let synth = SynthTensors::new(graph.seed);
    let refine_level = graph.final_attention_level().filter(|_| graph.semantic_refinement);
    let baseline = baseline_run(graph, hw)?;

    let mut steps = Vec::with_capacity(graph.timesteps as usize);
    for t in 0..schedule.total_steps {
        let refined = refine_level.is_some() && schedule.refinement_due(t)?;
        let mut promoted = 0u64;
        if let (true, Some(level)) = (refined, refine_level) {
            let promote = refinement_masks(graph, &maps, &mains, &synth, level, t, options.semantic_threshold)?;
            for (map, p) in maps.iter_mut().zip(&promote) {
                let before = map.histogram()[Stage::S0.index()];
                *map = mask::update_semantic(map, p)?;
                promoted += (before - map.histogram()[Stage::S0.index()]) as u64;
            }
        }

        let table = schedule.table_at(t)?;
        let level_precisions: Vec<Vec<Precision>> = maps
            .iter()
            .map(|m| m.stages().iter().map(|s| table[s.index()]).collect())
            .collect();
        let reports = layers
            .iter()
            .map(|l| {
                let base = &level_precisions[l.level];
                if refined && Some(l.level) == refine_level && feeds_refinement(l) && is_final_block(l, &layers) {
                    let widened: Vec<Precision> = base
                        .iter()
                        .zip(maps[l.level].stages())
                        .map(|(&p, &s)| p.max(ops::refinement_precision(s)))
                        .collect();
                    account_layer(l, &widened, hw)
                } else {
                    account_layer(l, base, hw)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let totals = Totals::of_layers(&reports);
        steps.push(TimestepReport {
            t,
            phase: Some(schedule.phase_at(t)?),
            refined,
            promoted_tokens: promoted,
            totals,
            baseline: baseline.timesteps[t as usize].totals,
            layers: reports,
        });
    }

    let levels = graph
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| LevelHistogram {
            level: i,
            grid: l.grid,
            mask_ratio: format!("{:.4}", mains[i].ratio()),
            initial: initial[i].map(|v| v as u64),
            final_: maps[i].histogram().map(|v| v as u64),
        })
        .collect();
    Ok(assemble(
        Policy::Stagewise,
        hw,
        Some(schedule.clone()),
        graph.seed,
        options.semantic_threshold,
        levels,
        steps,
    ))
}

/// True for layers of the last attention block in execution order.
fn is_final_block(layer: &LayerInstance, layers: &[LayerInstance]) -> bool {
    let Some(last_score) = layers
        .iter()
        .rev()
        .find(|l| l.attention_role == Some(AttentionRole::Score))
    else {
        return false;
    };
    let prefix = last_score.name.trim_end_matches("score");
    layer.name.starts_with(prefix)
}

impl SimReport {
    /// Checks that every aggregate equals the sum of its parts and that no
    /// layer is slower than its uniform-MXINT8 counterpart would be.
    pub fn check_invariants(&self) -> Result<()> {
        let mut sum = Totals::default();
        let mut base = Totals::default();
        for s in &self.timesteps {
            let layer_sum = Totals::of_layers(&s.layers);
            if layer_sum != s.totals {
                return Err(Error::Invariant(format!("timestep {} totals differ from layer sum", s.t)));
            }
            if s.totals.latency_cycles > s.baseline.latency_cycles {
                return Err(Error::Invariant(format!(
                    "timestep {} latency {} exceeds baseline {}",
                    s.t, s.totals.latency_cycles, s.baseline.latency_cycles
                )));
            }
            sum.add(&s.totals);
            base.add(&s.baseline);
        }
        if sum != self.totals {
            return Err(Error::Invariant("run totals differ from timestep sum".into()));
        }
        if base != self.baseline_totals {
            return Err(Error::Invariant("baseline totals differ from timestep sum".into()));
        }
        if self.policy == Policy::Stagewise && self.summary.speedup_vs_mxint8 < 1.0 {
            return Err(Error::Invariant(format!(
                "speedup {} below 1",
                self.summary.speedup_vs_mxint8
            )));
        }
        Ok(())
    }

    /// Matrix-unit speedup over the timesteps of one phase.
    pub fn phase_compute_speedup(&self, phase: Phase) -> Option<f64> {
        let (b, r) = self
            .timesteps
            .iter()
            .filter(|s| s.phase == Some(phase))
            .fold((0, 0), |(b, r), s| (b + s.baseline.mpu_cycles, r + s.totals.mpu_cycles));
        (r > 0).then(|| b as f64 / r as f64)
    }
}
