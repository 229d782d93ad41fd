//! The `mxsim` command line.
//!
//! ```text
//! mxsim maskgen   --mask M --graph G --out DIR
//! mxsim quantcheck --seed S --precision P [--blocks N]
//! mxsim simulate  --graph G --mask M [--hw H] [--schedule S] [--seed S] --out F [--format json|csv]
//! mxsim report    --input F [--format json|csv] [--out F]
//! ```
//!
//! Exit status is 0 on success, 1 for unusable input (configuration, parse,
//! shape or I/O errors) and 2 when a simulator invariant fails.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use half::bf16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitserial;
use crate::error::{Error, Result};
use crate::mask::{load_mask, StageMapPacked};
use crate::mask::Stage;
use crate::mx::{self, Precision, BLOCK_SIZE};
use crate::schedule::PrecisionSchedule;
use crate::sim::{emit_report, simulate_run, HardwareConfig, ReportFormat, RunOptions, SimReport};
use crate::workload::{self, LayerGraph};

#[derive(Debug, Parser)]
#[command(name = "mxsim", version, about = "Stage-wise MXINT masked-diffusion accelerator simulator")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build per-level stage maps from a mask and a layer graph.
    Maskgen {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Directory receiving `level<i>.json` and `level<i>.stg2`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize random blocks and report the round-trip error.
    Quantcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        precision: Precision,
        #[arg(long, default_value_t = 10_000)]
        blocks: usize,
    },
    /// Run the stage-wise simulation and its MXINT8 baseline.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Hardware JSON; defaults to the edge configuration.
        #[arg(long)]
        hw: Option<PathBuf>,
        /// Schedule JSON; defaults to the 50-step schedule.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Overrides the graph's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.02)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Re-emit a JSON report, optionally as CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::new()
            .filter_level(log::LevelFilter::Info)
            .format_timestamp(None)
            .try_init();
    }
    let stdout = io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mxsim: {e}");
            exit_code(&e)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn load_graph(path: &Path) -> Result<LayerGraph> {
    LayerGraph::from_json(&read(path)?)
}

/// Runs one command, writing its human-readable summary to `out`.
pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    let stdout_err = |e: io::Error| Error::io("<stdout>", e);
    match command {
        Command::Maskgen { mask, graph, out: dir } => {
            let graph = load_graph(&graph)?;
            let main = load_mask(&mask)?;
            let maps = workload::propagate_masks(&graph, &main)?;
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (i, map) in maps.iter().enumerate() {
                let json = dir.join(format!("level{i}.json"));
                std::fs::write(&json, map.to_json()).map_err(|e| Error::io(&json, e))?;
                let packed = dir.join(format!("level{i}.stg2"));
                std::fs::write(&packed, map.to_packed()).map_err(|e| Error::io(&packed, e))?;
                let h = map.histogram();
                let n = map.len() as f64;
                writeln!(
                    out,
                    "level {i} {}x{}: S3 {:.4} S2 {:.4} S1 {:.4} S0 {:.4}",
                    map.height(),
                    map.width(),
                    h[Stage::S3.index()] as f64 / n,
                    h[Stage::S2.index()] as f64 / n,
                    h[Stage::S1.index()] as f64 / n,
                    h[Stage::S0.index()] as f64 / n,
                )
                .map_err(stdout_err)?;
            }
            Ok(())
        }
        Command::Quantcheck { seed, precision, blocks } => {
            let stats = quantcheck(seed, precision, blocks)?;
            writeln!(
                out,
                "{precision} blocks {blocks}: max_rel_err {:.6e} mean_abs_err {:.6e} bound_violations {} bitserial_mismatches {}",
                stats.max_rel_error, stats.mean_abs_error, stats.bound_violations, stats.bitserial_mismatches
            )
            .map_err(stdout_err)?;
            if stats.bound_violations > 0 || stats.bitserial_mismatches > 0 {
                return Err(Error::Invariant(format!(
                    "{} elements exceed the half-step error bound, {} bit-serial products differ from the integer dot",
                    stats.bound_violations, stats.bitserial_mismatches
                )));
            }
            Ok(())
        }
        Command::Simulate { graph, mask, hw, schedule, seed, threshold, out: path, format } => {
            let mut graph = load_graph(&graph)?;
            if let Some(seed) = seed {
                graph.seed = seed;
            }
            let main = load_mask(&mask)?;
            let hw = match hw {
                Some(p) => HardwareConfig::from_json(&read(&p)?)?,
                None => HardwareConfig::edge(),
            };
            let schedule = match schedule {
                Some(p) => PrecisionSchedule::from_json(&read(&p)?)?,
                None => PrecisionSchedule::default(),
            };
            log::info!("simulating {} layers x {} timesteps", graph.layers().len(), graph.timesteps);
            let report = simulate_run(&graph, &main, &schedule, &hw, &RunOptions { semantic_threshold: threshold })?;
            report.check_invariants()?;
            let mut w = create(&path)?;
            emit_report(&report, format, &mut w)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            let s = &report.summary;
            writeln!(
                out,
                "latency {:.6} s, energy {:.6} J, speedup vs MXINT8 {:.3}x (compute {:.3}x), energy gain {:.3}x",
                s.latency_s, s.energy_j, s.speedup_vs_mxint8, s.compute_speedup_vs_mxint8, s.energy_gain_vs_mxint8
            )
            .map_err(stdout_err)?;
            Ok(())
        }
        Command::Report { input, format, out: path } => {
            let report = SimReport::from_json(&read(&input)?)?;
            report.check_invariants()?;
            match path {
                Some(p) => {
                    let mut w = create(&p)?;
                    emit_report(&report, format, &mut w)?;
                    w.flush().map_err(|e| Error::io(&p, e))
                }
                None => emit_report(&report, format, out),
            }
        }
    }
}

/// Round-trip statistics over random blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantStats {
    /// Largest error relative to the block's max magnitude.
    pub max_rel_error: f64,
    pub mean_abs_error: f64,
    /// Elements whose error exceeds half a step of the block scale.
    pub bound_violations: usize,
    /// Blocks whose bit-serial product against a random MXINT8 weight block
    /// differs from the scaled integer dot product.
    pub bitserial_mismatches: usize,
}

/// Quantizes `blocks` random blocks with log-uniform magnitudes and checks
/// each element against the half-step bound `2^(shared_exp - 128)`, then
/// multiplies each block bit-serially with a random MXINT8 weight block.
pub fn quantcheck(seed: u64, precision: Precision, blocks: usize) -> Result<QuantStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    let mut sum_abs = 0.0;
    let mut violations = 0;
    let mut mismatches = 0;
    for _ in 0..blocks {
        let scale = 2f64.powi(rng.random_range(-20..=20));
        let values: Vec<f64> = (0..BLOCK_SIZE).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let block = mx::quantize_block(&values, precision)?;
        let decoded = mx::dequantize_block(&block);
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let half_step = block.scale() / 2.0;
        let hi = precision.max_element() as f64 * block.scale();
        for (v, d) in values.iter().zip(decoded.iter()) {
            let err = (v - d).abs();
            sum_abs += err;
            if max_abs > 0.0 {
                max_rel = max_rel.max(err / max_abs);
            }
            // Values above the top code saturate; their error is bounded by
            // the distance to it instead.
            let bound = if v.abs() > hi { v.abs() - hi + half_step } else { half_step };
            if err > bound {
                violations += 1;
            }
        }

        let weights: Vec<f64> = (0..BLOCK_SIZE).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let wgt = mx::quantize_block(&weights, Precision::Mxint8)?;
        let dot: i64 = block
            .elements()
            .iter()
            .zip(wgt.elements())
            .map(|(&a, &w)| a as i64 * w as i64)
            .sum();
        let expected = bf16::from_f64(dot as f64 * block.scale() * wgt.scale());
        if bitserial::block_dot(&block, &wgt)?.value != expected {
            mismatches += 1;
        }
    }
    Ok(QuantStats {
        max_rel_error: max_rel,
        mean_abs_error: if blocks == 0 { 0.0 } else { sum_abs / (blocks * BLOCK_SIZE) as f64 },
        bound_violations: violations,
        bitserial_mismatches: mismatches,
    })
}
