//! Report serialization.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::SimReport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Parse(format!("unknown report format `{other}` (json, csv)"))),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    t: u32,
    phase: String,
    refined: bool,
    promoted_tokens: u64,
    mpu_cycles: u64,
    vpu_cycles: u64,
    compute_cycles: u64,
    memory_cycles: u64,
    latency_cycles: u64,
    dram_bytes: u64,
    onchip_bytes: u64,
    energy_pj: u64,
    baseline_mpu_cycles: u64,
    baseline_latency_cycles: u64,
    baseline_energy_pj: u64,
}

/// Writes `report` as pretty JSON (full detail) or as one CSV row per
/// timestep. Output depends only on the report, so equal reports give
/// byte-identical files.
pub fn emit_report<W: Write>(report: &SimReport, format: ReportFormat, out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<report output>", e);
    match format {
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::Parse(e.to_string()))?;
            out.write_all(b"\n").map_err(io)?;
            out.flush().map_err(io)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for s in &report.timesteps {
                w.serialize(CsvRow {
                    t: s.t,
                    phase: s.phase.map_or_else(|| "-".to_string(), |p| format!("{p:?}")),
                    refined: s.refined,
                    promoted_tokens: s.promoted_tokens,
                    mpu_cycles: s.totals.mpu_cycles,
                    vpu_cycles: s.totals.vpu_cycles,
                    compute_cycles: s.totals.compute_cycles,
                    memory_cycles: s.totals.memory_cycles,
                    latency_cycles: s.totals.latency_cycles,
                    dram_bytes: s.totals.dram_bytes,
                    onchip_bytes: s.totals.onchip_bytes,
                    energy_pj: s.totals.energy_pj,
                    baseline_mpu_cycles: s.baseline.mpu_cycles,
                    baseline_latency_cycles: s.baseline.latency_cycles,
                    baseline_energy_pj: s.baseline.energy_pj,
                })
                .map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush().map_err(io)
        }
    }
}

impl SimReport {
    pub fn from_json(text: &str) -> Result<SimReport> {
        let report: SimReport =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("report JSON: {e}")))?;
        if report.schema != super::REPORT_SCHEMA {
            return Err(Error::Parse(format!(
                "report schema `{}` is not `{}`",
                report.schema,
                super::REPORT_SCHEMA
            )));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        emit_report(self, ReportFormat::Json, &mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}
