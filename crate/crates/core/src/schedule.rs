//! Timestep-aware precision schedule.
//!
//! Denoising runs through three phases. Each phase maps the four stages to an
//! element precision; the defaults step the (Stage 3/2/1/0) precisions from
//! 8/8/4/2 to 8/4/4/2 to 8/4/2/2 at timesteps 9 and 18 of 50.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Stage, StageMap};
use crate::mx::{Precision, BLOCK_SIZE};

use Precision::{Mxint2 as P2, Mxint4 as P4, Mxint8 as P8};

/// Stage to precision table, indexed by stage number (Stage 0 first).
pub type PhaseTable = [Precision; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecisionSchedule {
    pub total_steps: u32,
    /// First timestep of phase B and of phase C.
    pub downgrade_points: [u32; 2],
    pub phase_tables: [PhaseTable; 3],
    /// Timesteps between semantic refinements.
    pub refine_interval: u32,
}

impl Default for PrecisionSchedule {
    fn default() -> Self {
        PrecisionSchedule {
            total_steps: 50,
            downgrade_points: [9, 18],
            phase_tables: [[P2, P4, P8, P8], [P2, P4, P4, P8], [P2, P2, P4, P8]],
            refine_interval: 5,
        }
    }
}

impl PrecisionSchedule {
    /// Parses a schedule document; absent fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: PrecisionSchedule =
            serde_json::from_str(text).map_err(|e| Error::config("<schedule>", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Checks the schedule invariants.
    pub fn validate(&self) -> Result<()> {
        let [d0, d1] = self.downgrade_points;
        if self.total_steps == 0 {
            return Err(Error::config("schedule.total_steps", "must be positive"));
        }
        if !(0 < d0 && d0 < d1 && d1 < self.total_steps) {
            return Err(Error::config(
                "schedule.downgrade_points",
                format!("need 0 < {d0} < {d1} < total_steps {}", self.total_steps),
            ));
        }
        if self.refine_interval == 0 {
            return Err(Error::config("schedule.refine_interval", "must be positive"));
        }
        for (p, table) in self.phase_tables.iter().enumerate() {
            if table[Stage::S3.index()] != P8 {
                return Err(Error::config(
                    format!("schedule.phase_tables[{p}][3]"),
                    "Stage 3 must stay MXINT8",
                ));
            }
            if table.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::config(
                    format!("schedule.phase_tables[{p}]"),
                    "precision must not decrease with stage",
                ));
            }
        }
        for p in 1..3 {
            for s in 0..4 {
                if self.phase_tables[p][s] > self.phase_tables[p - 1][s] {
                    return Err(Error::config(
                        format!("schedule.phase_tables[{p}][{s}]"),
                        "precision must not increase in later phases",
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_timestep(&self, timestep: u32) -> Result<()> {
        if timestep >= self.total_steps {
            return Err(Error::Range {
                what: "timestep",
                value: timestep as i64,
                range: format!("0..{}", self.total_steps),
            });
        }
        Ok(())
    }

    pub fn phase_at(&self, timestep: u32) -> Result<Phase> {
        self.check_timestep(timestep)?;
        let [d0, d1] = self.downgrade_points;
        Ok(if timestep < d0 {
            Phase::A
        } else if timestep < d1 {
            Phase::B
        } else {
            Phase::C
        })
    }

    pub fn table_at(&self, timestep: u32) -> Result<&PhaseTable> {
        Ok(&self.phase_tables[self.phase_at(timestep)?.index()])
    }

    pub fn precision_at(&self, timestep: u32, stage: Stage) -> Result<Precision> {
        Ok(self.table_at(timestep)?[stage.index()])
    }

    /// Refinement runs at every positive multiple of the interval; timestep 0
    /// has no attention statistics yet.
    pub fn refinement_due(&self, timestep: u32) -> Result<bool> {
        self.check_timestep(timestep)?;
        Ok(timestep > 0 && timestep % self.refine_interval == 0)
    }

    /// Precision of every token of `map` at `timestep`, row-major.
    pub fn token_precisions(&self, map: &StageMap, timestep: u32) -> Result<Vec<Precision>> {
        let table = self.table_at(timestep)?;
        Ok(map.stages().iter().map(|s| table[s.index()]).collect())
    }

    /// One precision per 32-token row-major block: the widest precision any
    /// member token is entitled to. A trailing partial block only holds real
    /// tokens, which is what padding with the nearest token's stage amounts to.
    pub fn precision_map_for_tensor(&self, map: &StageMap, timestep: u32) -> Result<Vec<Precision>> {
        Ok(self
            .token_precisions(map, timestep)?
            .chunks(BLOCK_SIZE)
            .map(|c| *c.iter().max().expect("chunks are non-empty"))
            .collect())
    }
}
