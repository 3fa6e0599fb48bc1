//! Multi-stage orchestration: each stage reads the artifacts of earlier
//! stages from the output directory, checks that they belong to the same
//! dataset, and writes tables (TSV) plus machine-readable state (JSON).

mod config;
mod output;
mod report;
pub mod selftest;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub use config::{BootstrapSection, PatchSection, Paths, RunConfig, StageToggles, WORDNET_ENV};
pub use output::{num, opt_num, read_json, write_json, RunLog, Table};
pub use stages::{
    DepthRow, PatchResults, PredictionState, ProbeState, ReversalState, SweepLayer, SweepRelation, SweepState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Dataset,
    Probe,
    Depth,
    Geometry,
    Reverse,
    Sweep,
    Patch,
    Robustness,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Dataset,
        Stage::Probe,
        Stage::Depth,
        Stage::Geometry,
        Stage::Reverse,
        Stage::Sweep,
        Stage::Patch,
        Stage::Robustness,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Dataset => "dataset",
            Stage::Probe => "probe",
            Stage::Depth => "depth",
            Stage::Geometry => "geometry",
            Stage::Reverse => "reverse",
            Stage::Sweep => "sweep",
            Stage::Patch => "patch",
            Stage::Robustness => "robustness",
            Stage::Report => "report",
        }
    }

    fn enabled(self, t: &StageToggles) -> bool {
        match self {
            Stage::Dataset => t.dataset,
            Stage::Probe => t.probe,
            Stage::Depth => t.depth,
            Stage::Geometry => t.geometry,
            Stage::Reverse => t.reverse,
            Stage::Sweep => t.sweep,
            Stage::Patch => t.patch,
            Stage::Robustness => t.robustness,
            Stage::Report => t.report,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage '{s}'")))
    }
}

/// A configured run rooted at `config.out_dir`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub hash: String,
    pub log: RunLog,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let log = RunLog::new(&config.out_dir, false);
        Ok(Self { config, hash, log })
    }

    /// Echo log lines to stderr as well as `run.log`.
    pub fn verbose(mut self) -> Self {
        self.log = RunLog::new(&self.config.out_dir, true);
        self
    }

    pub fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.config.out_dir.join(rel)
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        self.log.line(format!("[{stage}] start config_hash={}", self.hash))?;
        let result = match stage {
            Stage::Dataset => self.stage_dataset(),
            Stage::Probe => self.stage_probe(),
            Stage::Depth => self.stage_depth(),
            Stage::Geometry => self.stage_geometry(),
            Stage::Reverse => self.stage_reverse(),
            Stage::Sweep => self.stage_sweep(),
            Stage::Patch => self.stage_patch(),
            Stage::Robustness => self.stage_robustness(),
            Stage::Report => self.stage_report(),
        };
        match &result {
            Ok(()) => self.log.line(format!("[{stage}] done"))?,
            Err(e) => self.log.line(format!("[{stage}] failed: {e}"))?,
        }
        result
    }

    /// Every stage enabled in `config.stages`, in order.
    pub fn run_all(&self) -> Result<()> {
        for stage in Stage::ALL {
            if stage.enabled(&self.config.stages) {
                self.run(stage)?;
            } else {
                self.log.line(format!("[{stage}] skipped (disabled)"))?;
            }
        }
        Ok(())
    }
}
