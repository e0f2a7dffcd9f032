//! Run report and plan file schemas.

use std::fs;
use std::path::Path;

use boustro_core::moce::{MoceConfig, RunSummary};
use boustro_core::objective::{evaluate, posterior_update, EffortMatrix, PathPlan};
use boustro_core::pareto::ArchiveEntry;
use boustro_core::Scenario;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical scenario JSON.
pub fn scenario_digest(scenario: &Scenario) -> String {
    hex::encode(Sha256::digest(scenario.to_json().as_bytes()))
}

/// Trackline time plus the vertical legs between selected lines at `v_max`.
/// Informational only: the optimizer never sees the vertical legs.
pub fn wall_clock(scenario: &Scenario, plan: &PathPlan, duration: f64) -> f64 {
    let ys = scenario.tracklines().iter().zip(&plan.counts).filter(|(_, &c)| c > 0).map(|(t, _)| t.y);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    if hi < lo {
        return duration;
    }
    duration + (hi - lo) / scenario.limits().v_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: usize,
    pub p_nd: f64,
    /// Trackline time only, seconds.
    pub duration_s: f64,
    /// Including vertical legs at v_max; not optimized.
    pub wall_clock_s: f64,
    pub plan: PathPlan,
    pub posteriors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_s: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub discarded: usize,
    pub stagnated: bool,
}

impl From<&RunSummary> for Timing {
    fn from(s: &RunSummary) -> Self {
        Self {
            elapsed_s: s.elapsed.as_secs_f64(),
            generations: s.generations,
            evaluations: s.evaluations,
            discarded: s.discarded,
            stagnated: s.stagnated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub version: u32,
    pub tool_version: String,
    pub scenario_digest: String,
    /// The scenario file object, verbatim.
    pub scenario: serde_json::Value,
    pub config: MoceConfig,
    pub entries: Vec<ReportEntry>,
    pub timing: Timing,
}

impl RunReport {
    pub fn build(
        scenario: &Scenario,
        config: &MoceConfig,
        front: &[ArchiveEntry<PathPlan>],
        summary: &RunSummary,
    ) -> Self {
        let em = EffortMatrix::build(scenario);
        let priors = scenario.priors();
        let tau = scenario.limits().tau;
        let entries = front
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let eval = evaluate(&e.payload, &em, &priors, tau);
                ReportEntry {
                    id,
                    p_nd: e.objectives.p_nd,
                    duration_s: e.objectives.duration,
                    wall_clock_s: wall_clock(scenario, &e.payload, e.objectives.duration),
                    plan: e.payload.clone(),
                    posteriors: posterior_update(&priors, &eval),
                }
            })
            .collect();
        Self {
            version: REPORT_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_digest: scenario_digest(scenario),
            scenario: serde_json::from_str(&scenario.to_json()).expect("scenario json"),
            config: config.clone(),
            entries,
            timing: summary.into(),
        }
    }

    /// Rebuilds the embedded scenario and checks it against the digest.
    pub fn scenario(&self) -> Result<Scenario> {
        let scenario = Scenario::from_json(&self.scenario.to_string())?;
        let digest = scenario_digest(&scenario);
        if digest != self.scenario_digest {
            return Err(CliError::Input(format!(
                "report scenario digest mismatch: stored {}, computed {digest}",
                self.scenario_digest
            )));
        }
        Ok(scenario)
    }
}

/// One exported front plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub id: usize,
    pub scenario_digest: String,
    pub p_nd: f64,
    pub duration_s: f64,
    pub plan: PathPlan,
}

impl From<(&ReportEntry, &str)> for PlanFile {
    fn from((e, digest): (&ReportEntry, &str)) -> Self {
        Self {
            id: e.id,
            scenario_digest: digest.to_string(),
            p_nd: e.p_nd,
            duration_s: e.duration_s,
            plan: e.plan.clone(),
        }
    }
}

/// What `evaluate` accepts: an exported plan file or a bare plan.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PlanInput {
    Exported(PlanFile),
    Bare(PathPlan),
}

impl PlanInput {
    pub fn plan(&self) -> &PathPlan {
        match self {
            PlanInput::Exported(f) => &f.plan,
            PlanInput::Bare(p) => p,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{what} {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
