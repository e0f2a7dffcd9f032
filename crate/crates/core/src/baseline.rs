//! Reference planner: `k` evenly spaced full-width tracklines flown at one
//! constant speed, swept over `k` and the speed grid.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::geometry::{ConvexPolygon, Trackline};
use crate::objective::{evaluate, EffortMatrix, PathPlan};
use crate::pareto::{ObjectivePair, ParetoArchive};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub trackline_counts: Vec<usize>,
    /// m/s. Empty means `speed_steps` evenly spaced speeds from v_min to v_max.
    pub speed_grid: Vec<f64>,
    pub speed_steps: usize,
    pub auv_count: usize,
    /// Position of each line inside its band, as a fraction of band height.
    pub offset: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            trackline_counts: (1..=20).collect(),
            speed_grid: Vec::new(),
            speed_steps: 7,
            auv_count: 1,
            offset: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn speeds(&self, scenario: &Scenario) -> Vec<f64> {
        if !self.speed_grid.is_empty() {
            return self.speed_grid.clone();
        }
        let l = scenario.limits();
        let n = self.speed_steps.max(1);
        if n == 1 {
            return vec![l.v_max];
        }
        (0..n).map(|i| l.v_min + (l.v_max - l.v_min) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<(), String> {
        if self.trackline_counts.is_empty() || self.trackline_counts.contains(&0) {
            return Err("trackline_counts must be non-empty and >= 1".into());
        }
        if self.auv_count == 0 {
            return Err("auv_count must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.offset) {
            return Err(format!("offset must lie in [0, 1], got {}", self.offset));
        }
        let l = scenario.limits();
        if let Some(v) = self.speed_grid.iter().find(|&&v| !(v >= l.v_min && v <= l.v_max)) {
            return Err(format!("speed_grid value {v} outside [{}, {}] m/s", l.v_min, l.v_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub count: usize,
    /// m/s
    pub speed: f64,
    pub tracklines: Vec<Trackline>,
    pub plan: PathPlan,
    pub objectives: ObjectivePair,
}

/// `k` tracklines at `y_min + (i + offset) * H / k`, each flown once at `speed`.
pub fn regular_plan_with_offset(scenario: &Scenario, k: usize, speed: f64, offset: f64) -> BaselinePoint {
    assert!(k >= 1, "need at least one trackline");
    let area = scenario.area();
    let band = area.height() / k as f64;
    let tracklines: Vec<Trackline> =
        (0..k).map(|i| Trackline::spanning(area, area.y_min + (i as f64 + offset) * band)).collect();
    let spills: Vec<&ConvexPolygon> = scenario.sources().iter().map(|s| &s.spill).collect();
    let em = EffortMatrix::from_geometry(&spills, &tracklines);
    let plan = PathPlan { counts: vec![1; k], speeds: vec![speed; k] };
    let ev = evaluate(&plan, &em, &scenario.priors(), scenario.limits().tau);
    BaselinePoint { count: k, speed, tracklines, plan, objectives: ObjectivePair::new(ev.p_nd, ev.duration) }
}

pub fn regular_plan(scenario: &Scenario, k: usize, speed: f64) -> BaselinePoint {
    regular_plan_with_offset(scenario, k, speed, 0.5)
}

/// Every `(k, v)` combination, in `k`-major order.
pub fn sweep(scenario: &Scenario, config: &BaselineConfig, exec: Execution) -> Vec<BaselinePoint> {
    let speeds = config.speeds(scenario);
    let pairs: Vec<(usize, f64)> =
        config.trackline_counts.iter().flat_map(|&k| speeds.iter().map(move |&v| (k, v))).collect();
    exec.map_slice(&pairs, |&(k, v)| regular_plan_with_offset(scenario, k, v, config.offset))
}

/// Non-dominated subset of baseline points.
pub fn baseline_front(points: &[BaselinePoint]) -> ParetoArchive<BaselinePoint> {
    let mut front = ParetoArchive::new(usize::MAX);
    for p in points {
        front.insert(p.objectives, p.clone());
    }
    front
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Wall-clock seconds with the work shared by the fleet.
    pub elapsed: f64,
    pub p_nd: f64,
}

/// Splits each point's trackline time evenly over `n` vehicles. No
/// re-optimization: the plan is the one found for the pooled budget.
pub fn scale_for_auvs(points: impl IntoIterator<Item = ObjectivePair>, n: usize) -> Vec<CurvePoint> {
    assert!(n >= 1, "need at least one vehicle");
    points.into_iter().map(|o| CurvePoint { elapsed: o.duration / n as f64, p_nd: o.p_nd }).collect()
}
