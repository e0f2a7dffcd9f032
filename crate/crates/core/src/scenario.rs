//! The a priori leak map: leak sources with spill polygons and priors, AUV
//! limits, candidate tracklines, a seeded random generator and the on-disk
//! format.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Bounds, ConvexPolygon, Point2, Trackline};
use crate::rng;
use crate::units::{hours_to_seconds, knots_to_mps};

/// Version written into every scenario file.
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario generation failed: {0}")]
    GenerationFailure(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), message: message.into() }
    }

    /// The offending field of a [`ScenarioError::Validation`].
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakSource {
    pub id: u32,
    pub origin: Point2,
    pub spill: ConvexPolygon,
    pub prior: f64,
}

/// Vehicle and sensor limits, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuvLimits {
    /// m/s
    pub v_min: f64,
    /// m/s
    pub v_max: f64,
    /// Mission time budget, seconds.
    pub t_max: f64,
    /// Maximum number of traversals of a single trackline.
    pub z_max: u32,
    /// Sensor characteristic time, seconds.
    pub tau: f64,
}

impl AuvLimits {
    /// 2 to 5 knots, 10 h autonomy, one traversal per line, 200 s sensor.
    pub fn reference() -> Self {
        Self {
            v_min: knots_to_mps(2.0),
            v_max: knots_to_mps(5.0),
            t_max: hours_to_seconds(10.0),
            z_max: 1,
            tau: 200.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return Err(ScenarioError::invalid("v_min", format!("must be > 0, got {}", self.v_min)));
        }
        if !(self.v_max.is_finite() && self.v_max >= self.v_min) {
            return Err(ScenarioError::invalid(
                "v_max",
                format!("must be >= v_min ({}), got {}", self.v_min, self.v_max),
            ));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(ScenarioError::invalid("t_max", format!("must be > 0, got {}", self.t_max)));
        }
        if self.z_max < 1 {
            return Err(ScenarioError::invalid("z_max", "must be >= 1"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ScenarioError::invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn mu_min(&self) -> f64 {
        1.0 / self.v_max
    }

    pub fn mu_max(&self) -> f64 {
        1.0 / self.v_min
    }
}

/// A validated leak map plus everything the planner needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    area: Bounds,
    sources: Vec<LeakSource>,
    tracklines: Vec<Trackline>,
    limits: AuvLimits,
    rng_seed: u64,
}

impl Scenario {
    /// Validates all invariants. When `tracklines` is `None` the candidate
    /// set is generated from the spill extrema.
    pub fn new(
        area: Bounds,
        sources: Vec<LeakSource>,
        tracklines: Option<Vec<Trackline>>,
        limits: AuvLimits,
        rng_seed: u64,
    ) -> Result<Self, ScenarioError> {
        if !area.is_valid() {
            return Err(ScenarioError::invalid("area", "bounds must be finite with positive extent"));
        }
        limits.validate()?;

        let mut ids = HashSet::new();
        for s in &sources {
            if !ids.insert(s.id) {
                return Err(ScenarioError::invalid("id", format!("duplicate source id {}", s.id)));
            }
            if !(s.prior > 0.0 && s.prior <= 1.0) {
                return Err(ScenarioError::invalid(
                    "prior",
                    format!("source {} prior must lie in (0, 1], got {}", s.id, s.prior),
                ));
            }
            if !s.spill.contains(s.origin) {
                return Err(ScenarioError::invalid(
                    "origin",
                    format!("source {} origin is outside its spill polygon", s.id),
                ));
            }
            if !s.spill.vertices().iter().all(|&p| area.contains(p)) {
                return Err(ScenarioError::invalid(
                    "spill",
                    format!("source {} spill polygon leaves the area bounds", s.id),
                ));
            }
        }

        let tracklines = match tracklines {
            Some(t) => t,
            None => {
                let polys: Vec<ConvexPolygon> = sources.iter().map(|s| s.spill.clone()).collect();
                geometry::generate_tracklines(&polys, &area)
            }
        };
        if tracklines.is_empty() {
            return Err(ScenarioError::invalid("tracklines", "at least one trackline is required"));
        }
        if let Some(bad) = tracklines.iter().position(|t| !t.is_valid()) {
            return Err(ScenarioError::invalid(
                "tracklines",
                format!("trackline {bad} needs finite x_start < x_end and length = x_end - x_start"),
            ));
        }
        if tracklines.windows(2).any(|w| w[1].y < w[0].y) {
            return Err(ScenarioError::invalid("tracklines", "tracklines must be sorted by y"));
        }

        Ok(Self { area, sources, tracklines, limits, rng_seed })
    }

    pub fn area(&self) -> &Bounds {
        &self.area
    }

    pub fn sources(&self) -> &[LeakSource] {
        &self.sources
    }

    pub fn tracklines(&self) -> &[Trackline] {
        &self.tracklines
    }

    pub fn limits(&self) -> &AuvLimits {
        &self.limits
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn priors(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.prior).collect()
    }

    pub fn total_prior(&self) -> f64 {
        self.sources.iter().map(|s| s.prior).sum()
    }

    /// Same scenario with a different vehicle envelope (e.g. a scaled budget).
    pub fn with_limits(&self, limits: AuvLimits) -> Result<Self, ScenarioError> {
        limits.validate()?;
        Ok(Self { limits, ..self.clone() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.version != SCENARIO_FORMAT_VERSION {
            return Err(ScenarioError::invalid(
                "version",
                format!("unsupported version {} (expected {SCENARIO_FORMAT_VERSION})", file.version),
            ));
        }
        Scenario::new(file.area, file.sources, file.tracklines, file.limits, file.rng_seed)
    }
}

/// On-disk layout. `tracklines` may be omitted and is then regenerated.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    area: Bounds,
    limits: AuvLimits,
    #[serde(default)]
    rng_seed: u64,
    sources: Vec<LeakSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tracklines: Option<Vec<Trackline>>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        Self {
            version: SCENARIO_FORMAT_VERSION,
            area: s.area,
            limits: s.limits,
            rng_seed: s.rng_seed,
            sources: s.sources.clone(),
            tracklines: Some(s.tracklines.clone()),
        }
    }
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    fs::write(path, scenario.to_json() + "\n")
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_json(&text)
}

/// `count` sources sharing one prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorTier {
    pub count: u32,
    pub prior: f64,
}

/// Parameters of the random leak-map generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub area: Bounds,
    pub tiers: Vec<PriorTier>,
    /// Semi-axis lengths are drawn uniformly from this range, meters.
    pub semi_axis_range: (f64, f64),
    pub ellipse_samples: usize,
    pub max_placement_retries: u32,
    pub limits: AuvLimits,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl GeneratorConfig {
    /// 10 km square, 42 x 0.05, 5 x 0.15 and 3 x 0.80 sources, reference limits.
    pub fn reference() -> Self {
        Self {
            area: Bounds::new(0.0, 10_000.0, 0.0, 10_000.0),
            tiers: vec![
                PriorTier { count: 42, prior: 0.05 },
                PriorTier { count: 5, prior: 0.15 },
                PriorTier { count: 3, prior: 0.80 },
            ],
            semi_axis_range: (300.0, 1200.0),
            ellipse_samples: 32,
            max_placement_retries: 1000,
            limits: AuvLimits::reference(),
        }
    }

    pub fn source_count(&self) -> usize {
        self.tiers.iter().map(|t| t.count as usize).sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.area.is_valid() {
            return Err(ScenarioError::invalid("area", "bounds must be finite with positive extent"));
        }
        for t in &self.tiers {
            if !(t.prior > 0.0 && t.prior <= 1.0) {
                return Err(ScenarioError::invalid(
                    "tiers.prior",
                    format!("must lie in (0, 1], got {}", t.prior),
                ));
            }
        }
        let (lo, hi) = self.semi_axis_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(ScenarioError::invalid(
                "semi_axis_range",
                format!("need 0 < min <= max, got ({lo}, {hi})"),
            ));
        }
        if self.ellipse_samples < 3 {
            return Err(ScenarioError::invalid("ellipse_samples", "must be >= 3"));
        }
        self.limits.validate()
    }
}

/// Draws a leak map: each source is the convex hull of a random ellipse
/// (uniform center, semi-axes and rotation), resampled until it lies fully
/// inside the area. Priors follow the configured tiers in order.
pub fn generate_random_scenario(config: &GeneratorConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    if config.source_count() == 0 {
        return Err(ScenarioError::GenerationFailure(
            "no sources requested, candidate trackline set would be empty".into(),
        ));
    }

    let mut rng = rng::stream(seed, &[0x5CE7_A210]);
    let area = config.area;
    let (axis_lo, axis_hi) = config.semi_axis_range;
    let mut sources = Vec::with_capacity(config.source_count());

    for prior in config.tiers.iter().flat_map(|t| std::iter::repeat_n(t.prior, t.count as usize)) {
        let id = sources.len() as u32;
        let mut placed = None;
        for _ in 0..config.max_placement_retries.max(1) {
            let center = Point2::new(
                rng.random_range(area.x_min..=area.x_max),
                rng.random_range(area.y_min..=area.y_max),
            );
            let a = rng.random_range(axis_lo..=axis_hi);
            let b = rng.random_range(axis_lo..=axis_hi);
            let rotation = rng.random_range(0.0..std::f64::consts::PI);
            let pts = geometry::ellipse_points(center, a, b, rotation, config.ellipse_samples);
            if !pts.iter().all(|&p| area.contains(p)) {
                continue;
            }
            if let Ok(spill) = geometry::convex_hull(&pts) {
                placed = Some(LeakSource { id, origin: center, spill, prior });
                break;
            }
        }
        match placed {
            Some(s) => sources.push(s),
            None => {
                return Err(ScenarioError::GenerationFailure(format!(
                    "could not place source {id} inside the area after {} attempts",
                    config.max_placement_retries
                )))
            }
        }
    }

    Scenario::new(area, sources, None, config.limits, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            tiers: vec![PriorTier { count: 4, prior: 0.3 }, PriorTier { count: 2, prior: 0.9 }],
            ..GeneratorConfig::reference()
        }
    }

    #[test]
    fn reference_scenario_has_fifty_sources_and_hundred_lines() {
        let s = generate_random_scenario(&GeneratorConfig::reference(), 1).unwrap();
        assert_eq!(s.sources().len(), 50);
        assert_eq!(s.tracklines().len(), 100);
        let tiers = [0.05, 0.15, 0.80];
        assert!(s.priors().iter().all(|p| tiers.contains(p)));
        assert_eq!(s.priors().iter().filter(|&&p| p == 0.80).count(), 3);
    }

    #[test]
    fn zero_sources_fail() {
        let cfg = GeneratorConfig { tiers: vec![], ..GeneratorConfig::reference() };
        assert!(matches!(generate_random_scenario(&cfg, 3), Err(ScenarioError::GenerationFailure(_))));
    }

    #[test]
    fn impossible_placement_fails() {
        let cfg = GeneratorConfig {
            area: Bounds::new(0.0, 100.0, 0.0, 100.0),
            max_placement_retries: 50,
            ..small_config()
        };
        assert!(matches!(generate_random_scenario(&cfg, 3), Err(ScenarioError::GenerationFailure(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_scenario(&small_config(), 99).unwrap();
        let b = generate_random_scenario(&small_config(), 99).unwrap();
        let c = generate_random_scenario(&small_config(), 100).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, c);
    }

    #[test]
    fn generated_spills_are_inside_the_area() {
        let s = generate_random_scenario(&GeneratorConfig::reference(), 5).unwrap();
        for src in s.sources() {
            assert!(src.spill.vertices().iter().all(|&p| s.area().contains(p)));
            assert!(src.spill.contains(src.origin));
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let s = generate_random_scenario(&GeneratorConfig::reference(), 11).unwrap();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_prior_names_the_field() {
        let s = generate_random_scenario(&small_config(), 2).unwrap();
        let text = s.to_json().replacen("\"prior\": 0.3", "\"prior\": 1.5", 1);
        let err = Scenario::from_json(&text).unwrap_err();
        assert_eq!(err.field(), Some("prior"), "{err}");
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let s = generate_random_scenario(&small_config(), 2).unwrap();
        let text = s.to_json();
        let err = Scenario::from_json(&text[..text.len() / 2]).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line, .. } if line > 1), "{err}");
    }

    #[test]
    fn missing_tracklines_are_regenerated() {
        let s = generate_random_scenario(&small_config(), 4).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("tracklines");
        let back = Scenario::from_json(&v.to_string()).unwrap();
        assert_eq!(back.tracklines(), s.tracklines());
    }

    #[test]
    fn limits_validation() {
        let mut l = AuvLimits::reference();
        l.v_max = l.v_min / 2.0;
        assert!(matches!(l.validate(), Err(ScenarioError::Validation { ref field, .. }) if field == "v_max"));
        let l = AuvLimits { z_max: 0, ..AuvLimits::reference() };
        assert!(l.validate().is_err());
    }
}
