//! Search-theoretic objectives of a boustrophedon plan.
//!
//! A plan traverses trackline `j` `δ_j` times at speed `v_j`. Source `i` is
//! credited the normalized dwell
//!
//! ```text
//! E_i = (1/τ) Σ_j (l_ij / v_j) δ_j
//! ```
//!
//! where `l_ij` is the chord of trackline `j` inside spill `i`. The
//! non-detection objective is the prior-weighted undetected mass
//! `Σ_i π_i exp(-E_i)` and the duration is `Σ_j (l_j / v_j) δ_j`. Vertical
//! connecting legs between tracklines are not part of either objective.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{clip_segment_length, ConvexPolygon, Trackline};
use crate::rng;
use crate::scenario::{AuvLimits, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan has {plan} tracklines but the scenario has {expected}")]
    SizeMismatch { plan: usize, expected: usize },
    #[error("trackline {index}: traversal count {count} exceeds z_max = {z_max}")]
    TooManyTraversals { index: usize, count: u32, z_max: u32 },
    #[error("trackline {index}: speed {speed} m/s outside [{v_min}, {v_max}]")]
    SpeedOutOfRange { index: usize, speed: f64, v_min: f64, v_max: f64 },
}

/// Traversal counts and speeds, one entry per candidate trackline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub counts: Vec<u32>,
    /// m/s; only meaningful where the count is positive.
    pub speeds: Vec<f64>,
}

impl PathPlan {
    /// Nothing traversed. Unused speeds are parked at `v_max`.
    pub fn empty(tracklines: usize, limits: &AuvLimits) -> Self {
        Self { counts: vec![0; tracklines], speeds: vec![limits.v_max; tracklines] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Builds a plan from inverse speeds (s/m).
    pub fn from_inverse_speeds(counts: Vec<u32>, mu: &[f64]) -> Self {
        let speeds = mu.iter().map(|m| 1.0 / m).collect();
        Self { counts, speeds }
    }

    pub fn inverse_speeds(&self) -> Vec<f64> {
        self.speeds.iter().map(|v| 1.0 / v).collect()
    }

    /// Checks the box constraints against `limits` for a scenario with
    /// `tracklines` candidates. Speeds get a relative slack of 1e-12 so that
    /// `1 / (1 / v_max)` round-off is accepted.
    pub fn validate(&self, tracklines: usize, limits: &AuvLimits) -> Result<(), PlanError> {
        if self.counts.len() != tracklines || self.speeds.len() != tracklines {
            return Err(PlanError::SizeMismatch {
                plan: self.counts.len().max(self.speeds.len()),
                expected: tracklines,
            });
        }
        let slack = 1e-12;
        for (index, (&count, &speed)) in self.counts.iter().zip(&self.speeds).enumerate() {
            if count > limits.z_max {
                return Err(PlanError::TooManyTraversals { index, count, z_max: limits.z_max });
            }
            if count > 0
                && !(speed.is_finite()
                    && speed >= limits.v_min * (1.0 - slack)
                    && speed <= limits.v_max * (1.0 + slack))
            {
                return Err(PlanError::SpeedOutOfRange {
                    index,
                    speed,
                    v_min: limits.v_min,
                    v_max: limits.v_max,
                });
            }
        }
        Ok(())
    }
}

/// Chord lengths `l_ij` (row per source, column per trackline) and trackline
/// lengths `l_j`. Built once per scenario and shared read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct EffortMatrix {
    sources: usize,
    tracklines: usize,
    chords: Vec<f64>,
    lengths: Vec<f64>,
}

impl EffortMatrix {
    pub fn build(scenario: &Scenario) -> Self {
        let spills: Vec<&ConvexPolygon> = scenario.sources().iter().map(|s| &s.spill).collect();
        Self::from_geometry(&spills, scenario.tracklines())
    }

    pub fn from_geometry(spills: &[&ConvexPolygon], tracklines: &[Trackline]) -> Self {
        let chords = spills
            .iter()
            .flat_map(|poly| {
                tracklines
                    .iter()
                    .map(move |t| clip_segment_length(poly, t.y, t.x_start, t.x_end).min(t.length))
            })
            .collect();
        Self {
            sources: spills.len(),
            tracklines: tracklines.len(),
            chords,
            lengths: tracklines.iter().map(|t| t.length).collect(),
        }
    }

    /// Direct construction, mainly for tests and synthetic instances.
    ///
    /// Panics if the shapes disagree or any chord is negative or longer than
    /// its trackline.
    pub fn from_parts(chords: Vec<Vec<f64>>, lengths: Vec<f64>) -> Self {
        let m = lengths.len();
        assert!(chords.iter().all(|row| row.len() == m), "ragged chord matrix");
        for row in &chords {
            for (j, &c) in row.iter().enumerate() {
                assert!(c >= 0.0 && c <= lengths[j], "chord {c} outside [0, {}]", lengths[j]);
            }
        }
        Self { sources: chords.len(), tracklines: m, chords: chords.into_iter().flatten().collect(), lengths }
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn tracklines(&self) -> usize {
        self.tracklines
    }

    pub fn chord(&self, source: usize, trackline: usize) -> f64 {
        self.chords[source * self.tracklines + trackline]
    }

    pub fn row(&self, source: usize) -> &[f64] {
        &self.chords[source * self.tracklines..(source + 1) * self.tracklines]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// True if some trackline has a positive chord through some spill.
    pub fn has_coverage(&self) -> bool {
        self.chords.iter().any(|&c| c > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub p_nd: f64,
    /// Seconds, vertical legs excluded.
    pub duration: f64,
    pub per_source_exponent: Vec<f64>,
}

/// Exponents `E_i` for inverse speeds `mu` (s/m).
pub fn effort_exponents(counts: &[u32], mu: &[f64], em: &EffortMatrix, tau: f64) -> Vec<f64> {
    (0..em.sources())
        .map(|i| {
            em.row(i)
                .iter()
                .zip(counts.iter().zip(mu))
                .filter(|(_, (&c, _))| c > 0)
                .map(|(&l, (&c, &m))| l * m * c as f64)
                .sum::<f64>()
                / tau
        })
        .collect()
}

pub fn evaluate(plan: &PathPlan, em: &EffortMatrix, priors: &[f64], tau: f64) -> PlanEvaluation {
    debug_assert_eq!(plan.len(), em.tracklines());
    debug_assert_eq!(priors.len(), em.sources());
    let mu = plan.inverse_speeds();
    let per_source_exponent = effort_exponents(&plan.counts, &mu, em, tau);
    let p_nd = priors.iter().zip(&per_source_exponent).map(|(p, e)| p * (-e).exp()).sum();
    let duration = em
        .lengths()
        .iter()
        .zip(plan.counts.iter().zip(&mu))
        .filter(|(_, (&c, _))| c > 0)
        .map(|(&l, (&c, &m))| l * m * c as f64)
        .sum();
    PlanEvaluation { p_nd, duration, per_source_exponent }
}

/// Non-detection objective and its gradient with respect to inverse speeds.
pub fn nondetection_gradient(
    counts: &[u32],
    mu: &[f64],
    em: &EffortMatrix,
    priors: &[f64],
    tau: f64,
) -> (f64, Vec<f64>) {
    let exps = effort_exponents(counts, mu, em, tau);
    let mut grad = vec![0.0; em.tracklines()];
    let mut value = 0.0;
    for (i, (&p, &e)) in priors.iter().zip(&exps).enumerate() {
        let w = p * (-e).exp();
        value += w;
        for (j, &l) in em.row(i).iter().enumerate() {
            if counts[j] > 0 {
                grad[j] -= w * l * counts[j] as f64 / tau;
            }
        }
    }
    (value, grad)
}

/// Discounts each prior by its non-detection factor `exp(-E_i)`.
///
/// The result is not renormalized: it is the probability mass that source
/// `i` leaks and was missed, which is what a follow-up search should target.
pub fn posterior_update(priors: &[f64], eval: &PlanEvaluation) -> Vec<f64> {
    priors.iter().zip(&eval.per_source_exponent).map(|(p, e)| p * (-e).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl MonteCarloEstimate {
    /// Standardized distance from an analytic value.
    pub fn z_score(&self, analytic: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.estimate - analytic) / self.std_error
        } else if self.estimate == analytic {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

const MC_CHUNK: u64 = 1 << 14;

/// Simulates leaks and the exponential detection law directly.
///
/// Each sample draws, per source, whether it leaks (probability `π_i`) and,
/// if so, whether the sensor detects it given its dwell `Δt_i` inside the
/// spill (probability `1 - exp(-Δt_i/τ)`). The sample value is the number of
/// leaking sources that go undetected, whose expectation is the
/// non-detection objective. Dwell times are recomputed from the geometry,
/// independent of [`EffortMatrix`].
pub fn monte_carlo_nondetection(
    plan: &PathPlan,
    scenario: &Scenario,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> MonteCarloEstimate {
    let samples = samples.max(1);
    let tau = scenario.limits().tau;
    let detect: Vec<(f64, f64)> = scenario
        .sources()
        .iter()
        .map(|src| {
            let dwell: f64 = scenario
                .tracklines()
                .iter()
                .zip(plan.counts.iter().zip(&plan.speeds))
                .filter(|(_, (&c, _))| c > 0)
                .map(|(t, (&c, &v))| c as f64 * clip_segment_length(&src.spill, t.y, t.x_start, t.x_end) / v)
                .sum();
            (src.prior, 1.0 - (-dwell / tau).exp())
        })
        .collect();

    let chunks = samples.div_ceil(MC_CHUNK);
    let partial = exec.map_indexed(chunks as usize, |c| {
        let mut rng = rng::stream(seed, &[0x4D43, c as u64]);
        let n = MC_CHUNK.min(samples - c as u64 * MC_CHUNK);
        let (mut sum, mut sum_sq) = (0.0_f64, 0.0_f64);
        for _ in 0..n {
            let missed = detect
                .iter()
                .filter(|&&(prior, p_detect)| {
                    let leaking = rng.random::<f64>() < prior;
                    leaking && rng.random::<f64>() >= p_detect
                })
                .count() as f64;
            sum += missed;
            sum_sq += missed * missed;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial.into_iter().fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    MonteCarloEstimate { estimate: mean, std_error: (var / n).sqrt(), samples }
}
