//! Pareto-optimal boustrophedon search planning over a probabilistic leak map.
//!
//! The planner trades off two objectives for an AUV survey: the prior mass
//! of leaks left undetected and the time spent on tracklines. A
//! multi-objective cross-entropy search ([`moce`]) picks which candidate
//! tracklines to run and the time budget; a convex inner solver
//! ([`speed_opt`]) sets the speed on each selected line.

pub mod baseline;
pub mod exec;
pub mod geometry;
pub mod moce;
pub mod objective;
pub mod pareto;
pub mod rng;
pub mod scenario;
pub mod speed_opt;
pub mod units;

pub use exec::Execution;
pub use geometry::{Bounds, ConvexPolygon, Point2, Trackline};
pub use objective::{EffortMatrix, PathPlan, PlanEvaluation};
pub use pareto::{ObjectivePair, ParetoArchive};
pub use scenario::{AuvLimits, GeneratorConfig, LeakSource, Scenario};
