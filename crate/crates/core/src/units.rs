//! Conversions used at the I/O boundary. Everything internal is SI.

pub const METERS_PER_SECOND_PER_KNOT: f64 = 0.514444;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

pub fn knots_to_mps(knots: f64) -> f64 {
    knots * METERS_PER_SECOND_PER_KNOT
}

pub fn mps_to_knots(mps: f64) -> f64 {
    mps / METERS_PER_SECOND_PER_KNOT
}

pub fn hours_to_seconds(hours: f64) -> f64 {
    hours * SECONDS_PER_HOUR
}

pub fn seconds_to_hours(seconds: f64) -> f64 {
    seconds / SECONDS_PER_HOUR
}
