//! Conversion between scenario seconds and ISO-8601 timestamps.
//!
//! Scenario time is a uniform scale with no leap seconds, counted from
//! 2024-01-01T00:00:00Z.

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};

use crate::error::{Error, Result};

fn reference() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// Formats scenario seconds with nanosecond resolution.
pub fn to_iso(t: f64) -> String {
    let nanos = (t * 1e9).round() as i64;
    let dt = reference() + Duration::nanoseconds(nanos);
    dt.format("%Y-%m-%dT%H:%M:%S%.9fZ").to_string()
}

pub fn from_iso(s: &str) -> Result<f64> {
    let dt = DateTime::parse_from_rfc3339(s.trim())
        .map(|d| d.with_timezone(&Utc).naive_utc())
        .map_err(|e| Error::Time(format!("{s}: {e}")))?;
    let d = dt - reference();
    let secs = d.num_seconds();
    let sub = (d - Duration::seconds(secs)).num_nanoseconds().unwrap_or(0);
    Ok(secs as f64 + sub as f64 * 1e-9)
}
