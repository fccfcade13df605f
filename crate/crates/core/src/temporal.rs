//! Time primitives shared by every stage of the pipeline.
//!
//! All membership tests are half-open: an interval `[start, end)` contains
//! `start` but not `end`, so back-to-back calendar entries never share a
//! boundary sample.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{
    DateTime, Duration, FixedOffset, LocalResult, NaiveDate, NaiveDateTime, SecondsFormat,
    TimeZone, Timelike, Utc,
};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, JoinSide, Result};

/// Timestamp layout used by the Apple Health export, e.g. `2025-01-10 09:30:00 +0100`.
pub const APPLE_TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S %z";

/// An absolute point in time at second precision.
///
/// The UTC offset the value was created with is retained, but equality and
/// ordering only look at the absolute instant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instant(DateTime<FixedOffset>);

impl Instant {
    pub fn new(dt: DateTime<FixedOffset>) -> Self {
        Instant(dt.with_nanosecond(0).unwrap_or(dt))
    }

    pub fn from_unix(secs: i64) -> Self {
        let dt = Utc
            .timestamp_opt(secs, 0)
            .single()
            .expect("unix timestamp in chrono range");
        Instant(dt.fixed_offset())
    }

    pub fn parse_rfc3339(s: &str) -> Option<Self> {
        DateTime::parse_from_rfc3339(s.trim()).ok().map(Instant::new)
    }

    /// Parses the `YYYY-MM-DD HH:MM:SS ±HHMM` layout of the Apple Health export.
    pub fn parse_apple(s: &str) -> Option<Self> {
        DateTime::parse_from_str(s.trim(), APPLE_TIMESTAMP_FORMAT)
            .ok()
            .map(Instant::new)
    }

    /// Interprets a wall-clock time in `tz`. Ambiguous times (DST fall-back)
    /// resolve to the earlier instant; nonexistent times return `None`.
    pub fn from_local(naive: NaiveDateTime, tz: Tz) -> Option<Self> {
        match tz.from_local_datetime(&naive) {
            LocalResult::Single(dt) => Some(Instant::new(dt.fixed_offset())),
            LocalResult::Ambiguous(a, _) => Some(Instant::new(a.fixed_offset())),
            LocalResult::None => None,
        }
    }

    /// Start of the calendar day `date` in `tz` (first existing local instant).
    pub fn start_of_day(date: NaiveDate, tz: Tz) -> Self {
        let mut naive = date.and_hms_opt(0, 0, 0).expect("midnight is valid");
        loop {
            if let Some(i) = Instant::from_local(naive, tz) {
                return i;
            }
            naive += Duration::minutes(15);
        }
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn offset(&self) -> FixedOffset {
        *self.0.offset()
    }

    pub fn as_datetime(&self) -> DateTime<FixedOffset> {
        self.0
    }

    /// Same instant re-expressed with the offset `tz` uses at that moment.
    pub fn in_zone(&self, tz: Tz) -> Self {
        Instant(self.0.with_timezone(&tz).fixed_offset())
    }

    pub fn local(&self, tz: Tz) -> NaiveDateTime {
        self.0.with_timezone(&tz).naive_local()
    }

    pub fn date_in(&self, tz: Tz) -> NaiveDate {
        self.local(tz).date()
    }

    /// ISO-8601 rendering with the retained offset, second precision.
    pub fn to_rfc3339(&self) -> String {
        self.0.to_rfc3339_opts(SecondsFormat::Secs, false)
    }

    pub fn to_apple(&self) -> String {
        self.0.format(APPLE_TIMESTAMP_FORMAT).to_string()
    }
}

impl fmt::Debug for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Add<Duration> for Instant {
    type Output = Instant;

    fn add(self, rhs: Duration) -> Instant {
        Instant(self.0 + rhs)
    }
}

impl Sub<Duration> for Instant {
    type Output = Instant;

    fn sub(self, rhs: Duration) -> Instant {
        Instant(self.0 - rhs)
    }
}

impl Sub for Instant {
    type Output = Duration;

    fn sub(self, rhs: Instant) -> Duration {
        self.0 - rhs.0
    }
}

/// Half-open time window `[start, end)` with `start <= end`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    start: Instant,
    end: Instant,
}

#[derive(Deserialize)]
struct RawInterval {
    start: Instant,
    end: Instant,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        Interval::new(raw.start, raw.end)
    }
}

impl Interval {
    pub fn new(start: Instant, end: Instant) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInterval {
                start: start.to_rfc3339(),
                end: end.to_rfc3339(),
            });
        }
        Ok(Interval { start, end })
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn end(&self) -> Instant {
        self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }

    pub fn minutes(&self) -> f64 {
        self.duration().num_seconds() as f64 / 60.0
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, t: Instant) -> bool {
        interval_contains(self, t)
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Smallest interval covering both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn in_zone(&self, tz: Tz) -> Interval {
        Interval {
            start: self.start.in_zone(tz),
            end: self.end.in_zone(tz),
        }
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

pub fn interval_contains(iv: &Interval, t: Instant) -> bool {
    iv.start <= t && t < iv.end
}

/// Matches every point to every interval containing it.
///
/// Both inputs must be sorted ascending (intervals by start, points by
/// instant). Intervals may overlap, so a point can land in several slots.
/// Slot `i` of the result lists the values for `intervals[i]` in point order.
pub fn interval_join<V: Clone>(intervals: &[Interval], points: &[(Instant, V)]) -> Result<Vec<Vec<V>>> {
    if let Some(index) = first_unsorted(intervals.iter().map(|iv| iv.start)) {
        return Err(Error::UnsortedInput { side: JoinSide::Intervals, index });
    }
    if let Some(index) = first_unsorted(points.iter().map(|(t, _)| *t)) {
        return Err(Error::UnsortedInput { side: JoinSide::Points, index });
    }

    let mut out = Vec::with_capacity(intervals.len());
    // Interval starts are non-decreasing, so the first candidate point never moves back.
    let mut lower = 0;
    for iv in intervals {
        while lower < points.len() && points[lower].0 < iv.start {
            lower += 1;
        }
        let matched = points[lower..]
            .iter()
            .take_while(|(t, _)| *t < iv.end)
            .map(|(_, v)| v.clone())
            .collect();
        out.push(matched);
    }
    Ok(out)
}

fn first_unsorted(mut items: impl Iterator<Item = Instant>) -> Option<usize> {
    let mut prev = items.next()?;
    for (i, cur) in items.enumerate() {
        if cur < prev {
            return Some(i + 1);
        }
        prev = cur;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateSpec {
    #[default]
    Median,
    Mean,
    Min,
    Max,
    Count,
}

impl AggregateSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AggregateSpec::Median => "median",
            AggregateSpec::Mean => "mean",
            AggregateSpec::Min => "min",
            AggregateSpec::Max => "max",
            AggregateSpec::Count => "count",
        }
    }
}

impl std::str::FromStr for AggregateSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "median" => Ok(AggregateSpec::Median),
            "mean" => Ok(AggregateSpec::Mean),
            "min" => Ok(AggregateSpec::Min),
            "max" => Ok(AggregateSpec::Max),
            "count" => Ok(AggregateSpec::Count),
            other => Err(format!("unknown aggregate {other:?} (expected median|mean|min|max|count)")),
        }
    }
}

/// Reduces `values` per `spec`. Empty input has no aggregate.
pub fn aggregate(values: &[f64], spec: AggregateSpec) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let v = match spec {
        AggregateSpec::Count => n as f64,
        AggregateSpec::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggregateSpec::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregateSpec::Mean => {
            // sorted summation keeps the result permutation-invariant
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.iter().sum::<f64>() / n as f64
        }
        AggregateSpec::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
            }
        }
    };
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveTime;

    fn at(h: u32, m: u32) -> Instant {
        let naive = NaiveDate::from_ymd_opt(2025, 5, 12)
            .unwrap()
            .and_time(NaiveTime::from_hms_opt(h, m, 0).unwrap());
        Instant::from_local(naive, chrono_tz::Europe::Amsterdam).unwrap()
    }

    fn iv(a: (u32, u32), b: (u32, u32)) -> Interval {
        Interval::new(at(a.0, a.1), at(b.0, b.1)).unwrap()
    }

    #[test]
    fn contains_is_half_open() {
        let w = iv((10, 0), (11, 0));
        assert!(interval_contains(&w, at(10, 0)));
        assert!(!interval_contains(&w, at(11, 0)));
        assert!(interval_contains(&w, at(10, 30)));
    }

    #[test]
    fn zero_length_contains_nothing() {
        let w = iv((10, 0), (10, 0));
        assert!(w.is_empty());
        assert!(!w.contains(at(10, 0)));
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(matches!(
            Interval::new(at(11, 0), at(10, 0)),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn join_single_window() {
        let ivs = [iv((10, 0), (11, 0))];
        let pts = [(at(10, 15), 50), (at(10, 45), 60), (at(11, 5), 70)];
        assert_eq!(interval_join(&ivs, &pts).unwrap(), vec![vec![50, 60]]);
    }

    #[test]
    fn join_empty_points() {
        let ivs = [iv((10, 0), (11, 0))];
        let pts: [(Instant, i32); 0] = [];
        assert_eq!(interval_join(&ivs, &pts).unwrap(), vec![Vec::<i32>::new()]);
    }

    #[test]
    fn join_overlapping_windows_share_points() {
        let ivs = [iv((9, 0), (10, 0)), iv((9, 30), (10, 30))];
        let pts = [(at(9, 45), 42)];
        assert_eq!(interval_join(&ivs, &pts).unwrap(), vec![vec![42], vec![42]]);
    }

    #[test]
    fn join_rejects_unsorted() {
        let ivs = [iv((10, 0), (11, 0)), iv((9, 0), (9, 30))];
        let err = interval_join::<i32>(&ivs, &[]).unwrap_err();
        assert!(matches!(err, Error::UnsortedInput { side: JoinSide::Intervals, index: 1 }));

        let ivs = [iv((10, 0), (11, 0))];
        let pts = [(at(10, 30), 1), (at(10, 10), 2)];
        let err = interval_join(&ivs, &pts).unwrap_err();
        assert!(matches!(err, Error::UnsortedInput { side: JoinSide::Points, index: 1 }));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[10.0], AggregateSpec::Median), Some(10.0));
        assert_eq!(aggregate(&[1.0, 2.0, 3.0, 4.0], AggregateSpec::Median), Some(2.5));
        assert_eq!(aggregate(&[], AggregateSpec::Median), None);
        assert_eq!(aggregate(&[3.0, 1.0, 2.0], AggregateSpec::Mean), Some(2.0));
        assert_eq!(aggregate(&[3.0, 1.0, 2.0], AggregateSpec::Min), Some(1.0));
        assert_eq!(aggregate(&[3.0, 1.0, 2.0], AggregateSpec::Max), Some(3.0));
        assert_eq!(aggregate(&[3.0, 1.0, 2.0], AggregateSpec::Count), Some(3.0));
    }

    #[test]
    fn apple_timestamp_keeps_offset() {
        let t = Instant::parse_apple("2025-01-10 09:30:00 +0100").unwrap();
        assert_eq!(t.offset().local_minus_utc(), 3600);
        assert_eq!(t.to_rfc3339(), "2025-01-10T09:30:00+01:00");
        assert_eq!(t.to_apple(), "2025-01-10 09:30:00 +0100");
    }

    #[test]
    fn home_zone_round_trip() {
        let t = Instant::parse_apple("2025-07-01 23:30:00 +0000").unwrap();
        let home = t.in_zone(chrono_tz::Europe::Amsterdam);
        assert_eq!(home, t);
        assert_eq!(home.to_rfc3339(), "2025-07-02T01:30:00+02:00");
        assert_eq!(home.date_in(chrono_tz::Europe::Amsterdam).to_string(), "2025-07-02");
        assert_eq!(home.in_zone(chrono_tz::UTC).to_rfc3339(), "2025-07-01T23:30:00+00:00");
    }

    #[test]
    fn nonexistent_local_time_is_none() {
        let naive = NaiveDate::from_ymd_opt(2025, 3, 30).unwrap().and_hms_opt(2, 30, 0).unwrap();
        assert!(Instant::from_local(naive, chrono_tz::Europe::Amsterdam).is_none());
    }
}
