//! Enrichment of calendar-derived event logs with wearable health data.
//!
//! The pipeline ingests an Apple Health export and a calendar export, cuts
//! the calendar into one case per day, and then enriches the log in three
//! independent ways:
//!
//! * event attributes: HRV samples aggregated over each event's window,
//! * case attributes: resting heart rate and sleep totals of the night that
//!   follows (or precedes) the day,
//! * derived events: workouts and sleep inserted as activities of their own.
//!
//! Enriched logs are written as CSV (Disco) or XES, optionally pseudonymized.

pub mod calendar;
pub mod error;
pub mod export;
pub mod fixture;
pub mod health;
pub mod log;
pub mod temporal;

pub use calendar::{CalendarEvent, Category};
pub use error::{Error, Result};
pub use health::{HealthBundle, HealthSample, IngestConfig, SampleKind, SleepEpisode, SleepStage, Workout};
pub use log::{AttrValue, Case, CohortPredicate, EnrichedEvent, EventLog, MatchStats, Origin};
pub use temporal::{aggregate, interval_contains, interval_join, AggregateSpec, Instant, Interval};
