//! Day-case event logs and the enrichment strategies applied to them.

mod cohort;
mod enrich;
mod segment;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::calendar::Category;
use crate::temporal::{AggregateSpec, Interval};

pub use cohort::{filter_cases_with_activity, filter_cohort, Clause, CohortPredicate, Comparator, Literal};
pub use enrich::{
    attach_case_attributes, derive_events, enrich_event_attributes, CaseAttrReport, DeriveReport,
    DeriveSelection, NightDirection, NightPolicy, SleepEventMode,
};
pub use segment::segment_cases;

pub const HRV_SAMPLE_COUNT: &str = "hrv_sample_count";
pub const RESTING_HR_BPM: &str = "resting_hr_bpm";
pub const TOTAL_SLEEP_MIN: &str = "total_sleep_min";
pub const AWAKE_MIN: &str = "awake_min";
pub const DEEP_SLEEP_MIN: &str = "deep_sleep_min";
pub const NIGHT_MISSING: &str = "night_missing";
pub const IS_WORKDAY: &str = "is_workday";
pub const SLEEP_ACTIVITY: &str = "Sleep";

/// Event attribute holding the aggregated HRV of an event window.
pub fn hrv_attribute(spec: AggregateSpec) -> &'static str {
    match spec {
        AggregateSpec::Median => "hrv_median_ms",
        AggregateSpec::Mean => "hrv_mean_ms",
        AggregateSpec::Min => "hrv_min_ms",
        AggregateSpec::Max => "hrv_max_ms",
        AggregateSpec::Count => "hrv_count",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Calendar,
    Workout,
    Sleep,
}

impl Origin {
    pub fn label(&self) -> &'static str {
        match self {
            Origin::Calendar => "calendar",
            Origin::Workout => "workout",
            Origin::Sleep => "sleep",
        }
    }

    pub fn parse(s: &str) -> Option<Origin> {
        match s {
            "calendar" => Some(Origin::Calendar),
            "workout" => Some(Origin::Workout),
            "sleep" => Some(Origin::Sleep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl AttrValue {
    pub fn attr_type(&self) -> AttrType {
        match self {
            AttrValue::Int(_) => AttrType::Int,
            AttrValue::Float(_) => AttrType::Float,
            AttrValue::Str(_) => AttrType::Str,
            AttrValue::Bool(_) => AttrType::Bool,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(v) => Some(*v as f64),
            AttrValue::Float(v) => Some(*v),
            AttrValue::Bool(b) => Some(f64::from(u8::from(*b))),
            AttrValue::Str(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Float(v) => write!(f, "{v}"),
            AttrValue::Str(s) => f.write_str(s),
            AttrValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrType {
    Int,
    Float,
    Str,
    Bool,
}

pub type Attributes = BTreeMap<String, AttrValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedEvent {
    pub activity: String,
    pub interval: Interval,
    pub origin: Origin,
    pub category: Category,
    pub attributes: Attributes,
}

impl EnrichedEvent {
    pub fn hrv_sample_count(&self) -> i64 {
        match self.attributes.get(HRV_SAMPLE_COUNT) {
            Some(AttrValue::Int(n)) => *n,
            _ => 0,
        }
    }

    fn order_key(&self) -> (crate::temporal::Instant, crate::temporal::Instant, &str) {
        (self.interval.start(), self.interval.end(), self.activity.as_str())
    }
}

/// One home-timezone day of the monitored person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: NaiveDate,
    pub events: Vec<EnrichedEvent>,
    pub attributes: Attributes,
}

impl Case {
    pub fn is_workday(&self) -> bool {
        self.attributes.get(IS_WORKDAY).and_then(AttrValue::as_bool).unwrap_or(false)
    }

    pub fn attr_f64(&self, name: &str) -> Option<f64> {
        self.attributes.get(name).and_then(AttrValue::as_f64)
    }

    /// Restores the event order: start, then end, then activity name.
    pub fn sort_events(&mut self) {
        self.events.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    /// Calendar-origin events in the log.
    pub total_events: usize,
    /// Calendar-origin events with at least one HRV sample in their window.
    pub matched_events: usize,
}

impl MatchStats {
    pub fn count(cases: &[Case]) -> MatchStats {
        let calendar = cases
            .iter()
            .flat_map(|c| &c.events)
            .filter(|e| e.origin == Origin::Calendar);
        let (mut total, mut matched) = (0, 0);
        for e in calendar {
            total += 1;
            if e.hrv_sample_count() > 0 {
                matched += 1;
            }
        }
        MatchStats { total_events: total, matched_events: matched }
    }
}

/// Declared attribute names and types at event and case level.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub event: BTreeMap<String, AttrType>,
    pub case: BTreeMap<String, AttrType>,
}

impl Schema {
    pub fn declare_event(&mut self, name: &str, ty: AttrType) {
        self.event.insert(name.to_string(), ty);
    }

    pub fn declare_case(&mut self, name: &str, ty: AttrType) {
        self.case.insert(name.to_string(), ty);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub home_tz: Tz,
    pub cases: Vec<Case>,
    pub match_stats: MatchStats,
    pub schema: Schema,
}

impl EventLog {
    pub fn empty(home_tz: Tz) -> Self {
        EventLog { home_tz, cases: Vec::new(), match_stats: MatchStats::default(), schema: Schema::default() }
    }

    pub fn event_count(&self) -> usize {
        self.cases.iter().map(|c| c.events.len()).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = (&Case, &EnrichedEvent)> {
        self.cases.iter().flat_map(|c| c.events.iter().map(move |e| (c, e)))
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.match_stats.matched_events > self.match_stats.total_events {
            return Err("matched_events exceeds total_events".into());
        }
        for pair in self.cases.windows(2) {
            if pair[0].case_id >= pair[1].case_id {
                return Err(format!("cases out of order at {}", pair[1].case_id));
            }
        }
        for case in &self.cases {
            for (name, value) in &case.attributes {
                match self.schema.case.get(name) {
                    Some(ty) if *ty == value.attr_type() => {}
                    _ => return Err(format!("case attribute {name} missing from schema")),
                }
            }
            for pair in case.events.windows(2) {
                if pair[0].order_key() > pair[1].order_key() {
                    return Err(format!("events of {} out of order", case.case_id));
                }
            }
            for event in &case.events {
                for (name, value) in &event.attributes {
                    match self.schema.event.get(name) {
                        Some(ty) if *ty == value.attr_type() => {}
                        _ => return Err(format!("event attribute {name} missing from schema")),
                    }
                }
            }
        }
        Ok(())
    }
}
