//! Calendar ingestion from Outlook CSV exports and iCalendar files.

mod csv;
mod ics;

use chrono::NaiveDate;
use chrono_tz::Tz;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::temporal::{Instant, Interval};

pub use self::csv::{parse_calendar_csv, ColumnMap};
pub use self::ics::parse_calendar_ics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Category {
    Work,
    Private,
    #[default]
    Unknown,
}

impl Category {
    pub fn parse(s: &str) -> Option<Category> {
        let s = s.trim().to_ascii_lowercase();
        if s.contains("work") {
            Some(Category::Work)
        } else if s.contains("private") || s.contains("personal") {
            Some(Category::Private)
        } else {
            None
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Category::Work => "Work",
            Category::Private => "Private",
            Category::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarEvent {
    pub subject: String,
    pub interval: Interval,
    pub all_day: bool,
    pub category: Category,
}

/// One subject rule as written in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub pattern: String,
    pub category: Category,
}

/// Ordered subject rules; the first matching pattern decides the category.
#[derive(Debug, Clone, Default)]
pub struct CategoryRules {
    rules: Vec<(Regex, Category)>,
}

impl CategoryRules {
    pub fn new(rules: &[CategoryRule]) -> Result<Self> {
        let rules = rules
            .iter()
            .map(|r| Ok((Regex::new(&r.pattern)?, r.category)))
            .collect::<Result<_>>()?;
        Ok(CategoryRules { rules })
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn classify(&self, subject: &str) -> Category {
        self.rules
            .iter()
            .find(|(re, _)| re.is_match(subject))
            .map_or(Category::Unknown, |(_, c)| *c)
    }
}

/// Settings shared by both calendar parsers.
#[derive(Debug, Clone)]
pub struct CalendarOptions {
    pub home_tz: Tz,
    pub strict: bool,
    pub rules: CategoryRules,
}

impl Default for CalendarOptions {
    fn default() -> Self {
        CalendarOptions { home_tz: chrono_tz::UTC, strict: false, rules: CategoryRules::default() }
    }
}

/// Parsed events plus the number of rows or entries that were skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCalendar {
    pub events: Vec<CalendarEvent>,
    pub skipped: usize,
}

pub fn filter_all_day(events: Vec<CalendarEvent>) -> Vec<CalendarEvent> {
    events.into_iter().filter(|e| !e.all_day).collect()
}

/// Keeps events lying entirely inside the home-zone days `from..=to`.
pub fn filter_date_range(events: Vec<CalendarEvent>, from: NaiveDate, to: NaiveDate, tz: Tz) -> Vec<CalendarEvent> {
    let lo = Instant::start_of_day(from, tz);
    let hi = match to.succ_opt() {
        Some(next) => Instant::start_of_day(next, tz),
        None => return events.into_iter().filter(|e| e.interval.start() >= lo).collect(),
    };
    events
        .into_iter()
        .filter(|e| e.interval.start() >= lo && e.interval.end() <= hi)
        .collect()
}
