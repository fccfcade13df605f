use std::collections::BTreeMap;

use chrono_tz::Tz;

use super::{AttrType, AttrValue, Case, EnrichedEvent, EventLog, MatchStats, Origin, IS_WORKDAY};
use crate::calendar::{CalendarEvent, Category};

/// Groups timed calendar events into one case per home-timezone start date.
///
/// With `categorized` set, a day is a workday when it holds at least one
/// `Work` event; otherwise every day with events counts as one.
pub fn segment_cases(events: Vec<CalendarEvent>, home_tz: Tz, categorized: bool) -> EventLog {
    let mut by_day: BTreeMap<_, Vec<EnrichedEvent>> = BTreeMap::new();
    for ev in events {
        let day = ev.interval.start().date_in(home_tz);
        by_day.entry(day).or_default().push(EnrichedEvent {
            activity: ev.subject,
            interval: ev.interval,
            origin: Origin::Calendar,
            category: ev.category,
            attributes: Default::default(),
        });
    }

    let cases: Vec<Case> = by_day
        .into_iter()
        .map(|(case_id, events)| {
            let workday = !categorized || events.iter().any(|e| e.category == Category::Work);
            let mut case = Case { case_id, events, attributes: Default::default() };
            case.attributes.insert(IS_WORKDAY.into(), AttrValue::Bool(workday));
            case.sort_events();
            case
        })
        .collect();

    let mut log = EventLog::empty(home_tz);
    log.schema.declare_case(IS_WORKDAY, AttrType::Bool);
    log.match_stats = MatchStats::count(&cases);
    log.cases = cases;
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::{Instant, Interval};
    use chrono::NaiveDate;

    const TZ: Tz = chrono_tz::Europe::Amsterdam;

    fn event(subject: &str, day: u32, h0: u32, m0: u32, mins: i64, category: Category) -> CalendarEvent {
        let naive = NaiveDate::from_ymd_opt(2025, 5, day).unwrap().and_hms_opt(h0, m0, 0).unwrap();
        let start = Instant::from_local(naive, TZ).unwrap();
        CalendarEvent {
            subject: subject.into(),
            interval: Interval::new(start, start + chrono::Duration::minutes(mins)).unwrap(),
            all_day: false,
            category,
        }
    }

    #[test]
    fn one_case_per_date() {
        let log = segment_cases(
            vec![
                event("a", 12, 10, 0, 60, Category::Unknown),
                event("b", 13, 10, 0, 60, Category::Unknown),
                event("c", 14, 10, 0, 60, Category::Unknown),
            ],
            TZ,
            false,
        );
        assert_eq!(log.cases.len(), 3);
        assert!(log.cases.iter().all(|c| c.is_workday()));
        assert_eq!(log.match_stats, MatchStats { total_events: 3, matched_events: 0 });
        log.validate().unwrap();
    }

    #[test]
    fn midnight_crossing_stays_on_start_date() {
        let log = segment_cases(vec![event("late", 12, 23, 50, 30, Category::Unknown)], TZ, false);
        assert_eq!(log.cases.len(), 1);
        assert_eq!(log.cases[0].case_id, NaiveDate::from_ymd_opt(2025, 5, 12).unwrap());
    }

    #[test]
    fn empty_input() {
        let log = segment_cases(vec![], TZ, false);
        assert!(log.cases.is_empty());
        assert_eq!(log.match_stats, MatchStats::default());
    }

    #[test]
    fn sorted_with_ties_and_workday_flag() {
        let log = segment_cases(
            vec![
                event("b", 12, 10, 0, 60, Category::Private),
                event("a", 12, 10, 0, 60, Category::Private),
                event("z", 12, 9, 0, 30, Category::Private),
                event("short", 12, 10, 0, 30, Category::Private),
                event("w", 13, 9, 0, 30, Category::Work),
            ],
            TZ,
            true,
        );
        let names: Vec<_> = log.cases[0].events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(names, ["z", "short", "a", "b"]);
        assert!(!log.cases[0].is_workday());
        assert!(log.cases[1].is_workday());
    }
}
