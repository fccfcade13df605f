use std::io::Write;

use regex::Regex;

use super::{csv_sink_error, format_float};
use crate::error::{Error, Result};
use crate::log::{filter_cases_with_activity, filter_cohort, CohortPredicate, EventLog};

/// Label for the baseline row of [`PlotView::CaseAttrsVsAverage`].
pub const BASELINE_LABEL: &str = "all_workdays_mean";

#[derive(Debug, Clone)]
pub enum PlotView {
    /// One row per event whose activity matches `pattern` and carries
    /// `value_attribute`. The group label is the first capture group, or
    /// the whole match when the pattern has none.
    HrvByActivityGroup { pattern: Regex, value_attribute: String },
    /// Case attributes of a cohort, followed by the mean of each attribute
    /// over all workdays of the full log.
    CaseAttrsVsAverage {
        attributes: Vec<String>,
        cohort: CohortPredicate,
        with_activity: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = ::csv::Writer::from_writer(sink);
        w.write_record(&self.header).map_err(csv_sink_error)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_sink_error)?;
        }
        w.flush().map_err(super::sink_error)
    }
}

fn hrv_groups(log: &EventLog, pattern: &Regex, value_attribute: &str) -> Result<PlotTable> {
    if !log.schema.event.contains_key(value_attribute) {
        return Err(Error::UnknownAttribute(value_attribute.into()));
    }
    let mut rows = Vec::new();
    for (case, ev) in log.events() {
        let Some(caps) = pattern.captures(&ev.activity) else { continue };
        let Some(value) = ev.attributes.get(value_attribute).and_then(|v| v.as_f64()) else { continue };
        let label = caps.get(1).or_else(|| caps.get(0)).map_or("", |m| m.as_str());
        rows.push(vec![label.to_string(), case.case_id.to_string(), format_float(value)]);
    }
    Ok(PlotTable { header: vec!["group".into(), "date".into(), value_attribute.into()], rows })
}

fn case_vs_average(
    log: &EventLog,
    attributes: &[String],
    cohort: &CohortPredicate,
    with_activity: Option<&str>,
) -> Result<PlotTable> {
    if let Some(unknown) = attributes.iter().find(|a| !log.schema.case.contains_key(*a)) {
        return Err(Error::UnknownAttribute(unknown.clone()));
    }
    let mut selected = filter_cohort(log, cohort)?;
    if let Some(activity) = with_activity {
        selected = filter_cases_with_activity(&selected, activity);
    }

    let mut header = vec!["case_id".to_string()];
    header.extend(attributes.iter().cloned());
    let mut rows: Vec<Vec<String>> = selected
        .cases
        .iter()
        .map(|c| {
            let mut row = vec![c.case_id.to_string()];
            row.extend(attributes.iter().map(|a| c.attr_f64(a).map(format_float).unwrap_or_default()));
            row
        })
        .collect();

    let mut baseline = vec![BASELINE_LABEL.to_string()];
    for a in attributes {
        let values: Vec<f64> = log.cases.iter().filter(|c| c.is_workday()).filter_map(|c| c.attr_f64(a)).collect();
        let cell = if values.is_empty() {
            String::new()
        } else {
            format_float(values.iter().sum::<f64>() / values.len() as f64)
        };
        baseline.push(cell);
    }
    rows.push(baseline);
    Ok(PlotTable { header, rows })
}

/// Builds the table for `view` and writes it to `sink` as CSV.
pub fn emit_plot_data<W: Write>(log: &EventLog, view: &PlotView, sink: W) -> Result<PlotTable> {
    let table = match view {
        PlotView::HrvByActivityGroup { pattern, value_attribute } => hrv_groups(log, pattern, value_attribute)?,
        PlotView::CaseAttrsVsAverage { attributes, cohort, with_activity } => {
            case_vs_average(log, attributes, cohort, with_activity.as_deref())?
        }
    };
    table.write_csv(sink)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{CalendarEvent, Category};
    use crate::log::{segment_cases, AttrType, AttrValue, EnrichedEvent, Origin, AWAKE_MIN, IS_WORKDAY, TOTAL_SLEEP_MIN};
    use crate::temporal::{Instant, Interval};

    fn log_with(subjects: &[(&str, i64)]) -> EventLog {
        let t = Instant::from_unix(1_747_036_800);
        let events = subjects
            .iter()
            .map(|(s, day)| CalendarEvent {
                subject: s.to_string(),
                interval: Interval::new(t + chrono::Duration::days(*day), t + chrono::Duration::days(*day) + chrono::Duration::hours(1)).unwrap(),
                all_day: false,
                category: Category::Work,
            })
            .collect();
        segment_cases(events, chrono_tz::UTC, false)
    }

    #[test]
    fn two_groups_three_events() {
        let mut log = log_with(&[("IPO U", 0), ("IPO U", 1), ("IPO U", 2), ("IPO E", 0), ("IPO E", 1), ("IPO E", 2), ("Lunch", 0)]);
        log.schema.declare_event("hrv_median_ms", AttrType::Float);
        for case in &mut log.cases {
            for e in &mut case.events {
                e.attributes.insert("hrv_median_ms".into(), AttrValue::Float(50.0));
            }
        }
        let view = PlotView::HrvByActivityGroup { pattern: Regex::new(r"^IPO (\w)").unwrap(), value_attribute: "hrv_median_ms".into() };
        let mut out = Vec::new();
        let table = emit_plot_data(&log, &view, &mut out).unwrap();
        assert_eq!(table.rows.len(), 6);
        assert!(table.rows.iter().all(|r| r[0] == "U" || r[0] == "E"));
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 7);
    }

    #[test]
    fn baseline_is_workday_mean() {
        let mut log = log_with(&[("a", 0), ("b", 1), ("c", 2), ("d", 3)]);
        log.schema.declare_case(TOTAL_SLEEP_MIN, AttrType::Float);
        log.schema.declare_case(AWAKE_MIN, AttrType::Float);
        let sleep = [400.0, 500.0, 450.0, 530.0];
        let awake = [10.0, 20.0, 90.0, 40.0];
        for (i, c) in log.cases.iter_mut().enumerate() {
            c.attributes.insert(TOTAL_SLEEP_MIN.into(), AttrValue::Float(sleep[i]));
            c.attributes.insert(AWAKE_MIN.into(), AttrValue::Float(awake[i]));
        }
        // day 3 is not a workday and must not enter the baseline
        log.cases[3].attributes.insert(IS_WORKDAY.into(), AttrValue::Bool(false));
        let walk_at = log.cases[1].events[0].interval;
        log.cases[1].events.push(EnrichedEvent {
            activity: "Walking".into(),
            interval: walk_at,
            origin: Origin::Workout,
            category: Category::Unknown,
            attributes: Default::default(),
        });
        let view = PlotView::CaseAttrsVsAverage {
            attributes: vec![TOTAL_SLEEP_MIN.into(), AWAKE_MIN.into()],
            cohort: CohortPredicate::default(),
            with_activity: Some("Walking".into()),
        };
        let table = emit_plot_data(&log, &view, std::io::sink()).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0], ["2025-05-13", "500", "20"]);
        let expected_sleep = (400.0 + 500.0 + 450.0) / 3.0;
        let expected_awake = (10.0 + 20.0 + 90.0) / 3.0;
        assert_eq!(table.rows[1][0], BASELINE_LABEL);
        assert!((table.rows[1][1].parse::<f64>().unwrap() - expected_sleep).abs() < 1e-9);
        assert!((table.rows[1][2].parse::<f64>().unwrap() - expected_awake).abs() < 1e-9);
    }

    #[test]
    fn unknown_attributes() {
        let log = log_with(&[("a", 0)]);
        let view = PlotView::HrvByActivityGroup { pattern: Regex::new(".").unwrap(), value_attribute: "hrv_median_ms".into() };
        assert!(matches!(emit_plot_data(&log, &view, std::io::sink()), Err(Error::UnknownAttribute(_))));
        let view = PlotView::CaseAttrsVsAverage { attributes: vec!["nope".into()], cohort: CohortPredicate::default(), with_activity: None };
        assert!(matches!(emit_plot_data(&log, &view, std::io::sink()), Err(Error::UnknownAttribute(_))));
    }
}
