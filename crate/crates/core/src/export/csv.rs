use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use chrono_tz::Tz;

use super::{csv_sink_error, format_float};
use crate::calendar::Category;
use crate::error::{Error, Result};
use crate::log::{AttrType, AttrValue, Attributes, Case, EnrichedEvent, EventLog, MatchStats, Origin, Schema};
use crate::temporal::{Instant, Interval};

const FIXED: [&str; 5] = ["case_id", "activity", "start_time", "complete_time", "origin"];

fn render(value: Option<&AttrValue>) -> String {
    match value {
        None => String::new(),
        Some(AttrValue::Int(v)) => v.to_string(),
        Some(AttrValue::Float(v)) => format_float(*v),
        Some(AttrValue::Str(s)) => s.clone(),
        Some(AttrValue::Bool(b)) => b.to_string(),
    }
}

/// Writes one row per event with start and complete timestamps; case
/// attributes repeat on every row of their case. Returns the row count.
pub fn export_csv<W: Write>(log: &EventLog, sink: W) -> Result<usize> {
    let mut w = ::csv::Writer::from_writer(sink);
    let header = FIXED
        .iter()
        .copied()
        .chain(log.schema.event.keys().map(String::as_str))
        .chain(log.schema.case.keys().map(String::as_str));
    w.write_record(header).map_err(csv_sink_error)?;

    let tz = log.home_tz;
    let mut rows = 0;
    for case in &log.cases {
        let case_cells: Vec<String> = log.schema.case.keys().map(|k| render(case.attributes.get(k))).collect();
        for ev in &case.events {
            let mut record = vec![
                case.case_id.to_string(),
                ev.activity.clone(),
                ev.interval.start().in_zone(tz).to_rfc3339(),
                ev.interval.end().in_zone(tz).to_rfc3339(),
                ev.origin.label().to_string(),
            ];
            record.extend(log.schema.event.keys().map(|k| render(ev.attributes.get(k))));
            record.extend(case_cells.iter().cloned());
            w.write_record(&record).map_err(csv_sink_error)?;
            rows += 1;
        }
    }
    w.flush().map_err(super::sink_error)?;
    Ok(rows)
}

fn parse_value(raw: &str, ty: AttrType) -> Option<AttrValue> {
    match ty {
        AttrType::Int => raw.parse().ok().map(AttrValue::Int),
        AttrType::Float => raw.parse().ok().map(AttrValue::Float),
        AttrType::Bool => raw.parse().ok().map(AttrValue::Bool),
        AttrType::Str => Some(AttrValue::Str(raw.to_string())),
    }
}

/// Reads a table written by [`export_csv`] back into a log, typing the
/// attribute columns with `schema`. Empty cells are absent attributes.
pub fn read_csv<R: Read>(input: R, schema: &Schema, home_tz: Tz) -> Result<EventLog> {
    let mut reader = ::csv::Reader::from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()));
    let fixed: Vec<usize> = FIXED.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let event_cols: Vec<(usize, &str, AttrType)> = schema
        .event
        .iter()
        .map(|(k, ty)| Ok((col(k)?, k.as_str(), *ty)))
        .collect::<Result<_>>()?;
    let case_cols: Vec<(usize, &str, AttrType)> = schema
        .case
        .iter()
        .map(|(k, ty)| Ok((col(k)?, k.as_str(), *ty)))
        .collect::<Result<_>>()?;

    let mut cases: BTreeMap<NaiveDate, Case> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let rec = record?;
        let bad = |message: String| Error::MalformedRow { row, message };
        let get = |idx: usize| rec.get(idx).unwrap_or("");
        let attrs = |cols: &[(usize, &str, AttrType)]| -> Result<Attributes> {
            let mut out = Attributes::new();
            for &(idx, name, ty) in cols {
                let raw = get(idx);
                if raw.is_empty() {
                    continue;
                }
                let v = parse_value(raw, ty).ok_or_else(|| bad(format!("bad {name} value {raw:?}")))?;
                out.insert(name.to_string(), v);
            }
            Ok(out)
        };

        let case_id = NaiveDate::parse_from_str(get(fixed[0]), "%Y-%m-%d").map_err(|_| bad("bad case_id".into()))?;
        let start = Instant::parse_rfc3339(get(fixed[2])).ok_or_else(|| bad("bad start_time".into()))?;
        let end = Instant::parse_rfc3339(get(fixed[3])).ok_or_else(|| bad("bad complete_time".into()))?;
        let origin = Origin::parse(get(fixed[4])).ok_or_else(|| bad("bad origin".into()))?;
        let event = EnrichedEvent {
            activity: get(fixed[1]).to_string(),
            interval: Interval::new(start, end).map_err(|e| bad(e.to_string()))?,
            origin,
            category: Category::Unknown,
            attributes: attrs(&event_cols)?,
        };
        let case_attrs = attrs(&case_cols)?;
        cases
            .entry(case_id)
            .or_insert_with(|| Case { case_id, events: Vec::new(), attributes: case_attrs })
            .events
            .push(event);
    }

    let cases: Vec<Case> = cases.into_values().collect();
    Ok(EventLog { home_tz, match_stats: MatchStats::count(&cases), schema: schema.clone(), cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::HRV_SAMPLE_COUNT;

    fn sample_log() -> EventLog {
        let tz = chrono_tz::Europe::Amsterdam;
        let t = Instant::parse_rfc3339("2025-05-12T10:00:00+02:00").unwrap();
        let mut schema = Schema::default();
        schema.declare_event("hrv_median_ms", AttrType::Float);
        schema.declare_event(HRV_SAMPLE_COUNT, AttrType::Int);
        schema.declare_case("total_sleep_min", AttrType::Float);
        schema.declare_case("is_workday", AttrType::Bool);
        let mut e1 = EnrichedEvent {
            activity: "Work1, \"quoted\"".into(),
            interval: Interval::new(t, t + chrono::Duration::hours(1)).unwrap(),
            origin: Origin::Calendar,
            category: Category::Unknown,
            attributes: Attributes::new(),
        };
        e1.attributes.insert("hrv_median_ms".into(), AttrValue::Float(55.35));
        e1.attributes.insert(HRV_SAMPLE_COUNT.into(), AttrValue::Int(2));
        let mut e2 = e1.clone();
        e2.activity = "Walking".into();
        e2.origin = Origin::Workout;
        e2.interval = Interval::new(t + chrono::Duration::hours(2), t + chrono::Duration::hours(3)).unwrap();
        e2.attributes.clear();
        e2.attributes.insert(HRV_SAMPLE_COUNT.into(), AttrValue::Int(0));
        let mut case = Case { case_id: NaiveDate::from_ymd_opt(2025, 5, 12).unwrap(), events: vec![e1, e2], attributes: Attributes::new() };
        case.attributes.insert("total_sleep_min".into(), AttrValue::Float(390.0));
        case.attributes.insert("is_workday".into(), AttrValue::Bool(true));
        let cases = vec![case];
        EventLog { home_tz: tz, match_stats: MatchStats::count(&cases), schema, cases }
    }

    #[test]
    fn rows_and_header() {
        let log = sample_log();
        let mut out = Vec::new();
        assert_eq!(export_csv(&log, &mut out).unwrap(), 2);
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "case_id,activity,start_time,complete_time,origin,hrv_median_ms,hrv_sample_count,is_workday,total_sleep_min"
        );
        assert_eq!(
            lines[2],
            "2025-05-12,Walking,2025-05-12T12:00:00+02:00,2025-05-12T13:00:00+02:00,workout,,0,true,390"
        );
    }

    #[test]
    fn round_trip() {
        let log = sample_log();
        let mut out = Vec::new();
        export_csv(&log, &mut out).unwrap();
        let back = read_csv(out.as_slice(), &log.schema, log.home_tz).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn failing_sink() {
        struct Broken;
        impl Write for Broken {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("disk full"))
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        assert!(matches!(export_csv(&sample_log(), Broken), Err(Error::SinkWrite(_))));
    }
}
