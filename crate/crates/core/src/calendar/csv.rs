use std::io::Read;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::{CalendarEvent, CalendarOptions, Category, ParsedCalendar};
use crate::error::{Error, Result};
use crate::temporal::{Instant, Interval};

/// Column names and value formats of a calendar table. Defaults follow the
/// Outlook "Comma Separated Values" export in the en-US locale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub subject: String,
    pub start_date: String,
    pub start_time: String,
    pub end_date: String,
    pub end_time: String,
    pub all_day: String,
    /// Optional column whose value names the category ("Work", "Private").
    pub category: Option<String>,
    /// chrono format string, e.g. `%m/%d/%Y`.
    pub date_format: String,
    pub time_format: String,
    pub delimiter: char,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            subject: "Subject".into(),
            start_date: "Start Date".into(),
            start_time: "Start Time".into(),
            end_date: "End Date".into(),
            end_time: "End Time".into(),
            all_day: "All day event".into(),
            category: Some("Categories".into()),
            date_format: "%m/%d/%Y".into(),
            time_format: "%I:%M:%S %p".into(),
            delimiter: ',',
        }
    }
}

struct Indices {
    subject: usize,
    start_date: usize,
    start_time: usize,
    end_date: usize,
    end_time: usize,
    all_day: usize,
    category: Option<usize>,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "waar" | "ja" => Some(true),
        "false" | "no" | "0" | "onwaar" | "nee" | "" => Some(false),
        _ => None,
    }
}

fn parse_time(s: &str, format: &str) -> Option<NaiveTime> {
    let s = s.trim();
    if s.is_empty() {
        return NaiveTime::from_hms_opt(0, 0, 0);
    }
    [format, "%H:%M:%S", "%H:%M"]
        .iter()
        .find_map(|f| NaiveTime::parse_from_str(s, f).ok())
}

pub fn parse_calendar_csv<R: Read>(input: R, columns: &ColumnMap, opts: &CalendarOptions) -> Result<ParsedCalendar> {
    let delimiter = u8::try_from(columns.delimiter)
        .map_err(|_| Error::MalformedRow { row: 0, message: "delimiter must be ASCII".into() })?;
    let mut reader = ::csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(input);

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = Indices {
        subject: find(&columns.subject)?,
        start_date: find(&columns.start_date)?,
        start_time: find(&columns.start_time)?,
        end_date: find(&columns.end_date)?,
        end_time: find(&columns.end_time)?,
        all_day: find(&columns.all_day)?,
        category: columns.category.as_deref().and_then(|c| find(c).ok()),
    };

    let mut parsed = ParsedCalendar::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let outcome = record
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_row(&rec, &idx, columns, opts));
        match outcome {
            Ok(event) => parsed.events.push(event),
            Err(message) if opts.strict => return Err(Error::MalformedRow { row, message }),
            Err(message) => {
                log::debug!("skipping calendar row {row}: {message}");
                parsed.skipped += 1;
            }
        }
    }
    Ok(parsed)
}

fn parse_row(
    rec: &::csv::StringRecord,
    idx: &Indices,
    columns: &ColumnMap,
    opts: &CalendarOptions,
) -> std::result::Result<CalendarEvent, String> {
    let field = |i: usize, name: &str| rec.get(i).ok_or_else(|| format!("row has no {name:?} field"));
    let subject = field(idx.subject, &columns.subject)?.trim().to_string();

    let stamp = |date_i: usize, time_i: usize, which: &str| -> std::result::Result<Instant, String> {
        let date_s = field(date_i, which)?;
        let time_s = field(time_i, which)?;
        let date = NaiveDate::parse_from_str(date_s.trim(), &columns.date_format)
            .map_err(|_| format!("unparseable {which} date {date_s:?}"))?;
        let time = parse_time(time_s, &columns.time_format)
            .ok_or_else(|| format!("unparseable {which} time {time_s:?}"))?;
        Instant::from_local(date.and_time(time), opts.home_tz)
            .ok_or_else(|| format!("{which} {date} {time} does not exist in {}", opts.home_tz))
    };
    let start = stamp(idx.start_date, idx.start_time, "start")?;
    let end = stamp(idx.end_date, idx.end_time, "end")?;
    let interval = Interval::new(start, end).map_err(|e| e.to_string())?;

    let flag = field(idx.all_day, &columns.all_day)?;
    let all_day = parse_flag(flag).ok_or_else(|| format!("unparseable all-day flag {flag:?}"))?;

    let category = idx
        .category
        .and_then(|i| rec.get(i))
        .and_then(Category::parse)
        .unwrap_or_else(|| opts.rules.classify(&subject));

    Ok(CalendarEvent { subject, interval, all_day, category })
}
