//! Minimal iCalendar (RFC 5545) reader for `VEVENT` components.
//!
//! Only the occurrences literally present in the file are produced; `RRULE`
//! expansion is not performed.

use std::io::Read;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use chrono_tz::Tz;

use super::{CalendarEvent, CalendarOptions, Category, ParsedCalendar};
use crate::error::{Error, Result};
use crate::temporal::{Instant, Interval};

struct ContentLine {
    line: usize,
    name: String,
    params: Vec<(String, String)>,
    value: String,
}

impl ContentLine {
    fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }
}

/// Joins folded lines; yields (first physical line number, logical line).
fn unfold(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(rest) = raw.strip_prefix([' ', '\t']) {
            if let Some((_, last)) = out.last_mut() {
                last.push_str(rest);
                continue;
            }
        }
        if !raw.is_empty() {
            out.push((i + 1, raw.to_string()));
        }
    }
    out
}

fn parse_line(line: usize, text: &str) -> std::result::Result<ContentLine, String> {
    let mut in_quotes = false;
    let mut colon = None;
    for (i, c) in text.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ':' if !in_quotes => {
                colon = Some(i);
                break;
            }
            _ => {}
        }
    }
    let colon = colon.ok_or_else(|| format!("content line without ':' {text:?}"))?;
    let (head, value) = (&text[..colon], &text[colon + 1..]);
    let mut parts = head.split(';');
    let name = parts.next().unwrap_or_default().trim().to_ascii_uppercase();
    if name.is_empty() {
        return Err("content line without a property name".into());
    }
    let params = parts
        .filter_map(|p| p.split_once('='))
        .map(|(k, v)| (k.trim().to_ascii_uppercase(), v.trim_matches('"').to_string()))
        .collect();
    Ok(ContentLine { line, name, params, value: value.to_string() })
}

fn unescape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') | Some('N') => out.push('\n'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

enum Stamp {
    Date(NaiveDate),
    DateTime(Instant),
}

fn parse_stamp(prop: &ContentLine, home: Tz) -> std::result::Result<Stamp, String> {
    let value = prop.value.trim();
    let is_date = prop.param("VALUE").is_some_and(|v| v.eq_ignore_ascii_case("DATE")) || value.len() == 8;
    if is_date {
        return NaiveDate::parse_from_str(value, "%Y%m%d")
            .map(Stamp::Date)
            .map_err(|_| format!("bad DATE value {value:?}"));
    }
    let (body, utc) = match value.strip_suffix(['Z', 'z']) {
        Some(b) => (b, true),
        None => (value, false),
    };
    let naive = NaiveDateTime::parse_from_str(body, "%Y%m%dT%H%M%S")
        .map_err(|_| format!("bad DATE-TIME value {value:?}"))?;
    let zone = if utc {
        chrono_tz::UTC
    } else {
        match prop.param("TZID") {
            Some(id) => id.parse::<Tz>().unwrap_or_else(|_| {
                log::warn!("unknown TZID {id:?}; interpreting as {home}");
                home
            }),
            None => home,
        }
    };
    Instant::from_local(naive, zone)
        .map(|t| Stamp::DateTime(t.in_zone(home)))
        .ok_or_else(|| format!("{value:?} does not exist in {zone}"))
}

/// Parses an RFC 5545 `dur-value` such as `PT1H30M`, `P1D` or `-P2W`.
fn parse_duration(s: &str) -> Option<Duration> {
    let s = s.trim();
    let (sign, rest) = match s.as_bytes().first()? {
        b'-' => (-1, &s[1..]),
        b'+' => (1, &s[1..]),
        _ => (1, s),
    };
    let rest = rest.strip_prefix('P')?;
    let mut total = Duration::zero();
    let mut num = String::new();
    let mut in_time = false;
    let mut any = false;
    for c in rest.chars() {
        match c {
            '0'..='9' => num.push(c),
            'T' if !in_time && num.is_empty() => in_time = true,
            _ => {
                let n: i64 = num.parse().ok()?;
                num.clear();
                any = true;
                total += match (c, in_time) {
                    ('W', false) => Duration::weeks(n),
                    ('D', false) => Duration::days(n),
                    ('H', true) => Duration::hours(n),
                    ('M', true) => Duration::minutes(n),
                    ('S', true) => Duration::seconds(n),
                    _ => return None,
                };
            }
        }
    }
    (any && num.is_empty()).then_some(total * sign)
}

#[derive(Default)]
struct PendingEvent {
    line: usize,
    summary: Option<String>,
    start: Option<ContentLine>,
    end: Option<ContentLine>,
    duration: Option<ContentLine>,
    categories: Option<String>,
}

fn build_event(ev: PendingEvent, opts: &CalendarOptions) -> std::result::Result<CalendarEvent, (usize, String)> {
    let line = ev.line;
    let start_prop = ev.start.ok_or((line, "VEVENT without DTSTART".to_string()))?;
    let home = opts.home_tz;
    let start = parse_stamp(&start_prop, home).map_err(|m| (start_prop.line, m))?;
    let end = match &ev.end {
        Some(p) => Some(parse_stamp(p, home).map_err(|m| (p.line, m))?),
        None => None,
    };
    let duration = match &ev.duration {
        Some(p) => Some(parse_duration(&p.value).ok_or((p.line, format!("bad DURATION {:?}", p.value)))?),
        None => None,
    };

    let (interval, all_day) = match (start, end) {
        (Stamp::Date(d0), end) => {
            let d1 = match end {
                Some(Stamp::Date(d1)) => d1,
                Some(Stamp::DateTime(_)) => return Err((line, "DTEND type differs from DTSTART".into())),
                None => duration
                    .map(|dur| d0 + Duration::days(dur.num_days().max(1)))
                    .unwrap_or_else(|| d0 + Duration::days(1)),
            };
            let iv = Interval::new(Instant::start_of_day(d0, home), Instant::start_of_day(d1, home))
                .map_err(|e| (line, e.to_string()))?;
            (iv, true)
        }
        (Stamp::DateTime(t0), end) => {
            let t1 = match end {
                Some(Stamp::DateTime(t1)) => t1,
                Some(Stamp::Date(_)) => return Err((line, "DTEND type differs from DTSTART".into())),
                None => t0 + duration.unwrap_or_else(Duration::zero),
            };
            (Interval::new(t0, t1).map_err(|e| (line, e.to_string()))?, false)
        }
    };

    let subject = ev.summary.unwrap_or_default();
    let category = ev
        .categories
        .as_deref()
        .and_then(Category::parse)
        .unwrap_or_else(|| opts.rules.classify(&subject));
    Ok(CalendarEvent { subject, interval, all_day, category })
}

pub fn parse_calendar_ics<R: Read>(mut input: R, opts: &CalendarOptions) -> Result<ParsedCalendar> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;

    let mut parsed = ParsedCalendar::default();
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<PendingEvent> = None;
    let mut seen_calendar = false;
    let mut broken_event = false;

    for (line, raw) in unfold(&text) {
        let prop = match parse_line(line, &raw) {
            Ok(p) => p,
            Err(message) if current.is_some() && !opts.strict => {
                log::debug!("bad content line {line}: {message}");
                broken_event = true;
                continue;
            }
            Err(message) => return Err(Error::MalformedIcs { line, message }),
        };
        match prop.name.as_str() {
            "BEGIN" => {
                let comp = prop.value.trim().to_ascii_uppercase();
                if stack.is_empty() && comp != "VCALENDAR" {
                    return Err(Error::MalformedIcs { line, message: format!("expected VCALENDAR, found {comp}") });
                }
                if comp == "VCALENDAR" {
                    seen_calendar = true;
                }
                if comp == "VEVENT" && stack.len() == 1 {
                    current = Some(PendingEvent { line, ..PendingEvent::default() });
                    broken_event = false;
                }
                stack.push(comp);
            }
            "END" => {
                let comp = prop.value.trim().to_ascii_uppercase();
                if stack.pop().as_deref() != Some(comp.as_str()) {
                    return Err(Error::MalformedIcs { line, message: format!("unbalanced END:{comp}") });
                }
                if comp == "VEVENT" && stack.len() == 1 {
                    let ev = current.take().expect("open VEVENT");
                    let outcome = if broken_event {
                        Err((ev.line, "VEVENT contains malformed lines".to_string()))
                    } else {
                        build_event(ev, opts)
                    };
                    match outcome {
                        Ok(event) => parsed.events.push(event),
                        Err((line, message)) if opts.strict => return Err(Error::MalformedIcs { line, message }),
                        Err((line, message)) => {
                            log::debug!("skipping VEVENT at line {line}: {message}");
                            parsed.skipped += 1;
                        }
                    }
                }
            }
            _ if stack.len() == 2 && stack[1] == "VEVENT" => {
                let ev = current.as_mut().expect("open VEVENT");
                match prop.name.as_str() {
                    "SUMMARY" => ev.summary = Some(unescape_text(&prop.value)),
                    "CATEGORIES" => ev.categories = Some(unescape_text(&prop.value)),
                    "DTSTART" => ev.start = Some(prop),
                    "DTEND" => ev.end = Some(prop),
                    "DURATION" => ev.duration = Some(prop),
                    _ => {}
                }
            }
            _ => {}
        }
    }

    if !seen_calendar {
        return Err(Error::MalformedIcs { line: 0, message: "no VCALENDAR component".into() });
    }
    if let Some(open) = stack.last() {
        return Err(Error::MalformedIcs { line: 0, message: format!("unterminated {open}") });
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> CalendarOptions {
        CalendarOptions { home_tz: chrono_tz::Europe::Amsterdam, ..CalendarOptions::default() }
    }

    fn cal(body: &str) -> String {
        format!("BEGIN:VCALENDAR\r\nVERSION:2.0\r\nPRODID:-//test//EN\r\n{body}END:VCALENDAR\r\n")
    }

    #[test]
    fn timed_event() {
        let ics = cal(
            "BEGIN:VEVENT\r\nUID:1\r\nSUMMARY:IPO U\r\nDTSTART;TZID=Europe/Amsterdam:20250512T100000\r\n\
             DTEND;TZID=Europe/Amsterdam:20250512T110000\r\nEND:VEVENT\r\n",
        );
        let parsed = parse_calendar_ics(ics.as_bytes(), &opts()).unwrap();
        assert_eq!(parsed.events.len(), 1);
        let e = &parsed.events[0];
        assert_eq!(e.subject, "IPO U");
        assert!(!e.all_day);
        assert_eq!(e.interval.start().to_rfc3339(), "2025-05-12T10:00:00+02:00");
        assert_eq!(e.interval.minutes(), 60.0);
    }

    #[test]
    fn date_valued_is_all_day() {
        let ics = cal("BEGIN:VEVENT\r\nSUMMARY:Holiday\r\nDTSTART;VALUE=DATE:20250512\r\nEND:VEVENT\r\n");
        let parsed = parse_calendar_ics(ics.as_bytes(), &opts()).unwrap();
        assert!(parsed.events[0].all_day);
        assert_eq!(parsed.events[0].interval.minutes(), 1440.0);
    }

    #[test]
    fn empty_calendar() {
        let parsed = parse_calendar_ics(cal("").as_bytes(), &opts()).unwrap();
        assert!(parsed.events.is_empty());
    }

    #[test]
    fn utc_folding_escapes_and_duration() {
        let ics = cal(
            "BEGIN:VEVENT\r\nSUMMARY:Review\\, part 1\r\n  continued\r\nDTSTART:20250512T080000Z\r\n\
             DURATION:PT1H30M\r\nBEGIN:VALARM\r\nTRIGGER:-PT15M\r\nDTSTART:19700101T000000\r\nEND:VALARM\r\n\
             RRULE:FREQ=WEEKLY\r\nEND:VEVENT\r\n",
        );
        let parsed = parse_calendar_ics(ics.as_bytes(), &opts()).unwrap();
        let e = &parsed.events[0];
        assert_eq!(e.subject, "Review, part 1 continued");
        assert_eq!(e.interval.start().to_rfc3339(), "2025-05-12T10:00:00+02:00");
        assert_eq!(e.interval.minutes(), 90.0);
    }

    #[test]
    fn malformed_event_skipped_or_fatal() {
        let ics = cal(
            "BEGIN:VEVENT\r\nSUMMARY:No start\r\nEND:VEVENT\r\n\
             BEGIN:VEVENT\r\nSUMMARY:Ok\r\nDTSTART:20250512T080000Z\r\nDTEND:20250512T090000Z\r\nEND:VEVENT\r\n",
        );
        let parsed = parse_calendar_ics(ics.as_bytes(), &opts()).unwrap();
        assert_eq!((parsed.events.len(), parsed.skipped), (1, 1));
        let strict = CalendarOptions { strict: true, ..opts() };
        assert!(matches!(parse_calendar_ics(ics.as_bytes(), &strict), Err(Error::MalformedIcs { .. })));
    }

    #[test]
    fn structural_errors_are_fatal() {
        for bad in ["", "BEGIN:VEVENT\r\nEND:VEVENT\r\n", "BEGIN:VCALENDAR\r\nBEGIN:VEVENT\r\n"] {
            assert!(matches!(parse_calendar_ics(bad.as_bytes(), &opts()), Err(Error::MalformedIcs { .. })), "{bad:?}");
        }
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("PT1H30M"), Some(Duration::minutes(90)));
        assert_eq!(parse_duration("P1D"), Some(Duration::days(1)));
        assert_eq!(parse_duration("-P2W"), Some(Duration::weeks(-2)));
        assert_eq!(parse_duration("P1DT2H"), Some(Duration::hours(26)));
        assert_eq!(parse_duration("PT"), None);
        assert_eq!(parse_duration("1H"), None);
    }
}
