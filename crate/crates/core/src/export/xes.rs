use std::io::{BufWriter, Write};

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

use super::{format_float, sink_error};
use crate::error::Result;
use crate::log::{AttrValue, Attributes, EventLog};
use crate::temporal::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleMode {
    /// A `start` and a `complete` event per activity.
    #[default]
    Pair,
    /// One event at the start time carrying a `duration_min` attribute.
    Duration,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct XesOptions {
    pub lifecycle: LifecycleMode,
}

const HEADER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="2.0" xes.features="" xmlns="http://www.xes-standard.org/">
  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>
  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>
  <extension name="Lifecycle" prefix="lifecycle" uri="http://www.xes-standard.org/lifecycle.xesext"/>
  <global scope="trace">
    <string key="concept:name" value="__INVALID__"/>
  </global>
  <global scope="event">
    <string key="concept:name" value="__INVALID__"/>
    <date key="time:timestamp" value="1970-01-01T00:00:00+00:00"/>
  </global>
  <classifier name="Activity" keys="concept:name"/>
"#;

fn attribute<W: Write>(w: &mut W, indent: &str, key: &str, value: &AttrValue) -> std::io::Result<()> {
    let key = escape(key);
    match value {
        AttrValue::Int(v) => writeln!(w, r#"{indent}<float key="{key}" value="{v}"/>"#),
        AttrValue::Float(v) => writeln!(w, r#"{indent}<float key="{key}" value="{}"/>"#, format_float(*v)),
        AttrValue::Bool(v) => writeln!(w, r#"{indent}<boolean key="{key}" value="{v}"/>"#),
        AttrValue::Str(s) => writeln!(w, r#"{indent}<string key="{key}" value="{}"/>"#, escape(s.as_str())),
    }
}

fn event<W: Write>(
    w: &mut W,
    name: &str,
    at: Instant,
    transition: Option<&str>,
    origin: &str,
    attrs: &Attributes,
    duration_min: Option<f64>,
) -> std::io::Result<()> {
    writeln!(w, "    <event>")?;
    writeln!(w, r#"      <string key="concept:name" value="{}"/>"#, escape(name))?;
    writeln!(w, r#"      <date key="time:timestamp" value="{}"/>"#, at.to_rfc3339())?;
    if let Some(t) = transition {
        writeln!(w, r#"      <string key="lifecycle:transition" value="{t}"/>"#)?;
    }
    writeln!(w, r#"      <string key="origin" value="{origin}"/>"#)?;
    if let Some(d) = duration_min {
        writeln!(w, r#"      <float key="duration_min" value="{}"/>"#, format_float(d))?;
    }
    for (k, v) in attrs {
        attribute(w, "      ", k, v)?;
    }
    writeln!(w, "    </event>")
}

/// Writes one trace per case; case attributes become trace attributes.
/// Returns the number of traces written.
pub fn export_xes<W: Write>(log: &EventLog, sink: W, options: XesOptions) -> Result<usize> {
    let mut w = BufWriter::new(sink);
    write_xes(log, &mut w, options).map_err(sink_error)?;
    w.flush().map_err(sink_error)?;
    Ok(log.cases.len())
}

fn write_xes<W: Write>(log: &EventLog, w: &mut W, options: XesOptions) -> std::io::Result<()> {
    let tz = log.home_tz;
    w.write_all(HEADER.as_bytes())?;
    for case in &log.cases {
        writeln!(w, "  <trace>")?;
        writeln!(w, r#"    <string key="concept:name" value="{}"/>"#, case.case_id)?;
        for (k, v) in &case.attributes {
            attribute(w, "    ", k, v)?;
        }
        for ev in &case.events {
            let start = ev.interval.start().in_zone(tz);
            let origin = ev.origin.label();
            match options.lifecycle {
                LifecycleMode::Pair => {
                    event(w, &ev.activity, start, Some("start"), origin, &ev.attributes, None)?;
                    let end = ev.interval.end().in_zone(tz);
                    event(w, &ev.activity, end, Some("complete"), origin, &ev.attributes, None)?;
                }
                LifecycleMode::Duration => {
                    event(w, &ev.activity, start, None, origin, &ev.attributes, Some(ev.interval.minutes()))?;
                }
            }
        }
        writeln!(w, "  </trace>")?;
    }
    writeln!(w, "</log>")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{CalendarEvent, Category};
    use crate::log::{segment_cases, AttrType, TOTAL_SLEEP_MIN};
    use crate::temporal::Interval;
    use quick_xml::events::Event;
    use quick_xml::Reader;

    fn count_elements(xml: &[u8], name: &[u8]) -> usize {
        let mut reader = Reader::from_reader(xml);
        let mut buf = Vec::new();
        let mut n = 0;
        loop {
            match reader.read_event_into(&mut buf).expect("well-formed") {
                Event::Start(e) | Event::Empty(e) if e.name().as_ref() == name => n += 1,
                Event::Eof => return n,
                _ => {}
            }
            buf.clear();
        }
    }

    fn log(days: i64) -> EventLog {
        let t = Instant::from_unix(1_747_036_800);
        let events = (0..days)
            .map(|d| CalendarEvent {
                subject: "A & <B>".into(),
                interval: Interval::new(t + chrono::Duration::days(d), t + chrono::Duration::days(d) + chrono::Duration::hours(1)).unwrap(),
                all_day: false,
                category: Category::Work,
            })
            .collect();
        segment_cases(events, chrono_tz::Europe::Amsterdam, false)
    }

    #[test]
    fn one_trace_per_case() {
        let mut out = Vec::new();
        assert_eq!(export_xes(&log(3), &mut out, XesOptions::default()).unwrap(), 3);
        assert_eq!(count_elements(&out, b"trace"), 3);
        assert_eq!(count_elements(&out, b"event"), 6);
    }

    #[test]
    fn empty_log_is_valid() {
        let mut out = Vec::new();
        assert_eq!(export_xes(&EventLog::empty(chrono_tz::UTC), &mut out, XesOptions::default()).unwrap(), 0);
        assert_eq!(count_elements(&out, b"trace"), 0);
        assert_eq!(count_elements(&out, b"log"), 1);
    }

    #[test]
    fn case_attribute_as_trace_float() {
        let mut l = log(1);
        l.schema.declare_case(TOTAL_SLEEP_MIN, AttrType::Float);
        l.cases[0].attributes.insert(TOTAL_SLEEP_MIN.into(), AttrValue::Float(390.0));
        let mut out = Vec::new();
        export_xes(&l, &mut out, XesOptions { lifecycle: LifecycleMode::Duration }).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("  <trace>\n    <string key=\"concept:name\" value=\"2025-05-12\"/>\n    <boolean key=\"is_workday\" value=\"true\"/>\n    <float key=\"total_sleep_min\" value=\"390\"/>\n"));
        assert!(text.contains(r#"<float key="duration_min" value="60"/>"#));
        assert!(text.contains("A &amp; &lt;B&gt;"));
        assert_eq!(count_elements(text.as_bytes(), b"event"), 1);
    }
}
