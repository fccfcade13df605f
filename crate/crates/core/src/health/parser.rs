use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{
    HealthBundle, HealthSample, IngestConfig, SampleKind, SleepEpisode, SleepStage, Workout,
    HRV_SDNN_TYPE, RESTING_HR_TYPE, SLEEP_ANALYSIS_TYPE, WORKOUT_ACTIVITY_PREFIX,
};
use crate::error::{Error, Result};
use crate::temporal::{Instant, Interval};

const ROOT: &[u8] = b"HealthData";
const RECORD: &[u8] = b"Record";
const WORKOUT: &[u8] = b"Workout";

#[derive(Debug, Clone, PartialEq)]
pub enum HealthItem {
    Sample(HealthSample),
    Sleep(SleepEpisode),
    Workout(Workout),
}

impl HealthItem {
    pub fn start(&self) -> Instant {
        match self {
            HealthItem::Sample(s) => s.at,
            HealthItem::Sleep(e) => e.interval.start(),
            HealthItem::Workout(w) => w.interval.start(),
        }
    }
}

/// Counters kept while streaming through an export.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    /// `Record` and `Workout` elements seen.
    pub records: usize,
    pub emitted: usize,
    pub skipped: usize,
    /// Records whose type is not one we extract.
    pub ignored: usize,
}

/// Attributes of a single record, the only per-record state the reader keeps.
#[derive(Default)]
struct RawRecord {
    kind: String,
    value: Option<String>,
    source: Option<String>,
    start: Option<String>,
    end: Option<String>,
    activity: Option<String>,
}

/// Forward-only reader over an Apple Health export.
///
/// Each call to `next` scans until the next extractable record and hands it
/// out by value; nothing about earlier records stays behind apart from the
/// counters in [`ReadStats`].
pub struct HealthReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    skip_buf: Vec<u8>,
    config: IngestConfig,
    stats: ReadStats,
    depth: usize,
    seen_root: bool,
    done: bool,
}

impl<R: BufRead> HealthReader<R> {
    pub fn new(input: R, config: IngestConfig) -> Self {
        let mut reader = Reader::from_reader(input);
        reader.config_mut().trim_text(true);
        HealthReader {
            reader,
            buf: Vec::with_capacity(1024),
            skip_buf: Vec::with_capacity(1024),
            config,
            stats: ReadStats::default(),
            depth: 0,
            seen_root: false,
            done: false,
        }
    }

    pub fn stats(&self) -> ReadStats {
        self.stats
    }

    /// Bytes held in the reader's scratch buffers. Bounded by the largest
    /// single element, not by how many records were read.
    pub fn retained_capacity(&self) -> usize {
        self.buf.capacity() + self.skip_buf.capacity()
    }

    fn xml_error(&self, message: impl Into<String>) -> Error {
        Error::MalformedXml {
            position: self.reader.buffer_position(),
            message: message.into(),
        }
    }

    fn read_item(&mut self) -> Result<Option<HealthItem>> {
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev,
                Err(e) => {
                    let msg = e.to_string();
                    return Err(self.xml_error(msg));
                }
            };
            let (start, has_children) = match event {
                Event::Start(e) => (e, true),
                Event::Empty(e) => (e, false),
                Event::End(_) => {
                    self.depth = self.depth.saturating_sub(1);
                    continue;
                }
                Event::Eof => {
                    if !self.seen_root {
                        return Err(self.xml_error("document has no HealthData root element"));
                    }
                    if self.depth > 0 {
                        return Err(self.xml_error("unexpected end of document"));
                    }
                    return Ok(None);
                }
                _ => continue,
            };

            let name = start.name();
            if !self.seen_root {
                if name.as_ref() != ROOT {
                    let found = String::from_utf8_lossy(name.as_ref()).into_owned();
                    return Err(self.xml_error(format!("expected HealthData root, found {found:?}")));
                }
                self.seen_root = true;
                if has_children {
                    self.depth += 1;
                }
                continue;
            }

            let is_record = name.as_ref() == RECORD;
            let is_workout = name.as_ref() == WORKOUT;
            if !is_record && !is_workout {
                if has_children {
                    self.depth += 1;
                }
                continue;
            }

            self.stats.records += 1;
            let raw = read_attributes(&start);
            if has_children {
                let end = start.to_end().into_owned();
                self.skip_buf.clear();
                if let Err(e) = self.reader.read_to_end_into(end.name(), &mut self.skip_buf) {
                    let msg = e.to_string();
                    return Err(self.xml_error(msg));
                }
            }
            let raw = match raw {
                Ok(raw) => raw,
                Err(msg) => {
                    self.reject(msg)?;
                    continue;
                }
            };

            let converted = if is_workout {
                convert_workout(raw, &self.config).map(Some)
            } else {
                convert_record(raw, &self.config)
            };
            match converted {
                Ok(Some(item)) => {
                    self.stats.emitted += 1;
                    return Ok(Some(item));
                }
                Ok(None) => self.stats.ignored += 1,
                Err(msg) => self.reject(msg)?,
            }
        }
    }

    fn reject(&mut self, message: String) -> Result<()> {
        if self.config.strict {
            return Err(Error::MalformedRecord { record: self.stats.records, message });
        }
        log::debug!("skipping record #{}: {message}", self.stats.records);
        self.stats.skipped += 1;
        Ok(())
    }
}

impl<R: BufRead> Iterator for HealthReader<R> {
    type Item = Result<HealthItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_item() {
            Ok(Some(item)) => Some(Ok(item)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn read_attributes(start: &BytesStart<'_>) -> std::result::Result<RawRecord, String> {
    let mut raw = RawRecord::default();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| format!("bad attribute: {e}"))?;
        let slot = match attr.key.as_ref() {
            b"type" => None,
            b"value" => Some(&mut raw.value),
            b"sourceName" => Some(&mut raw.source),
            b"startDate" => Some(&mut raw.start),
            b"endDate" => Some(&mut raw.end),
            b"workoutActivityType" => Some(&mut raw.activity),
            _ => continue,
        };
        let value = attr
            .unescape_value()
            .map_err(|e| format!("bad attribute value: {e}"))?
            .into_owned();
        match slot {
            Some(slot) => *slot = Some(value),
            None => raw.kind = value,
        }
    }
    Ok(raw)
}

fn instant(raw: &Option<String>, name: &str, config: &IngestConfig) -> std::result::Result<Instant, String> {
    let text = raw.as_deref().ok_or_else(|| format!("missing {name}"))?;
    Instant::parse_apple(text)
        .map(|t| t.in_zone(config.home_tz))
        .ok_or_else(|| format!("unparseable {name} {text:?}"))
}

fn span(raw: &RawRecord, config: &IngestConfig) -> std::result::Result<Interval, String> {
    let start = instant(&raw.start, "startDate", config)?;
    let end = instant(&raw.end, "endDate", config)?;
    if start >= end {
        return Err(format!("endDate {end} does not follow startDate {start}"));
    }
    Interval::new(start, end).map_err(|e| e.to_string())
}

fn numeric_value(raw: &RawRecord) -> std::result::Result<f64, String> {
    let text = raw.value.as_deref().ok_or("missing value")?;
    text.trim()
        .parse::<f64>()
        .map_err(|_| format!("unparseable value {text:?}"))
}

fn convert_record(raw: RawRecord, config: &IngestConfig) -> std::result::Result<Option<HealthItem>, String> {
    let source = raw.source.clone().unwrap_or_default();
    match raw.kind.as_str() {
        "" => Err("record without type".into()),
        HRV_SDNN_TYPE => {
            let value = numeric_value(&raw)?;
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("SDNN {value} out of range"));
            }
            let at = instant(&raw.start, "startDate", config)?;
            Ok(Some(HealthItem::Sample(HealthSample { kind: SampleKind::HrvSdnn, at, value, source })))
        }
        RESTING_HR_TYPE => {
            let value = numeric_value(&raw)?;
            if !(value > 20.0 && value < 250.0) {
                return Err(format!("resting heart rate {value} out of range"));
            }
            let at = instant(&raw.start, "startDate", config)?;
            Ok(Some(HealthItem::Sample(HealthSample {
                kind: SampleKind::RestingHeartRate,
                at,
                value,
                source,
            })))
        }
        SLEEP_ANALYSIS_TYPE => {
            let interval = span(&raw, config)?;
            let stage = SleepStage::from_export_value(raw.value.as_deref().unwrap_or(""));
            Ok(Some(HealthItem::Sleep(SleepEpisode { interval, stage, source })))
        }
        _ => Ok(None),
    }
}

fn convert_workout(raw: RawRecord, config: &IngestConfig) -> std::result::Result<HealthItem, String> {
    let interval = span(&raw, config)?;
    let activity = raw.activity.as_deref().ok_or("missing workoutActivityType")?;
    let activity = activity.strip_prefix(WORKOUT_ACTIVITY_PREFIX).unwrap_or(activity);
    if activity.is_empty() {
        return Err("empty workoutActivityType".into());
    }
    Ok(HealthItem::Workout(Workout {
        interval,
        activity: activity.to_string(),
        source: raw.source.unwrap_or_default(),
    }))
}

/// Streams the export, handing each extracted item to `on_item` in document order.
pub fn for_each_item<R, F>(input: R, config: IngestConfig, mut on_item: F) -> Result<ReadStats>
where
    R: BufRead,
    F: FnMut(HealthItem),
{
    let mut reader = HealthReader::new(input, config);
    for item in reader.by_ref() {
        on_item(item?);
    }
    Ok(reader.stats())
}

pub fn parse_health_export<R: BufRead>(input: R, config: IngestConfig) -> Result<HealthBundle> {
    let mut bundle = HealthBundle::default();
    let stats = for_each_item(input, config, |item| match item {
        HealthItem::Sample(s) => bundle.samples.push(s),
        HealthItem::Sleep(e) => bundle.sleep.push(e),
        HealthItem::Workout(w) => bundle.workouts.push(w),
    })?;
    bundle.skipped_records = stats.skipped;
    bundle.ignored_records = stats.ignored;

    bundle.samples.sort_by_key(|s| s.at);
    bundle.sleep.sort_by_key(|e| (e.interval.start(), e.interval.end()));
    bundle.workouts.sort_by_key(|w| (w.interval.start(), w.interval.end()));

    let spans = bundle
        .samples
        .iter()
        .map(|s| (s.at, s.at))
        .chain(bundle.sleep.iter().map(|e| (e.interval.start(), e.interval.end())))
        .chain(bundle.workouts.iter().map(|w| (w.interval.start(), w.interval.end())));
    bundle.date_range = spans
        .reduce(|(a0, a1), (b0, b1)| (a0.min(b0), a1.max(b1)))
        .map(|(start, end)| Interval::new(start, end).expect("hull is ordered"));
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(xml: &str) -> Result<HealthBundle> {
        parse_health_export(xml.as_bytes(), IngestConfig::default())
    }

    fn doc(body: &str) -> String {
        format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<HealthData locale=\"en_NL\">\n{body}\n</HealthData>\n")
    }

    fn sleep_record(value: &str, start: &str, end: &str) -> String {
        format!(
            "<Record type=\"{SLEEP_ANALYSIS_TYPE}\" sourceName=\"Watch\" startDate=\"{start}\" endDate=\"{end}\" value=\"HKCategoryValueSleepAnalysis{value}\"/>"
        )
    }

    #[test]
    fn single_sdnn_record() {
        let xml = doc(&format!(
            "<Record type=\"{HRV_SDNN_TYPE}\" sourceName=\"Apple Watch\" unit=\"ms\" \
             startDate=\"2025-01-10 09:30:00 +0100\" endDate=\"2025-01-10 09:31:00 +0100\" value=\"55.3\"/>"
        ));
        let bundle = parse(&xml).unwrap();
        assert_eq!(bundle.samples.len(), 1);
        let s = &bundle.samples[0];
        assert_eq!(s.kind, SampleKind::HrvSdnn);
        assert_eq!(s.value, 55.3);
        assert_eq!(s.at, Instant::parse_apple("2025-01-10 09:30:00 +0100").unwrap());
        assert_eq!(s.source, "Apple Watch");
    }

    #[test]
    fn empty_health_data() {
        let bundle = parse(&doc("")).unwrap();
        assert!(bundle.samples.is_empty() && bundle.sleep.is_empty() && bundle.workouts.is_empty());
        assert_eq!(bundle.skipped_records, 0);
        assert_eq!(bundle.date_range, None);
        let bundle = parse("<HealthData/>").unwrap();
        assert_eq!(bundle, HealthBundle::default());
    }

    #[test]
    fn three_sleep_stages() {
        let xml = doc(&[
            sleep_record("AsleepDeep", "2025-01-10 23:30:00 +0100", "2025-01-11 00:10:00 +0100"),
            sleep_record("AsleepCore", "2025-01-11 00:10:00 +0100", "2025-01-11 06:00:00 +0100"),
            sleep_record("Awake", "2025-01-11 06:00:00 +0100", "2025-01-11 06:20:00 +0100"),
        ]
        .join("\n"));
        let bundle = parse(&xml).unwrap();
        let stages: Vec<_> = bundle.sleep.iter().map(|e| e.stage).collect();
        assert_eq!(stages, [SleepStage::Deep, SleepStage::Core, SleepStage::Awake]);
        let mins: Vec<_> = bundle.sleep.iter().map(|e| e.interval.minutes()).collect();
        assert_eq!(mins, [40.0, 350.0, 20.0]);
    }

    #[test]
    fn stage_mapping() {
        for (value, stage) in [
            ("AsleepREM", SleepStage::Rem),
            ("InBed", SleepStage::InBedUnspecified),
            ("AsleepUnspecified", SleepStage::InBedUnspecified),
            ("SomethingNew", SleepStage::InBedUnspecified),
        ] {
            assert_eq!(SleepStage::from_export_value(&format!("HKCategoryValueSleepAnalysis{value}")), stage);
        }
    }

    #[test]
    fn records_with_children_and_workouts() {
        let xml = doc(&format!(
            "<Record type=\"{HRV_SDNN_TYPE}\" sourceName=\"Watch\" startDate=\"2025-01-10 09:30:00 +0100\" endDate=\"2025-01-10 09:31:00 +0100\" value=\"40\">\n\
               <MetadataEntry key=\"HKMetadataKeyTimeZone\" value=\"Europe/Amsterdam\"/>\n\
               <HeartRateVariabilityMetadataList><InstantaneousBeatsPerMinute bpm=\"61\" time=\"9:30:01.00 AM\"/></HeartRateVariabilityMetadataList>\n\
             </Record>\n\
             <Workout workoutActivityType=\"HKWorkoutActivityTypeWalking\" duration=\"30\" sourceName=\"Watch\" startDate=\"2025-01-10 12:10:00 +0100\" endDate=\"2025-01-10 12:40:00 +0100\">\n\
               <WorkoutStatistics type=\"HKQuantityTypeIdentifierActiveEnergyBurned\" sum=\"100\"/>\n\
             </Workout>\n\
             <Record type=\"HKQuantityTypeIdentifierStepCount\" startDate=\"2025-01-10 09:00:00 +0100\" endDate=\"2025-01-10 09:10:00 +0100\" value=\"300\"/>"
        ));
        let bundle = parse(&xml).unwrap();
        assert_eq!(bundle.samples.len(), 1);
        assert_eq!(bundle.workouts.len(), 1);
        assert_eq!(bundle.workouts[0].activity, "Walking");
        assert_eq!(bundle.ignored_records, 1);
        assert_eq!(bundle.skipped_records, 0);
    }

    #[test]
    fn malformed_records_skipped_or_fatal() {
        let xml = doc(&format!(
            "<Record type=\"{HRV_SDNN_TYPE}\" startDate=\"yesterday\" value=\"40\"/>\n\
             <Record type=\"{RESTING_HR_TYPE}\" startDate=\"2025-01-10 07:00:00 +0100\" value=\"300\"/>\n\
             <Record type=\"{HRV_SDNN_TYPE}\" startDate=\"2025-01-10 09:30:00 +0100\" value=\"-4\"/>\n\
             <Record type=\"{RESTING_HR_TYPE}\" startDate=\"2025-01-10 07:00:00 +0100\" value=\"58\"/>"
        ));
        let bundle = parse(&xml).unwrap();
        assert_eq!(bundle.skipped_records, 3);
        assert_eq!(bundle.samples.len(), 1);

        let strict = IngestConfig { strict: true, ..IngestConfig::default() };
        let err = parse_health_export(xml.as_bytes(), strict).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { record: 1, .. }));
    }

    #[test]
    fn malformed_xml_is_fatal() {
        for bad in [
            "<HealthData><Record type=\"x\"></HealthData>",
            "<HealthData>",
            "",
            "<Other/>",
        ] {
            assert!(matches!(parse(bad), Err(Error::MalformedXml { .. })), "{bad:?}");
        }
    }

    #[test]
    fn instants_normalized_to_home_zone() {
        let xml = doc(&format!(
            "<Record type=\"{HRV_SDNN_TYPE}\" startDate=\"2025-07-01 23:30:00 +0000\" value=\"40\"/>"
        ));
        let config = IngestConfig { home_tz: chrono_tz::Europe::Amsterdam, strict: false };
        let bundle = parse_health_export(xml.as_bytes(), config).unwrap();
        assert_eq!(bundle.samples[0].at.to_rfc3339(), "2025-07-02T01:30:00+02:00");
    }
}
