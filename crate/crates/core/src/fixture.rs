//! Deterministic synthetic calendar + health exports with known ground truth.
//!
//! Every random choice flows from [`FixtureSpec::seed`], so equal specs
//! produce byte-identical files. The manifest records what the pipeline is
//! expected to recover: matched events, per-night sleep totals, workouts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Read};

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use chrono_tz::Tz;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::health::{SleepStage, HRV_SDNN_TYPE, RESTING_HR_TYPE, SLEEP_ANALYSIS_TYPE, WORKOUT_ACTIVITY_PREFIX};
use crate::temporal::Instant;

const REFERENCE_PRESET: &str = include_str!("../presets/paper.toml");

const STEP_COUNT_TYPE: &str = "HKQuantityTypeIdentifierStepCount";
const MAX_EVENTS_PER_DAY: u32 = 8;

const WORK_SUBJECTS: &[&str] = &[
    "IPO U",
    "IPO E",
    "IPO K",
    "IPO R",
    "M weekly",
    "O sync",
    "F check-in",
    "Team meeting",
    "Focus block",
    "Lunch meeting",
    "Department drinks",
    "Manager one-on-one",
    "Research seminar",
    "Thesis supervision",
    "Grant review",
    "Course planning",
];
const PRIVATE_SUBJECTS: &[&str] = &["Dinner with friends", "Dentist", "Pick up kids", "Haircut", "Family call"];
const ALL_DAY_SUBJECTS: &[&str] = &["Out of office", "Public holiday", "Conference"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub home_tz: Tz,
    pub start_date: NaiveDate,
    /// Inclusive.
    pub end_date: NaiveDate,
    pub weekdays_only: bool,
    /// Inclusive range of timed events on a calendar day.
    pub events_per_day: (u32, u32),
    /// Forces the overall number of timed events when set.
    pub total_events: Option<usize>,
    pub all_day_events: usize,
    /// Fraction of timed events that receive at least one HRV sample.
    pub hrv_coverage: f64,
    pub samples_per_matched_event: (u32, u32),
    /// HRV samples per night, placed where no event can be.
    pub night_samples: u32,
    pub mean_sleep_min: f64,
    pub sleep_jitter_min: f64,
    pub awake_fraction: f64,
    pub deep_fraction: f64,
    pub rem_fraction: f64,
    pub missing_night_probability: f64,
    pub workout_probability: f64,
    pub ignored_records_per_day: u32,
    pub source_name: String,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 1,
            home_tz: chrono_tz::Europe::Amsterdam,
            start_date: NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid"),
            end_date: NaiveDate::from_ymd_opt(2025, 1, 19).expect("valid"),
            weekdays_only: true,
            events_per_day: (1, 4),
            total_events: None,
            all_day_events: 1,
            hrv_coverage: 0.7,
            samples_per_matched_event: (1, 3),
            night_samples: 2,
            mean_sleep_min: 450.0,
            sleep_jitter_min: 60.0,
            awake_fraction: 0.08,
            deep_fraction: 0.15,
            rem_fraction: 0.22,
            missing_night_probability: 0.0,
            workout_probability: 0.3,
            ignored_records_per_day: 2,
            source_name: "Test Apple Watch".into(),
        }
    }
}

impl FixtureSpec {
    /// The bundled reference preset, `presets/paper.toml`.
    pub fn paper() -> Self {
        toml::from_str(REFERENCE_PRESET).expect("bundled preset parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: FixtureSpec = toml::from_str(text).map_err(|e| Error::InvalidFixture(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidFixture(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.end_date < self.start_date {
            return bad("end_date precedes start_date");
        }
        if !unit(self.hrv_coverage) {
            return bad("hrv_coverage must lie in [0, 1]");
        }
        let (lo, hi) = self.events_per_day;
        if lo > hi || hi > MAX_EVENTS_PER_DAY {
            return bad("events_per_day must satisfy min <= max <= 8");
        }
        let (slo, shi) = self.samples_per_matched_event;
        if slo == 0 || slo > shi {
            return bad("samples_per_matched_event must satisfy 1 <= min <= max");
        }
        if !(self.mean_sleep_min >= 0.0 && self.sleep_jitter_min >= 0.0 && self.mean_sleep_min + self.sleep_jitter_min <= 660.0) {
            return bad("sleep durations must be nonnegative and below 11 hours");
        }
        if ![self.awake_fraction, self.deep_fraction, self.rem_fraction, self.missing_night_probability, self.workout_probability]
            .into_iter()
            .all(unit)
            || self.awake_fraction >= 1.0
            || self.deep_fraction + self.rem_fraction > 0.9
        {
            return bad("fractions and probabilities must lie in [0, 1]");
        }
        if let Some(total) = self.total_events {
            let days = self.calendar_days().len();
            if total < days * lo as usize || total > days * hi as usize {
                return bad("total_events cannot be spread over the calendar days within events_per_day");
            }
        }
        Ok(())
    }

    fn all_days(&self) -> Vec<NaiveDate> {
        self.start_date.iter_days().take_while(|d| *d <= self.end_date).collect()
    }

    fn calendar_days(&self) -> Vec<NaiveDate> {
        self.all_days()
            .into_iter()
            .filter(|d| !self.weekdays_only || !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightTruth {
    /// Evening date of the night.
    pub date: NaiveDate,
    pub total_sleep_min: f64,
    pub awake_min: f64,
    pub deep_sleep_min: f64,
    /// Sum of all episode durations, asleep and awake.
    pub episode_min: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkoutTruth {
    pub date: NaiveDate,
    pub activity: String,
    pub start: Instant,
    pub end: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub home_tz: Tz,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub timed_events: usize,
    pub all_day_events: usize,
    /// Timed events with at least one HRV sample in their window.
    pub matched_events: usize,
    pub hrv_samples: usize,
    pub resting_hr_samples: usize,
    pub sleep_records: usize,
    pub ignored_records: usize,
    /// Days carrying at least one timed event.
    pub event_days: Vec<NaiveDate>,
    pub nights: Vec<NightTruth>,
    pub workouts: Vec<WorkoutTruth>,
}

/// Generated files plus their ground truth.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub calendar_csv: Vec<u8>,
    pub health_xml: Vec<u8>,
    pub manifest: Manifest,
}

struct TimedEvent {
    subject: &'static str,
    category: &'static str,
    start: Instant,
    end: Instant,
}

struct SleepRecord {
    stage: SleepStage,
    start: Instant,
    end: Instant,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn at_local(day: NaiveDate, h: u32, m: u32, tz: Tz) -> Instant {
    let naive = day.and_time(NaiveTime::from_hms_opt(h, m, 0).expect("valid"));
    Instant::from_local(naive, tz).unwrap_or_else(|| Instant::start_of_day(day, tz) + Duration::minutes(i64::from(h * 60 + m)))
}

fn spread_counts(spec: &FixtureSpec, days: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let (lo, hi) = spec.events_per_day;
    let mut counts: Vec<u32> = (0..days).map(|_| rng.random_range(lo..=hi)).collect();
    if let Some(total) = spec.total_events {
        let mut sum: usize = counts.iter().map(|&c| c as usize).sum();
        while sum != total {
            let i = rng.random_range(0..days);
            if sum > total && counts[i] > lo {
                counts[i] -= 1;
                sum -= 1;
            } else if sum < total && counts[i] < hi {
                counts[i] += 1;
                sum += 1;
            }
        }
    }
    counts
}

fn timed_events(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> Vec<TimedEvent> {
    let tz = spec.home_tz;
    let days = spec.calendar_days();
    let counts = spread_counts(spec, days.len(), rng);
    let mut events = Vec::new();
    for (day, count) in days.into_iter().zip(counts) {
        let mut cursor = at_local(day, 7, 0, tz) + Duration::minutes(15 * rng.random_range(0..=4));
        for _ in 0..count {
            let minutes = [30, 45, 60, 90][rng.random_range(0..4)];
            let end = cursor + Duration::minutes(minutes);
            let (subject, category) = if rng.random_bool(0.85) {
                (pick(rng, WORK_SUBJECTS), "Work")
            } else {
                (pick(rng, PRIVATE_SUBJECTS), "Private")
            };
            events.push(TimedEvent { subject, category, start: cursor, end });
            cursor = end + Duration::minutes(15 * rng.random_range(0..=2));
        }
    }
    events
}

fn calendar_csv(spec: &FixtureSpec, events: &[TimedEvent], all_day: &[(NaiveDate, &str)]) -> Vec<u8> {
    let tz = spec.home_tz;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Subject", "Start Date", "Start Time", "End Date", "End Time", "All day event", "Reminder on/off", "Categories", "Location"])
        .expect("in-memory write");
    let mut rows: Vec<(Instant, Vec<String>)> = Vec::new();
    for e in events {
        let (s, t) = (e.start.local(tz), e.end.local(tz));
        rows.push((
            e.start,
            vec![
                e.subject.into(),
                s.format("%-m/%-d/%Y").to_string(),
                s.format("%-I:%M:%S %p").to_string(),
                t.format("%-m/%-d/%Y").to_string(),
                t.format("%-I:%M:%S %p").to_string(),
                "False".into(),
                "True".into(),
                e.category.into(),
                String::new(),
            ],
        ));
    }
    for (day, subject) in all_day {
        let next = day.succ_opt().expect("in range");
        rows.push((
            Instant::start_of_day(*day, tz),
            vec![
                subject.to_string(),
                day.format("%-m/%-d/%Y").to_string(),
                "12:00:00 AM".into(),
                next.format("%-m/%-d/%Y").to_string(),
                "12:00:00 AM".into(),
                "True".into(),
                "False".into(),
                "Work".into(),
                String::new(),
            ],
        ));
    }
    rows.sort_by_key(|(t, _)| *t);
    for (_, row) in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn sleep_night(spec: &FixtureSpec, day: NaiveDate, rng: &mut ChaCha8Rng) -> Vec<SleepRecord> {
    let tz = spec.home_tz;
    let target = spec.mean_sleep_min + spec.sleep_jitter_min * (rng.random::<f64>() * 2.0 - 1.0);
    let mut cursor = at_local(day, 22, 30, tz) + Duration::minutes(rng.random_range(-45..=75));
    let mut out = Vec::new();
    let mut asleep = 0i64;
    let cycle = 90.0;
    let awake_mean = spec.awake_fraction * cycle / (1.0 - spec.awake_fraction) * 2.0;
    let push = |out: &mut Vec<SleepRecord>, stage, minutes: i64, cursor: &mut Instant| {
        let end = *cursor + Duration::minutes(minutes);
        out.push(SleepRecord { stage, start: *cursor, end });
        *cursor = end;
    };
    while (asleep as f64) < target {
        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-5i64..=5);
        let deep = ((cycle * spec.deep_fraction).round() as i64 + jitter(rng)).max(1);
        let rem = ((cycle * spec.rem_fraction).round() as i64 + jitter(rng)).max(1);
        let core = ((cycle * (1.0 - spec.deep_fraction - spec.rem_fraction) / 2.0).round() as i64 + jitter(rng)).max(1);
        for (stage, len) in [(SleepStage::Core, core), (SleepStage::Deep, deep), (SleepStage::Core, core), (SleepStage::Rem, rem)] {
            push(&mut out, stage, len, &mut cursor);
            asleep += len;
        }
        if awake_mean >= 1.0 && rng.random_bool(0.5) {
            let len = rng.random_range(1..=((2.0 * awake_mean) as i64 - 1).max(1));
            push(&mut out, SleepStage::Awake, len, &mut cursor);
        }
    }
    if out.last().is_some_and(|r| r.stage != SleepStage::Awake) {
        let len = rng.random_range(2..=12);
        push(&mut out, SleepStage::Awake, len, &mut cursor);
    }
    out
}

fn apple(t: Instant, tz: Tz) -> String {
    t.in_zone(tz).to_apple()
}

/// Generates the calendar CSV, the health XML, and the manifest for `spec`.
pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let tz = spec.home_tz;
    let src = xml_escape(&spec.source_name);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let events = timed_events(spec, &mut rng);
    let all_days = spec.all_days();
    let mut all_day: Vec<(NaiveDate, &str)> = (0..spec.all_day_events)
        .map(|_| (all_days[rng.random_range(0..all_days.len())], pick(&mut rng, ALL_DAY_SUBJECTS)))
        .collect();
    all_day.sort();

    // exact coverage: the first n events of a seeded shuffle get samples
    let n_match = (spec.hrv_coverage * events.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.shuffle(&mut rng);
    let mut hrv: Vec<(Instant, f64)> = Vec::new();
    let (slo, shi) = spec.samples_per_matched_event;
    for &i in &order[..n_match] {
        let e = &events[i];
        let span = (e.end - e.start).num_seconds();
        for _ in 0..rng.random_range(slo..=shi) {
            let t = e.start + Duration::seconds(rng.random_range(0..span));
            hrv.push((t, f64::from(rng.random_range(150..1200)) / 10.0));
        }
    }
    for day in &all_days {
        // 01:00-05:00 after midnight and 06:00-06:59; no event covers these hours
        let midnight = Instant::start_of_day(day.succ_opt().expect("in range"), tz);
        for _ in 0..spec.night_samples {
            let t = midnight + Duration::minutes(rng.random_range(60..300));
            hrv.push((t, f64::from(rng.random_range(300..1500)) / 10.0));
        }
        let morning = at_local(*day, 6, 0, tz) + Duration::minutes(rng.random_range(0..60));
        hrv.push((morning, f64::from(rng.random_range(200..900)) / 10.0));
    }
    hrv.sort_by_key(|p| p.0);

    let matched_events = events
        .iter()
        .filter(|e| hrv.iter().any(|(t, _)| e.start <= *t && *t < e.end))
        .count();

    let mut resting = Vec::new();
    let mut nights = Vec::new();
    let mut sleep = Vec::new();
    let mut workouts = Vec::new();
    let mut ignored = Vec::new();
    for day in &all_days {
        resting.push((at_local(*day, 6, 30, tz), rng.random_range(50..=68)));

        if !rng.random_bool(spec.missing_night_probability) {
            let night = sleep_night(spec, *day, &mut rng);
            let mins = |f: &dyn Fn(SleepStage) -> bool| -> f64 {
                night.iter().filter(|r| f(r.stage)).map(|r| (r.end - r.start).num_minutes() as f64).sum()
            };
            nights.push(NightTruth {
                date: *day,
                total_sleep_min: mins(&|s| s.is_asleep()),
                awake_min: mins(&|s| s == SleepStage::Awake),
                deep_sleep_min: mins(&|s| s == SleepStage::Deep),
                episode_min: mins(&|_| true),
                episodes: night.len(),
            });
            sleep.extend(night);
        }

        if rng.random_bool(spec.workout_probability) {
            let (activity, start, len) = match rng.random_range(0..4) {
                0 => ("Running", at_local(*day, 18, 0, tz) + Duration::minutes(rng.random_range(0..90)), rng.random_range(25..=60)),
                1 => ("Cycling", at_local(*day, 17, 30, tz) + Duration::minutes(rng.random_range(0..60)), rng.random_range(30..=75)),
                _ => ("Walking", at_local(*day, 12, 0, tz) + Duration::minutes(rng.random_range(0..60)), rng.random_range(15..=45)),
            };
            workouts.push(WorkoutTruth { date: *day, activity: activity.into(), start, end: start + Duration::minutes(len) });
        }

        for _ in 0..spec.ignored_records_per_day {
            let t = at_local(*day, 8, 0, tz) + Duration::minutes(rng.random_range(0..720));
            ignored.push((t, rng.random_range(10..2000)));
        }
    }
    ignored.sort_by_key(|p| p.0);

    let mut xml = String::with_capacity(256 * (hrv.len() + sleep.len() + resting.len() + ignored.len()));
    xml.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    xml.push_str("<!DOCTYPE HealthData [\n<!ELEMENT HealthData (ExportDate,Me,(Record|Correlation|Workout|ActivitySummary)*)>\n<!ATTLIST HealthData locale CDATA #REQUIRED>\n]>\n");
    xml.push_str("<HealthData locale=\"en_NL\">\n");
    let _ = writeln!(xml, " <ExportDate value=\"{}\"/>", apple(at_local(spec.end_date, 23, 0, tz), tz));
    xml.push_str(" <Me HKCharacteristicTypeIdentifierDateOfBirth=\"\" HKCharacteristicTypeIdentifierBiologicalSex=\"HKBiologicalSexNotSet\"/>\n");
    for (t, bpm) in &resting {
        let s = apple(*t, tz);
        let _ = writeln!(xml, " <Record type=\"{RESTING_HR_TYPE}\" sourceName=\"{src}\" unit=\"count/min\" creationDate=\"{s}\" startDate=\"{s}\" endDate=\"{s}\" value=\"{bpm}\"/>");
    }
    for (t, steps) in &ignored {
        let (s, e) = (apple(*t, tz), apple(*t + Duration::minutes(5), tz));
        let _ = writeln!(xml, " <Record type=\"{STEP_COUNT_TYPE}\" sourceName=\"{src}\" unit=\"count\" startDate=\"{s}\" endDate=\"{e}\" value=\"{steps}\"/>");
    }
    for (i, (t, ms)) in hrv.iter().enumerate() {
        let (s, e) = (apple(*t, tz), apple(*t + Duration::minutes(1), tz));
        if i % 5 == 0 {
            let _ = writeln!(
                xml,
                " <Record type=\"{HRV_SDNN_TYPE}\" sourceName=\"{src}\" unit=\"ms\" startDate=\"{s}\" endDate=\"{e}\" value=\"{ms:.1}\">\n  <HeartRateVariabilityMetadataList>\n   <InstantaneousBeatsPerMinute bpm=\"62\" time=\"{}\"/>\n  </HeartRateVariabilityMetadataList>\n </Record>",
                t.in_zone(tz).as_datetime().format("%-I:%M:%S.00 %p")
            );
        } else {
            let _ = writeln!(xml, " <Record type=\"{HRV_SDNN_TYPE}\" sourceName=\"{src}\" unit=\"ms\" startDate=\"{s}\" endDate=\"{e}\" value=\"{ms:.1}\"/>");
        }
    }
    for r in &sleep {
        let _ = writeln!(
            xml,
            " <Record type=\"{SLEEP_ANALYSIS_TYPE}\" sourceName=\"{src}\" startDate=\"{}\" endDate=\"{}\" value=\"{}\"/>",
            apple(r.start, tz),
            apple(r.end, tz),
            r.stage.export_value()
        );
    }
    for w in &workouts {
        let _ = writeln!(
            xml,
            " <Workout workoutActivityType=\"{WORKOUT_ACTIVITY_PREFIX}{}\" duration=\"{}\" durationUnit=\"min\" sourceName=\"{src}\" startDate=\"{}\" endDate=\"{}\">\n  <WorkoutStatistics type=\"HKQuantityTypeIdentifierActiveEnergyBurned\" startDate=\"{}\" endDate=\"{}\" sum=\"120\" unit=\"kcal\"/>\n </Workout>",
            w.activity,
            (w.end - w.start).num_minutes(),
            apple(w.start, tz),
            apple(w.end, tz),
            apple(w.start, tz),
            apple(w.end, tz)
        );
    }
    xml.push_str("</HealthData>\n");

    let mut event_days: Vec<NaiveDate> = events.iter().map(|e| e.start.date_in(tz)).collect();
    event_days.dedup();

    let manifest = Manifest {
        seed: spec.seed,
        home_tz: tz,
        start_date: spec.start_date,
        end_date: spec.end_date,
        timed_events: events.len(),
        all_day_events: all_day.len(),
        matched_events,
        hrv_samples: hrv.len(),
        resting_hr_samples: resting.len(),
        sleep_records: sleep.len(),
        ignored_records: ignored.len(),
        event_days,
        nights,
        workouts,
    };
    Ok(Fixture { calendar_csv: calendar_csv(spec, &events, &all_day), health_xml: xml.into_bytes(), manifest })
}

fn xml_escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Which record a position in [`SyntheticExport`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Hrv,
    RestingHeartRate,
    Sleep,
    Ignored,
}

impl SyntheticKind {
    pub fn of(index: usize) -> SyntheticKind {
        match index % 8 {
            0..=3 => SyntheticKind::Hrv,
            4 => SyntheticKind::RestingHeartRate,
            5 | 6 => SyntheticKind::Sleep,
            _ => SyntheticKind::Ignored,
        }
    }

    /// How many of the first `records` positions produce `self`.
    pub fn count_in(self, records: usize) -> usize {
        let per_block = (0..8).filter(|i| SyntheticKind::of(*i) == self).count();
        let partial = (0..records % 8).filter(|i| SyntheticKind::of(*i) == self).count();
        records / 8 * per_block + partial
    }
}

/// An arbitrarily large export produced lazily, record by record, so that
/// scale tests never hold the document in memory.
pub struct SyntheticExport {
    records: usize,
    next: usize,
    chunk: Vec<u8>,
    pos: usize,
    finished: bool,
    base: Instant,
}

impl SyntheticExport {
    pub fn new(records: usize) -> Self {
        let mut chunk = Vec::new();
        chunk.extend_from_slice(b"<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<HealthData locale=\"en_US\">\n");
        SyntheticExport {
            records,
            next: 0,
            chunk,
            pos: 0,
            finished: false,
            base: Instant::parse_apple("2020-01-01 00:00:00 +0000").expect("valid"),
        }
    }

    fn refill(&mut self) {
        self.chunk.clear();
        self.pos = 0;
        if self.next >= self.records {
            if !self.finished {
                self.chunk.extend_from_slice(b"</HealthData>\n");
                self.finished = true;
            }
            return;
        }
        let i = self.next;
        self.next += 1;
        let t = self.base + Duration::minutes(i as i64);
        let s = t.to_apple();
        let e = (t + Duration::minutes(1)).to_apple();
        let line = match SyntheticKind::of(i) {
            SyntheticKind::Hrv => format!(
                " <Record type=\"{HRV_SDNN_TYPE}\" sourceName=\"Watch\" unit=\"ms\" startDate=\"{s}\" endDate=\"{e}\" value=\"{}.5\"/>\n",
                20 + i % 80
            ),
            SyntheticKind::RestingHeartRate => format!(
                " <Record type=\"{RESTING_HR_TYPE}\" sourceName=\"Watch\" unit=\"count/min\" startDate=\"{s}\" endDate=\"{e}\" value=\"{}\"/>\n",
                50 + i % 20
            ),
            SyntheticKind::Sleep => format!(
                " <Record type=\"{SLEEP_ANALYSIS_TYPE}\" sourceName=\"Watch\" startDate=\"{s}\" endDate=\"{e}\" value=\"HKCategoryValueSleepAnalysisAsleepCore\"/>\n"
            ),
            SyntheticKind::Ignored => format!(
                " <Record type=\"{STEP_COUNT_TYPE}\" sourceName=\"Watch\" unit=\"count\" startDate=\"{s}\" endDate=\"{e}\" value=\"{}\"/>\n",
                i % 500
            ),
        };
        self.chunk.extend_from_slice(line.as_bytes());
    }
}

impl Read for SyntheticExport {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let available = self.fill_buf()?;
        let n = available.len().min(out.len());
        out[..n].copy_from_slice(&available[..n]);
        self.consume(n);
        Ok(n)
    }
}

impl BufRead for SyntheticExport {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        if self.pos >= self.chunk.len() {
            self.refill();
        }
        Ok(&self.chunk[self.pos..])
    }

    fn consume(&mut self, amt: usize) {
        self.pos = (self.pos + amt).min(self.chunk.len());
    }
}

/// Sleep totals per evening date straight from a manifest.
pub fn nights_by_date(manifest: &Manifest) -> BTreeMap<NaiveDate, &NightTruth> {
    manifest.nights.iter().map(|n| (n.date, n)).collect()
}
