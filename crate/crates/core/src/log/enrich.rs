use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{
    hrv_attribute, AttrType, AttrValue, EnrichedEvent, EventLog, MatchStats, Origin, AWAKE_MIN,
    DEEP_SLEEP_MIN, HRV_SAMPLE_COUNT, NIGHT_MISSING, RESTING_HR_BPM, SLEEP_ACTIVITY, TOTAL_SLEEP_MIN,
};
use crate::calendar::Category;
use crate::health::{HealthBundle, SampleKind, SleepEpisode, SleepStage};
use crate::temporal::{aggregate, interval_join, AggregateSpec, Instant, Interval};

/// Attaches aggregated HRV to every calendar event whose window holds samples.
///
/// Events keep their place in the log whether or not they match; only their
/// attributes change. `hrv` must be sorted by instant.
pub fn enrich_event_attributes(
    log: &mut EventLog,
    hrv: &[(Instant, f64)],
    spec: AggregateSpec,
) -> crate::Result<MatchStats> {
    let value_attr = hrv_attribute(spec);
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (ci, case) in log.cases.iter().enumerate() {
        for (ei, ev) in case.events.iter().enumerate() {
            if ev.origin == Origin::Calendar {
                slots.push((ci, ei));
            }
        }
    }
    slots.sort_by_key(|&(ci, ei)| log.cases[ci].events[ei].interval.start());
    let windows: Vec<Interval> = slots.iter().map(|&(ci, ei)| log.cases[ci].events[ei].interval).collect();
    let matched = interval_join(&windows, hrv)?;

    for (&(ci, ei), values) in slots.iter().zip(matched) {
        let attrs = &mut log.cases[ci].events[ei].attributes;
        attrs.retain(|k, _| !(k.starts_with("hrv_") && k.ends_with("_ms")) && k != "hrv_count");
        attrs.insert(HRV_SAMPLE_COUNT.into(), AttrValue::Int(values.len() as i64));
        if spec != AggregateSpec::Count {
            if let Some(v) = aggregate(&values, spec) {
                attrs.insert(value_attr.into(), AttrValue::Float(v));
            }
        }
    }

    log.schema.declare_event(HRV_SAMPLE_COUNT, AttrType::Int);
    if spec != AggregateSpec::Count {
        log.schema.declare_event(value_attr, AttrType::Float);
    }
    log.match_stats = MatchStats::count(&log.cases);
    Ok(log.match_stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NightDirection {
    /// The night after day D belongs to D.
    #[default]
    Following,
    /// The night before day D belongs to D.
    Preceding,
}

/// Which sleep belongs to which day case: episodes starting between
/// `evening` on one day and the next `morning`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightPolicy {
    pub evening: NaiveTime,
    pub morning: NaiveTime,
    pub direction: NightDirection,
}

impl Default for NightPolicy {
    fn default() -> Self {
        NightPolicy {
            evening: NaiveTime::from_hms_opt(18, 0, 0).expect("valid"),
            morning: NaiveTime::from_hms_opt(12, 0, 0).expect("valid"),
            direction: NightDirection::Following,
        }
    }
}

impl NightPolicy {
    /// Parses `HH:MM..HH:MM`.
    pub fn parse_window(s: &str) -> Result<(NaiveTime, NaiveTime), String> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected HH:MM..HH:MM, got {s:?}"))?;
        let t = |x: &str| {
            NaiveTime::parse_from_str(x.trim(), "%H:%M").map_err(|_| format!("bad time {x:?} in night window"))
        };
        Ok((t(a)?, t(b)?))
    }

    /// Attribution window for the case of `day`.
    pub fn window(&self, day: NaiveDate, tz: Tz) -> Interval {
        let evening_day = match self.direction {
            NightDirection::Following => day,
            NightDirection::Preceding => day.pred_opt().unwrap_or(day),
        };
        let morning_day = if self.morning <= self.evening {
            evening_day.succ_opt().unwrap_or(evening_day)
        } else {
            evening_day
        };
        let start = local_or_later(evening_day, self.evening, tz);
        let end = local_or_later(morning_day, self.morning, tz);
        Interval::new(start, end.max(start)).expect("ordered")
    }
}

fn local_or_later(day: NaiveDate, time: NaiveTime, tz: Tz) -> Instant {
    let mut naive = day.and_time(time);
    loop {
        if let Some(t) = Instant::from_local(naive, tz) {
            return t;
        }
        naive += Duration::minutes(15);
    }
}

/// Episodes starting inside `window`; `sleep` must be sorted by start.
fn night_episodes<'a>(sleep: &'a [SleepEpisode], window: &Interval) -> &'a [SleepEpisode] {
    let lo = sleep.partition_point(|e| e.interval.start() < window.start());
    let hi = sleep.partition_point(|e| e.interval.start() < window.end());
    &sleep[lo..hi.max(lo)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CaseAttrReport {
    /// Days with more than one resting heart rate sample (last one kept).
    pub duplicate_resting_hr: usize,
    pub nights_missing: usize,
}

/// Stores day-level resting heart rate and the attributed night's sleep
/// totals on every case. `bundle.sleep` is expected to be reconciled.
pub fn attach_case_attributes(log: &mut EventLog, bundle: &HealthBundle, policy: &NightPolicy) -> CaseAttrReport {
    let tz = log.home_tz;
    let mut resting: BTreeMap<NaiveDate, Vec<(Instant, f64)>> = BTreeMap::new();
    for s in bundle.samples_of(SampleKind::RestingHeartRate) {
        resting.entry(s.at.date_in(tz)).or_default().push((s.at, s.value));
    }
    let mut sleep = bundle.sleep.clone();
    sleep.sort_by_key(|e| e.interval.start());

    let mut report = CaseAttrReport::default();
    for case in &mut log.cases {
        case.attributes.remove(RESTING_HR_BPM);
        if let Some(day) = resting.get(&case.case_id) {
            if day.len() > 1 {
                report.duplicate_resting_hr += 1;
                log::warn!("{} has {} resting heart rate samples; keeping the latest", case.case_id, day.len());
            }
            // stable max keeps the last of equal instants
            let latest = day.iter().fold(day[0], |acc, s| if s.0 >= acc.0 { *s } else { acc });
            case.attributes.insert(RESTING_HR_BPM.into(), AttrValue::Float(latest.1));
        }

        let window = policy.window(case.case_id, tz);
        let night = night_episodes(&sleep, &window);
        let (mut asleep, mut awake, mut deep) = (0.0, 0.0, 0.0);
        for ep in night {
            let mins = ep.interval.minutes();
            match ep.stage {
                SleepStage::Deep => {
                    deep += mins;
                    asleep += mins;
                }
                SleepStage::Core | SleepStage::Rem => asleep += mins,
                SleepStage::Awake => awake += mins,
                SleepStage::InBedUnspecified => {}
            }
        }
        if night.is_empty() {
            report.nights_missing += 1;
        }
        case.attributes.insert(TOTAL_SLEEP_MIN.into(), AttrValue::Float(asleep));
        case.attributes.insert(AWAKE_MIN.into(), AttrValue::Float(awake));
        case.attributes.insert(DEEP_SLEEP_MIN.into(), AttrValue::Float(deep));
        case.attributes.insert(NIGHT_MISSING.into(), AttrValue::Bool(night.is_empty()));
    }

    log.schema.declare_case(RESTING_HR_BPM, AttrType::Float);
    log.schema.declare_case(TOTAL_SLEEP_MIN, AttrType::Float);
    log.schema.declare_case(AWAKE_MIN, AttrType::Float);
    log.schema.declare_case(DEEP_SLEEP_MIN, AttrType::Float);
    log.schema.declare_case(NIGHT_MISSING, AttrType::Bool);
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SleepEventMode {
    #[default]
    Off,
    /// One `Sleep` event per attributed night.
    Consolidated,
    /// One event per reconciled episode, named after its stage.
    PerEpisode,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeriveSelection {
    pub workouts: bool,
    /// Restricts workouts to these activity names; empty keeps all.
    pub workout_activities: Vec<String>,
    pub sleep: SleepEventMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeriveReport {
    pub workouts_added: usize,
    /// Selected workouts on days without a case.
    pub workouts_without_case: usize,
    pub sleep_events_added: usize,
}

fn derived_event(activity: String, interval: Interval, origin: Origin) -> EnrichedEvent {
    EnrichedEvent { activity, interval, origin, category: Category::Unknown, attributes: Default::default() }
}

/// Inserts workouts and sleep as events of their own.
///
/// Workouts join the case of their start date; days without calendar
/// activity get no case of their own. Sleep follows the night policy.
pub fn derive_events(
    log: &mut EventLog,
    bundle: &HealthBundle,
    selection: &DeriveSelection,
    policy: &NightPolicy,
) -> DeriveReport {
    let tz = log.home_tz;
    let mut report = DeriveReport::default();
    let index: BTreeMap<NaiveDate, usize> = log.cases.iter().enumerate().map(|(i, c)| (c.case_id, i)).collect();
    let mut touched = vec![false; log.cases.len()];

    if selection.workouts {
        let wanted = |a: &str| selection.workout_activities.is_empty() || selection.workout_activities.iter().any(|w| w == a);
        for w in bundle.workouts.iter().filter(|w| wanted(&w.activity)) {
            match index.get(&w.interval.start().date_in(tz)) {
                Some(&ci) => {
                    log.cases[ci].events.push(derived_event(w.activity.clone(), w.interval, Origin::Workout));
                    touched[ci] = true;
                    report.workouts_added += 1;
                }
                None => report.workouts_without_case += 1,
            }
        }
    }

    if selection.sleep != SleepEventMode::Off {
        let mut sleep = bundle.sleep.clone();
        sleep.sort_by_key(|e| e.interval.start());
        for (ci, case) in log.cases.iter_mut().enumerate() {
            let night = night_episodes(&sleep, &policy.window(case.case_id, tz));
            if night.is_empty() {
                continue;
            }
            match selection.sleep {
                SleepEventMode::Consolidated => {
                    let span = night.iter().skip(1).fold(night[0].interval, |acc, e| acc.hull(&e.interval));
                    case.events.push(derived_event(SLEEP_ACTIVITY.into(), span, Origin::Sleep));
                    report.sleep_events_added += 1;
                }
                SleepEventMode::PerEpisode => {
                    for ep in night {
                        let name = format!("{SLEEP_ACTIVITY} {}", ep.stage.label());
                        case.events.push(derived_event(name, ep.interval, Origin::Sleep));
                        report.sleep_events_added += 1;
                    }
                }
                SleepEventMode::Off => unreachable!(),
            }
            touched[ci] = true;
        }
    }

    for (case, touched) in log.cases.iter_mut().zip(touched) {
        if touched {
            case.sort_events();
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::CalendarEvent;
    use crate::health::{HealthSample, Workout};
    use crate::log::segment_cases;
    use proptest::prelude::*;

    const TZ: Tz = chrono_tz::Europe::Amsterdam;

    fn at(day: u32, h: u32, m: u32) -> Instant {
        let naive = NaiveDate::from_ymd_opt(2025, 5, day).unwrap().and_hms_opt(h, m, 0).unwrap();
        Instant::from_local(naive, TZ).unwrap()
    }

    fn cal(subject: &str, start: Instant, end: Instant) -> CalendarEvent {
        CalendarEvent { subject: subject.into(), interval: Interval::new(start, end).unwrap(), all_day: false, category: Category::Work }
    }

    fn episode(stage: SleepStage, a: Instant, b: Instant) -> SleepEpisode {
        SleepEpisode { interval: Interval::new(a, b).unwrap(), stage, source: "Watch".into() }
    }

    #[test]
    fn median_of_two_samples() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let stats = enrich_event_attributes(&mut log, &[(at(12, 10, 15), 50.0), (at(12, 10, 45), 60.0)], AggregateSpec::Median).unwrap();
        let ev = &log.cases[0].events[0];
        assert_eq!(ev.attributes["hrv_median_ms"], AttrValue::Float(55.0));
        assert_eq!(ev.attributes[HRV_SAMPLE_COUNT], AttrValue::Int(2));
        assert_eq!(stats, MatchStats { total_events: 1, matched_events: 1 });
        log.validate().unwrap();
    }

    #[test]
    fn unmatched_event_has_no_value() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let stats = enrich_event_attributes(&mut log, &[(at(12, 11, 0), 50.0)], AggregateSpec::Median).unwrap();
        let ev = &log.cases[0].events[0];
        assert!(!ev.attributes.contains_key("hrv_median_ms"));
        assert_eq!(ev.attributes[HRV_SAMPLE_COUNT], AttrValue::Int(0));
        assert_eq!(stats, MatchStats { total_events: 1, matched_events: 0 });
    }

    #[test]
    fn night_totals() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let bundle = HealthBundle {
            sleep: vec![
                episode(SleepStage::Deep, at(12, 23, 30), at(13, 0, 10)),
                episode(SleepStage::Core, at(13, 0, 10), at(13, 6, 0)),
                episode(SleepStage::Awake, at(13, 6, 0), at(13, 6, 20)),
            ],
            ..HealthBundle::default()
        };
        attach_case_attributes(&mut log, &bundle, &NightPolicy::default());
        let c = &log.cases[0];
        assert_eq!(c.attr_f64(TOTAL_SLEEP_MIN), Some(390.0));
        assert_eq!(c.attr_f64(DEEP_SLEEP_MIN), Some(40.0));
        assert_eq!(c.attr_f64(AWAKE_MIN), Some(20.0));
        assert_eq!(c.attributes[NIGHT_MISSING], AttrValue::Bool(false));
        log.validate().unwrap();
    }

    #[test]
    fn missing_night_flagged() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let bundle = HealthBundle {
            sleep: vec![episode(SleepStage::Deep, at(13, 12, 0), at(13, 13, 0))],
            ..HealthBundle::default()
        };
        let report = attach_case_attributes(&mut log, &bundle, &NightPolicy::default());
        let c = &log.cases[0];
        assert_eq!(c.attr_f64(TOTAL_SLEEP_MIN), Some(0.0));
        assert_eq!(c.attr_f64(AWAKE_MIN), Some(0.0));
        assert_eq!(c.attr_f64(DEEP_SLEEP_MIN), Some(0.0));
        assert_eq!(c.attributes[NIGHT_MISSING], AttrValue::Bool(true));
        assert_eq!(report.nights_missing, 1);
    }

    #[test]
    fn duplicate_resting_hr_last_wins() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let rhr = |t, v| HealthSample { kind: SampleKind::RestingHeartRate, at: t, value: v, source: "Watch".into() };
        let bundle = HealthBundle {
            samples: vec![rhr(at(12, 7, 0), 58.0), rhr(at(12, 21, 0), 61.0), rhr(at(13, 7, 0), 70.0)],
            ..HealthBundle::default()
        };
        let report = attach_case_attributes(&mut log, &bundle, &NightPolicy::default());
        assert_eq!(log.cases[0].attr_f64(RESTING_HR_BPM), Some(61.0));
        assert_eq!(report.duplicate_resting_hr, 1);
    }

    #[test]
    fn preceding_night_policy() {
        let mut log = segment_cases(vec![cal("Meeting", at(13, 10, 0), at(13, 11, 0))], TZ, false);
        let bundle = HealthBundle {
            sleep: vec![episode(SleepStage::Core, at(12, 23, 0), at(13, 6, 0))],
            ..HealthBundle::default()
        };
        let policy = NightPolicy { direction: NightDirection::Preceding, ..NightPolicy::default() };
        attach_case_attributes(&mut log, &bundle, &policy);
        assert_eq!(log.cases[0].attr_f64(TOTAL_SLEEP_MIN), Some(420.0));
    }

    #[test]
    fn window_parse() {
        let (a, b) = NightPolicy::parse_window("18:00..12:00").unwrap();
        assert_eq!((a.to_string().as_str(), b.to_string().as_str()), ("18:00:00", "12:00:00"));
        assert!(NightPolicy::parse_window("18-12").is_err());
    }

    #[test]
    fn walking_between_meetings() {
        let mut log = segment_cases(
            vec![
                cal("Meeting", at(12, 10, 0), at(12, 11, 0)),
                cal("Meeting", at(12, 14, 0), at(12, 15, 0)),
            ],
            TZ,
            false,
        );
        let before = log.clone();
        let bundle = HealthBundle {
            workouts: vec![Workout { interval: Interval::new(at(12, 12, 10), at(12, 12, 40)).unwrap(), activity: "Walking".into(), source: "Watch".into() }],
            ..HealthBundle::default()
        };
        let unchanged = derive_events(&mut log, &bundle, &DeriveSelection::default(), &NightPolicy::default());
        assert_eq!(unchanged, DeriveReport::default());
        assert_eq!(log, before);

        let sel = DeriveSelection { workouts: true, ..DeriveSelection::default() };
        derive_events(&mut log, &bundle, &sel, &NightPolicy::default());
        let names: Vec<_> = log.cases[0].events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(names, ["Meeting", "Walking", "Meeting"]);
        assert_eq!(log.cases[0].events[1].origin, Origin::Workout);
    }

    #[test]
    fn consolidated_sleep_event() {
        let mut log = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let bundle = HealthBundle {
            sleep: vec![
                episode(SleepStage::Deep, at(12, 23, 30), at(13, 0, 10)),
                episode(SleepStage::Core, at(13, 0, 10), at(13, 6, 0)),
                episode(SleepStage::Awake, at(13, 6, 0), at(13, 6, 20)),
            ],
            ..HealthBundle::default()
        };
        let sel = DeriveSelection { sleep: SleepEventMode::Consolidated, ..DeriveSelection::default() };
        let report = derive_events(&mut log, &bundle, &sel, &NightPolicy::default());
        assert_eq!(report.sleep_events_added, 1);
        let last = log.cases[0].events.last().unwrap();
        assert_eq!(last.activity, "Sleep");
        assert_eq!(last.interval, Interval::new(at(12, 23, 30), at(13, 6, 20)).unwrap());

        let mut per = segment_cases(vec![cal("Meeting", at(12, 10, 0), at(12, 11, 0))], TZ, false);
        let sel = DeriveSelection { sleep: SleepEventMode::PerEpisode, ..DeriveSelection::default() };
        derive_events(&mut per, &bundle, &sel, &NightPolicy::default());
        let names: Vec<_> = per.cases[0].events.iter().map(|e| e.activity.as_str()).collect();
        assert_eq!(names, ["Meeting", "Sleep Deep", "Sleep Core", "Sleep Awake"]);
    }

    fn arb_day() -> impl Strategy<Value = (Vec<CalendarEvent>, Vec<(Instant, f64)>)> {
        let base = at(12, 0, 0);
        let events = prop::collection::vec((0i64..2880, 0i64..180), 0..40).prop_map(move |v| {
            v.into_iter()
                .map(|(s, len)| cal("E", base + Duration::minutes(s), base + Duration::minutes(s + len)))
                .collect::<Vec<_>>()
        });
        let samples = prop::collection::vec((0i64..3000, 1.0f64..200.0), 0..120).prop_map(move |mut v| {
            v.sort_by_key(|p| p.0);
            v.into_iter().map(|(m, x)| (base + Duration::minutes(m), x)).collect::<Vec<_>>()
        });
        (events, samples)
    }

    proptest! {
        #[test]
        fn matched_count_equals_brute_force((events, samples) in arb_day()) {
            let expected = events
                .iter()
                .filter(|e| samples.iter().any(|(t, _)| e.interval.start() <= *t && *t < e.interval.end()))
                .count();
            let n = events.len();
            let mut log = segment_cases(events, TZ, false);
            let stats = enrich_event_attributes(&mut log, &samples, AggregateSpec::Median).unwrap();
            prop_assert_eq!(stats, MatchStats { total_events: n, matched_events: expected });
            prop_assert_eq!(log.event_count(), n);
            for (_, ev) in log.events() {
                prop_assert_eq!(ev.attributes.contains_key("hrv_median_ms"), ev.hrv_sample_count() > 0);
            }
            prop_assert!(log.validate().is_ok());
        }

        #[test]
        fn derive_keeps_calendar_events((events, _) in arb_day(), wlen in 1i64..120, wstart in 0i64..2800) {
            let mut log = segment_cases(events, TZ, false);
            let before: Vec<_> = log.events().map(|(_, e)| e.clone()).collect();
            let base = at(12, 0, 0);
            let bundle = HealthBundle {
                workouts: vec![Workout {
                    interval: Interval::new(base + Duration::minutes(wstart), base + Duration::minutes(wstart + wlen)).unwrap(),
                    activity: "Walking".into(),
                    source: "Watch".into(),
                }],
                ..HealthBundle::default()
            };
            let sel = DeriveSelection { workouts: true, ..DeriveSelection::default() };
            derive_events(&mut log, &bundle, &sel, &NightPolicy::default());
            let after: Vec<_> = log.events().map(|(_, e)| e.clone()).filter(|e| e.origin == Origin::Calendar).collect();
            prop_assert_eq!(before, after);
            prop_assert!(log.validate().is_ok());
        }
    }
}
