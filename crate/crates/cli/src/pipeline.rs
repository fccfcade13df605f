//! Stage wiring: ingest, reconcile, segment, enrich, cohort, pseudonymize, export.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use log::{info, warn};
use regex::Regex;
use serde::Serialize;
use wearlog_core::calendar::{
    filter_all_day, filter_date_range, parse_calendar_csv, parse_calendar_ics, CalendarEvent, CalendarOptions,
    CategoryRules, Category,
};
use wearlog_core::export::{emit_plot_data, export_csv, export_xes, pseudonymize, PlotView, XesOptions};
use wearlog_core::health::{parse_health_export, reconcile_sleep, HealthBundle, IngestConfig, SampleKind};
use wearlog_core::log::{
    attach_case_attributes, derive_events, enrich_event_attributes, filter_cases_with_activity, filter_cohort,
    hrv_attribute, segment_cases,
};
use wearlog_core::{EventLog, MatchStats};

use crate::config::{CalendarFormat, ExportFormat, PipelineConfig, ViewKind};
use crate::error::CliError;
use crate::output::StagedOutputs;

/// Counts reported after a command.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub calendar_events_read: usize,
    pub calendar_rows_skipped: usize,
    pub all_day_removed: usize,
    pub outside_range_removed: usize,
    /// Timed events that enter the log.
    pub events_ingested: usize,
    pub hrv_samples: usize,
    pub resting_hr_samples: usize,
    pub sleep_episodes_read: usize,
    pub sleep_episodes_reconciled: usize,
    pub workouts: usize,
    pub health_records_skipped: usize,
    pub health_records_ignored: usize,
    pub match_stats: Option<MatchStats>,
    pub cases_built: usize,
    pub nights_missing: usize,
    pub workouts_derived: usize,
    pub workouts_without_case: usize,
    pub sleep_events_derived: usize,
    pub cases_in_cohort: Option<usize>,
    pub exported_cases: usize,
    pub exported_events: usize,
    pub outputs: Vec<String>,
}

impl Summary {
    pub fn render(&self, w: &mut dyn Write) -> std::io::Result<()> {
        if self.calendar_events_read > 0 || self.calendar_rows_skipped > 0 {
            writeln!(
                w,
                "calendar: {} events read, {} all-day removed, {} outside date range, {} rows skipped",
                self.calendar_events_read, self.all_day_removed, self.outside_range_removed, self.calendar_rows_skipped
            )?;
            writeln!(w, "ingested {} events", self.events_ingested)?;
        }
        if self.hrv_samples + self.resting_hr_samples + self.sleep_episodes_read + self.workouts + self.health_records_skipped > 0 {
            writeln!(
                w,
                "health: {} HRV samples, {} resting HR samples, {} sleep episodes ({} after reconciliation), {} workouts, {} records skipped, {} ignored",
                self.hrv_samples,
                self.resting_hr_samples,
                self.sleep_episodes_read,
                self.sleep_episodes_reconciled,
                self.workouts,
                self.health_records_skipped,
                self.health_records_ignored
            )?;
        }
        if let Some(m) = self.match_stats {
            writeln!(w, "matched {} of {} events", m.matched_events, m.total_events)?;
        }
        if self.cases_built > 0 {
            writeln!(w, "built {} cases ({} without an attributed night)", self.cases_built, self.nights_missing)?;
        }
        if self.workouts_derived + self.sleep_events_derived > 0 {
            writeln!(
                w,
                "derived {} workout events ({} on days without a case), {} sleep events",
                self.workouts_derived, self.workouts_without_case, self.sleep_events_derived
            )?;
        }
        if let Some(n) = self.cases_in_cohort {
            writeln!(w, "cohort kept {n} cases")?;
        }
        if !self.outputs.is_empty() {
            writeln!(w, "exported {} cases, {} events", self.exported_cases, self.exported_events)?;
            for o in &self.outputs {
                writeln!(w, "wrote {o}")?;
            }
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input { path: path.to_path_buf(), source: e.into() })
}

pub fn ingest_calendar(cfg: &PipelineConfig, summary: &mut Summary) -> Result<Vec<CalendarEvent>, CliError> {
    let Some(path) = cfg.calendar.as_deref() else { return Ok(Vec::new()) };
    let rules = CategoryRules::new(&cfg.category_rules).map_err(CliError::Pipeline)?;
    let opts = CalendarOptions { home_tz: cfg.home_tz, strict: cfg.strict, rules };
    let input = open(path)?;
    let wrap = |source| CliError::Input { path: path.to_path_buf(), source };
    let parsed = match cfg.calendar_format {
        CalendarFormat::Csv => parse_calendar_csv(input, &cfg.column_map, &opts),
        CalendarFormat::Ics => parse_calendar_ics(input, &opts),
    }
    .map_err(wrap)?;
    if parsed.skipped > 0 {
        warn!("{}: skipped {} malformed calendar entries", path.display(), parsed.skipped);
    }
    summary.calendar_events_read = parsed.events.len();
    summary.calendar_rows_skipped = parsed.skipped;

    let events = filter_all_day(parsed.events);
    summary.all_day_removed = summary.calendar_events_read - events.len();
    let before = events.len();
    let events = match (cfg.from, cfg.to) {
        (None, None) => events,
        (from, to) => {
            let earliest = events.iter().map(|e| e.interval.start().date_in(cfg.home_tz)).min();
            match from.or(earliest) {
                Some(from) => filter_date_range(events, from, to.unwrap_or(chrono::NaiveDate::MAX), cfg.home_tz),
                None => events,
            }
        }
    };
    summary.outside_range_removed = before - events.len();
    summary.events_ingested = events.len();
    info!("calendar: {} timed events", events.len());
    Ok(events)
}

pub fn ingest_health(cfg: &PipelineConfig, summary: &mut Summary) -> Result<HealthBundle, CliError> {
    let Some(path) = cfg.health.as_deref() else { return Ok(HealthBundle::default()) };
    let config = IngestConfig { home_tz: cfg.home_tz, strict: cfg.strict };
    let mut bundle = parse_health_export(BufReader::with_capacity(1 << 16, open(path)?), config)
        .map_err(|source| CliError::Input { path: path.to_path_buf(), source })?;
    if bundle.skipped_records > 0 {
        warn!("{}: skipped {} malformed records", path.display(), bundle.skipped_records);
    }
    summary.hrv_samples = bundle.samples_of(SampleKind::HrvSdnn).count();
    summary.resting_hr_samples = bundle.samples_of(SampleKind::RestingHeartRate).count();
    summary.sleep_episodes_read = bundle.sleep.len();
    summary.workouts = bundle.workouts.len();
    summary.health_records_skipped = bundle.skipped_records;
    summary.health_records_ignored = bundle.ignored_records;
    bundle.sleep = reconcile_sleep(&bundle.sleep, &cfg.sources);
    summary.sleep_episodes_reconciled = bundle.sleep.len();
    info!("health: {} samples, {} sleep episodes", bundle.samples.len(), bundle.sleep.len());
    Ok(bundle)
}

/// Segments the events into day cases and applies the selected strategies.
pub fn build_log(
    cfg: &PipelineConfig,
    events: Vec<CalendarEvent>,
    bundle: &HealthBundle,
    summary: &mut Summary,
) -> Result<EventLog, CliError> {
    let categorized = !cfg.category_rules.is_empty() || events.iter().any(|e| e.category != Category::Unknown);
    let mut log = segment_cases(events, cfg.home_tz, categorized);
    summary.cases_built = log.cases.len();

    if cfg.strategies.event_attrs {
        let stats = enrich_event_attributes(&mut log, &bundle.hrv_points(), cfg.aggregate).map_err(CliError::Pipeline)?;
        summary.match_stats = Some(stats);
    }
    if cfg.strategies.case_attrs {
        let report = attach_case_attributes(&mut log, bundle, &cfg.night);
        if report.duplicate_resting_hr > 0 {
            warn!("{} days carry more than one resting heart rate; the last one is kept", report.duplicate_resting_hr);
        }
        summary.nights_missing = report.nights_missing;
    }
    if cfg.strategies.derived {
        let report = derive_events(&mut log, bundle, &cfg.derive, &cfg.night);
        summary.workouts_derived = report.workouts_added;
        summary.workouts_without_case = report.workouts_without_case;
        summary.sleep_events_derived = report.sleep_events_added;
    }
    log.match_stats = MatchStats::count(&log.cases);
    Ok(log)
}

pub fn load_log(path: &Path) -> Result<EventLog, CliError> {
    let bad = |message: String| CliError::BadLog { path: path.to_path_buf(), message };
    let log: EventLog = serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| bad(e.to_string()))?;
    log.validate().map_err(bad)?;
    Ok(log)
}

pub fn stage_log_json(log: &EventLog, target: &Path, staged: &mut StagedOutputs) -> Result<(), CliError> {
    staged.write(target, |w| {
        serde_json::to_writer_pretty(&mut *w, log).map_err(|e| wearlog_core::Error::SinkWrite(e.into()))?;
        w.write_all(b"\n").map_err(wearlog_core::Error::SinkWrite)
    })
}

/// Pseudonymizes, applies the cohort, and stages the export of `log`.
pub fn stage_export(
    cfg: &PipelineConfig,
    log: EventLog,
    staged: &mut StagedOutputs,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let out = cfg.out.as_deref().expect("validated: out is set");
    let log = match &cfg.pseudonym {
        Some(p) => {
            let (renamed, map) = pseudonymize(&log, p.seed, p.category_aware);
            if let Some(path) = p.mapping_out.as_deref() {
                let mut json = map.to_json();
                json.push('\n');
                staged.write_bytes(path, json.as_bytes())?;
            }
            renamed
        }
        None => log,
    };

    let mut cohort = if cfg.cohort.is_empty() { log.clone() } else { filter_cohort(&log, &cfg.cohort).map_err(CliError::Pipeline)? };
    if let Some(activity) = cfg.with_activity.as_deref() {
        cohort = filter_cases_with_activity(&cohort, activity);
    }
    if !cfg.cohort.is_empty() || cfg.with_activity.is_some() {
        summary.cases_in_cohort = Some(cohort.cases.len());
    }
    summary.exported_cases = cohort.cases.len();
    summary.exported_events = cohort.event_count();

    match cfg.export.format {
        ExportFormat::Csv => {
            staged.write(out, |w| export_csv(&cohort, w))?;
        }
        ExportFormat::Xes => {
            staged.write(out, |w| export_xes(&cohort, w, XesOptions { lifecycle: cfg.export.lifecycle }))?;
        }
        ExportFormat::Plot => {
            let (view, source) = match cfg.export.view {
                ViewKind::HrvGroups => (
                    PlotView::HrvByActivityGroup {
                        pattern: Regex::new(&cfg.export.group_pattern).map_err(|e| CliError::Pipeline(e.into()))?,
                        value_attribute: hrv_attribute(cfg.aggregate).to_string(),
                    },
                    &cohort,
                ),
                // the baseline needs every workday, so the view filters the full log itself
                ViewKind::CaseVsAverage => (
                    PlotView::CaseAttrsVsAverage {
                        attributes: cfg.export.plot_attributes.clone(),
                        cohort: cfg.cohort.clone(),
                        with_activity: cfg.with_activity.clone(),
                    },
                    &log,
                ),
            };
            let mut bytes = Vec::new();
            emit_plot_data(source, &view, &mut bytes).map_err(CliError::Pipeline)?;
            staged.write_bytes(out, &bytes)?;
        }
    }
    Ok(())
}
