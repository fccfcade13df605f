//! Flat key/value pipeline configuration.
//!
//! Values are layered CLI flags > config file > `WEARLOG_HOME_TZ` (home
//! zone only) > defaults, then resolved into a [`PipelineConfig`]. Resolution
//! touches no input file except the optional column map.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use wearlog_core::calendar::{Category, CategoryRule, ColumnMap};
use wearlog_core::export::LifecycleMode;
use wearlog_core::health::SourcePolicy;
use wearlog_core::log::{DeriveSelection, NightDirection, NightPolicy, SleepEventMode};
use wearlog_core::{AggregateSpec, CohortPredicate};

pub const HOME_TZ_ENV: &str = "WEARLOG_HOME_TZ";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

/// Every configurable key, all optional. Used for the config file and for
/// the CLI overlay alike.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub home_tz: Option<String>,
    pub health: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    /// `csv` or `ics`; inferred from the calendar extension when absent.
    pub calendar_format: Option<String>,
    pub column_map: Option<PathBuf>,
    pub work_pattern: Option<String>,
    pub private_pattern: Option<String>,
    pub strict: Option<bool>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    /// Comma list of `event-attrs`, `case-attrs`, `derived`.
    pub strategies: Option<String>,
    pub aggregate: Option<String>,
    pub night_window: Option<String>,
    pub night_direction: Option<String>,
    /// Comma list of `workouts`, `sleep`.
    pub derive: Option<String>,
    pub sleep_events: Option<String>,
    pub workout_activities: Option<String>,
    pub cohort: Option<String>,
    pub with_activity: Option<String>,
    pub sleep_merge_tolerance: Option<i64>,
    pub preferred_sources: Option<String>,
    pub pseudonymize: Option<bool>,
    pub seed: Option<u64>,
    pub category_aware: Option<bool>,
    pub mapping_out: Option<PathBuf>,
    /// `csv`, `xes`, or `plot`.
    pub format: Option<String>,
    pub xes_lifecycle: Option<String>,
    /// `hrv-groups` or `case-vs-average`.
    pub view: Option<String>,
    pub group_pattern: Option<String>,
    pub plot_attributes: Option<String>,
    pub log: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log_out: Option<PathBuf>,
}

macro_rules! overlay {
    ($low:ident, $high:ident; $($f:ident),* $(,)?) => {
        RawConfig { $($f: $high.$f.or($low.$f)),* }
    };
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<RawConfig, ConfigError> {
        let file_err = |message: String| ConfigError::File { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let mut raw: RawConfig = toml::from_str(&text).map_err(|e| file_err(e.message().to_string()))?;
        // relative paths in a config file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut raw.health,
            &mut raw.calendar,
            &mut raw.column_map,
            &mut raw.mapping_out,
            &mut raw.log,
            &mut raw.out,
            &mut raw.log_out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(raw)
    }

    /// `self` overridden by every key set in `high`.
    pub fn overlaid(self, high: RawConfig) -> RawConfig {
        let low = self;
        overlay!(low, high;
            home_tz, health, calendar, calendar_format, column_map, work_pattern, private_pattern,
            strict, from, to, strategies, aggregate, night_window, night_direction, derive,
            sleep_events, workout_activities, cohort, with_activity, sleep_merge_tolerance,
            preferred_sources, pseudonymize, seed, category_aware, mapping_out, format,
            xes_lifecycle, view, group_pattern, plot_attributes, log, out, log_out,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalendarFormat {
    Csv,
    Ics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Strategies {
    pub event_attrs: bool,
    pub case_attrs: bool,
    pub derived: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Xes,
    Plot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    HrvGroups,
    CaseVsAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudonymSettings {
    pub seed: u64,
    pub category_aware: bool,
    pub mapping_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSettings {
    pub format: ExportFormat,
    pub lifecycle: LifecycleMode,
    pub view: ViewKind,
    pub group_pattern: String,
    pub plot_attributes: Vec<String>,
}

/// What a subcommand cannot run without.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Needs {
    pub health: bool,
    pub calendar: bool,
    pub log: bool,
    pub out: bool,
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub home_tz: Tz,
    pub health: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub calendar_format: CalendarFormat,
    pub column_map: ColumnMap,
    pub category_rules: Vec<CategoryRule>,
    pub strict: bool,
    /// Inclusive home-zone day bounds on calendar events.
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub strategies: Strategies,
    pub aggregate: AggregateSpec,
    pub night: NightPolicy,
    pub derive: DeriveSelection,
    pub cohort: CohortPredicate,
    pub with_activity: Option<String>,
    pub sources: SourcePolicy,
    pub pseudonym: Option<PseudonymSettings>,
    pub export: ExportSettings,
    pub log: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log_out: Option<PathBuf>,
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn existing(key: &'static str, path: Option<PathBuf>, required: bool) -> Result<Option<PathBuf>, ConfigError> {
    match path {
        None if required => Err(invalid(key, "required but not set")),
        Some(p) if !p.is_file() => Err(invalid(key, format!("no such file: {}", p.display()))),
        other => Ok(other),
    }
}

fn output(key: &'static str, path: Option<PathBuf>, required: bool) -> Result<Option<PathBuf>, ConfigError> {
    match path {
        None if required => Err(invalid(key, "required but not set")),
        Some(p) => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(invalid(key, format!("directory does not exist: {}", dir.display())));
            }
            Ok(Some(p))
        }
        None => Ok(None),
    }
}

impl PipelineConfig {
    /// Validates `raw`; `env_tz` is the home zone fallback from the environment.
    pub fn resolve(raw: RawConfig, env_tz: Option<String>, needs: Needs) -> Result<PipelineConfig, ConfigError> {
        let home_tz = match raw.home_tz.or(env_tz) {
            Some(name) => Tz::from_str(name.trim()).map_err(|_| invalid("home_tz", format!("unknown time zone {name:?}")))?,
            None => chrono_tz::UTC,
        };

        let health = existing("health", raw.health, needs.health)?;
        let calendar = existing("calendar", raw.calendar, needs.calendar)?;
        let log = existing("log", raw.log, needs.log)?;
        let column_map_path = existing("column_map", raw.column_map, false)?;

        let calendar_format = match raw.calendar_format.as_deref().map(str::to_ascii_lowercase) {
            Some(f) if f == "csv" => CalendarFormat::Csv,
            Some(f) if f == "ics" || f == "ical" => CalendarFormat::Ics,
            Some(f) => return Err(invalid("calendar_format", format!("expected csv or ics, got {f:?}"))),
            None => match calendar.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("ics") => CalendarFormat::Ics,
                _ => CalendarFormat::Csv,
            },
        };

        let column_map = match column_map_path {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| invalid("column_map", e.to_string()))?;
                if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    serde_json::from_str(&text).map_err(|e| invalid("column_map", e.to_string()))?
                } else {
                    toml::from_str(&text).map_err(|e| invalid("column_map", e.message().to_string()))?
                }
            }
            None => ColumnMap::default(),
        };

        let mut category_rules = Vec::new();
        for (key, pattern, category) in [
            ("work_pattern", raw.work_pattern, Category::Work),
            ("private_pattern", raw.private_pattern, Category::Private),
        ] {
            if let Some(pattern) = pattern {
                regex::Regex::new(&pattern).map_err(|e| invalid(key, e.to_string()))?;
                category_rules.push(CategoryRule { pattern, category });
            }
        }

        if let (Some(from), Some(to)) = (raw.from, raw.to) {
            if to < from {
                return Err(invalid("to", "precedes `from`"));
            }
        }

        let mut strategies = Strategies::default();
        for s in list(raw.strategies.as_deref().unwrap_or("event-attrs,case-attrs")) {
            match s.as_str() {
                "event-attrs" => strategies.event_attrs = true,
                "case-attrs" => strategies.case_attrs = true,
                "derived" => strategies.derived = true,
                "all" => strategies = Strategies { event_attrs: true, case_attrs: true, derived: true },
                other => return Err(invalid("strategies", format!("unknown strategy {other:?}"))),
            }
        }

        let aggregate = raw
            .aggregate
            .as_deref()
            .unwrap_or("median")
            .parse::<AggregateSpec>()
            .map_err(|e| invalid("aggregate", e))?;

        let mut night = NightPolicy::default();
        if let Some(w) = raw.night_window.as_deref() {
            let (evening, morning) = NightPolicy::parse_window(w).map_err(|e| invalid("night_window", e))?;
            if evening == morning {
                return Err(invalid("night_window", "window is empty"));
            }
            night.evening = evening;
            night.morning = morning;
        }
        night.direction = match raw.night_direction.as_deref() {
            None | Some("following") => NightDirection::Following,
            Some("preceding") => NightDirection::Preceding,
            Some(d) => return Err(invalid("night_direction", format!("expected following or preceding, got {d:?}"))),
        };

        let sleep_mode = match raw.sleep_events.as_deref() {
            None | Some("consolidated") => SleepEventMode::Consolidated,
            Some("per-episode") => SleepEventMode::PerEpisode,
            Some(m) => return Err(invalid("sleep_events", format!("expected consolidated or per-episode, got {m:?}"))),
        };
        let mut derive = DeriveSelection::default();
        if strategies.derived {
            for d in list(raw.derive.as_deref().unwrap_or("workouts,sleep")) {
                match d.as_str() {
                    "workouts" => derive.workouts = true,
                    "sleep" => derive.sleep = sleep_mode,
                    other => return Err(invalid("derive", format!("unknown derived event kind {other:?}"))),
                }
            }
            derive.workout_activities = raw.workout_activities.as_deref().map(list).unwrap_or_default();
        }

        let cohort = match raw.cohort.as_deref().map(str::trim) {
            None | Some("") | Some("all") => CohortPredicate::default(),
            Some("good-sleep") => CohortPredicate::good_sleep(),
            Some(p) => p.parse().map_err(|e: wearlog_core::Error| invalid("cohort", e.to_string()))?,
        };

        let mut sources = SourcePolicy::default();
        if let Some(secs) = raw.sleep_merge_tolerance {
            if secs < 0 {
                return Err(invalid("sleep_merge_tolerance", "must be nonnegative seconds"));
            }
            sources.merge_tolerance = chrono::Duration::seconds(secs);
        }
        if let Some(p) = raw.preferred_sources.as_deref() {
            sources.preferred = list(p);
        }

        let mapping_out = output("mapping_out", raw.mapping_out, false)?;
        let pseudonym = if raw.pseudonymize.unwrap_or(false) {
            Some(PseudonymSettings {
                seed: raw.seed.unwrap_or(0),
                category_aware: raw.category_aware.unwrap_or(true),
                mapping_out,
            })
        } else if mapping_out.is_some() {
            return Err(invalid("mapping_out", "set without `pseudonymize`"));
        } else {
            None
        };

        let format = match raw.format.as_deref() {
            None | Some("csv") => ExportFormat::Csv,
            Some("xes") => ExportFormat::Xes,
            Some("plot") => ExportFormat::Plot,
            Some(f) => return Err(invalid("format", format!("expected csv, xes or plot, got {f:?}"))),
        };
        let lifecycle = match raw.xes_lifecycle.as_deref() {
            None | Some("pair") => LifecycleMode::Pair,
            Some("duration") => LifecycleMode::Duration,
            Some(m) => return Err(invalid("xes_lifecycle", format!("expected pair or duration, got {m:?}"))),
        };
        let view = match raw.view.as_deref() {
            None | Some("hrv-groups") => ViewKind::HrvGroups,
            Some("case-vs-average") => ViewKind::CaseVsAverage,
            Some(v) => return Err(invalid("view", format!("expected hrv-groups or case-vs-average, got {v:?}"))),
        };
        let group_pattern = raw.group_pattern.unwrap_or_else(|| r"^(\S+)".to_string());
        regex::Regex::new(&group_pattern).map_err(|e| invalid("group_pattern", e.to_string()))?;
        let plot_attributes = list(
            raw.plot_attributes
                .as_deref()
                .unwrap_or("resting_hr_bpm,total_sleep_min,awake_min,deep_sleep_min"),
        );
        if plot_attributes.is_empty() {
            return Err(invalid("plot_attributes", "no attributes listed"));
        }

        Ok(PipelineConfig {
            home_tz,
            health,
            calendar,
            calendar_format,
            column_map,
            category_rules,
            strict: raw.strict.unwrap_or(false),
            from: raw.from,
            to: raw.to,
            strategies,
            aggregate,
            night,
            derive,
            cohort,
            with_activity: raw.with_activity,
            sources,
            pseudonym,
            export: ExportSettings { format, lifecycle, view, group_pattern, plot_attributes },
            log,
            out: output("out", raw.out, needs.out)?,
            log_out: output("log_out", raw.log_out, false)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: ConfigError) -> &'static str {
        match e {
            ConfigError::Invalid { key, .. } => key,
            ConfigError::File { .. } => "<file>",
        }
    }

    fn resolve(raw: RawConfig) -> Result<PipelineConfig, ConfigError> {
        PipelineConfig::resolve(raw, None, Needs::default())
    }

    #[test]
    fn defaults() {
        let c = resolve(RawConfig::default()).unwrap();
        assert_eq!(c.home_tz, chrono_tz::UTC);
        assert!(c.strategies.event_attrs && c.strategies.case_attrs && !c.strategies.derived);
        assert_eq!(c.aggregate, AggregateSpec::Median);
        assert!(c.cohort.is_empty());
        assert!(c.pseudonym.is_none());
    }

    #[test]
    fn diagnostics_name_the_key() {
        let bad = [
            (RawConfig { home_tz: Some("Mars/Olympus".into()), ..Default::default() }, "home_tz"),
            (RawConfig { aggregate: Some("mode".into()), ..Default::default() }, "aggregate"),
            (RawConfig { night_window: Some("18-12".into()), ..Default::default() }, "night_window"),
            (RawConfig { strategies: Some("event-attrs,magic".into()), ..Default::default() }, "strategies"),
            (RawConfig { cohort: Some("total_sleep_min".into()), ..Default::default() }, "cohort"),
            (RawConfig { health: Some("/nonexistent/export.xml".into()), ..Default::default() }, "health"),
            (RawConfig { sleep_merge_tolerance: Some(-1), ..Default::default() }, "sleep_merge_tolerance"),
            (RawConfig { group_pattern: Some("(".into()), ..Default::default() }, "group_pattern"),
            (RawConfig { out: Some("/nonexistent/dir/out.csv".into()), ..Default::default() }, "out"),
        ];
        for (raw, key) in bad {
            assert_eq!(key_of(resolve(raw).unwrap_err()), key);
        }
        let needs = Needs { health: true, ..Default::default() };
        assert_eq!(key_of(PipelineConfig::resolve(RawConfig::default(), None, needs).unwrap_err()), "health");
    }

    #[test]
    fn precedence() {
        let file = RawConfig { home_tz: Some("Europe/Amsterdam".into()), aggregate: Some("mean".into()), ..Default::default() };
        let cli = RawConfig { aggregate: Some("max".into()), ..Default::default() };
        let c = PipelineConfig::resolve(file.clone().overlaid(cli), Some("Asia/Tokyo".into()), Needs::default()).unwrap();
        assert_eq!(c.aggregate, AggregateSpec::Max);
        assert_eq!(c.home_tz, chrono_tz::Europe::Amsterdam);
        let c = PipelineConfig::resolve(RawConfig::default(), Some("Asia/Tokyo".into()), Needs::default()).unwrap();
        assert_eq!(c.home_tz, chrono_tz::Asia::Tokyo);
    }

    #[test]
    fn unknown_file_key_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, "home_tz = \"UTC\"\nhomezone = 1\n").unwrap();
        let err = RawConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("homezone"), "{err}");
    }

    #[test]
    fn file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, "health = \"export.xml\"\n").unwrap();
        assert_eq!(RawConfig::load(&path).unwrap().health.unwrap(), dir.path().join("export.xml"));
    }

    #[test]
    fn column_map_in_toml_or_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("cols.toml");
        let json_path = dir.path().join("cols.json");
        std::fs::write(&toml_path, "subject = \"Title\"\ndate_format = \"%Y-%m-%d\"\n").unwrap();
        std::fs::write(&json_path, r#"{"subject": "Title", "date_format": "%Y-%m-%d"}"#).unwrap();
        let a = resolve(RawConfig { column_map: Some(toml_path), ..Default::default() }).unwrap();
        let b = resolve(RawConfig { column_map: Some(json_path), ..Default::default() }).unwrap();
        assert_eq!(a.column_map.subject, "Title");
        assert_eq!(a.column_map, b.column_map);
        assert_eq!(a.column_map.start_date, ColumnMap::default().start_date);
    }

    #[test]
    fn derive_defaults_and_cohort_alias() {
        let raw = RawConfig { strategies: Some("derived".into()), cohort: Some("good-sleep".into()), ..Default::default() };
        let c = resolve(raw).unwrap();
        assert!(c.derive.workouts);
        assert_eq!(c.derive.sleep, SleepEventMode::Consolidated);
        assert_eq!(c.cohort, CohortPredicate::good_sleep());
    }
}
