//! Wearable data extracted from an Apple Health `export.xml`.

mod parser;
mod sleep;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::temporal::{Instant, Interval};

pub use parser::{for_each_item, parse_health_export, HealthItem, HealthReader, ReadStats};
pub use sleep::{reconcile_sleep, SourcePolicy};

pub const HRV_SDNN_TYPE: &str = "HKQuantityTypeIdentifierHeartRateVariabilitySDNN";
pub const RESTING_HR_TYPE: &str = "HKQuantityTypeIdentifierRestingHeartRate";
pub const SLEEP_ANALYSIS_TYPE: &str = "HKCategoryTypeIdentifierSleepAnalysis";
pub const WORKOUT_ACTIVITY_PREFIX: &str = "HKWorkoutActivityType";
pub const SLEEP_VALUE_PREFIX: &str = "HKCategoryValueSleepAnalysis";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleKind {
    HrvSdnn,
    RestingHeartRate,
}

/// One point measurement: SDNN in ms or resting heart rate in bpm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthSample {
    pub kind: SampleKind,
    pub at: Instant,
    pub value: f64,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SleepStage {
    Awake,
    Core,
    Deep,
    Rem,
    InBedUnspecified,
}

impl SleepStage {
    /// Maps a sleep-analysis `value` attribute. Unknown strings fall back to
    /// `InBedUnspecified`, which never counts as sleep.
    pub fn from_export_value(value: &str) -> SleepStage {
        match value.strip_prefix(SLEEP_VALUE_PREFIX).unwrap_or(value) {
            "AsleepDeep" => SleepStage::Deep,
            "AsleepCore" => SleepStage::Core,
            "AsleepREM" => SleepStage::Rem,
            "Awake" => SleepStage::Awake,
            _ => SleepStage::InBedUnspecified,
        }
    }

    pub fn export_value(&self) -> &'static str {
        match self {
            SleepStage::Awake => "HKCategoryValueSleepAnalysisAwake",
            SleepStage::Core => "HKCategoryValueSleepAnalysisAsleepCore",
            SleepStage::Deep => "HKCategoryValueSleepAnalysisAsleepDeep",
            SleepStage::Rem => "HKCategoryValueSleepAnalysisAsleepREM",
            SleepStage::InBedUnspecified => "HKCategoryValueSleepAnalysisInBed",
        }
    }

    pub fn is_asleep(&self) -> bool {
        matches!(self, SleepStage::Core | SleepStage::Deep | SleepStage::Rem)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SleepStage::Awake => "Awake",
            SleepStage::Core => "Core",
            SleepStage::Deep => "Deep",
            SleepStage::Rem => "REM",
            SleepStage::InBedUnspecified => "InBed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepEpisode {
    pub interval: Interval,
    pub stage: SleepStage,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workout {
    pub interval: Interval,
    /// Activity name with the HealthKit prefix removed, e.g. `Walking`.
    pub activity: String,
    pub source: String,
}

/// Everything extracted from one export, each list sorted by start time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthBundle {
    pub samples: Vec<HealthSample>,
    pub sleep: Vec<SleepEpisode>,
    pub workouts: Vec<Workout>,
    pub skipped_records: usize,
    pub ignored_records: usize,
    /// Hull of every extracted item; `None` for an export with no usable records.
    pub date_range: Option<Interval>,
}

impl HealthBundle {
    pub fn samples_of(&self, kind: SampleKind) -> impl Iterator<Item = &HealthSample> {
        self.samples.iter().filter(move |s| s.kind == kind)
    }

    /// HRV points ready for an interval join.
    pub fn hrv_points(&self) -> Vec<(Instant, f64)> {
        self.samples_of(SampleKind::HrvSdnn).map(|s| (s.at, s.value)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestConfig {
    pub home_tz: Tz,
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { home_tz: chrono_tz::UTC, strict: false }
    }
}
