//! Command-line surface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use wearlog_core::fixture::{generate, FixtureSpec};

use crate::config::{Needs, PipelineConfig, RawConfig, HOME_TZ_ENV};
use crate::error::{CliError, EXIT_CONFIG, EXIT_OK};
use crate::output::StagedOutputs;
use crate::pipeline::{
    build_log, ingest_calendar, ingest_health, load_log, stage_export, stage_log_json, Summary,
};

#[derive(Debug, Parser)]
#[command(name = "wearlog", version, about = "Enrich calendar event logs with Apple Health data")]
pub struct Cli {
    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the inputs and report what they contain.
    IngestCheck(PipelineArgs),
    /// Build the enriched log and save it as JSON.
    Build(PipelineArgs),
    /// Export a saved log as CSV, XES, or plot data.
    Export(PipelineArgs),
    /// Ingest, build, and export in one go.
    Run(PipelineArgs),
    /// Write a synthetic calendar, health export, manifest, and config.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Flat TOML file with any of the keys below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub summary_json: bool,
    #[command(flatten)]
    pub keys: KeyArgs,
}

#[derive(Debug, Args, Default)]
pub struct KeyArgs {
    /// IANA zone of the participant [fallback: $WEARLOG_HOME_TZ, then UTC].
    #[arg(long)]
    pub home_tz: Option<String>,
    /// Apple Health export.xml.
    #[arg(long)]
    pub health: Option<PathBuf>,
    /// Calendar export (.csv or .ics).
    #[arg(long)]
    pub calendar: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "ics"])]
    pub calendar_format: Option<String>,
    /// TOML or JSON column map for non-Outlook calendar tables.
    #[arg(long)]
    pub column_map: Option<PathBuf>,
    /// Subjects matching this regex are work events.
    #[arg(long)]
    pub work_pattern: Option<String>,
    #[arg(long)]
    pub private_pattern: Option<String>,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub from: Option<NaiveDate>,
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Comma list of event-attrs, case-attrs, derived.
    #[arg(long)]
    pub strategy: Option<String>,
    /// median, mean, min, max, or count.
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Night attribution window, e.g. 18:00..12:00.
    #[arg(long)]
    pub night_window: Option<String>,
    #[arg(long, value_parser = ["following", "preceding"])]
    pub night_direction: Option<String>,
    /// Comma list of workouts, sleep.
    #[arg(long)]
    pub derive: Option<String>,
    #[arg(long, value_parser = ["consolidated", "per-episode"])]
    pub sleep_events: Option<String>,
    #[arg(long)]
    pub workout_activities: Option<String>,
    /// Case predicate such as "total_sleep_min>=480,awake_min<60", or good-sleep.
    #[arg(long)]
    pub cohort: Option<String>,
    /// Keep only cases containing this activity.
    #[arg(long)]
    pub with_activity: Option<String>,
    /// Gap in seconds below which sleep episodes merge.
    #[arg(long)]
    pub sleep_merge_tolerance: Option<i64>,
    #[arg(long)]
    pub preferred_sources: Option<String>,
    #[arg(long)]
    pub pseudonymize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use Act<n> for every pseudonym instead of Work<n>/Private<n>.
    #[arg(long)]
    pub no_category_prefix: bool,
    /// Where to keep the private pseudonym map.
    #[arg(long)]
    pub mapping_out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "xes", "plot"])]
    pub format: Option<String>,
    #[arg(long, value_parser = ["pair", "duration"])]
    pub xes_lifecycle: Option<String>,
    #[arg(long, value_parser = ["hrv-groups", "case-vs-average"])]
    pub view: Option<String>,
    /// Regex whose first capture group labels an activity group.
    #[arg(long)]
    pub group_pattern: Option<String>,
    #[arg(long)]
    pub plot_attributes: Option<String>,
    /// Saved log JSON (export input).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also save the built log as JSON (run only).
    #[arg(long)]
    pub log_out: Option<PathBuf>,
}

impl KeyArgs {
    fn into_raw(self) -> RawConfig {
        RawConfig {
            home_tz: self.home_tz,
            health: self.health,
            calendar: self.calendar,
            calendar_format: self.calendar_format,
            column_map: self.column_map,
            work_pattern: self.work_pattern,
            private_pattern: self.private_pattern,
            strict: self.strict.then_some(true),
            from: self.from,
            to: self.to,
            strategies: self.strategy,
            aggregate: self.aggregate,
            night_window: self.night_window,
            night_direction: self.night_direction,
            derive: self.derive,
            sleep_events: self.sleep_events,
            workout_activities: self.workout_activities,
            cohort: self.cohort,
            with_activity: self.with_activity,
            sleep_merge_tolerance: self.sleep_merge_tolerance,
            preferred_sources: self.preferred_sources,
            pseudonymize: self.pseudonymize.then_some(true),
            seed: self.seed,
            category_aware: self.no_category_prefix.then_some(false),
            mapping_out: self.mapping_out,
            format: self.format,
            xes_lifecycle: self.xes_lifecycle,
            view: self.view,
            group_pattern: self.group_pattern,
            plot_attributes: self.plot_attributes,
            log: self.log,
            out: self.out,
            log_out: self.log_out,
        }
    }
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Fixture spec TOML, or `paper` for the bundled preset.
    #[arg(long, default_value = "paper")]
    pub spec: String,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory to write into; created if absent.
    #[arg(short, long)]
    pub out: PathBuf,
}

fn resolve(args: PipelineArgs, needs: Needs) -> Result<(PipelineConfig, bool), CliError> {
    let file = match args.config.as_deref() {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    let raw = file.overlaid(args.keys.into_raw());
    let env_tz = std::env::var(HOME_TZ_ENV).ok().filter(|s| !s.trim().is_empty());
    Ok((PipelineConfig::resolve(raw, env_tz, needs)?, args.summary_json))
}

fn ingest_check(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    ingest_calendar(cfg, &mut summary)?;
    ingest_health(cfg, &mut summary)?;
    Ok(summary)
}

fn build(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    let events = ingest_calendar(cfg, &mut summary)?;
    let bundle = ingest_health(cfg, &mut summary)?;
    let log = build_log(cfg, events, &bundle, &mut summary)?;
    let mut staged = StagedOutputs::new();
    stage_log_json(&log, cfg.out.as_deref().expect("validated"), &mut staged)?;
    summary.exported_cases = log.cases.len();
    summary.exported_events = log.event_count();
    summary.outputs = display_paths(staged.commit()?);
    Ok(summary)
}

fn export(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    let log = load_log(cfg.log.as_deref().expect("validated"))?;
    summary.cases_built = log.cases.len();
    let mut staged = StagedOutputs::new();
    stage_export(cfg, log, &mut staged, &mut summary)?;
    summary.outputs = display_paths(staged.commit()?);
    Ok(summary)
}

/// The whole pipeline; nothing is written unless every stage succeeds.
pub fn run(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    let events = ingest_calendar(cfg, &mut summary)?;
    let bundle = ingest_health(cfg, &mut summary)?;
    let log = build_log(cfg, events, &bundle, &mut summary)?;
    let mut staged = StagedOutputs::new();
    if let Some(path) = cfg.log_out.as_deref() {
        stage_log_json(&log, path, &mut staged)?;
    }
    stage_export(cfg, log, &mut staged, &mut summary)?;
    summary.outputs = display_paths(staged.commit()?);
    Ok(summary)
}

fn display_paths(paths: Vec<PathBuf>) -> Vec<String> {
    paths.into_iter().map(|p| p.display().to_string()).collect()
}

/// Writes the fixture files for `spec` into `dir`.
pub fn write_fixture(spec: &FixtureSpec, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let fx = generate(spec).map_err(CliError::Pipeline)?;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })?;
    let manifest = serde_json::to_string_pretty(&fx.manifest).expect("manifest serializes") + "\n";
    let config = format!(
        "# Pipeline over the generated files; paths are relative to this file.\n\
         home_tz = \"{}\"\n\
         from = \"{}\"\n\
         to = \"{}\"\n\
         calendar = \"calendar.csv\"\n\
         health = \"export.xml\"\n\
         strategies = \"event-attrs,case-attrs\"\n\
         aggregate = \"median\"\n\
         night_window = \"18:00..12:00\"\n\
         out = \"log.csv\"\n",
        spec.home_tz.name(),
        spec.start_date,
        spec.end_date
    );
    let mut staged = StagedOutputs::new();
    staged.write_bytes(&dir.join("calendar.csv"), &fx.calendar_csv)?;
    staged.write_bytes(&dir.join("export.xml"), &fx.health_xml)?;
    staged.write_bytes(&dir.join("manifest.json"), manifest.as_bytes())?;
    staged.write_bytes(&dir.join("pipeline.toml"), config.as_bytes())?;
    staged.commit()
}

fn fixture(args: FixtureArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut spec = if args.spec == "paper" {
        FixtureSpec::paper()
    } else {
        let path = PathBuf::from(&args.spec);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| crate::config::ConfigError::File { path: path.clone(), message: e.to_string() })?;
        FixtureSpec::from_toml(&text).map_err(|e| crate::config::ConfigError::File { path, message: e.to_string() })?
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    write_fixture(&spec, &args.out)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let (summary, json) = match command {
        Command::Fixture(args) => {
            for p in fixture(args)? {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            return Ok(());
        }
        Command::IngestCheck(args) => {
            let needs = Needs::default();
            let (cfg, json) = resolve(args, needs)?;
            if cfg.health.is_none() && cfg.calendar.is_none() {
                return Err(crate::config::ConfigError::Invalid { key: "health", message: "set `health` and/or `calendar`".into() }.into());
            }
            (ingest_check(&cfg)?, json)
        }
        Command::Build(args) => {
            let (cfg, json) = resolve(args, Needs { calendar: true, out: true, ..Needs::default() })?;
            (build(&cfg)?, json)
        }
        Command::Export(args) => {
            let (cfg, json) = resolve(args, Needs { log: true, out: true, ..Needs::default() })?;
            (export(&cfg)?, json)
        }
        Command::Run(args) => {
            let (cfg, json) = resolve(args, Needs { calendar: true, out: true, ..Needs::default() })?;
            (run(&cfg)?, json)
        }
    };
    if json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        let _ = summary.render(out);
    }
    Ok(())
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
