//! Serialization of enriched logs: Disco CSV, XES, plot tables, and
//! pseudonymized activity names.

mod csv;
mod plot;
mod pseudonym;
mod xes;

use std::io;

use crate::error::Error;

pub use self::csv::{export_csv, read_csv};
pub use self::plot::{emit_plot_data, PlotTable, PlotView};
pub use self::pseudonym::{pseudonymize, PseudonymMap};
pub use self::xes::{export_xes, LifecycleMode, XesOptions};

/// Renders with at most three decimals unless that would not read back
/// as the same value, in which case the shortest exact form is used.
pub fn format_float(v: f64) -> String {
    let short = format!("{v:.3}");
    let short = if short.contains('.') {
        short.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        short
    };
    let short = if short == "-0" { "0".to_string() } else { short };
    if short.parse::<f64>().ok() == Some(v) || (v == 0.0 && short == "0") {
        short
    } else {
        format!("{v}")
    }
}

fn sink_error(e: io::Error) -> Error {
    Error::SinkWrite(e)
}

fn csv_sink_error(e: ::csv::Error) -> Error {
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::SinkWrite(io),
        other => Error::SinkWrite(io::Error::other(format!("{other:?}"))),
    }
}
