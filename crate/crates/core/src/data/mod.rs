//! Daily case series, the bundled country fixtures and result writers.

mod fixtures;
mod output;
mod series;

pub use fixtures::{fixture, fixtures, Fixture, ReportedRegime, FIXTURE_KEYS};
pub use output::{
    ensemble_csv, format_sig, render_svg, rho_csv, trace_csv, trajectory_csv, write_file, Chart,
    ChartSeries,
};
pub use series::{
    from_cumulative, parse_series, parse_series_file, DailyRow, DailySeries, Strictness,
    SERIES_HEADER,
};
