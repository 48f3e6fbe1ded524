//! Reports over finished runs: macro statistics of the discovered circuits,
//! baseline comparisons, cost landscapes and SVG plots. Every report is a
//! CSV table first; plots are rendered from those tables.

mod macro_report;
mod micro;
mod plot;
mod table;

pub use macro_report::{
    accuracy_bin, analyze_macro, CrossCheck, MacroReport, DEFAULT_ACCURACY_THRESHOLD, PATTERN_LEN, USAGE_ROLES,
};
pub use micro::{compare_baselines, cost_landscape, linspace, reachable_circuits, Landscape, COMPARISON_HEADER};
pub use plot::{bars_svg, heatmap_svg, metrics_svg, render_csv, MAX_POINTS};
pub use table::CsvTable;
