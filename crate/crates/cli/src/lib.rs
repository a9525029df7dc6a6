//! Experiment harness for the decentralized GNE solver: configuration,
//! seeded Nash-Cournot instance generation, the end-to-end solve pipeline
//! with CSV/JSON/SVG outputs, and stepsize certification reports.

pub mod config;
pub mod experiment;
pub mod generate;
pub mod plot;

pub use config::{parse_stepsizes_flag, ExperimentConfig, StepsizeSpec, TopologySpec};
pub use experiment::{
    certify, compare_forms, fit_rates_from_csv, resolve_stepsizes, run_experiment,
    CertifyReport, CompareFormsReport, ExperimentOutput, ExperimentReport, ResolvedStepsizes,
};
pub use generate::{generate_cournot, GeneratedInstance};
pub use plot::{emit_svg_plot, read_series, render_svg, PlotError, Series};
