//! Configuration, command orchestration and bit-stable output files.

mod config;
mod fields;
mod run;

pub use config::{
    parse_config, parse_config_str, CutoffConfig, DiagnosticsConfig, DomainConfig, FlowConfig, ForceConfig, LadderConfig,
    LawConfig, RunConfig, RungOverride,
};
pub use fields::{export_fields, read_fields, write_series, FieldRows, FIELDS_HEADER};
pub use run::{
    build_problem, cmd_check, cmd_ladder, cmd_solve, exit_code, CutoffSource, OutputLock, Problem, RunReport, SolveSummary,
    EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, LOCK_FILE, REPORT_FILE,
};
