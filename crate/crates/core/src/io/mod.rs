//! Scenario configuration and result files.

pub mod config;
pub mod output;

pub use config::{
    generate_arrivals, load_config, parse_config, ConfigError, GeneratorConfig, ModeSelection, ScenarioConfig,
    SimulationConfig, StreamConfig,
};
pub use output::{metrics_json, schedule_json, trajectories_csv, write_results, Comparison, OutputError, CSV_HEADER};
