//! Scenario configuration, presets and the orchestration behind the
//! command-line verbs.

mod config;
mod run;
mod study;

pub use config::{
    list_presets, preset, Check, ChecksConfig, DataConfig, InnerSchemeConfig, MeshConfig, OutputConfig, PairConfig,
    RegularizationConfig, RoughConfig, ScenarioConfig, SolverConfig, TimeConfig, VelocityConfig,
};
pub use run::{
    build_mesh, build_pair_spec, build_spec, build_trajectory, build_velocity, conservation_report,
    enthalpy_from_temperature, evaluate, exact_errors, graph_report, refined, run, solver_options, write_artifacts,
    RunOutcome, CONSERVATION_TOL, GRAPH_TOL,
};
pub use study::{
    rough_data_study, sweep, write_rough_csv, write_sweep_csv, RoughDataReport, RoughPair, SweepAxis, SweepRow,
};
