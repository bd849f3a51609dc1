//! Nonlinear replay of schedules: AC power flow, unit models and the
//! violation ledger.

pub mod compare;
pub mod powerflow;
pub mod report;
pub mod simulate;

pub use compare::{baseline_traditional, compare, sim_options_for, simulate_schedule, ComparisonTable, MethodRow};
pub use powerflow::{sweep, two_bus_voltage, Sweep, SweepOptions};
pub use report::{summary_json, write_steps_csv};
pub use simulate::{
    greedy_banks, greedy_reactive, simulate, track_svc, ActionKind, GapDiagnostics, ReactivePolicy, SimAction, SimOptions, SimulationReport,
    StepRecord, Summary, Violation, ViolationKind,
};
