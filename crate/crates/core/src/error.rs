use thiserror::Error;

/// Errors raised by the physical models, the model builder and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {term}: {detail}")]
    Domain { term: &'static str, detail: String },

    #[error("conversion efficiency is undefined at zero current")]
    UndefinedEfficiency,

    #[error("cooling power {p_cool} kW outside the admissible band [0, {max}] kW")]
    CoolingOutOfBand { p_cool: f64, max: f64 },

    #[error("rectifier cannot reach the stack voltage: cos(phi) = {ratio:.6} > 1")]
    InfeasibleVoltage { ratio: f64 },

    #[error("unit {unit}, step {step}: {source}")]
    Unit {
        unit: usize,
        step: usize,
        source: Box<Error>,
    },

    #[error("capability violation: {0}")]
    Capability(String),

    #[error("storage violation: {0}")]
    Storage(String),

    #[error("capacitor bank violation: {0}")]
    CapacitorBank(String),

    #[error("unknown bus {0}")]
    UnknownBus(usize),

    #[error("network error: {0}")]
    Network(String),

    #[error("power flow did not converge after {iterations} iterations (worst bus {worst_bus}, last update {last_update:.3e} p.u.)")]
    Divergence {
        iterations: usize,
        worst_bus: usize,
        last_update: f64,
    },

    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Scenario(Vec<String>),

    #[error("model error: {0}")]
    Model(String),

    #[error("PWL tolerance breached on surface `{surface}`: {error:.3e} > {tolerance:.3e} (worst cell I[{cell_i}], T[{cell_t}]; refine the grid there)")]
    PwlTolerance {
        surface: String,
        error: f64,
        tolerance: f64,
        cell_i: usize,
        cell_t: usize,
    },

    #[error("solver: {0}")]
    Solver(String),

    #[error("schedule extraction: {0}")]
    Extraction(String),

    #[error("horizon mismatch: {0} vs {1} steps")]
    HorizonMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
