//! Mixed-integer second-order cone scheduling.

pub mod bnb;
pub mod build;
pub mod export;
pub mod extract;
pub mod model;
pub mod pwl;
pub mod relax;

pub use build::{build_model, BuildOptions, BuiltModel, ModelIndex};
pub use model::{LinExpr, MicpModel, ObjSense, Sense, VarId};
pub use pwl::GridSpec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::Scenario;

use bnb::{solve, SolveOptions};
use extract::{extract, Schedule};

/// Everything needed to turn a scenario into a schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub build: BuildOptions,
    pub solve: SolveOptions,
}

/// Builds and solves the scheduling model for `sc`, then reads the
/// incumbent back. `build.network` selects the coordinated model or the
/// network-blind one.
pub fn optimize(sc: &Scenario, opts: &OptimizeOptions) -> Result<Schedule> {
    sc.validate()?;
    let built = build_model(sc, &opts.build)?;
    let sol = solve(&built.model, &opts.solve)?;
    extract(sc, &built, &sol)
}
