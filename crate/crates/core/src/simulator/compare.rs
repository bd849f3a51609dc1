//! The network-blind baseline and side-by-side comparison of simulated
//! schedules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::extract::Schedule;
use crate::optimizer::{optimize, OptimizeOptions};
use crate::scenario::Scenario;

use super::simulate::{simulate, ReactivePolicy, SimOptions, SimulationReport, Summary};

/// The traditional schedule: the same commitment problem with the network
/// and every reactive term removed, so only the aggregate active balance
/// ties units to renewables. Its reactive dispatch is left to the
/// simulator's compensator-first rule.
pub fn baseline_traditional(sc: &Scenario, opts: &OptimizeOptions) -> Result<Schedule> {
    let mut o = opts.clone();
    o.build.network = false;
    optimize(sc, &o)
}

/// Simulator options matching the kind of schedule.
pub fn sim_options_for(schedule: &Schedule) -> SimOptions {
    SimOptions {
        reactive: if schedule.coordinated {
            ReactivePolicy::Scheduled
        } else {
            ReactivePolicy::CompensatorsFirst
        },
        ..SimOptions::default()
    }
}

/// Simulates a schedule with [`sim_options_for`].
pub fn simulate_schedule(schedule: &Schedule, sc: &Scenario) -> Result<SimulationReport> {
    simulate(schedule, sc, &sim_options_for(schedule))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub hydrogen_kg: f64,
    pub loss_ratio_pct: f64,
    pub profit: f64,
}

impl MethodRow {
    fn of(method: &str, s: &Summary) -> Self {
        Self {
            method: method.into(),
            hydrogen_kg: s.hydrogen_kg,
            loss_ratio_pct: s.loss_ratio_pct,
            profit: s.profit,
        }
    }
}

/// Second method against the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario: String,
    pub reference: MethodRow,
    pub candidate: MethodRow,
    pub hydrogen_delta_kg: f64,
    pub hydrogen_delta_pct: f64,
    /// Percentage points; negative means fewer losses.
    pub loss_delta_pp: f64,
    pub profit_delta_pct: f64,
}

fn rel_pct(new: f64, old: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(new)
        }
    } else {
        (new - old) / old.abs() * 100.0
    }
}

/// Compares `candidate` against `reference`. Both must come from the same
/// scenario and horizon.
pub fn compare(reference: &SimulationReport, candidate: &SimulationReport) -> Result<ComparisonTable> {
    let (a, b) = (&reference.summary, &candidate.summary);
    if a.scenario != b.scenario {
        return Err(Error::Model(format!(
            "reports belong to different scenarios: {:?} vs {:?}",
            a.scenario, b.scenario
        )));
    }
    if reference.steps.len() != candidate.steps.len() {
        return Err(Error::HorizonMismatch(reference.steps.len(), candidate.steps.len()));
    }
    let name = |s: &Summary| if s.coordinated { "Proposed" } else { "Traditional" };
    Ok(ComparisonTable {
        scenario: a.scenario.clone(),
        reference: MethodRow::of(name(a), a),
        candidate: MethodRow::of(name(b), b),
        hydrogen_delta_kg: b.hydrogen_kg - a.hydrogen_kg,
        hydrogen_delta_pct: rel_pct(b.hydrogen_kg, a.hydrogen_kg),
        loss_delta_pp: b.loss_ratio_pct - a.loss_ratio_pct,
        profit_delta_pct: rel_pct(b.profit, a.profit),
    })
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>20} {:>20} {:>14}", "Method", "Hydrogen Production", "Network Loss Ratio", "Profit")?;
        for r in [&self.reference, &self.candidate] {
            writeln!(
                f,
                "{:<12} {:>17.2} kg {:>19.2}% {:>10.0} CNY",
                r.method, r.hydrogen_kg, r.loss_ratio_pct, r.profit
            )?;
        }
        write!(
            f,
            "{:<12} {:>19.2}% {:>19.2}% {:>13.2}%",
            "Comparison", self.hydrogen_delta_pct, self.loss_delta_pp, self.profit_delta_pct
        )
    }
}
