//! Turns solver values back into schedules and network states.

use serde::{Deserialize, Serialize};

use crate::elz_phys::State;
use crate::error::{Error, Result};
use crate::fleet::{FleetSchedule, UnitSchedule};
use crate::grid::{assemble_injections, GridState, StepDispatch};
use crate::scenario::Scenario;

use super::bnb::{MicpSolution, Status};
use super::build::BuiltModel;

/// What the model claimed about its own solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub status: Status,
    /// Objective including the loss regularizer, CNY.
    pub objective: f64,
    /// Profit as the model computes it, CNY.
    pub profit: f64,
    pub hydrogen_kg: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub elapsed_s: f64,
}

/// A complete operating plan for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub scenario: String,
    /// False for the network-blind baseline.
    pub coordinated: bool,
    pub dt_hours: f64,
    pub fleet: FleetSchedule,
    pub dispatch: Vec<StepDispatch>,
    /// Storage energy at the end of each step, `[step][unit]`, MWh.
    pub soc: Vec<Vec<f64>>,
    /// Plant demand per step as modelled (MW, MVar).
    pub plant_load: Vec<(f64, f64)>,
    /// Network state per step as modelled (p.u.); absent for the baseline.
    pub grid: Option<Vec<GridState>>,
    pub model: ModelSummary,
}

fn state_of(on: f64, by: f64, idle: f64) -> State {
    if on >= by && on >= idle {
        State::Production
    } else if by >= idle {
        State::Standby
    } else {
        State::Idle
    }
}

/// Reads the incumbent of `sol` into a [`Schedule`].
pub fn extract(sc: &Scenario, built: &BuiltModel, sol: &MicpSolution) -> Result<Schedule> {
    let x = sol
        .values
        .as_ref()
        .ok_or_else(|| Error::Extraction(format!("no incumbent ({})", sol.status)))?;
    if x.len() != built.model.vars.len() {
        return Err(Error::Extraction(format!(
            "{} values for {} variables",
            x.len(),
            built.model.vars.len()
        )));
    }
    let ix = &built.index;
    let h = sc.steps();
    let val = |v: super::model::VarId| x[v.0];

    let mut units = Vec::with_capacity(ix.units.len());
    for (m, steps) in ix.units.iter().enumerate() {
        let mut states = Vec::with_capacity(h);
        let mut current = Vec::with_capacity(h);
        let mut p_cool = Vec::with_capacity(h);
        for (t, s) in steps.iter().enumerate() {
            let st = state_of(val(s.on), val(s.by), val(s.idle));
            states.push(st);
            let weight: f64 = built.model.pwl[s.pwl].weights.iter().map(|&w| val(w)).sum();
            current.push(if st == State::Production && weight > 1e-9 {
                ix.current[m][t].eval(x) / weight
            } else {
                0.0
            });
            p_cool.push(if st == State::Idle { 0.0 } else { val(s.p_cool).max(0.0) });
        }
        let temperature = ix.temp[m].iter().map(|&v| val(v)).collect();
        units.push(UnitSchedule { states, current, p_cool, temperature });
    }
    let fleet = FleetSchedule { initial_states: sc.initial.states.clone(), units };

    let dev = &sc.network.devices;
    let mut dispatch = Vec::with_capacity(h);
    let mut prev_cb: Vec<u32> = dev.cap_banks.iter().map(|c| c.n_init).collect();
    for t in 0..h {
        let cb_n: Vec<u32> = if built.options.network {
            ix.cb_z[t].iter().map(|zs| zs.iter().map(|&z| val(z)).sum::<f64>().round() as u32).collect()
        } else {
            prev_cb.clone()
        };
        prev_cb = cb_n.clone();
        let mut d = StepDispatch::zeros(dev, cb_n);
        let get = |v: &Vec<Vec<super::model::VarId>>| -> Vec<f64> {
            v.get(t).map(|r| r.iter().map(|&id| val(id)).collect()).unwrap_or_default()
        };
        d.wt_p = get(&ix.wt_p);
        d.pv_p = get(&ix.pv_p);
        d.es_p_in = get(&ix.es_in);
        d.es_p_out = get(&ix.es_out);
        if built.options.network {
            d.wt_q = get(&ix.wt_q);
            d.pv_q = get(&ix.pv_q);
            d.es_q = get(&ix.es_q);
            d.svc_q = get(&ix.svc_q);
        }
        dispatch.push(d);
    }
    let soc = ix.soc.iter().map(|r| r.iter().map(|&v| val(v)).collect()).collect();
    let plant_load: Vec<(f64, f64)> = (0..h).map(|t| (ix.load_p[t].eval(x), ix.load_q[t].eval(x))).collect();

    let grid = if built.options.network {
        let base = sc.network.base_mva;
        let mut states = Vec::with_capacity(h);
        for t in 0..h {
            let v_sq: Vec<f64> = ix.v_sq[t].iter().map(|&v| val(v)).collect();
            let inj = assemble_injections(&sc.network, &dispatch[t], &v_sq, plant_load[t])?;
            states.push(GridState {
                p_flow: ix.p_flow[t].iter().map(|&v| val(v)).collect(),
                q_flow: ix.q_flow[t].iter().map(|&v| val(v)).collect(),
                l: ix.l[t].iter().map(|&v| val(v)).collect(),
                p_inj: inj.iter().map(|i| i.0 / base).collect(),
                q_inj: inj.iter().map(|i| i.1 / base).collect(),
                v_sq,
            });
        }
        Some(states)
    } else {
        None
    };

    Ok(Schedule {
        scenario: sc.name.clone(),
        coordinated: built.options.network,
        dt_hours: sc.dt(),
        fleet,
        dispatch,
        soc,
        plant_load,
        grid,
        model: ModelSummary {
            status: sol.status,
            objective: sol.objective.unwrap_or(f64::NAN),
            profit: sol.report("profit").unwrap_or(f64::NAN),
            hydrogen_kg: sol.report("hydrogen_kg").unwrap_or(f64::NAN),
            bound: sol.bound,
            gap: sol.gap.unwrap_or(f64::NAN),
            nodes: sol.stats.nodes,
            elapsed_s: sol.stats.elapsed_s,
        },
    })
}
