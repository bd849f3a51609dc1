//! Replays a schedule through the nonlinear unit models and the AC power
//! flow.
//!
//! Temperatures are re-integrated from the initial conditions, plant loads
//! come from the closed-form stack and rectifier models at the solved bus
//! voltage, and the storage unit at the root bus acts as the slack. The
//! storage keeps its scheduled active power; any active mismatch is first
//! met from renewable headroom (or by curtailment when there is surplus),
//! then by lowering electrolyzer currents towards their minimum. Limits
//! that are still broken are written to the violation ledger and the run
//! continues.

use serde::{Deserialize, Serialize};

use crate::elz_phys::{self, State};
use crate::error::{Error, Result};
use crate::fleet::{FleetSchedule, ElectrolyzerParams};
use crate::grid::{assemble_injections, cb_q, pv_q_limit, wt_envelope, GridState, StepDispatch, Topology};
use crate::optimizer::extract::Schedule;
use crate::rectifier;
use crate::scenario::Scenario;

use super::powerflow::{sweep, SweepOptions};

/// How reactive setpoints are chosen during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactivePolicy {
    /// Use the setpoints stored in the schedule. When the plant draws more
    /// reactive power than the schedule assumed, the SVC covers the excess;
    /// a smaller draw is left to the slack.
    Scheduled,
    /// Ignore scheduled reactive setpoints: the compensators at their
    /// present state, then the SVC to capacity, then wind and PV pro rata
    /// to their headroom cover the plant's reactive demand. The storage at
    /// the root supplies the rest.
    CompensatorsFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub sweep: SweepOptions,
    pub reactive: ReactivePolicy,
    /// Active balance tolerance at the slack, MW.
    pub balance_tol: f64,
    /// Shed electrolyzer load until every bus is above its lower voltage
    /// limit. Off by default: undervoltage is flagged and the schedule is
    /// simulated through.
    pub correct_voltage: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sweep: SweepOptions::default(),
            reactive: ReactivePolicy::Scheduled,
            balance_tol: 1e-7,
            correct_voltage: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Voltage,
    Capability,
    Transition,
    Temperature,
    Storage,
    Balance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: usize,
    pub element: String,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// Renewable output reduced below the schedule, MW.
    Curtailment,
    /// Renewable output raised above the schedule, MW.
    Headroom,
    /// Electrolyzer demand reduced by lowering currents, MW.
    CurrentReduction,
    /// A producing unit moved to standby.
    Standby,
    /// Storage active power moved off its schedule, MW.
    StorageDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAction {
    pub step: usize,
    pub kind: ActionKind,
    pub amount: f64,
    pub reason: String,
}

/// One simulated step. Powers in MW/MVar, voltages in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub v_pu: Vec<f64>,
    pub branch_loss_mw: Vec<f64>,
    pub loss_mw: f64,
    pub wind_mw: f64,
    pub pv_mw: f64,
    pub available_mw: f64,
    pub es_p_mw: f64,
    pub es_q_mvar: f64,
    pub soc_mwh: Vec<f64>,
    pub plant_p_mw: f64,
    pub plant_q_mvar: f64,
    /// Plant reactive demand as modelled by the optimizer.
    pub model_plant_q_mvar: Option<f64>,
    pub states: Vec<State>,
    pub current_ka: Vec<f64>,
    /// Temperature at the start of the step, °C.
    pub temperature_c: Vec<f64>,
    pub p_cool_kw: Vec<f64>,
    pub hydrogen_kg: Vec<f64>,
    pub efficiency: Vec<Option<f64>>,
    pub cb_n: Vec<u32>,
    pub svc_q_mvar: Vec<f64>,
    pub wt_q_mvar: Vec<f64>,
    pub pv_q_mvar: Vec<f64>,
    pub sweep_iterations: usize,
    pub grid: GridState,
}

impl StepRecord {
    pub fn generation_mw(&self) -> f64 {
        self.wind_mw + self.pv_mw + self.es_p_mw.max(0.0)
    }
}

/// How far the optimizer's own accounting is from the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnostics {
    pub model_profit: f64,
    pub model_hydrogen_kg: f64,
    /// |model - simulated| / |simulated|.
    pub profit_rel: f64,
    pub hydrogen_rel: f64,
    pub max_plant_q_error_mvar: f64,
    /// Largest voltage difference against the model's network state, p.u.
    pub max_voltage_error_pu: Option<f64>,
    /// Largest slack `l * v - P² - Q²` in the model's branch cones, p.u.
    pub max_cone_slack: Option<f64>,
    pub max_temperature_error_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub coordinated: bool,
    pub hydrogen_kg: f64,
    pub revenue: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub cb_cost: f64,
    pub profit: f64,
    pub loss_mwh: f64,
    pub generation_mwh: f64,
    /// Network loss over generation, %.
    pub loss_ratio_pct: f64,
    pub curtailed_mwh: f64,
    pub min_v_pu: f64,
    pub max_v_pu: f64,
    pub violations: usize,
    pub voltage_violations: usize,
    pub transition_violations: usize,
    pub gap: GapDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub summary: Summary,
    pub steps: Vec<StepRecord>,
    pub violations: Vec<Violation>,
    pub actions: Vec<SimAction>,
    /// The fleet trajectory that was actually simulated.
    pub fleet: FleetSchedule,
}

impl SimulationReport {
    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty()
    }
}

/// Unit operating data for one step evaluation.
#[derive(Debug, Clone)]
struct UnitOp {
    state: State,
    current: f64,
    temp: f64,
    p_cool: f64,
}

struct Eval {
    grid: GridState,
    dispatch: StepDispatch,
    plant: (f64, f64),
    units: Vec<UnitOp>,
    /// Slack active power above the storage schedule, MW.
    mismatch: f64,
    iterations: usize,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    topo: Topology,
    opts: SimOptions,
    root_es: Vec<usize>,
    plant_bus: usize,
    /// Plant reactive demand the schedule was built for, MVar.
    model_q: Vec<Option<f64>>,
}

/// Renewable adjustment `alpha` in [-1, 1]: negative curtails towards zero,
/// positive uses headroom towards the available output.
fn adjust(sched: f64, avail: f64, alpha: f64) -> f64 {
    if alpha < 0.0 {
        sched * (1.0 + alpha)
    } else {
        sched + alpha * (avail - sched).max(0.0)
    }
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    // f(lo) and f(hi) bracket zero with f increasing from lo to hi or the
    // reverse; the sign at lo decides.
    let flo = f(lo)?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl<'a> Ctx<'a> {
    fn params(&self, m: usize) -> &ElectrolyzerParams {
        &self.sc.plant.units[m]
    }

    /// Operating points after current scaling (`scale` in [0, 1] maps the
    /// scheduled current towards the minimum) and standby overrides.
    fn unit_ops(&self, base: &[UnitOp], scale: f64, standby: &[bool]) -> Vec<UnitOp> {
        base.iter()
            .enumerate()
            .map(|(m, u)| {
                let sp = &self.params(m).stack;
                let mut u = u.clone();
                if u.state == State::Production {
                    if standby[m] {
                        u.state = State::Standby;
                        u.current = 0.0;
                    } else {
                        u.current = sp.i_min + scale * (u.current - sp.i_min).max(0.0);
                    }
                }
                u
            })
            .collect()
    }

    fn evaluate(&self, t: usize, sched: &StepDispatch, units: Vec<UnitOp>, alpha: f64) -> Result<Eval> {
        let sc = self.sc;
        let net = &sc.network;
        let dev = &net.devices;
        let base = net.base_mva;
        let mut d = sched.clone();
        for (k, w) in dev.wind.iter().enumerate() {
            d.wt_p[k] = adjust(sched.wt_p[k], sc.series.wind_mw[k][t], alpha).clamp(0.0, w.s);
            let (lo, hi) = wt_envelope(w.s, d.wt_p[k])?;
            d.wt_q[k] = d.wt_q.get(k).copied().unwrap_or(0.0).clamp(lo, hi);
        }
        for (k, pv) in dev.pv.iter().enumerate() {
            d.pv_p[k] = adjust(sched.pv_p[k], sc.series.pv_mw[k][t], alpha).clamp(0.0, pv.s);
            let lim = pv_q_limit(pv.s, pv.theta_deg, d.pv_p[k]);
            d.pv_q[k] = d.pv_q.get(k).copied().unwrap_or(0.0).clamp(-lim, lim);
        }
        let plant_load = |v_sq: &[f64]| -> Result<(f64, f64)> {
            let mut load = (0.0, 0.0);
            for (m, u) in units.iter().enumerate() {
                let p = self.params(m);
                let u_ac = v_sq[self.plant_bus].sqrt() * p.rectifier.u_ac_nominal;
                let (lp, lq) = rectifier::apparent_load(
                    &p.rectifier,
                    &p.stack,
                    &p.aux,
                    u_ac,
                    u.state,
                    u.current,
                    u.temp,
                    u.p_cool,
                )
                .map_err(|e| Error::Unit { unit: m, step: t, source: Box::new(e) })?;
                load.0 += lp;
                load.1 += lq;
            }
            Ok(load)
        };
        let mut last = (d.clone(), (0.0, 0.0));
        let policy = self.opts.reactive;
        let s = sweep(
            net,
            &self.topo,
            1.0,
            |v_sq| {
                let load = plant_load(v_sq)?;
                let mut dd = d.clone();
                match (policy, self.model_q.get(t).copied().flatten()) {
                    (ReactivePolicy::CompensatorsFirst, _) => greedy_reactive(sc, &mut dd, v_sq, load.1)?,
                    (ReactivePolicy::Scheduled, Some(q_model)) => track_svc(sc, &mut dd, (load.1 - q_model).max(0.0)),
                    (ReactivePolicy::Scheduled, None) => {}
                }
                let inj = assemble_injections(net, &dd, v_sq, load)?;
                last = (dd, load);
                Ok(inj.into_iter().map(|(p, q)| (p / base, q / base)).collect())
            },
            &self.opts.sweep,
        )?;
        let (dispatch, plant) = last;
        // Scheduled active injection at the root versus what the slack has
        // to deliver.
        let assembled = assemble_injections(net, &dispatch, &s.state.v_sq, plant)?;
        let mismatch = s.state.p_inj[self.topo.root] * base - assembled[self.topo.root].0;
        Ok(Eval {
            grid: s.state,
            dispatch,
            plant,
            units,
            mismatch,
            iterations: s.iterations,
        })
    }

    /// Balances the slack for fixed unit operating points by adjusting
    /// renewables. A residual is accepted if the storage can take it:
    /// `reserve.0` MW less or `reserve.1` MW more discharge than scheduled.
    /// Otherwise the flag is false.
    fn balance_renewables(&self, t: usize, sched: &StepDispatch, units: &[UnitOp], reserve: (f64, f64)) -> Result<(Eval, bool)> {
        let tol = self.opts.balance_tol;
        let e0 = self.evaluate(t, sched, units.to_vec(), 0.0)?;
        if e0.mismatch.abs() <= tol {
            return Ok((e0, true));
        }
        let (lo, hi) = if e0.mismatch > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
        let end = if e0.mismatch > 0.0 { hi } else { lo };
        let e_end = self.evaluate(t, sched, units.to_vec(), end)?;
        if (e_end.mismatch > 0.0) == (e0.mismatch > 0.0) && e_end.mismatch.abs() > tol {
            // Renewables alone cannot close the gap.
            let ok = e_end.mismatch <= reserve.1 && e_end.mismatch >= -reserve.0;
            return Ok((e_end, ok));
        }
        let alpha = bisect(lo, hi, |a| Ok(self.evaluate(t, sched, units.to_vec(), a)?.mismatch))?;
        Ok((self.evaluate(t, sched, units.to_vec(), alpha)?, true))
    }

    fn voltage_ok(&self, g: &GridState) -> bool {
        self.sc
            .network
            .buses
            .iter()
            .zip(&g.v_sq)
            .all(|(b, &v)| v.sqrt() >= b.v_min - 1e-9)
    }

    /// Balances the step with the largest current scale that still balances
    /// and, if `fix_voltage`, keeps every bus above its lower limit.
    fn settle(
        &self,
        t: usize,
        sched: &StepDispatch,
        base: &[UnitOp],
        fix_voltage: bool,
        reserve: (f64, f64),
        actions: &mut Vec<SimAction>,
    ) -> Result<Eval> {
        let n = base.len();
        let mut standby = vec![false; n];
        let accept = |e: &Eval, ok: bool| ok && (!fix_voltage || self.voltage_ok(&e.grid));
        loop {
            let full = self.unit_ops(base, 1.0, &standby);
            let (e, ok) = self.balance_renewables(t, sched, &full, reserve)?;
            if accept(&e, ok) {
                return Ok(e);
            }
            let low = self.unit_ops(base, 0.0, &standby);
            let (e_low, ok_low) = self.balance_renewables(t, sched, &low, reserve)?;
            if accept(&e_low, ok_low) {
                let s = bisect(0.0, 1.0, |s| {
                    let (e, ok) = self.balance_renewables(t, sched, &self.unit_ops(base, s, &standby), reserve)?;
                    Ok(if accept(&e, ok) { 1.0 } else { -1.0 })
                })?;
                // Step back to the feasible side of the bisection.
                let s = (s - 1e-12).max(0.0);
                let (e, _) = self.balance_renewables(t, sched, &self.unit_ops(base, s, &standby), reserve)?;
                let reduced = nominal_load(&full, self) - e.plant.0;
                actions.push(SimAction {
                    step: t,
                    kind: ActionKind::CurrentReduction,
                    amount: reduced.max(0.0),
                    reason: if fix_voltage { "undervoltage".into() } else { "active shortfall".into() },
                });
                return Ok(e);
            }
            // Move the highest-index producing unit to standby and retry.
            let Some(m) = (0..n).rev().find(|&m| base[m].state == State::Production && !standby[m]) else {
                return Ok(e_low);
            };
            standby[m] = true;
            actions.push(SimAction {
                step: t,
                kind: ActionKind::Standby,
                amount: m as f64,
                reason: if fix_voltage { "undervoltage".into() } else { "active shortfall".into() },
            });
        }
    }
}

/// Plant active demand of `units` at nominal voltage, MW.
fn nominal_load(units: &[UnitOp], ctx: &Ctx) -> f64 {
    units
        .iter()
        .enumerate()
        .map(|(m, u)| {
            let p = ctx.params(m);
            rectifier::apparent_load(&p.rectifier, &p.stack, &p.aux, p.rectifier.u_ac_nominal, u.state, u.current, u.temp, u.p_cool)
                .map(|l| l.0)
                .unwrap_or(0.0)
        })
        .sum()
}

/// Plant reactive demand of `units` at nominal voltage, MVar.
fn nominal_q(units: &[UnitOp], ctx: &Ctx) -> f64 {
    units
        .iter()
        .enumerate()
        .map(|(m, u)| {
            let p = ctx.params(m);
            rectifier::apparent_load(&p.rectifier, &p.stack, &p.aux, p.rectifier.u_ac_nominal, u.state, u.current, u.temp, u.p_cool)
                .map(|l| l.1)
                .unwrap_or(0.0)
        })
        .sum()
}

/// Compensator-first reactive dispatch for a plant demand of `q_plant`
/// MVar at the current voltages.
pub fn greedy_reactive(sc: &Scenario, d: &mut StepDispatch, v_sq: &[f64], q_plant: f64) -> Result<()> {
    let net = &sc.network;
    let dev = &net.devices;
    let mut need = q_plant;
    for (k, c) in dev.cap_banks.iter().enumerate() {
        let j = net.bus_index(c.bus)?;
        need -= cb_q(d.cb_n[k], v_sq[j], c.dq);
    }
    for (k, c) in dev.svcs.iter().enumerate() {
        d.svc_q[k] = need.clamp(-c.q_max, c.q_max);
        need -= d.svc_q[k];
    }
    // Wind, PV and storage share the remainder in proportion to their
    // headroom in the direction needed. The storage share is left to the
    // slack, which picks it up in the power flow.
    let mut caps = Vec::new();
    for (k, w) in dev.wind.iter().enumerate() {
        let (lo, hi) = wt_envelope(w.s, d.wt_p[k])?;
        caps.push(if need >= 0.0 { hi.max(0.0) } else { (-lo).max(0.0) });
    }
    for (k, pv) in dev.pv.iter().enumerate() {
        caps.push(pv_q_limit(pv.s, pv.theta_deg, d.pv_p[k]));
    }
    for (k, es) in dev.storage.iter().enumerate() {
        let p = d.es_p_out[k] - d.es_p_in[k];
        caps.push((es.s * es.s - p * p).max(0.0).sqrt());
    }
    let total: f64 = caps.iter().sum();
    let share = if total > 0.0 { (need.abs() / total).min(1.0) } else { 0.0 };
    let sign = need.signum();
    let nw = dev.wind.len();
    for k in 0..nw {
        d.wt_q[k] = sign * share * caps[k];
    }
    for k in 0..dev.pv.len() {
        d.pv_q[k] = sign * share * caps[nw + k];
    }
    Ok(())
}

/// Moves the SVC setpoints by `dq` MVar within their limits.
pub fn track_svc(sc: &Scenario, d: &mut StepDispatch, mut dq: f64) {
    for (k, c) in sc.network.devices.svcs.iter().enumerate() {
        let q = (d.svc_q[k] + dq).clamp(-c.q_max, c.q_max);
        dq -= q - d.svc_q[k];
        d.svc_q[k] = q;
    }
}

/// Capacitor bank counts that cover as much of `q_plant` as the switching
/// limits allow, assuming nominal voltage.
pub fn greedy_banks(sc: &Scenario, prev: &[u32], q_plant: f64) -> Vec<u32> {
    let mut need = q_plant;
    sc.network
        .devices
        .cap_banks
        .iter()
        .zip(prev)
        .map(|(c, &p)| {
            let want = (need / c.dq).round().max(0.0) as u32;
            let lo = p.saturating_sub(c.n_switch_max);
            let hi = (p + c.n_switch_max).min(c.n_max);
            let n = want.clamp(lo, hi);
            need -= n as f64 * c.dq;
            n
        })
        .collect()
}

/// Simulates a schedule on its scenario.
pub fn simulate(schedule: &Schedule, sc: &Scenario, opts: &SimOptions) -> Result<SimulationReport> {
    let h = sc.steps();
    if schedule.fleet.horizon() != h || schedule.dispatch.len() != h {
        return Err(Error::HorizonMismatch(schedule.fleet.horizon(), h));
    }
    schedule.fleet.check_shape(&sc.plant.units)?;
    let net = &sc.network;
    let dev = &net.devices;
    let topo = net.topology()?;
    let root_es: Vec<usize> = dev
        .storage
        .iter()
        .enumerate()
        .filter(|(_, s)| net.bus_index(s.bus).ok() == Some(topo.root))
        .map(|(k, _)| k)
        .collect();
    let ctx = Ctx {
        sc,
        topo,
        opts: *opts,
        root_es,
        plant_bus: net.bus_index(net.plant_bus)?,
        model_q: (0..h).map(|t| schedule.plant_load.get(t).map(|l| l.1)).collect(),
    };
    let dt = sc.dt();
    let n_units = sc.plant.units.len();
    let mut temps: Vec<f64> = sc.initial.temperatures.clone();
    let mut soc: Vec<f64> = dev.storage.iter().map(|s| s.soc_init).collect();
    let mut prev_cb: Vec<u32> = dev.cap_banks.iter().map(|c| c.n_init).collect();
    let mut violations = Vec::new();
    let mut actions = Vec::new();
    let mut steps = Vec::with_capacity(h);
    let mut sim_fleet = schedule.fleet.clone();
    let mut cb_switches = 0u32;

    for t in 0..h {
        let mut sched = schedule.dispatch[t].clone();
        // Storage setpoints are limited by the energy actually stored.
        let mut reserve = (0.0, 0.0);
        for (k, s) in dev.storage.iter().enumerate() {
            // A hair inside the limits so the slack's balance tolerance
            // cannot push the energy across them.
            let max_in = ((s.soc_max - soc[k] - 1e-7) / (s.eta_in * dt)).max(0.0);
            let max_out = ((soc[k] - s.soc_min - 1e-7) * s.eta_out / dt).max(0.0);
            let (p_in, p_out) = (sched.es_p_in[k].min(max_in), sched.es_p_out[k].min(max_out));
            let cut = (sched.es_p_in[k] - p_in) + (sched.es_p_out[k] - p_out);
            if cut > 1e-9 {
                actions.push(SimAction {
                    step: t,
                    kind: ActionKind::StorageDeviation,
                    amount: cut,
                    reason: "stored energy limit".into(),
                });
            }
            sched.es_p_in[k] = p_in;
            sched.es_p_out[k] = p_out;
            if ctx.root_es.contains(&k) {
                reserve.0 += (p_out - p_in + s.p_in_max.min(max_in)).max(0.0);
                reserve.1 += (s.p_out_max.min(max_out) - (p_out - p_in)).max(0.0);
            }
        }
        let mut base = Vec::with_capacity(n_units);
        for m in 0..n_units {
            let u = &schedule.fleet.units[m];
            let sp = &sc.plant.units[m].stack;
            let state = u.states[t];
            let mut temp = temps[m];
            if state == State::Production && !(sp.t_min..=sp.t_max).contains(&temp) {
                violations.push(Violation {
                    kind: ViolationKind::Temperature,
                    step: t,
                    element: format!("unit {m}"),
                    value: temp,
                    limit: if temp < sp.t_min { sp.t_min } else { sp.t_max },
                });
                temp = temp.clamp(sp.t_min, sp.t_max);
            }
            let current = if state == State::Production {
                u.current[t].clamp(sp.i_min, sp.i_max)
            } else {
                0.0
            };
            let aux = &sc.plant.units[m].aux;
            let p_cool = if state == State::Idle {
                0.0
            } else {
                u.p_cool[t].clamp(0.0, aux.max_cooling(temps[m]))
            };
            base.push(UnitOp { state, current, temp, p_cool });
        }
        if opts.reactive == ReactivePolicy::CompensatorsFirst {
            let q: f64 = nominal_q(&base, &ctx);
            sched.cb_n = greedy_banks(sc, &prev_cb, q);
        }
        let sched = &sched;
        for (k, cb) in dev.cap_banks.iter().enumerate() {
            let n = sched.cb_n[k];
            if n > cb.n_max || n.abs_diff(prev_cb[k]) > cb.n_switch_max {
                violations.push(Violation {
                    kind: ViolationKind::Capability,
                    step: t,
                    element: format!("capacitor bank {k}"),
                    value: n as f64,
                    limit: cb.n_max.min(prev_cb[k] + cb.n_switch_max) as f64,
                });
            }
            cb_switches += n.abs_diff(prev_cb[k]);
        }
        prev_cb = sched.cb_n.clone();

        // First pass: balance as scheduled and record voltage limits.
        let first = ctx.settle(t, sched, &base, false, reserve, &mut actions)?;
        let mut under = false;
        for (j, b) in net.buses.iter().enumerate() {
            let v = first.grid.v_sq[j].sqrt();
            if v < b.v_min - 1e-9 || v > b.v_max + 1e-9 {
                under |= v < b.v_min - 1e-9;
                violations.push(Violation {
                    kind: ViolationKind::Voltage,
                    step: t,
                    element: format!("bus {}", b.id),
                    value: v,
                    limit: if v < b.v_min { b.v_min } else { b.v_max },
                });
            }
        }
        let e = if under && opts.correct_voltage {
            ctx.settle(t, sched, &base, true, reserve, &mut actions)?
        } else {
            first
        };
        if e.mismatch.abs() > opts.balance_tol {
            actions.push(SimAction {
                step: t,
                kind: ActionKind::StorageDeviation,
                amount: e.mismatch,
                reason: "residual active mismatch".into(),
            });
        }
        let renew_sched: f64 = sched.wt_p.iter().chain(&sched.pv_p).sum();
        let renew: f64 = e.dispatch.wt_p.iter().chain(&e.dispatch.pv_p).sum();
        if renew < renew_sched - 1e-9 {
            actions.push(SimAction {
                step: t,
                kind: ActionKind::Curtailment,
                amount: renew_sched - renew,
                reason: "active surplus".into(),
            });
        } else if renew > renew_sched + 1e-9 {
            actions.push(SimAction {
                step: t,
                kind: ActionKind::Headroom,
                amount: renew - renew_sched,
                reason: "active shortfall".into(),
            });
        }

        // Storage at the root carries the slack; split it over root units by
        // capacity.
        let base_mva = net.base_mva;
        let slack_p = e.grid.p_inj[ctx.topo.root] * base_mva;
        let slack_q = e.grid.q_inj[ctx.topo.root] * base_mva;
        let mut other_p = 0.0;
        let mut other_q = 0.0;
        let assembled_root = {
            let mut d0 = e.dispatch.clone();
            for &k in &ctx.root_es {
                d0.es_p_in[k] = 0.0;
                d0.es_p_out[k] = 0.0;
                d0.es_q[k] = 0.0;
            }
            assemble_injections(net, &d0, &e.grid.v_sq, e.plant)?[ctx.topo.root]
        };
        other_p += assembled_root.0;
        other_q += assembled_root.1;
        let es_p_total = slack_p - other_p;
        let es_q_total = slack_q - other_q;
        let cap: f64 = ctx.root_es.iter().map(|&k| dev.storage[k].s).sum();
        let mut es_net = vec![0.0; dev.storage.len()];
        let mut es_q = vec![0.0; dev.storage.len()];
        for k in 0..dev.storage.len() {
            es_net[k] = e.dispatch.es_p_out[k] - e.dispatch.es_p_in[k];
            es_q[k] = e.dispatch.es_q.get(k).copied().unwrap_or(0.0);
        }
        if ctx.root_es.is_empty() {
            if es_p_total.abs() > 1e-6 || es_q_total.abs() > 1e-6 {
                violations.push(Violation {
                    kind: ViolationKind::Balance,
                    step: t,
                    element: "slack".into(),
                    value: es_p_total.hypot(es_q_total),
                    limit: 0.0,
                });
            }
        } else {
            for &k in &ctx.root_es {
                let w = dev.storage[k].s / cap;
                let sched_net = es_net[k];
                es_net[k] = sched_net + w * (es_p_total - ctx.root_es.iter().map(|&j| e.dispatch.es_p_out[j] - e.dispatch.es_p_in[j]).sum::<f64>());
                es_q[k] = w * es_q_total;
            }
        }
        for (k, s) in dev.storage.iter().enumerate() {
            let (p, q) = (es_net[k], es_q[k]);
            if p.hypot(q) > s.s + 1e-6 {
                violations.push(Violation {
                    kind: ViolationKind::Capability,
                    step: t,
                    element: format!("storage {k}"),
                    value: p.hypot(q),
                    limit: s.s,
                });
            }
            let (p_in, p_out) = if p >= 0.0 { (0.0, p) } else { (-p, 0.0) };
            if p_in > s.p_in_max + 1e-6 || p_out > s.p_out_max + 1e-6 {
                violations.push(Violation {
                    kind: ViolationKind::Capability,
                    step: t,
                    element: format!("storage {k} active"),
                    value: p,
                    limit: if p >= 0.0 { s.p_out_max } else { -s.p_in_max },
                });
            }
            soc[k] += dt * (s.eta_in * p_in - p_out / s.eta_out);
            if soc[k] < s.soc_min - 1e-6 || soc[k] > s.soc_max + 1e-6 {
                violations.push(Violation {
                    kind: ViolationKind::Storage,
                    step: t,
                    element: format!("storage {k}"),
                    value: soc[k],
                    limit: if soc[k] < s.soc_min { s.soc_min } else { s.soc_max },
                });
            }
        }
        for (k, svc) in dev.svcs.iter().enumerate() {
            if e.dispatch.svc_q[k].abs() > svc.q_max + 1e-9 {
                violations.push(Violation {
                    kind: ViolationKind::Capability,
                    step: t,
                    element: format!("svc {k}"),
                    value: e.dispatch.svc_q[k],
                    limit: svc.q_max,
                });
            }
        }

        // Hydrogen and thermal update with the operating points actually used.
        let mut h2 = Vec::with_capacity(n_units);
        let mut eff = Vec::with_capacity(n_units);
        let mut states = Vec::with_capacity(n_units);
        let mut currents = Vec::with_capacity(n_units);
        let mut cools = Vec::with_capacity(n_units);
        let start_temps = temps.clone();
        for (m, u) in e.units.iter().enumerate() {
            let p = &sc.plant.units[m];
            let (y, eta) = if u.state == State::Production {
                (
                    elz_phys::hydrogen_flow(&p.stack, u.current)? * dt,
                    Some(elz_phys::conversion_efficiency(&p.stack, u.current, u.temp)?),
                )
            } else {
                (0.0, None)
            };
            h2.push(y);
            eff.push(eta);
            let mut aux = p.aux.clone();
            aux.t_ambient = sc.series.ambient_c[t];
            let i = if u.state == State::Production { u.current } else { 0.0 };
            let p_cool = u.p_cool.clamp(0.0, aux.max_cooling(temps[m]));
            temps[m] = elz_phys::thermal_step(&p.stack, &aux, temps[m], i, p_cool, dt)
                .map_err(|err| Error::Unit { unit: m, step: t, source: Box::new(err) })?;
            sim_fleet.units[m].states[t] = u.state;
            sim_fleet.units[m].current[t] = i;
            sim_fleet.units[m].p_cool[t] = p_cool;
            sim_fleet.units[m].temperature[t + 1] = temps[m];
            states.push(u.state);
            currents.push(i);
            cools.push(p_cool);
        }
        let v_pu: Vec<f64> = e.grid.v_sq.iter().map(|v| v.sqrt()).collect();
        let branch_loss_mw: Vec<f64> = net.branches.iter().zip(&e.grid.l).map(|(b, l)| b.r * l * base_mva).collect();
        steps.push(StepRecord {
            step: t,
            loss_mw: branch_loss_mw.iter().sum(),
            v_pu,
            branch_loss_mw,
            wind_mw: e.dispatch.wt_p.iter().sum(),
            pv_mw: e.dispatch.pv_p.iter().sum(),
            available_mw: sc.available(t),
            es_p_mw: es_net.iter().sum(),
            es_q_mvar: es_q.iter().sum(),
            soc_mwh: soc.clone(),
            plant_p_mw: e.plant.0,
            plant_q_mvar: e.plant.1,
            model_plant_q_mvar: schedule.plant_load.get(t).map(|l| l.1),
            states,
            current_ka: currents,
            temperature_c: start_temps,
            p_cool_kw: cools,
            hydrogen_kg: h2,
            efficiency: eff,
            cb_n: e.dispatch.cb_n.clone(),
            svc_q_mvar: e.dispatch.svc_q.clone(),
            wt_q_mvar: e.dispatch.wt_q.clone(),
            pv_q_mvar: e.dispatch.pv_q.clone(),
            sweep_iterations: e.iterations,
            grid: e.grid,
        });
    }

    for v in sim_fleet.violations() {
        violations.push(Violation {
            kind: ViolationKind::Transition,
            step: v.step,
            element: format!("unit {} {:?}", v.unit, v.rule),
            value: 1.0,
            limit: 0.0,
        });
    }
    violations.sort_by(|a, b| a.step.cmp(&b.step).then(a.kind.cmp(&b.kind)));

    let econ = &sc.economics;
    let hydrogen_kg: f64 = steps.iter().flat_map(|s| &s.hydrogen_kg).sum();
    let revenue = econ.c_h2 * hydrogen_kg;
    let (mut startup_cost, mut shutdown_cost) = (0.0, 0.0);
    for m in 0..n_units {
        for f in sim_fleet.flags(m) {
            startup_cost += if f.b_su { econ.c_su } else { 0.0 };
            shutdown_cost += if f.b_sd { econ.c_sd } else { 0.0 };
        }
    }
    let cb_cost = econ.c_cb * cb_switches as f64;
    let profit = revenue - startup_cost - shutdown_cost - cb_cost;
    let loss_mwh: f64 = steps.iter().map(|s| s.loss_mw * dt).sum();
    let generation_mwh: f64 = steps.iter().map(|s| s.generation_mw() * dt).sum();
    let curtailed_mwh: f64 = steps.iter().map(|s| (s.available_mw - s.wind_mw - s.pv_mw).max(0.0) * dt).sum();
    let loss_ratio_pct = if generation_mwh > 0.0 { 100.0 * loss_mwh / generation_mwh } else { 0.0 };
    let min_v_pu = steps.iter().flat_map(|s| &s.v_pu).copied().fold(f64::INFINITY, f64::min);
    let max_v_pu = steps.iter().flat_map(|s| &s.v_pu).copied().fold(f64::NEG_INFINITY, f64::max);

    let rel = |a: f64, b: f64| if b.abs() > 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    let max_plant_q_error_mvar = steps
        .iter()
        .filter_map(|s| s.model_plant_q_mvar.map(|m| (m - s.plant_q_mvar).abs()))
        .fold(0.0, f64::max);
    let (max_voltage_error_pu, max_cone_slack) = match &schedule.grid {
        Some(g) => {
            let dv = g
                .iter()
                .zip(&steps)
                .flat_map(|(m, s)| m.v_sq.iter().zip(&s.v_pu).map(|(a, b)| (a.sqrt() - b).abs()))
                .fold(0.0, f64::max);
            let slack = g
                .iter()
                .map(|m| m.residuals(net, &ctx.topo).cone_slack)
                .fold(0.0, f64::max);
            (Some(dv), Some(slack))
        }
        None => (None, None),
    };
    let max_temperature_error_c = schedule
        .fleet
        .units
        .iter()
        .zip(&sim_fleet.units)
        .flat_map(|(a, b)| a.temperature.iter().zip(&b.temperature).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);

    let voltage_violations = violations.iter().filter(|v| v.kind == ViolationKind::Voltage).count();
    let transition_violations = violations.iter().filter(|v| v.kind == ViolationKind::Transition).count();
    Ok(SimulationReport {
        summary: Summary {
            scenario: sc.name.clone(),
            coordinated: schedule.coordinated,
            hydrogen_kg,
            revenue,
            startup_cost,
            shutdown_cost,
            cb_cost,
            profit,
            loss_mwh,
            generation_mwh,
            loss_ratio_pct,
            curtailed_mwh,
            min_v_pu,
            max_v_pu,
            violations: violations.len(),
            voltage_violations,
            transition_violations,
            gap: GapDiagnostics {
                model_profit: schedule.model.profit,
                model_hydrogen_kg: schedule.model.hydrogen_kg,
                profit_rel: rel(schedule.model.profit, profit),
                hydrogen_rel: rel(schedule.model.hydrogen_kg, hydrogen_kg),
                max_plant_q_error_mvar,
                max_voltage_error_pu,
                max_cone_slack,
                max_temperature_error_c,
            },
        },
        steps,
        violations,
        actions,
        fleet: sim_fleet,
    })
}
