//! Assembles the scheduling model for a scenario.
//!
//! Each producing unit-step is represented by convex-combination weights
//! over the (I, T) breakpoint grid; stack power, heat, hydrogen flow and
//! reactive power are linear in those weights. Weights sum to the
//! production flag, which switches the whole representation off for idle
//! or standby units, and the unit temperature is tied to the weighted
//! temperature only while producing (big-M with the physical band as M).
//!
//! With `network` enabled the plant sits in a DistFlow model with
//! second-order cone branch constraints; otherwise only an aggregate active
//! balance is imposed, which is the network-blind baseline.

use serde::{Deserialize, Serialize};

use crate::elz_phys::State;
use crate::error::{Error, Result};
use crate::fleet::FleetSchedule;
use crate::grid::Topology;
use crate::scenario::Scenario;

use super::model::{LinExpr, MicpModel, ObjSense, PwlColumn, PwlSet, Sense, VarId};
use super::pwl::{build_surfaces, GridSpec, UnitSurfaces};

/// Branching priorities (higher first).
pub const PRIO_ON: i32 = 100;
pub const PRIO_STATE: i32 = 90;
pub const PRIO_STORAGE: i32 = 50;
pub const PRIO_CB: i32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub grid: GridSpec,
    /// Largest certified PWL error, relative to each surface's rated value.
    pub pwl_tolerance: f64,
    /// Acceptance threshold for mixed PWL weights, relative to each column's
    /// rated value.
    pub sos_tolerance: f64,
    /// Include the network (DistFlow, reactive resources).
    pub network: bool,
    /// Penalty on network losses, CNY/MWh, on top of the energy they cost.
    /// Without it the branch cones go slack in hours with surplus energy.
    pub loss_weight: f64,
    /// Physical ceiling of stack temperature, °C.
    pub t_ceiling: f64,
    /// Share of each storage converter rating kept free for the slack role
    /// the storage plays in operation.
    pub storage_margin: f64,
    /// Share of each storage energy range kept free at both ends, so the
    /// slack can absorb small deviations in operation.
    pub soc_margin: f64,
    /// Headroom kept below `t_max` while producing, °C. Absorbs the PWL
    /// error in the heat balance.
    pub t_margin: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            pwl_tolerance: 0.005,
            sos_tolerance: 1e-3,
            network: true,
            loss_weight: 50.0,
            t_ceiling: 100.0,
            t_margin: 0.5,
            storage_margin: 0.05,
            soc_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitStepVars {
    pub on: VarId,
    pub by: VarId,
    pub idle: VarId,
    pub su: VarId,
    pub sd: VarId,
    pub p_cool: VarId,
    /// Index of the unit-step weight set in `MicpModel::pwl`.
    pub pwl: usize,
}

/// Where every physical quantity lives in the model. Outer index is the
/// step unless stated otherwise.
#[derive(Debug, Clone, Default)]
pub struct ModelIndex {
    /// `[unit][step]`
    pub units: Vec<Vec<UnitStepVars>>,
    /// `[unit][step]`, steps `0..=H`; entry 0 is fixed to the initial value.
    pub temp: Vec<Vec<VarId>>,
    pub wt_p: Vec<Vec<VarId>>,
    pub wt_q: Vec<Vec<VarId>>,
    pub pv_p: Vec<Vec<VarId>>,
    pub pv_q: Vec<Vec<VarId>>,
    pub es_in: Vec<Vec<VarId>>,
    pub es_out: Vec<Vec<VarId>>,
    pub es_q: Vec<Vec<VarId>>,
    pub es_b_in: Vec<Vec<VarId>>,
    pub es_b_out: Vec<Vec<VarId>>,
    pub soc: Vec<Vec<VarId>>,
    /// `[step][bank][unit]` ordered on/off indicators.
    pub cb_z: Vec<Vec<Vec<VarId>>>,
    pub cb_up: Vec<Vec<VarId>>,
    pub cb_down: Vec<Vec<VarId>>,
    pub svc_q: Vec<Vec<VarId>>,
    pub v_sq: Vec<Vec<VarId>>,
    pub p_flow: Vec<Vec<VarId>>,
    pub q_flow: Vec<Vec<VarId>>,
    pub l: Vec<Vec<VarId>>,
    /// Plant demand per step, MW / MVar.
    pub load_p: Vec<LinExpr>,
    pub load_q: Vec<LinExpr>,
    /// `[unit][step]` current (kA), PWL temperature, hydrogen (kg/h).
    pub current: Vec<Vec<LinExpr>>,
    pub pwl_temp: Vec<Vec<LinExpr>>,
    pub hydrogen: Vec<Vec<LinExpr>>,
}

impl ModelIndex {
    /// Preferred values for the unit state binaries, taken from an existing
    /// commitment. Used to steer the first dive of the search.
    pub fn commitment_hints(&self, fleet: &FleetSchedule) -> Vec<(VarId, f64)> {
        let mut out = Vec::new();
        for (m, steps) in self.units.iter().enumerate() {
            let Some(u) = fleet.units.get(m) else { continue };
            for (v, &st) in steps.iter().zip(&u.states) {
                let (on, by, idle) = state_flags(st);
                out.extend([(v.on, on), (v.by, by), (v.idle, idle)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MicpModel,
    pub index: ModelIndex,
    pub surfaces: Vec<UnitSurfaces>,
    pub options: BuildOptions,
    pub topology: Option<Topology>,
}

fn state_flags(s: State) -> (f64, f64, f64) {
    match s {
        State::Production => (1.0, 0.0, 0.0),
        State::Standby => (0.0, 1.0, 0.0),
        State::Idle => (0.0, 0.0, 1.0),
    }
}

/// Range of the sending-end flow of every branch, p.u., from the devices
/// on each side of it: `((p_lo, p_hi), (q_lo, q_hi))`.
///
/// The flow into a subtree is at least minus the subtree's generation
/// capability and at most the generation capability on the other side
/// (losses only shrink it). When the other side is a single bus there are
/// no losses to add, and its consumption capability bounds the flow from
/// below too.
pub fn flow_boxes(sc: &Scenario, topo: &Topology, surfaces: &[UnitSurfaces]) -> Result<Vec<((f64, f64), (f64, f64))>> {
    let net = &sc.network;
    let dev = &net.devices;
    let n = net.n_bus();
    // Per bus: (generation P, consumption P, generation Q, consumption Q), MW.
    let mut cap = vec![(0.0, 0.0, 0.0, 0.0); n];
    for w in &dev.wind {
        let c = &mut cap[net.bus_index(w.bus)?];
        c.0 += w.s;
        c.2 += w.s;
        c.3 += w.s;
    }
    for pv in &dev.pv {
        let c = &mut cap[net.bus_index(pv.bus)?];
        c.0 += pv.s;
        c.2 += pv.s;
        c.3 += pv.s;
    }
    for es in &dev.storage {
        let c = &mut cap[net.bus_index(es.bus)?];
        c.0 += es.p_out_max;
        c.1 += es.p_in_max;
        c.2 += es.s;
        c.3 += es.s;
    }
    for cb in &dev.cap_banks {
        let j = net.bus_index(cb.bus)?;
        let v_max = net.buses[j].v_max;
        cap[j].2 += cb.dq * cb.n_max as f64 * v_max * v_max;
    }
    for svc in &dev.svcs {
        let c = &mut cap[net.bus_index(svc.bus)?];
        c.2 += svc.q_max;
        c.3 += svc.q_max;
    }
    let plant = net.bus_index(net.plant_bus)?;
    for (u, surf) in surfaces.iter().enumerate() {
        let aux = &sc.plant.units[u].aux;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let p_cool = aux.c_cool * (100.0 - aux.t_cool).max(0.0) / aux.eta_cool;
        cap[plant].1 += 1e-3 * (max(&surf.p_ac.values) + p_cool + aux.p_standby);
        cap[plant].3 += 1e-3 * max(&surf.q.values);
    }
    let total = cap.iter().fold((0.0, 0.0, 0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2, a.3 + c.3));
    let base = net.base_mva;
    let mut out = Vec::with_capacity(net.branches.len());
    for &(_, j) in &topo.ends {
        let mut sub = (0.0, 0.0, 0.0, 0.0);
        let mut count = 0;
        let mut stack = vec![j];
        while let Some(b) = stack.pop() {
            count += 1;
            sub = (sub.0 + cap[b].0, sub.1 + cap[b].1, sub.2 + cap[b].2, sub.3 + cap[b].3);
            stack.extend(&topo.children[b]);
        }
        let comp = (total.0 - sub.0, total.1 - sub.1, total.2 - sub.2, total.3 - sub.3);
        let single = count + 1 == n;
        let p_lo = if single { (-sub.0).max(-comp.1) } else { -sub.0 };
        let q_lo = if single { (-sub.2).max(-comp.3) } else { -sub.2 };
        out.push(((p_lo / base, comp.0 / base), (q_lo / base, comp.2 / base)));
    }
    Ok(out)
}

/// Builds the scheduling model. The scenario must already be valid.
pub fn build_model(sc: &Scenario, opts: &BuildOptions) -> Result<BuiltModel> {
    sc.validate()?;
    let h = sc.steps();
    let dt = sc.dt();
    let n_units = sc.plant.units.len();
    let mut m = MicpModel::new(ObjSense::Maximize);
    let mut ix = ModelIndex::default();
    let mut profit = LinExpr::new();
    let mut hydrogen_total = LinExpr::new();

    let surfaces: Vec<UnitSurfaces> = sc
        .plant
        .units
        .iter()
        .enumerate()
        .map(|(k, p)| {
            build_surfaces(p, &opts.grid, opts.pwl_tolerance).map_err(|e| Error::Unit {
                unit: k,
                step: 0,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    ix.load_p = vec![LinExpr::new(); h];
    ix.load_q = vec![LinExpr::new(); h];
    let econ = &sc.economics;

    for (u, prm) in sc.plant.units.iter().enumerate() {
        let sp = &prm.stack;
        let aux = &prm.aux;
        let surf = &surfaces[u];
        let (ic, tc) = (&surf.p_ac.i_coords, &surf.p_ac.t_coords);
        let (ni, nt) = (ic.len(), tc.len());
        let t_lo = aux.t_cool;
        let t_hi = opts.t_ceiling;
        if sp.t_max > t_hi {
            return Err(Error::Model(format!("unit {u}: t_max {} above the {t_hi} °C ceiling", sp.t_max)));
        }
        let t0 = sc.initial.temperatures[u];
        let init = sc.initial.states[u];
        let temps: Vec<VarId> = (0..=h)
            .map(|t| {
                if t == 0 {
                    m.add_var(format!("T_u{u}_t0"), t0, t0)
                } else {
                    m.add_var(format!("T_u{u}_t{t}"), t_lo, t_hi)
                }
            })
            .collect();
        let p_cool_max = aux.c_cool * (t_hi - aux.t_cool);
        let mut steps = Vec::with_capacity(h);
        let mut cur_row = Vec::with_capacity(h);
        let mut tpwl_row = Vec::with_capacity(h);
        let mut y_row = Vec::with_capacity(h);
        for t in 0..h {
            let on = m.add_binary(format!("on_u{u}_t{t}"), PRIO_ON);
            let by = m.add_binary(format!("by_u{u}_t{t}"), PRIO_STATE);
            let idle = m.add_binary(format!("idle_u{u}_t{t}"), PRIO_STATE);
            let su = m.add_var(format!("su_u{u}_t{t}"), 0.0, 1.0);
            let sd = m.add_var(format!("sd_u{u}_t{t}"), 0.0, 1.0);
            let p_cool = m.add_var(format!("pcool_u{u}_t{t}"), 0.0, p_cool_max);
            let weights: Vec<VarId> = (0..ni * nt)
                .map(|k| m.add_var(format!("lam_u{u}_t{t}_{}_{}", k / nt, k % nt), 0.0, 1.0))
                .collect();

            let mut current = LinExpr::new();
            let mut tpwl = LinExpr::new();
            let mut pac = LinExpr::new();
            let mut pgen = LinExpr::new();
            let mut y = LinExpr::new();
            let mut q = LinExpr::new();
            for (k, &w) in weights.iter().enumerate() {
                current.add(w, ic[k / nt]);
                tpwl.add(w, tc[k % nt]);
                pac.add(w, surf.p_ac.values[k]);
                pgen.add(w, surf.p_gen.values[k]);
                y.add(w, surf.y.values[k]);
                q.add(w, surf.q.values[k]);
            }
            let mut sum = LinExpr::new();
            for &w in &weights {
                sum.add(w, 1.0);
            }
            m.add_row(format!("pwl_sum_u{u}_t{t}"), sum.with(on, -1.0), Sense::Eq, 0.0);

            let tt = temps[t];
            let mut link = LinExpr::var(tt);
            link.add_expr(&tpwl, -1.0);
            m.add_row(format!("tlink_hi_u{u}_t{t}"), link.clone().with(on, t_hi), Sense::Le, t_hi);
            m.add_row(format!("tlink_lo_u{u}_t{t}"), link.with(on, t_lo), Sense::Ge, t_lo);
            let mut t_cap = (sp.t_max - opts.t_margin).max(sp.t_min);
            if t == 0 {
                t_cap = t_cap.max(t0);
            }
            m.add_row(format!("t_margin_u{u}_t{t}"), LinExpr::var(tt).with(on, t_hi - t_cap), Sense::Le, t_hi);

            m.add_row(
                format!("cool_band_u{u}_t{t}"),
                LinExpr::var(p_cool).with(tt, -aux.c_cool),
                Sense::Le,
                -aux.c_cool * aux.t_cool,
            );
            m.add_row(
                format!("cool_off_u{u}_t{t}"),
                LinExpr::var(p_cool).with(on, -p_cool_max).with(by, -p_cool_max),
                Sense::Le,
                0.0,
            );

            // C (T+ - T)/dt = P_gen - (T - T_am)/R - P_cool
            let ambient = sc.series.ambient_c[t];
            let mut heat = LinExpr::new()
                .with(temps[t + 1], aux.c_heat / dt)
                .with(tt, -aux.c_heat / dt + 1.0 / aux.r_diss)
                .with(p_cool, 1.0);
            heat.add_expr(&pgen, -1.0);
            m.add_row(format!("thermal_u{u}_t{t}"), heat, Sense::Eq, ambient / aux.r_diss);

            m.add_row(
                format!("onehot_u{u}_t{t}"),
                LinExpr::var(on).with(by, 1.0).with(idle, 1.0),
                Sense::Eq,
                1.0,
            );

            // Flags at t-1 and t-2, falling back to the held initial state.
            let flag = |k: isize, steps: &Vec<UnitStepVars>, which: usize| -> LinExpr {
                if k < 0 {
                    let f = state_flags(init);
                    LinExpr::constant([f.0, f.1, f.2][which])
                } else {
                    let s = steps[k as usize];
                    LinExpr::var([s.on, s.by, s.idle][which])
                }
            };
            let ti = t as isize;
            let mut row = LinExpr::var(on).with(by, 1.0).with(su, -1.0);
            row.add_expr(&flag(ti - 1, &steps, 2), 1.0);
            m.add_row(format!("startup_u{u}_t{t}"), row, Sense::Le, 1.0);
            let mut row = LinExpr::var(idle).with(sd, -1.0);
            row.add_expr(&flag(ti - 1, &steps, 0), 1.0);
            row.add_expr(&flag(ti - 1, &steps, 1), 1.0);
            m.add_row(format!("shutdown_u{u}_t{t}"), row, Sense::Le, 1.0);
            let mut row = LinExpr::new().with(idle, -1.0);
            row.add_expr(&flag(ti - 1, &steps, 2), 1.0);
            row.add_expr(&flag(ti - 2, &steps, 2), -1.0);
            m.add_row(format!("min_idle_u{u}_t{t}"), row, Sense::Le, 0.0);

            let set = PwlSet {
                name: format!("pwl_u{u}_t{t}"),
                i_coords: ic.clone(),
                t_coords: tc.clone(),
                weights: weights.clone(),
                columns: [&surf.p_ac, &surf.p_gen, &surf.y, &surf.q]
                    .iter()
                    .map(|s| PwlColumn {
                        name: s.name.clone(),
                        values: s.values.clone(),
                        tolerance: opts.sos_tolerance * s.scale.max(1e-9),
                    })
                    .collect(),
            };
            m.pwl.push(set);

            ix.load_p[t].add_expr(&pac, 1e-3);
            ix.load_p[t].add(p_cool, 1e-3 / aux.eta_cool);
            ix.load_p[t].add(by, 1e-3 * aux.p_standby);
            ix.load_q[t].add_expr(&q, 1e-3);

            profit.add_expr(&y, econ.c_h2 * dt);
            hydrogen_total.add_expr(&y, dt);
            profit.add(su, -econ.c_su);
            profit.add(sd, -econ.c_sd);

            steps.push(UnitStepVars { on, by, idle, su, sd, p_cool, pwl: m.pwl.len() - 1 });
            cur_row.push(current);
            tpwl_row.push(tpwl);
            y_row.push(y);
        }
        ix.units.push(steps);
        ix.temp.push(temps);
        ix.current.push(cur_row);
        ix.pwl_temp.push(tpwl_row);
        ix.hydrogen.push(y_row);
    }
    debug_assert_eq!(ix.units.len(), n_units);

    let net = &sc.network;
    let dev = &net.devices;
    let base = net.base_mva;
    let topology = if opts.network { Some(net.topology()?) } else { None };
    let boxes = match &topology {
        Some(topo) => flow_boxes(sc, topo, &surfaces)?,
        None => Vec::new(),
    };
    let mut regularizer = LinExpr::new();

    for t in 0..h {
        let mut gen_p = vec![LinExpr::new(); net.n_bus()];
        let mut gen_q = vec![LinExpr::new(); net.n_bus()];
        let mut wt_p = Vec::new();
        let mut wt_q = Vec::new();
        for (k, w) in dev.wind.iter().enumerate() {
            let j = net.bus_index(w.bus)?;
            let p = m.add_var(format!("wt_p{k}_t{t}"), 0.0, sc.series.wind_mw[k][t]);
            gen_p[j].add(p, 1.0);
            wt_p.push(p);
            if opts.network {
                let q = m.add_var(format!("wt_q{k}_t{t}"), -0.91 * w.s, 0.91 * w.s);
                m.add_row(format!("wt_qmax{k}_t{t}"), LinExpr::var(q).with(p, 0.58), Sense::Le, 0.91 * w.s);
                m.add_row(format!("wt_qmin{k}_t{t}"), LinExpr::var(q).with(p, -1.24), Sense::Ge, -0.91 * w.s);
                gen_q[j].add(q, 1.0);
                wt_q.push(q);
            }
        }
        let mut pv_p = Vec::new();
        let mut pv_q = Vec::new();
        for (k, pv) in dev.pv.iter().enumerate() {
            let j = net.bus_index(pv.bus)?;
            let p = m.add_var(format!("pv_p{k}_t{t}"), 0.0, sc.series.pv_mw[k][t]);
            gen_p[j].add(p, 1.0);
            pv_p.push(p);
            if opts.network {
                let tan = pv.theta_deg.to_radians().tan();
                let q = m.add_var(format!("pv_q{k}_t{t}"), -pv.s, pv.s);
                m.add_row(format!("pv_qmax{k}_t{t}"), LinExpr::var(q).with(p, -tan), Sense::Le, 0.0);
                m.add_row(format!("pv_qmin{k}_t{t}"), LinExpr::var(q).with(p, tan), Sense::Ge, 0.0);
                m.add_cone(
                    format!("pv_cap{k}_t{t}"),
                    LinExpr::constant(pv.s),
                    vec![LinExpr::var(p), LinExpr::var(q)],
                    16,
                );
                gen_q[j].add(q, 1.0);
                pv_q.push(q);
            }
        }
        let mut es = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for (k, s) in dev.storage.iter().enumerate() {
            let j = net.bus_index(s.bus)?;
            let p_in = m.add_var(format!("es_in{k}_t{t}"), 0.0, s.p_in_max);
            let p_out = m.add_var(format!("es_out{k}_t{t}"), 0.0, s.p_out_max);
            let b_in = m.add_binary(format!("es_bin{k}_t{t}"), PRIO_STORAGE);
            let b_out = m.add_binary(format!("es_bout{k}_t{t}"), PRIO_STORAGE);
            let mg = opts.soc_margin * (s.soc_max - s.soc_min);
            let (lo, hi) = (s.soc_min + mg, s.soc_max - mg);
            let soc_lb = if t + 1 == h { lo.max(s.soc_init.min(hi)) } else { lo };
            let soc = m.add_var(format!("soc{k}_t{t}"), soc_lb, hi);
            m.add_row(format!("es_in_on{k}_t{t}"), LinExpr::var(p_in).with(b_in, -s.p_in_max), Sense::Le, 0.0);
            m.add_row(format!("es_out_on{k}_t{t}"), LinExpr::var(p_out).with(b_out, -s.p_out_max), Sense::Le, 0.0);
            m.add_row(format!("es_mode{k}_t{t}"), LinExpr::var(b_in).with(b_out, 1.0), Sense::Le, 1.0);
            let mut bal = LinExpr::var(soc).with(p_in, -s.eta_in * dt).with(p_out, dt / s.eta_out);
            if t == 0 {
                bal.constant -= s.soc_init;
            } else {
                bal.add(ix.soc[t - 1][k], -1.0);
            }
            m.add_row(format!("soc{k}_t{t}"), bal, Sense::Eq, 0.0);
            gen_p[j].add(p_out, 1.0);
            gen_p[j].add(p_in, -1.0);
            let q = if opts.network {
                let rating = s.s * (1.0 - opts.storage_margin);
                let q = m.add_var(format!("es_q{k}_t{t}"), -rating, rating);
                m.add_cone(format!("es_cap_in{k}_t{t}"), LinExpr::constant(rating), vec![LinExpr::var(p_in), LinExpr::var(q)], 16);
                m.add_cone(format!("es_cap_out{k}_t{t}"), LinExpr::constant(rating), vec![LinExpr::var(p_out), LinExpr::var(q)], 16);
                gen_q[j].add(q, 1.0);
                Some(q)
            } else {
                None
            };
            es[0].push(p_in);
            es[1].push(p_out);
            if let Some(q) = q {
                es[2].push(q);
            }
            es[3].push(b_in);
            es[4].push(b_out);
            es[5].push(soc);
        }
        ix.wt_p.push(wt_p);
        ix.wt_q.push(wt_q);
        ix.pv_p.push(pv_p);
        ix.pv_q.push(pv_q);
        let [es_in, es_out, es_q, b_in, b_out, soc] = es;
        ix.es_in.push(es_in);
        ix.es_out.push(es_out);
        ix.es_q.push(es_q);
        ix.es_b_in.push(b_in);
        ix.es_b_out.push(b_out);
        ix.soc.push(soc);

        let plant = net.bus_index(net.plant_bus)?;
        if !opts.network {
            let mut bal = LinExpr::new();
            for e in &gen_p {
                bal.add_expr(e, 1.0);
            }
            bal.add_expr(&ix.load_p[t], -1.0);
            m.add_row(format!("balance_t{t}"), bal, Sense::Eq, 0.0);
            ix.cb_z.push(Vec::new());
            ix.cb_up.push(Vec::new());
            ix.cb_down.push(Vec::new());
            ix.svc_q.push(Vec::new());
            continue;
        }
        let topo = topology.as_ref().expect("network topology");

        let v_sq: Vec<VarId> = net
            .buses
            .iter()
            .enumerate()
            .map(|(j, b)| {
                if j == topo.root {
                    m.add_var(format!("v_b{}_t{t}", b.id), 1.0, 1.0)
                } else {
                    m.add_var(format!("v_b{}_t{t}", b.id), b.v_min * b.v_min, b.v_max * b.v_max)
                }
            })
            .collect();

        let mut cb_z = Vec::new();
        let mut cb_up = Vec::new();
        let mut cb_down = Vec::new();
        for (k, cb) in dev.cap_banks.iter().enumerate() {
            let j = net.bus_index(cb.bus)?;
            let b = &net.buses[j];
            let (vlo, vhi) = if j == topo.root { (1.0, 1.0) } else { (b.v_min * b.v_min, b.v_max * b.v_max) };
            let mut zs = Vec::new();
            let mut count = LinExpr::new();
            for s in 0..cb.n_max as usize {
                let z = m.add_binary(format!("cb{k}_z{s}_t{t}"), PRIO_CB);
                let w = m.add_var(format!("cb{k}_w{s}_t{t}"), 0.0, vhi);
                let v = v_sq[j];
                m.add_row(format!("cb{k}_mc1_{s}_t{t}"), LinExpr::var(w).with(z, -vhi), Sense::Le, 0.0);
                m.add_row(format!("cb{k}_mc2_{s}_t{t}"), LinExpr::var(w).with(z, -vlo), Sense::Ge, 0.0);
                m.add_row(format!("cb{k}_mc3_{s}_t{t}"), LinExpr::var(w).with(v, -1.0).with(z, -vlo), Sense::Le, -vlo);
                m.add_row(format!("cb{k}_mc4_{s}_t{t}"), LinExpr::var(w).with(v, -1.0).with(z, -vhi), Sense::Ge, -vhi);
                if let Some(&prev) = zs.last() {
                    m.add_row(format!("cb{k}_order{s}_t{t}"), LinExpr::var(z).with(prev, -1.0), Sense::Le, 0.0);
                }
                gen_q[j].add(w, cb.dq);
                count.add(z, 1.0);
                zs.push(z);
            }
            let up = m.add_var(format!("cb{k}_up_t{t}"), 0.0, cb.n_switch_max as f64);
            let down = m.add_var(format!("cb{k}_down_t{t}"), 0.0, cb.n_switch_max as f64);
            let mut slew = count.with(up, -1.0).with(down, 1.0);
            if t == 0 {
                slew.constant -= cb.n_init as f64;
            } else {
                for &z in &ix.cb_z[t - 1][k] {
                    slew.add(z, -1.0);
                }
            }
            m.add_row(format!("cb{k}_slew_t{t}"), slew, Sense::Eq, 0.0);
            profit.add(up, -econ.c_cb);
            profit.add(down, -econ.c_cb);
            cb_z.push(zs);
            cb_up.push(up);
            cb_down.push(down);
        }
        ix.cb_z.push(cb_z);
        ix.cb_up.push(cb_up);
        ix.cb_down.push(cb_down);
        let mut svc_q = Vec::new();
        for (k, c) in dev.svcs.iter().enumerate() {
            let j = net.bus_index(c.bus)?;
            let q = m.add_var(format!("svc_q{k}_t{t}"), -c.q_max, c.q_max);
            gen_q[j].add(q, 1.0);
            svc_q.push(q);
        }
        ix.svc_q.push(svc_q);

        // Flow bounds from the total installed capability.
        let cap: f64 = dev.wind.iter().map(|w| w.s).sum::<f64>()
            + dev.pv.iter().map(|w| w.s).sum::<f64>()
            + dev.storage.iter().map(|w| w.s).sum::<f64>()
            + dev.cap_banks.iter().map(|c| c.dq * c.n_max as f64 * 1.1025).sum::<f64>()
            + dev.svcs.iter().map(|c| c.q_max).sum::<f64>()
            + sc.plant.units.iter().map(|u| u.stack.rated_power() / 1000.0).sum::<f64>();
        let f_max = 2.0 * cap / base;
        let vmin_all = net.buses.iter().map(|b| b.v_min * b.v_min).fold(1.0, f64::min);
        let l_max = f_max * f_max / vmin_all;
        let mut pf = Vec::new();
        let mut qf = Vec::new();
        let mut lv = Vec::new();
        for (k, br) in net.branches.iter().enumerate() {
            let (i, j) = topo.ends[k];
            let tag = format!("{}_{}_t{t}", net.buses[i].id, net.buses[j].id);
            let p = m.add_var(format!("P_{tag}"), -f_max, f_max);
            let q = m.add_var(format!("Q_{tag}"), -f_max, f_max);
            let l = m.add_var(format!("l_{tag}"), 0.0, l_max);
            m.add_row(
                format!("vdrop_{tag}"),
                LinExpr::var(v_sq[j])
                    .with(v_sq[i], -1.0)
                    .with(p, 2.0 * br.r)
                    .with(q, 2.0 * br.x)
                    .with(l, -(br.r * br.r + br.x * br.x)),
                Sense::Eq,
                0.0,
            );
            m.add_cone(
                format!("flow_{tag}"),
                LinExpr::var(l).with(v_sq[i], 1.0),
                vec![
                    LinExpr::new().with(p, 2.0),
                    LinExpr::new().with(q, 2.0),
                    LinExpr::var(l).with(v_sq[i], -1.0),
                ],
                0,
            );
            // Secant over-estimate of P² + Q² on the flow box: caps l from
            // above, which the cone alone does not.
            let ((pl, pu), (ql, qu)) = boxes[k];
            let vmin_sq = net.buses[i].v_min * net.buses[i].v_min;
            m.add_row(
                format!("lcap_{tag}"),
                LinExpr::var(l)
                    .with(p, -(pl + pu) / vmin_sq)
                    .with(q, -(ql + qu) / vmin_sq),
                Sense::Le,
                -(pl * pu + ql * qu) / vmin_sq,
            );
            regularizer.add(l, -opts.loss_weight * base * dt * br.r);
            pf.push(p);
            qf.push(q);
            lv.push(l);
        }
        for j in 0..net.n_bus() {
            let mut bp = LinExpr::new();
            let mut bq = LinExpr::new();
            for &c in &topo.children[j] {
                let k = topo.parent_branch[c].unwrap();
                bp.add(pf[k], 1.0);
                bq.add(qf[k], 1.0);
            }
            if let Some(k) = topo.parent_branch[j] {
                let br = &net.branches[k];
                bp.add(pf[k], -1.0);
                bp.add(lv[k], br.r);
                bq.add(qf[k], -1.0);
                bq.add(lv[k], br.x);
            }
            bp.add_expr(&gen_p[j], -1.0 / base);
            bq.add_expr(&gen_q[j], -1.0 / base);
            if j == plant {
                bp.add_expr(&ix.load_p[t], 1.0 / base);
                bq.add_expr(&ix.load_q[t], 1.0 / base);
            }
            let id = net.buses[j].id;
            m.add_row(format!("pbal_b{id}_t{t}"), bp, Sense::Eq, 0.0);
            m.add_row(format!("qbal_b{id}_t{t}"), bq, Sense::Eq, 0.0);
        }
        ix.v_sq.push(v_sq);
        ix.p_flow.push(pf);
        ix.q_flow.push(qf);
        ix.l.push(lv);
    }

    let mut objective = profit.clone();
    objective.add_expr(&regularizer, 1.0);
    m.objective = objective.compact();
    m.reports.push(("profit".into(), profit.compact()));
    m.reports.push(("hydrogen_kg".into(), hydrogen_total.compact()));
    m.check()?;
    Ok(BuiltModel {
        model: m,
        index: ix,
        surfaces,
        options: opts.clone(),
        topology,
    })
}
