//! Shared fixtures: bundled scenario paths, a two-bus toy plant without
//! storage, and a brute-force oracle for it.
#![allow(dead_code)]

use std::path::PathBuf;

use rep2h::elz_phys::{self, State};
use rep2h::fleet::{derive_flags, transition_costs, validate_transitions, ElectrolyzerParams};
use rep2h::grid::{Branch, Bus, Devices, NetworkModel, WindTurbine};
use rep2h::optimizer::pwl::{build_surfaces, GridSpec};
use rep2h::rectifier;
use rep2h::scenario::{Economics, Horizon, Initial, Plant, Scenario, Series};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn case_study() -> Scenario {
    Scenario::load_valid(&scenarios_dir().join("case_study.json")).unwrap()
}

/// AC power of one unit, kW.
pub fn p_ac(u: &ElectrolyzerParams, i: f64, t: f64) -> f64 {
    elz_phys::stack_power(&u.stack, i, t).unwrap() + rectifier::rectifier_loss(&u.rectifier, i)
}

/// One wind turbine at the root, the plant one branch away, no storage.
/// `avail_mw[t]` is the wind available at step `t`.
pub fn toy(initial: &[(State, f64)], avail_mw: &[f64], c_su: f64) -> Scenario {
    let h = avail_mw.len();
    let bus = |id| Bus { id, v_min: 0.95, v_max: 1.05 };
    Scenario {
        name: "toy".into(),
        description: String::new(),
        horizon: Horizon { steps: h, dt_hours: 1.0 },
        economics: Economics { c_su, ..Economics::default() },
        plant: Plant { units: vec![ElectrolyzerParams::default(); initial.len()] },
        network: NetworkModel {
            base_mva: 100.0,
            base_kv: 35.0,
            buses: vec![bus(1), bus(2)],
            branches: vec![Branch { from: 1, to: 2, r: 0.01, x: 0.02 }],
            root: 1,
            plant_bus: 2,
            devices: Devices {
                wind: vec![WindTurbine { bus: 1, s: 20.0 }],
                ..Devices::default()
            },
        },
        series: Series {
            wind_mw: vec![avail_mw.to_vec()],
            pv_mw: vec![],
            ambient_c: vec![25.0; h],
        },
        initial: Initial {
            states: initial.iter().map(|s| s.0).collect(),
            temperatures: initial.iter().map(|s| s.1).collect(),
        },
    }
}

/// Current grid of the oracle: 21 points from `i_min` to `i_max`.
pub fn current_grid(u: &ElectrolyzerParams) -> Vec<f64> {
    (0..21)
        .map(|k| u.stack.i_min + (u.stack.i_max - u.stack.i_min) * k as f64 / 20.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub profit: f64,
    /// `[unit][step]`
    pub states: Vec<Vec<State>>,
    pub currents: Vec<Vec<f64>>,
}

/// Profit of one plan under the exact unit physics, or `None` if it breaks
/// a transition, temperature or power limit. Cooling is used only when a
/// producing step would otherwise start above `t_max - t_margin`.
pub fn evaluate(sc: &Scenario, states: &[Vec<State>], currents: &[Vec<f64>], t_margin: f64) -> Option<f64> {
    let h = sc.steps();
    let dt = sc.dt();
    let e = &sc.economics;
    let n = sc.plant.units.len();
    let mut profit = 0.0;
    for u in 0..n {
        let flags = derive_flags(sc.initial.states[u], &states[u]);
        if !validate_transitions(u, sc.initial.states[u], &flags).is_empty() {
            return None;
        }
        profit -= transition_costs(&flags, e.c_su, e.c_sd);
    }
    let mut temp: Vec<f64> = sc.initial.temperatures.clone();
    for t in 0..h {
        let mut draw = 0.0;
        let mut next = vec![0.0; n];
        for u in 0..n {
            let prm = &sc.plant.units[u];
            let (sp, aux) = (&prm.stack, &prm.aux);
            let tt = temp[u];
            let cap = |k: usize| {
                let c = sp.t_max - t_margin;
                if k == 0 {
                    c.max(sc.initial.temperatures[u])
                } else {
                    c
                }
            };
            let st = states[u][t];
            let mut gen = 0.0;
            match st {
                State::Production => {
                    if tt < sp.t_min || tt > cap(t) + 1e-9 {
                        return None;
                    }
                    let i = currents[u][t];
                    gen = elz_phys::heat_generation(sp, aux, i, tt).ok()?;
                    draw += p_ac(prm, i, tt);
                    profit += e.c_h2 * elz_phys::hydrogen_flow(sp, i).ok()? * dt;
                }
                State::Standby => draw += aux.p_standby,
                State::Idle => {}
            }
            let free = tt + dt / aux.c_heat * (gen - (tt - sc.series.ambient_c[t]) / aux.r_diss);
            let mut ceiling = 100.0;
            if t + 1 < h && states[u][t + 1] == State::Production {
                ceiling = cap(t + 1);
            }
            let mut p_cool = 0.0;
            if free > ceiling {
                if st == State::Idle {
                    return None;
                }
                p_cool = (free - ceiling) * aux.c_heat / dt;
                if p_cool > aux.c_cool * (tt - aux.t_cool) {
                    return None;
                }
                draw += p_cool / aux.eta_cool;
            }
            next[u] = free - p_cool * dt / aux.c_heat;
            if next[u] < aux.t_cool {
                return None;
            }
        }
        if draw > sc.available(t) * 1000.0 {
            return None;
        }
        temp = next;
    }
    Some(profit)
}

/// Exhaustive search over unit states and the 21-point current grid.
pub fn enumerate(sc: &Scenario, t_margin: f64) -> Candidate {
    let h = sc.steps();
    let n = sc.plant.units.len();
    let grid = current_grid(&sc.plant.units[0]);
    // Per unit-step choices: idle, standby, then production at each grid point.
    let choices = grid.len() + 2;
    let slots = n * h;
    let total = choices.pow(slots as u32);
    let mut best: Option<Candidate> = None;
    let mut states = vec![vec![State::Idle; h]; n];
    let mut currents = vec![vec![0.0; h]; n];
    for code in 0..total {
        let mut c = code;
        for s in 0..slots {
            let (u, t) = (s / h, s % h);
            let k = c % choices;
            c /= choices;
            (states[u][t], currents[u][t]) = match k {
                0 => (State::Idle, 0.0),
                1 => (State::Standby, 0.0),
                _ => (State::Production, grid[k - 2]),
            };
        }
        if let Some(p) = evaluate(sc, &states, &currents, t_margin) {
            if best.as_ref().map_or(true, |b| p > b.profit) {
                best = Some(Candidate { profit: p, states: states.clone(), currents: currents.clone() });
            }
        }
    }
    best.expect("the all-idle plan is always feasible")
}

/// Profit the PWL model may gain or lose against the exact physics, per
/// producing unit-step and summed over all unit-steps: the certified
/// hydrogen error, plus the certified power error (directly and through the
/// heat balance) priced at the steepest marginal hydrogen yield.
pub fn pwl_budget(sc: &Scenario, spec: &GridSpec, tolerance: f64) -> f64 {
    let u = &sc.plant.units[0];
    let surf = build_surfaces(u, spec, tolerance).unwrap();
    let cert = |s: &rep2h::optimizer::pwl::PwlSurface| s.certificate.unwrap().max_abs_error;
    let (sp, aux) = (&u.stack, &u.aux);
    let mut slope: f64 = 0.0;
    let mut dpdt: f64 = 0.0;
    let steps = 400;
    for t in [sp.t_min, 50.0, sp.t_max] {
        for k in 0..steps {
            let a = sp.i_min + (sp.i_max - sp.i_min) * k as f64 / steps as f64;
            let b = sp.i_min + (sp.i_max - sp.i_min) * (k + 1) as f64 / steps as f64;
            let dy = elz_phys::hydrogen_flow(sp, b).unwrap() - elz_phys::hydrogen_flow(sp, a).unwrap();
            slope = slope.max(dy / (p_ac(u, b, t) - p_ac(u, a, t)));
        }
    }
    for k in 0..=steps {
        let t = sp.t_min + (sp.t_max - sp.t_min) * k as f64 / steps as f64;
        dpdt = dpdt.max((p_ac(u, sp.i_max, t) - p_ac(u, sp.i_max, t + 0.01)).abs() / 0.01);
    }
    let dt = sc.dt();
    let per_step = cert(&surf.y) + slope * (cert(&surf.p_ac) + dpdt * cert(&surf.p_gen) * dt / aux.c_heat);
    (sc.plant.units.len() * sc.steps()) as f64 * sc.economics.c_h2 * dt * per_step
}
