//! Commitment logic for a fleet of electrolyzers.
//!
//! Steps before the horizon are assumed to repeat the initial state, so the
//! first two steps of a schedule are checked against that history.

use serde::{Deserialize, Serialize};

use crate::elz_phys::{self, AuxParams, StackParams, State};
use crate::error::{Error, Result};
use crate::rectifier::{self, RectifierParams};

/// Complete parameter pack of one electrolyzer unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ElectrolyzerParams {
    pub stack: StackParams,
    pub aux: AuxParams,
    pub rectifier: RectifierParams,
}

impl ElectrolyzerParams {
    pub fn check(&self) -> Vec<String> {
        let mut out: Vec<String> = self.stack.check().into_iter().map(|m| format!("stack: {m}")).collect();
        out.extend(self.aux.check().into_iter().map(|m| format!("aux: {m}")));
        out.extend(self.rectifier.check().into_iter().map(|m| format!("rectifier: {m}")));
        out
    }
}

/// Commitment flags of one unit at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitState {
    pub b_on: bool,
    pub b_by: bool,
    pub b_idle: bool,
    pub b_su: bool,
    pub b_sd: bool,
}

impl UnitState {
    /// Flags for `cur` following `prev`: a startup is leaving Idle, a
    /// shutdown is entering it.
    pub fn from_states(prev: State, cur: State) -> Self {
        Self {
            b_on: cur == State::Production,
            b_by: cur == State::Standby,
            b_idle: cur == State::Idle,
            b_su: prev == State::Idle && cur != State::Idle,
            b_sd: prev != State::Idle && cur == State::Idle,
        }
    }
}

/// Derives flag sequences from a state sequence.
pub fn derive_flags(initial: State, states: &[State]) -> Vec<UnitState> {
    let mut prev = initial;
    states
        .iter()
        .map(|&s| {
            let f = UnitState::from_states(prev, s);
            prev = s;
            f
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionRule {
    OneHot,
    Startup,
    Shutdown,
    MinIdle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionViolation {
    pub unit: usize,
    pub step: usize,
    pub rule: TransitionRule,
}

fn b(x: bool) -> i32 {
    x as i32
}

/// Checks every transition inequality over a horizon and returns all
/// violations. `initial` is the state held before step 0.
pub fn validate_transitions(unit: usize, initial: State, seq: &[UnitState]) -> Vec<TransitionViolation> {
    let hist = UnitState::from_states(initial, initial);
    let at = |k: isize| if k < 0 { hist } else { seq[k as usize] };
    let mut out = Vec::new();
    for (t, s) in seq.iter().enumerate() {
        let k = t as isize;
        let mut push = |rule| out.push(TransitionViolation { unit, step: t, rule });
        if b(s.b_on) + b(s.b_by) + b(s.b_idle) != 1 {
            push(TransitionRule::OneHot);
        }
        let p1 = at(k - 1);
        let p2 = at(k - 2);
        if b(s.b_on) + b(s.b_by) + b(p1.b_idle) - 1 > b(s.b_su) {
            push(TransitionRule::Startup);
        }
        if b(p1.b_on) + b(p1.b_by) + b(s.b_idle) - 1 > b(s.b_sd) {
            push(TransitionRule::Shutdown);
        }
        if -b(p2.b_idle) - b(s.b_idle) + b(p1.b_idle) > 0 {
            push(TransitionRule::MinIdle);
        }
    }
    out
}

/// Startup and shutdown costs of one unit's flag sequence.
pub fn transition_costs(seq: &[UnitState], c_su: f64, c_sd: f64) -> f64 {
    seq.iter().map(|s| c_su * b(s.b_su) as f64 + c_sd * b(s.b_sd) as f64).sum()
}

/// Operating trajectory of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSchedule {
    pub states: Vec<State>,
    /// kA per step.
    pub current: Vec<f64>,
    /// Cooling heat flow per step, kW.
    pub p_cool: Vec<f64>,
    /// Temperature at the start of each step plus the final temperature,
    /// so one longer than the horizon.
    pub temperature: Vec<f64>,
}

impl UnitSchedule {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSchedule {
    pub initial_states: Vec<State>,
    pub units: Vec<UnitSchedule>,
}

impl FleetSchedule {
    pub fn horizon(&self) -> usize {
        self.units.first().map_or(0, |u| u.horizon())
    }

    pub fn flags(&self, unit: usize) -> Vec<UnitState> {
        derive_flags(self.initial_states[unit], &self.units[unit].states)
    }

    /// Transition violations over all units.
    pub fn violations(&self) -> Vec<TransitionViolation> {
        (0..self.units.len())
            .flat_map(|m| validate_transitions(m, self.initial_states[m], &self.flags(m)))
            .collect()
    }

    /// Total startup and shutdown cost, CNY.
    pub fn transition_cost(&self, c_su: f64, c_sd: f64) -> f64 {
        (0..self.units.len()).map(|m| transition_costs(&self.flags(m), c_su, c_sd)).sum()
    }

    /// Consistency of array lengths and state-dependent current bounds.
    pub fn check_shape(&self, params: &[ElectrolyzerParams]) -> Result<()> {
        let h = self.horizon();
        if self.units.len() != params.len() || self.initial_states.len() != params.len() {
            return Err(Error::Model(format!(
                "schedule has {} units, plant has {}",
                self.units.len(),
                params.len()
            )));
        }
        for (m, u) in self.units.iter().enumerate() {
            if u.states.len() != h || u.current.len() != h || u.p_cool.len() != h || u.temperature.len() != h + 1 {
                return Err(Error::Model(format!("unit {m}: inconsistent series lengths")));
            }
        }
        Ok(())
    }
}

/// Re-integrates a unit's temperature from `t0` under its currents and
/// cooling. Returns the trajectory including the initial value.
pub fn integrate_temperatures(
    unit: usize,
    sp: &StackParams,
    aux: &AuxParams,
    t0: f64,
    current: &[f64],
    p_cool: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(current.len() + 1);
    out.push(t0);
    let mut t = t0;
    for (k, (&i, &c)) in current.iter().zip(p_cool).enumerate() {
        t = elz_phys::thermal_step(sp, aux, t, i, c, dt).map_err(|e| Error::Unit {
            unit,
            step: k,
            source: Box::new(e),
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Plant-bus load per step (MW, MVar), evaluated at each unit's scheduled
/// temperature. `u_ac_pu` is the per-unit plant-bus voltage per step.
pub fn fleet_load(
    schedule: &FleetSchedule,
    params: &[ElectrolyzerParams],
    u_ac_pu: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let h = schedule.horizon();
    let mut out = vec![(0.0, 0.0); h];
    for (m, (u, prm)) in schedule.units.iter().zip(params).enumerate() {
        for t in 0..h {
            let (p, q) = rectifier::apparent_load(
                &prm.rectifier,
                &prm.stack,
                &prm.aux,
                u_ac_pu[t] * prm.rectifier.u_ac_nominal,
                u.states[t],
                u.current[t],
                u.temperature[t],
                u.p_cool[t],
            )
            .map_err(|e| Error::Unit {
                unit: m,
                step: t,
                source: Box::new(e),
            })?;
            out[t].0 += p;
            out[t].1 += q;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use State::*;

    #[test]
    fn constant_production_is_clean() {
        let seq = derive_flags(Production, &[Production; 24]);
        assert!(validate_transitions(0, Production, &seq).is_empty());
        assert_eq!(transition_costs(&seq, 1000.0, 0.0), 0.0);
    }

    #[test]
    fn single_idle_step_breaks_min_idle() {
        let seq = derive_flags(Production, &[Production, Idle, Production]);
        let v = validate_transitions(3, Production, &seq);
        assert_eq!(
            v,
            vec![TransitionViolation { unit: 3, step: 2, rule: TransitionRule::MinIdle }]
        );
    }

    #[test]
    fn startup_flag_forced() {
        let mut seq = derive_flags(Idle, &[Idle, Idle, Production]);
        assert!(seq[2].b_su);
        assert!(validate_transitions(0, Idle, &seq).is_empty());
        seq[2].b_su = false;
        let v = validate_transitions(0, Idle, &seq);
        assert_eq!(v[0].rule, TransitionRule::Startup);
    }

    #[test]
    fn costs() {
        let seq = derive_flags(Idle, &[Production, Production, Idle, Idle, Standby, Idle, Idle]);
        assert_eq!(seq.iter().filter(|s| s.b_su).count(), 2);
        assert_eq!(transition_costs(&seq, 1000.0, 0.0), 2000.0);
        assert_eq!(seq.iter().filter(|s| s.b_sd).count(), 2);
    }

    #[test]
    fn broken_one_hot_reported() {
        let mut seq = derive_flags(Production, &[Production; 3]);
        seq[1].b_by = true;
        let v = validate_transitions(0, Production, &seq);
        assert!(v.iter().any(|x| x.step == 1 && x.rule == TransitionRule::OneHot));
    }
}
