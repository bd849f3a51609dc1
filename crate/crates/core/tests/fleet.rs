use approx::assert_relative_eq;
use proptest::prelude::*;

use rep2h::elz_phys::{thermal_step, AuxParams, StackParams, State};
use rep2h::fleet::*;
use rep2h::rectifier::apparent_load;

const ALL: [State; 3] = [State::Production, State::Standby, State::Idle];

fn windows() -> impl Iterator<Item = (State, Vec<State>)> {
    (0..3 * 81).map(|code| {
        let init = ALL[code / 81];
        let seq = (0..4).map(|k| ALL[(code % 81) / 3usize.pow(k) % 3]).collect();
        (init, seq)
    })
}

/// A window breaks the minimum idle time when a unit leaves Idle one step
/// after entering it. The initial state counts as held before step 0.
fn breaks_min_idle(init: State, seq: &[State]) -> Vec<usize> {
    let at = |k: isize| if k < 0 { init } else { seq[k as usize] };
    (0..seq.len())
        .filter(|&t| {
            let k = t as isize;
            at(k - 1) == State::Idle && at(k - 2) != State::Idle && at(k) != State::Idle
        })
        .collect()
}

#[test]
fn flags_over_every_window() {
    for (init, seq) in windows() {
        let flags = derive_flags(init, &seq);
        let mut prev = init;
        for (f, &s) in flags.iter().zip(&seq) {
            assert_eq!([f.b_on, f.b_by, f.b_idle].iter().filter(|&&b| b).count(), 1);
            assert_eq!(f.b_su, prev == State::Idle && s != State::Idle);
            assert_eq!(f.b_sd, prev != State::Idle && s == State::Idle);
            prev = s;
        }
        let v = validate_transitions(0, init, &flags);
        assert!(v.iter().all(|x| x.rule == TransitionRule::MinIdle), "{init:?} {seq:?}: {v:?}");
        let steps: Vec<usize> = v.iter().map(|x| x.step).collect();
        assert_eq!(steps, breaks_min_idle(init, &seq), "{init:?} {seq:?}");
    }
}

#[test]
fn clearing_a_required_flag_is_caught() {
    for (init, seq) in windows() {
        let flags = derive_flags(init, &seq);
        for t in 0..seq.len() {
            if flags[t].b_su {
                let mut f = flags.clone();
                f[t].b_su = false;
                let v = validate_transitions(0, init, &f);
                assert!(v.iter().any(|x| x.step == t && x.rule == TransitionRule::Startup));
            }
            if flags[t].b_sd {
                let mut f = flags.clone();
                f[t].b_sd = false;
                let v = validate_transitions(0, init, &f);
                assert!(v.iter().any(|x| x.step == t && x.rule == TransitionRule::Shutdown));
            }
        }
    }
}

fn unit(states: Vec<State>, current: Vec<f64>, t0: f64) -> UnitSchedule {
    let h = states.len();
    let sp = StackParams::default();
    let aux = AuxParams::default();
    let temperature = integrate_temperatures(0, &sp, &aux, t0, &current, &vec![0.0; h], 1.0).unwrap();
    UnitSchedule { states, current, p_cool: vec![0.0; h], temperature }
}

#[test]
fn temperatures_follow_the_thermal_step() {
    let (sp, aux) = (StackParams::default(), AuxParams::default());
    let cur = [12.0, 12.0, 6.0, 0.0, 0.0];
    let cool = [0.0, 300.0, 100.0, 0.0, 0.0];
    let traj = integrate_temperatures(0, &sp, &aux, 55.0, &cur, &cool, 0.5).unwrap();
    let mut t = 55.0;
    for k in 0..cur.len() {
        assert_eq!(traj[k], t);
        t = thermal_step(&sp, &aux, t, cur[k], cool[k], 0.5).unwrap();
    }
    assert_eq!(traj.len(), 6);
    assert_eq!(traj[5], t);
}

#[test]
fn fleet_load_sums_units() {
    let params = vec![ElectrolyzerParams::default(); 2];
    let fleet = FleetSchedule {
        initial_states: vec![State::Production, State::Standby],
        units: vec![
            unit(vec![State::Production, State::Production], vec![10.0, 8.0], 60.0),
            unit(vec![State::Standby, State::Production], vec![0.0, 4.0], 50.0),
        ],
    };
    fleet.check_shape(&params).unwrap();
    assert!(fleet.violations().is_empty());
    assert_eq!(fleet.transition_cost(1000.0, 0.0), 0.0);
    let v = [1.0, 0.97];
    let load = fleet_load(&fleet, &params, &v).unwrap();
    for t in 0..2 {
        let mut p = 0.0;
        let mut q = 0.0;
        for u in &fleet.units {
            let prm = &params[0];
            let (a, b) = apparent_load(
                &prm.rectifier, &prm.stack, &prm.aux, v[t] * 35.0, u.states[t], u.current[t], u.temperature[t], 0.0,
            )
            .unwrap();
            p += a;
            q += b;
        }
        assert_relative_eq!(load[t].0, p, max_relative = 1e-12);
        assert_relative_eq!(load[t].1, q, max_relative = 1e-12);
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let params = vec![ElectrolyzerParams::default(); 2];
    let mut fleet = FleetSchedule {
        initial_states: vec![State::Idle, State::Idle],
        units: vec![unit(vec![State::Idle; 3], vec![0.0; 3], 30.0), unit(vec![State::Idle; 3], vec![0.0; 3], 30.0)],
    };
    fleet.check_shape(&params).unwrap();
    fleet.units[1].temperature.pop();
    assert!(fleet.check_shape(&params).is_err());
    assert!(fleet.check_shape(&params[..1]).is_err());
}

fn state() -> impl Strategy<Value = State> {
    prop_oneof![Just(State::Production), Just(State::Standby), Just(State::Idle)]
}

proptest! {
    #[test]
    fn startups_and_shutdowns_alternate(init in state(), seq in prop::collection::vec(state(), 1..48)) {
        let flags = derive_flags(init, &seq);
        let su = flags.iter().filter(|f| f.b_su).count() as i64;
        let sd = flags.iter().filter(|f| f.b_sd).count() as i64;
        let start_idle = (init == State::Idle) as i64;
        let end_idle = (*seq.last().unwrap() == State::Idle) as i64;
        prop_assert_eq!(su - sd, start_idle - end_idle);
        prop_assert_eq!(transition_costs(&flags, 3.0, 2.0), 3.0 * su as f64 + 2.0 * sd as f64);
    }

    #[test]
    fn min_idle_matches_pattern(init in state(), seq in prop::collection::vec(state(), 1..24)) {
        let v = validate_transitions(0, init, &derive_flags(init, &seq));
        let steps: Vec<usize> = v.iter().map(|x| x.step).collect();
        prop_assert_eq!(steps, breaks_min_idle(init, &seq));
    }
}
