use approx::assert_relative_eq;
use proptest::prelude::*;

use rep2h::elz_phys::{self, AuxParams, StackParams, State};
use rep2h::rectifier::*;

// Total reactive power at 35 kV from an independent implementation that
// goes through the AC line current.
const POINTS: [(f64, f64, f64); 4] = [
    (3.0, 25.0, 1.015612456256201),
    (6.0, 50.0, 2.013681899509915),
    (12.0, 80.0, 3.852770759718635),
    (9.0, 65.0, 2.928311387090624),
];

#[test]
fn pinned_reactive_power() {
    let (rp, sp) = (RectifierParams::default(), StackParams::default());
    for (i, t, q) in POINTS {
        assert_relative_eq!(reactive_power(&rp, &sp, 35.0, i, t).unwrap(), q, max_relative = 1e-12);
        let (qs, qd) = reactive_components(&rp, &sp, 35.0, i, t).unwrap();
        assert_relative_eq!(qs.hypot(qd), q, max_relative = 1e-12);
    }
}

#[test]
fn distortion_share_follows_harmonic_factor() {
    let (rp, sp) = (RectifierParams::default(), StackParams::default());
    let nu = rp.harmonic_factor_nu;
    let ac = ac_operating_point(&rp, &sp, 35.0, 8.0, 60.0).unwrap();
    let (_, qd) = reactive_components(&rp, &sp, 35.0, 8.0, 60.0).unwrap();
    let s = 3f64.sqrt() * ac.u_ac * ac.i_ac;
    assert_relative_eq!(qd / s, (1.0 - nu * nu).sqrt() / nu, max_relative = 1e-12);
}

#[test]
fn apparent_load_matches_parts() {
    let (rp, sp, aux) = (RectifierParams::default(), StackParams::default(), AuxParams::default());
    let (p, q) = apparent_load(&rp, &sp, &aux, 35.0, State::Production, 9.0, 65.0, 180.0).unwrap();
    let dc = elz_phys::stack_power(&sp, 9.0, 65.0).unwrap();
    assert_relative_eq!(p * 1000.0, dc + rectifier_loss(&rp, 9.0) + 180.0 / aux.eta_cool, max_relative = 1e-12);
    assert_relative_eq!(q, 2.928311387090624, max_relative = 1e-12);
    let (p_idle, _) = apparent_load(&rp, &sp, &aux, 35.0, State::Idle, 0.0, 65.0, 180.0).unwrap();
    assert_eq!(p_idle, 0.0);
}

#[test]
fn low_line_voltage_is_infeasible() {
    let (rp, sp) = (RectifierParams::default(), StackParams::default());
    assert!(matches!(
        reactive_power(&rp, &sp, 20.0, 12.0, 25.0),
        Err(rep2h::Error::InfeasibleVoltage { .. })
    ));
}

proptest! {
    #[test]
    fn two_paths_agree(i in 3.0f64..12.0, t in 25.0f64..80.0, v in 0.95f64..1.05) {
        let (rp, sp) = (RectifierParams::default(), StackParams::default());
        let u_ac = v * rp.u_ac_nominal;
        let q = reactive_power(&rp, &sp, u_ac, i, t).unwrap();
        let (qs, qd) = reactive_components(&rp, &sp, u_ac, i, t).unwrap();
        prop_assert!((qs.hypot(qd) - q).abs() <= 1e-9 * q);
    }

    #[test]
    fn reactive_power_rises_with_line_voltage(i in 3.0f64..12.0, t in 25.0f64..80.0, v in 0.95f64..1.04) {
        let (rp, sp) = (RectifierParams::default(), StackParams::default());
        let lo = reactive_power(&rp, &sp, v * 35.0, i, t).unwrap();
        let hi = reactive_power(&rp, &sp, (v + 0.01) * 35.0, i, t).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn temperature_sensitivity_sign_and_value(i in 3.0f64..12.0, t in 26.0f64..79.0) {
        let (rp, sp) = (RectifierParams::default(), StackParams::default());
        let d = reactive_power_dt(&rp, &sp, 35.0, i, t).unwrap();
        let h = 1e-3;
        let fd = (reactive_power(&rp, &sp, 35.0, i, t + h).unwrap() - reactive_power(&rp, &sp, 35.0, i, t - h).unwrap()) / (2.0 * h);
        prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        prop_assert!(d.signum() == fd.signum() || fd.abs() < 1e-9);
    }

    #[test]
    fn power_factor_in_unit_interval(i in 3.0f64..12.0, t in 25.0f64..80.0, v in 0.95f64..1.05) {
        let (rp, sp) = (RectifierParams::default(), StackParams::default());
        let phi = ac_operating_point(&rp, &sp, v * 35.0, i, t).unwrap().phi;
        prop_assert!(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2);
    }
}
