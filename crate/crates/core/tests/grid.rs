use approx::assert_relative_eq;
use proptest::prelude::*;

use rep2h::grid::*;
use rep2h::simulator::powerflow::{sweep, SweepOptions};
use rep2h::synth::case_study_network;
use rep2h::Error;

/// Complex-phasor ladder solution of a radial network with constant-power
/// injections (p.u.), root at 1∠0. Returns squared voltage magnitudes.
fn phasor_flow(net: &NetworkModel, inj: &[(f64, f64)]) -> Vec<f64> {
    let topo = net.topology().unwrap();
    let n = net.n_bus();
    let mut v = vec![(1.0f64, 0.0f64); n];
    for _ in 0..500 {
        // Current drawn from the network at each bus: conj(-S / V).
        let mut cur: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let (p, q) = (-inj[j].0, -inj[j].1);
                let (vr, vi) = v[j];
                let d = vr * vr + vi * vi;
                ((p * vr + q * vi) / d, (p * vi - q * vr) / d)
            })
            .collect();
        for &j in topo.order.iter().rev() {
            if let Some(p) = topo.parent[j] {
                let c = cur[j];
                cur[p].0 += c.0;
                cur[p].1 += c.1;
            }
        }
        let mut next = v.clone();
        for &j in &topo.order {
            let (Some(p), Some(k)) = (topo.parent[j], topo.parent_branch[j]) else { continue };
            let br = &net.branches[k];
            let (ir, ii) = cur[j];
            next[j] = (next[p].0 - (br.r * ir - br.x * ii), next[p].1 - (br.r * ii + br.x * ir));
        }
        v = next;
    }
    v.iter().map(|(a, b)| a * a + b * b).collect()
}

#[test]
fn case_network_topology() {
    let net = case_study_network();
    let topo = net.topology().unwrap();
    assert_eq!(topo.root, net.bus_index(8).unwrap());
    assert_eq!(topo.order[0], topo.root);
    assert_eq!(topo.order.len(), 9);
    for (k, &(a, b)) in topo.ends.iter().enumerate() {
        assert_eq!(topo.parent[b], Some(a));
        assert_eq!(topo.parent_branch[b], Some(k));
    }
    assert!(net.check().is_empty());
}

#[test]
fn meshed_and_disconnected_layouts_rejected() {
    let mut net = case_study_network();
    net.branches.push(Branch { from: 4, to: 9, r: 0.01, x: 0.01 });
    assert!(matches!(net.topology(), Err(Error::Network(_))));
    let mut net = case_study_network();
    net.branches[4] = Branch { from: 6, to: 9, r: 0.03, x: 0.05 };
    assert!(matches!(net.topology(), Err(Error::Network(m)) if m.contains("connected")));
    let mut net = case_study_network();
    net.branches[0].to = 42;
    assert!(matches!(net.topology(), Err(Error::UnknownBus(42))));
}

#[test]
fn wind_envelope_corners() {
    let (lo, hi) = wt_envelope(6.25, 0.0).unwrap();
    assert_relative_eq!(lo, -0.91 * 6.25);
    assert_relative_eq!(hi, 0.91 * 6.25);
    let (lo, hi) = wt_envelope(6.25, 6.25).unwrap();
    assert_relative_eq!(lo, 0.33 * 6.25, max_relative = 1e-12);
    assert_relative_eq!(hi, 0.33 * 6.25, max_relative = 1e-12);
    assert!(wt_envelope(6.25, 7.0).is_err());
}

#[test]
fn pv_limits() {
    // The angle caps Q at low output, the circle near rated output.
    assert_relative_eq!(pv_q_limit(5.0, 25.84, 1.0), 25.84f64.to_radians().tan());
    assert_relative_eq!(pv_q_limit(5.0, 25.84, 4.8), (25.0f64 - 4.8 * 4.8).sqrt());
    assert_eq!(pv_q_limit(5.0, 25.84, 0.0), 0.0);
    assert!(!pv_feasible(5.0, 25.84, 0.0, 0.1));
}

#[test]
fn storage_accounting() {
    let es = case_study_network().devices.storage[0].clone();
    let soc = es_step(&es, 2.0, 0.0, 0.5, 2.5, 1.0).unwrap();
    assert_relative_eq!(soc, 2.5 + 0.95 * 2.0);
    let soc = es_step(&es, 0.0, 1.9, 0.0, soc, 0.5).unwrap();
    assert_relative_eq!(soc, 4.4 - 0.95 / 0.95);
    assert!(matches!(es_step(&es, 1.0, 1.0, 0.0, 2.5, 1.0), Err(Error::Storage(_))));
    assert!(es_step(&es, 0.0, 2.5, 0.0, 0.6, 1.0).is_err());
    assert!(es_step(&es, 2.5, 0.0, 2.0, 2.5, 0.1).is_err());
}

#[test]
fn capacitor_banks() {
    let cb = case_study_network().devices.cap_banks[0].clone();
    assert_relative_eq!(cb_q(3, 0.98, cb.dq), 3.0 * 0.98 * 0.5);
    assert!(cb_switch_feasible(&cb, 2, 4).is_ok());
    assert!(cb_switch_feasible(&cb, 2, 5).is_err());
    assert!(cb_switch_feasible(&cb, 6, 7).is_err());
    assert!(svc_feasible(-1.0, 1.0) && !svc_feasible(1.1, 1.0));
}

#[test]
fn injections_assembled_per_bus() {
    let net = case_study_network();
    let mut d = StepDispatch::zeros(&net.devices, vec![2]);
    d.wt_p = vec![1.0, 2.0, 3.0, 4.0];
    d.wt_q = vec![0.1; 4];
    d.pv_p = vec![2.5];
    d.es_p_in = vec![0.7];
    d.svc_q = vec![-0.3];
    let v_sq = vec![1.0; 9];
    let inj = assemble_injections(&net, &d, &v_sq, (9.0, 3.0)).unwrap();
    let at = |id| inj[net.bus_index(id).unwrap()];
    assert_eq!(at(3), (3.0, 0.1));
    assert_eq!(at(5), (2.5, 0.0));
    assert_eq!(at(8), (-0.7, 0.0));
    assert_relative_eq!(at(7).1, 1.0 - 0.3);
    assert_eq!(at(9), (-9.0, -3.0));
    let total: f64 = inj.iter().map(|x| x.0).sum();
    assert_relative_eq!(total, 10.0 + 2.5 - 0.7 - 9.0, max_relative = 1e-12);
}

fn injections() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.06f64..0.06, -0.04f64..0.04), 9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_matches_phasor_flow(inj in injections()) {
        let net = case_study_network();
        let topo = net.topology().unwrap();
        let inj_c = inj.clone();
        let s = sweep(&net, &topo, 1.0, move |_| Ok(inj_c.clone()), &SweepOptions { max_iterations: 200, tolerance: 1e-13 }).unwrap();
        let oracle = phasor_flow(&net, &inj);
        for j in 0..9 {
            prop_assert!((s.state.v_sq[j] - oracle[j]).abs() < 1e-9, "bus {j}: {} vs {}", s.state.v_sq[j], oracle[j]);
        }
    }

    #[test]
    fn distflow_identities_hold(inj in injections()) {
        let net = case_study_network();
        let topo = net.topology().unwrap();
        let s = sweep(&net, &topo, 1.0, |_| Ok(inj.clone()), &SweepOptions::default()).unwrap();
        let r = s.state.residuals(&net, &topo);
        prop_assert!(r.max_equality() < 1e-9);
        prop_assert!(r.cone_violation < 1e-9 && r.cone_slack < 1e-9);
        prop_assert!((s.state.loss(&net) - s.state.injection_balance()).abs() < 1e-12);
        prop_assert!(s.state.loss(&net) >= 0.0);
    }

    #[test]
    fn pv_limit_is_feasible(p in 0.0f64..5.0, theta in 1.0f64..80.0) {
        let q = pv_q_limit(5.0, theta, p);
        prop_assert!(pv_feasible(5.0, theta, p, q) && pv_feasible(5.0, theta, p, -q));
        prop_assert!(!pv_feasible(5.0, theta, p, q + 1e-6 * 5.0 + 1e-6));
    }
}
