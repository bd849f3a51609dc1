//! Backward/forward sweep on the branch-flow (DistFlow) equations.
//!
//! Branch currents are taken from the sending-end flows and voltages of the
//! previous iterate, so a converged sweep satisfies the exact recursion:
//! nodal balance, the voltage-drop relation and `l * v_from = P² + Q²`.

use crate::error::{Error, Result};
use crate::grid::{GridState, NetworkModel, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the squared-voltage update, p.u.
    pub tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub state: GridState,
    pub iterations: usize,
}

/// Sending-end flow of each branch from its subtree, leaves first.
fn backward(net: &NetworkModel, topo: &Topology, inj: &[(f64, f64)], l: &[f64], p: &mut [f64], q: &mut [f64]) {
    for &j in topo.order.iter().rev() {
        let Some(k) = topo.parent_branch[j] else { continue };
        let br = &net.branches[k];
        let mut pj = -inj[j].0;
        let mut qj = -inj[j].1;
        for &c in &topo.children[j] {
            let kc = topo.parent_branch[c].unwrap();
            pj += p[kc];
            qj += q[kc];
        }
        p[k] = pj + br.r * l[k];
        q[k] = qj + br.x * l[k];
    }
}

/// Solves the radial power flow with the root held at `v_root_sq`.
///
/// `injections` maps the current squared voltages to per-bus net
/// injections in p.u. (generation positive); it is re-evaluated every
/// iteration so voltage-dependent devices converge with the flows. The root
/// entry is ignored: the root bus is the slack and its injection in the
/// returned state is whatever balances the network.
pub fn sweep(
    net: &NetworkModel,
    topo: &Topology,
    v_root_sq: f64,
    mut injections: impl FnMut(&[f64]) -> Result<Vec<(f64, f64)>>,
    opts: &SweepOptions,
) -> Result<Sweep> {
    let n = net.n_bus();
    let nb = net.branches.len();
    let mut v = vec![v_root_sq; n];
    let mut l = vec![0.0; nb];
    let mut p = vec![0.0; nb];
    let mut q = vec![0.0; nb];
    let mut inj = vec![(0.0, 0.0); n];
    let mut worst = (0usize, f64::INFINITY);
    for it in 1..=opts.max_iterations {
        inj = injections(&v)?;
        if inj.len() != n {
            return Err(Error::Network(format!("{} injections for {n} buses", inj.len())));
        }
        backward(net, topo, &inj, &l, &mut p, &mut q);
        // Forward: voltages, then currents from the sending end.
        let mut delta: f64 = 0.0;
        let mut arg = 0usize;
        for &j in &topo.order {
            let Some(k) = topo.parent_branch[j] else { continue };
            let br = &net.branches[k];
            let i = topo.parent[j].unwrap();
            let z2 = br.r * br.r + br.x * br.x;
            let vj = v[i] - 2.0 * (br.r * p[k] + br.x * q[k]) + z2 * l[k];
            if !(vj > 0.0) {
                return Err(Error::Divergence {
                    iterations: it,
                    worst_bus: net.buses[j].id,
                    last_update: f64::NAN,
                });
            }
            let d = (vj - v[j]).abs();
            if d > delta {
                delta = d;
                arg = j;
            }
            v[j] = vj;
        }
        let mut dl: f64 = 0.0;
        for (k, &(i, _)) in topo.ends.iter().enumerate() {
            let lk = (p[k] * p[k] + q[k] * q[k]) / v[i];
            dl = dl.max((lk - l[k]).abs());
            l[k] = lk;
        }
        worst = (arg, delta);
        if delta.max(dl) < opts.tolerance && it > 1 {
            // One more backward pass so the flows match the final currents.
            backward(net, topo, &inj, &l, &mut p, &mut q);
            let root = topo.root;
            let mut rp = 0.0;
            let mut rq = 0.0;
            for &c in &topo.children[root] {
                let kc = topo.parent_branch[c].unwrap();
                rp += p[kc];
                rq += q[kc];
            }
            inj[root] = (rp, rq);
            return Ok(Sweep {
                state: GridState {
                    v_sq: v,
                    p_flow: p,
                    q_flow: q,
                    l,
                    p_inj: inj.iter().map(|x| x.0).collect(),
                    q_inj: inj.iter().map(|x| x.1).collect(),
                },
                iterations: it,
            });
        }
    }
    Err(Error::Divergence {
        iterations: opts.max_iterations,
        worst_bus: net.buses[worst.0].id,
        last_update: worst.1,
    })
}

/// Receiving-end squared voltage of a single line fed at `v1_sq` and
/// loaded with `p + jq` at the far end (the high-voltage root of the
/// quadratic).
pub fn two_bus_voltage(v1_sq: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = v1_sq - 2.0 * (r * p + x * q);
    (b + (b * b - 4.0 * (r * r + x * x) * (p * p + q * q)).sqrt()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, Devices};
    use crate::synth::case_study_network;

    fn line(r: f64, x: f64) -> NetworkModel {
        NetworkModel {
            base_mva: 100.0,
            base_kv: 35.0,
            buses: vec![Bus { id: 1, v_min: 0.9, v_max: 1.1 }, Bus { id: 2, v_min: 0.9, v_max: 1.1 }],
            branches: vec![Branch { from: 1, to: 2, r, x }],
            root: 1,
            plant_bus: 2,
            devices: Devices::default(),
        }
    }

    #[test]
    fn flat_profile_without_injections() {
        let net = case_study_network();
        let topo = net.topology().unwrap();
        let s = sweep(&net, &topo, 1.0, |_| Ok(vec![(0.0, 0.0); 9]), &SweepOptions::default()).unwrap();
        assert!(s.state.v_sq.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(s.state.l.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn matches_two_bus_closed_form() {
        for &(r, x, p, q) in &[(0.02, 0.04, 0.2, 0.1), (0.05, 0.08, 0.35, -0.05), (0.1, 0.02, 0.05, 0.3)] {
            let net = line(r, x);
            let topo = net.topology().unwrap();
            let s = sweep(&net, &topo, 1.0, |_| Ok(vec![(0.0, 0.0), (-p, -q)]), &SweepOptions::default()).unwrap();
            let exact = two_bus_voltage(1.0, r, x, p, q);
            assert!((s.state.v_sq[1] - exact).abs() < 1e-8, "{} vs {exact}", s.state.v_sq[1]);
            let res = s.state.residuals(&net, &topo);
            assert!(res.max_equality() < 1e-9);
            assert!(res.cone_violation.max(res.cone_slack) < 1e-9);
        }
    }

    #[test]
    fn reports_divergence() {
        let net = line(0.5, 0.5);
        let topo = net.topology().unwrap();
        let e = sweep(&net, &topo, 1.0, |_| Ok(vec![(0.0, 0.0), (-3.0, -3.0)]), &SweepOptions::default());
        assert!(matches!(e, Err(Error::Divergence { worst_bus: 2, .. })));
    }
}
