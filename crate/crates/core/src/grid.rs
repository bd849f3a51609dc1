//! Radial network model: topology, DistFlow bookkeeping, nodal injection
//! assembly and the reactive capability envelopes of each resource.
//!
//! Powers are exchanged in MW/MVar at the interface and converted to per
//! unit on the network base internally. Branches are oriented from the
//! grid-forming bus outward; `P_ij`, `Q_ij` are sending-end flows and `l_ij`
//! is the squared current magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_v_min() -> f64 {
    0.95
}

fn default_v_max() -> f64 {
    1.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Voltage magnitude limits, p.u.
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// p.u. on the network base.
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindTurbine {
    pub bus: usize,
    /// Installed capacity, MVA.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvPlant {
    pub bus: usize,
    pub s: f64,
    /// Maximum power-factor angle, degrees.
    pub theta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storage {
    pub bus: usize,
    /// Converter capacity, MVA.
    pub s: f64,
    pub p_in_max: f64,
    pub p_out_max: f64,
    pub eta_in: f64,
    pub eta_out: f64,
    /// MWh
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitorBank {
    pub bus: usize,
    /// MVar per bank at 1 p.u.
    pub dq: f64,
    pub n_max: u32,
    /// Largest change in banks per step.
    pub n_switch_max: u32,
    pub n_init: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svc {
    pub bus: usize,
    /// MVar
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Devices {
    #[serde(default)]
    pub wind: Vec<WindTurbine>,
    #[serde(default)]
    pub pv: Vec<PvPlant>,
    #[serde(default)]
    pub storage: Vec<Storage>,
    #[serde(default)]
    pub cap_banks: Vec<CapacitorBank>,
    #[serde(default)]
    pub svcs: Vec<Svc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_mva: f64,
    pub base_kv: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Bus holding the voltage reference (the grid-forming storage).
    pub root: usize,
    /// Bus of the hydrogen plant.
    pub plant_bus: usize,
    pub devices: Devices,
}

/// Tree structure of a radial network, in bus indices (not ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub root: usize,
    /// Buses in breadth-first order from the root.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    /// Branch feeding each bus from its parent.
    pub parent_branch: Vec<Option<usize>>,
    /// Oriented (parent, child) bus indices per branch.
    pub ends: Vec<(usize, usize)>,
    pub children: Vec<Vec<usize>>,
}

impl NetworkModel {
    pub fn bus_index(&self, id: usize) -> Result<usize> {
        self.buses.iter().position(|b| b.id == id).ok_or(Error::UnknownBus(id))
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Builds the rooted tree, rejecting meshed or disconnected layouts.
    pub fn topology(&self) -> Result<Topology> {
        let n = self.buses.len();
        let root = self.bus_index(self.root)?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            let a = self.bus_index(br.from)?;
            let b = self.bus_index(br.to)?;
            if a == b {
                return Err(Error::Network(format!("branch {k} is a self-loop at bus {}", br.from)));
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        if self.branches.len() + 1 != n {
            return Err(Error::Network(format!(
                "{} buses need exactly {} branches for a radial network, found {}",
                n,
                n.saturating_sub(1),
                self.branches.len()
            )));
        }
        let mut parent = vec![None; n];
        let mut parent_branch = vec![None; n];
        let mut seen = vec![false; n];
        let mut ends = vec![(0, 0); self.branches.len()];
        let mut children = vec![Vec::new(); n];
        let mut order = vec![root];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            for &(j, k) in &adj[i] {
                if seen[j] {
                    continue;
                }
                seen[j] = true;
                parent[j] = Some(i);
                parent_branch[j] = Some(k);
                ends[k] = (i, j);
                children[i].push(j);
                order.push(j);
            }
        }
        if order.len() != n {
            return Err(Error::Network("network is not connected".into()));
        }
        Ok(Topology {
            root,
            order,
            parent,
            parent_branch,
            ends,
            children,
        })
    }

    /// Structural checks with one message per problem.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.base_mva > 0.0) || !(self.base_kv > 0.0) {
            out.push("base_mva and base_kv must be positive".into());
        }
        for (k, b) in self.buses.iter().enumerate() {
            if self.buses[..k].iter().any(|o| o.id == b.id) {
                out.push(format!("buses[{k}]: duplicate id {}", b.id));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max) {
                out.push(format!("buses[{k}]: voltage limits {}..{} are not ordered", b.v_min, b.v_max));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.r < 0.0 || br.x < 0.0 {
                out.push(format!("branches[{k}]: r and x must be nonnegative"));
            }
        }
        if let Err(e) = self.topology() {
            out.push(format!("topology: {e}"));
        }
        if self.bus_index(self.plant_bus).is_err() {
            out.push(format!("plant_bus: unknown bus {}", self.plant_bus));
        }
        let d = &self.devices;
        let mut bus_ref = |what: String, bus: usize| {
            if self.bus_index(bus).is_err() {
                out.push(format!("{what}.bus: unknown bus {bus}"));
            }
        };
        for (k, w) in d.wind.iter().enumerate() {
            bus_ref(format!("devices.wind[{k}]"), w.bus);
        }
        for (k, w) in d.pv.iter().enumerate() {
            bus_ref(format!("devices.pv[{k}]"), w.bus);
        }
        for (k, w) in d.storage.iter().enumerate() {
            bus_ref(format!("devices.storage[{k}]"), w.bus);
        }
        for (k, w) in d.cap_banks.iter().enumerate() {
            bus_ref(format!("devices.cap_banks[{k}]"), w.bus);
        }
        for (k, w) in d.svcs.iter().enumerate() {
            bus_ref(format!("devices.svcs[{k}]"), w.bus);
        }
        for (k, w) in d.wind.iter().enumerate() {
            if w.s < 0.0 {
                out.push(format!("devices.wind[{k}].s: capacity must be nonnegative"));
            }
        }
        for (k, w) in d.pv.iter().enumerate() {
            if w.s < 0.0 || !(0.0..90.0).contains(&w.theta_deg) {
                out.push(format!("devices.pv[{k}]: capacity must be nonnegative and theta in [0, 90)"));
            }
        }
        for (k, s) in d.storage.iter().enumerate() {
            let p = format!("devices.storage[{k}]");
            if s.s < 0.0 || s.p_in_max < 0.0 || s.p_out_max < 0.0 {
                out.push(format!("{p}: capacities must be nonnegative"));
            }
            if !(s.soc_min <= s.soc_max) || s.soc_init < s.soc_min || s.soc_init > s.soc_max {
                out.push(format!("{p}: SOC bounds must satisfy soc_min <= soc_init <= soc_max"));
            }
            if !(s.eta_in > 0.0 && s.eta_in <= 1.0 && s.eta_out > 0.0 && s.eta_out <= 1.0) {
                out.push(format!("{p}: efficiencies must lie in (0, 1]"));
            }
        }
        for (k, c) in d.cap_banks.iter().enumerate() {
            if c.n_init > c.n_max || c.dq < 0.0 {
                out.push(format!("devices.cap_banks[{k}]: n_init exceeds n_max or dq negative"));
            }
        }
        for (k, c) in d.svcs.iter().enumerate() {
            if c.q_max < 0.0 {
                out.push(format!("devices.svcs[{k}].q_max: must be nonnegative"));
            }
        }
        out
    }
}

/// Setpoints of every device at one step, MW/MVar.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDispatch {
    pub wt_p: Vec<f64>,
    pub wt_q: Vec<f64>,
    pub pv_p: Vec<f64>,
    pub pv_q: Vec<f64>,
    pub es_p_in: Vec<f64>,
    pub es_p_out: Vec<f64>,
    pub es_q: Vec<f64>,
    pub cb_n: Vec<u32>,
    pub svc_q: Vec<f64>,
}

impl StepDispatch {
    /// Everything off, capacitor banks at `cb_n`.
    pub fn zeros(d: &Devices, cb_n: Vec<u32>) -> Self {
        Self {
            wt_p: vec![0.0; d.wind.len()],
            wt_q: vec![0.0; d.wind.len()],
            pv_p: vec![0.0; d.pv.len()],
            pv_q: vec![0.0; d.pv.len()],
            es_p_in: vec![0.0; d.storage.len()],
            es_p_out: vec![0.0; d.storage.len()],
            es_q: vec![0.0; d.storage.len()],
            cb_n,
            svc_q: vec![0.0; d.svcs.len()],
        }
    }
}

/// Reactive limits of a wind turbine at active output `p`, MVar.
pub fn wt_envelope(s: f64, p: f64) -> Result<(f64, f64)> {
    let tol = 1e-9 * (1.0 + s);
    if p < -tol || p > s + tol {
        return Err(Error::Capability(format!("wind output {p:.4} MW outside [0, {s}]")));
    }
    Ok((1.24 * p - 0.91 * s, -0.58 * p + 0.91 * s))
}

/// Largest |q| a PV plant can provide at active output `p`, MVar.
pub fn pv_q_limit(s: f64, theta_deg: f64, p: f64) -> f64 {
    let circle = (s * s - p * p).max(0.0).sqrt();
    circle.min(p.max(0.0) * theta_deg.to_radians().tan())
}

pub fn pv_feasible(s: f64, theta_deg: f64, p: f64, q: f64) -> bool {
    let tol = 1e-9 * (1.0 + s);
    p >= -tol && p * p + q * q <= s * s + tol && q.abs() <= p * theta_deg.to_radians().tan() + tol
}

/// Advances the storage state of charge by one step, MWh.
pub fn es_step(es: &Storage, p_in: f64, p_out: f64, q: f64, soc_prev: f64, dt: f64) -> Result<f64> {
    let tol = 1e-7 * (1.0 + es.s);
    if p_in < -tol || p_out < -tol {
        return Err(Error::Storage(format!("negative power (in {p_in}, out {p_out})")));
    }
    if p_in > tol && p_out > tol {
        return Err(Error::Storage(format!(
            "simultaneous charge {p_in:.4} MW and discharge {p_out:.4} MW"
        )));
    }
    if p_in > es.p_in_max + tol || p_out > es.p_out_max + tol {
        return Err(Error::Storage(format!("power beyond converter limits (in {p_in}, out {p_out})")));
    }
    if p_in.hypot(q) > es.s + tol || p_out.hypot(q) > es.s + tol {
        return Err(Error::Storage(format!(
            "apparent power exceeds {} MVA (p {:.4}, q {q:.4})",
            es.s,
            p_in.max(p_out)
        )));
    }
    let soc = soc_prev + (es.eta_in * p_in - p_out / es.eta_out) * dt;
    if soc < es.soc_min - tol || soc > es.soc_max + tol {
        return Err(Error::Storage(format!(
            "SOC {soc:.4} MWh outside [{}, {}]",
            es.soc_min, es.soc_max
        )));
    }
    Ok(soc)
}

/// Capacitor output at squared voltage `v_sq`, MVar.
pub fn cb_q(n: u32, v_sq: f64, dq: f64) -> f64 {
    n as f64 * v_sq * dq
}

pub fn cb_switch_feasible(cb: &CapacitorBank, n_prev: u32, n: u32) -> Result<()> {
    if n > cb.n_max {
        return Err(Error::CapacitorBank(format!("{n} banks exceed the {} installed", cb.n_max)));
    }
    if n.abs_diff(n_prev) > cb.n_switch_max {
        return Err(Error::CapacitorBank(format!(
            "switching {n_prev} -> {n} exceeds {} per step",
            cb.n_switch_max
        )));
    }
    Ok(())
}

pub fn svc_feasible(q: f64, q_max: f64) -> bool {
    q.abs() <= q_max + 1e-9
}

/// Net injection per bus (MW, MVar). `v_sq` gives the squared voltage at
/// each bus for the voltage-dependent capacitor output; `load` is the plant
/// demand at the plant bus.
pub fn assemble_injections(
    net: &NetworkModel,
    d: &StepDispatch,
    v_sq: &[f64],
    load: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    let mut inj = vec![(0.0, 0.0); net.n_bus()];
    let dev = &net.devices;
    for (k, w) in dev.wind.iter().enumerate() {
        let j = net.bus_index(w.bus)?;
        inj[j].0 += d.wt_p[k];
        inj[j].1 += d.wt_q[k];
    }
    for (k, w) in dev.pv.iter().enumerate() {
        let j = net.bus_index(w.bus)?;
        inj[j].0 += d.pv_p[k];
        inj[j].1 += d.pv_q[k];
    }
    for (k, w) in dev.storage.iter().enumerate() {
        let j = net.bus_index(w.bus)?;
        inj[j].0 += d.es_p_out[k] - d.es_p_in[k];
        inj[j].1 += d.es_q[k];
    }
    for (k, c) in dev.cap_banks.iter().enumerate() {
        let j = net.bus_index(c.bus)?;
        inj[j].1 += cb_q(d.cb_n[k], v_sq[j], c.dq);
    }
    for (k, c) in dev.svcs.iter().enumerate() {
        let j = net.bus_index(c.bus)?;
        inj[j].1 += d.svc_q[k];
    }
    let j = net.bus_index(net.plant_bus)?;
    inj[j].0 -= load.0;
    inj[j].1 -= load.1;
    Ok(inj)
}

/// Solved network state at one step, per unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridState {
    /// Squared voltage magnitude per bus.
    pub v_sq: Vec<f64>,
    /// Sending-end flows per branch.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Squared current per branch.
    pub l: Vec<f64>,
    /// Net injection per bus.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
}

/// Largest violations of the DistFlow identities, per unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub p_balance: f64,
    pub q_balance: f64,
    pub voltage_drop: f64,
    /// Most negative `l * v_from - (P² + Q²)`, reported as a positive number.
    pub cone_violation: f64,
    /// Largest positive `l * v_from - (P² + Q²)`.
    pub cone_slack: f64,
}

impl Residuals {
    pub fn max_equality(&self) -> f64 {
        self.p_balance.max(self.q_balance).max(self.voltage_drop)
    }
}

impl GridState {
    /// Resistive loss, p.u.
    pub fn loss(&self, net: &NetworkModel) -> f64 {
        net.branches.iter().zip(&self.l).map(|(b, l)| b.r * l).sum()
    }

    /// Loss by double entry: total injection, p.u.
    pub fn injection_balance(&self) -> f64 {
        self.p_inj.iter().sum()
    }

    pub fn residuals(&self, net: &NetworkModel, topo: &Topology) -> Residuals {
        let mut res = Residuals::default();
        for j in 0..net.n_bus() {
            let mut out_p: f64 = topo.children[j]
                .iter()
                .map(|&c| self.p_flow[topo.parent_branch[c].unwrap()])
                .sum();
            let mut out_q: f64 = topo.children[j]
                .iter()
                .map(|&c| self.q_flow[topo.parent_branch[c].unwrap()])
                .sum();
            if let Some(k) = topo.parent_branch[j] {
                let br = &net.branches[k];
                out_p -= self.p_flow[k] - br.r * self.l[k];
                out_q -= self.q_flow[k] - br.x * self.l[k];
            }
            res.p_balance = res.p_balance.max((out_p - self.p_inj[j]).abs());
            res.q_balance = res.q_balance.max((out_q - self.q_inj[j]).abs());
        }
        for (k, br) in net.branches.iter().enumerate() {
            let (i, j) = topo.ends[k];
            let (p, q, l) = (self.p_flow[k], self.q_flow[k], self.l[k]);
            let drop = self.v_sq[i] - 2.0 * (br.r * p + br.x * q) + (br.r * br.r + br.x * br.x) * l;
            res.voltage_drop = res.voltage_drop.max((drop - self.v_sq[j]).abs());
            let gap = l * self.v_sq[i] - (p * p + q * q);
            res.cone_violation = res.cone_violation.max(-gap);
            res.cone_slack = res.cone_slack.max(gap);
        }
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wt_envelope_points() {
        let (lo, hi) = wt_envelope(6.25, 0.0).unwrap();
        assert_relative_eq!(lo, -0.91 * 6.25);
        assert_relative_eq!(hi, 0.91 * 6.25);
        let (lo, hi) = wt_envelope(6.25, 6.25).unwrap();
        assert_relative_eq!(lo, 0.33 * 6.25, max_relative = 1e-12);
        assert_relative_eq!(hi, 0.33 * 6.25, max_relative = 1e-12);
        let (lo, hi) = wt_envelope(6.25, 3.125).unwrap();
        assert_relative_eq!(lo, -1.8125, max_relative = 1e-12);
        assert_relative_eq!(hi, 3.875, max_relative = 1e-12);
        assert!(wt_envelope(6.25, 7.0).is_err());
    }

    #[test]
    fn pv_limits() {
        assert_eq!(pv_q_limit(5.0, 25.8, 0.0), 0.0);
        assert!(pv_q_limit(5.0, 25.8, 5.0).abs() < 1e-12);
        let lim = pv_q_limit(5.0, 25.8, 3.0);
        assert_relative_eq!(lim, 3.0 * 25.8f64.to_radians().tan(), max_relative = 1e-12);
        assert!((lim - 1.45).abs() < 0.005);
        assert!(pv_feasible(5.0, 25.8, 3.0, 1.4));
        assert!(!pv_feasible(5.0, 25.8, 3.0, 1.5));
        assert!(!pv_feasible(5.0, 25.8, 0.0, 0.1));
    }

    fn storage() -> Storage {
        Storage {
            bus: 1,
            s: 3.0,
            p_in_max: 2.5,
            p_out_max: 2.5,
            eta_in: 0.95,
            eta_out: 0.95,
            soc_min: 0.5,
            soc_max: 4.75,
            soc_init: 2.5,
        }
    }

    #[test]
    fn storage_steps() {
        let es = storage();
        assert_eq!(es_step(&es, 0.0, 0.0, 0.0, 2.0, 1.0).unwrap(), 2.0);
        assert_relative_eq!(es_step(&es, 2.5, 0.0, 0.0, 2.0, 1.0).unwrap(), 2.0 + 0.95 * 2.5);
        assert!(es_step(&es, 1.0, 1.0, 0.0, 2.0, 1.0).is_err());
        assert!(es_step(&es, 0.0, 0.0, 3.0, 2.0, 1.0).is_ok());
        assert!(es_step(&es, 0.1, 0.0, 3.0, 2.0, 1.0).is_err());
        assert!(es_step(&es, 0.0, 2.5, 0.0, 0.6, 1.0).is_err());
    }

    #[test]
    fn capacitor_output_and_switching() {
        assert_relative_eq!(cb_q(6, 1.0, 0.5), 3.0);
        assert_relative_eq!(cb_q(6, 0.9025, 0.5), 2.7075, max_relative = 1e-12);
        let cb = CapacitorBank { bus: 7, dq: 0.5, n_max: 6, n_switch_max: 2, n_init: 0 };
        assert!(cb_switch_feasible(&cb, 0, 6).is_err());
        assert!(cb_switch_feasible(&cb, 0, 2).is_ok());
        assert!(cb_switch_feasible(&cb, 6, 7).is_err());
    }

    #[test]
    fn svc_limits() {
        assert!(svc_feasible(0.0, 1.0));
        assert!(svc_feasible(1.0, 1.0) && svc_feasible(-1.0, 1.0));
        assert!(!svc_feasible(1.1, 1.0));
    }

    fn two_bus() -> NetworkModel {
        NetworkModel {
            base_mva: 100.0,
            base_kv: 35.0,
            buses: vec![
                Bus { id: 1, v_min: 0.95, v_max: 1.05 },
                Bus { id: 2, v_min: 0.95, v_max: 1.05 },
            ],
            branches: vec![Branch { from: 2, to: 1, r: 0.01, x: 0.02 }],
            root: 1,
            plant_bus: 2,
            devices: Devices {
                wind: vec![WindTurbine { bus: 2, s: 6.25 }],
                ..Devices::default()
            },
        }
    }

    #[test]
    fn topology_orients_from_root() {
        let net = two_bus();
        let topo = net.topology().unwrap();
        assert_eq!(topo.ends, vec![(0, 1)]);
        assert_eq!(topo.order, vec![0, 1]);
        let mut bad = net.clone();
        bad.branches.push(Branch { from: 1, to: 2, r: 0.0, x: 0.0 });
        assert!(bad.topology().is_err());
    }

    #[test]
    fn injections() {
        let net = two_bus();
        let mut d = StepDispatch::zeros(&net.devices, vec![]);
        let inj = assemble_injections(&net, &d, &[1.0, 1.0], (0.0, 0.0)).unwrap();
        assert!(inj.iter().all(|&(p, q)| p == 0.0 && q == 0.0));
        d.wt_p[0] = 6.25;
        let inj = assemble_injections(&net, &d, &[1.0, 1.0], (0.0, 0.0)).unwrap();
        assert_eq!(inj[1], (6.25, 0.0));
        let mut missing = net.clone();
        missing.devices.wind[0].bus = 42;
        assert!(matches!(
            assemble_injections(&missing, &d, &[1.0, 1.0], (0.0, 0.0)),
            Err(Error::UnknownBus(42))
        ));
    }
}
