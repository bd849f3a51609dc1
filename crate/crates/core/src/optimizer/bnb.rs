//! Branch-and-bound over the LP relaxation with lazy cone cuts and
//! spatial branching on PWL weights.
//!
//! Nodes are explored depth-first until the first incumbent, then by best
//! bound with plunging into the preferred child. A node is an incumbent
//! candidate when every binary is integral, every PWL set is consistent
//! with its triangulated interpolant and every cone is satisfied to
//! `cone_tol`. Given the same seed and node limit the search is
//! deterministic; the time limit only acts as a safety net.

use std::rc::Rc;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::model::{LinExpr, MicpModel, ObjSense, PwlSet, Sense, VarId, VarKind};
use super::pwl::interpolate;
use super::relax::{seed_cuts, tangent_cut, Cut, Node, Relaxation, Solved};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Wall-clock budget.
    pub time_limit: Option<Duration>,
    /// Maximum number of node LPs.
    pub node_limit: usize,
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    pub seed: u64,
    /// Cone violation accepted for an incumbent.
    pub cone_tol: f64,
    pub int_tol: f64,
    /// Cut rounds per node before the node is branched on anyway.
    pub cut_rounds: usize,
    /// Open nodes that keep a warm LP state; the rest are replayed from the
    /// root when selected.
    pub state_cache: usize,
    pub strategy: Strategy,
    /// Largest share of the search time spent in the dive heuristic.
    pub dive_share: f64,
    /// Preferred binary values; the search explores the matching child
    /// first.
    #[serde(skip)]
    pub hints: Vec<(VarId, f64)>,
}

/// Node selection once an incumbent exists. Before that the search always
/// dives depth-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DepthFirst,
    BestBound,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(120)),
            node_limit: 20_000,
            gap: 0.01,
            seed: 7,
            cone_tol: 1e-6,
            int_tol: 1e-6,
            cut_rounds: 25,
            state_cache: 64,
            strategy: Strategy::DepthFirst,
            dive_share: 0.3,
            hints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Search finished with the gap closed to the requested tolerance.
    Optimal,
    /// A limit was hit; the incumbent is feasible but not proven.
    Feasible,
    Infeasible,
    /// A limit was hit before any incumbent was found.
    NoIncumbent,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::NoIncumbent => "no_incumbent",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub lp_solves: usize,
    pub cuts: usize,
    pub incumbents: usize,
    pub max_open: usize,
    pub elapsed_s: f64,
    pub first_incumbent_s: Option<f64>,
    /// Calls of the PWL dive heuristic.
    pub dives: usize,
    /// Node LPs abandoned on numerical grounds.
    pub lp_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicpSolution {
    pub status: Status,
    /// Incumbent variable values, if any.
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Best bound on the optimal objective.
    pub bound: f64,
    pub gap: Option<f64>,
    pub stats: SearchStats,
    /// Model report expressions evaluated at the incumbent.
    pub reports: Vec<(String, f64)>,
}

impl MicpSolution {
    pub fn report(&self, name: &str) -> Option<f64> {
        self.reports.iter().find(|(n, _)| n == name).map(|r| r.1)
    }
}

/// Relative gap between a bound and an incumbent, both in maximize form.
pub fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

#[derive(Debug, Clone)]
enum Action {
    Fix(VarId, f64),
    /// Forces the listed weights to zero with one row.
    Zero(Vec<VarId>),
}

struct Link {
    action: Action,
    parent: Option<Rc<Link>>,
}

/// An unexplored child: the branching path that leads to it, the parent
/// bound and, while cached, the parent's warm LP state.
struct Open {
    path: Option<Rc<Link>>,
    /// Parent bound in maximize form.
    bound: f64,
    state: Option<Node>,
}

enum Branch {
    Binary(VarId, f64),
    Pwl(Action, Action),
}

struct Search<'a> {
    model: &'a MicpModel,
    rel: Relaxation,
    opts: SolveOptions,
    sign: f64,
    pool: Vec<Cut>,
    stats: SearchStats,
    start: Instant,
    incumbent: Option<(f64, Vec<f64>)>,
    /// Binary variables with their priorities, in a seeded order.
    binaries: Vec<(VarId, i32)>,
    hint: Vec<Option<f64>>,
    dive_time: Duration,
    /// Best bound among subtrees dropped after LP failures.
    lost: f64,
}

impl<'a> Search<'a> {
    fn out_of_time(&self) -> bool {
        self.opts.time_limit.is_some_and(|t| self.start.elapsed() >= t)
    }

    fn score(&self, node: &Node) -> f64 {
        self.sign * node.objective()
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => relative_gap(bound, *inc) <= self.opts.gap,
            None => false,
        }
    }

    /// Child node after `action`, or `None` if it is infeasible.
    fn apply(&mut self, node: Node, action: &Action) -> Result<Option<Node>> {
        self.stats.lp_solves += 1;
        let bound = self.score(&node);
        let r = match action {
            Action::Fix(v, val) => self.rel.fix(node, *v, *val),
            Action::Zero(vs) => {
                let mut e = LinExpr::new();
                for &v in vs {
                    e.add(v, 1.0);
                }
                self.rel.add_row(node, &e, Sense::Le, 0.0)
            }
        }?;
        Ok(self.outcome(bound, r))
    }

    fn add_cut(&mut self, node: Node, cut: &Cut) -> Result<Option<Node>> {
        self.stats.lp_solves += 1;
        let bound = self.score(&node);
        let r = self.rel.add_cut(node, cut)?;
        Ok(self.outcome(bound, r))
    }

    /// An LP the engine could not finish drops its subtree; the parent
    /// bound is kept so the final bound and status stay honest.
    fn outcome(&mut self, bound: f64, r: Solved) -> Option<Node> {
        match r {
            Solved::Node(n) => Some(n),
            Solved::Infeasible => None,
            Solved::Failed(msg) => {
                warn!("node LP failed ({msg}); subtree dropped");
                self.stats.lp_failures += 1;
                self.lost = self.lost.max(bound);
                None
            }
        }
    }

    /// Adds tangent cuts until cones hold to `tol`, the round limit is hit
    /// or the node is pruned by bound.
    fn cut_loop(&mut self, mut node: Node, tol: f64, rounds: usize) -> Result<Option<Node>> {
        // Pool cuts first: they were found elsewhere in the tree and are
        // usually binding here too.
        let x = node.values().to_vec();
        let pending: Vec<Cut> = self.pool.iter().filter(|c| c.violation(&x) > tol).cloned().collect();
        for cut in &pending {
            if cut.violation(node.values()) <= tol {
                continue;
            }
            match self.add_cut(node, cut)? {
                Some(n) => node = n,
                None => return Ok(None),
            }
        }
        for _ in 0..rounds {
            if self.prunable(self.score(&node)) || self.out_of_time() {
                break;
            }
            let x = node.values().to_vec();
            let cuts: Vec<Cut> = self
                .model
                .cones
                .iter()
                .filter(|c| c.violation(&x) > tol)
                .filter_map(|c| tangent_cut(c, &x))
                .collect();
            if cuts.is_empty() {
                break;
            }
            for cut in cuts {
                self.stats.cuts += 1;
                match self.add_cut(node, &cut)? {
                    Some(n) => node = n,
                    None => return Ok(None),
                }
                self.pool.push(cut);
            }
        }
        Ok(Some(node))
    }

    fn choose_binary(&self, x: &[f64]) -> Option<(VarId, f64)> {
        let tol = self.opts.int_tol;
        let mut best: Option<(i32, f64, VarId, f64)> = None;
        for &(v, prio) in &self.binaries {
            let f = x[v.0];
            let frac = (f - f.floor()).min(f.ceil() - f);
            if frac <= tol {
                continue;
            }
            let better = match best {
                None => true,
                Some((p, fr, _, _)) => prio > p || (prio == p && frac > fr + 1e-9),
            };
            if better {
                best = Some((prio, frac, v, f));
            }
        }
        best.map(|(_, _, v, f)| (v, f))
    }

    fn choose_pwl(&self, x: &[f64]) -> Option<(Action, Action)> {
        let mut worst: Option<(f64, usize)> = None;
        for (k, set) in self.model.pwl.iter().enumerate() {
            let excess = pwl_excess(set, x);
            if excess > 0.0 && worst.is_none_or(|(e, _)| excess > e) {
                worst = Some((excess, k));
            }
        }
        worst.map(|(_, k)| pwl_branch(&self.model.pwl[k], x))
    }

    fn branch(&self, node: &Node) -> Option<Branch> {
        let x = node.values();
        if let Some((v, f)) = self.choose_binary(x) {
            return Some(Branch::Binary(v, f));
        }
        self.choose_pwl(x).map(|(a, b)| Branch::Pwl(a, b))
    }

    fn accept(&mut self, node: Node) -> Result<()> {
        // Polish the cones before recording the point.
        let node = match self.cut_loop(node, self.opts.cone_tol * 0.1, 60)? {
            Some(n) => n,
            None => return Ok(()),
        };
        let x = node.values();
        if self.model.max_cone_violation(x) > self.opts.cone_tol
            || self.choose_binary(x).is_some()
            || self.choose_pwl(x).is_some()
        {
            debug!(
                "candidate rejected: cone {:.2e}, binary {}, pwl {}",
                self.model.max_cone_violation(x),
                self.choose_binary(x).is_some(),
                self.choose_pwl(x).is_some()
            );
            return Ok(());
        }
        let val = self.score(&node);
        if self.incumbent.as_ref().is_none_or(|(inc, _)| val > *inc) {
            self.stats.incumbents += 1;
            if self.stats.first_incumbent_s.is_none() {
                self.stats.first_incumbent_s = Some(self.start.elapsed().as_secs_f64());
            }
            info!(
                "incumbent {:.3} at node {} ({:.1} s)",
                self.sign * val,
                self.stats.nodes,
                self.start.elapsed().as_secs_f64()
            );
            self.incumbent = Some((val, x.to_vec()));
        }
        Ok(())
    }

    /// Primal heuristic: pins every active PWL set to the triangle around
    /// its current point, so the interpolation is exact, and re-solves.
    fn cell_dive(&mut self, node: &Node, path: &Option<Rc<Link>>) -> Result<()> {
        // Failed LPs inside a dive lose nothing of the tree.
        let lost = self.lost;
        let started = Instant::now();
        let r = self.dive(node, path);
        self.dive_time += started.elapsed();
        self.lost = lost;
        r
    }

    fn dive(&mut self, node: &Node, path: &Option<Rc<Link>>) -> Result<()> {
        self.stats.dives += 1;
        let x = node.values().to_vec();
        // Binaries are integral here but would drift once the weights are
        // pinned, so they are fixed first. Sets are then pinned one at a
        // time from the current solution, which lets later steps follow
        // the temperatures that earlier pins produce.
        let mut fixed = vec![false; self.model.vars.len()];
        let mut cur = path.clone();
        while let Some(l) = cur {
            if let Action::Fix(v, _) = l.action {
                fixed[v.0] = true;
            }
            cur = l.parent.clone();
        }
        let fixes: Vec<Action> = self
            .binaries
            .iter()
            .filter(|(v, _)| !fixed[v.0] && self.model.vars[v.0].lb < self.model.vars[v.0].ub)
            .map(|&(v, _)| Action::Fix(v, x[v.0].round()))
            .collect();
        let mut n = node.clone();
        for k in 0..fixes.len() + self.model.pwl.len() {
            if self.out_of_time() {
                return Ok(());
            }
            let action = match fixes.get(k) {
                Some(a) => a.clone(),
                None => {
                    let set = &self.model.pwl[k - fixes.len()];
                    match triangle_restriction(set, n.values()) {
                        Some(a) => a,
                        None => continue,
                    }
                }
            };
            match self.apply(n, &action)? {
                Some(m) => n = m,
                None => {
                    debug!("dive infeasible at step {k}");
                        return Ok(());
                }
            }
        }
        if let Some(n) = self.cut_loop(n, self.opts.cone_tol, self.opts.cut_rounds)? {
            self.accept(n)?;
        }
        Ok(())
    }

    /// Whether the dive heuristic may run now: it is capped at a share of
    /// the elapsed search time.
    fn dive_allowed(&self) -> bool {
        self.dive_time.as_secs_f64() <= self.opts.dive_share * self.start.elapsed().as_secs_f64().max(1.0)
    }

    /// Re-creates a node whose warm state was evicted by replaying its
    /// branching path from the root.
    fn rebuild(&mut self, root: &Node, path: &Option<Rc<Link>>) -> Result<Option<Node>> {
        let mut actions = Vec::new();
        let mut cur = path.clone();
        while let Some(l) = cur {
            actions.push(l.action.clone());
            cur = l.parent.clone();
        }
        let mut node = root.clone();
        for a in actions.iter().rev() {
            match self.apply(node, a)? {
                Some(n) => node = n,
                None => return Ok(None),
            }
        }
        node.depth = actions.len();
        Ok(Some(node))
    }

    fn pick(&self, open: &[Open]) -> Option<usize> {
        if open.is_empty() {
            return None;
        }
        if self.incumbent.is_none() || self.opts.strategy == Strategy::DepthFirst {
            return Some(open.len() - 1);
        }
        open.iter()
            .enumerate()
            .max_by(|a, b| a.1.bound.total_cmp(&b.1.bound).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
    }

    fn run(&mut self, root: Node) -> Result<(Status, f64)> {
        let root = match self.cut_loop(root, self.opts.cone_tol, self.opts.cut_rounds)? {
            Some(n) => n,
            None => return Ok((Status::Infeasible, f64::NEG_INFINITY)),
        };
        let mut open: Vec<Open> = Vec::new();
        let mut cached = 0usize;
        let mut current: Option<(Node, Option<Rc<Link>>)> = Some((root.clone(), None));
        let mut exhausted = true;
        loop {
            let (node, path) = match current.take() {
                Some(n) => n,
                None => {
                    let Some(k) = self.pick(&open) else { break };
                    let o = open.remove(k);
                    if o.state.is_some() {
                        cached -= 1;
                    }
                    if self.prunable(o.bound) {
                        continue;
                    }
                    if self.stats.nodes >= self.opts.node_limit || self.out_of_time() {
                        open.push(o);
                        exhausted = false;
                        break;
                    }
                    let link = o.path.clone().expect("open nodes carry a branching path");
                    let solved = match o.state {
                        Some(parent) => {
                            let depth = parent.depth + 1;
                            match self.apply(parent, &link.action)? {
                                Some(mut n) => {
                                    n.depth = depth;
                                    Some(n)
                                }
                                None => None,
                            }
                        }
                        None => self.rebuild(&root, &o.path)?,
                    };
                    match solved {
                        Some(n) => (n, o.path),
                        None => continue,
                    }
                }
            };
            self.stats.nodes += 1;
            if self.stats.nodes % 50 == 0 {
                debug!(
                    "node {} depth {} open {} bound {:.3} incumbent {:?}",
                    self.stats.nodes,
                    node.depth,
                    open.len(),
                    self.sign * self.score(&node),
                    self.incumbent.as_ref().map(|i| self.sign * i.0)
                );
            }
            let Some(node) = self.cut_loop(node, self.opts.cone_tol, self.opts.cut_rounds)? else {
                continue;
            };
            let bound = self.score(&node);
            if self.prunable(bound) {
                continue;
            }
            let Some(br) = self.branch(&node) else {
                self.accept(node)?;
                continue;
            };
            // First PWL branching below a commitment: try to complete it
            // directly before splitting.
            if matches!(br, Branch::Pwl(..))
                && path.as_ref().is_none_or(|l| matches!(l.action, Action::Fix(..)))
                && self.dive_allowed()
            {
                self.cell_dive(&node, &path)?;
                if self.prunable(bound) {
                    continue;
                }
            }
            let (near, far) = match br {
                Branch::Binary(v, f) => {
                    let up = self.hint[v.0].map_or(f >= 0.5, |h| h >= 0.5);
                    let (a, b) = if up { (1.0, 0.0) } else { (0.0, 1.0) };
                    (Action::Fix(v, a), Action::Fix(v, b))
                }
                Branch::Pwl(a, b) => (a, b),
            };
            let child = |action: Action| Some(Rc::new(Link { action, parent: path.clone() }));
            let stop = self.stats.nodes >= self.opts.node_limit || self.out_of_time();
            open.push(Open { path: child(far), bound, state: Some(node.clone()) });
            cached += 1;
            if stop {
                open.push(Open { path: child(near), bound, state: None });
                exhausted = false;
                break;
            }
            // Keep warm states only for the most recent entries.
            while cached > self.opts.state_cache {
                if let Some(o) = open.iter_mut().find(|o| o.state.is_some()) {
                    o.state = None;
                }
                cached -= 1;
            }
            self.stats.max_open = self.stats.max_open.max(open.len());
            let depth = node.depth + 1;
            let near_path = child(near);
            let action = near_path.as_ref().unwrap().action.clone();
            if let Some(mut n) = self.apply(node, &action)? {
                n.depth = depth;
                current = Some((n, near_path));
            }
        }
        let open_bound = open
            .iter()
            .filter(|o| !self.prunable(o.bound))
            .map(|o| o.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let open_bound = if self.prunable(self.lost) { open_bound } else { open_bound.max(self.lost) };
        let exhausted = exhausted && (self.lost == f64::NEG_INFINITY || self.prunable(self.lost));
        let bound = match &self.incumbent {
            Some((inc, _)) => open_bound.max(*inc),
            None => open_bound,
        };
        let status = match (&self.incumbent, exhausted) {
            (Some(_), true) => Status::Optimal,
            (Some((inc, _)), false) if relative_gap(bound, *inc) <= self.opts.gap => Status::Optimal,
            (Some(_), false) => Status::Feasible,
            (None, true) => Status::Infeasible,
            (None, false) => Status::NoIncumbent,
        };
        Ok((status, bound))
    }
}

/// Largest gap, relative to each column's tolerance, between the weighted
/// column values and the interpolant at the weighted point. Zero when the
/// set is consistent or switched off.
pub fn pwl_excess(set: &PwlSet, x: &[f64]) -> f64 {
    let nt = set.nt();
    let total: f64 = set.weights.iter().map(|v| x[v.0]).sum();
    if total < 1e-9 {
        return 0.0;
    }
    let (mut ib, mut tb) = (0.0, 0.0);
    for (k, v) in set.weights.iter().enumerate() {
        ib += x[v.0] * set.i_coords[k / nt];
        tb += x[v.0] * set.t_coords[k % nt];
    }
    let (ib, tb) = (ib / total, tb / total);
    let mut worst: f64 = 0.0;
    for col in &set.columns {
        let mixed: f64 = set.weights.iter().zip(&col.values).map(|(v, c)| x[v.0] * c).sum::<f64>() / total;
        let exact = interpolate(&set.i_coords, &set.t_coords, &col.values, ib, tb);
        let excess = (mixed - exact).abs() / col.tolerance - 1.0;
        worst = worst.max(excess);
    }
    worst
}

/// Index of the grid cell holding `v`, clamped to the grid.
fn locate(coords: &[f64], v: f64) -> usize {
    let last = coords.len() - 2;
    coords.windows(2).position(|w| v <= w[1]).unwrap_or(last).min(last)
}

/// Zeroes every weight of `set` outside the interpolation triangle that
/// holds its weighted point. `None` if the set carries no weight.
fn triangle_restriction(set: &PwlSet, x: &[f64]) -> Option<Action> {
    let (ni, nt) = (set.ni(), set.nt());
    let total: f64 = set.weights.iter().map(|v| x[v.0]).sum();
    if total < 1e-9 || ni < 2 || nt < 2 {
        return None;
    }
    let (mut ib, mut tb) = (0.0, 0.0);
    for (k, v) in set.weights.iter().enumerate() {
        ib += x[v.0] * set.i_coords[k / nt];
        tb += x[v.0] * set.t_coords[k % nt];
    }
    let (ib, tb) = (ib / total, tb / total);
    let a = locate(&set.i_coords, ib);
    let b = locate(&set.t_coords, tb);
    let u = (ib - set.i_coords[a]) / (set.i_coords[a + 1] - set.i_coords[a]);
    let w = (tb - set.t_coords[b]) / (set.t_coords[b + 1] - set.t_coords[b]);
    let off = if u >= w { (a, b + 1) } else { (a + 1, b) };
    let mut vs = Vec::new();
    for p in 0..ni {
        for q in 0..nt {
            let in_rect = (p == a || p == a + 1) && (q == b || q == b + 1);
            if !in_rect || (p, q) == off {
                vs.push(set.weight(p, q));
            }
        }
    }
    Some(Action::Zero(vs))
}

/// Two children that exclude the current mixed weights of `set`.
fn pwl_branch(set: &PwlSet, x: &[f64]) -> (Action, Action) {
    let (ni, nt) = (set.ni(), set.nt());
    let tol = 1e-9;
    let w = |a: usize, b: usize| x[set.weight(a, b).0];
    let rows: Vec<f64> = (0..ni).map(|a| (0..nt).map(|b| w(a, b)).sum()).collect();
    let cols: Vec<f64> = (0..nt).map(|b| (0..ni).map(|a| w(a, b)).sum()).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().position(|&s| s > tol).unwrap_or(0);
        let hi = v.iter().rposition(|&s| s > tol).unwrap_or(0);
        (lo, hi)
    };
    let total: f64 = rows.iter().sum();
    let (ilo, ihi) = span(&rows);
    let (tlo, thi) = span(&cols);
    // Split at the breakpoint nearest the weighted position, kept strictly
    // inside the support so both children cut off the current point.
    let split = |v: &[f64], lo: usize, hi: usize| {
        let mean = v.iter().enumerate().map(|(k, s)| k as f64 * s).sum::<f64>() / total;
        (mean.round() as usize).clamp(lo + 1, hi - 1)
    };
    let zero = |keep: &dyn Fn(usize, usize) -> bool| {
        let mut vs = Vec::new();
        for a in 0..ni {
            for b in 0..nt {
                if !keep(a, b) {
                    vs.push(set.weight(a, b));
                }
            }
        }
        Action::Zero(vs)
    };
    // The side holding more of the current weight is explored first.
    let order = |lo: Action, hi: Action, v: &[f64], r: usize| {
        let below: f64 = v[..r].iter().sum();
        let above: f64 = v[r + 1..].iter().sum();
        if below >= above {
            (lo, hi)
        } else {
            (hi, lo)
        }
    };
    if ihi >= ilo + 2 {
        let r = split(&rows, ilo, ihi);
        return order(zero(&|a, _| a <= r), zero(&|a, _| a >= r), &rows, r);
    }
    if thi >= tlo + 2 {
        let r = split(&cols, tlo, thi);
        return order(zero(&|_, b| b <= r), zero(&|_, b| b >= r), &cols, r);
    }
    // Support inside one rectangle: pick a triangle. Also drop everything
    // outside the rectangle, which is already zero.
    let (a, b) = (ilo, tlo);
    let in_rect = move |p: usize, q: usize| (p == a || p == a + 1) && (q == b || q == b + 1);
    let lower = zero(&|p, q| in_rect(p, q) && !(p == a && q == b + 1));
    let upper = zero(&|p, q| in_rect(p, q) && !(p == a + 1 && q == b));
    if ihi == ilo || thi == tlo {
        // Degenerate support on an edge: both triangles contain it, so the
        // mismatch can only come from weights not summing to one.
        return (lower, upper);
    }
    if w(a + 1, b) >= w(a, b + 1) {
        (lower, upper)
    } else {
        (upper, lower)
    }
}

/// Solves `model` by branch-and-bound.
pub fn solve(model: &MicpModel, opts: &SolveOptions) -> Result<MicpSolution> {
    model.check()?;
    let start = Instant::now();
    let sign = match model.sense {
        ObjSense::Maximize => 1.0,
        ObjSense::Minimize => -1.0,
    };
    let (rel, root) = Relaxation::root(model, &seed_cuts(model))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut binaries: Vec<(VarId, i32)> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(k, v)| (VarId(k), v.priority))
        .collect();
    binaries.shuffle(&mut rng);
    let mut hint = vec![None; model.vars.len()];
    for &(v, val) in &opts.hints {
        if let Some(h) = hint.get_mut(v.0) {
            *h = Some(val);
        }
    }
    let mut search = Search {
        model,
        rel,
        opts: opts.clone(),
        sign,
        pool: Vec::new(),
        stats: SearchStats { lp_solves: 1, ..Default::default() },
        start,
        incumbent: None,
        binaries,
        hint,
        dive_time: Duration::ZERO,
        lost: f64::NEG_INFINITY,
    };
    let (status, bound) = match root {
        Solved::Infeasible => (Status::Infeasible, f64::NEG_INFINITY),
        Solved::Failed(msg) => return Err(crate::error::Error::Solver(format!("root LP: {msg}"))),
        Solved::Node(root) => search.run(root)?,
    };
    search.stats.elapsed_s = start.elapsed().as_secs_f64();
    let (objective, values, gap) = match search.incumbent.take() {
        Some((val, x)) => (Some(sign * val), Some(x), Some(relative_gap(bound, val))),
        None => (None, None, None),
    };
    let reports = match &values {
        Some(x) => model.reports.iter().map(|(n, e)| (n.clone(), e.eval(x))).collect(),
        None => Vec::new(),
    };
    info!(
        "{status}: objective {objective:?}, bound {:.3}, {} nodes, {} LP solves, {:.1} s",
        sign * bound,
        search.stats.nodes,
        search.stats.lp_solves,
        search.stats.elapsed_s
    );
    Ok(MicpSolution {
        status,
        values,
        objective,
        bound: sign * bound,
        gap,
        stats: search.stats,
        reports,
    })
}
