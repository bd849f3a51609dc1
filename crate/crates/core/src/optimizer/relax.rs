//! Continuous relaxation of a [`MicpModel`] on top of `microlp`.
//!
//! Binaries are relaxed to [0, 1], cones are replaced by tangent cuts added
//! on demand and PWL weights are free convex combinations. A [`Node`] owns a
//! warm simplex state, so branching is a matter of cloning it and applying
//! a fix or an extra row.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::error::{Error, Result};

use super::model::{Cone, LinExpr, MicpModel, ObjSense, Sense, VarId};

fn op(s: Sense) -> ComparisonOp {
    match s {
        Sense::Le => ComparisonOp::Le,
        Sense::Ge => ComparisonOp::Ge,
        Sense::Eq => ComparisonOp::Eq,
    }
}

/// Linear cut `expr <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub expr: LinExpr,
    pub rhs: f64,
}

impl Cut {
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.expr.eval(x) - self.rhs
    }
}

/// Tangent cut of `||tail|| <= head` at `x`, or `None` at the apex.
pub fn tangent_cut(cone: &Cone, x: &[f64]) -> Option<Cut> {
    let u: Vec<f64> = cone.tail.iter().map(|e| e.eval(x)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    Some(direction_cut(cone, &u.iter().map(|v| v / norm).collect::<Vec<_>>()))
}

/// `sum(d_k * tail_k) - head <= 0` for a unit direction `d`.
pub fn direction_cut(cone: &Cone, d: &[f64]) -> Cut {
    let mut e = LinExpr::new();
    for (t, &dk) in cone.tail.iter().zip(d) {
        e.add_expr(t, dk);
    }
    e.add_expr(&cone.head, -1.0);
    let e = e.compact();
    Cut {
        rhs: -e.constant,
        expr: LinExpr { terms: e.terms, constant: 0.0 },
    }
}

/// Evenly spaced tangent cuts for two-term cones with `seed_directions > 0`.
pub fn seed_cuts(model: &MicpModel) -> Vec<Cut> {
    let mut out = Vec::new();
    for c in &model.cones {
        if c.seed_directions == 0 || c.tail.len() != 2 {
            continue;
        }
        let k = c.seed_directions;
        for j in 0..k {
            let a = std::f64::consts::TAU * j as f64 / k as f64;
            out.push(direction_cut(c, &[a.cos(), a.sin()]));
        }
    }
    out
}

fn terms(e: &LinExpr, vars: &[microlp::Variable]) -> Vec<(microlp::Variable, f64)> {
    e.terms.iter().map(|&(v, c)| (vars[v.0], c)).collect()
}

fn lp_err(e: microlp::Error) -> Error {
    Error::Solver(e.to_string())
}

/// Outcome of a node LP.
pub enum Solved {
    Node(Node),
    Infeasible,
    /// The LP engine gave up on numerical grounds; nothing is known about
    /// the node.
    Failed(String),
}

/// A solved relaxation with its local fixes and rows.
#[derive(Clone)]
pub struct Node {
    sol: microlp::Solution,
    x: Vec<f64>,
    obj: f64,
    pub depth: usize,
    /// Number of simplex re-solves spent on this node's lineage.
    pub solves: usize,
}

impl Node {
    pub fn values(&self) -> &[f64] {
        &self.x
    }

    /// Objective of the relaxation in the model's own sense.
    pub fn objective(&self) -> f64 {
        self.obj
    }
}

/// Variable map between the model and the LP engine.
pub struct Relaxation {
    vars: Vec<microlp::Variable>,
    n: usize,
    sense: ObjSense,
    objective: LinExpr,
}

impl Relaxation {
    /// Builds and solves the root relaxation with the given initial cuts.
    pub fn root(model: &MicpModel, cuts: &[Cut]) -> Result<(Self, Solved)> {
        let dir = match model.sense {
            ObjSense::Maximize => OptimizationDirection::Maximize,
            ObjSense::Minimize => OptimizationDirection::Minimize,
        };
        let obj = model.objective.compact();
        let mut coef = vec![0.0; model.vars.len()];
        for &(v, c) in &obj.terms {
            coef[v.0] += c;
        }
        let mut p = Problem::new(dir);
        let vars: Vec<_> = model
            .vars
            .iter()
            .zip(&coef)
            .map(|(v, &c)| p.add_var(c, (v.lb, v.ub)))
            .collect();
        for r in &model.rows {
            p.add_constraint(terms(&r.expr, &vars), op(r.sense), r.rhs);
        }
        for c in cuts {
            p.add_constraint(terms(&c.expr, &vars), ComparisonOp::Le, c.rhs);
        }
        let rel = Self {
            vars,
            n: model.vars.len(),
            sense: model.sense,
            objective: obj,
        };
        let solved = match p.solve() {
            Ok(out) => rel.wrap(out, 0, 1)?,
            Err(microlp::Error::Infeasible) => Solved::Infeasible,
            Err(e) => return Err(lp_err(e)),
        };
        Ok((rel, solved))
    }

    fn wrap(&self, out: SolveOutcome, depth: usize, solves: usize) -> Result<Solved> {
        let sol = out
            .into_solution()
            .map_err(|_| Error::Solver("LP interrupted".into()))?;
        let x: Vec<f64> = (0..self.n).map(|k| sol.var_value_raw(self.vars[k])).collect();
        let obj = self.objective.eval(&x);
        Ok(Solved::Node(Node { sol, x, obj, depth, solves }))
    }

    fn finish(&self, r: std::result::Result<SolveOutcome, microlp::Error>, depth: usize, solves: usize) -> Result<Solved> {
        match r {
            Ok(out) => self.wrap(out, depth, solves),
            Err(microlp::Error::Infeasible) => Ok(Solved::Infeasible),
            Err(e @ microlp::Error::InternalError(_)) => Ok(Solved::Failed(e.to_string())),
            Err(e) => Err(lp_err(e)),
        }
    }

    /// Fixes a variable and re-solves.
    ///
    /// microlp's dual pivot finds no entering column when a basic variable is
    /// fixed at (almost) its current value and then reports infeasibility, so
    /// that case is pinned with an equality row instead.
    pub fn fix(&self, node: Node, v: VarId, val: f64) -> Result<Solved> {
        let (d, s) = (node.depth, node.solves + 1);
        if (node.x[v.0] - val).abs() <= 1e-7 {
            let r = node.sol.add_constraint([(self.vars[v.0], 1.0)], ComparisonOp::Eq, val);
            return self.finish(r, d, s);
        }
        self.finish(node.sol.fix_var(self.vars[v.0], val), d, s)
    }

    /// Adds `expr (sense) rhs` and re-solves.
    pub fn add_row(&self, node: Node, expr: &LinExpr, sense: Sense, rhs: f64) -> Result<Solved> {
        let (d, s) = (node.depth, node.solves + 1);
        let e = expr.compact();
        self.finish(node.sol.add_constraint(terms(&e, &self.vars), op(sense), rhs - e.constant), d, s)
    }

    pub fn add_cut(&self, node: Node, cut: &Cut) -> Result<Solved> {
        self.add_row(node, &cut.expr, Sense::Le, cut.rhs)
    }

    pub fn sense(&self) -> ObjSense {
        self.sense
    }
}
