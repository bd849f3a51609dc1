//! Solver-agnostic mixed-integer convex model: bounded variables, linear
//! rows, second-order cones and piecewise-linear weight sets.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    /// Higher values are branched on first.
    pub priority: i32,
}

/// Affine expression `sum(coef * var) + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    /// Builder form of [`LinExpr::add`].
    pub fn with(mut self, v: VarId, c: f64) -> Self {
        self.add(v, c);
        self
    }

    pub fn add(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_expr(&mut self, e: &LinExpr, scale: f64) {
        for &(v, c) in &e.terms {
            self.add(v, c * scale);
        }
        self.constant += e.constant * scale;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { terms: out, constant: self.constant }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// `expr (sense) rhs`, with any constant of `expr` folded into `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.expr.eval(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `||tail||_2 <= head`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cone {
    pub name: String,
    pub head: LinExpr,
    pub tail: Vec<LinExpr>,
    /// Number of evenly spaced tangent directions added up front. Useful for
    /// capability circles with a constant head.
    pub seed_directions: usize,
}

impl Cone {
    /// `||tail|| - head` at `x`; positive when violated.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.tail.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        norm - self.head.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwlColumn {
    pub name: String,
    /// Value at each breakpoint, indexed like the weights.
    pub values: Vec<f64>,
    /// Largest accepted gap between the weighted sum and the triangulated
    /// interpolant at the weighted point.
    pub tolerance: f64,
}

/// Convex-combination weights over a triangulated (I, T) grid.
///
/// Weight `a * nt + b` belongs to breakpoint `(i_coords[a], t_coords[b])`.
/// Each rectangle is split along its main diagonal, so a valid support lies
/// in `{(a,b), (a+1,b), (a+1,b+1)}` or `{(a,b), (a,b+1), (a+1,b+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwlSet {
    pub name: String,
    pub i_coords: Vec<f64>,
    pub t_coords: Vec<f64>,
    pub weights: Vec<VarId>,
    pub columns: Vec<PwlColumn>,
}

impl PwlSet {
    pub fn ni(&self) -> usize {
        self.i_coords.len()
    }

    pub fn nt(&self) -> usize {
        self.t_coords.len()
    }

    pub fn weight(&self, a: usize, b: usize) -> VarId {
        self.weights[a * self.nt() + b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub variables: usize,
    pub binaries: usize,
    pub rows: usize,
    pub cones: usize,
    pub pwl_sets: usize,
    pub pwl_weights: usize,
    pub nonzeros: usize,
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} variables ({} binary), {} rows, {} cones, {} PWL sets ({} weights), {} nonzeros",
            self.variables, self.binaries, self.rows, self.cones, self.pwl_sets, self.pwl_weights, self.nonzeros
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicpModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub cones: Vec<Cone>,
    pub pwl: Vec<PwlSet>,
    pub sense: ObjSense,
    pub objective: LinExpr,
    /// Named expressions evaluated on the solution (for instance the profit
    /// without regularization terms).
    pub reports: Vec<(String, LinExpr)>,
}

impl MicpModel {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            vars: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
            pwl: Vec::new(),
            sense,
            objective: LinExpr::new(),
            reports: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            kind: VarKind::Continuous,
            lb,
            ub,
            priority: 0,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, priority: i32) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
            priority,
        });
        VarId(self.vars.len() - 1)
    }

    /// Adds `expr (sense) rhs`; the constant part of `expr` moves to the
    /// right-hand side.
    pub fn add_row(&mut self, name: impl Into<String>, expr: LinExpr, sense: Sense, rhs: f64) {
        let expr = expr.compact();
        let rhs = rhs - expr.constant;
        self.rows.push(Row {
            name: name.into(),
            expr: LinExpr { terms: expr.terms, constant: 0.0 },
            sense,
            rhs,
        });
    }

    pub fn add_cone(&mut self, name: impl Into<String>, head: LinExpr, tail: Vec<LinExpr>, seed_directions: usize) {
        self.cones.push(Cone {
            name: name.into(),
            head: head.compact(),
            tail: tail.into_iter().map(|e| e.compact()).collect(),
            seed_directions,
        });
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(k, _)| VarId(k))
    }

    pub fn report(&self, name: &str) -> Option<&LinExpr> {
        self.reports.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            variables: self.vars.len(),
            binaries: self.binaries().count(),
            rows: self.rows.len(),
            cones: self.cones.len(),
            pwl_sets: self.pwl.len(),
            pwl_weights: self.pwl.iter().map(|s| s.weights.len()).sum(),
            nonzeros: self.rows.iter().map(|r| r.expr.terms.len()).sum(),
        }
    }

    /// Structural checks: declared variables only, ordered bounds, cones
    /// with at least two terms, consistent PWL tables.
    pub fn check(&self) -> Result<()> {
        let n = self.vars.len();
        let mut problems = Vec::new();
        let in_range = |e: &LinExpr| e.terms.iter().all(|(v, _)| v.0 < n);
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                problems.push(format!("variable {}: bounds [{}, {}] are empty", v.name, v.lb, v.ub));
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                problems.push(format!("binary {} has bounds outside [0, 1]", v.name));
            }
        }
        for r in &self.rows {
            if !in_range(&r.expr) || !r.rhs.is_finite() {
                problems.push(format!("row {}: undeclared variable or non-finite rhs", r.name));
            }
        }
        for c in &self.cones {
            if !in_range(&c.head) || !c.tail.iter().all(in_range) {
                problems.push(format!("cone {}: undeclared variable", c.name));
            }
            if c.tail.is_empty() {
                problems.push(format!("cone {}: needs at least two terms", c.name));
            }
        }
        for s in &self.pwl {
            let k = s.ni() * s.nt();
            if s.weights.len() != k || s.columns.iter().any(|c| c.values.len() != k) {
                problems.push(format!("pwl {}: table sizes do not match the grid", s.name));
            }
            if s.weights.iter().any(|v| v.0 >= n) {
                problems.push(format!("pwl {}: undeclared weight", s.name));
            }
        }
        if !in_range(&self.objective) {
            problems.push("objective: undeclared variable".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Model(problems.join("; ")))
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest row violation at `x`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }

    /// Largest cone violation at `x`.
    pub fn max_cone_violation(&self, x: &[f64]) -> f64 {
        self.cones.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    /// Largest bound violation at `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lb - xi).max(xi - v.ub).max(0.0))
            .fold(0.0, f64::max)
    }
}
