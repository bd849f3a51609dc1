//! Plain-text dump of a [`MicpModel`] in an LP-like layout, for debugging.
//!
//! ```text
//! \ <stats line>
//! Maximize
//!  obj: 3 x1 - 2 x2 + 5
//! Subject To
//!  row_name: x1 + x2 <= 4
//! Cones
//!  cone_name: || x3, 2 x4 - 1 || <= x5
//! PWL
//!  set_name: i = [0, 6, 12] t = [20, 50, 80]
//!   column: v0 v1 ... (tol 0.01)
//!   weights: w_0_0 w_0_1 ...
//! Bounds
//!  0 <= x1 <= 1
//! Binaries
//!  b1 b2
//! End
//! ```
//!
//! Weight vectors are listed row-major over (current, temperature), like
//! [`PwlSet::weight`](super::model::PwlSet::weight).

use std::fmt::Write;

use super::model::{LinExpr, MicpModel, ObjSense, VarKind};

fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn expr(m: &MicpModel, e: &LinExpr) -> String {
    let e = e.compact();
    let mut s = String::new();
    for (k, &(v, c)) in e.terms.iter().enumerate() {
        let name = &m.vars[v.0].name;
        let sign = if c < 0.0 { "-" } else { "+" };
        if k == 0 {
            if c < 0.0 {
                s.push_str("- ");
            }
        } else {
            let _ = write!(s, " {sign} ");
        }
        if c.abs() == 1.0 {
            s.push_str(name);
        } else {
            let _ = write!(s, "{} {name}", num(c.abs()));
        }
    }
    if e.constant != 0.0 || e.terms.is_empty() {
        if e.terms.is_empty() {
            s.push_str(&num(e.constant));
        } else {
            let sign = if e.constant < 0.0 { "-" } else { "+" };
            let _ = write!(s, " {sign} {}", num(e.constant.abs()));
        }
    }
    s
}

/// Writes the model as text. Rows have their expression constant folded
/// into the right-hand side.
pub fn to_lp(m: &MicpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", m.stats());
    out.push_str(match m.sense {
        ObjSense::Maximize => "Maximize\n",
        ObjSense::Minimize => "Minimize\n",
    });
    let _ = writeln!(out, " obj: {}", expr(m, &m.objective));

    out.push_str("Subject To\n");
    for r in &m.rows {
        let mut e = r.expr.clone();
        let rhs = r.rhs - e.constant;
        e.constant = 0.0;
        let _ = writeln!(out, " {}: {} {} {}", r.name, expr(m, &e), r.sense, num(rhs));
    }

    if !m.cones.is_empty() {
        out.push_str("Cones\n");
        for c in &m.cones {
            let tail: Vec<String> = c.tail.iter().map(|t| expr(m, t)).collect();
            let _ = writeln!(out, " {}: || {} || <= {}", c.name, tail.join(", "), expr(m, &c.head));
        }
    }

    if !m.pwl.is_empty() {
        out.push_str("PWL\n");
        for s in &m.pwl {
            let list = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, " {}: i = [{}] t = [{}]", s.name, list(&s.i_coords), list(&s.t_coords));
            for c in &s.columns {
                let _ = writeln!(out, "  {}: {} (tol {})", c.name, c.values.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" "), num(c.tolerance));
            }
            let w: Vec<&str> = s.weights.iter().map(|v| m.vars[v.0].name.as_str()).collect();
            let _ = writeln!(out, "  weights: {}", w.join(" "));
        }
    }

    out.push_str("Bounds\n");
    for v in m.vars.iter().filter(|v| v.kind == VarKind::Continuous) {
        let lb = if v.lb == f64::NEG_INFINITY { "-inf".to_string() } else { num(v.lb) };
        let ub = if v.ub == f64::INFINITY { "+inf".to_string() } else { num(v.ub) };
        let _ = writeln!(out, " {lb} <= {} <= {ub}", v.name);
    }
    let bins: Vec<&str> = m.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
