//! Piecewise-linear surfaces over the (current, temperature) box.
//!
//! Current breakpoints are uniform. Temperature breakpoints are uniform in
//! 1/T, which puts more of them at the cold end where the overvoltage term
//! bends hardest; with the default 7x5 grid this keeps every surface within
//! 0.5% of its rated value.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::elz_phys;
use crate::error::{Error, Result};
use crate::fleet::ElectrolyzerParams;
use crate::rectifier;

/// Breakpoint counts along current and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ni: usize,
    pub nt: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { ni: 7, nt: 5 }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    /// Parses `IxT`, for example `7x5`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected IxT, got `{s}`"))?;
        let ni = a.trim().parse().map_err(|_| format!("bad current count `{a}`"))?;
        let nt = b.trim().parse().map_err(|_| format!("bad temperature count `{b}`"))?;
        Ok(Self { ni, nt })
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.ni, self.nt)
    }
}

/// Current and temperature breakpoints for a unit.
pub fn breakpoints(p: &ElectrolyzerParams, spec: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.ni < 3 || spec.nt < 3 {
        return Err(Error::Model(format!("PWL grid {spec} needs at least 3 breakpoints per axis")));
    }
    let sp = &p.stack;
    let i = (0..spec.ni)
        .map(|k| sp.i_min + (sp.i_max - sp.i_min) * k as f64 / (spec.ni - 1) as f64)
        .collect();
    let (lo, hi) = (1.0 / sp.t_max, 1.0 / sp.t_min);
    let mut t: Vec<f64> = (0..spec.nt)
        .map(|k| 1.0 / (hi - (hi - lo) * k as f64 / (spec.nt - 1) as f64))
        .collect();
    t[0] = sp.t_min;
    t[spec.nt - 1] = sp.t_max;
    Ok((i, t))
}

/// Locates `x` in sorted `coords`: cell index and local coordinate in [0, 1].
fn locate(coords: &[f64], x: f64) -> (usize, f64) {
    let n = coords.len();
    let mut a = coords.partition_point(|&c| c <= x).saturating_sub(1);
    if a >= n - 1 {
        a = n - 2;
    }
    let u = ((x - coords[a]) / (coords[a + 1] - coords[a])).clamp(0.0, 1.0);
    (a, u)
}

/// Triangulated interpolation of `values` (indexed `a * nt + b`) at `(i, t)`.
pub fn interpolate(i_coords: &[f64], t_coords: &[f64], values: &[f64], i: f64, t: f64) -> f64 {
    let nt = t_coords.len();
    let (a, u) = locate(i_coords, i);
    let (b, w) = locate(t_coords, t);
    let v = |da: usize, db: usize| values[(a + da) * nt + b + db];
    if u >= w {
        (1.0 - u) * v(0, 0) + (u - w) * v(1, 0) + w * v(1, 1)
    } else {
        (1.0 - w) * v(0, 0) + (w - u) * v(0, 1) + u * v(1, 1)
    }
}

/// Worst interpolation error found on the densified grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub max_abs_error: f64,
    /// `max_abs_error` over the surface scale.
    pub relative_error: f64,
    pub worst_cell: (usize, usize),
    /// Sub-samples per cell edge.
    pub density: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlSurface {
    pub name: String,
    pub i_coords: Vec<f64>,
    pub t_coords: Vec<f64>,
    pub values: Vec<f64>,
    /// Reference magnitude for relative errors (largest |value|).
    pub scale: f64,
    pub certificate: Option<Certificate>,
}

impl PwlSurface {
    pub fn tabulate(
        name: &str,
        i_coords: &[f64],
        t_coords: &[f64],
        f: impl Fn(f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(i_coords.len() * t_coords.len());
        for &i in i_coords {
            for &t in t_coords {
                values.push(f(i, t)?);
            }
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            name: name.to_string(),
            i_coords: i_coords.to_vec(),
            t_coords: t_coords.to_vec(),
            values,
            scale,
            certificate: None,
        })
    }

    pub fn interpolate(&self, i: f64, t: f64) -> f64 {
        interpolate(&self.i_coords, &self.t_coords, &self.values, i, t)
    }

    /// Compares the interpolant against `f` on `density` sub-samples per
    /// cell edge and stores the worst error.
    pub fn certify(&mut self, f: impl Fn(f64, f64) -> Result<f64>, density: usize) -> Result<Certificate> {
        let (ni, nt) = (self.i_coords.len(), self.t_coords.len());
        let mut worst = (0.0, (0, 0));
        for a in 0..ni - 1 {
            for b in 0..nt - 1 {
                for p in 0..=density {
                    for q in 0..=density {
                        let u = p as f64 / density as f64;
                        let w = q as f64 / density as f64;
                        let i = self.i_coords[a] + u * (self.i_coords[a + 1] - self.i_coords[a]);
                        let t = self.t_coords[b] + w * (self.t_coords[b + 1] - self.t_coords[b]);
                        let err = (self.interpolate(i, t) - f(i, t)?).abs();
                        if err > worst.0 {
                            worst = (err, (a, b));
                        }
                    }
                }
            }
        }
        let scale = if self.scale > 0.0 { self.scale } else { 1.0 };
        let cert = Certificate {
            max_abs_error: worst.0,
            relative_error: worst.0 / scale,
            worst_cell: worst.1,
            density,
        };
        self.certificate = Some(cert);
        Ok(cert)
    }

    fn enforce(&self, tolerance: f64) -> Result<()> {
        if let Some(c) = self.certificate {
            if c.relative_error > tolerance {
                return Err(Error::PwlTolerance {
                    surface: self.name.clone(),
                    error: c.relative_error,
                    tolerance,
                    cell_i: c.worst_cell.0,
                    cell_t: c.worst_cell.1,
                });
            }
        }
        Ok(())
    }
}

/// The surfaces one unit contributes to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSurfaces {
    /// Stack power plus rectifier loss, kW.
    pub p_ac: PwlSurface,
    /// Heat released in the stack, kW.
    pub p_gen: PwlSurface,
    /// Hydrogen flow, kg/h.
    pub y: PwlSurface,
    /// Rectifier reactive power at nominal line voltage, kVar.
    pub q: PwlSurface,
}

impl UnitSurfaces {
    pub fn all(&self) -> [&PwlSurface; 4] {
        [&self.p_ac, &self.p_gen, &self.y, &self.q]
    }
}

/// Default certification density (sub-samples per cell edge).
pub const CERTIFY_DENSITY: usize = 10;

/// Tabulates and certifies every surface of a unit; fails if any surface
/// exceeds `tolerance` (relative to its rated value).
pub fn build_surfaces(p: &ElectrolyzerParams, spec: &GridSpec, tolerance: f64) -> Result<UnitSurfaces> {
    let (ic, tc) = breakpoints(p, spec)?;
    let sp = &p.stack;
    let rp = &p.rectifier;
    let f_pac = |i: f64, t: f64| Ok(elz_phys::stack_power(sp, i, t)? + rectifier::rectifier_loss(rp, i));
    let f_gen = |i: f64, t: f64| elz_phys::heat_generation(sp, &p.aux, i, t);
    let f_y = |i: f64, _t: f64| elz_phys::hydrogen_flow(sp, i);
    let f_q = |i: f64, t: f64| Ok(rectifier::reactive_power(rp, sp, rp.u_ac_nominal, i, t)? * 1000.0);
    let mut s = UnitSurfaces {
        p_ac: PwlSurface::tabulate("p_ac", &ic, &tc, f_pac)?,
        p_gen: PwlSurface::tabulate("p_gen", &ic, &tc, f_gen)?,
        y: PwlSurface::tabulate("y_h2", &ic, &tc, f_y)?,
        q: PwlSurface::tabulate("q", &ic, &tc, f_q)?,
    };
    s.p_ac.certify(f_pac, CERTIFY_DENSITY)?;
    // Heat generation is the stack power minus a term linear in current, so
    // its absolute error equals that of the stack power; scale it by the
    // rated stack power rather than by the (much smaller) heat.
    s.p_gen.certify(f_gen, CERTIFY_DENSITY)?;
    s.p_gen.scale = sp.rated_power().max(s.p_gen.scale);
    if let Some(c) = s.p_gen.certificate.as_mut() {
        c.relative_error = c.max_abs_error / s.p_gen.scale;
    }
    s.y.certify(f_y, CERTIFY_DENSITY)?;
    s.q.certify(f_q, CERTIFY_DENSITY)?;
    for surf in s.all() {
        surf.enforce(tolerance)?;
    }
    Ok(s)
}
