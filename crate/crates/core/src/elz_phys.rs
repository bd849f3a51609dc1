//! Electro-thermal model of a single alkaline electrolyzer stack.
//!
//! The empirical U-I curve is evaluated per cell; the DC bus voltage of the
//! stack is `n_cell` times the cell voltage. Currents are in kA, so
//! `volts * kA = kW` throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96485.0;

/// Stack coefficients and operating limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackParams {
    /// Reversible cell voltage, V.
    pub u_rev: f64,
    /// Ohmic coefficient, ohm·m².
    pub r1: f64,
    /// Ohmic temperature coefficient, ohm·m²/°C.
    pub r2: f64,
    /// Overvoltage coefficient (base-10 logarithm), V.
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Electrode area, m².
    pub area_a: f64,
    pub n_cell: u32,
    /// Faraday efficiency coefficient, (A/m²)².
    pub f1: f64,
    pub f2: f64,
    /// Current limits, kA.
    pub i_min: f64,
    pub i_max: f64,
    /// Temperature limits in production, °C.
    pub t_min: f64,
    pub t_max: f64,
    /// Lower heating value of hydrogen, kWh/kg.
    pub lhv: f64,
}

impl StackParams {
    /// Ulleberg's alkaline coefficients scaled to a 221-cell, 3 m² stack that
    /// draws about 5 MW at 12 kA and 80 °C.
    pub fn ulleberg_5mw() -> Self {
        Self {
            u_rev: 1.229,
            r1: 8.05e-5,
            r2: -2.5e-7,
            s: 0.185,
            t1: -0.1002,
            t2: 8.424,
            t3: 247.3,
            area_a: 3.0,
            n_cell: 221,
            f1: 25_000.0,
            f2: 0.96,
            i_min: 3.0,
            i_max: 12.0,
            t_min: 25.0,
            t_max: 80.0,
            lhv: 33.33,
        }
    }

    /// Checks the structural invariants, returning one message per problem.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.i_min < self.i_max) {
            out.push(format!("i_min {} must be below i_max {}", self.i_min, self.i_max));
        }
        if self.i_min < 0.0 {
            out.push("i_min must be nonnegative".into());
        }
        if !(self.t_min < self.t_max) {
            out.push(format!("t_min {} must be below t_max {}", self.t_min, self.t_max));
        }
        if !(self.f2 > 0.0 && self.f2 <= 1.0) {
            out.push(format!("f2 {} must lie in (0, 1]", self.f2));
        }
        if !(self.area_a > 0.0) {
            out.push("area_a must be positive".into());
        }
        if self.n_cell < 1 {
            out.push("n_cell must be at least 1".into());
        }
        if !(self.lhv > 0.0) {
            out.push("lhv must be positive".into());
        }
        out
    }

    /// Current density in A/m² for a current in kA.
    pub fn current_density(&self, i: f64) -> f64 {
        i * 1000.0 / self.area_a
    }

    /// Rated stack power at `i_max` and `t_max`, kW.
    pub fn rated_power(&self) -> f64 {
        stack_power(self, self.i_max, self.t_max).unwrap_or(f64::NAN)
    }
}

impl Default for StackParams {
    fn default() -> Self {
        Self::ulleberg_5mw()
    }
}

/// Auxiliary and thermal parameters of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxParams {
    pub eta_cool: f64,
    /// Standby draw, kW.
    pub p_standby: f64,
    /// Heat capacity, kWh/°C.
    pub c_heat: f64,
    /// Thermal resistance to ambient, °C/kW.
    pub r_diss: f64,
    /// Thermal-neutral cell voltage, V.
    pub u_th: f64,
    pub t_ambient: f64,
    /// Cooling capacity per degree above the coolant temperature, kW/°C.
    pub c_cool: f64,
    pub t_cool: f64,
}

impl AuxParams {
    pub fn default_5mw() -> Self {
        Self {
            eta_cool: 0.9,
            p_standby: 50.0,
            c_heat: 60.0,
            r_diss: 0.047,
            u_th: 1.48,
            t_ambient: 25.0,
            c_cool: 40.0,
            t_cool: 15.0,
        }
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta_cool > 0.0 && self.eta_cool <= 1.0) {
            out.push(format!("eta_cool {} must lie in (0, 1]", self.eta_cool));
        }
        if !(self.c_heat > 0.0) {
            out.push("c_heat must be positive".into());
        }
        if !(self.r_diss > 0.0) {
            out.push("r_diss must be positive".into());
        }
        if self.p_standby < 0.0 {
            out.push("p_standby must be nonnegative".into());
        }
        if self.c_cool < 0.0 {
            out.push("c_cool must be nonnegative".into());
        }
        out
    }

    /// Upper end of the admissible cooling band at temperature `t`, kW.
    pub fn max_cooling(&self, t: f64) -> f64 {
        (self.c_cool * (t - self.t_cool)).max(0.0)
    }
}

impl Default for AuxParams {
    fn default() -> Self {
        Self::default_5mw()
    }
}

/// Commitment state of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Production,
    Standby,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// kA
    pub current: f64,
    /// °C
    pub temperature: f64,
    pub state: State,
}

impl OperatingPoint {
    /// Returns a description of the first broken invariant, if any.
    pub fn check(&self, p: &StackParams) -> Option<String> {
        let tol = 1e-9;
        match self.state {
            State::Production => {
                if self.current < p.i_min - tol || self.current > p.i_max + tol {
                    return Some(format!(
                        "current {:.4} kA outside [{}, {}]",
                        self.current, p.i_min, p.i_max
                    ));
                }
                if self.temperature < p.t_min - tol || self.temperature > p.t_max + tol {
                    return Some(format!(
                        "temperature {:.3} °C outside [{}, {}]",
                        self.temperature, p.t_min, p.t_max
                    ));
                }
                None
            }
            _ if self.current.abs() > tol => {
                Some(format!("current {:.4} kA while not producing", self.current))
            }
            _ => None,
        }
    }
}

fn domain(term: &'static str, detail: String) -> Error {
    Error::Domain { term, detail }
}

/// Cell voltage from the U-I curve, V. `i` in kA, `t` in °C.
pub fn stack_voltage(p: &StackParams, i: f64, t: f64) -> Result<f64> {
    if !(i >= 0.0) || !i.is_finite() {
        return Err(domain("current", format!("i = {i} kA must be finite and >= 0")));
    }
    if !(0.0..=100.0).contains(&t) || t == 0.0 {
        return Err(domain("temperature", format!("t = {t} °C outside (0, 100]")));
    }
    let j = p.current_density(i);
    let ohmic = (p.r1 + p.r2 * t) * j;
    let arg = (p.t1 + p.t2 / t + p.t3 / (t * t)) * j + 1.0;
    if !(arg > 0.0) {
        return Err(domain("overvoltage log", format!("argument {arg} <= 0 at i = {i}, t = {t}")));
    }
    let u = p.u_rev + ohmic + p.s * arg.log10();
    if !u.is_finite() {
        return Err(domain("voltage", format!("non-finite voltage at i = {i}, t = {t}")));
    }
    Ok(u)
}

/// DC voltage across the whole stack, kV.
pub fn dc_voltage(p: &StackParams, i: f64, t: f64) -> Result<f64> {
    Ok(p.n_cell as f64 * stack_voltage(p, i, t)? / 1000.0)
}

/// Stack DC power, kW.
pub fn stack_power(p: &StackParams, i: f64, t: f64) -> Result<f64> {
    Ok(p.n_cell as f64 * stack_voltage(p, i, t)? * i)
}

/// Faraday efficiency at current `i` (kA).
pub fn faraday_efficiency(p: &StackParams, i: f64) -> f64 {
    let j = p.current_density(i);
    let j2 = j * j;
    j2 / (p.f1 + j2) * p.f2
}

/// Hydrogen mass flow, kg/h.
pub fn hydrogen_flow(p: &StackParams, i: f64) -> Result<f64> {
    if !(i >= 0.0) || !i.is_finite() {
        return Err(domain("current", format!("i = {i} kA must be finite and >= 0")));
    }
    let amps = i * 1000.0;
    Ok(faraday_efficiency(p, i) * p.n_cell as f64 * amps / (2.0 * FARADAY) * 2.0 * 3600.0 / 1000.0)
}

/// Hydrogen energy out over electrical energy in.
pub fn conversion_efficiency(p: &StackParams, i: f64, t: f64) -> Result<f64> {
    if i == 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(hydrogen_flow(p, i)? * p.lhv / stack_power(p, i, t)?)
}

/// Ohmic and overvoltage heat released in the stack, kW.
pub fn heat_generation(p: &StackParams, a: &AuxParams, i: f64, t: f64) -> Result<f64> {
    Ok(i * p.n_cell as f64 * (stack_voltage(p, i, t)? - a.u_th))
}

/// Passive heat loss to ambient, kW.
pub fn heat_dissipation(a: &AuxParams, t: f64) -> f64 {
    (t - a.t_ambient) / a.r_diss
}

/// One explicit Euler step of the lumped thermal model.
pub fn thermal_step(
    p: &StackParams,
    a: &AuxParams,
    t_now: f64,
    i: f64,
    p_cool: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(domain("dt", format!("step length {dt} h must be positive")));
    }
    let max = a.max_cooling(t_now);
    let tol = 1e-9 * (1.0 + max);
    if p_cool < -tol || p_cool > max + tol {
        return Err(Error::CoolingOutOfBand { p_cool, max });
    }
    let gen = if i > 0.0 { heat_generation(p, a, i, t_now)? } else { 0.0 };
    Ok(t_now + dt / a.c_heat * (gen - heat_dissipation(a, t_now) - p_cool))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pk() -> (StackParams, AuxParams) {
        (StackParams::default(), AuxParams::default())
    }

    #[test]
    fn zero_current_gives_reversible_voltage() {
        let (p, _) = pk();
        for t in [25.0, 50.0, 80.0] {
            assert_eq!(stack_voltage(&p, 0.0, t).unwrap(), p.u_rev);
        }
    }

    #[test]
    fn pinned_values() {
        let (p, _) = pk();
        // 6 kA over 3 m² is 2000 A/m².
        assert_relative_eq!(stack_voltage(&p, 6.0, 80.0).unwrap(), 1.710_167_481_140_237, max_relative = 1e-12);
        assert_relative_eq!(stack_power(&p, 6.0, 80.0).unwrap(), 2267.682_079_991_954, max_relative = 1e-12);
        assert_relative_eq!(hydrogen_flow(&p, 12.0).unwrap(), 94.843_898_443_713_05, max_relative = 1e-12);
        assert_relative_eq!(conversion_efficiency(&p, 6.0, 80.0).unwrap(), 0.693_752_735_932_129_6, max_relative = 1e-12);
    }

    #[test]
    fn faraday_midpoint() {
        let (p, _) = pk();
        let i = p.f1.sqrt() * p.area_a / 1000.0;
        assert_relative_eq!(faraday_efficiency(&p, i), p.f2 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn power_linear_in_cells() {
        let (mut p, _) = pk();
        let base = stack_power(&p, 7.0, 60.0).unwrap();
        p.n_cell *= 2;
        assert_relative_eq!(stack_power(&p, 7.0, 60.0).unwrap(), 2.0 * base, max_relative = 1e-14);
        assert_eq!(stack_power(&p, 0.0, 60.0).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_trends() {
        let (p, _) = pk();
        assert!(matches!(conversion_efficiency(&p, 0.0, 60.0), Err(Error::UndefinedEfficiency)));
        for t in [25.0, 40.0, 60.0, 80.0] {
            let mut prev = f64::INFINITY;
            for k in 0..=100 {
                let i = p.i_min + (p.i_max - p.i_min) * k as f64 / 100.0;
                let e = conversion_efficiency(&p, i, t).unwrap();
                assert!(e < prev && e < 1.0 && e > 0.0);
                prev = e;
            }
        }
        let hot = conversion_efficiency(&p, 7.5, 80.0).unwrap();
        let cold = conversion_efficiency(&p, 7.5, 40.0).unwrap();
        assert!(hot > cold);
    }

    #[test]
    fn domain_errors_name_term() {
        let (mut p, _) = pk();
        assert!(matches!(stack_voltage(&p, -1.0, 60.0), Err(Error::Domain { term: "current", .. })));
        p.t1 = -10.0;
        assert!(matches!(stack_voltage(&p, 12.0, 60.0), Err(Error::Domain { term: "overvoltage log", .. })));
    }

    #[test]
    fn thermal_equilibrium_and_decay() {
        let (p, a) = pk();
        assert_eq!(thermal_step(&p, &a, a.t_ambient, 0.0, 0.0, 1.0).unwrap(), a.t_ambient);
        let t0 = 60.0;
        let t1 = thermal_step(&p, &a, t0, 0.0, 0.0, 1.0).unwrap();
        let factor = 1.0 - 1.0 / (a.c_heat * a.r_diss);
        assert_relative_eq!(t1 - a.t_ambient, factor * (t0 - a.t_ambient), max_relative = 1e-12);
    }

    #[test]
    fn cooling_band_enforced() {
        let (p, a) = pk();
        let max = a.max_cooling(50.0);
        assert!(thermal_step(&p, &a, 50.0, 5.0, max, 1.0).is_ok());
        assert!(matches!(
            thermal_step(&p, &a, 50.0, 5.0, max + 1.0, 1.0),
            Err(Error::CoolingOutOfBand { .. })
        ));
        assert!(thermal_step(&p, &a, 50.0, 5.0, -0.5, 1.0).is_err());
    }

    #[test]
    fn full_load_heating_trajectory() {
        let (p, a) = pk();
        let mut t = 25.0;
        let mut prev = t;
        for _ in 0..24 {
            t = thermal_step(&p, &a, t, 12.0, 0.0, 1.0).unwrap();
            assert!(t > prev && t < p.t_max);
            prev = t;
        }
        assert_relative_eq!(t, 77.335_434_044_730_45, max_relative = 1e-10);
    }

    #[test]
    fn fixed_point_when_balanced() {
        let (p, a) = pk();
        let t = 50.0;
        let i = 12.0;
        let gen = heat_generation(&p, &a, i, t).unwrap();
        let cool = gen - heat_dissipation(&a, t);
        assert!(cool >= 0.0 && cool <= a.max_cooling(t));
        let next = thermal_step(&p, &a, t, i, cool, 1.0).unwrap();
        assert!((next - t).abs() < 1e-9);
    }
}
