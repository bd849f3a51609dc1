//! AC-side model of the 24-pulse thyristor rectifier feeding one stack.
//!
//! The firing angle follows from the ratio of the stack DC voltage to the
//! converter's voltage ceiling. Reactive power is the root-sum-square of the
//! phase-shift and distortion components; [`reactive_power`] evaluates the
//! eliminated closed form while [`reactive_components`] keeps the two parts
//! separate.

use serde::{Deserialize, Serialize};

use crate::elz_phys::{self, AuxParams, StackParams, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifierParams {
    /// Transformer turns ratio K.
    pub turns_ratio_k: f64,
    /// Harmonic factor nu of the bridge.
    pub harmonic_factor_nu: f64,
    /// Loss polynomial, kW, kW/kA, kW/kA².
    pub loss_a0: f64,
    pub loss_a1: f64,
    pub loss_a2: f64,
    /// Ratio of ideal DC voltage to AC line voltage (2.44 for 24 pulses).
    pub pulse_constant: f64,
    /// Nominal line voltage at the transformer primary, kV.
    pub u_ac_nominal: f64,
}

impl RectifierParams {
    /// 24-pulse bridge matched to [`StackParams::ulleberg_5mw`]; losses are
    /// about 1.5% of rated DC power at 12 kA.
    pub fn default_24_pulse() -> Self {
        Self {
            turns_ratio_k: 165.0,
            harmonic_factor_nu: 0.989,
            loss_a0: 5.0,
            loss_a1: 2.5,
            loss_a2: 0.275,
            pulse_constant: 2.44,
            u_ac_nominal: 35.0,
        }
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.harmonic_factor_nu > 0.0 && self.harmonic_factor_nu <= 1.0) {
            out.push(format!("harmonic_factor_nu {} must lie in (0, 1]", self.harmonic_factor_nu));
        }
        if !(self.turns_ratio_k > 0.0) {
            out.push("turns_ratio_k must be positive".into());
        }
        if !(self.pulse_constant > 0.0) {
            out.push("pulse_constant must be positive".into());
        }
        if !(self.u_ac_nominal > 0.0) {
            out.push("u_ac_nominal must be positive".into());
        }
        out
    }

    /// (1 - nu²)/nu², the distortion term under the square root.
    fn distortion(&self) -> f64 {
        let nu = self.harmonic_factor_nu;
        (1.0 - nu * nu) / (nu * nu)
    }
}

impl Default for RectifierParams {
    fn default() -> Self {
        Self::default_24_pulse()
    }
}

/// AC-side operating point of a rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcOperatingPoint {
    /// kV
    pub u_ac: f64,
    /// rad
    pub phi: f64,
    /// kA
    pub i_ac: f64,
}

/// Conduction loss, kW.
pub fn rectifier_loss(rp: &RectifierParams, i: f64) -> f64 {
    rp.loss_a2 * i * i + rp.loss_a1 * i + rp.loss_a0
}

/// cos(phi) demanded by a DC voltage `u_stack` (kV) at line voltage `u_ac` (kV).
pub fn power_factor_ratio(rp: &RectifierParams, u_stack: f64, u_ac: f64) -> f64 {
    rp.turns_ratio_k * u_stack / (rp.pulse_constant * u_ac)
}

/// Firing angle in radians.
pub fn firing_angle(rp: &RectifierParams, u_stack: f64, u_ac: f64) -> Result<f64> {
    let ratio = power_factor_ratio(rp, u_stack, u_ac);
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::Domain {
            term: "firing angle",
            detail: format!("cos(phi) = {ratio} must be positive (u_stack {u_stack} kV, u_ac {u_ac} kV)"),
        });
    }
    if ratio > 1.0 + 1e-12 {
        return Err(Error::InfeasibleVoltage { ratio });
    }
    Ok(ratio.min(1.0).acos())
}

/// AC operating point at DC current `i` and stack temperature `t`.
pub fn ac_operating_point(
    rp: &RectifierParams,
    sp: &StackParams,
    u_ac: f64,
    i: f64,
    t: f64,
) -> Result<AcOperatingPoint> {
    let u_dc = elz_phys::dc_voltage(sp, i, t)?;
    let phi = firing_angle(rp, u_dc, u_ac)?;
    let p_ac = elz_phys::stack_power(sp, i, t)? + rectifier_loss(rp, i);
    Ok(AcOperatingPoint {
        u_ac,
        phi,
        i_ac: p_ac / (3f64.sqrt() * u_ac * phi.cos()) / 1000.0,
    })
}

/// Phase-shift and distortion reactive power, MVar, computed from the AC
/// line current.
pub fn reactive_components(
    rp: &RectifierParams,
    sp: &StackParams,
    u_ac: f64,
    i: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if i == 0.0 {
        return Ok((0.0, 0.0));
    }
    let ac = ac_operating_point(rp, sp, u_ac, i, t)?;
    let nu = rp.harmonic_factor_nu;
    let s = 3f64.sqrt() * ac.u_ac * ac.i_ac;
    Ok((s * ac.phi.sin(), s * (1.0 - nu * nu).sqrt() / nu))
}

/// Total reactive power drawn by the rectifier, MVar, in closed form.
pub fn reactive_power(
    rp: &RectifierParams,
    sp: &StackParams,
    u_ac: f64,
    i: f64,
    t: f64,
) -> Result<f64> {
    if i < 0.0 {
        return Err(Error::Domain {
            term: "current",
            detail: format!("i = {i} kA must be >= 0"),
        });
    }
    if i == 0.0 {
        return Ok(0.0);
    }
    let u_dc = elz_phys::dc_voltage(sp, i, t)?;
    let phi = firing_angle(rp, u_dc, u_ac)?;
    let sin = phi.sin();
    let dc_side = u_dc * 1000.0 * i + rectifier_loss(rp, i);
    let q = rp.pulse_constant * dc_side * u_ac / (rp.turns_ratio_k * u_dc)
        * (sin * sin + rp.distortion()).sqrt();
    Ok(q / 1000.0)
}

/// Analytic temperature derivative of [`reactive_power`], MVar/°C.
pub fn reactive_power_dt(
    rp: &RectifierParams,
    sp: &StackParams,
    u_ac: f64,
    i: f64,
    t: f64,
) -> Result<f64> {
    if i == 0.0 {
        return Ok(0.0);
    }
    let n = sp.n_cell as f64;
    let u = elz_phys::stack_voltage(sp, i, t)?;
    let j = sp.current_density(i);
    let arg = (sp.t1 + sp.t2 / t + sp.t3 / (t * t)) * j + 1.0;
    let du = sp.r2 * j
        + sp.s / std::f64::consts::LN_10 * (-sp.t2 / (t * t) - 2.0 * sp.t3 / (t * t * t)) * j / arg;
    let kappa = rp.turns_ratio_k * n / (1000.0 * rp.pulse_constant * u_ac);
    let c = kappa * u;
    if c > 1.0 {
        return Err(Error::InfeasibleVoltage { ratio: c });
    }
    let h = rp.distortion();
    let g = (1.0 - c * c + h).sqrt();
    let dc_side = n * u * i + rectifier_loss(rp, i);
    let dq = du * (n * i * g / c - dc_side * kappa * (1.0 + h) / (g * c * c));
    Ok(dq / 1000.0)
}

/// Active (MW) and reactive (MVar) load one unit presents to its AC bus.
///
/// `p_cool` is the cooling heat flow in kW; its electric draw is divided by
/// the cooling efficiency and is zero while idle.
#[allow(clippy::too_many_arguments)]
pub fn apparent_load(
    rp: &RectifierParams,
    sp: &StackParams,
    aux: &AuxParams,
    u_ac: f64,
    state: State,
    i: f64,
    t: f64,
    p_cool: f64,
) -> Result<(f64, f64)> {
    let cooling = if state == State::Idle { 0.0 } else { p_cool / aux.eta_cool };
    match state {
        State::Production => {
            let p = elz_phys::stack_power(sp, i, t)? + rectifier_loss(rp, i) + cooling;
            Ok((p / 1000.0, reactive_power(rp, sp, u_ac, i, t)?))
        }
        State::Standby => Ok(((aux.p_standby + cooling) / 1000.0, 0.0)),
        State::Idle => Ok((0.0, 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loss_polynomial() {
        let mut rp = RectifierParams::default();
        assert_relative_eq!(rectifier_loss(&rp, 12.0), 74.6, max_relative = 1e-12);
        rp.loss_a0 = 5.0;
        rp.loss_a1 = 1.0;
        rp.loss_a2 = 0.1;
        assert_relative_eq!(rectifier_loss(&rp, 10.0), 25.0, max_relative = 1e-12);
        rp.loss_a0 = 0.0;
        rp.loss_a1 = 0.0;
        rp.loss_a2 = 0.0;
        assert_eq!(rectifier_loss(&rp, 7.0), 0.0);
    }

    #[test]
    fn firing_angle_boundaries() {
        let rp = RectifierParams::default();
        let u_ac = 35.0;
        let full = rp.pulse_constant * u_ac / rp.turns_ratio_k;
        assert_eq!(firing_angle(&rp, full, u_ac).unwrap(), 0.0);
        assert_relative_eq!(
            firing_angle(&rp, full / 2.0, u_ac).unwrap(),
            std::f64::consts::FRAC_PI_3,
            max_relative = 1e-12
        );
        assert!(matches!(firing_angle(&rp, full * 1.01, u_ac), Err(Error::InfeasibleVoltage { .. })));
        assert!(matches!(firing_angle(&rp, 0.0, u_ac), Err(Error::Domain { .. })));
    }

    #[test]
    fn pinned_rated_point() {
        let rp = RectifierParams::default();
        let sp = StackParams::default();
        let u_dc = elz_phys::dc_voltage(&sp, 12.0, 80.0).unwrap();
        assert_relative_eq!(firing_angle(&rp, u_dc, 35.0).unwrap(), 0.634_317_603_178_516_3, max_relative = 1e-12);
        assert_relative_eq!(reactive_power(&rp, &sp, 35.0, 6.0, 80.0).unwrap(), 2.200_544_956_897_103, max_relative = 1e-12);
        let (p, q) = apparent_load(&rp, &sp, &AuxParams::default(), 35.0, State::Production, 12.0, 80.0, 0.0).unwrap();
        assert_relative_eq!(p, 5.077_340_021_049_981, max_relative = 1e-12);
        assert_relative_eq!(q, 3.852_770_759_718_637, max_relative = 1e-12);
    }

    #[test]
    fn no_shift_no_distortion_no_q() {
        let mut rp = RectifierParams::default();
        rp.harmonic_factor_nu = 1.0;
        let sp = StackParams::default();
        // Pick the line voltage so that the DC demand sits exactly at the ceiling.
        let u_dc = elz_phys::dc_voltage(&sp, 8.0, 60.0).unwrap();
        let u_ac = rp.turns_ratio_k * u_dc / rp.pulse_constant;
        assert!(reactive_power(&rp, &sp, u_ac, 8.0, 60.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn de_energized_and_standby_loads() {
        let rp = RectifierParams::default();
        let sp = StackParams::default();
        let aux = AuxParams::default();
        assert_eq!(apparent_load(&rp, &sp, &aux, 35.0, State::Idle, 0.0, 40.0, 0.0).unwrap(), (0.0, 0.0));
        let (p, q) = apparent_load(&rp, &sp, &aux, 35.0, State::Standby, 0.0, 40.0, 0.0).unwrap();
        assert_relative_eq!(p, aux.p_standby / 1000.0);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn q_increases_with_current() {
        let rp = RectifierParams::default();
        let sp = StackParams::default();
        for t in [25.0, 50.0, 80.0] {
            let mut prev = 0.0;
            for k in 0..=100 {
                let i = sp.i_min + (sp.i_max - sp.i_min) * k as f64 / 100.0;
                let q = reactive_power(&rp, &sp, 35.0, i, t).unwrap();
                assert!(q > prev);
                prev = q;
            }
        }
    }

    #[test]
    fn temperature_derivative_matches_differences() {
        let rp = RectifierParams::default();
        let sp = StackParams::default();
        for &(i, t) in &[(3.0, 30.0), (6.0, 50.0), (9.0, 65.0), (12.0, 79.0)] {
            let h = 0.1;
            let fd = (reactive_power(&rp, &sp, 35.0, i, t + h).unwrap()
                - reactive_power(&rp, &sp, 35.0, i, t - h).unwrap())
                / (2.0 * h);
            let an = reactive_power_dt(&rp, &sp, 35.0, i, t).unwrap();
            assert_relative_eq!(an, fd, max_relative = 1e-4);
        }
    }
}
