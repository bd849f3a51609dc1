//! Scenario files: plant, network, time series, prices and initial state in
//! one JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elz_phys::State;
use crate::error::{Error, Result};
use crate::fleet::ElectrolyzerParams;
use crate::grid::NetworkModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    pub dt_hours: f64,
}

/// Prices in CNY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economics {
    /// Per kg of hydrogen.
    pub c_h2: f64,
    /// Per startup.
    pub c_su: f64,
    /// Per shutdown.
    pub c_sd: f64,
    /// Per capacitor bank switched.
    pub c_cb: f64,
}

impl Default for Economics {
    fn default() -> Self {
        Self {
            c_h2: 29.0,
            c_su: 1000.0,
            c_sd: 0.0,
            c_cb: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub units: Vec<ElectrolyzerParams>,
}

/// Per-step available renewable output and ambient temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    /// One series per wind turbine, MW.
    pub wind_mw: Vec<Vec<f64>>,
    /// One series per PV plant, MW.
    pub pv_mw: Vec<Vec<f64>>,
    /// °C
    pub ambient_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Initial {
    pub states: Vec<State>,
    /// °C
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub horizon: Horizon,
    pub economics: Economics,
    pub plant: Plant,
    pub network: NetworkModel,
    pub series: Series,
    pub initial: Initial,
}

impl Scenario {
    /// Parses a scenario; schema errors carry a path to the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Scenario(vec![format!("{path}: {}", e.inner())])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parses and validates in one go.
    pub fn load_valid(path: &Path) -> Result<Self> {
        let s = Self::load(path)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn steps(&self) -> usize {
        self.horizon.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon.dt_hours
    }

    /// Keeps only the first `steps` steps.
    pub fn truncated(&self, steps: usize) -> Self {
        let mut s = self.clone();
        let n = steps.min(s.horizon.steps);
        s.horizon.steps = n;
        for w in s.series.wind_mw.iter_mut().chain(s.series.pv_mw.iter_mut()) {
            w.truncate(n);
        }
        s.series.ambient_c.truncate(n);
        s
    }

    /// Total available renewable output at a step, MW.
    pub fn available(&self, t: usize) -> f64 {
        self.series.wind_mw.iter().chain(&self.series.pv_mw).map(|s| s[t]).sum()
    }

    /// All invariant violations, each prefixed by a path-like locator.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let h = self.horizon.steps;
        if h == 0 {
            out.push("horizon.steps: must be at least 1".into());
        }
        if !(self.horizon.dt_hours > 0.0) {
            out.push("horizon.dt_hours: must be positive".into());
        }
        let e = &self.economics;
        for (name, v) in [("c_h2", e.c_h2), ("c_su", e.c_su), ("c_sd", e.c_sd), ("c_cb", e.c_cb)] {
            if !(v >= 0.0) {
                out.push(format!("economics.{name}: price {v} must be nonnegative"));
            }
        }
        if self.plant.units.is_empty() {
            out.push("plant.units: at least one electrolyzer is required".into());
        }
        for (m, u) in self.plant.units.iter().enumerate() {
            out.extend(u.check().into_iter().map(|msg| format!("plant.units[{m}].{msg}")));
        }
        out.extend(self.network.check().into_iter().map(|msg| format!("network.{msg}")));

        let d = &self.network.devices;
        let mut series = |name: &str, data: &[Vec<f64>], caps: Vec<f64>| {
            if data.len() != caps.len() {
                out.push(format!(
                    "series.{name}: {} series for {} devices",
                    data.len(),
                    caps.len()
                ));
            }
            for (k, (s, cap)) in data.iter().zip(caps).enumerate() {
                if s.len() != h {
                    out.push(format!("series.{name}[{k}]: length {}, expected {h}", s.len()));
                }
                for (t, &v) in s.iter().enumerate() {
                    if !(v >= 0.0 && v <= cap + 1e-9) {
                        out.push(format!("series.{name}[{k}][{t}]: {v} outside [0, {cap}]"));
                    }
                }
            }
        };
        series("wind_mw", &self.series.wind_mw, d.wind.iter().map(|w| w.s).collect());
        series("pv_mw", &self.series.pv_mw, d.pv.iter().map(|w| w.s).collect());
        if self.series.ambient_c.len() != h {
            out.push(format!(
                "series.ambient_c: length {}, expected {h}",
                self.series.ambient_c.len()
            ));
        }
        let n = self.plant.units.len();
        if self.initial.states.len() != n {
            out.push(format!("initial.states: {} entries for {n} units", self.initial.states.len()));
        }
        if self.initial.temperatures.len() != n {
            out.push(format!(
                "initial.temperatures: {} entries for {n} units",
                self.initial.temperatures.len()
            ));
        }
        for (m, u) in self.plant.units.iter().enumerate() {
            // Cooling can only remove heat while the stack is above the
            // coolant temperature, so the thermal model needs both the
            // ambient and the starting point at or above it.
            for (t, &a) in self.series.ambient_c.iter().enumerate() {
                if a < u.aux.t_cool || a > u.stack.t_max {
                    out.push(format!(
                        "series.ambient_c[{t}]: {a} °C outside [{}, {}] required by unit {m}",
                        u.aux.t_cool, u.stack.t_max
                    ));
                    break;
                }
            }
            if let Some(&t0) = self.initial.temperatures.get(m) {
                if t0 < u.aux.t_cool || t0 > u.stack.t_max {
                    out.push(format!(
                        "initial.temperatures[{m}]: {t0} °C outside [{}, {}]",
                        u.aux.t_cool, u.stack.t_max
                    ));
                }
                if self.initial.states.get(m) == Some(&State::Production) && t0 < u.stack.t_min {
                    out.push(format!(
                        "initial.temperatures[{m}]: {t0} °C below t_min for a producing unit"
                    ));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.check();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(v))
        }
    }
}
