//! Report files: per-step series as CSV and the summary as JSON.

use std::io::Write;

use crate::error::Result;

use super::simulate::SimulationReport;

/// Column names of [`write_steps_csv`] for a plant of `units` electrolyzers
/// and a network of `buses` buses.
pub fn step_columns(units: usize, buses: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "step", "wind_mw", "pv_mw", "es_p_mw", "es_q_mvar", "plant_p_mw", "plant_q_mvar", "loss_mw", "cb_n", "svc_q_mvar",
        "wt_q_mvar", "pv_q_mvar", "soc_mwh",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in 0..units {
        for f in ["state", "current_ka", "temperature_c", "hydrogen_kg"] {
            cols.push(format!("u{m}_{f}"));
        }
    }
    for b in 0..buses {
        cols.push(format!("v{b}_pu"));
    }
    cols
}

/// One row per step: supply and demand, reactive dispatch, unit states,
/// temperatures and bus voltages. Bus columns follow the scenario's bus
/// order.
pub fn write_steps_csv<W: Write>(report: &SimulationReport, out: W) -> Result<()> {
    let units = report.steps.first().map_or(0, |s| s.states.len());
    let buses = report.steps.first().map_or(0, |s| s.v_pu.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(step_columns(units, buses))?;
    for s in &report.steps {
        let mut rec = vec![
            s.step.to_string(),
            format!("{:.6}", s.wind_mw),
            format!("{:.6}", s.pv_mw),
            format!("{:.6}", s.es_p_mw),
            format!("{:.6}", s.es_q_mvar),
            format!("{:.6}", s.plant_p_mw),
            format!("{:.6}", s.plant_q_mvar),
            format!("{:.6}", s.loss_mw),
            s.cb_n.iter().sum::<u32>().to_string(),
            format!("{:.6}", s.svc_q_mvar.iter().sum::<f64>()),
            format!("{:.6}", s.wt_q_mvar.iter().sum::<f64>()),
            format!("{:.6}", s.pv_q_mvar.iter().sum::<f64>()),
            format!("{:.6}", s.soc_mwh.iter().sum::<f64>()),
        ];
        for m in 0..units {
            rec.push(format!("{:?}", s.states[m]).to_lowercase());
            rec.push(format!("{:.6}", s.current_ka[m]));
            rec.push(format!("{:.6}", s.temperature_c[m]));
            rec.push(format!("{:.6}", s.hydrogen_kg[m]));
        }
        for v in &s.v_pu {
            rec.push(format!("{v:.6}"));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary, violations and corrective actions as pretty JSON.
pub fn summary_json(report: &SimulationReport) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Out<'a> {
        summary: &'a super::simulate::Summary,
        violations: &'a [super::simulate::Violation],
        actions: &'a [super::simulate::SimAction],
    }
    Ok(serde_json::to_string_pretty(&Out {
        summary: &report.summary,
        violations: &report.violations,
        actions: &report.actions,
    })?)
}
