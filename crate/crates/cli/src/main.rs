use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use rep2h::optimizer::bnb::Status;
use rep2h::optimizer::export::to_lp;
use rep2h::optimizer::extract::Schedule;
use rep2h::optimizer::{build_model, optimize, GridSpec, OptimizeOptions};
use rep2h::scenario::Scenario;
use rep2h::simulator::{
    baseline_traditional, compare, simulate_schedule, summary_json, write_steps_csv, ComparisonTable, SimulationReport,
};
use rep2h::synth::{generate, SynthOptions};

const EXIT_INVALID: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "rep2h", version, about = "Active-reactive scheduling of off-grid renewable hydrogen plants")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file against the schema and its invariants.
    Validate { path: PathBuf },
    /// Schedule one scenario, simulate the result and write reports.
    Optimize {
        path: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        /// Also run the traditional schedule and write a comparison table.
        #[arg(long)]
        baseline: bool,
        /// Only schedule the first N steps.
        #[arg(long)]
        horizon: Option<usize>,
        /// Write the coordinated model in LP-like text to this file.
        #[arg(long)]
        export_lp: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-simulate a saved schedule.
    Simulate {
        scenario: PathBuf,
        schedule: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare coordinated and traditional schedules on every scenario of a
    /// directory.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a synthetic scenario on the bundled network.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        steps: usize,
        #[arg(long, default_value_t = 0.55)]
        wind_mean: f64,
        #[arg(long, default_value_t = 0.85)]
        pv_peak: f64,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SolveArgs {
    /// Wall-clock budget per optimization.
    #[arg(long, default_value_t = 120.0)]
    budget_seconds: f64,
    /// Relative gap at which the search stops.
    #[arg(long, default_value_t = 0.01)]
    gap: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// PWL breakpoints as IxT (current x temperature).
    #[arg(long, default_value = "7x5")]
    pwl_grid: GridSpec,
}

impl SolveArgs {
    fn options(&self) -> OptimizeOptions {
        let mut o = OptimizeOptions::default();
        o.build.grid = self.pwl_grid;
        o.solve.time_limit = Some(Duration::from_secs_f64(self.budget_seconds.max(0.0)));
        o.solve.gap = self.gap;
        o.solve.seed = self.seed;
        o
    }
}

/// Failure with a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let sc = Scenario::load(path).map_err(|e| Exit(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    let problems = sc.check();
    if !problems.is_empty() {
        return Err(Exit(EXIT_INVALID, format!("{}:\n{}", path.display(), problems.join("\n"))).into());
    }
    Ok(sc)
}

fn solve(sc: &Scenario, opts: &OptimizeOptions, coordinated: bool) -> Result<Schedule> {
    let r = if coordinated { optimize(sc, opts) } else { baseline_traditional(sc, opts) };
    r.map_err(|e| Exit(EXIT_SOLVER, format!("{} ({}): {e}", sc.name, if coordinated { "coordinated" } else { "traditional" })).into())
}

fn write_report(dir: &Path, prefix: &str, schedule: &Schedule, report: &SimulationReport) -> Result<()> {
    fs::write(dir.join(format!("{prefix}schedule.json")), serde_json::to_string_pretty(schedule)?)?;
    write_steps_csv(report, fs::File::create(dir.join(format!("{prefix}steps.csv")))?)?;
    fs::write(dir.join(format!("{prefix}summary.json")), summary_json(report)?)?;
    Ok(())
}

fn print_summary(label: &str, schedule: &Schedule, r: &SimulationReport) {
    let s = &r.summary;
    println!(
        "{label}: status {}, hydrogen {:.2} kg, loss ratio {:.3}%, profit {:.0} CNY, violations {}, model gap {:.3}%",
        schedule.model.status,
        s.hydrogen_kg,
        s.loss_ratio_pct,
        s.profit,
        s.violations,
        s.gap.profit_rel * 100.0
    );
}

fn cmd_validate(path: &Path) -> Result<()> {
    let sc = load_scenario(path)?;
    println!("{}: ok ({} steps, {} units, {} buses)", path.display(), sc.steps(), sc.plant.units.len(), sc.network.buses.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(path: &Path, args: &SolveArgs, baseline: bool, horizon: Option<usize>, export_lp: Option<&Path>, out: &Path) -> Result<u8> {
    let mut sc = load_scenario(path)?;
    if let Some(h) = horizon {
        sc = sc.truncated(h);
    }
    let opts = args.options();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if let Some(p) = export_lp {
        let built = build_model(&sc, &opts.build).map_err(|e| Exit(EXIT_SOLVER, e.to_string()))?;
        fs::write(p, to_lp(&built.model))?;
    }
    let coord = solve(&sc, &opts, true)?;
    let report = simulate_schedule(&coord, &sc)?;
    write_report(out, "", &coord, &report)?;
    print_summary("coordinated", &coord, &report);
    if baseline {
        let base = solve(&sc, &opts, false)?;
        let base_report = simulate_schedule(&base, &sc)?;
        write_report(out, "baseline_", &base, &base_report)?;
        print_summary("traditional", &base, &base_report);
        let table = compare(&base_report, &report)?;
        fs::write(out.join("comparison.json"), serde_json::to_string_pretty(&table)?)?;
        fs::write(out.join("comparison.txt"), format!("{table}\n"))?;
        println!("{table}");
    }
    if coord.model.status == Status::Feasible {
        warn!("budget exhausted; schedule is feasible but not proven within the gap");
    }
    for v in &report.violations {
        warn!("{:?} violation at step {}: {} = {:.4} (limit {:.4})", v.kind, v.step, v.element, v.value, v.limit);
    }
    Ok(if report.has_violations() { EXIT_VIOLATION } else { 0 })
}

fn cmd_simulate(scenario: &Path, schedule: &Path, out: &Path) -> Result<u8> {
    let sc = load_scenario(scenario)?;
    let text = fs::read_to_string(schedule).with_context(|| format!("reading {}", schedule.display()))?;
    let sch: Schedule = serde_json::from_str(&text).with_context(|| format!("parsing {}", schedule.display()))?;
    if sch.scenario != sc.name {
        warn!("schedule was made for {:?}, simulating on {:?}", sch.scenario, sc.name);
    }
    let report = simulate_schedule(&sch, &sc)?;
    fs::create_dir_all(out)?;
    write_steps_csv(&report, fs::File::create(out.join("steps.csv"))?)?;
    fs::write(out.join("summary.json"), summary_json(&report)?)?;
    print_summary("simulated", &sch, &report);
    Ok(if report.has_violations() { EXIT_VIOLATION } else { 0 })
}

#[derive(Serialize)]
struct BatchRow {
    scenario: String,
    hydrogen_gain_pct: f64,
    loss_reduction_pp: f64,
    profit_gain_pct: f64,
    baseline_hydrogen_kg: f64,
    coordinated_hydrogen_kg: f64,
    baseline_loss_ratio_pct: f64,
    coordinated_loss_ratio_pct: f64,
    baseline_violations: usize,
    coordinated_violations: usize,
}

impl BatchRow {
    fn of(name: &str, t: &ComparisonTable, violations: (usize, usize)) -> Self {
        Self {
            scenario: name.into(),
            hydrogen_gain_pct: t.hydrogen_delta_pct,
            loss_reduction_pp: -t.loss_delta_pp,
            profit_gain_pct: t.profit_delta_pct,
            baseline_hydrogen_kg: t.reference.hydrogen_kg,
            coordinated_hydrogen_kg: t.candidate.hydrogen_kg,
            baseline_loss_ratio_pct: t.reference.loss_ratio_pct,
            coordinated_loss_ratio_pct: t.candidate.loss_ratio_pct,
            baseline_violations: violations.0,
            coordinated_violations: violations.1,
        }
    }
}

fn batch_one(path: &Path, opts: &OptimizeOptions) -> Result<(ComparisonTable, (usize, usize))> {
    let sc = load_scenario(path)?;
    let coord = solve(&sc, opts, true)?;
    let base = solve(&sc, opts, false)?;
    let rc = simulate_schedule(&coord, &sc)?;
    let rb = simulate_schedule(&base, &sc)?;
    Ok((compare(&rb, &rc)?, (rb.summary.violations, rc.summary.violations)))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn cmd_batch(dir: &Path, args: &SolveArgs, out: &Path) -> Result<u8> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let opts = args.options();
    let mut rows = Vec::new();
    let mut failed = 0;
    for f in &files {
        let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        info!("batch: {name}");
        match batch_one(f, &opts) {
            Ok((t, viol)) => {
                println!(
                    "{name}: hydrogen {:+.2}%, losses {:+.2} pp, profit {:+.2}%",
                    t.hydrogen_delta_pct, t.loss_delta_pp, t.profit_delta_pct
                );
                rows.push(BatchRow::of(&name, &t, viol));
            }
            Err(e) => {
                eprintln!("{name}: failed: {e:#}");
                failed += 1;
            }
        }
    }
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("batch.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    if !rows.is_empty() {
        w.serialize(BatchRow {
            scenario: "mean".into(),
            hydrogen_gain_pct: mean(rows.iter().map(|r| r.hydrogen_gain_pct)),
            loss_reduction_pp: mean(rows.iter().map(|r| r.loss_reduction_pp)),
            profit_gain_pct: mean(rows.iter().map(|r| r.profit_gain_pct)),
            baseline_hydrogen_kg: mean(rows.iter().map(|r| r.baseline_hydrogen_kg)),
            coordinated_hydrogen_kg: mean(rows.iter().map(|r| r.coordinated_hydrogen_kg)),
            baseline_loss_ratio_pct: mean(rows.iter().map(|r| r.baseline_loss_ratio_pct)),
            coordinated_loss_ratio_pct: mean(rows.iter().map(|r| r.coordinated_loss_ratio_pct)),
            baseline_violations: rows.iter().map(|r| r.baseline_violations).sum(),
            coordinated_violations: rows.iter().map(|r| r.coordinated_violations).sum(),
        })?;
        println!(
            "mean over {}: hydrogen {:+.2}%, loss reduction {:+.2} pp",
            rows.len(),
            mean(rows.iter().map(|r| r.hydrogen_gain_pct)),
            mean(rows.iter().map(|r| r.loss_reduction_pp))
        );
    }
    w.flush()?;
    Ok(if failed > 0 { EXIT_SOLVER } else { 0 })
}

fn cmd_synth(seed: u64, steps: usize, wind_mean: f64, pv_peak: f64, out: Option<&Path>) -> Result<()> {
    let sc = generate(&SynthOptions { seed, steps, wind_mean, pv_peak, ..SynthOptions::default() });
    let text = sc.to_json()?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Validate { path } => cmd_validate(&path).map(|_| 0),
        Cmd::Optimize { path, solve, baseline, horizon, export_lp, out } => {
            cmd_optimize(&path, &solve, baseline, horizon, export_lp.as_deref(), &out)
        }
        Cmd::Simulate { scenario, schedule, out } => cmd_simulate(&scenario, &schedule, &out),
        Cmd::Batch { dir, solve, out } => cmd_batch(&dir, &solve, &out),
        Cmd::Synth { seed, steps, wind_mean, pv_peak, out } => cmd_synth(seed, steps, wind_mean, pv_peak, out.as_deref()).map(|_| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(EXIT_SOLVER, |x| x.0);
            ExitCode::from(code)
        }
    }
}
