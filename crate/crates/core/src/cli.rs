//! Command-line front end shared by the `cstirap` binary and the tests.
//!
//! Exit codes: 0 success, 1 configuration error, 2 integration failure,
//! 3 I/O error. Every failure prints one `error:` line on stderr and leaves
//! no artifact behind.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    adiabaticity_metrics, dark_decay_rate, five_level_omega0, metric_times, mixing_angles,
    theta_dot, AdiabaticityMetrics, TransferReport,
};
use crate::chain::{ChainSystem, LevelKind, SimulationGrid};
use crate::config::{self, parse_quantity, Dim, Override, RunConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, dark_states_numeric, DriveSummary};
use crate::optimize::{
    optimize, sweep, CellOutcome, FreeParam, OptimizeResult, OptimizeSpec, Param, SweepAxis,
    SweepResult, SweepSpec,
};
use crate::output::{json_string, populations_svg, sweep_csv, timeseries_csv, Artifacts};
use crate::propagate::{adiabatic_pure, adiabatic_setup, propagate_adiabatic5};
use crate::scenarios::{
    preset_by_name, preset_description, simulate, ScenarioPreset, PRESET_NAMES,
};

/// Worker-pool size for sweeps and optimisation when neither the command line
/// nor the config sets one.
pub const WORKERS_ENV: &str = "CSTIRAP_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "cstirap",
    version,
    about = "Chainwise STIRAP simulator for lossy molecular level chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate one scenario and write timeseries.csv, report.json and optionally populations.svg.
    Simulate(SimulateArgs),
    /// Full-factorial parameter sweep; writes sweep.csv and sweep.json.
    Sweep(SweepArgs),
    /// Nelder–Mead search for the most efficient pulse parameters; writes optimize.json.
    Optimize(OptimizeArgs),
    /// Dark states, adiabaticity and the dark-state decay law without a full run.
    Analyze(AnalyzeArgs),
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        command: PresetsCommand,
    },
    /// Configuration files.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Debug, Subcommand)]
enum PresetsCommand {
    /// Names and one-line descriptions.
    List,
    /// Print a preset as a config file with an inline system.
    Export { name: String },
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Resolve a config (with overrides) and report problems without running anything.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// JSON config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in preset (see `presets list`).
    #[arg(long, short)]
    preset: Option<String>,
    /// Override a config field: dotted.path=value. Bare keys are preset parameters.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Also write populations.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sweep axis PARAM=v1,v2,... (repeatable; replaces the config's axes).
    #[arg(long, value_name = "PARAM=V1,V2,...")]
    axis: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Free parameter PARAM=LOWER:UPPER[:INITIAL] (repeatable; replaces the config's list).
    #[arg(long, value_name = "PARAM=LO:HI[:INIT]")]
    free: Vec<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    max_evaluations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Upper limit on Ω_eff, e.g. "5e7 s^-1".
    #[arg(long)]
    omega_eff_cap: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sample time, e.g. "0 us" (repeatable; replaces evenly spaced samples).
    #[arg(long = "time", short = 't', allow_hyphen_values = true)]
    times: Vec<String>,
    /// Evenly spaced samples across the window.
    #[arg(long)]
    samples: Option<usize>,
    /// Also integrate the adiabatic-basis equations (five-level chains) and
    /// compare the dark-state population with the decay law.
    #[arg(long)]
    with_simulation: bool,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("invalid arguments");
                    eprintln!("{}", first.trim());
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Presets { command } => match command {
            PresetsCommand::List => {
                for name in PRESET_NAMES {
                    println!("{name:<12} {}", preset_description(name).unwrap_or(""));
                }
                Ok(())
            }
            PresetsCommand::Export { name } => {
                print!(
                    "{}",
                    json_string(&config::export_preset(&preset_by_name(&name)?))?
                );
                Ok(())
            }
        },
        Command::Config {
            command: ConfigCommand::Validate { scenario },
        } => {
            let cfg = load(&scenario)?;
            let s = &cfg.scenario;
            println!(
                "ok: {} ({} levels, window [{:.6e}, {:.6e}] s, {} output points{}{})",
                s.name,
                s.system.len(),
                s.grid.t_start,
                s.grid.t_end,
                s.grid.output_points,
                if cfg.sweep.is_some() { ", sweep" } else { "" },
                if cfg.optimize.is_some() {
                    ", optimize"
                } else {
                    ""
                },
            );
            Ok(())
        }
    }
}

fn load(a: &ScenarioArgs) -> Result<RunConfig> {
    if a.config.is_none() && a.preset.is_none() {
        return Err(Error::Config("give --config FILE or --preset NAME".into()));
    }
    let overrides = a
        .set
        .iter()
        .map(|s| Override::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config::load(a.config.as_deref(), a.preset.as_deref(), &overrides)?;
    if let Some(dir) = &a.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

/// Worker count: command line, then config, then the environment.
fn workers(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag.or(config) {
        if n == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    scenario: &'a str,
    grid: &'a SimulationGrid,
    #[serde(flatten)]
    report: &'a TransferReport,
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load(&a.scenario)?;
    let s = &cfg.scenario;
    let sim = simulate(&s.system, &s.grid)?;
    let dir = &cfg.output.dir;
    let mut out = Artifacts::new();
    if cfg.output.timeseries {
        out.add(
            dir.join("timeseries.csv"),
            timeseries_csv(&s.system, &sim.trajectory),
        );
    }
    if cfg.output.report {
        let file = ReportFile {
            scenario: &s.name,
            grid: &s.grid,
            report: &sim.report,
        };
        out.add(dir.join("report.json"), json_string(&file)?);
    }
    if cfg.output.svg || a.svg {
        out.add(
            dir.join("populations.svg"),
            populations_svg(&s.system, &sim.trajectory),
        );
    }
    out.commit()?;
    let r = &sim.report;
    println!(
        "{}: efficiency {:.6} into {}, total loss {:.6}, peak intermediate ground {}",
        s.name,
        r.efficiency,
        r.target_label,
        r.total_loss,
        r.peak_intermediate_ground
            .map_or("n/a".into(), |p| format!("{p:.6}")),
    );
    Ok(())
}

fn parse_axis(s: &str, system: &ChainSystem) -> Result<SweepAxis> {
    let (name, values) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("axis '{s}' is not PARAM=v1,v2,...")))?;
    let param = Param::parse(name.trim())?;
    let values = values
        .split(',')
        .map(|v| param_value(param, v, system, &format!("axis {name}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepAxis { param, values })
}

fn param_value(param: Param, raw: &str, system: &ChainSystem, what: &str) -> Result<f64> {
    let v = Value::String(raw.trim().to_string());
    match param {
        Param::Width | Param::Delay => parse_quantity(&v, Dim::Time, what),
        Param::DelayRatio => parse_quantity(&v, Dim::Pure, what),
        Param::PeakRabi(k) => {
            config::parse_rabi(&v, system.couplings().get(k).map(|c| c.dipole_moment), what)
        }
        Param::Omega0 => parse_quantity(&v, Dim::Rate, what),
    }
}

#[derive(Serialize)]
struct SweepFile<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    result: &'a SweepResult,
    best_index: Option<usize>,
    failures: usize,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = load(&a.scenario)?;
    let s = &cfg.scenario;
    let mut spec = match (&cfg.sweep, a.axis.is_empty()) {
        (_, false) => SweepSpec {
            axes: a
                .axis
                .iter()
                .map(|x| parse_axis(x, &s.system))
                .collect::<Result<_>>()?,
            workers: cfg.sweep.as_ref().and_then(|w| w.workers),
        },
        (Some(spec), true) => spec.clone(),
        (None, true) => {
            return Err(Error::Config(
                "sweep needs axes: use --axis or a sweep section".into(),
            ))
        }
    };
    spec.workers = workers(a.workers, spec.workers)?;
    let result = sweep(s, &spec)?;
    let best = result.best();
    let dir = &cfg.output.dir;
    let mut out = Artifacts::new();
    out.add(dir.join("sweep.csv"), sweep_csv(&result));
    let file = SweepFile {
        scenario: &s.name,
        result: &result,
        best_index: best.map(|c| c.index),
        failures: result.failures(),
    };
    out.add(dir.join("sweep.json"), json_string(&file)?);
    out.commit()?;
    match best {
        Some(b) => {
            let at: Vec<String> = result
                .params
                .iter()
                .zip(&b.values)
                .map(|(p, v)| format!("{p}={v:e}"))
                .collect();
            println!(
                "{} cells, {} failed; best efficiency {:.6} at {}",
                result.cells.len(),
                result.failures(),
                b.efficiency().unwrap_or(f64::NAN),
                at.join(" ")
            );
            Ok(())
        }
        None => Err(first_failure(&result)),
    }
}

fn first_failure(result: &SweepResult) -> Error {
    let msg = result
        .cells
        .iter()
        .find_map(|c| match &c.outcome {
            CellOutcome::Failed { error } => Some(error.clone()),
            CellOutcome::Ok(_) => None,
        })
        .unwrap_or_default();
    Error::AllRunsFailed(format!("every sweep cell failed (first: {msg})"))
}

fn parse_free(s: &str, system: &ChainSystem) -> Result<FreeParam> {
    let bad = || Error::Config(format!("free parameter '{s}' is not PARAM=LO:HI[:INIT]"));
    let (name, range) = s.split_once('=').ok_or_else(bad)?;
    let param = Param::parse(name.trim())?;
    let parts: Vec<&str> = range.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let q = |raw: &str| param_value(param, raw, system, &format!("free {name}"));
    Ok(FreeParam {
        param,
        lower: q(parts[0])?,
        upper: q(parts[1])?,
        initial: parts.get(2).map(|p| q(p)).transpose()?,
        scale: None,
    })
}

#[derive(Serialize)]
struct OptimizeFile<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    result: &'a OptimizeResult,
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let cfg = load(&a.scenario)?;
    let s = &cfg.scenario;
    let mut spec = match (&cfg.optimize, a.free.is_empty()) {
        (Some(spec), true) => spec.clone(),
        (base, false) => {
            let free = a
                .free
                .iter()
                .map(|f| parse_free(f, &s.system))
                .collect::<Result<Vec<_>>>()?;
            match base {
                Some(b) => OptimizeSpec { free, ..b.clone() },
                None => OptimizeSpec::new(free),
            }
        }
        (None, true) => {
            return Err(Error::Config(
                "optimize needs free parameters: use --free or an optimize section".into(),
            ))
        }
    };
    if let Some(n) = a.max_iterations {
        spec.max_iterations = Some(n);
    }
    if let Some(n) = a.max_evaluations {
        spec.max_evaluations = n;
    }
    if let Some(t) = a.tolerance {
        spec.tolerance = t;
    }
    if let Some(cap) = &a.omega_eff_cap {
        spec.omega_eff_cap = Some(parse_quantity(
            &Value::String(cap.clone()),
            Dim::Rate,
            "--omega-eff-cap",
        )?);
    }
    spec.workers = workers(a.workers, spec.workers)?;
    let result = optimize(s, &spec)?;
    let mut out = Artifacts::new();
    out.add(
        cfg.output.dir.join("optimize.json"),
        json_string(&OptimizeFile {
            scenario: &s.name,
            result: &result,
        })?,
    );
    out.commit()?;
    let at: Vec<String> = result
        .params
        .iter()
        .zip(&result.best_values)
        .map(|(p, v)| format!("{p}={v:e}"))
        .collect();
    println!(
        "best objective {:.6} at {} after {} evaluations{}{}",
        result.best_objective,
        at.join(" "),
        result.evaluations,
        if result.converged { ", converged" } else { "" },
        if result.budget_exhausted {
            ", evaluation budget exhausted"
        } else {
            ""
        },
    );
    if result.report.is_none() {
        return Err(Error::AllRunsFailed(
            "every optimizer candidate failed".into(),
        ));
    }
    Ok(())
}

fn sample_times(cfg: &RunConfig, a: &AnalyzeArgs) -> Result<Vec<f64>> {
    if !a.times.is_empty() {
        return a
            .times
            .iter()
            .map(|t| parse_quantity(&Value::String(t.clone()), Dim::Time, "--time"))
            .collect();
    }
    if let Some(ts) = &cfg.analyze.times {
        return Ok(ts.clone());
    }
    let n = a.samples.unwrap_or(cfg.analyze.samples);
    if n < 2 {
        return Err(Error::Config("--samples must be at least 2".into()));
    }
    let g = &cfg.scenario.grid;
    Ok(SimulationGrid {
        output_points: n,
        ..*g
    }
    .times())
}

fn darkstate_json(system: &ChainSystem, times: &[f64]) -> Result<Value> {
    let excited: Vec<usize> = (0..system.len())
        .filter(|&i| LevelKind::at(i) == LevelKind::Excited)
        .collect();
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let h = build_hamiltonian(system, t);
        let states = dark_states_numeric(&h)?;
        let d = DriveSummary::at(system, t);
        let max_excited = states
            .iter()
            .flat_map(|s| excited.iter().map(move |&i| s.amplitudes[i].abs()))
            .fold(0.0, f64::max);
        let residual = states
            .iter()
            .map(|s| (&h * &s.amplitudes).norm())
            .fold(0.0, f64::max);
        samples.push(json!({
            "t": t,
            "theta": d.theta().value(),
            "omega_eff": d.omega_eff,
            "dimension": states.len(),
            "amplitudes": states.iter().map(|s| s.amplitudes.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            "max_excited_amplitude": max_excited,
            "residual_norm": residual,
            "hamiltonian_norm": h.norm(),
        }));
    }
    Ok(json!({
        "levels": system.levels().iter().map(|l| l.label.clone()).collect::<Vec<_>>(),
        "samples": samples,
    }))
}

fn adiabaticity_json(system: &ChainSystem, grid: &SimulationGrid, times: &[f64]) -> Value {
    let dense = metric_times(&[grid.t_start, grid.t_end]);
    let (metrics, note): (Option<AdiabaticityMetrics>, Option<String>) =
        match adiabaticity_metrics(system, &dense) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let samples: Vec<Value> = times
        .iter()
        .map(|&t| {
            let d = DriveSummary::at(system, t);
            let td = theta_dot(system, t);
            json!({
                "t": t,
                "theta": d.theta().value(),
                "theta_dot": td,
                "omega_eff": d.omega_eff,
                "theta_dot_over_omega_eff": td.filter(|_| d.omega_eff > 0.0).map(|x| x.abs() / d.omega_eff),
            })
        })
        .collect();
    json!({ "metrics": metrics, "note": note, "samples": samples })
}

fn decay_json(s: &ScenarioPreset, times: &[f64], with_simulation: bool) -> Result<Value> {
    let system = &s.system;
    let Some(omega0) = five_level_omega0(system) else {
        return Ok(json!({
            "applicable": false,
            "reason": "the dark-state decay law covers five-level chains with equal constant interior couplings",
        }));
    };
    let l = system.levels();
    let (g1, g2) = (l[0].loss_rate, l[2].loss_rate);
    let dense = metric_times(&[s.grid.t_start, s.grid.t_end]);
    let thetas = mixing_angles(system, &dense);
    let rates: Vec<f64> = dense
        .iter()
        .zip(&thetas)
        .map(|(&t, th)| {
            dark_decay_rate(
                th.unwrap_or(0.0),
                DriveSummary::at(system, t).omega_eff,
                omega0,
                g1,
                g2,
            )
        })
        .collect();
    // Cumulative trapezoid on the dense grid, read off at the sample times.
    let mut cumulative = vec![0.0; dense.len()];
    for k in 1..dense.len() {
        cumulative[k] =
            cumulative[k - 1] + 0.5 * (dense[k] - dense[k - 1]) * (rates[k] + rates[k - 1]);
    }
    let at = |t: f64| -> (f64, f64) {
        let k = dense.partition_point(|&x| x <= t).clamp(1, dense.len() - 1);
        let (t0, t1) = (dense[k - 1], dense[k]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        (
            rates[k - 1] + w * (rates[k] - rates[k - 1]),
            cumulative[k - 1] + w * (cumulative[k] - cumulative[k - 1]),
        )
    };
    let samples: Vec<Value> = times
        .iter()
        .map(|&t| {
            let (rate, integral) = at(t);
            json!({ "t": t, "rate": rate, "survival": (-integral).exp() })
        })
        .collect();
    let predicted = (-cumulative[dense.len() - 1]).exp();
    let mut out = json!({
        "applicable": true,
        "omega0": omega0,
        "gamma1": g1,
        "gamma2": g2,
        "predicted_survival": predicted,
        "samples": samples,
    });
    if with_simulation {
        let (_, first) = adiabatic_setup(system, &s.grid)?;
        let dark = first.dark_index.ok_or_else(|| {
            Error::InvalidArgument("no unique dark state at the start of the window".into())
        })?;
        let run = propagate_adiabatic5(system, &s.grid, &adiabatic_pure(system.len(), dark))?;
        let simulated = *run.dark_population().last().unwrap();
        out["simulated_dark_population"] = json!(simulated);
        out["relative_difference"] = json!((predicted - simulated).abs() / simulated);
    }
    Ok(out)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let cfg = load(&a.scenario)?;
    let times = sample_times(&cfg, &a)?;
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Config(format!("sample time {t} is not finite")));
    }
    let s = &cfg.scenario;
    let dark = darkstate_json(&s.system, &times)?;
    let adiabatic = adiabaticity_json(&s.system, &s.grid, &times);
    let decay = decay_json(s, &times, a.with_simulation)?;
    let dir = &cfg.output.dir;
    let mut out = Artifacts::new();
    out.add(dir.join("darkstate.json"), json_string(&dark)?);
    out.add(dir.join("adiabaticity.json"), json_string(&adiabatic)?);
    out.add(dir.join("decay_prediction.json"), json_string(&decay)?);
    out.commit()?;
    println!(
        "analysed {} at {} sample times into {}",
        s.name,
        times.len(),
        dir.display()
    );
    Ok(())
}
