//! Parameter sweeps and Nelder–Mead search over pulse parameters.
//!
//! Every evaluation is a full density-matrix run of a modified preset. Cells and
//! simplex vertices are independent, so they run on a rayon pool; results are
//! always collected in index order, which keeps the output independent of the
//! number of workers.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{metric_times, TransferReport};
use crate::chain::{validate_chain, ChainSpec, ChainSystem, EnvelopeShape};
use crate::error::{Error, Result};
use crate::hamiltonian::DriveSummary;
use crate::scenarios::{simulate, ScenarioPreset};

/// Objective assigned to a candidate whose run failed.
pub const FAILED_OBJECTIVE: f64 = -1.0e3;
/// Base penalty for breaking the Ω_eff cap; the relative excess is added on top.
pub const CAP_PENALTY: f64 = 10.0;

/// A tunable pulse parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Param {
    /// Switching width T of every time-dependent drive, s.
    Width,
    /// Delay τ of every tanh drive, s.
    Delay,
    /// τ/T, applied after any width change.
    DelayRatio,
    /// Peak Rabi frequency of one link (0-based internally, `peak_link<k>` 1-based by name).
    PeakRabi(usize),
    /// Rabi frequency of every constant (CW) link, s⁻¹.
    Omega0,
}

impl Param {
    pub fn parse(name: &str) -> Result<Param> {
        let p = match name {
            "T" | "width" => Param::Width,
            "tau" | "delay" => Param::Delay,
            "tau_over_T" | "delay_ratio" => Param::DelayRatio,
            "omega0" => Param::Omega0,
            _ => {
                let k = name
                    .strip_prefix("peak_link")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "unknown parameter '{name}' (expected T, tau, tau_over_T, omega0 or peak_link<k>)"
                        ))
                    })?;
                Param::PeakRabi(k - 1)
            }
        };
        Ok(p)
    }

    pub fn name(&self) -> String {
        match self {
            Param::Width => "T".into(),
            Param::Delay => "tau".into(),
            Param::DelayRatio => "tau_over_T".into(),
            Param::PeakRabi(i) => format!("peak_link{}", i + 1),
            Param::Omega0 => "omega0".into(),
        }
    }

    /// Value of this parameter in `system`, if it is meaningful there.
    pub fn current(&self, system: &ChainSystem) -> Option<f64> {
        let c = system.couplings();
        let tanh = c.iter().find(|c| is_tanh(c.drive.shape));
        match self {
            Param::Width => c
                .iter()
                .find(|c| c.drive.is_time_dependent())
                .map(|c| c.drive.width),
            Param::Delay => tanh.map(|c| c.drive.delay),
            Param::DelayRatio => tanh.map(|c| c.drive.delay / c.drive.width),
            Param::PeakRabi(i) => c.get(*i).map(|c| c.drive.peak_rabi),
            Param::Omega0 => c
                .iter()
                .find(|c| c.drive.shape == EnvelopeShape::Constant)
                .map(|c| c.drive.peak_rabi),
        }
    }

    fn apply(&self, spec: &mut ChainSpec, value: f64) -> Result<()> {
        let mut touched = 0;
        for (i, c) in spec.couplings.iter_mut().enumerate() {
            let d = &mut c.drive;
            let hit = match self {
                Param::Width => d.is_time_dependent(),
                Param::Delay | Param::DelayRatio => is_tanh(d.shape),
                Param::PeakRabi(k) => i == *k,
                Param::Omega0 => d.shape == EnvelopeShape::Constant,
            };
            if !hit {
                continue;
            }
            touched += 1;
            match self {
                Param::Width => d.width = value,
                Param::Delay => d.delay = value,
                Param::DelayRatio => d.delay = value * d.width,
                Param::PeakRabi(_) | Param::Omega0 => d.peak_rabi = value,
            }
        }
        if touched == 0 {
            return Err(Error::Config(format!(
                "parameter '{}' matches no drive in this chain",
                self.name()
            )));
        }
        Ok(())
    }
}

fn is_tanh(shape: EnvelopeShape) -> bool {
    matches!(shape, EnvelopeShape::TanhOn | EnvelopeShape::TanhOff)
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for Param {
    type Error = Error;
    fn try_from(s: String) -> Result<Param> {
        Param::parse(&s)
    }
}

impl From<Param> for String {
    fn from(p: Param) -> String {
        p.name()
    }
}

/// Copy of `preset` with the given parameter values applied. τ/T goes last so
/// it sees the final width. An automatic window follows the new schedule.
pub fn apply_params(preset: &ScenarioPreset, values: &[(Param, f64)]) -> Result<ScenarioPreset> {
    let mut spec = preset.system.to_spec();
    for &(p, v) in values.iter().filter(|(p, _)| *p != Param::DelayRatio) {
        if !v.is_finite() {
            return Err(Error::Config(format!(
                "parameter '{p}' must be finite, got {v}"
            )));
        }
        p.apply(&mut spec, v)?;
    }
    for &(p, v) in values.iter().filter(|(p, _)| *p == Param::DelayRatio) {
        p.apply(&mut spec, v)?;
    }
    preset.with_system(validate_chain(spec)?)
}

/// Short per-run summary kept for every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub efficiency: f64,
    pub total_loss: f64,
    pub peak_intermediate_ground: Option<f64>,
    /// Peak population of each intermediate ground level, in chain order.
    pub intermediate_peaks: Vec<f64>,
    pub max_theta_dot_over_omega: Option<f64>,
    pub accepted_steps: usize,
}

impl CellSummary {
    fn new(system: &ChainSystem, r: &TransferReport) -> Self {
        CellSummary {
            efficiency: r.efficiency,
            total_loss: r.total_loss,
            peak_intermediate_ground: r.peak_intermediate_ground,
            intermediate_peaks: system
                .intermediate_ground_levels()
                .iter()
                .map(|&i| r.peak_populations[i].p_peak)
                .collect(),
            max_theta_dot_over_omega: r.adiabaticity.map(|a| a.max_theta_dot_over_omega),
            accepted_steps: r.integrator.accepted_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(param: Param, lo: f64, hi: f64, n: usize) -> Self {
        let values = match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n)
                .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                .collect(),
        };
        SweepAxis { param, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("sweep needs at least one axis".into()));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::Config(format!(
                    "sweep axis '{}' has no values",
                    a.param
                )));
            }
            if let Some(v) = a.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "sweep axis '{}' has non-finite value {v}",
                    a.param
                )));
            }
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|b| b.param == a.param) {
                return Err(Error::Config(format!(
                    "sweep axis '{}' appears twice",
                    a.param
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Parameter values of cell `index`; the first axis varies slowest.
    pub fn cell(&self, mut index: usize) -> Vec<(Param, f64)> {
        let mut out = vec![(Param::Width, 0.0); self.axes.len()];
        for (slot, a) in out.iter_mut().zip(&self.axes).rev() {
            let n = a.values.len();
            *slot = (a.param, a.values[index % n]);
            index /= n;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(CellSummary),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub values: Vec<f64>,
    pub outcome: CellOutcome,
}

impl SweepCell {
    pub fn efficiency(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Ok(s) => Some(s.efficiency),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub params: Vec<String>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Highest-efficiency successful cell; ties go to the lower index.
    pub fn best(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter_map(|c| c.efficiency().map(|e| (c, e)))
            .fold(None, |acc: Option<(&SweepCell, f64)>, (c, e)| match acc {
                Some((_, be)) if be >= e => acc,
                _ => Some((c, e)),
            })
            .map(|(c, _)| c)
    }

    pub fn failures(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.efficiency().is_none())
            .count()
    }
}

/// Run `f` on a pool with `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_cell(preset: &ScenarioPreset, values: &[(Param, f64)]) -> Result<CellSummary> {
    let p = apply_params(preset, values)?;
    let sim = simulate(&p.system, &p.grid)?;
    Ok(CellSummary::new(&p.system, &sim.report))
}

/// Full-factorial sweep. A failing cell is recorded and the sweep goes on.
pub fn sweep(preset: &ScenarioPreset, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells = with_workers(spec.workers, || {
        (0..spec.cell_count())
            .into_par_iter()
            .map(|index| {
                let values = spec.cell(index);
                let outcome = match run_cell(preset, &values) {
                    Ok(s) => CellOutcome::Ok(s),
                    Err(e) => CellOutcome::Failed {
                        error: e.to_string(),
                    },
                };
                SweepCell {
                    index,
                    values: values.iter().map(|v| v.1).collect(),
                    outcome,
                }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(SweepResult {
        params: spec.axes.iter().map(|a| a.param.name()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: Param,
    pub lower: f64,
    pub upper: f64,
    /// Starting value; defaults to the preset's current value.
    #[serde(default)]
    pub initial: Option<f64>,
    /// Initial simplex edge; defaults to 10% of the bound range.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSpec {
    pub free: Vec<FreeParam>,
    /// Stop once best and worst vertex efficiencies differ by less than this.
    #[serde(default = "OptimizeSpec::default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "OptimizeSpec::default_max_evaluations")]
    pub max_evaluations: usize,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Upper limit on Ω_eff = √(pump² + Stokes²) over the window, s⁻¹.
    #[serde(default)]
    pub omega_eff_cap: Option<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl OptimizeSpec {
    pub const DEFAULT_TOLERANCE: f64 = 1e-4;
    pub const DEFAULT_MAX_EVALUATIONS: usize = 500;

    fn default_tolerance() -> f64 {
        Self::DEFAULT_TOLERANCE
    }

    fn default_max_evaluations() -> usize {
        Self::DEFAULT_MAX_EVALUATIONS
    }

    pub fn new(free: Vec<FreeParam>) -> Self {
        OptimizeSpec {
            free,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_evaluations: Self::DEFAULT_MAX_EVALUATIONS,
            max_iterations: None,
            omega_eff_cap: None,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Config(
                "optimize needs at least one free parameter".into(),
            ));
        }
        for (i, f) in self.free.iter().enumerate() {
            if !f.lower.is_finite() || !f.upper.is_finite() || !(f.lower < f.upper) {
                return Err(Error::Config(format!(
                    "bounds for '{}' must be finite with lower < upper, got [{}, {}]",
                    f.param, f.lower, f.upper
                )));
            }
            if let Some(x) = f.initial {
                if !(x >= f.lower && x <= f.upper) {
                    return Err(Error::Config(format!(
                        "initial value {x} for '{}' lies outside [{}, {}]",
                        f.param, f.lower, f.upper
                    )));
                }
            }
            if let Some(s) = f.scale {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Config(format!(
                        "scale for '{}' must be positive",
                        f.param
                    )));
                }
            }
            if self.free[..i].iter().any(|g| g.param == f.param) {
                return Err(Error::Config(format!(
                    "free parameter '{}' appears twice",
                    f.param
                )));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_evaluations == 0 {
            return Err(Error::Config("max_evaluations must be at least 1".into()));
        }
        if let Some(cap) = self.omega_eff_cap {
            if !(cap > 0.0) {
                return Err(Error::Config("omega_eff_cap must be positive".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub evaluations: usize,
    pub best_objective: f64,
    pub best_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub params: Vec<String>,
    pub initial_values: Vec<f64>,
    pub best_values: Vec<f64>,
    pub best_objective: f64,
    /// Report of the best run; `None` if every candidate failed.
    pub report: Option<TransferReport>,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
    /// Incumbent after every iteration; `best_objective` never decreases.
    pub trace: Vec<TraceEntry>,
}

/// Largest Ω_eff over the preset's window.
pub fn max_omega_eff(preset: &ScenarioPreset) -> f64 {
    metric_times(&[preset.grid.t_start, preset.grid.t_end])
        .into_iter()
        .map(|t| DriveSummary::at(&preset.system, t).omega_eff)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct Evaluation {
    objective: f64,
    report: Option<TransferReport>,
}

fn evaluate(preset: &ScenarioPreset, spec: &OptimizeSpec, x: &[f64]) -> Evaluation {
    let values: Vec<(Param, f64)> = spec
        .free
        .iter()
        .zip(x)
        .map(|(f, &v)| (f.param, v))
        .collect();
    let Ok(p) = apply_params(preset, &values) else {
        return Evaluation {
            objective: FAILED_OBJECTIVE,
            report: None,
        };
    };
    let Ok(sim) = simulate(&p.system, &p.grid) else {
        return Evaluation {
            objective: FAILED_OBJECTIVE,
            report: None,
        };
    };
    let mut objective = sim.report.efficiency;
    if let Some(cap) = spec.omega_eff_cap {
        let peak = max_omega_eff(&p);
        if peak > cap {
            objective -= CAP_PENALTY + (peak - cap) / cap;
        }
    }
    Evaluation {
        objective,
        report: Some(sim.report),
    }
}

struct Search<'a> {
    preset: &'a ScenarioPreset,
    spec: &'a OptimizeSpec,
    evaluations: usize,
    best: (Vec<f64>, Evaluation),
}

fn clamp(spec: &OptimizeSpec, x: &mut [f64]) {
    for (v, f) in x.iter_mut().zip(&spec.free) {
        *v = v.clamp(f.lower, f.upper);
    }
}

impl Search<'_> {
    fn remaining(&self) -> usize {
        self.spec.max_evaluations.saturating_sub(self.evaluations)
    }

    /// Evaluate points in parallel; results in input order.
    fn eval_many(&mut self, points: &[Vec<f64>]) -> Vec<f64> {
        let (preset, spec) = (self.preset, self.spec);
        let evals: Vec<Evaluation> = points
            .par_iter()
            .map(|x| evaluate(preset, spec, x))
            .collect();
        self.evaluations += points.len();
        let mut out = Vec::with_capacity(points.len());
        for (x, e) in points.iter().zip(evals) {
            out.push(e.objective);
            if e.objective > self.best.1.objective {
                self.best = (x.clone(), e);
            }
        }
        out
    }

    fn eval_one(&mut self, x: &[f64]) -> f64 {
        self.eval_many(&[x.to_vec()])[0]
    }
}

/// Maximize transfer efficiency over the free parameters with a bounded
/// Nelder–Mead simplex. Returns the best point seen, never worse than the start.
pub fn optimize(preset: &ScenarioPreset, spec: &OptimizeSpec) -> Result<OptimizeResult> {
    spec.validate()?;
    let x0: Vec<f64> = spec
        .free
        .iter()
        .map(|f| {
            f.initial
                .or_else(|| f.param.current(&preset.system))
                .unwrap_or(0.5 * (f.lower + f.upper))
                .clamp(f.lower, f.upper)
        })
        .collect();
    with_workers(spec.workers, || nelder_mead(preset, spec, x0))?
}

fn nelder_mead(
    preset: &ScenarioPreset,
    spec: &OptimizeSpec,
    x0: Vec<f64>,
) -> Result<OptimizeResult> {
    let n = x0.len();
    let start = evaluate(preset, spec, &x0);
    let mut s = Search {
        preset,
        spec,
        evaluations: 1,
        best: (x0.clone(), start),
    };
    let mut trace = vec![TraceEntry {
        iteration: 0,
        evaluations: 1,
        best_objective: s.best.1.objective,
        best_values: x0.clone(),
    }];
    let max_iterations = spec.max_iterations.unwrap_or(usize::MAX);
    let mut iterations = 0;
    let mut converged = false;
    let mut budget_exhausted = false;

    if max_iterations > 0 {
        let mut simplex = vec![x0.clone()];
        for (i, f) in spec.free.iter().enumerate() {
            let step = f.scale.unwrap_or(0.1 * (f.upper - f.lower));
            let mut x = x0.clone();
            x[i] = if x0[i] + step <= f.upper {
                x0[i] + step
            } else {
                x0[i] - step
            };
            clamp(spec, &mut x);
            simplex.push(x);
        }
        let take = s.remaining().min(n);
        let mut values = vec![s.best.1.objective];
        values.extend(s.eval_many(&simplex[1..1 + take]));
        if take < n {
            budget_exhausted = true;
        } else {
            loop {
                // Sort vertices best (largest objective) first.
                let mut order: Vec<usize> = (0..=n).collect();
                order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
                simplex = order.iter().map(|&k| simplex[k].clone()).collect();
                values = order.iter().map(|&k| values[k]).collect();

                if (values[0] - values[n]).abs() <= spec.tolerance {
                    converged = true;
                    break;
                }
                if iterations >= max_iterations {
                    break;
                }
                if s.remaining() == 0 {
                    budget_exhausted = true;
                    break;
                }
                iterations += 1;

                let mut centroid = vec![0.0; n];
                for x in &simplex[..n] {
                    for (c, v) in centroid.iter_mut().zip(x) {
                        *c += v / n as f64;
                    }
                }
                let along = |coef: f64| {
                    let mut x: Vec<f64> = centroid
                        .iter()
                        .zip(&simplex[n])
                        .map(|(c, w)| c + coef * (c - w))
                        .collect();
                    clamp(spec, &mut x);
                    x
                };
                let xr = along(1.0);
                let fr = s.eval_one(&xr);
                if fr > values[0] {
                    let xe = along(2.0);
                    if s.remaining() > 0 {
                        let fe = s.eval_one(&xe);
                        if fe > fr {
                            simplex[n] = xe;
                            values[n] = fe;
                        } else {
                            simplex[n] = xr;
                            values[n] = fr;
                        }
                    } else {
                        simplex[n] = xr;
                        values[n] = fr;
                    }
                } else if fr > values[n - 1] {
                    simplex[n] = xr;
                    values[n] = fr;
                } else if s.remaining() > 0 {
                    let (xc, outside) = if fr > values[n] {
                        (along(0.5), true)
                    } else {
                        (along(-0.5), false)
                    };
                    let fc = s.eval_one(&xc);
                    let bar = if outside { fr } else { values[n] };
                    if fc > bar {
                        simplex[n] = xc;
                        values[n] = fc;
                    } else {
                        let shrunk: Vec<Vec<f64>> = simplex[1..]
                            .iter()
                            .map(|x| {
                                let mut y: Vec<f64> = simplex[0]
                                    .iter()
                                    .zip(x)
                                    .map(|(b, v)| b + 0.5 * (v - b))
                                    .collect();
                                clamp(spec, &mut y);
                                y
                            })
                            .take(s.remaining())
                            .collect();
                        let fs = s.eval_many(&shrunk);
                        for (k, (x, f)) in shrunk.into_iter().zip(fs).enumerate() {
                            simplex[k + 1] = x;
                            values[k + 1] = f;
                        }
                    }
                }
                trace.push(TraceEntry {
                    iteration: iterations,
                    evaluations: s.evaluations,
                    best_objective: s.best.1.objective,
                    best_values: s.best.0.clone(),
                });
            }
        }
    }

    let Search {
        evaluations, best, ..
    } = s;
    Ok(OptimizeResult {
        params: spec.free.iter().map(|f| f.param.name()).collect(),
        initial_values: x0,
        best_values: best.0,
        best_objective: best.1.objective,
        report: best.1.report,
        evaluations,
        iterations,
        converged,
        budget_exhausted,
        trace,
    })
}
