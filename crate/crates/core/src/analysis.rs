//! Transfer metrics, the dark-state decay law and adiabaticity measures.

use serde::Serialize;

use crate::chain::{ChainSystem, EnvelopeShape};
use crate::error::{Error, Result};
use crate::hamiltonian::DriveSummary;
use crate::integrator::IntegratorStats;
use crate::propagate::Trajectory;

/// Final dP/dt below this fraction of the largest |dP/dt| counts as saturated.
pub const SATURATION_THRESHOLD: f64 = 1e-6;
/// Envelopes above this fraction of their peak count as "on" for the overlap region.
pub const OVERLAP_FRACTION: f64 = 0.01;
/// max |θ̇|/Ω_eff above this is flagged non-adiabatic.
pub const ADIABATIC_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Efficiency {
    pub value: f64,
    /// False when the target population was still changing at the last grid point.
    pub saturated: bool,
}

/// Target population at the end of the trajectory, with a saturation check.
pub fn transfer_efficiency(traj: &Trajectory, target: usize) -> Efficiency {
    let series = traj.series(target);
    let value = series.last().copied().unwrap_or(0.0);
    let rates: Vec<f64> = series
        .windows(2)
        .zip(traj.times.windows(2))
        .map(|(p, t)| ((p[1] - p[0]) / (t[1] - t[0])).abs())
        .collect();
    let max_rate = rates.iter().cloned().fold(0.0, f64::max);
    let final_rate = rates.last().copied().unwrap_or(0.0);
    Efficiency {
        value,
        saturated: max_rate == 0.0 || final_rate <= SATURATION_THRESHOLD * max_rate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakPopulation {
    pub level: usize,
    pub t_peak: f64,
    pub p_peak: f64,
}

/// Per-level maximum over the grid, refined by a parabola through the three
/// samples around an interior maximum.
pub fn peak_populations(traj: &Trajectory, levels: &[usize]) -> Vec<PeakPopulation> {
    levels
        .iter()
        .map(|&level| {
            let series = traj.series(level);
            let (k, &p) = series
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("trajectory is not empty");
            let (mut t_peak, mut p_peak) = (traj.times[k], p);
            if k > 0 && k + 1 < series.len() {
                let (y0, y1, y2) = (series[k - 1], series[k], series[k + 1]);
                let denom = y0 - 2.0 * y1 + y2;
                if denom < 0.0 {
                    let offset = 0.5 * (y0 - y2) / denom;
                    if offset.abs() <= 1.0 {
                        let dt = traj.times[k + 1] - traj.times[k];
                        t_peak += offset * dt;
                        p_peak = y1 - 0.25 * (y0 - y2) * offset;
                    }
                }
            }
            PeakPopulation {
                level,
                t_peak,
                p_peak,
            }
        })
        .collect()
}

/// Instantaneous dark-state loss rate for the five-level chain with interior
/// couplings Ω₀, valid to order (Ω/Ω₀)²:
///
/// (Γ₂ + Γ₁cos²θ)·((Ω/2Ω₀)·sin 2θ)² + Γ₁cos²θ
pub fn dark_decay_rate(theta: f64, omega_eff: f64, omega0: f64, gamma1: f64, gamma2: f64) -> f64 {
    let c2 = theta.cos().powi(2);
    let mix = omega_eff / (2.0 * omega0) * (2.0 * theta).sin();
    (gamma2 + gamma1 * c2) * mix * mix + gamma1 * c2
}

/// θ(t) along `times`, holding the last defined value (or the next one, at
/// the start) through instants where pump and Stokes both vanish.
pub fn mixing_angles(system: &ChainSystem, times: &[f64]) -> Vec<Option<f64>> {
    let raw: Vec<Option<f64>> = times
        .iter()
        .map(|&t| DriveSummary::at(system, t).theta().value())
        .collect();
    let first = raw.iter().flatten().next().copied();
    let mut last = first;
    raw.into_iter()
        .map(|v| {
            if v.is_some() {
                last = v;
            }
            last
        })
        .collect()
}

/// Interior Rabi frequency Ω₀ for a five-level chain with equal constant
/// interior couplings.
pub fn five_level_omega0(system: &ChainSystem) -> Option<f64> {
    let c = system.couplings();
    (system.len() == 5
        && c[1].drive.shape == EnvelopeShape::Constant
        && c[2].drive.shape == EnvelopeShape::Constant
        && c[1].drive.peak_rabi == c[2].drive.peak_rabi
        && c[1].drive.peak_rabi > 0.0)
        .then_some(c[1].drive.peak_rabi)
}

/// Dark-state survival exp(−∫ rate dt), trapezoidal over `times`.
pub fn dark_survival_prediction(
    system: &ChainSystem,
    times: &[f64],
    gamma1: f64,
    gamma2: f64,
) -> Result<f64> {
    let omega0 = five_level_omega0(system).ok_or_else(|| {
        Error::InvalidArgument("decay law needs a five-level chain with equal constant Ω₀".into())
    })?;
    Ok((-dark_decay_exponent(system, times, omega0, gamma1, gamma2)).exp())
}

fn dark_decay_exponent(system: &ChainSystem, times: &[f64], omega0: f64, g1: f64, g2: f64) -> f64 {
    let thetas = mixing_angles(system, times);
    let rates: Vec<f64> = times
        .iter()
        .zip(&thetas)
        .map(|(&t, th)| {
            let theta = th.unwrap_or(0.0);
            dark_decay_rate(theta, DriveSummary::at(system, t).omega_eff, omega0, g1, g2)
        })
        .collect();
    times
        .windows(2)
        .zip(rates.windows(2))
        .map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticityMetrics {
    /// max over the window of |θ̇|/Ω_eff.
    pub max_theta_dot_over_omega: f64,
    /// Duration over which pump and Stokes both exceed 1% of their peaks, s.
    pub transfer_time: f64,
    /// Smallest Ω_eff inside that overlap, s⁻¹.
    pub min_omega_eff_in_overlap: f64,
    /// min Ω_eff · T_tr.
    pub omega_eff_t_tr: f64,
    pub adiabatic: bool,
}

/// θ̇ = (Ω̇_p Ω_s − Ω_p Ω̇_s)/Ω_eff².
pub fn theta_dot(system: &ChainSystem, t: f64) -> Option<f64> {
    let c = system.couplings();
    let (p, s) = (&c[0].drive, &c[c.len() - 1].drive);
    let (op, os) = (p.eval(t), s.eval(t));
    let denom = op * op + os * os;
    (denom > 0.0).then(|| (p.derivative(t) * os - op * s.derivative(t)) / denom)
}

/// Adiabaticity of the pump/Stokes schedule sampled at `times`.
pub fn adiabaticity_metrics(system: &ChainSystem, times: &[f64]) -> Result<AdiabaticityMetrics> {
    let c = system.couplings();
    let (pump, stokes) = (&c[0].drive, &c[c.len() - 1].drive);
    let pump_peak = times.iter().map(|&t| pump.eval(t)).fold(0.0, f64::max);
    let stokes_peak = times.iter().map(|&t| stokes.eval(t)).fold(0.0, f64::max);
    if pump_peak <= 0.0 && stokes_peak <= 0.0 {
        return Err(Error::InvalidArgument(
            "pump and Stokes vanish over the whole window".into(),
        ));
    }

    let mut max_ratio = 0.0f64;
    for &t in times {
        let omega = DriveSummary::at(system, t).omega_eff;
        if omega > 0.0 {
            if let Some(td) = theta_dot(system, t) {
                max_ratio = max_ratio.max(td.abs() / omega);
            }
        }
    }

    let on = |t: f64| {
        pump.eval(t) > OVERLAP_FRACTION * pump_peak
            && stokes.eval(t) > OVERLAP_FRACTION * stokes_peak
    };
    let inside: Vec<usize> = (0..times.len()).filter(|&k| on(times[k])).collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return Err(Error::NoOverlap);
    };
    let edge = |a: f64, b: f64| {
        // Bisect the on/off boundary between a (one side) and b (other side).
        let state_a = on(a);
        let (mut lo, mut hi) = (a, b);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if on(mid) == state_a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let start = if first > 0 {
        edge(times[first - 1], times[first])
    } else {
        times[first]
    };
    let end = if last + 1 < times.len() {
        edge(times[last], times[last + 1])
    } else {
        times[last]
    };
    let transfer_time = end - start;
    let min_omega = inside
        .iter()
        .map(|&k| DriveSummary::at(system, times[k]).omega_eff)
        .chain([start, end].map(|t| DriveSummary::at(system, t).omega_eff))
        .fold(f64::INFINITY, f64::min);
    Ok(AdiabaticityMetrics {
        max_theta_dot_over_omega: max_ratio,
        transfer_time,
        min_omega_eff_in_overlap: min_omega,
        omega_eff_t_tr: min_omega * transfer_time,
        adiabatic: max_ratio <= ADIABATIC_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPeak {
    pub level: usize,
    pub label: String,
    pub t_peak: f64,
    pub p_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub efficiency: f64,
    pub saturated: bool,
    pub initial_level: usize,
    pub target_level: usize,
    pub target_label: String,
    /// 1 − tr ρ(end).
    pub total_loss: f64,
    /// Population left on non-target levels at the end.
    pub residual_population: f64,
    pub final_populations: Vec<f64>,
    pub peak_populations: Vec<LevelPeak>,
    /// Largest peak among ground levels strictly between initial and target.
    pub peak_intermediate_ground: Option<f64>,
    pub adiabaticity: Option<AdiabaticityMetrics>,
    /// exp(−∫ dark decay rate dt) for five-level chains with equal constant Ω₀.
    pub predicted_dark_survival: Option<f64>,
    pub integrator: IntegratorStats,
}

/// Samples used for schedule-only metrics: at least 4001 across the window.
pub fn metric_times(traj_times: &[f64]) -> Vec<f64> {
    let (t0, t1) = (traj_times[0], *traj_times.last().unwrap());
    let n = traj_times.len().max(4001);
    (0..n)
        .map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn transfer_report(system: &ChainSystem, traj: &Trajectory) -> Result<TransferReport> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let target = system.target_level();
    let eff = transfer_efficiency(traj, target);
    let finals = traj.final_populations().to_vec();
    let trace_end = *traj.trace.last().unwrap();
    let residual = finals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, p)| p)
        .sum();
    let all: Vec<usize> = (0..system.len()).collect();
    let peaks: Vec<LevelPeak> = peak_populations(traj, &all)
        .into_iter()
        .map(|p| LevelPeak {
            level: p.level,
            label: system.levels()[p.level].label.clone(),
            t_peak: p.t_peak,
            p_peak: p.p_peak,
        })
        .collect();
    let peak_intermediate_ground = system
        .intermediate_ground_levels()
        .iter()
        .map(|&i| peaks[i].p_peak)
        .reduce(f64::max);
    let times = metric_times(&traj.times);
    let adiabaticity = adiabaticity_metrics(system, &times).ok();
    let predicted_dark_survival = five_level_omega0(system).map(|omega0| {
        let l = system.levels();
        (-dark_decay_exponent(system, &times, omega0, l[0].loss_rate, l[2].loss_rate)).exp()
    });
    Ok(TransferReport {
        efficiency: eff.value,
        saturated: eff.saturated,
        initial_level: system.initial_level(),
        target_level: target,
        target_label: system.levels()[target].label.clone(),
        total_loss: 1.0 - trace_end,
        residual_population: residual,
        final_populations: finals,
        peak_populations: peaks,
        peak_intermediate_ground,
        adiabaticity,
        predicted_dark_survival,
        integrator: traj.stats,
    })
}
