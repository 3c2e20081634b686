//! Chain description: levels, couplings, pulse envelopes and the simulation grid.
//!
//! Levels alternate ground/excited starting and ending on a ground level, so a
//! valid chain always has an odd number N = 2k+1 of levels and N−1 nearest
//! neighbour couplings. Ground levels sit at zero energy (every Raman pair is
//! two-photon resonant); excited levels may carry a one-photon detuning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Ground,
    Excited,
}

impl LevelKind {
    /// Kind required at a given chain position.
    pub fn at(index: usize) -> Self {
        if index % 2 == 0 {
            LevelKind::Ground
        } else {
            LevelKind::Excited
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub kind: LevelKind,
    pub label: String,
    /// Population loss rate out of the chain, s⁻¹.
    #[serde(default)]
    pub loss_rate: f64,
    /// One-photon detuning, s⁻¹. Must be zero on ground levels.
    #[serde(default)]
    pub detuning: f64,
}

impl Level {
    pub fn ground(label: impl Into<String>, loss_rate: f64) -> Self {
        Level {
            kind: LevelKind::Ground,
            label: label.into(),
            loss_rate,
            detuning: 0.0,
        }
    }

    pub fn excited(label: impl Into<String>, loss_rate: f64, detuning: f64) -> Self {
        Level {
            kind: LevelKind::Excited,
            label: label.into(),
            loss_rate,
            detuning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Constant,
    TanhOn,
    TanhOff,
    /// Not part of the original scheme; provided for robustness studies.
    Gaussian,
}

/// Time dependence of one Rabi frequency.
///
/// * `TanhOn`:  peak·(1 + tanh((t − τ/2)/T))/2
/// * `TanhOff`: peak·(1 − tanh((t + τ/2)/T))/2
/// * `Gaussian`: peak·exp(−(t − center)²/T²)
/// * `Constant`: peak
///
/// With τ < 0 the `TanhOff` (Stokes-side) field switches off after the `TanhOn`
/// (pump-side) field has switched on, which is the counterintuitive ordering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: EnvelopeShape,
    /// Peak Rabi frequency, s⁻¹.
    pub peak_rabi: f64,
    /// Switching width T, s.
    #[serde(default)]
    pub width: f64,
    /// Delay τ, s.
    #[serde(default)]
    pub delay: f64,
    /// Gaussian center, s.
    #[serde(default)]
    pub center: f64,
}

impl PulseEnvelope {
    pub fn constant(peak_rabi: f64) -> Self {
        PulseEnvelope {
            shape: EnvelopeShape::Constant,
            peak_rabi,
            width: 0.0,
            delay: 0.0,
            center: 0.0,
        }
    }

    pub fn tanh_on(peak_rabi: f64, width: f64, delay: f64) -> Self {
        PulseEnvelope {
            shape: EnvelopeShape::TanhOn,
            peak_rabi,
            width,
            delay,
            center: 0.0,
        }
    }

    pub fn tanh_off(peak_rabi: f64, width: f64, delay: f64) -> Self {
        PulseEnvelope {
            shape: EnvelopeShape::TanhOff,
            peak_rabi,
            width,
            delay,
            center: 0.0,
        }
    }

    pub fn gaussian(peak_rabi: f64, width: f64, center: f64) -> Self {
        PulseEnvelope {
            shape: EnvelopeShape::Gaussian,
            peak_rabi,
            width,
            delay: 0.0,
            center,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.shape != EnvelopeShape::Constant
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_rabi >= 0.0) || !self.peak_rabi.is_finite() {
            return Err(Error::InvalidEnvelope(format!(
                "peak Rabi frequency must be finite and non-negative, got {}",
                self.peak_rabi
            )));
        }
        if !self.delay.is_finite() || !self.center.is_finite() {
            return Err(Error::InvalidEnvelope(
                "delay and center must be finite".into(),
            ));
        }
        if self.is_time_dependent() && !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidEnvelope(format!(
                "width must be positive for {:?} envelopes, got {}",
                self.shape, self.width
            )));
        }
        Ok(())
    }

    /// Rabi frequency at time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.shape {
            EnvelopeShape::Constant => self.peak_rabi,
            EnvelopeShape::TanhOn => {
                0.5 * self.peak_rabi * (1.0 + ((t - 0.5 * self.delay) / self.width).tanh())
            }
            EnvelopeShape::TanhOff => {
                0.5 * self.peak_rabi * (1.0 - ((t + 0.5 * self.delay) / self.width).tanh())
            }
            EnvelopeShape::Gaussian => {
                let x = (t - self.center) / self.width;
                self.peak_rabi * (-x * x).exp()
            }
        }
    }

    /// Time derivative of the Rabi frequency at `t`.
    pub fn derivative(&self, t: f64) -> f64 {
        let sech2 = |x: f64| {
            let c = x.cosh();
            if c.is_finite() {
                1.0 / (c * c)
            } else {
                0.0
            }
        };
        match self.shape {
            EnvelopeShape::Constant => 0.0,
            EnvelopeShape::TanhOn => {
                0.5 * self.peak_rabi / self.width * sech2((t - 0.5 * self.delay) / self.width)
            }
            EnvelopeShape::TanhOff => {
                -0.5 * self.peak_rabi / self.width * sech2((t + 0.5 * self.delay) / self.width)
            }
            EnvelopeShape::Gaussian => {
                let x = (t - self.center) / self.width;
                -2.0 * x / self.width * self.peak_rabi * (-x * x).exp()
            }
        }
    }

    /// Times around which the envelope changes, used to size default windows.
    fn switch_points(&self) -> Option<(f64, f64)> {
        match self.shape {
            EnvelopeShape::Constant => None,
            EnvelopeShape::TanhOn => Some((0.5 * self.delay, self.width)),
            EnvelopeShape::TanhOff => Some((-0.5 * self.delay, self.width)),
            EnvelopeShape::Gaussian => Some((self.center, self.width)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Couples levels `lower_index` and `lower_index + 1`.
    pub lower_index: usize,
    /// Transition dipole moment, Debye.
    pub dipole_moment: f64,
    /// Transition wavelength, nm. Metadata only.
    #[serde(default)]
    pub wavelength: Option<f64>,
    pub drive: PulseEnvelope,
}

/// Unvalidated chain description. Turn it into a [`ChainSystem`] with
/// [`validate_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub levels: Vec<Level>,
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub initial_level: usize,
    #[serde(default)]
    pub target_level: Option<usize>,
}

/// A validated chain. Immutable; edit through [`ChainSystem::to_spec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSystem {
    levels: Vec<Level>,
    couplings: Vec<Coupling>,
    initial_level: usize,
    target_level: usize,
}

/// Check every chain invariant and return the canonical (coupling-sorted) system.
pub fn validate_chain(spec: ChainSpec) -> Result<ChainSystem> {
    let ChainSpec {
        levels,
        mut couplings,
        initial_level,
        target_level,
    } = spec;
    let n = levels.len();
    if n < 3 {
        return Err(Error::InvalidChain(format!(
            "need at least 3 levels, got {n}"
        )));
    }
    if n % 2 == 0 {
        return Err(Error::InvalidChain(format!(
            "level count must be odd (ground-excited-...-ground), got {n}"
        )));
    }
    for (i, level) in levels.iter().enumerate() {
        if level.kind != LevelKind::at(i) {
            return Err(Error::InvalidChain(format!(
                "level {i} ({}) must be {:?}; kinds alternate starting from ground",
                level.label,
                LevelKind::at(i)
            )));
        }
        if !(level.loss_rate >= 0.0) || !level.loss_rate.is_finite() {
            return Err(Error::InvalidChain(format!(
                "level {i} loss rate must be finite and non-negative, got {}",
                level.loss_rate
            )));
        }
        if !level.detuning.is_finite() {
            return Err(Error::InvalidChain(format!(
                "level {i} detuning is not finite"
            )));
        }
        if level.kind == LevelKind::Ground && level.detuning != 0.0 {
            return Err(Error::InvalidChain(format!(
                "ground level {i} has detuning {}; Raman resonance requires zero",
                level.detuning
            )));
        }
    }
    couplings.sort_by_key(|c| c.lower_index);
    for (i, coupling) in couplings.iter().enumerate() {
        if coupling.lower_index + 1 >= n {
            return Err(Error::InvalidChain(format!(
                "coupling {} -> {} is outside the chain",
                coupling.lower_index,
                coupling.lower_index + 1
            )));
        }
        if coupling.lower_index != i {
            let kind = if coupling.lower_index < i {
                "duplicate"
            } else {
                "missing"
            };
            return Err(Error::InvalidChain(format!(
                "{kind} coupling for levels {i} -> {}",
                i + 1
            )));
        }
        if !(coupling.dipole_moment > 0.0) || !coupling.dipole_moment.is_finite() {
            return Err(Error::InvalidChain(format!(
                "coupling {i} dipole moment must be positive, got {}",
                coupling.dipole_moment
            )));
        }
        coupling.drive.validate()?;
    }
    if couplings.len() != n - 1 {
        return Err(Error::InvalidChain(format!(
            "missing coupling for levels {} -> {}",
            couplings.len(),
            couplings.len() + 1
        )));
    }
    let target_level = target_level.unwrap_or(n - 1);
    for (name, idx) in [("initial", initial_level), ("target", target_level)] {
        if idx >= n || levels[idx].kind != LevelKind::Ground {
            return Err(Error::InvalidChain(format!(
                "{name} level {idx} must be a ground level of the chain"
            )));
        }
    }
    Ok(ChainSystem {
        levels,
        couplings,
        initial_level,
        target_level,
    })
}

impl ChainSystem {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn initial_level(&self) -> usize {
        self.initial_level
    }

    pub fn target_level(&self) -> usize {
        self.target_level
    }

    pub fn to_spec(&self) -> ChainSpec {
        ChainSpec {
            levels: self.levels.clone(),
            couplings: self.couplings.clone(),
            initial_level: self.initial_level,
            target_level: Some(self.target_level),
        }
    }

    pub fn loss_rates(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.loss_rate).collect()
    }

    pub fn has_loss(&self) -> bool {
        self.levels.iter().any(|l| l.loss_rate > 0.0)
    }

    /// Rabi frequencies of every coupling at time `t`.
    pub fn rabi_at(&self, t: f64) -> Vec<f64> {
        self.couplings.iter().map(|c| c.drive.eval(t)).collect()
    }

    pub fn rabi_derivative_at(&self, t: f64) -> Vec<f64> {
        self.couplings
            .iter()
            .map(|c| c.drive.derivative(t))
            .collect()
    }

    /// Indices of the ground levels strictly between the initial and target levels.
    pub fn intermediate_ground_levels(&self) -> Vec<usize> {
        let (lo, hi) = if self.initial_level <= self.target_level {
            (self.initial_level, self.target_level)
        } else {
            (self.target_level, self.initial_level)
        };
        (lo + 1..hi).filter(|i| i % 2 == 0).collect()
    }

    /// Window covering every switching point by eight widths on both sides.
    ///
    /// For a tanh pump/Stokes pair this is [τ/2 − 8T, −τ/2 + 8T] (ordered).
    /// Returns `None` when nothing in the chain depends on time.
    pub fn default_window(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.couplings {
            if let Some((at, width)) = c.drive.switch_points() {
                lo = lo.min(at - 8.0 * width);
                hi = hi.max(at + 8.0 * width);
            }
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// Time window, output sampling and integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub output_points: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl SimulationGrid {
    pub const DEFAULT_REL_TOL: f64 = 1e-10;
    pub const DEFAULT_ABS_TOL: f64 = 1e-12;

    pub fn new(t_start: f64, t_end: f64, output_points: usize) -> Self {
        SimulationGrid {
            t_start,
            t_end,
            output_points,
            rel_tol: Self::DEFAULT_REL_TOL,
            abs_tol: Self::DEFAULT_ABS_TOL,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    /// Default grid for a chain: its [`ChainSystem::default_window`] sampled at
    /// `output_points`.
    pub fn for_system(system: &ChainSystem, output_points: usize) -> Result<Self> {
        let (t0, t1) = system.default_window().ok_or_else(|| {
            Error::InvalidGrid("chain has no time-dependent drive; give an explicit window".into())
        })?;
        Ok(SimulationGrid::new(t0, t1, output_points))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_start.is_finite() || !self.t_end.is_finite() || !(self.t_end > self.t_start) {
            return Err(Error::InvalidGrid(format!(
                "need finite t_end > t_start, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if self.output_points < 2 {
            return Err(Error::InvalidGrid("need at least 2 output points".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidGrid("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Evenly spaced output times; the last one is exactly `t_end`.
    pub fn times(&self) -> Vec<f64> {
        let n = self.output_points;
        let span = self.t_end - self.t_start;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.t_end
                } else {
                    self.t_start + span * (i as f64) / ((n - 1) as f64)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn five_level_spec() -> ChainSpec {
        let levels = vec![
            Level::ground("g1", 0.0),
            Level::excited("e1", 0.0, 0.0),
            Level::ground("g2", 0.0),
            Level::excited("e2", 0.0, 0.0),
            Level::ground("g3", 0.0),
        ];
        let couplings = (0..4)
            .map(|i| Coupling {
                lower_index: i,
                dipole_moment: 1.0,
                wavelength: None,
                drive: PulseEnvelope::constant(1e7),
            })
            .collect();
        ChainSpec {
            levels,
            couplings,
            initial_level: 0,
            target_level: None,
        }
    }

    #[test]
    fn minimal_five_level_chain_is_accepted() {
        let sys = validate_chain(five_level_spec()).unwrap();
        assert_eq!(sys.len(), 5);
        assert_eq!(sys.target_level(), 4);
        assert_eq!(sys.intermediate_ground_levels(), vec![2]);
    }

    #[test]
    fn even_chain_is_rejected() {
        let mut spec = five_level_spec();
        spec.levels.pop();
        spec.couplings.pop();
        assert!(matches!(validate_chain(spec), Err(Error::InvalidChain(_))));
    }

    #[test]
    fn duplicate_and_missing_couplings_are_rejected() {
        let mut dup = five_level_spec();
        dup.couplings[3].lower_index = 2;
        let err = validate_chain(dup).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");

        let mut missing = five_level_spec();
        missing.couplings.remove(1);
        let err = validate_chain(missing).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }

    #[test]
    fn ground_detuning_is_rejected() {
        let mut spec = five_level_spec();
        spec.levels[2].detuning = 1.0;
        assert!(validate_chain(spec).is_err());
    }

    #[test]
    fn tanh_limits_and_midpoint() {
        let p = PulseEnvelope::tanh_on(3e7, 1e-6, -2e-6);
        assert!(p.eval(-1.0).abs() < 1e-9);
        assert!((p.eval(1.0) - 3e7).abs() < 1e-6);
        assert!((p.eval(-1e-6) - 1.5e7).abs() < 1e-6);
    }

    #[test]
    fn stokes_switches_off_after_pump_switches_on() {
        let stokes = PulseEnvelope::tanh_off(3e7, 1e-6, -2e-6);
        assert!((stokes.eval(1e-6) - 1.5e7).abs() < 1e-6);
        let pump = PulseEnvelope::tanh_on(3e7, 1e-6, -2e-6);
        assert!(stokes.eval(-5e-6) > pump.eval(-5e-6));
        assert!(stokes.eval(5e-6) < pump.eval(5e-6));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for env in [
            PulseEnvelope::tanh_on(2.0, 0.7, -0.4),
            PulseEnvelope::tanh_off(2.0, 0.7, -0.4),
            PulseEnvelope::gaussian(2.0, 0.7, 0.3),
        ] {
            for &t in &[-1.3, -0.2, 0.0, 0.45, 1.1] {
                let h = 1e-6;
                let fd = (env.eval(t + h) - env.eval(t - h)) / (2.0 * h);
                assert!((fd - env.derivative(t)).abs() < 1e-8, "{env:?} {t}");
            }
        }
    }

    #[test]
    fn default_window_covers_both_switch_points() {
        let mut spec = five_level_spec();
        spec.couplings[0].drive = PulseEnvelope::tanh_on(1e7, 1e-6, -2e-6);
        spec.couplings[3].drive = PulseEnvelope::tanh_off(1e7, 1e-6, -2e-6);
        let sys = validate_chain(spec).unwrap();
        let (t0, t1) = sys.default_window().unwrap();
        assert!((t0 + 9e-6).abs() < 1e-18 && (t1 - 9e-6).abs() < 1e-18);
    }

    #[test]
    fn grid_times_end_exactly() {
        let g = SimulationGrid::new(-1.0, 2.0, 7);
        let ts = g.times();
        assert_eq!(ts.len(), 7);
        assert_eq!(ts[0], -1.0);
        assert_eq!(*ts.last().unwrap(), 2.0);
        assert!(SimulationGrid::new(1.0, 1.0, 5).validate().is_err());
    }

    proptest! {
        #[test]
        fn tanh_envelopes_are_monotone_and_bounded(
            t in -20.0f64..20.0, dt in 0.0f64..5.0, width in 0.1f64..3.0, delay in -5.0f64..5.0
        ) {
            let on = PulseEnvelope::tanh_on(1.0, width, delay);
            let off = PulseEnvelope::tanh_off(1.0, width, delay);
            prop_assert!(on.eval(t + dt) >= on.eval(t));
            prop_assert!(off.eval(t + dt) <= off.eval(t));
            for v in [on.eval(t), off.eval(t)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn breaking_any_invariant_is_rejected(which in 0usize..7, pos in 0usize..5) {
            let mut spec = five_level_spec();
            match which {
                0 => { spec.levels[pos].loss_rate = -1.0; }
                1 => { spec.levels.swap(pos % 4, pos % 4 + 1); }
                2 => { spec.couplings[pos % 4].dipole_moment = 0.0; }
                3 => { spec.couplings.remove(pos % 4); }
                4 => { spec.couplings[pos % 4].drive.peak_rabi = -1.0; }
                5 => { spec.initial_level = 1 + 2 * (pos % 2); }
                _ => { spec.levels[2 * (pos % 3)].detuning = 1e6; }
            }
            prop_assert!(validate_chain(spec).is_err());
        }
    }
}
