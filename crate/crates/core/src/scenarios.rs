//! Benchmark systems and the single-run simulation pipeline.

use serde::Serialize;

use crate::analysis::{transfer_report, TransferReport};
use crate::chain::{
    validate_chain, ChainSpec, ChainSystem, Coupling, Level, PulseEnvelope, SimulationGrid,
};
use crate::error::{Error, Result};
use crate::propagate::{propagate_density_with, DensityMatrix, PropagationOptions, Trajectory};
use crate::units::{collision_decay_rate, intensity_from_rabi};

pub const DEFAULT_OUTPUT_POINTS: usize = 2001;

/// Where a numeric preset value comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    /// Dotted path of the field inside the system description.
    pub field: String,
    pub value: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub description: String,
    pub system: ChainSystem,
    pub grid: SimulationGrid,
    /// Recompute the window from the schedule whenever the schedule changes.
    pub auto_window: bool,
    pub provenance: Vec<Provenance>,
}

impl ScenarioPreset {
    /// Replace the chain, re-deriving the window when it is automatic.
    pub fn with_system(&self, system: ChainSystem) -> Result<ScenarioPreset> {
        let mut out = self.clone();
        if self.auto_window {
            let auto = SimulationGrid::for_system(&system, self.grid.output_points)?;
            out.grid.t_start = auto.t_start;
            out.grid.t_end = auto.t_end;
        }
        out.system = system;
        Ok(out)
    }
}

pub const PRESET_NAMES: [&str; 2] = ["rb2-seven", "five-level"];

pub fn preset_description(name: &str) -> Option<&'static str> {
    match name {
        "rb2-seven" => {
            Some("Seven-level 87Rb2 chain from the Feshbach state to X v=0 with collisional losses")
        }
        "five-level" => {
            Some("Five-level model chain: tanh pump/Stokes pair with constant interior couplings")
        }
        _ => None,
    }
}

/// Parameters of the five-level model chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveLevelParams {
    /// Peak Ω_eff/Ω₀ with equal pump and Stokes peaks.
    pub xi: f64,
    /// Interior Rabi frequency Ω₀ = Ω₂ = Ω₃, s⁻¹.
    pub omega0: f64,
    /// Loss of g₁, s⁻¹.
    pub gamma1: f64,
    /// Loss of g₂, s⁻¹.
    pub gamma2: f64,
    /// Loss of e₁ and e₂, s⁻¹.
    pub gamma: f64,
    /// T, s.
    pub width: f64,
    /// τ, s.
    pub delay: f64,
}

impl Default for FiveLevelParams {
    fn default() -> Self {
        FiveLevelParams {
            xi: 0.1,
            omega0: 3.0e8,
            gamma1: 1.0e4,
            gamma2: collision_decay_rate(6e-10, 1e14),
            gamma: 3.0e7,
            width: 1.0e-6,
            delay: -2.0e-6,
        }
    }
}

impl FiveLevelParams {
    pub fn lossless(self) -> Self {
        FiveLevelParams {
            gamma1: 0.0,
            gamma2: 0.0,
            gamma: 0.0,
            ..self
        }
    }

    /// Equal pump and Stokes peak so that √(pump² + Stokes²) = ξ·Ω₀.
    pub fn pulse_peak(&self) -> f64 {
        self.xi * self.omega0 / std::f64::consts::SQRT_2
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "xi" => self.xi = value,
            "omega0" => self.omega0 = value,
            "gamma1" => self.gamma1 = value,
            "gamma2" => self.gamma2 = value,
            "gamma" => self.gamma = value,
            "width" | "T" => self.width = value,
            "delay" | "tau" => self.delay = value,
            _ => {
                return Err(Error::Config(format!(
                    "unknown five-level parameter '{key}' (expected xi, omega0, gamma1, gamma2, gamma, width, delay)"
                )))
            }
        }
        Ok(())
    }
}

fn link(
    lower_index: usize,
    dipole: f64,
    wavelength: Option<f64>,
    drive: PulseEnvelope,
) -> Coupling {
    Coupling {
        lower_index,
        dipole_moment: dipole,
        wavelength,
        drive,
    }
}

/// Five-level chain g₁–e₁–g₂–e₂–g₃: tanh-on pump on link 1, tanh-off Stokes on
/// link 4, constant Ω₀ on links 2 and 3.
pub fn preset_five_level(p: FiveLevelParams) -> Result<ScenarioPreset> {
    for (name, v) in [("xi", p.xi), ("omega0", p.omega0), ("width", p.width)] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let peak = p.pulse_peak();
    let spec = ChainSpec {
        levels: vec![
            Level::ground("g1", p.gamma1),
            Level::excited("e1", p.gamma, 0.0),
            Level::ground("g2", p.gamma2),
            Level::excited("e2", p.gamma, 0.0),
            Level::ground("g3", 0.0),
        ],
        couplings: vec![
            link(0, 1.0, None, PulseEnvelope::tanh_on(peak, p.width, p.delay)),
            link(1, 1.0, None, PulseEnvelope::constant(p.omega0)),
            link(2, 1.0, None, PulseEnvelope::constant(p.omega0)),
            link(
                3,
                1.0,
                None,
                PulseEnvelope::tanh_off(peak, p.width, p.delay),
            ),
        ],
        initial_level: 0,
        target_level: Some(4),
    };
    let system = validate_chain(spec)?;
    let grid = SimulationGrid::for_system(&system, DEFAULT_OUTPUT_POINTS)?;
    let note = |field: &str, value: f64, source: &str| Provenance {
        field: field.into(),
        value,
        source: source.into(),
    };
    Ok(ScenarioPreset {
        name: "five-level".into(),
        description: preset_description("five-level").unwrap().into(),
        system,
        grid,
        auto_window: true,
        provenance: vec![
            note("couplings.0.drive.peak_rabi", peak, "xi * omega0 / sqrt(2)"),
            note("couplings.1.drive.peak_rabi", p.omega0, "omega0"),
            note("couplings.2.drive.peak_rabi", p.omega0, "omega0"),
            note("couplings.3.drive.peak_rabi", peak, "xi * omega0 / sqrt(2)"),
            note("levels.0.loss_rate", p.gamma1, "gamma1"),
            note(
                "levels.2.loss_rate",
                p.gamma2,
                "gamma2 (default k_inel = 6e-10 cm^3/s at n = 1e14 cm^-3)",
            ),
            note("levels.1.loss_rate", p.gamma, "gamma"),
            note("levels.3.loss_rate", p.gamma, "gamma"),
        ],
    })
}

/// Rb₂ transition chain: (label, dipole D, wavelength nm) per link.
pub const RB2_LINKS: [(&str, f64, f64); 6] = [
    ("Feshbach - 0g- v=31 J=0", 0.4, 780.7),
    ("0g- v=31 J=0 - X1Sg+ v=116 J=0", 0.8, 780.4),
    ("X1Sg+ v=116 J=0 - A1Su+ v'=152 J=1", 0.55, 846.0),
    ("A1Su+ v'=152 J=1 - X1Sg+ v=50 J=0", 0.64, 907.4),
    ("X1Sg+ v=50 J=0 - A1Su+ v'=21 J=1", 0.53, 990.0),
    ("A1Su+ v'=21 J=1 - X1Sg+ v=0 J=0", 2.37, 856.4),
];

/// CW links use Ω_i = RB2_CW_RABI_PER_DEBYE · D_i (one common field amplitude).
pub const RB2_CW_RABI_PER_DEBYE: f64 = 1.2e8;

/// Seven-level ⁸⁷Rb₂ chain from the Feshbach state to X¹Σ⁺_g v=0.
pub fn preset_rb2_seven_level() -> ScenarioPreset {
    const TABLE: &str = "Rb2 transition chain table";
    const PARAMS: &str = "Rb2 simulation parameter set";
    let gamma1 = 1.0e4;
    let gamma_ground = collision_decay_rate(6e-10, 1e14);
    let (gamma_e1, gamma_e23) = (8.0e7, 3.0e7);
    let pulse_peak = 3.0e7;
    let (width, delay) = (1.0e-6, -2.0e-6);

    let levels = vec![
        Level::ground("g1 Feshbach", gamma1),
        Level::excited("e1 0g- v=31", gamma_e1, 0.0),
        Level::ground("g2 X v=116", gamma_ground),
        Level::excited("e2 A v'=152", gamma_e23, 0.0),
        Level::ground("g3 X v=50", gamma_ground),
        Level::excited("e3 A v'=21", gamma_e23, 0.0),
        Level::ground("g4 X v=0", 0.0),
    ];
    let couplings: Vec<Coupling> = RB2_LINKS
        .iter()
        .enumerate()
        .map(|(i, &(_, dipole, wavelength))| {
            let drive = match i {
                0 => PulseEnvelope::tanh_on(pulse_peak, width, delay),
                5 => PulseEnvelope::tanh_off(pulse_peak, width, delay),
                _ => PulseEnvelope::constant(RB2_CW_RABI_PER_DEBYE * dipole),
            };
            link(i, dipole, Some(wavelength), drive)
        })
        .collect();

    let mut provenance = Vec::new();
    let mut note = |field: String, value: f64, source: String| {
        provenance.push(Provenance {
            field,
            value,
            source,
        })
    };
    for (i, c) in couplings.iter().enumerate() {
        let (label, _, _) = RB2_LINKS[i];
        note(
            format!("couplings.{i}.dipole_moment"),
            c.dipole_moment,
            format!("{TABLE}: link {} ({label})", i + 1),
        );
        note(
            format!("couplings.{i}.wavelength"),
            c.wavelength.unwrap(),
            format!("{TABLE}: link {} wavelength", i + 1),
        );
        let rabi_src = match i {
            0 => format!("{PARAMS}: pump peak Rabi 3e7 s^-1"),
            5 => format!("{PARAMS}: Stokes peak Rabi 3e7 s^-1"),
            _ => format!("{PARAMS}: CW Rabi = 1.2 * D_{} * 1e8 s^-1", i + 1),
        };
        note(
            format!("couplings.{i}.drive.peak_rabi"),
            c.drive.peak_rabi,
            rabi_src,
        );
        if c.drive.is_time_dependent() {
            note(
                format!("couplings.{i}.drive.width"),
                c.drive.width,
                format!("{PARAMS}: T = 1 us"),
            );
            note(
                format!("couplings.{i}.drive.delay"),
                c.drive.delay,
                format!("{PARAMS}: tau = -2 us"),
            );
        }
    }
    let level_sources = [
        "Gamma_1 = 1e4 s^-1 (Feshbach state)",
        "gamma_1 = 8e7 s^-1",
        "Gamma_2 = 6e4 s^-1 (k_inel = 6e-10 cm^3/s, n_at = 1e14 cm^-3)",
        "gamma_2 = 3e7 s^-1",
        "Gamma_3 = 6e4 s^-1 (k_inel = 6e-10 cm^3/s, n_at = 1e14 cm^-3)",
        "gamma_3 = 3e7 s^-1",
        "stable final state, no loss",
    ];
    for (i, l) in levels.iter().enumerate() {
        note(
            format!("levels.{i}.loss_rate"),
            l.loss_rate,
            format!("{PARAMS}: {}", level_sources[i]),
        );
        note(
            format!("levels.{i}.detuning"),
            l.detuning,
            "one-photon detunings not stated; all set to zero".into(),
        );
    }
    note(
        "levels.6.label".into(),
        0.0,
        format!(
            "{TABLE}: final state printed as X1Su+(v=0,J=0); taken as the ground X1Sg+ v=0 level"
        ),
    );

    let system = validate_chain(ChainSpec {
        levels,
        couplings,
        initial_level: 0,
        target_level: Some(6),
    })
    .expect("Rb2 preset is a valid chain");
    let grid =
        SimulationGrid::for_system(&system, DEFAULT_OUTPUT_POINTS).expect("preset has tanh drives");
    ScenarioPreset {
        name: "rb2-seven".into(),
        description: preset_description("rb2-seven").unwrap().into(),
        system,
        grid,
        auto_window: true,
        provenance,
    }
}

/// Build a named preset with default parameters.
pub fn preset_by_name(name: &str) -> Result<ScenarioPreset> {
    match name {
        "rb2-seven" | "rb2" => Ok(preset_rb2_seven_level()),
        "five-level" => preset_five_level(FiveLevelParams::default()),
        _ => Err(Error::Config(format!(
            "unknown preset '{name}' (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkIntensity {
    /// 1-based link number along the chain.
    pub link: usize,
    pub dipole_moment: f64,
    pub wavelength: Option<f64>,
    pub peak_rabi: f64,
    /// W/cm².
    pub intensity: f64,
}

/// Laser intensity needed on every link at its peak Rabi frequency.
pub fn intensity_report(preset: &ScenarioPreset) -> Result<Vec<LinkIntensity>> {
    preset
        .system
        .couplings()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(LinkIntensity {
                link: i + 1,
                dipole_moment: c.dipole_moment,
                wavelength: c.wavelength,
                peak_rabi: c.drive.peak_rabi,
                intensity: intensity_from_rabi(c.dipole_moment, c.drive.peak_rabi)?,
            })
        })
        .collect()
}

/// A finished bare-basis run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub report: TransferReport,
}

/// Density-matrix run from all population in the initial level.
pub fn simulate(system: &ChainSystem, grid: &SimulationGrid) -> Result<Simulation> {
    simulate_with(system, grid, PropagationOptions::default())
}

pub fn simulate_with(
    system: &ChainSystem,
    grid: &SimulationGrid,
    opts: PropagationOptions,
) -> Result<Simulation> {
    let rho0 = DensityMatrix::basis(system.len(), system.initial_level());
    let trajectory = propagate_density_with(system, grid, &rho0, opts)?;
    let report = transfer_report(system, &trajectory)?;
    Ok(Simulation { trajectory, report })
}

pub fn simulate_preset(preset: &ScenarioPreset) -> Result<Simulation> {
    simulate(&preset.system, &preset.grid)
}
