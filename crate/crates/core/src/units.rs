//! Physical constants and boundary unit conversions.
//!
//! Internally every rate and Rabi frequency is an angular frequency in s⁻¹ and
//! every time is in seconds. Conversions to Debye, W/cm², nm and μs happen here
//! and nowhere else.
//!
//! Rabi convention: Ω = μE/(2ħ), with E the peak field amplitude. The
//! cycle-averaged intensity of a field of amplitude E is I = ε₀cE²/2 (SI), which
//! is the Gaussian-units expression cE²/8π.

use crate::error::{Error, Result};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// One Debye in C m.
pub const DEBYE: f64 = 3.335_640_951_98e-30;

const W_PER_M2_PER_W_PER_CM2: f64 = 1.0e4;

/// Rabi frequency (s⁻¹) of a field with the given intensity (W/cm²) on a transition
/// with dipole moment `dipole_debye`.
pub fn rabi_from_intensity(dipole_debye: f64, intensity_w_cm2: f64) -> Result<f64> {
    check_dipole(dipole_debye)?;
    if !(intensity_w_cm2 >= 0.0) || !intensity_w_cm2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "intensity must be finite and non-negative, got {intensity_w_cm2}"
        )));
    }
    let intensity = intensity_w_cm2 * W_PER_M2_PER_W_PER_CM2;
    let field = (2.0 * intensity / (EPSILON_0 * SPEED_OF_LIGHT)).sqrt();
    Ok(dipole_debye * DEBYE * field / (2.0 * HBAR))
}

/// Intensity (W/cm²) needed to reach Rabi frequency `rabi` (s⁻¹) on a transition
/// with dipole moment `dipole_debye`.
pub fn intensity_from_rabi(dipole_debye: f64, rabi: f64) -> Result<f64> {
    check_dipole(dipole_debye)?;
    if !rabi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rabi frequency must be finite, got {rabi}"
        )));
    }
    let field = 2.0 * HBAR * rabi.abs() / (dipole_debye * DEBYE);
    Ok(0.5 * EPSILON_0 * SPEED_OF_LIGHT * field * field / W_PER_M2_PER_W_PER_CM2)
}

/// Collisional loss rate Γ = k_inel · n_at, with k in cm³ s⁻¹ and n in cm⁻³.
pub fn collision_decay_rate(k_inel_cm3_s: f64, density_cm3: f64) -> f64 {
    k_inel_cm3_s * density_cm3
}

fn check_dipole(dipole_debye: f64) -> Result<()> {
    if dipole_debye > 0.0 && dipole_debye.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "dipole moment must be positive, got {dipole_debye} D"
        )))
    }
}
