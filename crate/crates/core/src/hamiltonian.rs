//! Rotating-frame chain Hamiltonian, dark states and the adiabatic frame.
//!
//! Levels are ordered (g₁, e₁, g₂, e₂, …) from the initial level. The
//! Hamiltonian is real symmetric and tridiagonal with −Ωᵢ(t) on the
//! off-diagonals, zero on ground diagonals and the one-photon detuning on
//! excited diagonals (ħ = 1, entries in s⁻¹).

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::chain::ChainSystem;
use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a direction counts as kernel.
pub const KERNEL_THRESHOLD: f64 = 1e-10;

/// Minimum overlap of matched eigenvectors between neighbouring frames.
pub const MIN_GAUGE_OVERLAP: f64 = 0.5;

/// Tridiagonal representation: diagonal and the (i, i+1) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j == i + 1 {
                self.off[i]
            } else if i == j + 1 {
                self.off[j]
            } else {
                0.0
            }
        })
    }
}

pub fn tridiagonal_hamiltonian(system: &ChainSystem, t: f64) -> Tridiagonal {
    Tridiagonal {
        diag: system.levels().iter().map(|l| l.detuning).collect(),
        off: system
            .couplings()
            .iter()
            .map(|c| -c.drive.eval(t))
            .collect(),
    }
}

/// Dense chain Hamiltonian at time `t`.
pub fn build_hamiltonian(system: &ChainSystem, t: f64) -> DMatrix<f64> {
    tridiagonal_hamiltonian(system, t).to_dense()
}

/// Hamiltonian from explicit Rabi frequencies and excited-level detunings
/// (`detunings[k]` applies to level 2k+1).
pub fn hamiltonian_from_rabi(rabi: &[f64], detunings: &[f64]) -> DMatrix<f64> {
    let n = rabi.len() + 1;
    let mut diag = vec![0.0; n];
    for (k, d) in detunings.iter().enumerate() {
        if 2 * k + 1 < n {
            diag[2 * k + 1] = *d;
        }
    }
    Tridiagonal {
        diag,
        off: rabi.iter().map(|o| -o).collect(),
    }
    .to_dense()
}

/// A state with no amplitude on excited levels that is annihilated by H.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkState {
    /// Real unit-norm amplitudes in the bare basis (H is real, so no phases).
    pub amplitudes: DVector<f64>,
    /// Levels carrying non-zero amplitude.
    pub support: Vec<bool>,
}

impl DarkState {
    fn from_amplitudes(amplitudes: DVector<f64>) -> Self {
        let support = amplitudes.iter().map(|a| *a != 0.0).collect();
        DarkState {
            amplitudes,
            support,
        }
    }

    /// |⟨self|other⟩|, insensitive to global sign.
    pub fn overlap(&self, other: &DarkState) -> f64 {
        self.amplitudes.dot(&other.amplitudes).abs()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }
}

/// Closed-form five-level dark state over (g₁, e₁, g₂, e₂, g₃):
/// (Ω₂Ω₄, 0, −Ω₄Ω₁, 0, Ω₁Ω₃) normalised.
pub fn dark_state_analytic5(o1: f64, o2: f64, o3: f64, o4: f64) -> Result<DarkState> {
    let a = DVector::from_vec(vec![o2 * o4, 0.0, -o4 * o1, 0.0, o1 * o3]);
    let norm = a.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateDrive(format!(
            "all dark-state numerators vanish for Ω = ({o1}, {o2}, {o3}, {o4})"
        )));
    }
    Ok(DarkState::from_amplitudes(a / norm))
}

/// Numeric dark subspace of a chain Hamiltonian.
///
/// Dark states live on ground levels only, where H acts through the
/// excited-by-ground block of couplings; the kernel of that block (by SVD with
/// the [`KERNEL_THRESHOLD`] cutoff) is embedded back into the chain. Excited
/// amplitudes are therefore exactly zero and the result is independent of the
/// excited-level detunings.
pub fn dark_states_numeric(h: &DMatrix<f64>) -> Result<Vec<DarkState>> {
    let n = h.nrows();
    if n != h.ncols() || n % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "dark states need a square odd-dimensional chain Hamiltonian, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if (0..n).step_by(2).any(|i| h[(i, i)] != 0.0) {
        return Err(Error::InvalidArgument(
            "ground-level diagonal entries must be zero".into(),
        ));
    }
    let ground = n / 2 + 1;
    let excited = n / 2;
    // Square padding keeps the full right-singular basis available.
    let block = DMatrix::from_fn(ground, ground, |r, c| {
        if r < excited {
            h[(2 * r + 1, 2 * c)]
        } else {
            0.0
        }
    });
    let svd = SVD::new(block, false, true);
    let v_t = svd.v_t.ok_or_else(|| {
        Error::InvalidArgument("SVD did not produce right singular vectors".into())
    })?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = KERNEL_THRESHOLD * sigma_max;

    let mut states = Vec::new();
    for (k, sigma) in svd.singular_values.iter().enumerate() {
        if *sigma > cutoff {
            continue;
        }
        let mut amps = DVector::zeros(n);
        for g in 0..ground {
            amps[2 * g] = v_t[(k, g)];
        }
        amps /= amps.norm();
        states.push(amps);
    }
    if states.len() == 1 {
        // Sign convention: the alternating pattern (+, −, +, …) of the
        // product formula has positive projection.
        let a = &mut states[0];
        let proj: f64 = (0..ground)
            .map(|g| if g % 2 == 0 { a[2 * g] } else { -a[2 * g] })
            .sum();
        if proj < 0.0 {
            *a *= -1.0;
        }
    }
    Ok(states.into_iter().map(DarkState::from_amplitudes).collect())
}

/// Mixing angle tan θ = Ω_pump/Ω_Stokes with pump = first coupling and Stokes
/// = last coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingAngle {
    Defined(f64),
    /// Both pump and Stokes vanish; θ has no value at this instant.
    Undefined,
}

impl MixingAngle {
    pub fn value(self) -> Option<f64> {
        match self {
            MixingAngle::Defined(v) => Some(v),
            MixingAngle::Undefined => None,
        }
    }
}

pub fn mixing_angle(pump: f64, stokes: f64) -> MixingAngle {
    if pump == 0.0 && stokes == 0.0 {
        MixingAngle::Undefined
    } else {
        MixingAngle::Defined(pump.atan2(stokes))
    }
}

/// Pump, Stokes and interior (constant-drive) Rabi frequencies at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSummary {
    pub pump: f64,
    pub stokes: f64,
    /// √(pump² + Stokes²).
    pub omega_eff: f64,
    /// Smallest interior Rabi frequency, if the chain has interior links.
    pub omega0: Option<f64>,
}

impl DriveSummary {
    pub fn at(system: &ChainSystem, t: f64) -> Self {
        let rabi = system.rabi_at(t);
        let pump = rabi[0];
        let stokes = *rabi.last().unwrap();
        let omega0 = (rabi.len() > 2).then(|| {
            rabi[1..rabi.len() - 1]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        });
        DriveSummary {
            pump,
            stokes,
            omega_eff: pump.hypot(stokes),
            omega0,
        }
    }

    pub fn theta(&self) -> MixingAngle {
        mixing_angle(self.pump, self.stokes)
    }

    /// ξ = Ω_eff/Ω₀.
    pub fn xi(&self) -> Option<f64> {
        self.omega0.filter(|o| *o > 0.0).map(|o| self.omega_eff / o)
    }
}

/// Instantaneous eigenbasis of H(t).
#[derive(Debug, Clone)]
pub struct AdiabaticFrame {
    pub t: f64,
    pub theta: MixingAngle,
    pub omega_eff: f64,
    pub xi: Option<f64>,
    /// Eigenvalues in column order (ascending for an unreferenced frame).
    pub eigenvalues: DVector<f64>,
    /// Columns are the adiabatic states in the bare basis (the rotation W).
    pub vectors: DMatrix<f64>,
    /// Column holding the dark state, when the dark subspace is one-dimensional.
    pub dark_index: Option<usize>,
}

/// Diagonalise H(t) and fix the eigenvector gauge.
///
/// Without a reference, columns are sorted by eigenvalue and each is signed
/// so that its largest-magnitude component is positive. With a reference,
/// columns are matched to the reference by maximal overlap and signed to
/// overlap positively; an overlap below [`MIN_GAUGE_OVERLAP`] is a breakdown.
pub fn adiabatic_frame(
    system: &ChainSystem,
    t: f64,
    reference: Option<&AdiabaticFrame>,
) -> Result<AdiabaticFrame> {
    let h = build_hamiltonian(system, t);
    let drives = DriveSummary::at(system, t);
    let (eigenvalues, vectors) = match reference {
        None => sorted_eigen(&h, t)?,
        Some(r) => aligned_eigen(&h, t, &r.vectors)?,
    };
    let dark_index = match reference.and_then(|r| r.dark_index) {
        Some(i) => Some(i),
        None => locate_dark_column(&h, &vectors)?,
    };
    Ok(AdiabaticFrame {
        t,
        theta: drives.theta(),
        omega_eff: drives.omega_eff,
        xi: drives.xi(),
        eigenvalues,
        vectors,
        dark_index,
    })
}

fn sorted_eigen(h: &DMatrix<f64>, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    let eig =
        SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or(Error::Eigensolver { t })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col
            .iter()
            .cloned()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            col *= -1.0;
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

fn aligned_eigen(
    h: &DMatrix<f64>,
    t: f64,
    reference: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (values, vectors) = sorted_eigen(h, t)?;
    let n = values.len();
    let overlaps = reference.transpose() * &vectors;
    let mut taken = vec![false; n];
    let mut out_values = DVector::zeros(n);
    let mut out_vectors = DMatrix::zeros(n, n);
    // Greedy assignment in order of decreasing overlap magnitude.
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| (r, c, overlaps[(r, c)].abs()))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut assigned = vec![None; n];
    for (r, c, _) in pairs {
        if assigned[r].is_none() && !taken[c] {
            assigned[r] = Some(c);
            taken[c] = true;
        }
    }
    for (r, c) in assigned.into_iter().enumerate() {
        let c = c.expect("square assignment is complete");
        let ov = overlaps[(r, c)];
        if ov.abs() < MIN_GAUGE_OVERLAP {
            return Err(Error::FrameBreakdown {
                t,
                overlap: ov.abs(),
            });
        }
        let sign = if ov < 0.0 { -1.0 } else { 1.0 };
        out_values[r] = values[c];
        out_vectors.set_column(r, &(vectors.column(c) * sign));
    }
    Ok((out_values, out_vectors))
}

fn locate_dark_column(h: &DMatrix<f64>, vectors: &DMatrix<f64>) -> Result<Option<usize>> {
    let dark = dark_states_numeric(h)?;
    if dark.len() != 1 {
        return Ok(None);
    }
    let d = &dark[0].amplitudes;
    let best = (0..vectors.ncols())
        .map(|c| (c, vectors.column(c).dot(d).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    Ok(best.map(|(c, _)| c))
}

/// Gauge-continuous frames along increasing `times`.
pub fn frame_sequence(system: &ChainSystem, times: &[f64]) -> Result<Vec<AdiabaticFrame>> {
    let mut frames: Vec<AdiabaticFrame> = Vec::with_capacity(times.len());
    for &t in times {
        let frame = adiabatic_frame(system, t, frames.last())?;
        frames.push(frame);
    }
    Ok(frames)
}

/// Analytic five-level eigenvalues for Ω₂ = Ω₃ = Ω₀, Δ = 0, valid to O(ξ²):
/// {−√2Ω₀, −Ω/√2, 0, Ω/√2, √2Ω₀}.
pub fn analytic_eigenvalues5(omega_eff: f64, omega0: f64) -> [f64; 5] {
    let s2 = std::f64::consts::SQRT_2;
    [
        -s2 * omega0,
        -omega_eff / s2,
        0.0,
        omega_eff / s2,
        s2 * omega0,
    ]
}

/// Central-difference nonadiabatic coupling K = Wᵀ(t)·(W(t+h) − W(t−h))/(2h).
///
/// `before` and `after` must be gauge-aligned to `now`. The result is
/// antisymmetrised; a symmetric defect larger than 1e-6 of ‖K‖ (plus a
/// round-off floor) means `h` is too large.
pub fn nonadiabatic_coupling(
    before: &AdiabaticFrame,
    now: &AdiabaticFrame,
    after: &AdiabaticFrame,
    h: f64,
) -> Result<DMatrix<f64>> {
    let raw = now.vectors.transpose() * (&after.vectors - &before.vectors) / (2.0 * h);
    let sym = &raw + raw.transpose();
    let anti = (&raw - raw.transpose()) * 0.5;
    let n = raw.nrows() as f64;
    let floor = 1e3 * n * f64::EPSILON / h.abs();
    let defect = sym.norm() * 0.5;
    if defect > 1e-6 * anti.norm() + floor {
        return Err(Error::RefineStep { defect });
    }
    Ok(anti)
}

/// Finite-difference step for [`nonadiabatic_coupling`]: 1e-4 of the shortest
/// envelope width.
pub fn coupling_step(system: &ChainSystem) -> f64 {
    let width = system
        .couplings()
        .iter()
        .filter(|c| c.drive.is_time_dependent())
        .map(|c| c.drive.width)
        .fold(f64::INFINITY, f64::min);
    if width.is_finite() {
        1e-4 * width
    } else {
        1e-12
    }
}

/// K at time `t`, with all three frames built and aligned here.
pub fn nonadiabatic_coupling_at(
    system: &ChainSystem,
    t: f64,
    h: f64,
    reference: Option<&AdiabaticFrame>,
) -> Result<(AdiabaticFrame, DMatrix<f64>)> {
    let now = adiabatic_frame(system, t, reference)?;
    let before = adiabatic_frame(system, t - h, Some(&now))?;
    let after = adiabatic_frame(system, t + h, Some(&now))?;
    let k = nonadiabatic_coupling(&before, &now, &after, h)?;
    Ok((now, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{validate_chain, ChainSpec, Coupling, Level, PulseEnvelope};

    fn chain(rabi: &[f64], detunings: &[f64]) -> ChainSystem {
        let n = rabi.len() + 1;
        let levels = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    Level::ground(format!("g{}", i / 2 + 1), 0.0)
                } else {
                    Level::excited(
                        format!("e{}", i / 2 + 1),
                        0.0,
                        detunings.get(i / 2).copied().unwrap_or(0.0),
                    )
                }
            })
            .collect();
        let couplings = rabi
            .iter()
            .enumerate()
            .map(|(i, &o)| Coupling {
                lower_index: i,
                dipole_moment: 1.0,
                wavelength: None,
                drive: PulseEnvelope::constant(o),
            })
            .collect();
        validate_chain(ChainSpec {
            levels,
            couplings,
            initial_level: 0,
            target_level: None,
        })
        .unwrap()
    }

    #[test]
    fn five_level_structure() {
        let sys = chain(&[1e7, 2e7, 2e7, 1e7], &[]);
        let h = build_hamiltonian(&sys, 0.0);
        let expected = [-1e7, -2e7, -2e7, -1e7];
        for i in 0..5 {
            assert_eq!(h[(i, i)], 0.0);
        }
        for i in 0..4 {
            assert_eq!(h[(i, i + 1)], expected[i]);
            assert_eq!(h[(i + 1, i)], expected[i]);
        }
        assert_eq!(h[(0, 2)], 0.0);
    }

    #[test]
    fn zero_drive_gives_zero_matrix_and_full_ground_dark_space() {
        let sys = chain(&[0.0; 4], &[]);
        let h = build_hamiltonian(&sys, 0.0);
        assert_eq!(h.norm(), 0.0);
        let dark = dark_states_numeric(&h).unwrap();
        assert_eq!(dark.len(), 3);
        for d in &dark {
            assert_eq!(d.amplitudes[1], 0.0);
            assert_eq!(d.amplitudes[3], 0.0);
        }
    }

    #[test]
    fn three_level_eigenvalues() {
        // det(H − λ) = −λ³ + 2λ for unit couplings: roots 0, ±√2.
        let sys = chain(&[1.0, 1.0], &[]);
        let (vals, _) = sorted_eigen(&build_hamiltonian(&sys, 0.0), 0.0).unwrap();
        let s2 = std::f64::consts::SQRT_2;
        for (v, e) in vals.iter().zip([-s2, 0.0, s2]) {
            assert!((v - e).abs() < 1e-14, "{v} vs {e}");
        }
    }

    #[test]
    fn analytic_dark_state_limits() {
        let d = dark_state_analytic5(0.0, 3.0, 3.0, 1.0).unwrap();
        assert_eq!(d.amplitudes.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let d = dark_state_analytic5(1.0, 3.0, 3.0, 0.0).unwrap();
        assert_eq!(d.amplitudes.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            dark_state_analytic5(0.0, 3.0, 3.0, 0.0),
            Err(Error::DegenerateDrive(_))
        ));
    }

    #[test]
    fn analytic_matches_numeric_for_symmetric_drive() {
        let (w, o0) = (0.3e7, 5e7);
        let sys = chain(&[w, o0, o0, w], &[2e6, -1e6]);
        let h = build_hamiltonian(&sys, 0.0);
        let numeric = dark_states_numeric(&h).unwrap();
        assert_eq!(numeric.len(), 1);
        let analytic = dark_state_analytic5(w, o0, o0, w).unwrap();
        let norm = ((o0 * w).powi(2) * 2.0 + w.powi(4)).sqrt();
        let expected = [o0 * w / norm, 0.0, -w * w / norm, 0.0, w * o0 / norm];
        for i in 0..5 {
            assert!((analytic.amplitudes[i] - expected[i]).abs() < 1e-15);
            assert!((numeric[0].amplitudes[i] - expected[i]).abs() < 1e-12);
        }
        assert!((&h * &numeric[0].amplitudes).norm() <= 1e-12 * h.norm());
    }

    #[test]
    fn seven_level_dark_state_follows_alternating_products() {
        let o = [1.3, 0.7, 2.1, 1.1, 0.9, 1.7];
        let sys = chain(&o, &[0.4, -0.2, 0.0]);
        let dark = dark_states_numeric(&build_hamiltonian(&sys, 0.0)).unwrap();
        assert_eq!(dark.len(), 1);
        let raw = [
            o[1] * o[3] * o[5],
            -o[0] * o[3] * o[5],
            o[0] * o[2] * o[5],
            -o[0] * o[2] * o[4],
        ];
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for g in 0..4 {
            assert!((dark[0].amplitudes[2 * g] - raw[g] / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn undefined_angle_is_explicit() {
        assert_eq!(mixing_angle(0.0, 0.0), MixingAngle::Undefined);
        assert_eq!(mixing_angle(0.0, 1.0), MixingAngle::Defined(0.0));
    }

    #[test]
    fn decoupled_pump_and_stokes_frame() {
        let o0 = 4e7;
        let sys = chain(&[0.0, o0, o0, 0.0], &[]);
        let frame = adiabatic_frame(&sys, 0.0, None).unwrap();
        let s2 = std::f64::consts::SQRT_2;
        let expected = [-s2 * o0, 0.0, 0.0, 0.0, s2 * o0];
        for (v, e) in frame.eigenvalues.iter().zip(expected) {
            assert!((v - e).abs() < 1e-6, "{v} vs {e}");
        }
        assert_eq!(frame.theta, MixingAngle::Undefined);
    }

    #[test]
    fn constant_hamiltonian_has_no_nonadiabatic_coupling() {
        let sys = chain(&[1e7, 5e7, 5e7, 2e7], &[]);
        let (_, k) = nonadiabatic_coupling_at(&sys, 0.0, 1e-10, None).unwrap();
        assert_eq!(k.norm(), 0.0);
    }
}
