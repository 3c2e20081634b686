//! Time evolution of a chain with population loss.
//!
//! Three independent paths:
//!
//! * [`propagate_state`]: amplitudes under H_eff = H − (i/2)·D,
//! * [`propagate_density`]: dρ/dt = −i[H, ρ] − ½{D, ρ} in the bare basis,
//! * [`propagate_adiabatic5`]: the same master equation written in the
//!   instantaneous eigenbasis W(t), dρᵃ/dt = −i[Hᵃ, ρᵃ] − [WᵀẆ, ρᵃ] − ½{WᵀDW, ρᵃ}.
//!
//! D = diag(loss rates). Lost population leaves the chain, so the trace decays.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::chain::{ChainSystem, EnvelopeShape, SimulationGrid};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    adiabatic_frame, coupling_step, nonadiabatic_coupling_at, AdiabaticFrame,
};
use crate::integrator::{integrate, IntegratorStats, OdeSystem, Tolerances};

/// Hermiticity drift tolerated before re-symmetrising counts as a fault.
pub const HERMITICITY_LIMIT: f64 = 1e-8;

/// Pure-state amplitudes C_i in the bare basis. Norm may be below 1 after losses.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(pub DVector<C64>);

impl QuantumState {
    pub fn basis(n: usize, level: usize) -> Self {
        let mut v = DVector::from_element(n, C64::new(0.0, 0.0));
        v[level] = C64::new(1.0, 0.0);
        QuantumState(v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm_sqr()).collect()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state has {} amplitudes for a {n}-level chain",
                self.0.len()
            )));
        }
        if self.norm_sqr() > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(
                "initial state norm exceeds 1".into(),
            ));
        }
        Ok(())
    }

    fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    fn from_flat(y: &[f64]) -> Self {
        QuantumState(DVector::from_iterator(
            y.len() / 2,
            y.chunks_exact(2).map(|p| C64::new(p[0], p[1])),
        ))
    }
}

/// Hermitian, positive semidefinite ρ with trace ≤ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<C64>);

impl DensityMatrix {
    pub fn basis(n: usize, level: usize) -> Self {
        DensityMatrix::pure(&QuantumState::basis(n, level))
    }

    pub fn pure(state: &QuantumState) -> Self {
        DensityMatrix(&state.0 * state.0.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|c| c.re).collect()
    }

    /// max |ρ_ij − conj(ρ_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.nrows() != self.0.ncols() {
            return Err(Error::InvalidArgument(
                "density matrix must be square".into(),
            ));
        }
        if self.hermiticity_defect() > 1e-10 {
            return Err(Error::InvalidArgument(
                "density matrix is not Hermitian".into(),
            ));
        }
        let tr = self.trace();
        if !(-1e-12..=1.0 + 1e-12).contains(&tr) {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} outside [0, 1]"
            )));
        }
        if self.min_eigenvalue() < -1e-8 {
            return Err(Error::InvalidArgument(
                "density matrix is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    fn to_flat(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                let c = self.0[(i, j)];
                out.push(c.re);
                out.push(c.im);
            }
        }
        out
    }

    fn from_flat(n: usize, y: &[f64]) -> Self {
        DensityMatrix(DMatrix::from_fn(n, n, |i, j| {
            let k = 2 * (i * n + j);
            C64::new(y[k], y[k + 1])
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Bare,
    Adiabatic,
}

/// Sampled evolution on the output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub basis: Basis,
    pub times: Vec<f64>,
    /// `populations[k][i]`: population of level (or adiabatic state) i at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    /// Norm² or trace at each output time.
    pub trace: Vec<f64>,
    /// Full density matrices at each output time, when requested.
    pub coherences: Option<Vec<DMatrix<C64>>>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    fn with_capacity(basis: Basis, n: usize) -> Self {
        Trajectory {
            basis,
            times: Vec::with_capacity(n),
            populations: Vec::with_capacity(n),
            trace: Vec::with_capacity(n),
            coherences: None,
            stats: IntegratorStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn levels(&self) -> usize {
        self.populations.first().map_or(0, |p| p.len())
    }

    /// Population series of one level.
    pub fn series(&self, level: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[level]).collect()
    }

    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().map_or(&[], |p| p.as_slice())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PropagationOptions {
    /// Keep the full ρ (or ψψ†) at every output point.
    pub store_coherences: bool,
}

fn tolerances(grid: &SimulationGrid) -> Tolerances {
    Tolerances::new(grid.rel_tol, grid.abs_tol)
}

struct StateRhs<'a> {
    system: &'a ChainSystem,
    loss: Vec<f64>,
    detuning: Vec<f64>,
    off: Vec<f64>,
}

impl<'a> StateRhs<'a> {
    fn new(system: &'a ChainSystem) -> Self {
        StateRhs {
            system,
            loss: system.loss_rates(),
            detuning: system.levels().iter().map(|l| l.detuning).collect(),
            off: vec![0.0; system.len() - 1],
        }
    }

    fn refresh(&mut self, t: f64) {
        for (o, c) in self.off.iter_mut().zip(self.system.couplings()) {
            *o = -c.drive.eval(t);
        }
    }
}

impl OdeSystem for StateRhs<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.refresh(t);
        let n = self.loss.len();
        let c = |i: usize| C64::new(y[2 * i], y[2 * i + 1]);
        for i in 0..n {
            let mut hc = c(i) * self.detuning[i];
            if i > 0 {
                hc += c(i - 1) * self.off[i - 1];
            }
            if i + 1 < n {
                hc += c(i + 1) * self.off[i];
            }
            // dC/dt = −i·H·C − (Γ/2)·C
            let d = C64::new(hc.im, -hc.re) - c(i) * (0.5 * self.loss[i]);
            dy[2 * i] = d.re;
            dy[2 * i + 1] = d.im;
        }
        Ok(())
    }
}

/// Pure-state propagation with losses on the grid.
pub fn propagate_state(
    system: &ChainSystem,
    grid: &SimulationGrid,
    psi0: &QuantumState,
) -> Result<Trajectory> {
    propagate_state_with(system, grid, psi0, PropagationOptions::default())
}

pub fn propagate_state_with(
    system: &ChainSystem,
    grid: &SimulationGrid,
    psi0: &QuantumState,
    opts: PropagationOptions,
) -> Result<Trajectory> {
    grid.validate()?;
    psi0.validate(system.len())?;
    let times = grid.times();
    let mut traj = Trajectory::with_capacity(Basis::Bare, times.len());
    let mut stored = Vec::new();
    let mut rhs = StateRhs::new(system);
    let (_, stats) = integrate(
        &mut rhs,
        grid.t_start,
        &psi0.to_flat(),
        &times,
        tolerances(grid),
        |_, t, y| {
            let state = QuantumState::from_flat(y);
            let pops = state.populations();
            traj.times.push(t);
            traj.trace.push(pops.iter().sum());
            traj.populations.push(pops);
            if opts.store_coherences {
                stored.push(DensityMatrix::pure(&state).0);
            }
            Ok(())
        },
    )?;
    traj.stats = stats;
    if opts.store_coherences {
        traj.coherences = Some(stored);
    }
    Ok(traj)
}

/// Evolve a pure state from `t_from` to `t_to` (either direction).
pub fn evolve_state(
    system: &ChainSystem,
    t_from: f64,
    t_to: f64,
    psi: &QuantumState,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<(QuantumState, IntegratorStats)> {
    psi.validate(system.len())?;
    let mut rhs = StateRhs::new(system);
    let (y, stats) = integrate(
        &mut rhs,
        t_from,
        &psi.to_flat(),
        &[t_to],
        Tolerances::new(rel_tol, abs_tol),
        |_, _, _| Ok(()),
    )?;
    Ok((QuantumState::from_flat(&y), stats))
}

struct DensityRhs<'a> {
    inner: StateRhs<'a>,
}

impl OdeSystem for DensityRhs<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let s = &mut self.inner;
        s.refresh(t);
        let n = s.loss.len();
        let rho = |i: usize, j: usize| C64::new(y[2 * (i * n + j)], y[2 * (i * n + j) + 1]);
        for i in 0..n {
            for j in 0..n {
                let mut h_rho = rho(i, j) * s.detuning[i];
                if i > 0 {
                    h_rho += rho(i - 1, j) * s.off[i - 1];
                }
                if i + 1 < n {
                    h_rho += rho(i + 1, j) * s.off[i];
                }
                let mut rho_h = rho(i, j) * s.detuning[j];
                if j > 0 {
                    rho_h += rho(i, j - 1) * s.off[j - 1];
                }
                if j + 1 < n {
                    rho_h += rho(i, j + 1) * s.off[j];
                }
                let comm = h_rho - rho_h;
                let d = C64::new(comm.im, -comm.re) - rho(i, j) * (0.5 * (s.loss[i] + s.loss[j]));
                let k = 2 * (i * n + j);
                dy[k] = d.re;
                dy[k + 1] = d.im;
            }
        }
        Ok(())
    }

    fn after_step(&mut self, _t: f64, y: &mut [f64]) -> Result<()> {
        resymmetrize(self.inner.loss.len(), y)
    }
}

/// Replace ρ by (ρ + ρ†)/2, failing if the drift exceeds [`HERMITICITY_LIMIT`].
fn resymmetrize(n: usize, y: &mut [f64]) -> Result<()> {
    let mut drift = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let a = 2 * (i * n + j);
            let b = 2 * (j * n + i);
            let re = 0.5 * (y[a] + y[b]);
            let im = 0.5 * (y[a + 1] - y[b + 1]);
            drift = drift
                .max((y[a] - y[b]).abs())
                .max((y[a + 1] + y[b + 1]).abs());
            y[a] = re;
            y[a + 1] = im;
            y[b] = re;
            y[b + 1] = -im;
        }
    }
    if drift > HERMITICITY_LIMIT {
        return Err(Error::HermiticityDrift { drift });
    }
    Ok(())
}

/// Bare-basis master-equation propagation on the grid.
pub fn propagate_density(
    system: &ChainSystem,
    grid: &SimulationGrid,
    rho0: &DensityMatrix,
) -> Result<Trajectory> {
    propagate_density_with(system, grid, rho0, PropagationOptions::default())
}

pub fn propagate_density_with(
    system: &ChainSystem,
    grid: &SimulationGrid,
    rho0: &DensityMatrix,
    opts: PropagationOptions,
) -> Result<Trajectory> {
    grid.validate()?;
    let n = system.len();
    if rho0.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "density matrix is {}x{} for a {n}-level chain",
            rho0.dim(),
            rho0.dim()
        )));
    }
    rho0.validate()?;
    let times = grid.times();
    let mut traj = Trajectory::with_capacity(Basis::Bare, times.len());
    let mut stored = Vec::new();
    let mut rhs = DensityRhs {
        inner: StateRhs::new(system),
    };
    let (_, stats) = integrate(
        &mut rhs,
        grid.t_start,
        &rho0.to_flat(),
        &times,
        tolerances(grid),
        |_, t, y| {
            let rho = DensityMatrix::from_flat(n, y);
            let pops = rho.populations();
            traj.times.push(t);
            traj.trace.push(pops.iter().sum());
            traj.populations.push(pops);
            if opts.store_coherences {
                stored.push(rho.0);
            }
            Ok(())
        },
    )?;
    traj.stats = stats;
    if opts.store_coherences {
        traj.coherences = Some(stored);
    }
    Ok(traj)
}

/// Gauge reference frames on a fine grid; any W(t) is aligned to its nearest entry.
pub struct FrameTable {
    t0: f64,
    dt: f64,
    frames: Vec<AdiabaticFrame>,
}

impl FrameTable {
    /// Frames every `min width / 200` across [t_start − pad, t_end + pad].
    pub fn build(system: &ChainSystem, t_start: f64, t_end: f64) -> Result<Self> {
        let width = system
            .couplings()
            .iter()
            .filter(|c| c.drive.is_time_dependent())
            .map(|c| c.drive.width)
            .fold(f64::INFINITY, f64::min);
        let span = t_end - t_start;
        let step = if width.is_finite() {
            (width / 200.0).min(span / 16.0)
        } else {
            span / 16.0
        };
        let pad = 2.0 * step;
        let t0 = t_start - pad;
        let count = ((span + 2.0 * pad) / step).ceil() as usize + 1;
        let mut frames: Vec<AdiabaticFrame> = Vec::with_capacity(count);
        for k in 0..count {
            let t = t0 + step * k as f64;
            let f = adiabatic_frame(system, t, frames.last())?;
            frames.push(f);
        }
        Ok(FrameTable {
            t0,
            dt: step,
            frames,
        })
    }

    pub fn nearest(&self, t: f64) -> &AdiabaticFrame {
        let k = ((t - self.t0) / self.dt).round();
        let k = k.clamp(0.0, (self.frames.len() - 1) as f64) as usize;
        &self.frames[k]
    }

    pub fn frame_at(&self, system: &ChainSystem, t: f64) -> Result<AdiabaticFrame> {
        adiabatic_frame(system, t, Some(self.nearest(t)))
    }

    pub fn dark_index(&self) -> Option<usize> {
        self.frames.first().and_then(|f| f.dark_index)
    }
}

struct AdiabaticRhs<'a> {
    system: &'a ChainSystem,
    table: &'a FrameTable,
    loss: DMatrix<f64>,
    h: f64,
}

impl OdeSystem for AdiabaticRhs<'_> {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.system.len();
        let (frame, k) =
            nonadiabatic_coupling_at(self.system, t, self.h, Some(self.table.nearest(t)))?;
        let w = &frame.vectors;
        let loss_a = w.transpose() * &self.loss * w;
        let e = &frame.eigenvalues;
        let rho = |i: usize, j: usize| C64::new(y[2 * (i * n + j)], y[2 * (i * n + j) + 1]);
        for i in 0..n {
            for j in 0..n {
                // −i(ε_i − ε_j)ρ_ij
                let r = rho(i, j);
                let mut d = C64::new(r.im, -r.re) * (e[i] - e[j]);
                for m in 0..n {
                    // −[K, ρ] − ½{Dᵃ, ρ}
                    let a = k[(i, m)] + 0.5 * loss_a[(i, m)];
                    let b = -k[(m, j)] + 0.5 * loss_a[(m, j)];
                    if a != 0.0 {
                        d -= rho(m, j) * a;
                    }
                    if b != 0.0 {
                        d -= rho(i, m) * b;
                    }
                }
                let idx = 2 * (i * n + j);
                dy[idx] = d.re;
                dy[idx + 1] = d.im;
            }
        }
        Ok(())
    }

    fn after_step(&mut self, _t: f64, y: &mut [f64]) -> Result<()> {
        resymmetrize(self.system.len(), y)
    }
}

/// Result of an adiabatic-basis run.
#[derive(Debug, Clone)]
pub struct AdiabaticRun {
    /// ρᵃ populations (column order of W).
    pub adiabatic: Trajectory,
    /// W ρᵃ Wᵀ populations in the bare basis.
    pub bare: Trajectory,
    /// Column of W holding the dark state.
    pub dark_index: usize,
}

impl AdiabaticRun {
    pub fn dark_population(&self) -> Vec<f64> {
        self.adiabatic.series(self.dark_index)
    }
}

fn check_five_level(system: &ChainSystem) -> Result<()> {
    if system.len() != 5 {
        return Err(Error::InvalidArgument(format!(
            "adiabatic-basis propagation needs a 5-level chain, got {}",
            system.len()
        )));
    }
    let c = system.couplings();
    let constant = |i: usize| c[i].drive.shape == EnvelopeShape::Constant;
    if !constant(1) || !constant(2) || c[1].drive.peak_rabi != c[2].drive.peak_rabi {
        return Err(Error::InvalidArgument(
            "adiabatic-basis propagation needs equal constant interior couplings Ω₂ = Ω₃ = Ω₀"
                .into(),
        ));
    }
    Ok(())
}

/// Initial ρᵃ with all population in adiabatic state `index`.
pub fn adiabatic_pure(n: usize, index: usize) -> DensityMatrix {
    DensityMatrix::basis(n, index)
}

/// Gauge-continuous W(t) and the dark column at the start of the grid.
pub fn adiabatic_setup(
    system: &ChainSystem,
    grid: &SimulationGrid,
) -> Result<(FrameTable, AdiabaticFrame)> {
    let table = FrameTable::build(system, grid.t_start, grid.t_end)?;
    let first = table.frame_at(system, grid.t_start)?;
    Ok((table, first))
}

/// Five-level propagation in the adiabatic basis, starting from ρᵃ₀.
pub fn propagate_adiabatic5(
    system: &ChainSystem,
    grid: &SimulationGrid,
    rho_a0: &DensityMatrix,
) -> Result<AdiabaticRun> {
    grid.validate()?;
    check_five_level(system)?;
    let n = system.len();
    if rho_a0.dim() != n {
        return Err(Error::InvalidArgument(
            "initial ρᵃ has the wrong dimension".into(),
        ));
    }
    rho_a0.validate()?;
    let table = FrameTable::build(system, grid.t_start, grid.t_end)?;
    let dark_index = table.dark_index().ok_or_else(|| {
        Error::InvalidArgument("no unique dark state at the start of the window".into())
    })?;
    let loss = DMatrix::from_diagonal(&DVector::from_vec(system.loss_rates()));
    let mut rhs = AdiabaticRhs {
        system,
        table: &table,
        loss,
        h: coupling_step(system),
    };
    let times = grid.times();
    let mut adiabatic = Trajectory::with_capacity(Basis::Adiabatic, times.len());
    let mut bare = Trajectory::with_capacity(Basis::Bare, times.len());
    let (_, stats) = integrate(
        &mut rhs,
        grid.t_start,
        &rho_a0.to_flat(),
        &times,
        tolerances(grid),
        |_, t, y| {
            let rho_a = DensityMatrix::from_flat(n, y);
            let pops = rho_a.populations();
            adiabatic.times.push(t);
            adiabatic.trace.push(pops.iter().sum());
            adiabatic.populations.push(pops);
            let w = table.frame_at(system, t)?.vectors.map(|x| C64::new(x, 0.0));
            let rho = &w * &rho_a.0 * w.transpose();
            let bare_pops: Vec<f64> = rho.diagonal().iter().map(|c| c.re).collect();
            bare.times.push(t);
            bare.trace.push(bare_pops.iter().sum());
            bare.populations.push(bare_pops);
            Ok(())
        },
    )?;
    adiabatic.stats = stats;
    bare.stats = stats;
    Ok(AdiabaticRun {
        adiabatic,
        bare,
        dark_index,
    })
}
