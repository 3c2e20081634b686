//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! States are flat `f64` slices; complex quantities are stored as interleaved
//! (re, im) pairs by the callers. Step control follows the usual embedded-pair
//! scheme with an RMS error norm scaled by `abs_tol + rel_tol·|y|`.

use serde::Serialize;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Right-hand side of y' = f(t, y).
pub trait OdeSystem {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Hook run on every accepted step; may project the state (e.g. re-symmetrise).
    fn after_step(&mut self, _t: f64, _y: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerances {
            rel,
            abs,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Sum over accepted steps of the largest component of the embedded error estimate.
    pub error_estimate: f64,
}

/// Integrate from `t0` through every time in `outputs` (monotone in the
/// direction of travel, may run backwards), calling `observe(i, t, y)` at each.
/// Returns the final state.
pub fn integrate<S, F>(
    system: &mut S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: Tolerances,
    mut observe: F,
) -> Result<(Vec<f64>, IntegratorStats)>
where
    S: OdeSystem + ?Sized,
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = IntegratorStats::default();
    let mut y = y0.to_vec();
    let Some(&t_end) = outputs.last() else {
        return Ok((y, stats));
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();

    let mut next_out = 0;
    while next_out < outputs.len() && (outputs[next_out] - t0) * dir <= 0.0 {
        observe(next_out, outputs[next_out], &y)?;
        next_out += 1;
    }
    if next_out == outputs.len() {
        return Ok((y, stats));
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut cont = [
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    ];
    let mut dense = vec![0.0; n];

    let mut t = t0;
    system.rhs(t, &y, &mut k1)?;
    stats.rhs_evaluations += 1;
    let mut h = dir * initial_step(system, t, &y, &k1, dir, span, &tol, &mut stats)?;
    let mut last_rejected = false;

    loop {
        if stats.accepted_steps + stats.rejected_steps >= tol.max_steps {
            return Err(Error::MaxSteps {
                t,
                steps: tol.max_steps,
            });
        }
        if h.abs() < 1e-13 * t.abs().max(span) {
            return Err(Error::StepUnderflow { t, h });
        }
        let mut last = false;
        if ((t + h) - t_end) * dir >= 0.0 {
            h = t_end - t;
            last = true;
        }

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        system.rhs(t + C2 * h, &stage, &mut k2)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        system.rhs(t + C3 * h, &stage, &mut k3)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        system.rhs(t + C4 * h, &stage, &mut k4)?;
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        system.rhs(t + C5 * h, &stage, &mut k5)?;
        for i in 0..n {
            stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        system.rhs(t_new, &stage, &mut k6)?;
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        system.rhs(t_new, &y_new, &mut k7)?;
        stats.rhs_evaluations += 6;

        let mut err_sq = 0.0;
        let mut err_max = 0.0f64;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
            err_max = err_max.max(e.abs());
        }
        let err = (err_sq / n.max(1) as f64).sqrt();

        if !err.is_finite() {
            stats.rejected_steps += 1;
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted_steps += 1;
            stats.error_estimate += err_max;

            // Continuous extension over [t, t + h].
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = h * k1[i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next_out < outputs.len() && (outputs[next_out] - t_new) * dir <= 0.0 {
                let t_out = outputs[next_out];
                if t_out == t_new {
                    observe(next_out, t_out, &y_new)?;
                } else {
                    let s = (t_out - t) / h;
                    let s1 = 1.0 - s;
                    for i in 0..n {
                        dense[i] = cont[0][i]
                            + s * (cont[1][i]
                                + s1 * (cont[2][i] + s * (cont[3][i] + s1 * cont[4][i])));
                    }
                    observe(next_out, t_out, &dense)?;
                }
                next_out += 1;
            }

            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            system.after_step(t, &mut y)?;
            std::mem::swap(&mut k1, &mut k7);

            if last || next_out == outputs.len() {
                return Ok((y, stats));
            }
            let mut fac = SAFETY * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected_steps += 1;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            last_rejected = true;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<S: OdeSystem + ?Sized>(
    system: &mut S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    tol: &Tolerances,
    stats: &mut IntegratorStats,
) -> Result<f64> {
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter()
            .zip(&sc)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, f)| a + dir * h0 * f).collect();
    let mut f1 = vec![0.0; y.len()];
    system.rhs(t + dir * h0, &y1, &mut f1)?;
    stats.rhs_evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (1e-6 * h0).max(1e-3 * h0)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}
