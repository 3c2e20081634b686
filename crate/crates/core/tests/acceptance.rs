//! Acceptance criteria. Prints one PASS/FAIL line per criterion with the
//! measured value and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cstirap::analysis::{dark_decay_rate, dark_survival_prediction, metric_times};
use cstirap::chain::{validate_chain, ChainSystem, SimulationGrid};
use cstirap::hamiltonian::{
    analytic_eigenvalues5, dark_state_analytic5, dark_states_numeric, hamiltonian_from_rabi,
};
use cstirap::optimize::{optimize, sweep, FreeParam, OptimizeSpec, Param, SweepAxis, SweepSpec};
use cstirap::propagate::{
    adiabatic_pure, adiabatic_setup, propagate_adiabatic5, propagate_density_with, propagate_state,
    DensityMatrix, PropagationOptions, QuantumState,
};
use cstirap::scenarios::{
    intensity_report, preset_by_name, preset_five_level, preset_rb2_seven_level, simulate,
    FiveLevelParams, ScenarioPreset,
};
use cstirap::units::intensity_from_rabi;

const US: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = Result<Verdict, String>;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cstirap")
}

fn cli(args: &[&str], dir: &Path) -> Result<(i32, Duration), String> {
    let start = Instant::now();
    let out = Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| format!("cannot start cstirap: {e}"))?;
    let elapsed = start.elapsed();
    let code = out.status.code().unwrap_or(-1);
    if code != 0 {
        return Err(format!(
            "cstirap {} exited {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok((code, elapsed))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn scratch(name: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("cstirap-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let x: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

struct HeadlineRun {
    report: Value,
    elapsed: Duration,
}

fn headline_run() -> Result<HeadlineRun, String> {
    let dir = scratch("headline");
    let (_, elapsed) = cli(&["simulate", "--preset", "rb2-seven"], &dir)?;
    let report = read_json(&dir.join("report.json"))?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(HeadlineRun { report, elapsed })
}

fn criterion_1(run: &Result<HeadlineRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let eff = run.report["efficiency"]
        .as_f64()
        .ok_or("report.json lacks efficiency")?;
    let secs = run.elapsed.as_secs_f64();
    Ok(Verdict::new(
        eff >= 0.90 && secs <= 10.0,
        format!("efficiency {eff:.6} (need >= 0.90), runtime {secs:.3} s (need <= 10 s)"),
    ))
}

fn criterion_1_sweep() -> Check {
    let preset = preset_rb2_seven_level();
    let spec = SweepSpec {
        axes: vec![
            SweepAxis {
                param: Param::Width,
                values: vec![0.5 * US, 1.0 * US, 2.0 * US],
            },
            SweepAxis {
                param: Param::Delay,
                values: vec![-1.0 * US, -2.0 * US, -3.0 * US],
            },
        ],
        workers: None,
    };
    let result = sweep(&preset, &spec).map_err(|e| e.to_string())?;
    let reference = result
        .cells
        .iter()
        .find(|c| c.values == [1.0 * US, -2.0 * US])
        .and_then(|c| c.efficiency())
        .ok_or("reference cell missing or failed")?;
    let best = result
        .best()
        .and_then(|c| c.efficiency())
        .ok_or("no successful cell")?;
    Ok(Verdict::new(
        result.cells.len() == 9 && reference >= 0.90 && best >= 0.90,
        format!(
            "{} cells, cell (1 us, -2 us) {reference:.6}, best cell {best:.6} (need >= 0.90)",
            result.cells.len()
        ),
    ))
}

fn criterion_1_optimize() -> Check {
    let preset = preset_rb2_seven_level();
    let spec = OptimizeSpec::new(vec![
        FreeParam {
            param: Param::Width,
            lower: 0.5 * US,
            upper: 2.0 * US,
            initial: None,
            scale: None,
        },
        FreeParam {
            param: Param::Delay,
            lower: -3.0 * US,
            upper: -1.0 * US,
            initial: None,
            scale: None,
        },
    ]);
    let start = simulate(&preset.system, &preset.grid)
        .map_err(|e| e.to_string())?
        .report
        .efficiency;
    let r = optimize(&preset, &spec).map_err(|e| e.to_string())?;
    Ok(Verdict::new(
        r.best_objective >= 0.90 && r.best_objective >= start,
        format!(
            "start {start:.6}, best {:.6} after {} evaluations (need >= 0.90 and >= start)",
            r.best_objective, r.evaluations
        ),
    ))
}

fn criterion_2(run: &Result<HeadlineRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let preset = preset_rb2_seven_level();
    let levels = preset.system.intermediate_ground_levels();
    let peaks = run.report["peak_populations"]
        .as_array()
        .ok_or("report.json lacks peak_populations")?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for l in &levels {
        let p = peaks
            .iter()
            .find(|p| p["level"].as_u64() == Some(*l as u64))
            .and_then(|p| p["p_peak"].as_f64())
            .ok_or_else(|| format!("no peak for level {l}"))?;
        worst = worst.max(p);
        parts.push(format!("{} {p:.4}", preset.system.levels()[*l].label));
    }
    Ok(Verdict::new(
        !levels.is_empty() && worst <= 0.10,
        format!(
            "peaks {} (need each <= 0.10, expected near 0.07)",
            parts.join(", ")
        ),
    ))
}

fn criterion_3() -> Check {
    let table = intensity_report(&preset_rb2_seven_level()).map_err(|e| e.to_string())?;
    let i1 = table[0].intensity;
    let i6 = table[5].intensity;
    let cw = intensity_from_rabi(0.64, 6e7).map_err(|e| e.to_string())?;
    let within = |x: f64, target: f64| (x - target).abs() <= 0.15 * target;
    Ok(Verdict::new(
        within(i1, 3.0) && within(i6, 0.1) && within(cw, 5.0),
        format!("link 1 {i1:.3}, link 6 {i6:.5}, CW {cw:.3} W/cm^2 (targets 3, 0.1, 5 within 15%)"),
    ))
}

fn random_rabi(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| 10f64.powf(rng.gen_range(6.0..9.0)))
        .collect()
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let tuples = 10_000;
    let (mut residual, mut excited, mut analytic) = (0.0f64, 0.0f64, 0.0f64);
    for levels in [5usize, 7] {
        for _ in 0..tuples {
            let rabi = random_rabi(&mut rng, levels - 1);
            let det: Vec<f64> = (0..levels / 2).map(|_| rng.gen_range(-1e8..1e8)).collect();
            let h = hamiltonian_from_rabi(&rabi, &det);
            let dark = dark_states_numeric(&h).map_err(|e| e.to_string())?;
            if dark.len() != 1 {
                return Ok(Verdict::new(
                    false,
                    format!("dark dimension {} for {rabi:?}", dark.len()),
                ));
            }
            let phi = &dark[0].amplitudes;
            residual = residual.max((&h * phi).norm() / h.norm());
            for k in (1..levels).step_by(2) {
                excited = excited.max(phi[k].abs());
            }
            if levels == 5 {
                let a = dark_state_analytic5(rabi[0], rabi[1], rabi[2], rabi[3])
                    .map_err(|e| e.to_string())?;
                let d = (phi - &a.amplitudes)
                    .norm()
                    .min((phi + &a.amplitudes).norm());
                analytic = analytic.max(d);
            }
        }
    }
    Ok(Verdict::new(
        residual <= 1e-12 && excited <= 1e-12 && analytic <= 1e-10,
        format!(
            "{tuples} tuples each of 5 and 7 levels: max |H phi|/|H| {residual:.2e}, max excited {excited:.2e}, max analytic distance {analytic:.2e}"
        ),
    ))
}

fn eigen_error(xi: f64, theta: f64) -> f64 {
    let omega0 = 3e8;
    let omega = xi * omega0;
    let h = hamiltonian_from_rabi(
        &[omega * theta.sin(), omega0, omega0, omega * theta.cos()],
        &[0.0, 0.0],
    );
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let analytic = analytic_eigenvalues5(omega, omega0);
    ev.iter()
        .zip(analytic)
        .map(|(l, a)| {
            if a == 0.0 {
                l.abs() / omega
            } else {
                ((l - a) / a).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn criterion_5() -> Check {
    let xis = [0.025, 0.05, 0.1, 0.2];
    let mut parts = Vec::new();
    let mut pass = true;
    for theta in [FRAC_PI_4, 0.3] {
        let errs: Vec<f64> = xis.iter().map(|x| eigen_error(*x, theta)).collect();
        let p = slope(&xis, &errs);
        pass &= (1.8..=2.2).contains(&p);
        parts.push(format!(
            "theta {theta:.3}: exponent {p:.3} (errors {:.2e}..{:.2e})",
            errs[0], errs[3]
        ));
    }
    Ok(Verdict::new(
        pass,
        format!("{} (need in [1.8, 2.2])", parts.join("; ")),
    ))
}

fn criterion_6() -> Check {
    let (g1, g2) = (1e4, 6e4);
    let at_zero = dark_decay_rate(0.0, 3e7, 3e8, g1, g2);
    let at_half_pi = dark_decay_rate(std::f64::consts::FRAC_PI_2, 3e7, 3e8, g1, g2);
    let limits = (at_zero - g1).abs() <= 1e-12 * g1 && at_half_pi.abs() <= 1e-12 * g1;
    let mut parts = vec![format!(
        "rate(0) {at_zero:.6e}, rate(pi/2) {at_half_pi:.2e}"
    )];
    let mut pass = limits;
    for xi in [0.05f64, 0.1] {
        let width = US * (0.1 / xi).powi(2);
        let preset = preset_five_level(FiveLevelParams {
            xi,
            width,
            delay: -2.0 * width,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let (_, first) =
            adiabatic_setup(&preset.system, &preset.grid).map_err(|e| e.to_string())?;
        let dark = first.dark_index.ok_or("no dark state at the start")?;
        let run = propagate_adiabatic5(&preset.system, &preset.grid, &adiabatic_pure(5, dark))
            .map_err(|e| e.to_string())?;
        let simulated = *run.dark_population().last().ok_or("empty run")?;
        let predicted =
            dark_survival_prediction(&preset.system, &metric_times(&preset.grid.times()), g1, g2)
                .map_err(|e| e.to_string())?;
        let rel = (predicted - simulated).abs() / simulated;
        pass &= rel <= 0.10;
        parts.push(format!(
            "xi {xi} (T {:.0} us): predicted {predicted:.4} vs {simulated:.4}, rel {rel:.4}",
            width / US
        ));
    }
    Ok(Verdict::new(
        pass,
        format!("{} (need rel <= 0.10)", parts.join("; ")),
    ))
}

fn lossless(system: &ChainSystem) -> ChainSystem {
    let mut spec = system.to_spec();
    for l in &mut spec.levels {
        l.loss_rate = 0.0;
    }
    validate_chain(spec).expect("lossless variant validates")
}

struct CrossCheck {
    state_vs_density: f64,
    trace_defect: f64,
    min_eigenvalue: f64,
}

fn cross_check(system: &ChainSystem, grid: &SimulationGrid) -> Result<CrossCheck, String> {
    let n = system.len();
    let i0 = system.initial_level();
    let opts = PropagationOptions {
        store_coherences: true,
    };
    let rho = propagate_density_with(system, grid, &DensityMatrix::basis(n, i0), opts)
        .map_err(|e| e.to_string())?;
    let psi =
        propagate_state(system, grid, &QuantumState::basis(n, i0)).map_err(|e| e.to_string())?;
    let state_vs_density = rho
        .populations
        .iter()
        .zip(&psi.populations)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let min_eigenvalue = rho
        .coherences
        .as_ref()
        .ok_or("coherences not stored")?
        .iter()
        .map(|m| DensityMatrix(m.clone()).min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    let clean = lossless(system);
    let free = propagate_density_with(
        &clean,
        grid,
        &DensityMatrix::basis(n, i0),
        PropagationOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let trace_defect = free
        .trace
        .iter()
        .map(|t| (t - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CrossCheck {
        state_vs_density,
        trace_defect,
        min_eigenvalue,
    })
}

fn criterion_7() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["rb2-seven", "five-level"] {
        let p = preset_by_name(name).map_err(|e| e.to_string())?;
        let c = cross_check(&p.system, &p.grid)?;
        pass &= c.state_vs_density <= 1e-8 && c.trace_defect <= 1e-8 && c.min_eigenvalue >= -1e-8;
        parts.push(format!(
            "{name}: state vs density {:.2e}, lossless trace {:.2e}, min eigenvalue {:.2e}",
            c.state_vs_density, c.trace_defect, c.min_eigenvalue
        ));
    }
    Ok(Verdict::new(
        pass,
        format!("{} (need <= 1e-8, <= 1e-8, >= -1e-8)", parts.join("; ")),
    ))
}

fn five_level_lossless(p: FiveLevelParams) -> Result<ScenarioPreset, String> {
    preset_five_level(p.lossless()).map_err(|e| e.to_string())
}

fn criterion_8() -> Check {
    let xis = [0.05, 0.1, 0.2, 0.4];
    let mut peaks = Vec::new();
    for xi in xis {
        let p = five_level_lossless(FiveLevelParams {
            xi,
            ..Default::default()
        })?;
        let s = simulate(&p.system, &p.grid).map_err(|e| e.to_string())?;
        peaks.push(
            s.report
                .peak_intermediate_ground
                .ok_or("no intermediate ground level")?,
        );
    }
    let p = slope(&xis, &peaks);
    Ok(Verdict::new(
        (1.7..=2.3).contains(&p),
        format!(
            "exponent {p:.3} over xi {xis:?}, peaks {} (need in [1.7, 2.3])",
            peaks
                .iter()
                .map(|x| format!("{x:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ))
}

fn criterion_9() -> Check {
    let ladder = [0.5, 1.0, 2.0, 4.0];
    let mut rows = Vec::new();
    for t in ladder {
        let width = t * US;
        let p = five_level_lossless(FiveLevelParams {
            width,
            delay: -2.0 * width,
            ..Default::default()
        })?;
        let s = simulate(&p.system, &p.grid).map_err(|e| e.to_string())?;
        let metric = s
            .report
            .adiabaticity
            .as_ref()
            .ok_or("no adiabaticity metrics")?
            .omega_eff_t_tr;
        rows.push((t, s.report.efficiency, metric, p.grid.rel_tol));
    }
    let monotone = rows.windows(2).all(|w| w[1].1 >= w[0].1 - w[0].3);
    let qualifying: Vec<_> = rows.iter().filter(|r| r.2 >= 100.0).collect();
    let high = !qualifying.is_empty() && qualifying.iter().all(|r| r.1 >= 0.99);
    Ok(Verdict::new(
        monotone && high,
        format!(
            "{} (need non-decreasing within integrator tolerance, >= 0.99 where Omega_eff*T_tr >= 100)",
            rows.iter()
                .map(|r| format!("T {} us: eff {:.9}, Omega_eff*T_tr {:.1}", r.0, r.1, r.2))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    ))
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        out.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(out)
}

fn criterion_10() -> Check {
    let root = scratch("determinism");
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let config = root.join("config.json");
    std::fs::write(
        &config,
        r#"{
  "preset": "five-level",
  "params": { "xi": 0.1, "T": "1 us", "tau": "-2 us" },
  "grid": { "output_points": 301 },
  "output": { "svg": true },
  "sweep": { "axes": [ { "param": "T", "values": ["0.5 us", "1 us"] }, { "param": "tau_over_T", "values": [-1.5, -2] } ] },
  "optimize": { "free": [ { "param": "T", "lower": "0.5 us", "upper": "2 us" } ], "max_evaluations": 12 }
}"#,
    )
    .map_err(|e| e.to_string())?;
    let cfg = config.to_str().ok_or("non-UTF-8 temp path")?;
    let commands: [&[&str]; 5] = [
        &["simulate", "--config", cfg],
        &["sweep", "--config", cfg, "--workers", "1"],
        &["sweep", "--config", cfg, "--workers", "4"],
        &["optimize", "--config", cfg],
        &["analyze", "--config", cfg, "--with-simulation"],
    ];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let a = root.join(format!("run{i}a"));
        let b = root.join(format!("run{i}b"));
        cli(args, &a)?;
        cli(args, &b)?;
        let (sa, sb) = (snapshot(&a)?, snapshot(&b)?);
        compared += sa.len();
        if sa != sb {
            mismatched.push(args[0].to_string());
        }
    }
    let (s1, s4) = (
        snapshot(&root.join("run1a"))?,
        snapshot(&root.join("run2a"))?,
    );
    if s1 != s4 {
        mismatched.push("sweep across worker counts".into());
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(Verdict::new(
        mismatched.is_empty() && compared > 0,
        if mismatched.is_empty() {
            format!("{compared} artifacts byte-identical across reruns and worker counts")
        } else {
            format!("differences in: {}", mismatched.join(", "))
        },
    ))
}

fn main() {
    let headline = headline_run();
    let checks: Vec<(&str, &str, Box<dyn FnOnce() -> Check + '_>)> = vec![
        (
            "1",
            "rb2-seven headline efficiency",
            Box::new(|| criterion_1(&headline)),
        ),
        (
            "1",
            "rb2-seven 3x3 (T, tau) sweep reference cell",
            Box::new(criterion_1_sweep),
        ),
        (
            "1",
            "rb2-seven optimizer from the reference parameters",
            Box::new(criterion_1_optimize),
        ),
        (
            "2",
            "intermediate ground populations",
            Box::new(|| criterion_2(&headline)),
        ),
        ("3", "laser intensities", Box::new(criterion_3)),
        ("4", "dark-state property suite", Box::new(criterion_4)),
        ("5", "five-level eigenstructure", Box::new(criterion_5)),
        ("6", "dark-state decay law", Box::new(criterion_6)),
        ("7", "propagator cross-validation", Box::new(criterion_7)),
        (
            "8",
            "intermediate population suppression",
            Box::new(criterion_8),
        ),
        ("9", "adiabatic limit", Box::new(criterion_9)),
        ("10", "determinism", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    let total = checks.len();
    for (id, title, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()))
            .unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {title}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
