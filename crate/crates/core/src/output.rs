//! Artifact formatting and atomic writes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::chain::ChainSystem;
use crate::error::{Error, Result};
use crate::optimize::{CellOutcome, SweepResult};
use crate::propagate::Trajectory;

/// Twelve significant digits in scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

/// Column name for a level label: lowercase alphanumerics, everything else `_`.
pub fn sanitize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn population_columns(system: &ChainSystem) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for (i, l) in system.levels().iter().enumerate() {
        let base = match sanitize_label(&l.label) {
            s if s.is_empty() => format!("level{i}"),
            s => s,
        };
        let mut name = format!("pop_{base}");
        if names.contains(&name) {
            name = format!("pop_{base}_{i}");
        }
        names.push(name);
    }
    names
}

/// `t_s, pop_<label>..., trace`, one row per output time.
pub fn timeseries_csv(system: &ChainSystem, traj: &Trajectory) -> String {
    let mut s = String::from("t_s");
    for c in population_columns(system) {
        s.push(',');
        s.push_str(&c);
    }
    s.push_str(",trace\n");
    for (k, t) in traj.times.iter().enumerate() {
        s.push_str(&sci(*t));
        for p in &traj.populations[k] {
            s.push(',');
            s.push_str(&sci(*p));
        }
        s.push(',');
        s.push_str(&sci(traj.trace[k]));
        s.push('\n');
    }
    s
}

/// One row per cell; failed cells keep their parameters and carry the error.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from("index");
    for p in &result.params {
        let _ = write!(s, ",{p}");
    }
    s.push_str(
        ",status,efficiency,total_loss,peak_intermediate_ground,max_theta_dot_over_omega,error\n",
    );
    for cell in &result.cells {
        let _ = write!(s, "{}", cell.index);
        for v in &cell.values {
            let _ = write!(s, ",{}", sci(*v));
        }
        match &cell.outcome {
            CellOutcome::Ok(c) => {
                let opt = |x: Option<f64>| x.map(sci).unwrap_or_default();
                let _ = writeln!(
                    s,
                    ",ok,{},{},{},{},",
                    sci(c.efficiency),
                    sci(c.total_loss),
                    opt(c.peak_intermediate_ground),
                    opt(c.max_theta_dot_over_omega)
                );
            }
            CellOutcome::Failed { error } => {
                let _ = writeln!(s, ",failed,,,,,\"{}\"", error.replace('"', "\"\""));
            }
        }
    }
    s
}

pub fn json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialise output: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Files written together: every file goes to a temporary name first and is
/// renamed into place only after all of them were written.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
        };
        for (path, bytes) in &self.files {
            match stage(path, bytes) {
                Ok(tmp) => staged.push((tmp, path.clone())),
                Err(e) => {
                    cleanup(&staged);
                    return Err(e);
                }
            }
        }
        for (k, (tmp, path)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, path) {
                cleanup(&staged[k..]);
                return Err(Error::io(path, e));
            }
        }
        Ok(staged.into_iter().map(|(_, p)| p).collect())
    }
}

fn stage(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("not a file path")))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })?;
    Ok(tmp)
}

/// Write one file atomically.
pub fn write_atomic(path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) -> Result<PathBuf> {
    let mut a = Artifacts::new();
    a.add(path, contents);
    Ok(a.commit()?.remove(0))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Series<'a> {
    name: String,
    values: &'a [f64],
}

struct Panel<'a> {
    title: &'a str,
    y_label: &'a str,
    series: Vec<Series<'a>>,
}

const WIDTH: f64 = 760.0;
const PANEL_H: f64 = 210.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 36.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn draw_panel(svg: &mut String, panel: &Panel, times_us: &[f64], y0: f64) {
    let (t0, t1) = (times_us[0], *times_us.last().unwrap());
    let ymax = panel
        .series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = PANEL_H - TOP - BOTTOM;
    let x = |t: f64| LEFT + (t - t0) / (t1 - t0) * plot_w;
    let y = |v: f64| y0 + TOP + plot_h * (1.0 - v / ymax);

    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"##,
        LEFT,
        y0 + TOP - 10.0,
        panel.title
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT:.1}" y="{:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444"/>"##,
        y0 + TOP
    );
    for t in nice_ticks(t0, t1, 8) {
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#444"/><text x="{0:.1}" y="{3:.1}" font-size="10" text-anchor="middle">{4}</text>"##,
            x(t),
            y0 + TOP + plot_h,
            y0 + TOP + plot_h + 4.0,
            y0 + TOP + plot_h + 15.0,
            tick_label(t)
        );
    }
    for v in nice_ticks(0.0, ymax, 4) {
        let label = if ymax >= 1e3 {
            format!("{v:.1e}")
        } else {
            tick_label(v)
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#444"/><text x="{3:.1}" y="{4:.1}" font-size="10" text-anchor="end">{5}</text>"##,
            LEFT - 4.0,
            y(v),
            LEFT,
            LEFT - 6.0,
            y(v) + 3.5,
            label
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{0:.1}" y="{1:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {0:.1} {1:.1})">{2}</text>"##,
        16.0,
        y0 + TOP + plot_h / 2.0,
        panel.y_label
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">t (us)</text>"##,
        LEFT + plot_w / 2.0,
        y0 + PANEL_H - 4.0
    );
    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (t, v) in times_us.iter().zip(s.values) {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(*t), y(*v));
            }
        }
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            pts.trim_end()
        );
        let ly = y0 + TOP + 12.0 + 15.0 * k as f64;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"##,
            lx + 18.0,
            lx + 22.0,
            ly + 3.5,
            escape(&s.name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Three stacked panels: pump and Stokes Rabi frequencies, intermediate ground
/// populations, and the initial and target populations with the trace.
pub fn populations_svg(system: &ChainSystem, traj: &Trajectory) -> String {
    let times_us: Vec<f64> = traj.times.iter().map(|t| t * 1e6).collect();
    let c = system.couplings();
    let pump: Vec<f64> = traj.times.iter().map(|&t| c[0].drive.eval(t)).collect();
    let stokes: Vec<f64> = traj
        .times
        .iter()
        .map(|&t| c[c.len() - 1].drive.eval(t))
        .collect();
    let label = |i: usize| system.levels()[i].label.clone();
    let series: Vec<Vec<f64>> = (0..system.len()).map(|i| traj.series(i)).collect();

    let mut panels = vec![Panel {
        title: "Pump and Stokes",
        y_label: "Rabi frequency (s^-1)",
        series: vec![
            Series {
                name: "pump".into(),
                values: &pump,
            },
            Series {
                name: "Stokes".into(),
                values: &stokes,
            },
        ],
    }];
    let mids = system.intermediate_ground_levels();
    if !mids.is_empty() {
        panels.push(Panel {
            title: "Intermediate ground levels",
            y_label: "population",
            series: mids
                .iter()
                .map(|&i| Series {
                    name: label(i),
                    values: &series[i],
                })
                .collect(),
        });
    }
    let (a, b) = (system.initial_level(), system.target_level());
    panels.push(Panel {
        title: "Initial and target levels",
        y_label: "population",
        series: vec![
            Series {
                name: label(a),
                values: &series[a],
            },
            Series {
                name: label(b),
                values: &series[b],
            },
            Series {
                name: "trace".into(),
                values: &traj.trace,
            },
        ],
    });

    let height = PANEL_H * panels.len() as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (k, p) in panels.iter().enumerate() {
        draw_panel(&mut svg, p, &times_us, PANEL_H * k as f64);
    }
    svg.push_str("</svg>\n");
    svg
}
