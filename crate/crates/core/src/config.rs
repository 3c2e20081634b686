//! Run configuration files.
//!
//! A config is a JSON object. Physical quantities are given either as a bare
//! number in SI base units (s, s⁻¹, Debye, nm), as a string `"<number> <unit>"`
//! such as `"1 us"` or `"3e7 s^-1"`, or as `{"value": 3e7, "unit": "s^-1"}`.
//! Peak Rabi frequencies may also be given as an intensity in W/cm², which is
//! converted through the link's dipole moment.
//!
//! ```json
//! {
//!   "preset": "rb2-seven",
//!   "params": { "T": "1.5 us", "tau": "-2 us" },
//!   "grid": { "output_points": 4001 },
//!   "output": { "dir": "out", "svg": true }
//! }
//! ```
//!
//! `--set key=value` overrides address any field by dotted path
//! (`grid.rel_tol=1e-9`, `system.levels.0.loss_rate=0`). A key without a dot is
//! a preset parameter (`gamma=0` is `params.gamma=0`). Overrides under `system.`
//! are applied after the preset has been expanded into a chain.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::chain::{
    validate_chain, ChainSpec, ChainSystem, Coupling, EnvelopeShape, Level, LevelKind,
    PulseEnvelope, SimulationGrid,
};
use crate::error::{Error, Result};
use crate::optimize::{apply_params, FreeParam, OptimizeSpec, Param, SweepAxis, SweepSpec};
use crate::scenarios::{
    preset_by_name, preset_five_level, FiveLevelParams, ScenarioPreset, DEFAULT_OUTPUT_POINTS,
};
use crate::units::rabi_from_intensity;

/// Physical dimension expected for a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Time,
    Rate,
    Dipole,
    Wavelength,
    Pure,
}

impl Dim {
    fn base_unit(self) -> &'static str {
        match self {
            Dim::Time => "s",
            Dim::Rate => "s^-1",
            Dim::Dipole => "D",
            Dim::Wavelength => "nm",
            Dim::Pure => "",
        }
    }
}

fn unit_factor(unit: &str, dim: Dim) -> Option<f64> {
    let f = match (dim, unit) {
        (Dim::Time, "s") => 1.0,
        (Dim::Time, "ms") => 1e-3,
        (Dim::Time, "us" | "μs" | "µs") => 1e-6,
        (Dim::Time, "ns") => 1e-9,
        (Dim::Time, "ps") => 1e-12,
        (Dim::Rate, "s^-1" | "1/s" | "/s" | "s-1" | "rad/s") => 1.0,
        (Dim::Rate, "ms^-1" | "1/ms") => 1e3,
        (Dim::Rate, "us^-1" | "μs^-1" | "µs^-1" | "1/us") => 1e6,
        (Dim::Rate, "ns^-1" | "1/ns") => 1e9,
        (Dim::Dipole, "D" | "Debye" | "debye") => 1.0,
        (Dim::Wavelength, "nm") => 1.0,
        (Dim::Wavelength, "um" | "μm" | "µm") => 1e3,
        (Dim::Wavelength, "m") => 1e9,
        _ => return None,
    };
    Some(f)
}

fn intensity_factor(unit: &str) -> Option<f64> {
    match unit {
        "W/cm^2" | "W/cm2" => Some(1.0),
        "mW/cm^2" | "mW/cm2" => Some(1e-3),
        "kW/cm^2" | "kW/cm2" => Some(1e3),
        _ => None,
    }
}

/// Split a quantity into its number and optional unit.
fn split_quantity(v: &Value, what: &str) -> Result<(f64, Option<String>)> {
    let bad = || {
        Error::Config(format!(
            "{what}: expected a number, \"<number> <unit>\" or {{value, unit}}, got {v}"
        ))
    };
    match v {
        Value::Number(n) => Ok((n.as_f64().ok_or_else(bad)?, None)),
        Value::String(s) => {
            let s = s.trim();
            match s.split_once(char::is_whitespace) {
                Some((num, unit)) => {
                    let x: f64 = num.parse().map_err(|_| bad())?;
                    Ok((x, Some(unit.trim().to_string())))
                }
                None => {
                    // "1us": the longest numeric prefix is the number.
                    let cut = s
                        .char_indices()
                        .map(|(i, _)| i)
                        .chain([s.len()])
                        .rev()
                        .find(|&i| s[..i].parse::<f64>().is_ok())
                        .ok_or_else(bad)?;
                    let unit = (cut < s.len()).then(|| s[cut..].to_string());
                    Ok((s[..cut].parse().map_err(|_| bad())?, unit))
                }
            }
        }
        Value::Object(o) => {
            let x = o.get("value").and_then(Value::as_f64).ok_or_else(bad)?;
            let unit = match o.get("unit") {
                None => None,
                Some(Value::String(u)) => Some(u.trim().to_string()),
                Some(_) => return Err(bad()),
            };
            if o.keys().any(|k| k != "value" && k != "unit") {
                return Err(bad());
            }
            Ok((x, unit))
        }
        _ => Err(bad()),
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config(format!(
            "{what}: value must be finite, got {x}"
        )))
    }
}

/// Parse a quantity into SI base units of `dim`.
pub fn parse_quantity(v: &Value, dim: Dim, what: &str) -> Result<f64> {
    let (x, unit) = split_quantity(v, what)?;
    let factor = match unit.as_deref() {
        None | Some("") => 1.0,
        Some(u) => unit_factor(u, dim).ok_or_else(|| {
            Error::Config(format!(
                "{what}: unit '{u}' is not a {} unit",
                dim_name(dim)
            ))
        })?,
    };
    finite(x * factor, what)
}

/// Parse a Rabi frequency, accepting an intensity when the dipole is known.
pub fn parse_rabi(v: &Value, dipole: Option<f64>, what: &str) -> Result<f64> {
    let (x, unit) = split_quantity(v, what)?;
    if let Some(f) = unit.as_deref().and_then(intensity_factor) {
        let d = dipole.ok_or_else(|| {
            Error::Config(format!(
                "{what}: an intensity needs a single dipole moment to convert"
            ))
        })?;
        return rabi_from_intensity(d, finite(x * f, what)?);
    }
    parse_quantity(v, Dim::Rate, what)
}

fn dim_name(dim: Dim) -> &'static str {
    match dim {
        Dim::Time => "time",
        Dim::Rate => "rate",
        Dim::Dipole => "dipole",
        Dim::Wavelength => "wavelength",
        Dim::Pure => "dimensionless",
    }
}

/// Format a value in base units as a config string.
pub fn with_unit(x: f64, dim: Dim) -> Value {
    match dim {
        Dim::Pure => json!(x),
        _ => Value::String(format!("{x:e} {}", dim.base_unit())),
    }
}

/// One `--set path=value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

const TOP_LEVEL: [&str; 8] = [
    "preset", "params", "system", "grid", "output", "sweep", "optimize", "analyze",
];

impl Override {
    /// Parse `key=value`. The value is read as JSON when it parses, otherwise
    /// as a plain string, so `T=1us` and `T="1 us"` both work.
    pub fn parse(s: &str) -> Result<Override> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{s}' is not key=value")))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(Error::Config(format!("override '{s}' has an empty key")));
        }
        let value =
            serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
        let mut path: Vec<String> = key.split('.').map(String::from).collect();
        if path.len() == 1 && !TOP_LEVEL.contains(&key) {
            path.insert(0, "params".into());
        }
        Ok(Override { path, value })
    }
}

fn set_path(root: &mut Value, path: &[String], value: Value, full: &str) -> Result<()> {
    let Some((head, rest)) = path.split_first() else {
        *root = value;
        return Ok(());
    };
    match root {
        Value::Object(map) => {
            let slot = map.entry(head.clone()).or_insert_with(|| {
                if rest.is_empty() {
                    Value::Null
                } else {
                    Value::Object(Map::new())
                }
            });
            set_path(slot, rest, value, full)
        }
        Value::Array(items) => {
            let len = items.len();
            let slot = head
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "override '{full}': '{head}' is not an index below {len}"
                    ))
                })?;
            set_path(slot, rest, value, full)
        }
        _ => Err(Error::Config(format!(
            "override '{full}': '{head}' goes through a non-container value"
        ))),
    }
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) && !k.starts_with('_') {
            return Err(Error::Config(format!(
                "{what}: unknown field '{k}' (expected one of {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::Config(format!("{what}: expected an object")))
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::Config(format!("{what}: expected an array")))
}

fn as_index(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::Config(format!("{what}: expected a non-negative integer, got {v}")))
}

fn as_bool(v: &Value, what: &str) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::Config(format!("{what}: expected true or false, got {v}")))
}

fn parse_level(v: &Value, i: usize) -> Result<Level> {
    let what = format!("system.levels.{i}");
    let o = as_object(v, &what)?;
    check_keys(o, &["kind", "label", "loss_rate", "detuning"], &what)?;
    let kind = match o.get("kind") {
        None => LevelKind::at(i),
        Some(k) => serde_json::from_value(k.clone()).map_err(|_| {
            Error::Config(format!(
                "{what}.kind: expected \"ground\" or \"excited\", got {k}"
            ))
        })?,
    };
    let label = match o.get("label") {
        None => format!("L{i}"),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(Error::Config(format!(
                "{what}.label: expected a string, got {other}"
            )))
        }
    };
    let q = |key: &str| -> Result<f64> {
        o.get(key).map_or(Ok(0.0), |v| {
            parse_quantity(v, Dim::Rate, &format!("{what}.{key}"))
        })
    };
    Ok(Level {
        kind,
        label,
        loss_rate: q("loss_rate")?,
        detuning: q("detuning")?,
    })
}

fn parse_coupling(v: &Value, i: usize) -> Result<Coupling> {
    let what = format!("system.couplings.{i}");
    let o = as_object(v, &what)?;
    check_keys(
        o,
        &["lower_index", "dipole_moment", "wavelength", "drive"],
        &what,
    )?;
    let lower_index = o
        .get("lower_index")
        .map_or(Ok(i), |v| as_index(v, &format!("{what}.lower_index")))?;
    let dipole = o
        .get("dipole_moment")
        .ok_or_else(|| Error::Config(format!("{what}.dipole_moment is required")))
        .and_then(|v| parse_quantity(v, Dim::Dipole, &format!("{what}.dipole_moment")))?;
    let wavelength = o
        .get("wavelength")
        .filter(|v| !v.is_null())
        .map(|v| parse_quantity(v, Dim::Wavelength, &format!("{what}.wavelength")))
        .transpose()?;

    let dw = format!("{what}.drive");
    let d = as_object(
        o.get("drive")
            .ok_or_else(|| Error::Config(format!("{dw} is required")))?,
        &dw,
    )?;
    check_keys(d, &["shape", "peak_rabi", "width", "delay", "center"], &dw)?;
    let shape: EnvelopeShape = match d.get("shape") {
        Some(s) => serde_json::from_value(s.clone()).map_err(|_| {
            Error::Config(format!(
                "{dw}.shape: expected constant, tanh_on, tanh_off or gaussian, got {s}"
            ))
        })?,
        None => return Err(Error::Config(format!("{dw}.shape is required"))),
    };
    let peak = d
        .get("peak_rabi")
        .ok_or_else(|| Error::Config(format!("{dw}.peak_rabi is required")))
        .and_then(|v| parse_rabi(v, Some(dipole), &format!("{dw}.peak_rabi")))?;
    let t = |key: &str| -> Result<f64> {
        d.get(key).map_or(Ok(0.0), |v| {
            parse_quantity(v, Dim::Time, &format!("{dw}.{key}"))
        })
    };
    Ok(Coupling {
        lower_index,
        dipole_moment: dipole,
        wavelength,
        drive: PulseEnvelope {
            shape,
            peak_rabi: peak,
            width: t("width")?,
            delay: t("delay")?,
            center: t("center")?,
        },
    })
}

/// Read a chain description with unit-tagged quantities.
pub fn parse_system(v: &Value) -> Result<ChainSpec> {
    let o = as_object(v, "system")?;
    check_keys(
        o,
        &["levels", "couplings", "initial_level", "target_level"],
        "system",
    )?;
    let levels = as_array(o.get("levels").unwrap_or(&Value::Null), "system.levels")?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_level(l, i))
        .collect::<Result<Vec<_>>>()?;
    let couplings = as_array(
        o.get("couplings").unwrap_or(&Value::Null),
        "system.couplings",
    )?
    .iter()
    .enumerate()
    .map(|(i, c)| parse_coupling(c, i))
    .collect::<Result<Vec<_>>>()?;
    let initial_level = o
        .get("initial_level")
        .map_or(Ok(0), |v| as_index(v, "system.initial_level"))?;
    let target_level = o
        .get("target_level")
        .filter(|v| !v.is_null())
        .map(|v| as_index(v, "system.target_level"))
        .transpose()?;
    Ok(ChainSpec {
        levels,
        couplings,
        initial_level,
        target_level,
    })
}

/// The chain in config form, quantities tagged with their base units.
pub fn export_system(system: &ChainSystem) -> Value {
    let levels: Vec<Value> = system
        .levels()
        .iter()
        .map(|l| {
            json!({
                "kind": l.kind,
                "label": l.label,
                "loss_rate": with_unit(l.loss_rate, Dim::Rate),
                "detuning": with_unit(l.detuning, Dim::Rate),
            })
        })
        .collect();
    let couplings: Vec<Value> = system
        .couplings()
        .iter()
        .map(|c| {
            let d = &c.drive;
            let mut drive =
                json!({ "shape": d.shape, "peak_rabi": with_unit(d.peak_rabi, Dim::Rate) });
            match d.shape {
                EnvelopeShape::Constant => {}
                EnvelopeShape::TanhOn | EnvelopeShape::TanhOff => {
                    drive["width"] = with_unit(d.width, Dim::Time);
                    drive["delay"] = with_unit(d.delay, Dim::Time);
                }
                EnvelopeShape::Gaussian => {
                    drive["width"] = with_unit(d.width, Dim::Time);
                    drive["center"] = with_unit(d.center, Dim::Time);
                }
            }
            let mut out = json!({
                "lower_index": c.lower_index,
                "dipole_moment": with_unit(c.dipole_moment, Dim::Dipole),
                "drive": drive,
            });
            if let Some(w) = c.wavelength {
                out["wavelength"] = with_unit(w, Dim::Wavelength);
            }
            out
        })
        .collect();
    json!({
        "levels": levels,
        "couplings": couplings,
        "initial_level": system.initial_level(),
        "target_level": system.target_level(),
    })
}

/// A preset as a self-contained config with an inline system.
pub fn export_preset(preset: &ScenarioPreset) -> Value {
    let g = &preset.grid;
    json!({
        "system": export_system(&preset.system),
        "grid": {
            "t_start": with_unit(g.t_start, Dim::Time),
            "t_end": with_unit(g.t_end, Dim::Time),
            "output_points": g.output_points,
            "rel_tol": g.rel_tol,
            "abs_tol": g.abs_tol,
        },
    })
}

fn param_dim(p: Param) -> Dim {
    match p {
        Param::Width | Param::Delay => Dim::Time,
        Param::DelayRatio => Dim::Pure,
        Param::PeakRabi(_) | Param::Omega0 => Dim::Rate,
    }
}

fn parse_param_value(p: Param, v: &Value, system: &ChainSystem, what: &str) -> Result<f64> {
    match p {
        Param::PeakRabi(k) => {
            parse_rabi(v, system.couplings().get(k).map(|c| c.dipole_moment), what)
        }
        _ => parse_quantity(v, param_dim(p), what),
    }
}

const FIVE_LEVEL_KEYS: [&str; 9] = [
    "xi", "omega0", "gamma1", "gamma2", "gamma", "T", "width", "tau", "delay",
];

fn build_preset(name: &str, params: Option<&Value>) -> Result<ScenarioPreset> {
    let empty = Map::new();
    let params = match params {
        None | Some(Value::Null) => &empty,
        Some(v) => as_object(v, "params")?,
    };
    let mut generic = Vec::new();
    let preset = if name == "five-level" {
        let mut p = FiveLevelParams::default();
        for (k, v) in params {
            if FIVE_LEVEL_KEYS.contains(&k.as_str()) {
                let dim = match k.as_str() {
                    "xi" => Dim::Pure,
                    "T" | "width" | "tau" | "delay" => Dim::Time,
                    _ => Dim::Rate,
                };
                p.set(k, parse_quantity(v, dim, &format!("params.{k}"))?)?;
            } else {
                generic.push((k, v));
            }
        }
        preset_five_level(p)?
    } else {
        generic.extend(params.iter());
        preset_by_name(name)?
    };
    let values = generic
        .into_iter()
        .filter(|(k, _)| !k.starts_with('_'))
        .map(|(k, v)| {
            let p = Param::parse(k)?;
            Ok((
                p,
                parse_param_value(p, v, &preset.system, &format!("params.{k}"))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        Ok(preset)
    } else {
        apply_params(&preset, &values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub timeseries: bool,
    pub report: bool,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            timeseries: true,
            report: true,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    /// Explicit sample times, s; otherwise `samples` evenly spaced over the window.
    pub times: Option<Vec<f64>>,
    pub samples: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            times: None,
            samples: 201,
        }
    }
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioPreset,
    pub output: OutputConfig,
    pub sweep: Option<SweepSpec>,
    pub optimize: Option<OptimizeSpec>,
    pub analyze: AnalyzeConfig,
}

/// Read a config file (if any), add a preset given on the command line and
/// apply overrides.
pub fn load(
    path: Option<&Path>,
    preset: Option<&str>,
    overrides: &[Override],
) -> Result<RunConfig> {
    let mut root = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: invalid JSON: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if let Some(name) = preset {
        let obj = root
            .as_object_mut()
            .ok_or_else(|| Error::Config("config root must be an object".into()))?;
        if obj.contains_key("system") {
            return Err(Error::Config(
                "--preset given but the config has an inline system".into(),
            ));
        }
        obj.insert("preset".into(), Value::String(name.into()));
    }
    resolve(root, overrides)
}

/// Turn a config value plus overrides into a [`RunConfig`].
pub fn resolve(mut root: Value, overrides: &[Override]) -> Result<RunConfig> {
    let mut system_overrides = Vec::new();
    for o in overrides {
        let full = o.path.join(".");
        if o.path[0] == "system" && o.path.len() > 1 {
            system_overrides.push(o);
        } else {
            set_path(&mut root, &o.path, o.value.clone(), &full)?;
        }
    }
    let obj = as_object(&root, "config")?;
    check_keys(obj, &TOP_LEVEL, "config")?;

    let (base, mut system_value) = match (obj.get("preset"), obj.get("system")) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either preset or system, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "config needs a preset or an inline system".into(),
            ))
        }
        (Some(name), None) => {
            let name = name
                .as_str()
                .ok_or_else(|| Error::Config(format!("preset: expected a name, got {name}")))?;
            let p = build_preset(name, obj.get("params"))?;
            let v = export_system(&p.system);
            (Some(p), v)
        }
        (None, Some(sys)) => {
            if obj.get("params").is_some_and(|p| !p.is_null()) {
                return Err(Error::Config(
                    "params apply to presets; edit the inline system instead".into(),
                ));
            }
            (None, sys.clone())
        }
    };
    for o in &system_overrides {
        set_path(
            &mut system_value,
            &o.path[1..],
            o.value.clone(),
            &o.path.join("."),
        )?;
    }
    let system = validate_chain(parse_system(&system_value)?)?;

    let mut scenario = match base {
        Some(p) if system_overrides.is_empty() => p,
        Some(p) => p.with_system(system)?,
        None => {
            // Without a time-dependent drive there is no natural window; the
            // NaN placeholder fails validation unless the grid sets one.
            let auto = SimulationGrid::for_system(&system, DEFAULT_OUTPUT_POINTS).ok();
            ScenarioPreset {
                name: "custom".into(),
                description: "inline system".into(),
                grid: auto.unwrap_or_else(|| {
                    SimulationGrid::new(f64::NAN, f64::NAN, DEFAULT_OUTPUT_POINTS)
                }),
                auto_window: auto.is_some(),
                system,
                provenance: Vec::new(),
            }
        }
    };
    if let Some(g) = obj.get("grid").filter(|g| !g.is_null()) {
        apply_grid(&mut scenario, g)?;
    }
    scenario.grid.validate()?;

    let output = match obj.get("output").filter(|v| !v.is_null()) {
        None => OutputConfig::default(),
        Some(v) => parse_output(v)?,
    };
    let sweep = obj
        .get("sweep")
        .filter(|v| !v.is_null())
        .map(|v| parse_sweep(v, &scenario.system))
        .transpose()?;
    let optimize = obj
        .get("optimize")
        .filter(|v| !v.is_null())
        .map(|v| parse_optimize(v, &scenario.system))
        .transpose()?;
    let analyze = match obj.get("analyze").filter(|v| !v.is_null()) {
        None => AnalyzeConfig::default(),
        Some(v) => parse_analyze(v)?,
    };
    Ok(RunConfig {
        scenario,
        output,
        sweep,
        optimize,
        analyze,
    })
}

fn apply_grid(scenario: &mut ScenarioPreset, v: &Value) -> Result<()> {
    let o = as_object(v, "grid")?;
    check_keys(
        o,
        &["t_start", "t_end", "output_points", "rel_tol", "abs_tol"],
        "grid",
    )?;
    let g = &mut scenario.grid;
    if let Some(x) = o.get("t_start") {
        g.t_start = parse_quantity(x, Dim::Time, "grid.t_start")?;
        scenario.auto_window = false;
    }
    if let Some(x) = o.get("t_end") {
        g.t_end = parse_quantity(x, Dim::Time, "grid.t_end")?;
        scenario.auto_window = false;
    }
    if let Some(x) = o.get("output_points") {
        g.output_points = as_index(x, "grid.output_points")?;
    }
    if let Some(x) = o.get("rel_tol") {
        g.rel_tol = parse_quantity(x, Dim::Pure, "grid.rel_tol")?;
    }
    if let Some(x) = o.get("abs_tol") {
        g.abs_tol = parse_quantity(x, Dim::Pure, "grid.abs_tol")?;
    }
    Ok(())
}

fn parse_output(v: &Value) -> Result<OutputConfig> {
    let o = as_object(v, "output")?;
    check_keys(o, &["dir", "timeseries", "report", "svg"], "output")?;
    let mut out = OutputConfig::default();
    if let Some(d) = o.get("dir") {
        out.dir = PathBuf::from(
            d.as_str()
                .ok_or_else(|| Error::Config(format!("output.dir: expected a path, got {d}")))?,
        );
    }
    for (key, slot) in [
        ("timeseries", &mut out.timeseries),
        ("report", &mut out.report),
        ("svg", &mut out.svg),
    ] {
        if let Some(b) = o.get(key) {
            *slot = as_bool(b, &format!("output.{key}"))?;
        }
    }
    Ok(out)
}

fn parse_workers(o: &Map<String, Value>, what: &str) -> Result<Option<usize>> {
    o.get("workers")
        .filter(|v| !v.is_null())
        .map(|v| as_index(v, &format!("{what}.workers")))
        .transpose()
}

fn parse_sweep(v: &Value, system: &ChainSystem) -> Result<SweepSpec> {
    let o = as_object(v, "sweep")?;
    check_keys(o, &["axes", "workers"], "sweep")?;
    let axes = as_array(o.get("axes").unwrap_or(&Value::Null), "sweep.axes")?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let what = format!("sweep.axes.{i}");
            let a = as_object(a, &what)?;
            check_keys(a, &["param", "values", "from", "to", "count"], &what)?;
            let param = a
                .get("param")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config(format!("{what}.param: expected a parameter name")))
                .and_then(Param::parse)?;
            let q = |v: &Value, w: &str| parse_param_value(param, v, system, w);
            match (a.get("values"), a.get("from")) {
                (Some(vals), None) => {
                    let values = as_array(vals, &format!("{what}.values"))?
                        .iter()
                        .enumerate()
                        .map(|(k, v)| q(v, &format!("{what}.values.{k}")))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SweepAxis { param, values })
                }
                (None, Some(from)) => {
                    let lo = q(from, &format!("{what}.from"))?;
                    let hi = q(
                        a.get("to").ok_or_else(|| {
                            Error::Config(format!("{what}.to is required with from"))
                        })?,
                        &format!("{what}.to"),
                    )?;
                    let n = as_index(
                        a.get("count").ok_or_else(|| {
                            Error::Config(format!("{what}.count is required with from"))
                        })?,
                        &format!("{what}.count"),
                    )?;
                    Ok(SweepAxis::linspace(param, lo, hi, n))
                }
                _ => Err(Error::Config(format!(
                    "{what}: give either values or from/to/count"
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec {
        axes,
        workers: parse_workers(o, "sweep")?,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_optimize(v: &Value, system: &ChainSystem) -> Result<OptimizeSpec> {
    let o = as_object(v, "optimize")?;
    check_keys(
        o,
        &[
            "free",
            "tolerance",
            "max_evaluations",
            "max_iterations",
            "omega_eff_cap",
            "workers",
        ],
        "optimize",
    )?;
    let free = as_array(o.get("free").unwrap_or(&Value::Null), "optimize.free")?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let what = format!("optimize.free.{i}");
            let f = as_object(f, &what)?;
            check_keys(f, &["param", "lower", "upper", "initial", "scale"], &what)?;
            let param = f
                .get("param")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config(format!("{what}.param: expected a parameter name")))
                .and_then(Param::parse)?;
            let get = |key: &str| -> Result<Option<f64>> {
                f.get(key)
                    .filter(|v| !v.is_null())
                    .map(|v| parse_param_value(param, v, system, &format!("{what}.{key}")))
                    .transpose()
            };
            let need = |key: &str| -> Result<f64> {
                get(key)?.ok_or_else(|| Error::Config(format!("{what}.{key} is required")))
            };
            Ok(FreeParam {
                param,
                lower: need("lower")?,
                upper: need("upper")?,
                initial: get("initial")?,
                scale: get("scale")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spec = OptimizeSpec::new(free);
    if let Some(t) = o.get("tolerance") {
        spec.tolerance = parse_quantity(t, Dim::Pure, "optimize.tolerance")?;
    }
    if let Some(n) = o.get("max_evaluations") {
        spec.max_evaluations = as_index(n, "optimize.max_evaluations")?;
    }
    if let Some(n) = o.get("max_iterations").filter(|v| !v.is_null()) {
        spec.max_iterations = Some(as_index(n, "optimize.max_iterations")?);
    }
    if let Some(c) = o.get("omega_eff_cap").filter(|v| !v.is_null()) {
        spec.omega_eff_cap = Some(parse_quantity(c, Dim::Rate, "optimize.omega_eff_cap")?);
    }
    spec.workers = parse_workers(o, "optimize")?;
    spec.validate()?;
    Ok(spec)
}

fn parse_analyze(v: &Value) -> Result<AnalyzeConfig> {
    let o = as_object(v, "analyze")?;
    check_keys(o, &["times", "samples"], "analyze")?;
    let mut out = AnalyzeConfig::default();
    if let Some(ts) = o.get("times").filter(|v| !v.is_null()) {
        out.times = Some(
            as_array(ts, "analyze.times")?
                .iter()
                .enumerate()
                .map(|(k, t)| parse_quantity(t, Dim::Time, &format!("analyze.times.{k}")))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if let Some(n) = o.get("samples") {
        out.samples = as_index(n, "analyze.samples")?;
        if out.samples < 2 {
            return Err(Error::Config("analyze.samples must be at least 2".into()));
        }
    }
    Ok(out)
}
