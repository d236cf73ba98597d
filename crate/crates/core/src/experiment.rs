//! Parameter sweeps over whole scenarios.
//!
//! An [`ExperimentSpec`] names a sweep variable, a list of values and a set
//! of curves (`mode:strategy[:variant]`). Every (value, curve) cell builds
//! the statistical CSI, chooses powers and phases by the curve's strategy,
//! and records the closed-form sum rate plus optional Monte-Carlo and
//! strong-LoS values. Rows come back ordered by sweep value, then curve.
//!
//! Specs are read from TOML with dotted keys (`scenario.k = 6`) layered on
//! top of [`default_scenario`]; the same keys work for `--set` overrides.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    build_statistical_csi, place_pairs_uniform, AngleSource, ChannelParams, PlacementArea, Point3, RicianFactors,
    StatisticalCsi, SystemGeometry,
};
use crate::closedform::{asymptotic_rate_rician, budget_split, ergodic_rate, RisMode, RisState};
use crate::error::{Error, Result};
use crate::gaopt::{evolve, random_phase, GaParams, MutantSource, OptProblem, PowerSampling};
use crate::montecarlo::{ergodic_rate_mc, McConfig};
use crate::numerics::{dbm_to_watt, mix_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TotalPowerDbm,
    RicianDb,
    NElements,
    KappaPn,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::TotalPowerDbm => "total_power_dbm",
            SweepVariable::RicianDb => "rician_db",
            SweepVariable::NElements => "n_elements",
            SweepVariable::KappaPn => "kappa_pn",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepVariable::TotalPowerDbm,
            SweepVariable::RicianDb,
            SweepVariable::NElements,
            SweepVariable::KappaPn,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep variable `{s}`")))
    }
}

/// How powers and phases are chosen for a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Equal powers, one uniform draw of grid phases.
    RandomPhase,
    /// Equal powers, GA over phases only.
    Pso,
    /// GA over powers and phases.
    Pcpso,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RandomPhase => "random_phase",
            Strategy::Pso => "pso",
            Strategy::Pcpso => "pcpso",
        }
    }
}

/// One line of a plot: surface mode, strategy and an optional phase-noise
/// override (`inf` for ideal hardware).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub mode: RisMode,
    pub strategy: Strategy,
    pub kappa_pn: Option<f64>,
}

impl Curve {
    pub fn new(mode: RisMode, strategy: Strategy) -> Self {
        Self {
            mode,
            strategy,
            kappa_pn: None,
        }
    }

    pub fn label(&self) -> String {
        let base = format!("{}:{}", self.mode, self.strategy.as_str());
        match self.kappa_pn {
            None => base,
            Some(k) if k.is_infinite() => format!("{base}:no_phase_noise"),
            Some(k) => format!("{base}:kappa={k}"),
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Curve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad curve `{s}`, expected mode:strategy[:variant]"));
        let mut parts = s.split(':');
        let mode: RisMode = parts.next().ok_or_else(bad)?.parse()?;
        let strategy = match parts.next().ok_or_else(bad)? {
            "random_phase" => Strategy::RandomPhase,
            "pso" => Strategy::Pso,
            "pcpso" => Strategy::Pcpso,
            _ => return Err(bad()),
        };
        let kappa_pn = match parts.next() {
            None => None,
            Some("no_phase_noise") => Some(f64::INFINITY),
            Some(v) => {
                let k = v.strip_prefix("kappa=").ok_or_else(bad)?;
                let k: f64 = k.parse().map_err(|_| bad())?;
                if !(k >= 0.0) {
                    return Err(bad());
                }
                Some(k)
            }
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self {
            mode,
            strategy,
            kappa_pn,
        })
    }
}

/// Physical scenario. Powers are in dBm, Rician factors in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub wavelength: f64,
    pub ris_position: Point3,
    pub area: PlacementArea,
    /// Explicit positions; drawn uniformly in `area` when absent.
    pub tx_positions: Option<Vec<Point3>>,
    pub rx_positions: Option<Vec<Point3>>,
    pub total_power_dbm: f64,
    /// Share of the post-hardware budget given to the transmitters (active).
    pub rho: f64,
    /// Per-user power cap in watts; defaults to the transmit budget.
    pub p_max: Option<f64>,
    pub bits: u32,
    pub kappa_pn: f64,
    pub noise_floor_dbm: f64,
    pub rx_noise_dbm: f64,
    pub p_dc_dbm: f64,
    pub p_sw_dbm: f64,
    pub amp_eff: f64,
    pub rician_db: f64,
    pub reflect_exponent: f64,
    pub direct_exponent: f64,
    pub direct_links: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            k: 6,
            n_h: 8,
            n_v: 4,
            wavelength: 0.125,
            ris_position: [30.0, 0.0, 8.0],
            area: PlacementArea::default(),
            tx_positions: None,
            rx_positions: None,
            total_power_dbm: 30.0,
            rho: 0.5,
            p_max: None,
            bits: 3,
            kappa_pn: 4.0,
            noise_floor_dbm: -70.0,
            rx_noise_dbm: -80.0,
            p_dc_dbm: -5.0,
            p_sw_dbm: -10.0,
            amp_eff: 0.8,
            rician_db: 10.0,
            reflect_exponent: 2.2,
            direct_exponent: 3.8,
            direct_links: true,
        }
    }
}

/// Near-square factorization `N = n_h * n_v` with `n_v <= n_h`.
pub fn upa_shape(n: usize) -> (usize, usize) {
    let n_v = (1..=n).take_while(|d| d * d <= n).filter(|d| n % d == 0).last().unwrap_or(1);
    (n / n_v, n_v)
}

impl Scenario {
    pub fn n_elements(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn total_power(&self) -> f64 {
        dbm_to_watt(self.total_power_dbm)
    }

    /// Copy with the sweep variable set to `value`.
    pub fn with_sweep(&self, var: SweepVariable, value: f64) -> Result<Scenario> {
        let mut s = self.clone();
        match var {
            SweepVariable::TotalPowerDbm => s.total_power_dbm = value,
            SweepVariable::RicianDb => s.rician_db = value,
            SweepVariable::KappaPn => s.kappa_pn = value,
            SweepVariable::NElements => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config("sweep.values", format!("{value} is not an element count")));
                }
                (s.n_h, s.n_v) = upa_shape(value as usize);
            }
        }
        Ok(s)
    }

    /// Transmitter and receiver positions.
    pub fn positions(&self, seed: u64) -> (Vec<Point3>, Vec<Point3>) {
        let (tx, rx) = place_pairs_uniform(self.k, &self.area, seed);
        (self.tx_positions.clone().unwrap_or(tx), self.rx_positions.clone().unwrap_or(rx))
    }

    pub fn geometry(&self, seed: u64) -> SystemGeometry {
        let (tx, rx) = self.positions(seed);
        SystemGeometry::quarter_wave(self.n_h, self.n_v, self.wavelength, self.ris_position, tx, rx)
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            reflect_exponent: self.reflect_exponent,
            direct_exponent: self.direct_exponent,
            rician: RicianFactors::uniform_db(self.rician_db),
            direct_links: self.direct_links,
            rx_noise: dbm_to_watt(self.rx_noise_dbm),
        }
    }

    /// Statistical CSI with positions and angles drawn from `seed`.
    pub fn build_csi(&self, seed: u64) -> Result<StatisticalCsi> {
        build_statistical_csi(
            &self.geometry(mix_stream(seed, 1)),
            &self.channel_params(),
            &AngleSource::Random {
                seed: mix_stream(seed, 2),
            },
        )
    }

    /// Surface hardware in `mode`, zero phases.
    pub fn ris_state(&self, mode: RisMode) -> RisState {
        RisState {
            mode,
            theta: vec![0.0; self.n_elements()],
            bits: self.bits,
            kappa_pn: self.kappa_pn,
            noise_floor: dbm_to_watt(self.noise_floor_dbm),
            p_dc: dbm_to_watt(self.p_dc_dbm),
            p_sw: dbm_to_watt(self.p_sw_dbm),
            amp_eff: self.amp_eff,
            eta_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        if self.k == 0 {
            return Err(Error::config("scenario.k", "must be >= 1"));
        }
        if self.n_h == 0 || self.n_v == 0 {
            return Err(Error::config("scenario.n_h", "RIS grid must be at least 1x1"));
        }
        pos("scenario.wavelength", self.wavelength)?;
        pos("scenario.amp_eff", self.amp_eff)?;
        if self.amp_eff > 1.0 {
            return Err(Error::config("scenario.amp_eff", "must be <= 1"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("scenario.rho", "must lie in (0, 1)"));
        }
        if let Some(p) = self.p_max {
            pos("scenario.p_max", p)?;
        }
        if !(self.kappa_pn >= 0.0) {
            return Err(Error::config("scenario.kappa_pn", "must be >= 0"));
        }
        if self.bits > 16 {
            return Err(Error::config("scenario.bits", "at most 16 bits"));
        }
        for (key, v) in [("scenario.tx_positions", &self.tx_positions), ("scenario.rx_positions", &self.rx_positions)] {
            if let Some(v) = v {
                if v.len() != self.k {
                    return Err(Error::config(key, format!("{} positions for k = {}", v.len(), self.k)));
                }
            }
        }
        if self.area.x[0] > self.area.x[1] || self.area.y[0] > self.area.y[1] {
            return Err(Error::config("scenario.area", "bounds must be ordered"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub enabled: bool,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    /// Worker threads for sweep cells; 0 uses all cores.
    pub workers: usize,
    pub sweep: Sweep,
    pub curves: Vec<Curve>,
    pub scenario: Scenario,
    pub mc: McSettings,
    pub ga: GaParams,
    /// Adds the strong-LoS limit of every configuration.
    pub asymptotic: bool,
    pub output: Option<PathBuf>,
    /// Free-text notes copied into the metadata file.
    pub assumptions: Vec<String>,
}

/// Reference scenario at 30 dBm with a single active GA curve.
pub fn default_scenario() -> ExperimentSpec {
    ExperimentSpec {
        name: "default".into(),
        seed: 1,
        workers: 0,
        sweep: Sweep {
            variable: SweepVariable::TotalPowerDbm,
            values: vec![30.0],
        },
        curves: vec![Curve::new(RisMode::Active, Strategy::Pcpso)],
        scenario: Scenario::default(),
        mc: McSettings {
            enabled: true,
            trials: 20_000,
        },
        ga: GaParams::default(),
        asymptotic: false,
        output: None,
        assumptions: Vec::new(),
    }
}

fn curves(labels: &[&str]) -> Vec<Curve> {
    labels.iter().map(|l| l.parse().expect("builtin curve label")).collect()
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

pub fn builtin_names() -> &'static [&'static str] {
    &["fig2", "fig3", "fig4"]
}

/// Built-in sweeps: total power, Rician factor and surface size.
pub fn builtin(name: &str) -> Result<ExperimentSpec> {
    let mut spec = default_scenario();
    spec.name = name.to_string();
    match name {
        "fig2" => {
            spec.sweep = Sweep {
                variable: SweepVariable::TotalPowerDbm,
                values: grid(10.0, 50.0, 5.0),
            };
            spec.curves = curves(&[
                "active:pcpso",
                "active:pso",
                "active:random_phase",
                "active:pcpso:no_phase_noise",
                "passive:pcpso",
                "passive:random_phase",
                "absent:pcpso",
            ]);
            spec.assumptions
                .push("total power axis 10..50 dBm in 5 dB steps is assumed".into());
        }
        "fig3" => {
            spec.sweep = Sweep {
                variable: SweepVariable::RicianDb,
                values: grid(-10.0, 40.0, 5.0),
            };
            spec.curves = curves(&["active:pcpso", "active:random_phase", "passive:pcpso"]);
            spec.asymptotic = true;
        }
        "fig4" => {
            spec.sweep = Sweep {
                variable: SweepVariable::NElements,
                values: grid(8.0, 64.0, 8.0),
            };
            spec.curves = curves(&[
                "active:pcpso:kappa=1",
                "active:pcpso:kappa=4",
                "active:pcpso:no_phase_noise",
                "passive:pcpso",
            ]);
            spec.assumptions
                .push("N = n_h x n_v uses the near-square factorization with n_v <= n_h".into());
        }
        other => return Err(Error::UnknownBuiltin(other.to_string())),
    }
    Ok(spec)
}

fn type_err(key: &str, want: &str, v: &toml::Value) -> Error {
    Error::config(key, format!("expected {want}, got `{v}`"))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::String(s) if matches!(s.as_str(), "inf" | "infinity") => Ok(f64::INFINITY),
        _ => Err(type_err(key, "a number", v)),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        // seeds above i64::MAX are written as strings
        toml::Value::String(s) => s.parse().map_err(|_| type_err(key, "a non-negative integer", v)),
        _ => Err(type_err(key, "a non-negative integer", v)),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_err(key, "a boolean", v))
}

fn as_str<'v>(key: &str, v: &'v toml::Value) -> Result<&'v str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

fn as_f64_list(key: &str, v: &toml::Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| type_err(key, "an array of numbers", v))?
        .iter()
        .map(|x| as_f64(key, x))
        .collect()
}

fn as_point(key: &str, v: &toml::Value) -> Result<Point3> {
    let xs = as_f64_list(key, v)?;
    xs.as_slice()
        .try_into()
        .map_err(|_| type_err(key, "an [x, y, z] triple", v))
}

fn as_range(key: &str, v: &toml::Value) -> Result<[f64; 2]> {
    let xs = as_f64_list(key, v)?;
    xs.as_slice().try_into().map_err(|_| type_err(key, "a [lo, hi] pair", v))
}

fn as_points(key: &str, v: &toml::Value) -> Result<Vec<Point3>> {
    v.as_array()
        .ok_or_else(|| type_err(key, "an array of [x, y, z]", v))?
        .iter()
        .map(|p| as_point(key, p))
        .collect()
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value,
/// falling back to a bare string.
pub fn parse_override(assignment: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl ExperimentSpec {
    /// Sets one dotted key.
    pub fn apply(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        let s = &mut self.scenario;
        match key {
            "name" => self.name = as_str(key, v)?.to_string(),
            "seed" => self.seed = as_u64(key, v)?,
            "workers" => self.workers = as_usize(key, v)?,
            "asymptotic" => self.asymptotic = as_bool(key, v)?,
            "output" => self.output = Some(PathBuf::from(as_str(key, v)?)),
            "assumptions" => {
                self.assumptions = v
                    .as_array()
                    .ok_or_else(|| type_err(key, "an array of strings", v))?
                    .iter()
                    .map(|x| as_str(key, x).map(str::to_string))
                    .collect::<Result<_>>()?
            }
            "curves" => {
                self.curves = v
                    .as_array()
                    .ok_or_else(|| type_err(key, "an array of curve labels", v))?
                    .iter()
                    .map(|x| {
                        as_str(key, x)?
                            .parse()
                            .map_err(|e: Error| Error::config(key, e.to_string()))
                    })
                    .collect::<Result<_>>()?
            }
            "sweep.variable" => {
                self.sweep.variable = as_str(key, v)?
                    .parse()
                    .map_err(|e: Error| Error::config(key, e.to_string()))?
            }
            "sweep.values" => self.sweep.values = as_f64_list(key, v)?,
            "mc.enabled" => self.mc.enabled = as_bool(key, v)?,
            "mc.trials" => self.mc.trials = as_usize(key, v)?,
            "ga.population" => self.ga.population = as_usize(key, v)?,
            "ga.parents" => self.ga.parents = as_usize(key, v)?,
            "ga.mutants" => self.ga.mutants = as_usize(key, v)?,
            "ga.max_iters" => self.ga.max_iters = as_usize(key, v)?,
            "ga.target_fitness" => self.ga.target_fitness = as_f64(key, v)?,
            "ga.power_levels" => self.ga.power_levels = Some(as_u64(key, v)? as u32),
            "ga.power_control" => self.ga.power_control = as_bool(key, v)?,
            "ga.cophase_seeds" => self.ga.cophase_seeds = as_bool(key, v)?,
            "ga.mutant_source" => {
                self.ga.mutant_source = match as_str(key, v)? {
                    "elite" => MutantSource::Elite,
                    "population" => MutantSource::Population,
                    other => return Err(Error::config(key, format!("`{other}` is not elite or population"))),
                }
            }
            "ga.power_sampling" => {
                self.ga.power_sampling = match as_str(key, v)? {
                    "uniform" => PowerSampling::Uniform,
                    "log_uniform" => match self.ga.power_sampling {
                        PowerSampling::Uniform => PowerSampling::LogUniform { decades: 6.0 },
                        keep => keep,
                    },
                    other => return Err(Error::config(key, format!("`{other}` is not uniform or log_uniform"))),
                }
            }
            "ga.log_decades" => {
                self.ga.power_sampling = PowerSampling::LogUniform {
                    decades: as_f64(key, v)?,
                }
            }
            "scenario.k" => s.k = as_usize(key, v)?,
            "scenario.n_h" => s.n_h = as_usize(key, v)?,
            "scenario.n_v" => s.n_v = as_usize(key, v)?,
            "scenario.n_elements" => {
                let n = as_usize(key, v)?;
                if n == 0 {
                    return Err(Error::config(key, "must be >= 1"));
                }
                (s.n_h, s.n_v) = upa_shape(n);
            }
            "scenario.wavelength" => s.wavelength = as_f64(key, v)?,
            "scenario.ris_position" => s.ris_position = as_point(key, v)?,
            "scenario.area.x" => s.area.x = as_range(key, v)?,
            "scenario.area.y" => s.area.y = as_range(key, v)?,
            "scenario.area.height" => s.area.height = as_f64(key, v)?,
            "scenario.tx_positions" => s.tx_positions = Some(as_points(key, v)?),
            "scenario.rx_positions" => s.rx_positions = Some(as_points(key, v)?),
            "scenario.total_power_dbm" => s.total_power_dbm = as_f64(key, v)?,
            "scenario.rho" => s.rho = as_f64(key, v)?,
            "scenario.p_max" => s.p_max = Some(as_f64(key, v)?),
            "scenario.bits" => s.bits = as_u64(key, v)? as u32,
            "scenario.kappa_pn" => s.kappa_pn = as_f64(key, v)?,
            "scenario.noise_floor_dbm" => s.noise_floor_dbm = as_f64(key, v)?,
            "scenario.rx_noise_dbm" => s.rx_noise_dbm = as_f64(key, v)?,
            "scenario.p_dc_dbm" => s.p_dc_dbm = as_f64(key, v)?,
            "scenario.p_sw_dbm" => s.p_sw_dbm = as_f64(key, v)?,
            "scenario.amp_eff" => s.amp_eff = as_f64(key, v)?,
            "scenario.rician_db" => s.rician_db = as_f64(key, v)?,
            "scenario.reflect_exponent" => s.reflect_exponent = as_f64(key, v)?,
            "scenario.direct_exponent" => s.direct_exponent = as_f64(key, v)?,
            "scenario.direct_links" => s.direct_links = as_bool(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies every key of a TOML document. A `builtin = "fig2"` entry
    /// starts from that builtin instead of the default scenario.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut spec = match table.get("builtin") {
            Some(b) => builtin(as_str("builtin", b)?)?,
            None => default_scenario(),
        };
        let mut pairs = Vec::new();
        flatten("", &table, &mut pairs);
        let has = |k: &str, v: Option<&str>| pairs.iter().any(|(pk, pv)| pk == k && v.is_none_or(|v| pv.as_str() == Some(v)));
        if has("ga.log_decades", None) && has("ga.power_sampling", Some("uniform")) {
            return Err(Error::config("ga.log_decades", "conflicts with ga.power_sampling = \"uniform\""));
        }
        for (key, value) in pairs.iter().filter(|(k, _)| k != "builtin") {
            spec.apply(key, value)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if self.sweep.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("sweep.values", "must be strictly increasing"));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.values", "must be finite"));
        }
        for &v in &self.sweep.values {
            self.scenario.with_sweep(self.sweep.variable, v)?;
        }
        if self.sweep.variable == SweepVariable::KappaPn && self.sweep.values.iter().any(|&v| v < 0.0) {
            return Err(Error::config("sweep.values", "kappa_pn must be >= 0"));
        }
        if self.curves.is_empty() {
            return Err(Error::config("curves", "at least one curve is required"));
        }
        if self.mc.enabled && self.mc.trials == 0 {
            return Err(Error::config("mc.trials", "must be >= 1"));
        }
        self.ga
            .validate()
            .map_err(|e| Error::config("ga", e.to_string()))?;
        self.scenario.validate()
    }

    fn cell_seed(&self, point: usize, curve: usize) -> u64 {
        mix_stream(mix_stream(self.seed, 3), ((point as u64) << 20) | curve as u64)
    }

    pub fn scenario_seed(&self) -> u64 {
        mix_stream(self.seed, 4)
    }
}

/// One (sweep value, curve) result. Rates are rounded to nine significant
/// digits so that CSV round trips are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub curve: String,
    pub sum_rate_closed_form: f64,
    pub sum_rate_mc: Option<f64>,
    pub mc_std_err: Option<f64>,
    pub sum_rate_asymptotic: Option<f64>,
    pub per_user: Vec<f64>,
    pub seed: u64,
    /// Wall time of the cell; kept out of the CSV.
    pub elapsed_ms: u64,
}

/// Rounds to nine significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn evaluate_cell(spec: &ExperimentSpec, point: usize, curve_idx: usize, csi: &StatisticalCsi) -> Result<ResultRow> {
    let start = Instant::now();
    let value = spec.sweep.values[point];
    let scenario = spec.scenario.with_sweep(spec.sweep.variable, value)?;
    let curve = spec.curves[curve_idx];
    let seed = spec.cell_seed(point, curve_idx);
    let mut ris = scenario.ris_state(curve.mode);
    if let Some(k) = curve.kappa_pn {
        ris.kappa_pn = k;
    }
    let total = scenario.total_power();
    let k = scenario.k;
    let mut row = ResultRow {
        sweep_value: value,
        curve: curve.label(),
        sum_rate_closed_form: 0.0,
        sum_rate_mc: spec.mc.enabled.then_some(0.0),
        mc_std_err: spec.mc.enabled.then_some(0.0),
        sum_rate_asymptotic: spec.asymptotic.then_some(0.0),
        per_user: vec![0.0; k],
        seed,
        elapsed_ms: 0,
    };
    // the budget cannot even power the surface: rates are zero
    let Some(split) = budget_split(curve.mode, total, scenario.n_elements(), &ris, scenario.rho) else {
        row.elapsed_ms = start.elapsed().as_millis() as u64;
        return Ok(row);
    };
    let problem = OptProblem::new(csi, &ris, split, total).with_p_max(scenario.p_max.unwrap_or(split.transmit));
    let ga = GaParams {
        seed: mix_stream(seed, 1),
        ..spec.ga.clone()
    };
    let chosen = match curve.strategy {
        Strategy::RandomPhase => random_phase(&problem, mix_stream(seed, 3)),
        Strategy::Pso => {
            evolve(
                &problem,
                &GaParams {
                    power_control: false,
                    ..ga
                },
            )?
            .best
        }
        Strategy::Pcpso => evolve(&problem, &ga)?.best,
    };
    let alloc = problem.allocation(&chosen);
    let state = problem.ris_state(&chosen);
    let cf = ergodic_rate(&alloc, csi, &state)?;
    row.sum_rate_closed_form = round_sig(cf.sum);
    row.per_user = cf.per_user.iter().map(|&r| round_sig(r)).collect();
    if spec.mc.enabled {
        let mc = ergodic_rate_mc(csi, &alloc, &state, &McConfig::new(spec.mc.trials, mix_stream(seed, 2)))?;
        row.sum_rate_mc = Some(round_sig(mc.rates.sum));
        row.mc_std_err = Some(round_sig(mc.sum_std_err));
    }
    if spec.asymptotic {
        row.sum_rate_asymptotic = Some(round_sig(asymptotic_rate_rician(&alloc, csi, &state)?.sum));
    }
    row.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(row)
}

/// Rows produced by a run and whether it was cut short.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub interrupted: bool,
    pub elapsed_ms: u64,
}

/// Runs every cell of the sweep; see [`run_experiment_until`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    Ok(run_experiment_until(spec, &AtomicBool::new(false))?.rows)
}

/// Runs the sweep on `spec.workers` threads. Cells not yet started when
/// `stop` becomes true are skipped; finished rows are still returned in
/// order.
pub fn run_experiment_until(spec: &ExperimentSpec, stop: &AtomicBool) -> Result<RunOutcome> {
    spec.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let scenario_seed = spec.scenario_seed();
    let cells: Vec<(usize, usize)> = (0..spec.sweep.values.len())
        .flat_map(|p| (0..spec.curves.len()).map(move |c| (p, c)))
        .collect();
    let results: Vec<Option<Result<ResultRow>>> = pool.install(|| {
        let csis: Vec<Result<StatisticalCsi>> = spec
            .sweep
            .values
            .par_iter()
            .map(|&v| spec.scenario.with_sweep(spec.sweep.variable, v)?.build_csi(scenario_seed))
            .collect();
        cells
            .par_iter()
            .map(|&(p, c)| {
                if stop.load(Ordering::Relaxed) {
                    return None;
                }
                Some(match &csis[p] {
                    Ok(csi) => evaluate_cell(spec, p, c, csi),
                    Err(e) => Err(Error::InvalidArgument(e.to_string())),
                })
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut interrupted = false;
    for r in results {
        match r {
            Some(row) => rows.push(row?),
            None => interrupted = true,
        }
    }
    Ok(RunOutcome {
        rows,
        interrupted,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Writes rows as CSV. The first column is named after the sweep variable;
/// per-user rates follow as `rate_1 .. rate_K`.
pub fn write_csv<W: Write>(out: W, variable: SweepVariable, rows: &[ResultRow]) -> Result<()> {
    let k = rows.iter().map(|r| r.per_user.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        variable.as_str().to_string(),
        "curve".into(),
        "sum_rate_closed_form".into(),
        "sum_rate_mc".into(),
        "mc_std_err".into(),
        "sum_rate_asymptotic".into(),
        "seed".into(),
    ];
    header.extend((1..=k).map(|j| format!("rate_{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            fmt_num(r.sweep_value),
            r.curve.clone(),
            fmt_num(r.sum_rate_closed_form),
            fmt_opt(r.sum_rate_mc),
            fmt_opt(r.mc_std_err),
            fmt_opt(r.sum_rate_asymptotic),
            r.seed.to_string(),
        ];
        rec.extend(r.per_user.iter().map(|&x| fmt_num(x)));
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV produced by [`write_csv`]. `elapsed_ms` reads back as 0.
pub fn read_csv<R: Read>(input: R) -> Result<(SweepVariable, Vec<ResultRow>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let variable: SweepVariable = header
        .get(0)
        .ok_or_else(|| Error::InvalidArgument("empty CSV header".into()))?
        .parse()?;
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad number `{s}` in CSV")))
    };
    let opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(ResultRow {
            sweep_value: num(field(0))?,
            curve: field(1).to_string(),
            sum_rate_closed_form: num(field(2))?,
            sum_rate_mc: opt(field(3))?,
            mc_std_err: opt(field(4))?,
            sum_rate_asymptotic: opt(field(5))?,
            seed: field(6)
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad seed `{}`", field(6))))?,
            per_user: (7..rec.len())
                .map(|i| field(i))
                .filter(|s| !s.is_empty())
                .map(num)
                .collect::<Result<_>>()?,
            elapsed_ms: 0,
        });
    }
    Ok((variable, rows))
}

/// Companion file describing how a CSV was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub spec: ExperimentSpec,
    pub interrupted: bool,
    pub elapsed_ms: u64,
    pub row_elapsed_ms: Vec<u64>,
}

impl RunMetadata {
    pub fn new(spec: &ExperimentSpec, outcome: &RunOutcome) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            interrupted: outcome.interrupted,
            elapsed_ms: outcome.elapsed_ms,
            row_elapsed_ms: outcome.rows.iter().map(|r| r.elapsed_ms).collect(),
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
