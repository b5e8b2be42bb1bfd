//! Run configuration: `key = value` lines with dotted section keys.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use cavity_forge_core::geometry::{
    periodic_bullseye_template, published_optimized_design, CavityGeometry, ParamId,
};
use cavity_forge_core::gme::GmeConfig;
use cavity_forge_core::objective::LossWeights;
use cavity_forge_core::optimizer::{MomentDecay, StageSpec, DEFAULT_LEARNING_RATE, DEFAULT_TAU_FF_FLOOR};
use cavity_forge_core::analysis::{DEFAULT_DELTAS_NM, DEFAULT_RESOLUTION, REFERENCE_NA};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    Template(Template),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Bullseye,
    Published,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Bullseye => "bullseye",
            Template::Published => "published",
        }
    }

    pub fn geometry(self) -> CavityGeometry {
        match self {
            Template::Bullseye => periodic_bullseye_template(),
            Template::Published => published_optimized_design(),
        }
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bullseye" => Ok(Template::Bullseye),
            "published" => Ok(Template::Published),
            other => Err(format!("unknown template `{other}` (expected bullseye or published)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub stages: usize,
    pub q_ref_start: f64,
    pub growth: f64,
    pub learning_rate: f64,
    pub tau_ff_floor: f64,
    pub rolling_reference: bool,
    pub moments: MomentDecay,
}

impl ScheduleConfig {
    pub fn stages(&self) -> Result<Vec<StageSpec>, String> {
        let mut s = cavity_forge_core::optimizer::default_schedule(self.epochs, self.stages, self.q_ref_start, self.growth)
            .map_err(|e| e.to_string())?;
        for st in &mut s {
            st.learning_rate = self.learning_rate;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySource,
    pub gme: GmeConfig,
    pub loss: LossWeights,
    pub schedule: ScheduleConfig,
    pub sweep_params: Vec<ParamId>,
    pub sweep_deltas_nm: Vec<f64>,
    pub sweep_na: f64,
    pub na_grid: Vec<f64>,
    pub resolution: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
}

pub fn default_na_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometrySource::Template(Template::Bullseye),
            gme: GmeConfig::default(),
            loss: LossWeights::default(),
            schedule: ScheduleConfig {
                epochs: 105,
                stages: 7,
                q_ref_start: 1000.0,
                growth: 2.0,
                learning_rate: DEFAULT_LEARNING_RATE,
                tau_ff_floor: DEFAULT_TAU_FF_FLOOR,
                rolling_reference: false,
                moments: MomentDecay::default(),
            },
            sweep_params: vec![
                ParamId::RingWidth(1),
                ParamId::RingWidth(2),
                ParamId::RingWidth(3),
                ParamId::DiskRadius,
                ParamId::RingGap(1),
                ParamId::RingGap(2),
            ],
            sweep_deltas_nm: DEFAULT_DELTAS_NM.to_vec(),
            sweep_na: REFERENCE_NA,
            na_grid: default_na_grid(),
            resolution: DEFAULT_RESOLUTION,
            out: None,
            seed: 0,
            threads: 1,
        }
    }
}

impl RunConfig {
    /// Smoke preset for the optimizer: smaller cutoff and one short stage.
    pub fn apply_smoke(&mut self) {
        self.gme.gmax = SMOKE_GMAX;
        self.schedule.epochs = 10;
        self.schedule.stages = 1;
        self.schedule.q_ref_start = SMOKE_Q_REF;
    }

    pub fn load_geometry(&self) -> Result<CavityGeometry, String> {
        match &self.geometry {
            GeometrySource::Template(t) => Ok(t.geometry()),
            GeometrySource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                text.parse::<CavityGeometry>().map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    /// Resolved configuration as `key = value` lines; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", ");
        match &self.geometry {
            GeometrySource::Template(t) => writeln!(s, "geometry.template = {}", t.name()),
            GeometrySource::File(p) => writeln!(s, "geometry.file = {}", p.display()),
        }
        .unwrap();
        let g = &self.gme;
        writeln!(s, "gme.gmax = {}", fmt_num(g.gmax)).unwrap();
        writeln!(s, "gme.num_guided_bands = {}", g.num_guided_bands).unwrap();
        match g.num_eigenpairs {
            Some(k) => writeln!(s, "gme.num_eigenpairs = {k}").unwrap(),
            None => writeln!(s, "gme.num_eigenpairs = auto").unwrap(),
        }
        writeln!(s, "gme.mode_window = [{}]", list(&[g.mode_window.0, g.mode_window.1])).unwrap();
        let l = &self.loss;
        for (k, v) in [
            ("loss.w_f", l.w_f),
            ("loss.w_q", l.w_q),
            ("loss.w_ff", l.w_ff),
            ("loss.f_target", l.f_target),
            ("loss.delta_f", l.delta_f),
            ("loss.na", l.na),
        ] {
            writeln!(s, "{k} = {}", fmt_num(v)).unwrap();
        }
        let sc = &self.schedule;
        writeln!(s, "schedule.epochs = {}", sc.epochs).unwrap();
        writeln!(s, "schedule.stages = {}", sc.stages).unwrap();
        writeln!(s, "schedule.q_ref_start = {}", fmt_num(sc.q_ref_start)).unwrap();
        writeln!(s, "schedule.growth = {}", fmt_num(sc.growth)).unwrap();
        writeln!(s, "schedule.learning_rate = {}", fmt_num(sc.learning_rate)).unwrap();
        writeln!(s, "schedule.tau_ff_floor = {}", fmt_num(sc.tau_ff_floor)).unwrap();
        writeln!(s, "schedule.rolling_reference = {}", sc.rolling_reference).unwrap();
        writeln!(s, "schedule.beta1 = {}", fmt_num(sc.moments.beta1)).unwrap();
        writeln!(s, "schedule.beta2 = {}", fmt_num(sc.moments.beta2)).unwrap();
        let params: Vec<String> = self.sweep_params.iter().map(|p| p.to_string()).collect();
        writeln!(s, "sweep.params = [{}]", params.join(", ")).unwrap();
        writeln!(s, "sweep.deltas_nm = [{}]", list(&self.sweep_deltas_nm)).unwrap();
        writeln!(s, "sweep.na = {}", fmt_num(self.sweep_na)).unwrap();
        writeln!(s, "analysis.na_grid = [{}]", list(&self.na_grid)).unwrap();
        writeln!(s, "analysis.resolution = {}", self.resolution).unwrap();
        if let Some(out) = &self.out {
            writeln!(s, "run.out = {}", out.display()).unwrap();
        }
        writeln!(s, "run.seed = {}", self.seed).unwrap();
        writeln!(s, "run.threads = {}", self.threads).unwrap();
        s
    }

    /// Overlays the keys of `text` onto `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let err = |m: String| ConfigError::Value {
            key: key.to_string(),
            message: m,
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("not a number: `{v}`")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("not a non-negative integer: `{v}`")));
        let list = |v: &str| parse_number_list(v).map_err(err);
        match key {
            "geometry.template" => self.geometry = GeometrySource::Template(value.parse().map_err(err)?),
            "geometry.file" => self.geometry = GeometrySource::File(PathBuf::from(value)),
            "gme.gmax" => self.gme.gmax = num(value)?,
            "gme.num_guided_bands" => self.gme.num_guided_bands = int(value)?,
            "gme.num_eigenpairs" => {
                self.gme.num_eigenpairs = if value == "auto" { None } else { Some(int(value)?) }
            }
            "gme.mode_window" => {
                let v = list(value)?;
                if v.len() != 2 {
                    return Err(err("expected two values".into()));
                }
                self.gme.mode_window = (v[0], v[1]);
            }
            "loss.w_f" => self.loss.w_f = num(value)?,
            "loss.w_q" => self.loss.w_q = num(value)?,
            "loss.w_ff" => self.loss.w_ff = num(value)?,
            "loss.f_target" => self.loss.f_target = num(value)?,
            "loss.delta_f" => self.loss.delta_f = num(value)?,
            "loss.na" => self.loss.na = num(value)?,
            "schedule.epochs" => self.schedule.epochs = int(value)?,
            "schedule.stages" => self.schedule.stages = int(value)?,
            "schedule.q_ref_start" => self.schedule.q_ref_start = num(value)?,
            "schedule.growth" => self.schedule.growth = num(value)?,
            "schedule.learning_rate" => self.schedule.learning_rate = num(value)?,
            "schedule.tau_ff_floor" => self.schedule.tau_ff_floor = num(value)?,
            "schedule.rolling_reference" => {
                self.schedule.rolling_reference = value.parse().map_err(|_| err(format!("not a boolean: `{value}`")))?
            }
            "schedule.beta1" => self.schedule.moments.beta1 = num(value)?,
            "schedule.beta2" => self.schedule.moments.beta2 = num(value)?,
            "sweep.params" => {
                let inner = strip_brackets(value).map_err(err)?;
                self.sweep_params = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<ParamId>().map_err(|e| err(e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            "sweep.deltas_nm" => self.sweep_deltas_nm = list(value)?,
            "sweep.na" => self.sweep_na = num(value)?,
            "analysis.na_grid" => self.na_grid = list(value)?,
            "analysis.resolution" => self.resolution = int(value)?,
            "run.out" => self.out = Some(PathBuf::from(value)),
            "run.seed" => self.seed = value.parse().map_err(|_| err(format!("not an integer: `{value}`")))?,
            "run.threads" => self.threads = int(value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Range and consistency checks that do not need the solver.
    pub fn check(&self) -> Result<(), String> {
        self.gme.check().map_err(|e| e.to_string())?;
        self.loss.with_q_ref(self.schedule.q_ref_start).check().map_err(|e| e.to_string())?;
        self.schedule.stages()?;
        self.schedule.moments.check().map_err(|e| e.to_string())?;
        if !(self.schedule.learning_rate > 0.0) {
            return Err("schedule.learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.sweep_na) {
            return Err(format!("sweep.na must lie in [0, 1], got {}", self.sweep_na));
        }
        if self.na_grid.iter().any(|x| !(0.0..=1.0).contains(x)) || self.na_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err("analysis.na_grid must be ascending values in [0, 1]".into());
        }
        if self.resolution < 2 {
            return Err("analysis.resolution must be at least 2".into());
        }
        if self.threads == 0 {
            return Err("run.threads must be at least 1".into());
        }
        Ok(())
    }
}

pub const SMOKE_GMAX: f64 = 4.5;
pub const SMOKE_Q_REF: f64 = 4000.0;

fn fmt_num(x: f64) -> String {
    // Shortest round-trip representation keeps the text a parse fixed point.
    let s = format!("{x:?}");
    if s.contains('e') || s.contains('.') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn strip_brackets(v: &str) -> Result<&str, String> {
    v.trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[...]`, got `{v}`"))
}

/// `[a, b, c]` or an inclusive range `start:stop:step`.
pub fn parse_number_list(v: &str) -> Result<Vec<f64>, String> {
    let v = v.trim();
    if v.starts_with('[') {
        let inner = strip_brackets(v)?;
        if inner.trim().is_empty() {
            return Ok(Vec::new());
        }
        return inner
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: `{}`", x.trim())))
            .collect();
    }
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected `[a, b, ...]` or `start:stop:step`, got `{v}`"));
    }
    let p: Vec<f64> = parts
        .iter()
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: `{x}`")))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (p[0], p[1], p[2]);
    if !(step > 0.0) || stop < start {
        return Err(format!("range `{v}` needs a positive step and stop ≥ start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Values are computed from the index to avoid drift, and the last point snaps to `stop`.
    Ok((0..=n)
        .map(|i| {
            let x = start + step * i as f64;
            if (x - stop).abs() < 1e-9 * step.max(1.0) {
                stop
            } else {
                x
            }
        })
        .collect())
}
