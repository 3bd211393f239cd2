//! Run configuration: flat `section.key = value` text, SI units only.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use annulus::analytic::ChannelGeometry;
use annulus::mcsim::{CapMode, Geometry3D, McConfig};

use crate::error::CliError;

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "geometry.d0",
    "geometry.D0",
    "geometry.r0",
    "geometry.D",
    "geometry.h",
    "geometry.h0",
    "geometry.caps",
    "truncation.t_min",
    "truncation.tol",
    "truncation.M",
    "truncation.N",
    "mc.n_particles",
    "mc.dt",
    "mc.t_max",
    "mc.seed",
    "mc.theta_f",
    "mc.bin_width",
    "mc.merge_steps",
    "output.dir",
    "output.format",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometryBlock {
    pub d0: Option<f64>,
    pub outer_radius: Option<f64>,
    pub r0: Option<f64>,
    pub diffusion: Option<f64>,
    pub height: Option<f64>,
    pub release_height: Option<f64>,
    pub caps: Option<CapMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationBlock {
    pub t_min: Option<f64>,
    pub tol: f64,
    /// Highest angular order kept for angle-resolved quantities.
    pub max_order: Option<u32>,
    /// Forced radial count; the earliest trusted time then follows from it.
    pub radial: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McBlock {
    pub n_particles: Option<usize>,
    pub dt: f64,
    pub t_max: Option<f64>,
    pub seed: u64,
    pub theta_f: Option<f64>,
    pub bin_width: Option<f64>,
    pub merge_steps: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometryBlock,
    pub truncation: TruncationBlock,
    pub mc: McBlock,
    pub output: OutputBlock,
    /// Every key that was set, for the metadata echo.
    pub entries: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryBlock::default(),
            truncation: TruncationBlock { t_min: None, tol: 1e-10, max_order: None, radial: None },
            mc: McBlock {
                n_particles: None,
                dt: 1e-4,
                t_max: None,
                seed: 1,
                theta_f: None,
                bin_width: None,
                merge_steps: true,
            },
            output: OutputBlock::default(),
            entries: BTreeMap::new(),
        }
    }
}

fn parse_error(line: Option<usize>, msg: impl Into<String>) -> CliError {
    match line {
        Some(n) => CliError::Parse(format!("line {n}: {}", msg.into())),
        None => CliError::Parse(msg.into()),
    }
}

fn number(key: &str, value: &str) -> Result<f64, String> {
    if let Ok(v) = value.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
        return Err(format!("{key}: value must be finite"));
    }
    // A valid number followed by letters is a unit suffix.
    let numeric_prefix = (1..value.len())
        .rev()
        .filter(|&i| value.is_char_boundary(i))
        .any(|i| value[..i].trim_end().parse::<f64>().is_ok());
    if numeric_prefix {
        Err(format!("{key}: unit suffixes are not accepted, give plain SI numbers (got {value:?})"))
    } else {
        Err(format!("{key}: expected a number, got {value:?}"))
    }
}

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse::<T>().map_err(|_| format!("{key}: expected a non-negative integer, got {value:?}"))
}

impl RunConfig {
    /// Parses configuration text; later duplicates of a key are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(Some(i + 1), format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if cfg.entries.contains_key(key) {
                return Err(parse_error(Some(i + 1), format!("duplicate key {key}")));
            }
            cfg.set(key, value.trim()).map_err(|e| parse_error(Some(i + 1), e))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| parse_error(None, format!("override {assignment:?} is not `key=value`")))?;
        self.set(key.trim(), value.trim()).map_err(|e| parse_error(None, e))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || number(key, value);
        match key {
            "geometry.d0" => self.geometry.d0 = Some(num()?),
            "geometry.D0" => self.geometry.outer_radius = Some(num()?),
            "geometry.r0" => self.geometry.r0 = Some(num()?),
            "geometry.D" => self.geometry.diffusion = Some(num()?),
            "geometry.h" => self.geometry.height = Some(num()?),
            "geometry.h0" => self.geometry.release_height = Some(num()?),
            "geometry.caps" => {
                self.geometry.caps = Some(match value {
                    "open" => CapMode::Open,
                    "reflecting" => CapMode::Reflecting,
                    _ => return Err(format!("{key}: expected `open` or `reflecting`, got {value:?}")),
                })
            }
            "truncation.t_min" => self.truncation.t_min = Some(num()?),
            "truncation.tol" => self.truncation.tol = num()?,
            "truncation.M" => self.truncation.max_order = Some(integer(key, value)?),
            "truncation.N" => self.truncation.radial = Some(integer(key, value)?),
            "mc.n_particles" => self.mc.n_particles = Some(integer(key, value)?),
            "mc.dt" => self.mc.dt = num()?,
            "mc.t_max" => self.mc.t_max = Some(num()?),
            "mc.seed" => self.mc.seed = integer(key, value)?,
            "mc.theta_f" => self.mc.theta_f = Some(num()?),
            "mc.bin_width" => self.mc.bin_width = Some(num()?),
            "mc.merge_steps" => {
                self.mc.merge_steps = value
                    .parse()
                    .map_err(|_| format!("{key}: expected `true` or `false`, got {value:?}"))?
            }
            "output.dir" => self.output.dir = Some(PathBuf::from(value)),
            "output.format" => {
                self.output.format = Some(match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(format!("{key}: expected `csv` or `json`, got {value:?}")),
                })
            }
            _ => return Err(format!("unknown key {key:?}; accepted keys: {}", KEYS.join(", "))),
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Re-checks every block that is present.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        let physics = |msg: String| Err(CliError::Physics(msg));
        for (name, v) in [
            ("geometry.d0", g.d0),
            ("geometry.D0", g.outer_radius),
            ("geometry.r0", g.r0),
            ("geometry.D", g.diffusion),
            ("geometry.h", g.height),
            ("geometry.h0", g.release_height),
            ("truncation.t_min", self.truncation.t_min),
            ("mc.t_max", self.mc.t_max),
            ("mc.bin_width", self.mc.bin_width),
        ] {
            if let Some(v) = v {
                if v <= 0.0 {
                    return physics(format!("{name} must be positive, got {v:e}"));
                }
            }
        }
        if let (Some(d0), Some(outer)) = (g.d0, g.outer_radius) {
            if d0 >= outer {
                return physics(format!("geometry.d0 = {d0:e} must be below geometry.D0 = {outer:e}"));
            }
            if let Some(r0) = g.r0 {
                if !(r0 > d0 && r0 < outer) {
                    return physics(format!("geometry.r0 = {r0:e} must lie strictly between d0 and D0"));
                }
            }
        }
        if let (Some(h), Some(h0)) = (g.height, g.release_height) {
            if h0 >= h {
                return physics(format!("geometry.h0 = {h0:e} must be below geometry.h = {h:e}"));
            }
        }
        if g.release_height.is_some() && g.height.is_none() {
            return physics("geometry.h0 needs geometry.h".into());
        }
        if !(self.truncation.tol > 0.0 && self.truncation.tol < 1.0) {
            return physics(format!("truncation.tol must lie in (0, 1), got {:e}", self.truncation.tol));
        }
        if self.truncation.radial == Some(0) {
            return physics("truncation.N must be at least 1".into());
        }
        if self.mc.dt <= 0.0 {
            return physics(format!("mc.dt must be positive, got {:e}", self.mc.dt));
        }
        if let Some(th) = self.mc.theta_f {
            if !(th > 0.0 && th <= PI) {
                return physics(format!("mc.theta_f must lie in (0, pi], got {th}"));
            }
        }
        Ok(())
    }

    fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T, CliError> {
        value.ok_or_else(|| CliError::Parse(format!("missing required key {key}")))
    }

    pub fn outer_radius(&self) -> Result<f64, CliError> {
        Self::require(self.geometry.outer_radius, "geometry.D0")
    }

    pub fn diffusion(&self) -> Result<f64, CliError> {
        Self::require(self.geometry.diffusion, "geometry.D")
    }

    pub fn channel(&self) -> Result<ChannelGeometry, CliError> {
        let g = &self.geometry;
        Ok(ChannelGeometry::new(
            Self::require(g.d0, "geometry.d0")?,
            self.outer_radius()?,
            Self::require(g.r0, "geometry.r0")?,
            self.diffusion()?,
        )?)
    }

    /// The 3-D geometry when `geometry.h` is set.
    pub fn cylinder(&self) -> Result<Option<Geometry3D>, CliError> {
        let Some(h) = self.geometry.height else { return Ok(None) };
        let h0 = self.geometry.release_height.unwrap_or(h / 2.0);
        let caps = self.geometry.caps.unwrap_or(CapMode::Open);
        Ok(Some(Geometry3D::new(self.channel()?, h, h0, caps)?))
    }

    pub fn mc_config(&self) -> Result<McConfig, CliError> {
        let mut cfg = McConfig::new(
            Self::require(self.mc.n_particles, "mc.n_particles")?,
            Self::require(self.mc.t_max, "mc.t_max")?,
            self.mc.seed,
        );
        cfg.dt = self.mc.dt;
        cfg.theta_f = self.mc.theta_f;
        cfg.merge_steps = self.mc.merge_steps;
        Ok(cfg)
    }

    pub fn bin_width(&self) -> Result<f64, CliError> {
        match self.mc.bin_width {
            Some(w) => Ok(w),
            None => Ok(Self::require(self.mc.t_max, "mc.t_max")? / 200.0),
        }
    }
}
