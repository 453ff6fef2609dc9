//! Scenario configuration files.
//!
//! A configuration is a TOML document. Every built-in scenario can dump its
//! effective configuration, and loading that dump reproduces the run.
//!
//! ```toml
//! scenario = "free-particle"
//! seed = 42
//! n = 10000
//! dt = 0.001
//! frames = 10          # propagator steps per output frame
//! t_end = 5.0
//! model = "epstein"    # epstein | dbb | both
//! current = "closed"   # closed | poisson
//! hbar = 1.0
//! mass = [1.0]
//! bins = 200
//! history_limit = 200
//!
//! [grid]
//! points = [512]
//! extent = [80.0]
//! center = [0.0]
//!
//! [potential]
//! kind = "free"        # free | linear | harmonic | tabulated
//!
//! [[state.packets]]
//! coefficient = 1.0
//! center = [0.0]
//! boost = [0.0]
//! sigma = [1.0]
//!
//! [[regions]]
//! name = "origin"
//! lower = [-3.0]
//! upper = [3.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::current::CurrentMethod;
use crate::dynamics::PropagatorConfig;
use crate::engine::{self, Model, RunSpec};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Axis, Coord, GridSpec, Representation};
use crate::potential::Potential;
use crate::stats::Region;
use crate::Complex64;

/// Allowed deviation of `Σ c_l²` from one.
pub const COEFFICIENT_TOLERANCE: f64 = 1e-9;

fn default_seed() -> u64 {
    0
}
fn default_n() -> usize {
    10_000
}
fn default_dt() -> f64 {
    1e-3
}
fn default_frames() -> usize {
    10
}
fn default_model() -> Model {
    Model::Epstein
}
fn default_current() -> CurrentMethod {
    CurrentMethod::ClosedForm
}
fn default_coefficient() -> f64 {
    1.0
}

fn default_hbar() -> f64 {
    1.0
}
fn default_bins() -> usize {
    200
}
fn default_history() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
    #[serde(default)]
    pub center: Vec<f64>,
}

/// The potential as written in a configuration file. Tabulated potentials
/// are read from a CSV file resolved against the configuration's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    Free,
    Linear { slope: Vec<f64> },
    Harmonic { mass: Vec<f64>, omega: Vec<f64> },
    Tabulated { file: PathBuf },
}

/// A product of one-dimensional Gaussians
/// `(πσ²)^{-1/4} exp(-(x-x₀)²/2σ² + i p₀(x-x₀)/ħ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    #[serde(default = "default_coefficient")]
    pub coefficient: f64,
    pub center: Vec<f64>,
    #[serde(default)]
    pub boost: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Packet {
    pub fn gaussian(center: &[f64], boost: &[f64], sigma: &[f64]) -> Self {
        Packet {
            coefficient: 1.0,
            center: center.to_vec(),
            boost: boost.to_vec(),
            sigma: sigma.to_vec(),
        }
    }

    pub fn with_coefficient(mut self, c: f64) -> Self {
        self.coefficient = c;
        self
    }

    fn boost_of(&self, k: usize) -> f64 {
        self.boost.get(k).copied().unwrap_or(0.0)
    }

    /// Unnormalized-coefficient amplitude of this packet at `x`.
    pub fn amplitude(&self, x: &Coord, dof: usize, hbar: f64) -> Complex64 {
        let mut out = Complex64::new(self.coefficient, 0.0);
        for k in 0..dof {
            let (s, d) = (self.sigma[k], x[k] - self.center[k]);
            let norm = (std::f64::consts::PI * s * s).powf(-0.25);
            out *= Complex64::from_polar(norm * (-d * d / (2.0 * s * s)).exp(), self.boost_of(k) * d / hbar);
        }
        out
    }
}

/// Initial state: a superposition of Gaussian packets, normalized on the
/// grid after summation (so packet overlap is accounted for).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub packets: Vec<Packet>,
}

/// Scenario parameters recorded for reference and used by the built-in
/// assertions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Runs the measurement scenario without the environment-overlap
    /// precondition, as a control.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub control: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Propagator steps per output frame.
    #[serde(default = "default_frames")]
    pub frames: usize,
    pub t_end: f64,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_current")]
    pub current: CurrentMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default)]
    pub mass: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_history")]
    pub history_limit: usize,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub state: StateConfig,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub params: Params,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, path: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text, &path.display().to_string())?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    pub fn dof(&self) -> usize {
        self.grid.points.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        if self.mass.is_empty() {
            vec![1.0; self.dof()]
        } else {
            self.mass.clone()
        }
    }

    pub fn propagator(&self) -> PropagatorConfig {
        PropagatorConfig {
            dt: self.dt,
            steps_per_frame: self.frames,
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let dof = g.points.len();
        if g.extent.len() != dof || !(g.center.is_empty() || g.center.len() == dof) {
            return Err(Error::Config("grid: points, extent and center need one entry per axis".into()));
        }
        let axes = (0..dof)
            .map(|k| Axis::new(g.points[k], g.center.get(k).copied().unwrap_or(0.0), g.extent[k]))
            .collect();
        GridSpec::new(axes, self.hbar)
    }

    pub fn potential(&self, grid: &GridSpec) -> Result<Potential> {
        let potential = match &self.potential {
            PotentialConfig::Free => Potential::Free,
            PotentialConfig::Linear { slope } => Potential::Linear { slope: slope.clone() },
            PotentialConfig::Harmonic { mass, omega } => Potential::Harmonic {
                mass: mass.clone(),
                omega: omega.clone(),
            },
            PotentialConfig::Tabulated { file } => {
                let path = match &self.base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let reader = std::io::BufReader::new(std::fs::File::open(&path).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?);
                Potential::tabulated_from_csv(reader, grid, &path.display().to_string())?
            }
        };
        potential.validate(grid)?;
        Ok(potential)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        let dof = grid.dof();
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("hbar", self.hbar)?;
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!("`t_end` must be non-negative, got {}", self.t_end)));
        }
        if self.n == 0 || self.frames == 0 || self.bins == 0 {
            return Err(Error::Config("`n`, `frames` and `bins` must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("`threads` must be at least 1".into()));
        }
        let masses = self.masses();
        if masses.len() != dof || masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config(format!("need one positive mass per axis, got {masses:?}")));
        }
        engine::frame_count(self.t_end, &self.propagator())?;
        if self.state.packets.is_empty() {
            return Err(Error::Config("state needs at least one packet".into()));
        }
        for (i, p) in self.state.packets.iter().enumerate() {
            if p.center.len() != dof || p.sigma.len() != dof || !(p.boost.is_empty() || p.boost.len() == dof) {
                return Err(Error::Config(format!("packet {i}: center, sigma and boost need {dof} entries")));
            }
            if p.sigma.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config(format!("packet {i}: sigma must be positive")));
            }
        }
        let sum: f64 = self.state.packets.iter().map(|p| p.coefficient * p.coefficient).sum();
        if (sum - 1.0).abs() > COEFFICIENT_TOLERANCE {
            return Err(Error::Config(format!(
                "packet coefficients must satisfy Σc² = 1, got {sum}"
            )));
        }
        if self.potential(&grid)?.has_operator_form() || self.current == CurrentMethod::Poisson {
            Ok(())
        } else {
            Err(Error::Config(
                "tabulated potentials have no closed-form current; use current = \"poisson\"".into(),
            ))
        }
        .and_then(|_| crate::stats::validate_regions(&self.regions, dof))
    }

    /// The initial state on the position grid, normalized by quadrature.
    pub fn initial_state(&self) -> Result<ComplexField> {
        let grid = self.grid_spec()?;
        build_state(&grid, &self.state.packets)
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        self.validate()?;
        let grid = self.grid_spec()?;
        Ok(RunSpec {
            psi: build_state(&grid, &self.state.packets)?,
            potential: self.potential(&grid)?,
            masses: self.masses(),
            propagator: self.propagator(),
            frames: engine::frame_count(self.t_end, &self.propagator())?,
            method: self.current,
            model: self.model,
            samples: self.n,
            seed: self.seed,
            history_limit: self.history_limit,
            regions: self.regions.clone(),
        })
    }
}

/// Sums packets on the position grid and normalizes the result.
pub fn build_state(grid: &GridSpec, packets: &[Packet]) -> Result<ComplexField> {
    let dof = grid.dof();
    let hbar = grid.hbar();
    let mut psi = ComplexField::from_fn(Representation::Position, grid.clone(), 0.0, |x| {
        packets.iter().map(|p| p.amplitude(x, dof, hbar)).sum()
    });
    let norm = psi.normalize();
    if !(norm > 0.0) {
        return Err(Error::Config("initial state vanishes on the grid".into()));
    }
    Ok(psi)
}

/// A single packet's contribution to a normalized superposition: the packet
/// scaled by the same factor the full state was normalized with.
pub fn packet_component(grid: &GridSpec, packets: &[Packet], which: usize) -> Result<ComplexField> {
    let dof = grid.dof();
    let hbar = grid.hbar();
    let full = ComplexField::from_fn(Representation::Position, grid.clone(), 0.0, |x| {
        packets.iter().map(|p| p.amplitude(x, dof, hbar)).sum()
    });
    let scale = 1.0 / full.norm_sqr().sqrt();
    let p = &packets[which];
    Ok(ComplexField::from_fn(Representation::Position, grid.clone(), 0.0, |x| {
        p.amplitude(x, dof, hbar) * scale
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
scenario = "custom"
t_end = 0.1
[grid]
points = [128]
extent = [20.0]
[potential]
kind = "linear"
slope = [1.5]
[[state.packets]]
coefficient = 1.0
center = [0.5]
sigma = [1.0]
[[regions]]
name = "left"
lower = [-inf]
upper = [0.0]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ScenarioConfig::from_toml_str(EXAMPLE, "example").unwrap();
        assert_eq!(c.n, 10_000);
        assert_eq!(c.seed, 0);
        assert_eq!(c.model, Model::Epstein);
        assert_eq!(c.regions[0].lower[0], f64::NEG_INFINITY);
        c.validate().unwrap();
        let spec = c.run_spec().unwrap();
        assert_eq!(spec.frames, 10);
        assert!((spec.psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_round_trips() {
        let c = ScenarioConfig::from_toml_str(EXAMPLE, "example").unwrap();
        let again = ScenarioConfig::from_toml_str(&c.to_toml().unwrap(), "dump").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_input() {
        let unknown = EXAMPLE.replace("t_end = 0.1", "t_end = 0.1\nbogus = 1");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&unknown, "x"),
            Err(Error::Parse { .. })
        ));
        let bad_coeff = EXAMPLE.replace("coefficient = 1.0", "coefficient = 0.9");
        assert!(ScenarioConfig::from_toml_str(&bad_coeff, "x").unwrap().validate().is_err());
        let ragged = EXAMPLE.replace("t_end = 0.1", "t_end = 0.105");
        assert!(ScenarioConfig::from_toml_str(&ragged, "x").unwrap().validate().is_err());
        let bad_grid = EXAMPLE.replace("points = [128]", "points = [100]");
        assert!(ScenarioConfig::from_toml_str(&bad_grid, "x").unwrap().validate().is_err());
    }

    #[test]
    fn superposition_norm_accounts_for_overlap() {
        let grid = GridSpec::one_dim(256, 0.0, 40.0).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let packets = vec![
            Packet::gaussian(&[1.0], &[0.0], &[1.0]).with_coefficient(c),
            Packet::gaussian(&[-1.0], &[0.0], &[1.0]).with_coefficient(c),
        ];
        let part = packet_component(&grid, &packets, 0).unwrap();
        // N² = 1/(1 + e^{-a²/σ²}) with a = 1; the component carries N²/2.
        let expected = 0.5 / (1.0 + (-1.0f64).exp());
        assert!((part.norm_sqr() - expected).abs() < 1e-12);
    }
}
