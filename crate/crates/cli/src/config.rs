//! Command-line flags, the JSON config file and their merge into a
//! validated [`RunConfig`].

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ablayer::geometry::MeshSpec;
use ablayer::hardy::refined_eps_limit;
use ablayer::oned::BoundaryCondition;
use ablayer::{Aperture, Error, SolverOptions};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Spectrum,
    Transition,
    Counting,
    Monotonicity,
    Hardy,
    MeshExport,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::Transition => "transition",
            CommandKind::Counting => "counting",
            CommandKind::Monotonicity => "monotonicity",
            CommandKind::Hardy => "hardy",
            CommandKind::MeshExport => "mesh-export",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    Oned,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

impl From<Bc> for BoundaryCondition {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Dirichlet => BoundaryCondition::Dirichlet,
            Bc::Neumann => BoundaryCondition::Neumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Constant,
    Compensated,
}

/// Grid of reals given as `start:stop:step` or as a comma separated list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "Vec<f64>")]
pub struct Grid(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    List(Vec<f64>),
    Text(String),
}

impl TryFrom<GridRepr> for Grid {
    type Error = String;

    fn try_from(r: GridRepr) -> Result<Self, String> {
        match r {
            GridRepr::List(v) => Ok(Grid(v)),
            GridRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {x:?}"))
        };
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err("range grids are written start:stop:step".into());
            }
            let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(h > 0.0) || b < a {
                return Err("range grid needs start <= stop and a positive step".into());
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            // round to the step's decimal resolution so 0.15 + 4*0.025 prints as 0.25
            let v = (0..=n)
                .map(|i| {
                    let x = a + h * i as f64;
                    (x * 1e12).round() / 1e12
                })
                .collect();
            Ok(Grid(v))
        } else {
            s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Grid)
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Angles are radians only; anything carrying a degree unit is refused.
fn parse_radians(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if t.ends_with("deg") || t.ends_with('°') || t.ends_with("degrees") {
        return Err("angles are given in radians; degrees are not accepted".into());
    }
    t.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

fn parse_radian_grid(s: &str) -> Result<Grid, String> {
    if s.contains("deg") || s.contains('°') {
        return Err("angles are given in radians; degrees are not accepted".into());
    }
    s.parse()
}

/// Every flag is optional so that a config file can supply it. Keys of the
/// config file are the flag names with `-` replaced by `_`.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Half-opening angle in radians, strictly inside (0, π/2).
    #[arg(long, value_parser = parse_radians, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Reduced flux in (0, 1/2].
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Flux grid for `transition`: `start:stop:step` or a comma list.
    #[arg(long)]
    pub omega_grid: Option<Grid>,
    /// Aperture grid for `monotonicity`, in radians.
    #[arg(long, value_parser = parse_radian_grid)]
    pub theta_grid: Option<Grid>,
    /// Fiber indices, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m: Option<Vec<i32>>,
    /// Truncation length in the sheared coordinate.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub length: Option<f64>,
    #[arg(long)]
    pub n_sigma: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    /// Geometric grading ratio of the σ grid.
    #[arg(long)]
    pub grading: Option<f64>,
    /// Number of eigenvalues requested.
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of truncation lengths compared by the stability filter.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write SVG plots.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub svg: Option<bool>,
    #[arg(long, value_enum)]
    pub mode: Option<CountingMode>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub bc: Option<Bc>,
    /// Right end of the half-line truncation.
    #[arg(long = "L1d")]
    #[serde(rename = "L1d")]
    pub length_1d: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Use the potential shifted by π cotθ (requires --theta).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shifted: Option<bool>,
    #[arg(long)]
    pub e_max: Option<f64>,
    #[arg(long)]
    pub e_min: Option<f64>,
    #[arg(long)]
    pub e_points: Option<usize>,
    /// Deepest levels left out of the automatic fit window.
    #[arg(long)]
    pub drop: Option<usize>,
    #[arg(long, value_enum)]
    pub omega_rule: Option<RuleKind>,
    /// ε of the refined one-dimensional bound, in (0, π⁻³).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Regularization sequence for the Hardy pencil, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub eps_reg: Option<Vec<f64>>,
    #[arg(long)]
    pub n_random: Option<usize>,
    /// Repeat the Hardy estimate on a refined and on a longer mesh.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sweep: Option<bool>,
    /// With `mesh-export`: also write K and M of the fiber pencil.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub matrices: Option<bool>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        Settings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Settings {
    /// Flags win over the file.
    pub fn merged_over(self, file: Settings) -> Settings {
        let (a, b) = (self, file);
        merge_fields!(a, b; theta, omega, omega_grid, theta_grid, m, length, n_sigma, n_t, grading,
            k, shift, tol, seed, levels, out, format, svg, mode, gamma, bc, length_1d, nodes,
            shifted, e_max, e_min, e_points, drop, omega_rule, eps, eps_reg, n_random, sweep,
            matrices)
    }
}

/// Config file: the settings plus the command to run.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<CommandKind>,
    #[serde(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Parser)]
#[command(
    name = "ablayer",
    version,
    about = "Discrete spectra, counting laws and Hardy bounds for Aharonov-Bohm conical layers"
)]
pub struct Cli {
    /// Command to run; may instead be given as "command" in the config file.
    #[arg(value_enum)]
    pub command: Option<CommandKind>,
    /// JSON config file mirroring the flags; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

pub fn read_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parameter(format!("invalid config {}: {e}", path.display())).into())
}

/// Fully resolved parameters of one run. Serialized into every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub theta: Option<f64>,
    pub omega: Option<f64>,
    pub omega_grid: Option<Vec<f64>>,
    pub theta_grid: Option<Vec<f64>>,
    pub m: Vec<i32>,
    #[serde(rename = "L")]
    pub length: f64,
    pub n_sigma: usize,
    pub n_t: usize,
    pub grading: f64,
    pub k: usize,
    pub shift: f64,
    pub tol: f64,
    pub seed: u64,
    pub levels: usize,
    pub out: PathBuf,
    pub format: Format,
    pub svg: bool,
    pub mode: CountingMode,
    pub gamma: f64,
    pub bc: Bc,
    #[serde(rename = "L1d")]
    pub length_1d: f64,
    pub nodes: usize,
    pub shifted: bool,
    pub e_max: f64,
    pub e_min: Option<f64>,
    pub e_points: usize,
    /// Deepest levels skipped by the fit window; 3 for oned, 0 for layer.
    pub drop: Option<usize>,
    pub omega_rule: RuleKind,
    pub eps: f64,
    pub eps_reg: Vec<f64>,
    pub n_random: usize,
    pub sweep: bool,
    pub matrices: bool,
}

impl RunConfig {
    pub fn resolve(command: CommandKind, s: Settings) -> RunConfig {
        let defaults = SolverOptions::default();
        RunConfig {
            command,
            theta: s.theta,
            omega: s.omega,
            omega_grid: s.omega_grid.map(|g| g.0),
            theta_grid: s.theta_grid.map(|g| g.0),
            m: s.m.unwrap_or_else(|| vec![0]),
            length: s.length.unwrap_or(8.0 * PI),
            n_sigma: s.n_sigma.unwrap_or(64),
            n_t: s.n_t.unwrap_or(16),
            grading: s.grading.unwrap_or(1.05),
            k: s.k.unwrap_or(5),
            shift: s.shift.unwrap_or(defaults.shift),
            tol: s.tol.unwrap_or(defaults.tol),
            seed: s.seed.unwrap_or(defaults.seed),
            levels: s.levels.unwrap_or(2),
            out: s.out.unwrap_or_else(|| PathBuf::from(".")),
            format: s.format.unwrap_or(Format::Csv),
            svg: s.svg.unwrap_or(false),
            mode: s.mode.unwrap_or(CountingMode::Oned),
            gamma: s.gamma.unwrap_or(5.0),
            bc: s.bc.unwrap_or(Bc::Dirichlet),
            length_1d: s.length_1d.unwrap_or_else(|| 12f64.exp()),
            nodes: s.nodes.unwrap_or(8000),
            shifted: s.shifted.unwrap_or(false),
            e_max: s.e_max.unwrap_or(0.9),
            e_min: s.e_min,
            e_points: s.e_points.unwrap_or(400),
            drop: s.drop,
            omega_rule: s.omega_rule.unwrap_or(RuleKind::Constant),
            eps: s.eps.unwrap_or(0.5 * refined_eps_limit()),
            eps_reg: s.eps_reg.unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]),
            n_random: s.n_random.unwrap_or(100),
            sweep: s.sweep.unwrap_or(false),
            matrices: s.matrices.unwrap_or(false),
        }
    }

    pub fn mesh(&self) -> MeshSpec {
        MeshSpec::new(self.length, self.n_sigma, self.n_t, self.grading)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            k: self.k,
            shift: self.shift,
            tol: self.tol,
            seed: self.seed,
            ..SolverOptions::default()
        }
    }

    pub fn aperture(&self) -> ablayer::Result<Aperture> {
        let theta = self
            .theta
            .ok_or_else(|| Error::Parameter(format!("--theta is required for {}", self.command.name())))?;
        Aperture::new(theta)
    }

    pub fn omega(&self) -> ablayer::Result<f64> {
        let w = self
            .omega
            .ok_or_else(|| Error::Parameter(format!("--omega is required for {}", self.command.name())))?;
        ablayer::forms::check_omega(w)?;
        Ok(w)
    }

    /// Checks every precondition the command relies on, before any
    /// computation starts.
    pub fn validate(&self) -> ablayer::Result<()> {
        use CommandKind::*;
        let needs_mesh = !matches!((self.command, self.mode), (Counting, CountingMode::Oned));
        if needs_mesh {
            self.mesh().validate()?;
            self.solver().validate()?;
        }
        if self.levels < 2 {
            return Err(Error::Parameter(format!(
                "levels must be at least 2, got {}",
                self.levels
            )));
        }
        match self.command {
            Spectrum => {
                self.aperture()?;
                self.omega()?;
            }
            Transition => {
                self.aperture()?;
                let grid = self
                    .omega_grid
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("--omega-grid is required for transition".into()))?;
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Parameter("omega grid must be strictly ascending".into()));
                }
                for w in grid {
                    ablayer::forms::check_omega(*w)?;
                }
            }
            Counting => match self.mode {
                CountingMode::Oned => {
                    if !(self.gamma >= 0.0) {
                        return Err(Error::Parameter(format!(
                            "gamma must be non-negative, got {}",
                            self.gamma
                        )));
                    }
                    if self.shifted {
                        self.aperture()?;
                    }
                    self.energy_bounds(1e-14)?;
                }
                CountingMode::Layer => {
                    let theta = self.aperture()?;
                    let w = self.omega()?;
                    ablayer::oned::layer_slope(theta, w)?;
                    self.energy_bounds(0.0)?;
                }
            },
            Monotonicity => {
                let grid = self
                    .theta_grid
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("--theta-grid is required for monotonicity".into()))?;
                for t in grid {
                    Aperture::new(*t)?;
                }
                self.omega()?;
            }
            Hardy => {
                self.aperture()?;
                ablayer::hardy::check_eps(self.eps)?;
                if self.eps_reg.is_empty()
                    || self.eps_reg.iter().any(|e| !(*e > 0.0))
                    || self.eps_reg.windows(2).any(|w| !(w[1] < w[0]))
                {
                    return Err(Error::Parameter(
                        "regularization sequence must be positive and strictly decreasing".into(),
                    ));
                }
            }
            MeshExport => {
                self.aperture()?;
                if self.matrices {
                    self.omega()?;
                }
            }
        }
        Ok(())
    }

    fn energy_bounds(&self, fallback_min: f64) -> ablayer::Result<()> {
        let lo = self.e_min.unwrap_or(fallback_min);
        if !(self.e_max > 0.0 && self.e_max < 1.0) || !(lo >= 0.0 && lo < self.e_max) {
            return Err(Error::Parameter(format!(
                "energy window must satisfy 0 <= e_min < e_max < 1, got [{lo}, {}]",
                self.e_max
            )));
        }
        if self.e_points < 2 {
            return Err(Error::Parameter("e_points must be at least 2".into()));
        }
        Ok(())
    }
}
