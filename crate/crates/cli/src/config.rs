//! JSON run configurations. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use elastica_core::analysis::Preset;
use elastica_core::mesh::DEFAULT_CELLS;
use elastica_core::{FieldRole, Grid, ScalarField, SolveOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A nodal field given by name or by a `s,value` CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero {},
    Parabolic { a: f64 },
    QuarterTurn {},
    Csv { path: PathBuf },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Zero {}
    }
}

impl FieldSpec {
    /// Relative CSV paths are resolved against `base`.
    pub fn load(&self, grid: Grid, role: FieldRole, base: &Path) -> Result<ScalarField> {
        let preset = match self {
            FieldSpec::Zero {} => Preset::Zero,
            FieldSpec::Parabolic { a } => Preset::Parabolic { a: *a },
            FieldSpec::QuarterTurn {} => Preset::QuarterTurn,
            FieldSpec::Csv { path } => {
                let path = base.join(path);
                let file =
                    fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                let field = ScalarField::read_csv(file, role)
                    .with_context(|| format!("reading {}", path.display()))?;
                if field.grid() != grid {
                    bail!(
                        "{} has {} cells but the run uses {}",
                        path.display(),
                        field.grid().n_cells(),
                        grid.n_cells()
                    );
                }
                return Ok(field);
            }
        };
        Ok(preset.field(grid)?.with_role(role)?)
    }
}

/// Newton settings shared by all commands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_residual: Option<f64>,
    pub max_newton: Option<usize>,
}

impl SolverConfig {
    pub fn options(&self) -> Result<SolveOptions> {
        let mut opts = SolveOptions::default();
        if let Some(t) = self.tol_residual {
            opts.tol_residual = t;
        }
        if let Some(m) = self.max_newton {
            opts.max_newton = m;
        }
        opts.validate()?;
        Ok(opts)
    }
}

fn default_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveStateConfig {
    pub h: [f64; 2],
    #[serde(default)]
    pub alpha: FieldSpec,
    pub grid: Option<usize>,
    #[serde(default = "default_length")]
    pub length: f64,
    /// Ramp `h` from zero in this many steps instead of a cold start.
    pub continuation_steps: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    FixedPoint,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramConfig {
    pub targets: Vec<FieldSpec>,
    pub epsilon: f64,
    pub gamma: f64,
    pub cap: Option<f64>,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub inner_max: Option<usize>,
    pub outer_max: Option<usize>,
    pub alpha_init: Option<FieldSpec>,
    pub h_init: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub method: Method,
    pub grid: Option<usize>,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttainConfig {
    pub target: FieldSpec,
    /// Field intensity `H`; defaults to `factor · max|θ̄''|`.
    #[serde(rename = "H")]
    pub field: Option<f64>,
    pub factor: Option<f64>,
    pub grid: Option<usize>,
    #[serde(default = "default_length")]
    pub length: f64,
    pub continuation_steps: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcateConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub step: f64,
    /// Intensities at which full profiles are written.
    #[serde(default)]
    pub profiles: Vec<f64>,
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Output directory of a `program` run.
    pub run_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub targets: Vec<FieldSpec>,
    pub epsilons: Vec<f64>,
    pub cap: Option<f64>,
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub inner_max: Option<usize>,
    pub outer_max: Option<usize>,
    pub grid: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Parsed config together with its raw JSON and directory.
pub struct Loaded<T> {
    pub config: T,
    pub raw: serde_json::Value,
    pub base: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let config = serde_json::from_value(raw.clone())
        .with_context(|| format!("invalid config {}", path.display()))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, raw, base })
}

/// `--grid` wins over the config, which wins over the default.
pub fn resolve_grid(flag: Option<usize>, config: Option<usize>) -> Result<Grid> {
    Ok(Grid::new(flag.or(config).unwrap_or(DEFAULT_CELLS))?)
}
