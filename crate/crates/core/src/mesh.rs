//! Uniform grid on `[0, 1]`, nodal scalar fields, and the discrete calculus
//! shared by every solver.
//!
//! Quadrature is the composite trapezoid rule and the `H¹` seminorm uses
//! forward differences on cells. With these choices `h1_seminorm(f)²` equals
//! `fᵀ K f` for the stiffness matrix `K` assembled in [`crate::bvp`], and
//! `integral(f g)` equals `fᵀ W g` for the trapezoid weights `W`, so discrete
//! summation by parts is exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when checking `value(0) = 0` on clamped fields.
pub const CLAMP_TOL: f64 = 1e-12;

/// Default number of cells.
pub const DEFAULT_CELLS: usize = 400;

/// Uniform discretization of `[0, 1]` with nodes `s_j = j / n_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::GridTooCoarse {
                required: 1,
                actual: 0,
            });
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.node(j))
    }

    /// Trapezoid weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        let ds = self.spacing();
        if j == 0 || j == self.n_cells {
            0.5 * ds
        } else {
            ds
        }
    }

    pub(crate) fn require_cells(&self, required: usize) -> Result<()> {
        if self.n_cells < required {
            Err(Error::GridTooCoarse {
                required,
                actual: self.n_cells,
            })
        } else {
            Ok(())
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n_cells: DEFAULT_CELLS,
        }
    }
}

/// What a field stands for. Shapes, designs and multipliers live in the
/// left-clamped space and must vanish at `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    Shape,
    Design,
    Multiplier,
    Target,
    Generic,
}

impl FieldRole {
    pub fn is_clamped(self) -> bool {
        matches!(self, Self::Shape | Self::Design | Self::Multiplier)
    }
}

/// Nodal values of a real function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    role: FieldRole,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, role: FieldRole, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { node });
        }
        if role.is_clamped() && values[0].abs() > CLAMP_TOL {
            return Err(Error::ClampViolated { value: values[0] });
        }
        Ok(Self { grid, role, values })
    }

    pub fn zeros(grid: Grid, role: FieldRole) -> Self {
        Self {
            grid,
            role,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every node. Clamped roles get `value(0)` forced to zero
    /// only if `f(0)` is already within [`CLAMP_TOL`].
    pub fn from_fn(grid: Grid, role: FieldRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, role, grid.nodes().map(f).collect())
    }

    pub(crate) fn from_raw(grid: Grid, role: FieldRole, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, role, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Re-tags the field, re-checking the clamp invariant.
    pub fn with_role(self, role: FieldRole) -> Result<Self> {
        Self::new(self.grid, role, self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.grid,
            FieldRole::Generic,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(self, other)?;
        Ok(Self::from_raw(
            self.grid,
            FieldRole::Generic,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Writes `s,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "value"])?;
        for (s, v) in self.grid.nodes().zip(&self.values) {
            w.write_record([format_real(s), format_real(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`ScalarField::write_csv`]. The grid is
    /// inferred from the row count and the `s` column must match it.
    pub fn read_csv<R: Read>(reader: R, role: FieldRole) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "s" || &headers[1] != "value" {
            return Err(Error::Io(format!(
                "expected header `s,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            nodes.push(parse_real(&record[0])?);
            values.push(parse_real(&record[1])?);
        }
        if nodes.len() < 2 {
            return Err(Error::GridTooCoarse {
                required: 1,
                actual: 0,
            });
        }
        let grid = Grid::new(nodes.len() - 1)?;
        for (j, s) in nodes.iter().enumerate() {
            if (s - grid.node(j)).abs() > 1e-9 {
                return Err(Error::Io(format!(
                    "row {j}: s = {s} is not on the uniform grid with {} cells",
                    grid.n_cells()
                )));
            }
        }
        Self::new(grid, role, values)
    }
}

pub(crate) fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Io(format!("cannot parse `{s}` as a real: {e}")))
}

pub(crate) fn same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid != b.grid {
        Err(Error::GridMismatch {
            left: a.grid.n_cells,
            right: b.grid.n_cells,
        })
    } else {
        Ok(())
    }
}

/// Composite trapezoid approximation of `∫₀¹ f`.
pub fn integral(f: &ScalarField) -> f64 {
    let g = f.grid;
    f.values
        .iter()
        .enumerate()
        .map(|(j, v)| g.weight(j) * v)
        .sum()
}

/// Trapezoid approximation of `∫₀¹ f g`.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    same_grid(f, g)?;
    let grid = f.grid;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(j, (a, b))| grid.weight(j) * a * b)
        .sum())
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    integral(&f.map(|v| v * v)).sqrt()
}

pub fn sup_norm(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(∫ (f')²)^{1/2}` with forward differences on cells.
pub fn h1_seminorm(f: &ScalarField) -> f64 {
    h1_inner_raw(f.grid, &f.values, &f.values).sqrt()
}

/// `∫ f' g'` with forward differences on cells.
pub fn h1_inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    same_grid(f, g)?;
    Ok(h1_inner_raw(f.grid, &f.values, &g.values))
}

fn h1_inner_raw(grid: Grid, f: &[f64], g: &[f64]) -> f64 {
    let n = grid.n_cells as f64;
    f.windows(2)
        .zip(g.windows(2))
        .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]))
        .sum::<f64>()
        * n
}

/// Central differences inside, second-order one-sided differences at the ends.
pub fn derivative(f: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid;
    grid.require_cells(2)?;
    let v = &f.values;
    let n = grid.n_cells;
    let inv = 1.0 / (2.0 * grid.spacing());
    let mut d = vec![0.0; grid.len()];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * inv;
    for j in 1..n {
        d[j] = (v[j + 1] - v[j - 1]) * inv;
    }
    d[n] = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) * inv;
    Ok(ScalarField::from_raw(grid, FieldRole::Generic, d))
}

/// Three-point central second difference at interior nodes; the two end
/// values use the second-order four-point one-sided stencil.
pub fn second_derivative_interior(f: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid;
    grid.require_cells(3)?;
    let v = &f.values;
    let n = grid.n_cells;
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    let mut d = vec![0.0; grid.len()];
    for j in 1..n {
        d[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) * inv;
    }
    d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * inv;
    d[n] = (2.0 * v[n] - 5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) * inv;
    Ok(ScalarField::from_raw(grid, FieldRole::Generic, d))
}
