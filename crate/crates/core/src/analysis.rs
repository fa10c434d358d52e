//! Analytic oracles and audits: attainable designs, the post-buckling branch
//! of the straight beam under an antiparallel field, Sturm–Liouville
//! regularity of equilibria, and the ε-sweep.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvp::{resonance_tolerance, sl_eigen, SLSpectrum, POINCARE_EIGENVALUE};
use crate::error::{Error, Result};
use crate::magneto::{m_derivative, Control};
use crate::mesh::{
    derivative, format_real, second_derivative_interior, sup_norm, FieldRole, Grid, ScalarField,
    CLAMP_TOL,
};
use crate::program::{attainment_error, outer_loop, ProblemSpec, Status};

/// Margin by which `H` must exceed `max|θ̄''|`.
const H_MARGIN: f64 = 1e-6;
const ARCSIN_CLAMP: f64 = 1.0 - 1e-12;

/// Named target shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Preset {
    Zero,
    /// `θ̄(s) = a s (2 - s) / 2`, so `θ̄'' ≡ -a`.
    Parabolic {
        a: f64,
    },
    /// `θ̄(s) = (π/2) sin(π s / 2)`: tip rotated by a quarter turn.
    QuarterTurn,
}

impl Preset {
    pub fn field(&self, grid: Grid) -> Result<ScalarField> {
        match *self {
            Preset::Zero => Ok(ScalarField::zeros(grid, FieldRole::Target)),
            Preset::Parabolic { a } => {
                ScalarField::from_fn(grid, FieldRole::Target, |s| a * s * (2.0 - s) / 2.0)
            }
            Preset::QuarterTurn => ScalarField::from_fn(grid, FieldRole::Target, |s| {
                FRAC_PI_2 * (FRAC_PI_2 * s).sin()
            }),
        }
    }
}

/// `θ̄''` at every node: central differences inside, the one-sided stencil
/// at `s = 0`, and the ghost-node value `2(θ̄_{N-1} - θ̄_N)/Δs²` at `s = 1`,
/// which is the discrete form of `θ̄'(1) = 0`.
fn target_curvature(target: &ScalarField) -> Result<Vec<f64>> {
    let mut c = second_derivative_interior(target)?.into_values();
    let n = target.grid().n_cells();
    let ds = target.grid().spacing();
    c[n] = 2.0 * (target.value(n - 1) - target.value(n)) / (ds * ds);
    Ok(c)
}

/// Design and field that make `θ̄` an exact discrete equilibrium:
/// `h̄ = H (cos ψ, sin ψ)` and `ᾱ = arcsin(θ̄''/H) - θ̄ + ψ` with
/// `ψ = -arcsin(θ̄''(0)/H)`.
pub fn attainable_design(target: &ScalarField, h: f64) -> Result<(Control, ScalarField)> {
    let grid = target.grid();
    grid.require_cells(3)?;
    if target.value(0).abs() > CLAMP_TOL {
        return Err(Error::BoundaryMismatch(format!(
            "θ̄(0) = {}",
            target.value(0)
        )));
    }
    let curvature = target_curvature(target)?;
    let max_curvature = curvature.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let slope_tol = 10.0 * grid.spacing().powi(2) * max_curvature.max(1.0);
    let slope = derivative(target)?.last();
    if slope.abs() > slope_tol {
        return Err(Error::BoundaryMismatch(format!("θ̄'(1) = {slope}")));
    }
    if !(h > max_curvature + H_MARGIN) {
        return Err(Error::HTooSmall { h, max_curvature });
    }
    let asin = |c: f64| (c / h).clamp(-ARCSIN_CLAMP, ARCSIN_CLAMP).asin();
    let psi = -asin(curvature[0]);
    let mut alpha: Vec<f64> = curvature
        .iter()
        .zip(target.values())
        .map(|(c, t)| asin(*c) - t + psi)
        .collect();
    alpha[0] = 0.0;
    Ok((
        Control::polar(h, psi),
        ScalarField::new(grid, FieldRole::Design, alpha)?,
    ))
}

/// Complete elliptic integral of the first kind by the arithmetic–geometric
/// mean: `K(k) = π / (2 AGM(1, √(1 - k²)))`.
pub fn complete_elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::ModulusOutOfRange(k));
    }
    let mut a = 1.0f64;
    let mut b = (1.0 - k * k).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(PI / (a + b))
}

/// Incomplete elliptic integral `F(φ, k) = ∫₀^φ dt / √(1 - k² sin² t)`.
pub fn incomplete_elliptic_f(phi: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::ModulusOutOfRange(k));
    }
    if phi == 0.0 {
        return Ok(0.0);
    }
    let f = |t: f64| 1.0 / (1.0 - (k * t.sin()).powi(2)).sqrt();
    Ok(quadrature::double_exponential::integrate(f, 0.0, phi, 1e-14).integral)
}

fn require_branch(h: f64) -> Result<()> {
    if !(h > POINCARE_EIGENVALUE) || !h.is_finite() {
        return Err(Error::NoNontrivialBranch { h });
    }
    Ok(())
}

/// Modulus `k = sin(θ₁/2)` with `K(k) = √H`.
fn branch_modulus(h: f64) -> Result<f64> {
    require_branch(h)?;
    let target = h.sqrt();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if complete_elliptic_k(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tip rotation `θ₁ = θ(1)` of the nontrivial equilibrium of the straight
/// beam under `h = (-H, 0)`.
pub fn bifurcation_tip(h: f64) -> Result<f64> {
    Ok(2.0 * branch_modulus(h)?.asin())
}

/// A point of the post-buckling branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub h: f64,
    pub theta1: f64,
    pub profile: ScalarField,
}

/// The full branch profile. With `sin(θ/2) = k sin φ` the first integral
/// becomes `F(φ, k) = √H s`, solved per node for `φ`.
pub fn bifurcation_profile(h: f64, grid: Grid) -> Result<BranchPoint> {
    let k = branch_modulus(h)?;
    let theta1 = 2.0 * k.asin();
    let root_h = h.sqrt();
    let kk = complete_elliptic_k(k)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut phi = 0.0;
    for (j, s) in grid.nodes().enumerate() {
        if j == 0 {
            values.push(0.0);
            continue;
        }
        if j == grid.n_cells() {
            values.push(theta1);
            continue;
        }
        let goal = (root_h * s).min(kk);
        phi = solve_amplitude(goal, k, phi)?;
        values.push(2.0 * (k * phi.sin()).asin());
    }
    Ok(BranchPoint {
        h,
        theta1,
        profile: ScalarField::new(grid, FieldRole::Shape, values)?,
    })
}

/// Safeguarded Newton for `F(φ, k) = goal` on `[lo, π/2]`.
fn solve_amplitude(goal: f64, k: f64, lo: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, FRAC_PI_2);
    let mut phi = 0.5 * (a + b);
    for _ in 0..100 {
        let r = incomplete_elliptic_f(phi, k)? - goal;
        if r.abs() <= 1e-14 * goal.max(1.0) {
            break;
        }
        if r > 0.0 {
            b = phi;
        } else {
            a = phi;
        }
        let step = r * (1.0 - (k * phi.sin()).powi(2)).sqrt();
        let next = phi - step;
        phi = if next > a && next < b {
            next
        } else {
            0.5 * (a + b)
        };
        if b - a <= 1e-15 {
            break;
        }
    }
    Ok(phi)
}

/// Rows of the `H,theta1` table.
pub fn branch_table(fields: &[f64]) -> Vec<(f64, Result<f64>)> {
    fields.iter().map(|&h| (h, bifurcation_tip(h))).collect()
}

pub fn write_branch_csv<W: Write>(rows: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["H", "theta1"])?;
    for (h, t) in rows {
        w.write_record([format_real(*h), format_real(*t)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    Resonant,
}

/// Result of [`regularity_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub spectrum: SLSpectrum,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// `|h| < π²/4`, which alone guarantees regularity.
    pub sufficient_condition: bool,
}

/// Spectrum of `-u'' + (r⁻ + 1) u = μ (r⁺ + 1) u` with
/// `r = h · D²m(α + θ)`. The linearized state operator is singular exactly
/// when `μ = 1` is an eigenvalue.
pub fn regularity_check(
    h: Control,
    alpha: &ScalarField,
    theta: &ScalarField,
    k: usize,
) -> Result<RegularityReport> {
    let r = theta.zip_map(alpha, |t, a| h.dot(m_derivative(t + a, 2)))?;
    let q = r.map(|x| (-x).max(0.0) + 1.0);
    let w = r.map(|x| x.max(0.0) + 1.0);
    let spectrum = sl_eigen(&q, &w, k)?;
    let tolerance = resonance_tolerance(theta.grid());
    let verdict = if spectrum.dist_to_one < tolerance {
        Verdict::Resonant
    } else {
        Verdict::Regular
    };
    Ok(RegularityReport {
        spectrum,
        verdict,
        tolerance,
        sufficient_condition: h.in_uniqueness_ball(),
    })
}

/// One row of the ε-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub cost: f64,
    pub attainment_error: f64,
    pub status: Status,
    pub contraction_lost: bool,
    pub error: Option<String>,
}

impl SweepRow {
    /// `converged`, `max_iter`, `resonant`, `diverged`, or `no_contraction`
    /// for a converged run whose measured ratio reached one.
    pub fn label(&self) -> &'static str {
        match self.status {
            Status::Converged if self.contraction_lost => "no_contraction",
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Resonant => "resonant",
            Status::Diverged => "diverged",
        }
    }
}

/// Runs the nested scheme with `ε = γ` for each entry of `epsilons`, using
/// `template` for the remaining settings, and records the attainment error.
pub fn epsilon_sweep(template: &ProblemSpec, epsilons: &[f64]) -> Result<Vec<SweepRow>> {
    let grid = template.grid();
    epsilons
        .par_iter()
        .map(|&eps| {
            let mut spec = ProblemSpec::new(template.targets().to_vec(), eps, eps)?
                .with_cap(template.cap())?;
            spec.inner_tol = template.inner_tol;
            spec.outer_tol = template.outer_tol;
            spec.inner_max = template.inner_max;
            spec.outer_max = template.outer_max;
            spec.solve = template.solve;
            let (state, report) = outer_loop(&spec, &ScalarField::zeros(grid, FieldRole::Design))?;
            let (attainment, error) = match attainment_error(
                &state.controls,
                &state.alpha,
                spec.targets(),
                &spec.solve,
            ) {
                Ok(e) => (e, report.error.clone()),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            Ok(SweepRow {
                epsilon: eps,
                cost: report.cost,
                attainment_error: attainment,
                status: report.status,
                contraction_lost: report.lost_contraction(),
                error,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epsilon", "cost", "attainment_error", "status"])?;
    for row in rows {
        w.write_record([
            format_real(row.epsilon),
            format_real(row.cost),
            format_real(row.attainment_error),
            row.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `max|θ̄''|` as used by [`attainable_design`].
pub fn max_target_curvature(target: &ScalarField) -> Result<f64> {
    Ok(sup_norm(&ScalarField::new(
        target.grid(),
        FieldRole::Generic,
        target_curvature(target)?,
    )?))
}
