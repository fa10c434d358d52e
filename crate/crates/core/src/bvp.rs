//! Solvers for `-v'' + f(s, v) = 0` on `(0, 1)` with `v(0) = 0`, `v'(1) = 0`.
//!
//! Unknowns are the nodal values `v_1 ..= v_N` (`v_0 = 0` is eliminated).
//! Interior rows are the three-point central difference; the Neumann end uses
//! a ghost node `v_{N+1} = v_{N-1}`. Halving the last row makes the system
//! symmetric:
//!
//! ```text
//!     K v + W f(v) = 0,
//! ```
//!
//! where `K` is the forward-difference stiffness matrix and `W` holds the
//! trapezoid weights. The same `(K, W)` pair drives the linear solves, the
//! double-integral representation, and the Sturm–Liouville pencil.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{same_grid, FieldRole, Grid, ScalarField};
use crate::tridiag::{kth_eigenvalue, sturm_count, Tridiag};

/// `c_p⁻² = π²/4`, the smallest eigenvalue of `-u''` with `u(0) = u'(1) = 0`.
pub const POINCARE_EIGENVALUE: f64 = std::f64::consts::PI * std::f64::consts::PI / 4.0;

/// Best Poincaré constant `c_p = 2/π` for left-clamped functions.
pub const POINCARE_CONSTANT: f64 = 2.0 / std::f64::consts::PI;

/// Pointwise nonlinearity `f(s, v)` and its derivative in `v`.
pub trait PointwiseSource: Sync {
    /// Returns `(f(s, v), ∂f/∂v(s, v))` at node `node` (position `s`).
    fn eval(&self, node: usize, s: f64, v: f64) -> (f64, f64);

    /// Lipschitz constant of `f` in `v`.
    fn lipschitz(&self) -> f64;
}

/// Adapts a closure into a [`PointwiseSource`].
pub struct FnSource<F> {
    f: F,
    lipschitz: f64,
}

impl<F> FnSource<F>
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    pub fn new(lipschitz: f64, f: F) -> Self {
        Self { f, lipschitz }
    }
}

impl<F> PointwiseSource for FnSource<F>
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    fn eval(&self, node: usize, s: f64, v: f64) -> (f64, f64) {
        (self.f)(node, s, v)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target sup-norm of the discrete residual.
    pub tol_residual: f64,
    pub max_newton: usize,
    /// Backtracking factor for the damped Newton step.
    pub damping: f64,
    pub max_halvings: usize,
    pub picard_fallback: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_newton: 50,
            damping: 0.5,
            max_halvings: 30,
            picard_fallback: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidParameter("tol_residual must be > 0".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidParameter("max_newton must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParameter("damping must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Lowest generalized eigenvalues of `-u'' + q u = μ w u`, `u(0) = u'(1) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLSpectrum {
    pub eigenvalues: Vec<f64>,
    pub dist_to_one: f64,
}

impl SLSpectrum {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Eigenvalues of the discrete pencil closer than this to zero make a linear
/// solve resonant: `10 Δs²`, the discretization accuracy of the eigenvalues.
pub fn resonance_tolerance(grid: Grid) -> f64 {
    10.0 * grid.spacing() * grid.spacing()
}

/// Stiffness diagonal and off-diagonal for unknowns `1..=N`.
fn stiffness(grid: Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_cells();
    let inv = n as f64;
    let mut diag = vec![2.0 * inv; n];
    diag[n - 1] = inv;
    (diag, vec![-inv; n - 1])
}

/// Trapezoid weights for unknowns `1..=N`.
fn weights(grid: Grid) -> Vec<f64> {
    (1..grid.len()).map(|j| grid.weight(j)).collect()
}

/// `K + W diag(q)` restricted to the unknowns.
fn assemble(grid: Grid, q: &[f64]) -> Tridiag {
    let (mut diag, off) = stiffness(grid);
    for (j, d) in diag.iter_mut().enumerate() {
        *d += grid.weight(j + 1) * q[j + 1];
    }
    Tridiag::symmetric(diag, off)
}

/// Sup-norm of the strong-form residual of `-v'' + f = 0`: interior second
/// differences, `|v_0|`, and the end flux `(v_N - v_{N-1})/Δs + Δs f_N / 2`
/// (the ghost-node row, a second-order estimate of `v'(1)`).
pub(crate) fn strong_residual(grid: Grid, v: &[f64], f: &[f64]) -> f64 {
    let n = grid.n_cells();
    let ds = grid.spacing();
    let inv2 = 1.0 / (ds * ds);
    let mut r = v[0].abs();
    for j in 1..n {
        let lap = (v[j + 1] - 2.0 * v[j] + v[j - 1]) * inv2;
        r = r.max((-lap + f[j]).abs());
    }
    r.max(end_flux(grid, v, f).abs())
}

/// Second-order estimate of `v'(1)` that uses the equation `v'' = f`.
pub(crate) fn end_flux(grid: Grid, v: &[f64], f: &[f64]) -> f64 {
    let n = grid.n_cells();
    let ds = grid.spacing();
    (v[n] - v[n - 1]) / ds + 0.5 * ds * f[n]
}

/// Smallest residual that rounding of `v` alone can produce in the second
/// difference: a few ulps of `max|v|` divided by `Δs²`.
pub(crate) fn roundoff_floor(grid: Grid, v: &[f64], f: &[f64]) -> f64 {
    let scale_v = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let scale_f = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ds = grid.spacing();
    8.0 * f64::EPSILON * (scale_v / (ds * ds) + scale_f)
}

/// Weighted `L²` merit `Σ W_j R_j²` of the strong residual.
fn merit(grid: Grid, v: &[f64], f: &[f64]) -> f64 {
    let g = weak_residual(grid, v, f);
    g.iter()
        .enumerate()
        .map(|(i, r)| r * r / grid.weight(i + 1))
        .sum()
}

/// `K v + W f` restricted to unknowns.
fn weak_residual(grid: Grid, v: &[f64], f: &[f64]) -> Vec<f64> {
    let n = grid.n_cells();
    let inv = n as f64;
    (1..=n)
        .map(|j| {
            let kv = if j < n {
                (2.0 * v[j] - v[j - 1] - v[j + 1]) * inv
            } else {
                (v[j] - v[j - 1]) * inv
            };
            kv + grid.weight(j) * f[j]
        })
        .collect()
}

fn evaluate<S: PointwiseSource + ?Sized>(
    src: &S,
    grid: Grid,
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut f = Vec::with_capacity(v.len());
    let mut df = Vec::with_capacity(v.len());
    for (j, (&vj, s)) in v.iter().zip(grid.nodes()).enumerate() {
        let (a, b) = src.eval(j, s, vj);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFiniteValue { node: j });
        }
        f.push(a);
        df.push(b);
    }
    Ok((f, df))
}

/// Damped Newton on `K v + W f(v) = 0` with a Picard fallback
/// `v ← double_integral_representation(-f(·, v))`.
pub fn solve_nonlinear_bvp<S: PointwiseSource + ?Sized>(
    src: &S,
    opts: &SolveOptions,
    initial: &ScalarField,
) -> Result<ScalarField> {
    opts.validate()?;
    let grid = initial.grid();
    grid.require_cells(2)?;
    let mut v = initial.values().to_vec();
    v[0] = 0.0;

    let mut last = f64::INFINITY;
    // Newton, then (optionally) Picard to get closer, then Newton once more.
    let rounds = if opts.picard_fallback { 2 } else { 1 };
    for round in 0..rounds {
        if round > 0 {
            picard(src, grid, &mut v, 500)?;
        }
        match newton(src, grid, opts, &mut v)? {
            NewtonOutcome::Converged => {
                return Ok(ScalarField::from_raw(grid, FieldRole::Generic, v));
            }
            NewtonOutcome::Stalled(r) => last = r,
        }
    }
    Err(Error::NonConvergence { residual: last })
}

enum NewtonOutcome {
    Converged,
    Stalled(f64),
}

fn newton<S: PointwiseSource + ?Sized>(
    src: &S,
    grid: Grid,
    opts: &SolveOptions,
    v: &mut Vec<f64>,
) -> Result<NewtonOutcome> {
    let (mut f, mut df) = evaluate(src, grid, v)?;
    let mut res = strong_residual(grid, v, &f);
    for _ in 0..opts.max_newton {
        if res <= opts.tol_residual.max(roundoff_floor(grid, v, &f)) {
            return Ok(NewtonOutcome::Converged);
        }
        let jac = assemble(grid, &df);
        let Some(lu) = jac.factor() else {
            return Ok(NewtonOutcome::Stalled(res));
        };
        let mut step: Vec<f64> = weak_residual(grid, v, &f).iter().map(|r| -r).collect();
        lu.solve_in_place(&mut step);

        let phi0 = merit(grid, v, &f);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = std::iter::once(0.0)
                .chain(v[1..].iter().zip(&step).map(|(a, d)| a + t * d))
                .collect();
            if let Ok((ft, dft)) = evaluate(src, grid, &trial) {
                let phi = merit(grid, &trial, &ft);
                if phi <= (1.0 - 1e-4 * t) * phi0 {
                    accepted = Some((trial, ft, dft));
                    break;
                }
            }
            t *= opts.damping;
        }
        let Some((trial, ft, dft)) = accepted else {
            return Ok(NewtonOutcome::Stalled(res));
        };
        *v = trial;
        f = ft;
        df = dft;
        res = strong_residual(grid, v, &f);
    }
    if res <= opts.tol_residual.max(roundoff_floor(grid, v, &f)) {
        Ok(NewtonOutcome::Converged)
    } else {
        Ok(NewtonOutcome::Stalled(res))
    }
}

fn picard<S: PointwiseSource + ?Sized>(
    src: &S,
    grid: Grid,
    v: &mut Vec<f64>,
    max_iter: usize,
) -> Result<()> {
    for _ in 0..max_iter {
        let (f, _) = evaluate(src, grid, v)?;
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let next = double_integral_raw(grid, &neg);
        let delta = next
            .iter()
            .zip(v.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        *v = next;
        if !delta.is_finite() {
            return Err(Error::NonFiniteValue { node: 0 });
        }
        if delta < 1e-12 {
            break;
        }
    }
    Ok(())
}

/// Solves `-u'' + q u = rhs`, `u(0) = u'(1) = 0`.
///
/// Fails with [`Error::SingularOperator`] when the pencil `(K + W q, W)` has
/// an eigenvalue within [`resonance_tolerance`] of zero.
pub fn solve_linear_bvp(q: &ScalarField, rhs: &ScalarField) -> Result<ScalarField> {
    same_grid(q, rhs)?;
    let grid = q.grid();
    grid.require_cells(2)?;
    let a = assemble(grid, q.values());
    let w = weights(grid);
    check_resonance(&a, &w, grid)?;
    let Some(lu) = a.factor() else {
        return Err(Error::SingularOperator {
            eigenvalue: 0.0,
            tolerance: resonance_tolerance(grid),
        });
    };
    let b: Vec<f64> = rhs.values()[1..]
        .iter()
        .zip(&w)
        .map(|(r, wj)| r * wj)
        .collect();
    let mut x = b.clone();
    lu.solve_in_place(&mut x);
    // one step of iterative refinement
    let ax = a.mul_vec(&x);
    let mut corr: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    lu.solve_in_place(&mut corr);
    for (xi, c) in x.iter_mut().zip(&corr) {
        *xi += c;
    }
    let mut u = Vec::with_capacity(grid.len());
    u.push(0.0);
    u.extend(x);
    if let Some(node) = u.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue { node });
    }
    Ok(ScalarField::from_raw(grid, FieldRole::Generic, u))
}

fn check_resonance(a: &Tridiag, w: &[f64], grid: Grid) -> Result<()> {
    let tol = resonance_tolerance(grid);
    let below = sturm_count(&a.diag, &a.upper, w, -tol);
    let above = sturm_count(&a.diag, &a.upper, w, tol);
    if above > below {
        let eigenvalue = kth_eigenvalue(&a.diag, &a.upper, w, above, 1e-12);
        return Err(Error::SingularOperator {
            eigenvalue,
            tolerance: tol,
        });
    }
    Ok(())
}

/// `v(s) = ∫₀ˢ ∫_{s'}¹ g(s'') ds'' ds'`, which solves `-v'' = g`,
/// `v(0) = v'(1) = 0`.
///
/// The inner integral is accumulated from `s = 1` to cell midpoints and the
/// outer one by the midpoint rule, so the result satisfies `K v = W g` to
/// rounding and agrees with [`solve_linear_bvp`] for `q ≡ 0`.
pub fn double_integral_representation(g: &ScalarField) -> ScalarField {
    let grid = g.grid();
    ScalarField::from_raw(
        grid,
        FieldRole::Generic,
        double_integral_raw(grid, g.values()),
    )
}

pub(crate) fn double_integral_raw(grid: Grid, g: &[f64]) -> Vec<f64> {
    let n = grid.n_cells();
    let ds = grid.spacing();
    // flux[j] = ∫_{s_{j+1/2}}¹ g for cells j = 0..n
    let mut flux = vec![0.0; n];
    let mut acc = 0.5 * ds * g[n];
    flux[n - 1] = acc;
    for j in (0..n - 1).rev() {
        acc += ds * g[j + 1];
        flux[j] = acc;
    }
    let mut v = vec![0.0; n + 1];
    for j in 0..n {
        v[j + 1] = v[j] + ds * flux[j];
    }
    v
}

/// First `k` eigenvalues of `-u'' + q u = μ w u`, `u(0) = u'(1) = 0`.
pub fn sl_eigen(q: &ScalarField, w: &ScalarField, k: usize) -> Result<SLSpectrum> {
    same_grid(q, w)?;
    let grid = q.grid();
    grid.require_cells(2)?;
    if let Some((node, &value)) = w.values().iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::InvalidWeight { node, value });
    }
    let n = grid.n_cells();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenvalues from a pencil of size {n}"
        )));
    }
    let a = assemble(grid, q.values());
    let b: Vec<f64> = (1..=n).map(|j| grid.weight(j) * w.value(j)).collect();
    let eigenvalues: Vec<f64> = (1..=k)
        .map(|i| kth_eigenvalue(&a.diag, &a.upper, &b, i, 1e-13))
        .collect();
    let dist_to_one = eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, mu| m.min((mu - 1.0).abs()));
    Ok(SLSpectrum {
        eigenvalues,
        dist_to_one,
    })
}

/// Lowest eigenvalue of `-u''` with mixed clamped/free conditions; the
/// continuum value is `c_p⁻² = π²/4`.
pub fn poincare_constant_check(grid: Grid) -> f64 {
    let q = ScalarField::zeros(grid, FieldRole::Generic);
    let w = q.map(|_| 1.0);
    sl_eigen(&q, &w, 1)
        .map(|s| s.eigenvalues[0])
        .unwrap_or(f64::NAN)
}

/// Sup-norm of the strong residual of `-v'' + f(·, v) = 0`.
pub fn bvp_residual<S: PointwiseSource + ?Sized>(src: &S, v: &ScalarField) -> Result<f64> {
    let (f, _) = evaluate(src, v.grid(), v.values())?;
    Ok(strong_residual(v.grid(), v.values(), &f))
}

/// Residual of the linear problem `-u'' + q u = rhs`.
pub fn linear_residual(q: &ScalarField, rhs: &ScalarField, u: &ScalarField) -> Result<f64> {
    same_grid(q, u)?;
    same_grid(rhs, u)?;
    let f: Vec<f64> = q
        .values()
        .iter()
        .zip(u.values())
        .zip(rhs.values())
        .map(|((qj, uj), rj)| qj * uj - rj)
        .collect();
    Ok(strong_residual(u.grid(), u.values(), &f))
}
