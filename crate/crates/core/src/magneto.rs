//! The magnetoelastic domain layer: the direction field `m` and its
//! derivatives, the state and adjoint equations, the control and design
//! updates of the Lagrangian system, energy, and curve reconstruction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bvp::{
    double_integral_representation, solve_linear_bvp, solve_nonlinear_bvp, strong_residual,
    PointwiseSource, SolveOptions, POINCARE_EIGENVALUE,
};
use crate::error::{Error, Result};
use crate::mesh::{format_real, h1_seminorm, integral, same_grid, FieldRole, ScalarField};

/// `Dᴺm(v)`: `m(v) = (cos v, sin v)` rotated counter-clockwise by `Nπ/2`.
pub fn m_derivative(v: f64, order: u32) -> [f64; 2] {
    let (s, c) = v.sin_cos();
    match order % 4 {
        0 => [c, s],
        1 => [-s, c],
        2 => [-c, -s],
        _ => [s, -c],
    }
}

/// Dimensionless applied field `h = (h_x, h_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub hx: f64,
    pub hy: f64,
}

impl Control {
    pub const ZERO: Control = Control { hx: 0.0, hy: 0.0 };

    pub fn new(hx: f64, hy: f64) -> Self {
        Self { hx, hy }
    }

    /// `H (cos ψ, sin ψ)`.
    pub fn polar(magnitude: f64, angle: f64) -> Self {
        Self::new(magnitude * angle.cos(), magnitude * angle.sin())
    }

    pub fn norm(&self) -> f64 {
        self.hx.hypot(self.hy)
    }

    /// `|h| < π²/4`, where the state equation has a unique solution.
    pub fn in_uniqueness_ball(&self) -> bool {
        self.norm() < POINCARE_EIGENVALUE
    }

    pub fn dot(&self, v: [f64; 2]) -> f64 {
        self.hx * v[0] + self.hy * v[1]
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.hx - s * self.hy, s * self.hx + c * self.hy)
    }

    pub fn is_finite(&self) -> bool {
        self.hx.is_finite() && self.hy.is_finite()
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.hx, self.hy]
    }
}

/// One control per target shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSet(Vec<Control>);

impl ControlSet {
    pub fn new(controls: Vec<Control>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::InvalidParameter(
                "a control set needs at least one control".into(),
            ));
        }
        Ok(Self(controls))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Control::ZERO; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Control> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Control] {
        &self.0
    }

    /// `Σ |h_i|`.
    pub fn aggregate_norm(&self) -> f64 {
        self.0.iter().map(Control::norm).sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, h| m.max(h.norm()))
    }

    /// `max_i |h_i - g_i|`.
    pub fn max_distance(&self, other: &ControlSet) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a.hx - b.hx).hypot(a.hy - b.hy)))
    }
}

impl std::ops::Index<usize> for ControlSet {
    type Output = Control;
    fn index(&self, i: usize) -> &Control {
        &self.0[i]
    }
}

impl FromIterator<Control> for ControlSet {
    fn from_iter<T: IntoIterator<Item = Control>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Physical parameters behind the renormalized field `h = μ₀M₀ℓ²/S · H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScaling {
    /// Magnetization intensity [A m⁻²].
    pub m0: f64,
    /// Beam length [m].
    pub ell: f64,
    /// Bending stiffness [N m²].
    pub stiffness: f64,
    /// Vacuum permeability [H m⁻¹].
    pub mu0: f64,
    /// Applied field [A m⁻¹].
    pub field: [f64; 2],
}

pub fn renormalize(p: &PhysicalScaling) -> Result<Control> {
    for (name, v) in [
        ("M0", p.m0),
        ("ell", p.ell),
        ("S", p.stiffness),
        ("mu0", p.mu0),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let factor = p.mu0 * p.m0 * p.ell * p.ell / p.stiffness;
    Ok(Control::new(factor * p.field[0], factor * p.field[1]))
}

/// `f(s, v) = -h · Dm(α(s) + v)` of the state equation.
struct StateSource<'a> {
    h: Control,
    alpha: &'a [f64],
}

impl PointwiseSource for StateSource<'_> {
    fn eval(&self, node: usize, _s: f64, v: f64) -> (f64, f64) {
        let phi = self.alpha[node] + v;
        (
            -self.h.dot(m_derivative(phi, 1)),
            -self.h.dot(m_derivative(phi, 2)),
        )
    }

    fn lipschitz(&self) -> f64 {
        self.h.norm()
    }
}

/// Solves `-θ'' - h · Dm(α + θ) = 0`, `θ(0) = θ'(1) = 0`, starting Newton
/// from the straight configuration.
pub fn solve_state(h: Control, alpha: &ScalarField, opts: &SolveOptions) -> Result<ScalarField> {
    let zero = ScalarField::zeros(alpha.grid(), FieldRole::Shape);
    solve_state_from(h, alpha, opts, &zero)
}

pub fn solve_state_from(
    h: Control,
    alpha: &ScalarField,
    opts: &SolveOptions,
    initial: &ScalarField,
) -> Result<ScalarField> {
    same_grid(alpha, initial)?;
    if !h.is_finite() {
        return Err(Error::InvalidParameter("control is not finite".into()));
    }
    let src = StateSource {
        h,
        alpha: alpha.values(),
    };
    solve_nonlinear_bvp(&src, opts, initial)?.with_role(FieldRole::Shape)
}

/// Follows the branch connected to `θ = 0` by ramping `h` from zero in
/// `steps` equal increments. Useful above the uniqueness threshold, where a
/// cold start may land on another equilibrium.
pub fn solve_state_continuation(
    h: Control,
    alpha: &ScalarField,
    opts: &SolveOptions,
    steps: usize,
) -> Result<ScalarField> {
    let steps = steps.max(1);
    let mut theta = ScalarField::zeros(alpha.grid(), FieldRole::Shape);
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        theta = solve_state_from(Control::new(t * h.hx, t * h.hy), alpha, opts, &theta)?;
    }
    Ok(theta)
}

/// `∫₀¹ ½(θ')² - h · m(θ + α)`.
pub fn energy(theta: &ScalarField, alpha: &ScalarField, h: Control) -> Result<f64> {
    let pot = theta.zip_map(alpha, |t, a| h.dot(m_derivative(t + a, 0)))?;
    Ok(0.5 * h1_seminorm(theta).powi(2) - integral(&pot))
}

/// Sup-norm of the discrete residual of the state equation: interior
/// `-θ'' - h · Dm(α + θ)`, `|θ(0)|`, and the discrete `θ'(1)`.
pub fn state_residual(theta: &ScalarField, alpha: &ScalarField, h: Control) -> Result<f64> {
    same_grid(theta, alpha)?;
    let f: Vec<f64> = theta
        .values()
        .iter()
        .zip(alpha.values())
        .map(|(t, a)| -h.dot(m_derivative(t + a, 1)))
        .collect();
    Ok(strong_residual(theta.grid(), theta.values(), &f))
}

/// `q = -h · D²m(α + θ)`, the potential of the linearized state operator.
pub fn adjoint_potential(
    h: Control,
    alpha: &ScalarField,
    theta: &ScalarField,
) -> Result<ScalarField> {
    theta.zip_map(alpha, |t, a| -h.dot(m_derivative(t + a, 2)))
}

/// Solves `-λ'' - λ h · D²m(α + θ) = θ - θ̄`, `λ(0) = λ'(1) = 0`.
pub fn solve_adjoint(
    h: Control,
    alpha: &ScalarField,
    theta: &ScalarField,
    target: &ScalarField,
) -> Result<ScalarField> {
    let q = adjoint_potential(h, alpha, theta)?;
    let rhs = theta.sub(target)?;
    solve_linear_bvp(&q, &rhs)?.with_role(FieldRole::Multiplier)
}

/// `h = -(1/γ) ∫₀¹ λ Dm(α + θ)`.
pub fn control_update(
    lambda: &ScalarField,
    alpha: &ScalarField,
    theta: &ScalarField,
    gamma: f64,
) -> Result<Control> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let [gx, gy] = moment(lambda, alpha, theta)?;
    Ok(Control::new(-gx / gamma, -gy / gamma))
}

/// `∫₀¹ λ Dm(α + θ)`.
pub(crate) fn moment(
    lambda: &ScalarField,
    alpha: &ScalarField,
    theta: &ScalarField,
) -> Result<[f64; 2]> {
    same_grid(lambda, alpha)?;
    same_grid(lambda, theta)?;
    let grid = lambda.grid();
    let mut acc = [0.0; 2];
    for j in 0..grid.len() {
        let d = m_derivative(alpha.value(j) + theta.value(j), 1);
        let w = grid.weight(j) * lambda.value(j);
        acc[0] += w * d[0];
        acc[1] += w * d[1];
    }
    Ok(acc)
}

/// `F = Σ_i λ_i h_i · D²m(α + θ_i)`, the coupling term of the design equation.
pub fn design_forcing(
    controls: &ControlSet,
    lambdas: &[ScalarField],
    thetas: &[ScalarField],
    alpha: &ScalarField,
) -> Result<ScalarField> {
    if lambdas.len() != controls.len() || thetas.len() != controls.len() {
        return Err(Error::InvalidParameter(format!(
            "{} controls, {} multipliers, {} shapes",
            controls.len(),
            lambdas.len(),
            thetas.len()
        )));
    }
    let grid = alpha.grid();
    let mut forcing = vec![0.0; grid.len()];
    for ((h, lambda), theta) in controls.iter().zip(lambdas).zip(thetas) {
        same_grid(alpha, lambda)?;
        same_grid(alpha, theta)?;
        for (j, out) in forcing.iter_mut().enumerate() {
            let d2 = m_derivative(alpha.value(j) + theta.value(j), 2);
            *out += lambda.value(j) * h.dot(d2);
        }
    }
    Ok(ScalarField::from_raw(grid, FieldRole::Generic, forcing))
}

/// New design from `-ε α'' + Σ λ_i h_i · D²m(α_prev + θ_i) = 0`,
/// `α(0) = α'(1) = 0`, through the explicit double-integral formula.
pub fn design_update(
    controls: &ControlSet,
    lambdas: &[ScalarField],
    thetas: &[ScalarField],
    alpha_prev: &ScalarField,
    epsilon: f64,
) -> Result<ScalarField> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be > 0 for the design update, got {epsilon}"
        )));
    }
    let forcing = design_forcing(controls, lambdas, thetas, alpha_prev)?;
    double_integral_representation(&forcing.map(|f| -f / epsilon)).with_role(FieldRole::Design)
}

/// `r(s) = ℓ ∫₀ˢ m(θ)` by the cumulative trapezoid rule.
pub fn curve(theta: &ScalarField, ell: f64) -> Result<Vec<[f64; 2]>> {
    if !(ell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "length must be > 0, got {ell}"
        )));
    }
    let grid = theta.grid();
    let half = 0.5 * grid.spacing() * ell;
    let mut points = Vec::with_capacity(grid.len());
    let mut p = [0.0, 0.0];
    points.push(p);
    for w in theta.values().windows(2) {
        let a = m_derivative(w[0], 0);
        let b = m_derivative(w[1], 0);
        p = [p[0] + half * (a[0] + b[0]), p[1] + half * (a[1] + b[1])];
        points.push(p);
    }
    Ok(points)
}

/// Writes `s,x,y` rows for a reconstructed curve.
pub fn write_curve_csv<W: Write>(points: &[[f64; 2]], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["s", "x", "y"])?;
    let n = points.len().saturating_sub(1).max(1) as f64;
    for (j, p) in points.iter().enumerate() {
        w.write_record([
            format_real(j as f64 / n),
            format_real(p[0]),
            format_real(p[1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
