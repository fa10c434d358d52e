//! Shape programming: the cost functional, the nested fixed-point scheme on
//! the Lagrangian system, a direct reduced-gradient minimizer used as an
//! independent check, and the a-priori bounds audit.
//!
//! The inner loop freezes the design `α` and iterates the map
//! `h ↦ θ ↦ λ ↦ T(h) = -(1/γ) ∫ λ Dm(α + θ)` to its fixed point. The outer
//! loop then replaces `α` by the solution of the design equation with the
//! inner-loop data and repeats until the design stops moving.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvp::{
    double_integral_representation, linear_residual, strong_residual, SolveOptions,
    POINCARE_EIGENVALUE,
};
use crate::error::{Error, Result};
use crate::magneto::{
    adjoint_potential, control_update, design_forcing, design_update, m_derivative, moment,
    solve_adjoint, solve_state, solve_state_continuation, solve_state_from, state_residual,
    Control, ControlSet,
};
use crate::mesh::{
    h1_inner, h1_seminorm, inner, integral, same_grid, second_derivative_interior, sup_norm,
    FieldRole, Grid, ScalarField,
};

/// Problem data and iteration controls.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    targets: Vec<ScalarField>,
    epsilon: f64,
    gamma: f64,
    cap: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub inner_max: usize,
    pub outer_max: usize,
    /// Gradient-norm tolerance of [`direct_minimize`].
    pub direct_tol: f64,
    pub direct_max: usize,
    pub solve: SolveOptions,
    theta_bar_norm: f64,
}

impl ProblemSpec {
    pub fn new(targets: Vec<ScalarField>, epsilon: f64, gamma: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one target is required".into(),
            ));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be > 0, got {gamma}"
            )));
        }
        for t in &targets[1..] {
            same_grid(&targets[0], t)?;
        }
        let targets = targets
            .into_iter()
            .map(|t| t.with_role(FieldRole::Target))
            .collect::<Result<Vec<_>>>()?;
        let theta_bar_norm = targets
            .iter()
            .map(|t| integral(&t.map(|v| v * v)))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            targets,
            epsilon,
            gamma,
            cap: 0.99 * POINCARE_EIGENVALUE,
            inner_tol: 1e-9,
            outer_tol: 1e-8,
            inner_max: 200,
            outer_max: 500,
            direct_tol: 1e-6,
            direct_max: 20_000,
            solve: SolveOptions::default(),
            theta_bar_norm,
        })
    }

    /// Sets the field cap `K`, which must satisfy `0 < K < π²/4`.
    pub fn with_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap < POINCARE_EIGENVALUE) {
            return Err(Error::InvalidParameter(format!(
                "cap K = {cap} must lie in (0, pi^2/4)"
            )));
        }
        self.cap = cap;
        Ok(self)
    }

    pub fn grid(&self) -> Grid {
        self.targets[0].grid()
    }

    pub fn targets(&self) -> &[ScalarField] {
        &self.targets
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `Θ̄ = (Σ ∫ θ̄_i²)^{1/2}`.
    pub fn theta_bar_norm(&self) -> f64 {
        self.theta_bar_norm
    }
}

/// The quadruplet `(h, α, θ, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub controls: ControlSet,
    pub alpha: ScalarField,
    pub thetas: Vec<ScalarField>,
    pub lambdas: Vec<ScalarField>,
}

impl DesignState {
    pub fn zero(spec: &ProblemSpec) -> Self {
        let grid = spec.grid();
        let n = spec.n_targets();
        Self {
            controls: ControlSet::zeros(n),
            alpha: ScalarField::zeros(grid, FieldRole::Design),
            thetas: vec![ScalarField::zeros(grid, FieldRole::Shape); n],
            lambdas: vec![ScalarField::zeros(grid, FieldRole::Multiplier); n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Resonant,
    Diverged,
}

impl Status {
    pub fn is_converged(self) -> bool {
        self == Status::Converged
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::SingularOperator { .. } => Status::Resonant,
            _ => Status::Diverged,
        }
    }
}

/// Diagnostics of one inner fixed-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerReport {
    pub status: Status,
    pub iterations: usize,
    /// `max_i |h_i^{k+1} - h_i^k|` per iteration.
    pub increments: Vec<f64>,
    /// Ratios of consecutive increments.
    pub ratios: Vec<f64>,
    /// Asymptotic contraction ratio, when enough clean increments exist.
    pub contraction: Option<f64>,
    /// Some iterate left `D = {max|h_i| <= K}`.
    pub cap_exceeded: bool,
    pub error: Option<String>,
}

impl InnerReport {
    /// The map failed to contract: no convergence, or a measured ratio ≥ 1.
    pub fn lost_contraction(&self) -> bool {
        !self.status.is_converged() || self.contraction.is_some_and(|r| r >= 1.0)
    }
}

/// Output of [`inner_loop`].
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub controls: ControlSet,
    pub thetas: Vec<ScalarField>,
    pub lambdas: Vec<ScalarField>,
    pub report: InnerReport,
}

/// Sup-norm residuals of the four equations of the Lagrangian system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EquationResiduals {
    pub state: f64,
    pub adjoint: f64,
    pub design: f64,
    pub control: f64,
    /// One-sided second-order estimate of `α'(0)`.
    pub alpha_slope_at_zero: f64,
}

impl EquationResiduals {
    pub fn max(&self) -> f64 {
        self.state
            .max(self.adjoint)
            .max(self.design)
            .max(self.control)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub passed: bool,
    pub slack: f64,
}

/// A-priori inequalities satisfied by minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsAudit {
    /// `max|h_i|² <= Θ̄²/γ`.
    pub minimizer_bound: AuditCheck,
    /// `‖θ_i‖_∞ <= |h_i|` for every `i`.
    pub state_bound: AuditCheck,
    /// `max|h_i| <= K`.
    pub cap: AuditCheck,
}

impl BoundsAudit {
    pub fn all_passed(&self) -> bool {
        self.minimizer_bound.passed && self.state_bound.passed && self.cap.passed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedPoint,
    Direct,
}

/// Diagnostics of a full solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub status: Status,
    pub outer_iterations: usize,
    pub inner: Vec<InnerReport>,
    /// `‖α^{k+1} - α^k‖_∞` per outer iteration.
    pub outer_increments: Vec<f64>,
    pub outer_ratios: Vec<f64>,
    pub residuals: EquationResiduals,
    pub cost: f64,
    pub audit: BoundsAudit,
    /// Reduced-cost history of the direct minimizer.
    pub cost_history: Vec<f64>,
    pub gradient_norm: Option<f64>,
    pub error: Option<String>,
}

impl SolveReport {
    pub fn cap_exceeded(&self) -> bool {
        self.inner.iter().any(|r| r.cap_exceeded)
    }

    /// Largest contraction estimate over the inner solves.
    pub fn inner_contraction(&self) -> Option<f64> {
        self.inner
            .iter()
            .filter_map(|r| r.contraction)
            .reduce(f64::max)
    }

    pub fn lost_contraction(&self) -> bool {
        !self.status.is_converged() || self.inner.iter().any(InnerReport::lost_contraction)
    }
}

/// `½ Σ ∫ |θ_i - θ̄_i|² + (ε/2) ∫ (α')² + (γ/2) Σ |h_i|²`.
pub fn cost(
    spec: &ProblemSpec,
    controls: &ControlSet,
    alpha: &ScalarField,
    thetas: &[ScalarField],
) -> Result<f64> {
    check_counts(spec, controls.len(), thetas.len())?;
    let mut misfit = 0.0;
    for (theta, target) in thetas.iter().zip(spec.targets()) {
        let d = theta.sub(target)?;
        misfit += inner(&d, &d)?;
    }
    let design = h1_seminorm(alpha).powi(2);
    let field: f64 = controls.iter().map(|h| h.norm().powi(2)).sum();
    Ok(0.5 * misfit + 0.5 * spec.epsilon * design + 0.5 * spec.gamma * field)
}

fn check_counts(spec: &ProblemSpec, controls: usize, fields: usize) -> Result<()> {
    if controls != spec.n_targets() || fields != spec.n_targets() {
        return Err(Error::InvalidParameter(format!(
            "{} targets but {controls} controls and {fields} fields",
            spec.n_targets()
        )));
    }
    Ok(())
}

/// `Σ ∫ |-θ̄_i'' - h_i · Dm(α + θ̄_i)|²`, with `θ̄''` by finite differences.
pub fn residual_cost(
    controls: &ControlSet,
    alpha: &ScalarField,
    targets: &[ScalarField],
) -> Result<f64> {
    if controls.len() != targets.len() {
        return Err(Error::InvalidParameter(format!(
            "{} controls for {} targets",
            controls.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (h, target) in controls.iter().zip(targets) {
        same_grid(alpha, target)?;
        let curvature = second_derivative_interior(target)?;
        let r: Vec<f64> = (0..target.grid().len())
            .map(|j| {
                let phi = alpha.value(j) + target.value(j);
                -curvature.value(j) - h.dot(m_derivative(phi, 1))
            })
            .collect();
        let r = ScalarField::new(target.grid(), FieldRole::Generic, r)?;
        total += inner(&r, &r)?;
    }
    Ok(total)
}

/// Number of continuation steps used to evaluate `Θ_α(h)` outside the
/// uniqueness ball.
const CONTINUATION_STEPS: usize = 20;

/// `Θ_α(h)`: the unique equilibrium when `|h| < π²/4`, otherwise the one on
/// the branch connected to the straight beam.
pub fn equilibrium(h: Control, alpha: &ScalarField, opts: &SolveOptions) -> Result<ScalarField> {
    if h.in_uniqueness_ball() {
        solve_state(h, alpha, opts)
    } else {
        solve_state_continuation(h, alpha, opts, CONTINUATION_STEPS)
    }
}

/// `E = ½ Σ ∫ |θ̄_i - Θ_α(h_i)|²`.
pub fn attainment_error(
    controls: &ControlSet,
    alpha: &ScalarField,
    targets: &[ScalarField],
    opts: &SolveOptions,
) -> Result<f64> {
    if controls.len() != targets.len() {
        return Err(Error::InvalidParameter(format!(
            "{} controls for {} targets",
            controls.len(),
            targets.len()
        )));
    }
    let errors = controls
        .as_slice()
        .par_iter()
        .zip(targets.par_iter())
        .map(|(h, target)| {
            let theta = equilibrium(*h, alpha, opts)?;
            let d = theta.sub(target)?;
            inner(&d, &d)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.5 * errors.iter().sum::<f64>())
}

/// Geometric mean of the last few ratios whose increments sit above the
/// rounding floor of the state solves. Needs at least two such ratios.
fn contraction_estimate(increments: &[f64]) -> Option<f64> {
    let clean: Vec<f64> = increments
        .windows(2)
        .filter(|w| w[1] > NOISE_FLOOR)
        .map(|w| w[1] / w[0])
        .collect();
    if clean.len() < 2 {
        return None;
    }
    let tail = &clean[clean.len().saturating_sub(3)..];
    Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
}

const NOISE_FLOOR: f64 = 1e-10;

/// States and multipliers for fixed controls and design.
fn solve_pairs(
    spec: &ProblemSpec,
    controls: &ControlSet,
    alpha: &ScalarField,
    warm: &[ScalarField],
) -> Result<(Vec<ScalarField>, Vec<ScalarField>)> {
    let pairs = controls
        .as_slice()
        .par_iter()
        .zip(spec.targets.par_iter())
        .zip(warm.par_iter())
        .map(|((h, target), init)| {
            let theta = solve_state_from(*h, alpha, &spec.solve, init)?;
            let lambda = solve_adjoint(*h, alpha, &theta, target)?;
            Ok((theta, lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

fn apply_map(
    spec: &ProblemSpec,
    alpha: &ScalarField,
    thetas: &[ScalarField],
    lambdas: &[ScalarField],
) -> Result<ControlSet> {
    lambdas
        .iter()
        .zip(thetas)
        .map(|(l, t)| control_update(l, alpha, t, spec.gamma))
        .collect::<Result<Vec<_>>>()
        .and_then(ControlSet::new)
}

/// Fixed point of `T^{(α)}` at frozen design. Iterates are monitored against
/// the cap `K` but never projected.
pub fn inner_loop(
    alpha: &ScalarField,
    spec: &ProblemSpec,
    h_init: &ControlSet,
) -> Result<InnerSolution> {
    same_grid(alpha, &spec.targets[0])?;
    if h_init.len() != spec.n_targets() {
        return Err(Error::InvalidParameter(format!(
            "{} initial controls for {} targets",
            h_init.len(),
            spec.n_targets()
        )));
    }
    let n = spec.n_targets();
    let grid = spec.grid();
    let mut h = h_init.clone();
    let mut thetas = vec![ScalarField::zeros(grid, FieldRole::Shape); n];
    let mut lambdas = vec![ScalarField::zeros(grid, FieldRole::Multiplier); n];
    let mut report = InnerReport {
        status: Status::MaxIter,
        iterations: 0,
        increments: Vec::new(),
        ratios: Vec::new(),
        contraction: None,
        cap_exceeded: h.max_norm() > spec.cap,
        error: None,
    };

    for _ in 0..spec.inner_max {
        report.iterations += 1;
        let (t, l) = match solve_pairs(spec, &h, alpha, &thetas) {
            Ok(pair) => pair,
            Err(e) => {
                report.status = Status::from_error(&e);
                report.error = Some(e.to_string());
                break;
            }
        };
        thetas = t;
        lambdas = l;
        let next = apply_map(spec, alpha, &thetas, &lambdas)?;
        let delta = next.max_distance(&h);
        if let Some(prev) = report.increments.last() {
            report
                .ratios
                .push(if *prev > 0.0 { delta / prev } else { 0.0 });
        }
        report.increments.push(delta);
        h = next;
        if !delta.is_finite() || h.iter().any(|c| !c.is_finite()) {
            report.status = Status::Diverged;
            report.error = Some("non-finite control".into());
            break;
        }
        report.cap_exceeded |= h.max_norm() > spec.cap;
        if delta <= spec.inner_tol {
            report.status = Status::Converged;
            break;
        }
    }

    if report.status == Status::Converged {
        // states and multipliers at the returned controls
        match solve_pairs(spec, &h, alpha, &thetas) {
            Ok((t, l)) => {
                thetas = t;
                lambdas = l;
            }
            Err(e) => {
                report.status = Status::from_error(&e);
                report.error = Some(e.to_string());
            }
        }
    }
    report.contraction = contraction_estimate(&report.increments);
    Ok(InnerSolution {
        controls: h,
        thetas,
        lambdas,
        report,
    })
}

/// The nested scheme starting from `α_init` and zero controls.
pub fn outer_loop(
    spec: &ProblemSpec,
    alpha_init: &ScalarField,
) -> Result<(DesignState, SolveReport)> {
    outer_loop_with(spec, alpha_init, &ControlSet::zeros(spec.n_targets()))
}

pub fn outer_loop_with(
    spec: &ProblemSpec,
    alpha_init: &ScalarField,
    h_init: &ControlSet,
) -> Result<(DesignState, SolveReport)> {
    let mut alpha = alpha_init.clone().with_role(FieldRole::Design)?;
    same_grid(&alpha, &spec.targets[0])?;
    let mut h = h_init.clone();
    let mut inner_reports = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    let mut ratios = Vec::new();
    let mut status = Status::MaxIter;
    let mut error = None;
    let mut last: Option<InnerSolution> = None;

    for _ in 0..spec.outer_max {
        let sol = inner_loop(&alpha, spec, &h)?;
        inner_reports.push(sol.report.clone());
        if !sol.report.status.is_converged() {
            status = sol.report.status;
            error = sol.report.error.clone();
            last = Some(sol);
            break;
        }
        h = sol.controls.clone();
        let next = design_update(
            &sol.controls,
            &sol.lambdas,
            &sol.thetas,
            &alpha,
            spec.epsilon,
        )?;
        let delta = sup_norm(&next.sub(&alpha)?);
        if let Some(prev) = increments.last() {
            ratios.push(if *prev > 0.0 { delta / prev } else { 0.0 });
        }
        increments.push(delta);
        alpha = next;
        last = Some(sol);
        if !delta.is_finite() {
            status = Status::Diverged;
            break;
        }
        if delta <= spec.outer_tol {
            // bring (h, θ, λ) in line with the final design
            let fin = inner_loop(&alpha, spec, &h)?;
            inner_reports.push(fin.report.clone());
            status = fin.report.status;
            error = fin.report.error.clone();
            last = Some(fin);
            break;
        }
    }

    let sol = last.expect("outer_max >= 1");
    let state = DesignState {
        controls: sol.controls,
        alpha,
        thetas: sol.thetas,
        lambdas: sol.lambdas,
    };
    let residuals = equation_residuals(spec, &state).unwrap_or_default();
    let report = SolveReport {
        method: Method::FixedPoint,
        status,
        outer_iterations: increments.len(),
        inner: inner_reports,
        outer_increments: increments,
        outer_ratios: ratios,
        residuals,
        cost: cost(spec, &state.controls, &state.alpha, &state.thetas)?,
        audit: bounds_audit(spec, &state),
        cost_history: Vec::new(),
        gradient_norm: None,
        error,
    };
    Ok((state, report))
}

/// Residuals of the four equations at `state`.
pub fn equation_residuals(spec: &ProblemSpec, state: &DesignState) -> Result<EquationResiduals> {
    check_counts(spec, state.controls.len(), state.thetas.len())?;
    check_counts(spec, state.controls.len(), state.lambdas.len())?;
    let alpha = &state.alpha;
    let grid = alpha.grid();
    let mut out = EquationResiduals::default();
    for (i, h) in state.controls.iter().enumerate() {
        let theta = &state.thetas[i];
        let lambda = &state.lambdas[i];
        out.state = out.state.max(state_residual(theta, alpha, *h)?);
        let q = adjoint_potential(*h, alpha, theta)?;
        let rhs = theta.sub(&spec.targets[i])?;
        out.adjoint = out.adjoint.max(linear_residual(&q, &rhs, lambda)?);
        let [mx, my] = moment(lambda, alpha, theta)?;
        out.control = out
            .control
            .max((spec.gamma * h.hx + mx).hypot(spec.gamma * h.hy + my));
    }
    let forcing = design_forcing(&state.controls, &state.lambdas, &state.thetas, alpha)?;
    let scaled: Vec<f64> = forcing.values().iter().map(|f| f / spec.epsilon).collect();
    out.design = spec.epsilon * strong_residual(grid, alpha.values(), &scaled);
    grid.require_cells(2)?;
    let a = alpha.values();
    out.alpha_slope_at_zero = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * grid.spacing());
    Ok(out)
}

/// Checks the a-priori inequalities at `state`.
pub fn bounds_audit(spec: &ProblemSpec, state: &DesignState) -> BoundsAudit {
    let hmax = state.controls.max_norm();
    let bound = spec.theta_bar_norm.powi(2) / spec.gamma;
    let minimizer_slack = bound - hmax * hmax;
    let state_slack = state
        .controls
        .iter()
        .zip(&state.thetas)
        .map(|(h, t)| h.norm() - sup_norm(t))
        .fold(f64::INFINITY, f64::min);
    let state_slack = if state_slack.is_finite() {
        state_slack
    } else {
        0.0
    };
    let cap_slack = spec.cap - hmax;
    BoundsAudit {
        minimizer_bound: AuditCheck {
            passed: minimizer_slack >= -1e-8,
            slack: minimizer_slack,
        },
        state_bound: AuditCheck {
            passed: state_slack >= -1e-6,
            slack: state_slack,
        },
        cap: AuditCheck {
            passed: cap_slack >= 0.0,
            slack: cap_slack,
        },
    }
}

/// Gradient of the reduced cost `J(h, α) = C(h, α, Θ_α(h))`.
#[derive(Debug, Clone)]
pub struct ReducedGradient {
    /// `∂J/∂h_i = γ h_i + ∫ λ_i Dm(α + θ_i)`.
    pub controls: Vec<[f64; 2]>,
    /// Riesz representative of `∂J/∂α` in the `∫ u'v'` inner product.
    pub alpha: ScalarField,
    pub cost: f64,
    pub thetas: Vec<ScalarField>,
    pub lambdas: Vec<ScalarField>,
}

impl ReducedGradient {
    /// Norm in `ℝ^{2n} × H¹_{0L}`.
    pub fn norm(&self) -> f64 {
        let h: f64 = self
            .controls
            .iter()
            .map(|g| g[0] * g[0] + g[1] * g[1])
            .sum();
        (h + h1_seminorm(&self.alpha).powi(2)).sqrt()
    }

    /// `dJ[δh, δα]`.
    pub fn directional(&self, dh: &[[f64; 2]], dalpha: &ScalarField) -> Result<f64> {
        let h: f64 = self
            .controls
            .iter()
            .zip(dh)
            .map(|(g, d)| g[0] * d[0] + g[1] * d[1])
            .sum();
        Ok(h + h1_inner(&self.alpha, dalpha)?)
    }
}

/// Reduced cost and the states it was evaluated on.
pub fn reduced_cost(
    spec: &ProblemSpec,
    controls: &ControlSet,
    alpha: &ScalarField,
) -> Result<(f64, Vec<ScalarField>)> {
    check_counts(spec, controls.len(), spec.n_targets())?;
    let thetas = controls
        .as_slice()
        .par_iter()
        .map(|h| solve_state(*h, alpha, &spec.solve))
        .collect::<Result<Vec<_>>>()?;
    Ok((cost(spec, controls, alpha, &thetas)?, thetas))
}

/// Adjoint gradient of the reduced cost. The design component is
/// `ε α + w` with `-w'' = Σ λ_i h_i · D²m(α + θ_i)`, `w(0) = w'(1) = 0`.
pub fn reduced_cost_gradient(
    spec: &ProblemSpec,
    controls: &ControlSet,
    alpha: &ScalarField,
) -> Result<ReducedGradient> {
    let (cost, thetas) = reduced_cost(spec, controls, alpha)?;
    let lambdas = controls
        .as_slice()
        .par_iter()
        .zip(thetas.par_iter())
        .zip(spec.targets.par_iter())
        .map(|((h, theta), target)| solve_adjoint(*h, alpha, theta, target))
        .collect::<Result<Vec<_>>>()?;
    let mut g_h = Vec::with_capacity(controls.len());
    for ((h, lambda), theta) in controls.iter().zip(&lambdas).zip(&thetas) {
        let [mx, my] = moment(lambda, alpha, theta)?;
        g_h.push([spec.gamma * h.hx + mx, spec.gamma * h.hy + my]);
    }
    let forcing = design_forcing(controls, &lambdas, &thetas, alpha)?;
    let w = double_integral_representation(&forcing);
    let g_alpha = w.zip_map(alpha, |wj, aj| wj + spec.epsilon * aj)?;
    Ok(ReducedGradient {
        controls: g_h,
        alpha: g_alpha,
        cost,
        thetas,
        lambdas,
    })
}

fn step(
    controls: &ControlSet,
    alpha: &ScalarField,
    g: &ReducedGradient,
    t: f64,
) -> Result<(ControlSet, ScalarField)> {
    let h: ControlSet = controls
        .iter()
        .zip(&g.controls)
        .map(|(h, d)| Control::new(h.hx - t * d[0], h.hy - t * d[1]))
        .collect();
    let a = alpha
        .zip_map(&g.alpha, |a, d| a - t * d)?
        .with_role(FieldRole::Design)?;
    Ok((h, a))
}

/// Steepest descent on the reduced cost in the `ℝ^{2n} × H¹_{0L}` geometry,
/// with Barzilai–Borwein trial steps and Armijo backtracking.
pub fn direct_minimize(
    spec: &ProblemSpec,
    init: &DesignState,
) -> Result<(DesignState, SolveReport)> {
    let mut controls = init.controls.clone();
    let mut alpha = init.alpha.clone().with_role(FieldRole::Design)?;
    let mut g = reduced_cost_gradient(spec, &controls, &alpha)?;
    let mut history = vec![g.cost];
    let mut status = Status::MaxIter;
    let mut error = None;
    let mut t = 1.0 / (1.0 + spec.gamma + spec.epsilon);
    let mut iterations = 0;

    while iterations < spec.direct_max {
        let gnorm = g.norm();
        if gnorm <= spec.direct_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        let mut trial_t = t;
        for _ in 0..60 {
            let (h_try, a_try) = step(&controls, &alpha, &g, trial_t)?;
            if let Ok(g_try) = reduced_cost_gradient(spec, &h_try, &a_try) {
                if g_try.cost <= g.cost - 1e-4 * trial_t * g2 {
                    accepted = Some((h_try, a_try, g_try));
                    break;
                }
            }
            trial_t *= 0.5;
        }
        let Some((h_new, a_new, g_new)) = accepted else {
            let e = Error::LineSearchFailure { iterations };
            status = Status::Diverged;
            error = Some(e.to_string());
            break;
        };
        // Barzilai–Borwein step for the next iteration
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..controls.len() {
            let s = [h_new[i].hx - controls[i].hx, h_new[i].hy - controls[i].hy];
            let y = [
                g_new.controls[i][0] - g.controls[i][0],
                g_new.controls[i][1] - g.controls[i][1],
            ];
            ss += s[0] * s[0] + s[1] * s[1];
            sy += s[0] * y[0] + s[1] * y[1];
        }
        let s_alpha = a_new.sub(&alpha)?;
        let y_alpha = g_new.alpha.sub(&g.alpha)?;
        ss += h1_seminorm(&s_alpha).powi(2);
        sy += h1_inner(&s_alpha, &y_alpha)?;
        t = if sy > 0.0 { ss / sy } else { 2.0 * trial_t };
        controls = h_new;
        alpha = a_new;
        g = g_new;
        history.push(g.cost);
    }

    let state = DesignState {
        controls,
        alpha,
        thetas: g.thetas.clone(),
        lambdas: g.lambdas.clone(),
    };
    let residuals = equation_residuals(spec, &state).unwrap_or_default();
    let report = SolveReport {
        method: Method::Direct,
        status,
        outer_iterations: iterations,
        inner: Vec::new(),
        outer_increments: Vec::new(),
        outer_ratios: Vec::new(),
        residuals,
        cost: g.cost,
        audit: bounds_audit(spec, &state),
        cost_history: history,
        gradient_norm: Some(g.norm()),
        error,
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(100).unwrap()
    }

    fn parabolic(a: f64) -> ScalarField {
        ScalarField::from_fn(grid(), FieldRole::Target, |s| a * s * (2.0 - s) / 2.0).unwrap()
    }

    #[test]
    fn cost_examples() {
        let targets = vec![parabolic(0.3)];
        let spec = ProblemSpec::new(targets.clone(), 0.5, 2.0).unwrap();
        let h0 = ControlSet::zeros(1);
        let a0 = ScalarField::zeros(grid(), FieldRole::Design);
        let thetas = vec![targets[0].clone()];
        assert_eq!(cost(&spec, &h0, &a0, &thetas).unwrap(), 0.0);
        let zero = vec![ScalarField::zeros(grid(), FieldRole::Shape)];
        let c = cost(&spec, &h0, &a0, &zero).unwrap();
        assert!((c - 0.5 * spec.theta_bar_norm().powi(2)).abs() < 1e-15);
        let ramp = ScalarField::from_fn(grid(), FieldRole::Design, |s| s).unwrap();
        let c = cost(&spec, &h0, &ramp, &thetas).unwrap();
        assert!((c - 0.25).abs() < 1e-12);
    }

    #[test]
    fn residual_cost_examples() {
        let a0 = ScalarField::zeros(grid(), FieldRole::Design);
        let z = vec![ScalarField::zeros(grid(), FieldRole::Target)];
        assert_eq!(residual_cost(&ControlSet::zeros(1), &a0, &z).unwrap(), 0.0);
        let r = residual_cost(&ControlSet::zeros(1), &a0, &[parabolic(1.0)]).unwrap();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn attainment_error_examples() {
        let a0 = ScalarField::zeros(grid(), FieldRole::Design);
        let opts = SolveOptions::default();
        let z = vec![ScalarField::zeros(grid(), FieldRole::Target)];
        assert_eq!(
            attainment_error(&ControlSet::zeros(1), &a0, &z, &opts).unwrap(),
            0.0
        );
        let t = vec![parabolic(0.4)];
        let spec = ProblemSpec::new(t.clone(), 1.0, 1.0).unwrap();
        let e = attainment_error(&ControlSet::zeros(1), &a0, &t, &opts).unwrap();
        assert!((e - 0.5 * spec.theta_bar_norm().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_state() {
        let spec = ProblemSpec::new(
            vec![ScalarField::zeros(grid(), FieldRole::Target); 2],
            0.1,
            1.0,
        )
        .unwrap();
        let a0 = ScalarField::zeros(grid(), FieldRole::Design);
        let (state, report) = outer_loop(&spec, &a0).unwrap();
        assert!(report.status.is_converged());
        assert!(report.outer_iterations <= 2);
        assert_eq!(state.controls.max_norm(), 0.0);
        assert_eq!(sup_norm(&state.alpha), 0.0);
        assert_eq!(report.cost, 0.0);
        let g = reduced_cost_gradient(&spec, &state.controls, &a0).unwrap();
        assert_eq!(g.norm(), 0.0);
        let (direct, rep) = direct_minimize(&spec, &DesignState::zero(&spec)).unwrap();
        assert!(rep.status.is_converged());
        assert_eq!(direct.controls.max_norm(), 0.0);
    }

    #[test]
    fn audit_examples() {
        let spec = ProblemSpec::new(vec![parabolic(0.3)], 1.0, 4.0).unwrap();
        let zero = DesignState::zero(&spec);
        let audit = bounds_audit(&spec, &zero);
        assert!(audit.all_passed());
        assert!((audit.minimizer_bound.slack - spec.theta_bar_norm().powi(2) / 4.0).abs() < 1e-15);
        assert_eq!(audit.state_bound.slack, 0.0);
        assert_eq!(audit.cap.slack, spec.cap());
        let mut big = zero.clone();
        big.controls = ControlSet::new(vec![Control::new(0.5, 0.0)]).unwrap();
        let audit = bounds_audit(&spec, &big);
        assert!(!audit.minimizer_bound.passed);
    }

    #[test]
    fn spec_validation() {
        let t = vec![parabolic(0.1)];
        assert!(ProblemSpec::new(t.clone(), 0.0, 1.0).is_err());
        assert!(ProblemSpec::new(t.clone(), 1.0, -1.0).is_err());
        assert!(ProblemSpec::new(Vec::new(), 1.0, 1.0).is_err());
        assert!(ProblemSpec::new(t.clone(), 1.0, 1.0)
            .unwrap()
            .with_cap(3.0)
            .is_err());
    }
}
