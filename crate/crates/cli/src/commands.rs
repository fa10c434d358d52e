//! The subcommands. Each validates its configuration before touching the
//! output directory, so configuration errors leave no files behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use elastica_core::analysis::{
    attainable_design, bifurcation_profile, bifurcation_tip, epsilon_sweep, max_target_curvature,
    regularity_check, write_branch_csv, write_sweep_csv, Verdict,
};
use elastica_core::magneto::{
    curve, energy, solve_state, solve_state_continuation, state_residual, write_curve_csv,
};
use elastica_core::mesh::sup_norm;
use elastica_core::program::{
    attainment_error, direct_minimize, outer_loop_with, residual_cost, DesignState, ProblemSpec,
    SolveReport, Status,
};
use elastica_core::{Control, ControlSet, Error as CoreError, FieldRole, Grid, ScalarField};
use serde::Serialize;

use crate::config::{
    load, resolve_grid, AttainConfig, BifurcateConfig, CheckConfig, Method, ProgramConfig,
    SolveStateConfig, SolverConfig, SweepConfig,
};
use crate::output::{read_columns, svg, Plot, Run, RunStatus, Series};

/// Flags shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: PathBuf,
    pub grid: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Solver(e) => e,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub status: RunStatus,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self.status {
            RunStatus::Ok => 0,
            RunStatus::SolverError => 2,
            RunStatus::NoContraction => 3,
        }
    }
}

type CmdResult = Result<Outcome, Failure>;

fn config_err<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

/// Runs `body` in a fresh output directory and always writes the manifest.
fn execute(
    common: &Common,
    command: &str,
    raw: serde_json::Value,
    grid: Option<Grid>,
    body: impl FnOnce(&mut Run) -> anyhow::Result<Outcome>,
) -> CmdResult {
    let mut run = Run::start(&common.out, command, raw, grid).map_err(Failure::Solver)?;
    match body(&mut run) {
        Ok(outcome) => {
            let err = (outcome.status != RunStatus::Ok).then(|| outcome.summary.clone());
            run.finish(outcome.status, err).map_err(Failure::Solver)?;
            Ok(outcome)
        }
        Err(e) => {
            let msg = format!("{e:#}");
            run.finish(RunStatus::SolverError, Some(msg))
                .map_err(Failure::Solver)?;
            Err(Failure::Solver(e))
        }
    }
}

fn write_field(run: &mut Run, name: &str, field: &ScalarField) -> anyhow::Result<PathBuf> {
    run.write(name, |w| Ok(field.write_csv(w)?))
}

fn write_curve(
    run: &mut Run,
    name: &str,
    theta: &ScalarField,
    length: f64,
) -> anyhow::Result<PathBuf> {
    let points = curve(theta, length)?;
    run.write(name, |w| Ok(write_curve_csv(&points, w)?))
}

fn write_controls(run: &mut Run, name: &str, controls: &ControlSet) -> anyhow::Result<PathBuf> {
    run.write(name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["i", "hx", "hy"])?;
        for (i, h) in controls.iter().enumerate() {
            csv.write_record([
                (i + 1).to_string(),
                format!("{:.16e}", h.hx),
                format!("{:.16e}", h.hy),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}

fn read_controls(path: &Path) -> anyhow::Result<ControlSet> {
    let cols = read_columns(path, &["hx", "hy"])?;
    let controls: Vec<Control> = cols[0]
        .iter()
        .zip(&cols[1])
        .map(|(x, y)| Control::new(*x, *y))
        .collect();
    Ok(ControlSet::new(controls)?)
}

fn write_svg(run: &mut Run, name: &str, plot: &Plot, series: &[Series]) -> anyhow::Result<()> {
    let doc = svg(plot, series)?;
    run.write(name, |w| Ok(w.write_all(doc.as_bytes())?))?;
    Ok(())
}

fn check_length(length: f64) -> anyhow::Result<()> {
    if !(length > 0.0 && length.is_finite()) {
        bail!("length must be positive, got {length}");
    }
    Ok(())
}

pub fn solve_state_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<SolveStateConfig>(&common.config))?;
    let cfg = &loaded.config;
    let grid = config_err(resolve_grid(common.grid, cfg.grid))?;
    let alpha = config_err(cfg.alpha.load(grid, FieldRole::Design, &loaded.base))?;
    let opts = config_err(cfg.solver.options())?;
    config_err(check_length(cfg.length))?;
    let h = Control::new(cfg.h[0], cfg.h[1]);
    if !h.is_finite() {
        return Err(Failure::Config(anyhow!("h must be finite")));
    }
    execute(
        common,
        "solve-state",
        loaded.raw.clone(),
        Some(grid),
        |run| {
            let t = Instant::now();
            let theta = match cfg.continuation_steps {
                Some(steps) => solve_state_continuation(h, &alpha, &opts, steps),
                None => solve_state(h, &alpha, &opts),
            }?;
            run.timing("solve", t);
            write_field(run, "theta.csv", &theta)?;
            let curve_csv = write_curve(run, "curve.csv", &theta, cfg.length)?;
            let series = Series::from_csv(&curve_csv, "x", "y", "beam", false)?;
            let plot = Plot {
                title: "equilibrium shape",
                x_label: "x",
                y_label: "y",
                equal_aspect: true,
            };
            write_svg(run, "curve.svg", &plot, &[series])?;
            let residual = state_residual(&theta, &alpha, h)?;
            run.status("state_residual", residual);
            run.status("energy", energy(&theta, &alpha, h)?);
            run.status("max_abs_theta", sup_norm(&theta));
            run.status("uniqueness_regime", h.in_uniqueness_ball());
            Ok(Outcome {
                status: RunStatus::Ok,
                summary: format!(
                    "solve-state: |h| = {:.6}, tip angle {:.6}, residual {residual:.2e}",
                    h.norm(),
                    theta.last()
                ),
            })
        },
    )
}

fn build_spec(
    targets: Vec<ScalarField>,
    epsilon: f64,
    gamma: f64,
    cap: Option<f64>,
    tol: (Option<f64>, Option<f64>),
    max: (Option<usize>, Option<usize>),
    solver: &SolverConfig,
) -> anyhow::Result<ProblemSpec> {
    let mut spec = ProblemSpec::new(targets, epsilon, gamma)?;
    if let Some(k) = cap {
        spec = spec.with_cap(k)?;
    }
    if let Some(t) = tol.0 {
        spec.inner_tol = t;
    }
    if let Some(t) = tol.1 {
        spec.outer_tol = t;
    }
    if let Some(m) = max.0 {
        spec.inner_max = m;
    }
    if let Some(m) = max.1 {
        spec.outer_max = m;
    }
    if !(spec.inner_tol > 0.0 && spec.outer_tol > 0.0) {
        bail!("tolerances must be positive");
    }
    if spec.inner_max == 0 || spec.outer_max == 0 {
        bail!("iteration limits must be at least 1");
    }
    spec.solve = solver.options()?;
    Ok(spec)
}

#[derive(Serialize)]
struct ProgramSummary<'a> {
    report: &'a SolveReport,
    residual_cost: f64,
    attainment_error: Option<f64>,
    controls: Vec<[f64; 2]>,
}

pub fn program_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<ProgramConfig>(&common.config))?;
    let cfg = &loaded.config;
    let base = &loaded.base;
    let grid = config_err(resolve_grid(common.grid, cfg.grid))?;
    config_err(check_length(cfg.length))?;
    let targets = config_err(
        cfg.targets
            .iter()
            .map(|t| t.load(grid, FieldRole::Target, base))
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    let n = targets.len();
    let spec = config_err(build_spec(
        targets,
        cfg.epsilon,
        cfg.gamma,
        cfg.cap,
        (cfg.inner_tol, cfg.outer_tol),
        (cfg.inner_max, cfg.outer_max),
        &cfg.solver,
    ))?;
    let alpha_init = match &cfg.alpha_init {
        Some(f) => config_err(f.load(grid, FieldRole::Design, base))?,
        None => ScalarField::zeros(grid, FieldRole::Design),
    };
    let h_init = match &cfg.h_init {
        Some(h) if h.len() != n => {
            return Err(Failure::Config(anyhow!(
                "h_init has {} entries for {n} targets",
                h.len()
            )));
        }
        Some(h) => config_err(
            ControlSet::new(h.iter().map(|c| Control::new(c[0], c[1])).collect())
                .map_err(anyhow::Error::from),
        )?,
        None => ControlSet::zeros(n),
    };

    execute(common, "program", loaded.raw.clone(), Some(grid), |run| {
        let t = Instant::now();
        let (state, report) = match cfg.method {
            Method::FixedPoint => outer_loop_with(&spec, &alpha_init, &h_init)?,
            Method::Direct => {
                let mut init = DesignState::zero(&spec);
                init.controls = h_init.clone();
                init.alpha = alpha_init.clone();
                direct_minimize(&spec, &init)?
            }
        };
        run.timing("solve", t);

        write_field(run, "alpha.csv", &state.alpha)?;
        write_controls(run, "controls.csv", &state.controls)?;
        for i in 0..n {
            let k = i + 1;
            write_field(run, &format!("theta_{k}.csv"), &state.thetas[i])?;
            write_field(run, &format!("target_{k}.csv"), &spec.targets()[i])?;
            let attained =
                write_curve(run, &format!("curve_{k}.csv"), &state.thetas[i], cfg.length)?;
            let wanted = write_curve(
                run,
                &format!("target_curve_{k}.csv"),
                &spec.targets()[i],
                cfg.length,
            )?;
            let series = [
                Series::from_csv(&wanted, "x", "y", "target", true)?,
                Series::from_csv(&attained, "x", "y", "attained", false)?,
            ];
            let title = format!("target {k}");
            let plot = Plot {
                title: &title,
                x_label: "x",
                y_label: "y",
                equal_aspect: true,
            };
            write_svg(run, &format!("overlay_{k}.svg"), &plot, &series)?;
        }
        let rc = residual_cost(&state.controls, &state.alpha, spec.targets())?;
        let ae = attainment_error(&state.controls, &state.alpha, spec.targets(), &spec.solve).ok();
        let summary = ProgramSummary {
            report: &report,
            residual_cost: rc,
            attainment_error: ae,
            controls: state.controls.iter().map(|c| c.as_array()).collect(),
        };
        run.write_json("report.json", &summary)?;
        run.status("solve", report.status);
        run.status("method", report.method);
        run.status("outer_iterations", report.outer_iterations);
        run.status("cost", report.cost);
        run.status("residual_cost", rc);
        run.status("attainment_error", ae);
        run.status("cap_exceeded", report.cap_exceeded());
        run.status("contraction_lost", report.lost_contraction());
        run.audit(report.audit);

        let status = match (report.status, cfg.method) {
            (Status::Converged, _) => RunStatus::Ok,
            (Status::Resonant, _) | (Status::Diverged, Method::Direct) => RunStatus::SolverError,
            _ => RunStatus::NoContraction,
        };
        let mut text = format!(
            "program: {:?} after {} iterations, cost {:.6e}, max|h| {:.6}",
            report.status,
            report.outer_iterations,
            report.cost,
            state.controls.max_norm()
        );
        if let Some(e) = &report.error {
            text.push_str(&format!(" ({e})"));
        }
        Ok(Outcome {
            status,
            summary: text,
        })
    })
}

pub fn attain_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<AttainConfig>(&common.config))?;
    let cfg = &loaded.config;
    let grid = config_err(resolve_grid(common.grid, cfg.grid))?;
    config_err(check_length(cfg.length))?;
    let target = config_err(cfg.target.load(grid, FieldRole::Target, &loaded.base))?;
    let opts = config_err(cfg.solver.options())?;
    let field = match (cfg.field, cfg.factor) {
        (Some(_), Some(_)) => {
            return Err(Failure::Config(anyhow!(
                "give either H or factor, not both"
            )))
        }
        (Some(h), None) => h,
        (None, factor) => {
            let f = factor.unwrap_or(1.5);
            if !(f > 0.0) {
                return Err(Failure::Config(anyhow!("factor must be positive, got {f}")));
            }
            f * config_err(max_target_curvature(&target).map_err(anyhow::Error::from))?
        }
    };

    execute(common, "attain", loaded.raw.clone(), Some(grid), |run| {
        let (h, alpha) = attainable_design(&target, field)?;
        let t = Instant::now();
        let theta = match cfg.continuation_steps {
            Some(steps) => solve_state_continuation(h, &alpha, &opts, steps),
            None => solve_state(h, &alpha, &opts),
        }?;
        run.timing("solve", t);
        let controls = ControlSet::new(vec![h])?;
        write_field(run, "alpha.csv", &alpha)?;
        write_controls(run, "controls.csv", &controls)?;
        write_field(run, "theta.csv", &theta)?;
        write_field(run, "target.csv", &target)?;
        let attained = write_curve(run, "curve.csv", &theta, cfg.length)?;
        let wanted = write_curve(run, "target_curve.csv", &target, cfg.length)?;
        let series = [
            Series::from_csv(&wanted, "x", "y", "target", true)?,
            Series::from_csv(&attained, "x", "y", "attained", false)?,
        ];
        let plot = Plot {
            title: "attainability round trip",
            x_label: "x",
            y_label: "y",
            equal_aspect: true,
        };
        write_svg(run, "overlay.svg", &plot, &series)?;
        let d = theta.sub(&target)?;
        let error = 0.5 * elastica_core::mesh::inner(&d, &d)?;
        let residual = state_residual(&target, &alpha, h)?;
        run.status("H", field);
        run.status("h", h.as_array());
        run.status("design_residual", residual);
        run.status("attainment_error", error);
        run.status(
            "residual_cost",
            residual_cost(&controls, &alpha, std::slice::from_ref(&target))?,
        );
        Ok(Outcome {
            status: RunStatus::Ok,
            summary: format!("attain: H = {field:.6}, attainment error {error:.3e}"),
        })
    })
}

pub fn bifurcate_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<BifurcateConfig>(&common.config))?;
    let cfg = &loaded.config;
    let grid = config_err(resolve_grid(common.grid, cfg.grid))?;
    if !(cfg.step > 0.0 && cfg.h_min.is_finite() && cfg.h_max.is_finite() && cfg.h_min <= cfg.h_max)
    {
        return Err(Failure::Config(anyhow!(
            "need finite h_min <= h_max and step > 0 (got {}, {}, {})",
            cfg.h_min,
            cfg.h_max,
            cfg.step
        )));
    }
    let count = ((cfg.h_max - cfg.h_min) / cfg.step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(Failure::Config(anyhow!("{count} rows requested")));
    }
    let fields: Vec<f64> = (0..count)
        .map(|k| cfg.h_min + k as f64 * cfg.step)
        .collect();

    execute(common, "bifurcate", loaded.raw.clone(), Some(grid), |run| {
        let mut rows = Vec::new();
        let mut below = Vec::new();
        for &h in &fields {
            match bifurcation_tip(h) {
                Ok(t) => rows.push((h, t)),
                Err(CoreError::NoNontrivialBranch { .. }) => below.push(h),
                Err(e) => return Err(e.into()),
            }
        }
        let branch = run.write("branch.csv", |w| Ok(write_branch_csv(&rows, w)?))?;
        if !rows.is_empty() {
            let plot = Plot {
                title: "post-buckling branch",
                x_label: "H",
                y_label: "tip rotation",
                equal_aspect: false,
            };
            write_svg(
                run,
                "branch.svg",
                &plot,
                &[Series::from_csv(&branch, "H", "theta1", "theta1", false)?],
            )?;
        }
        run.status("rows", rows.len());
        run.status("no_branch", &below);
        let mut profiles = Vec::new();
        let mut series = Vec::new();
        for (k, &h) in cfg.profiles.iter().enumerate() {
            let bp = bifurcation_profile(h, grid)?;
            let name = format!("profile_{}.csv", k + 1);
            let path = write_field(run, &name, &bp.profile)?;
            let residual = state_residual(
                &bp.profile,
                &ScalarField::zeros(grid, FieldRole::Design),
                Control::new(-h, 0.0),
            )?;
            profiles.push(serde_json::json!({ "file": name, "H": h, "theta1": bp.theta1, "state_residual": residual }));
            series.push(Series::from_csv(
                &path,
                "s",
                "value",
                &format!("H = {h}"),
                false,
            )?);
        }
        if !series.is_empty() {
            let plot = Plot {
                title: "branch profiles",
                x_label: "s",
                y_label: "theta",
                equal_aspect: false,
            };
            write_svg(run, "profiles.svg", &plot, &series)?;
        }
        run.status("profiles", profiles);
        Ok(Outcome {
            status: RunStatus::Ok,
            summary: format!(
                "bifurcate: {} branch points, {} below threshold",
                rows.len(),
                below.len()
            ),
        })
    })
}

#[derive(Serialize)]
struct CheckRow {
    target: usize,
    h: [f64; 2],
    verdict: Verdict,
    dist_to_one: f64,
    eigenvalues: Vec<f64>,
    tolerance: f64,
    sufficient_condition: bool,
}

pub fn check_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<CheckConfig>(&common.config))?;
    let cfg = &loaded.config;
    let dir = loaded.base.join(&cfg.run_dir);
    let inputs = config_err((|| {
        let alpha = ScalarField::read_csv(
            std::fs::File::open(dir.join("alpha.csv"))
                .with_context(|| format!("opening {}/alpha.csv", dir.display()))?,
            FieldRole::Design,
        )?;
        if let Some(n) = common.grid {
            if n != alpha.grid().n_cells() {
                bail!(
                    "--grid {n} disagrees with the run's {} cells",
                    alpha.grid().n_cells()
                );
            }
        }
        let controls = read_controls(&dir.join("controls.csv"))?;
        let thetas = (1..=controls.len())
            .map(|k| {
                let path = dir.join(format!("theta_{k}.csv"));
                let file = std::fs::File::open(&path)
                    .with_context(|| format!("opening {}", path.display()))?;
                Ok(ScalarField::read_csv(file, FieldRole::Shape)?)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        if cfg.k == 0 {
            bail!("k must be at least 1");
        }
        Ok((alpha, controls, thetas))
    })())?;
    let (alpha, controls, thetas) = inputs;
    let grid = alpha.grid();

    execute(common, "check", loaded.raw.clone(), Some(grid), |run| {
        let mut rows = Vec::new();
        for (i, (h, theta)) in controls.iter().zip(&thetas).enumerate() {
            let rep = regularity_check(*h, &alpha, theta, cfg.k.min(grid.n_cells()))?;
            rows.push(CheckRow {
                target: i + 1,
                h: h.as_array(),
                verdict: rep.verdict,
                dist_to_one: rep.spectrum.dist_to_one,
                eigenvalues: rep.spectrum.eigenvalues,
                tolerance: rep.tolerance,
                sufficient_condition: rep.sufficient_condition,
            });
        }
        run.write_json("check.json", &rows)?;
        let resonant = rows
            .iter()
            .filter(|r| r.verdict == Verdict::Resonant)
            .count();
        run.status("regular", rows.len() - resonant);
        run.status("resonant", resonant);
        Ok(Outcome {
            status: RunStatus::Ok,
            summary: format!(
                "check: {} regular, {resonant} resonant",
                rows.len() - resonant
            ),
        })
    })
}

pub fn sweep_cmd(common: &Common) -> CmdResult {
    let loaded = config_err(load::<SweepConfig>(&common.config))?;
    let cfg = &loaded.config;
    let grid = config_err(resolve_grid(common.grid, cfg.grid))?;
    let targets = config_err(
        cfg.targets
            .iter()
            .map(|t| t.load(grid, FieldRole::Target, &loaded.base))
            .collect::<anyhow::Result<Vec<_>>>(),
    )?;
    if cfg.epsilons.is_empty() || cfg.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Failure::Config(anyhow!(
            "epsilons must be a nonempty list of positive numbers"
        )));
    }
    let template = config_err(build_spec(
        targets,
        1.0,
        1.0,
        cfg.cap,
        (cfg.inner_tol, cfg.outer_tol),
        (cfg.inner_max, cfg.outer_max),
        &cfg.solver,
    ))?;

    execute(common, "sweep", loaded.raw.clone(), Some(grid), |run| {
        let t = Instant::now();
        let rows = epsilon_sweep(&template, &cfg.epsilons)?;
        run.timing("sweep", t);
        let path = run.write("sweep.csv", |w| Ok(write_sweep_csv(&rows, w)?))?;
        let mut series = Series::from_csv(
            &path,
            "epsilon",
            "attainment_error",
            "attainment error",
            false,
        )?;
        let keep: Vec<bool> = series.y.iter().map(|y| y.is_finite()).collect();
        let mut k = keep.iter();
        series.x.retain(|_| *k.next().unwrap_or(&false));
        let mut k = keep.iter();
        series.y.retain(|_| *k.next().unwrap_or(&false));
        if !series.x.is_empty() {
            let plot = Plot {
                title: "epsilon sweep",
                x_label: "epsilon = gamma",
                y_label: "attainment error",
                equal_aspect: false,
            };
            write_svg(run, "sweep.svg", &plot, &[series])?;
        }
        let flagged = rows.iter().filter(|r| r.contraction_lost).count();
        run.status("rows", &rows);
        run.status("flagged", flagged);
        Ok(Outcome {
            status: RunStatus::Ok,
            summary: format!(
                "sweep: {} rows, {flagged} flagged for lost contraction",
                rows.len()
            ),
        })
    })
}
