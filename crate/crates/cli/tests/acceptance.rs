//! Acceptance gate: each check prints one PASS/FAIL line; the process exits
//! non-zero if any check fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use elastica_core::analysis::{
    attainable_design, bifurcation_profile, bifurcation_tip, complete_elliptic_k, epsilon_sweep,
    max_target_curvature, regularity_check, Preset, Verdict,
};
use elastica_core::bvp::{poincare_constant_check, POINCARE_EIGENVALUE};
use elastica_core::magneto::{solve_state, solve_state_from, state_residual};
use elastica_core::mesh::{inner, integral, sup_norm};
use elastica_core::program::{
    attainment_error, direct_minimize, equation_residuals, outer_loop, reduced_cost,
    reduced_cost_gradient, DesignState, ProblemSpec,
};
use elastica_core::{Control, ControlSet, FieldRole, Grid, ScalarField, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CELLS: usize = 400;

fn grid() -> Grid {
    Grid::new(CELLS).unwrap()
}

fn ds2() -> f64 {
    grid().spacing().powi(2)
}

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Check {
    Check { passed, detail }
}

fn smooth(rng: &mut ChaCha8Rng, role: FieldRole, scale: f64) -> ScalarField {
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-scale..scale)).collect();
    ScalarField::from_fn(grid(), role, |s| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k as f64 + 0.5) * PI * s).sin())
            .sum()
    })
    .unwrap()
}

fn random_control(rng: &mut ChaCha8Rng, max: f64) -> Control {
    // uniform in the disc of radius `max`
    Control::polar(max * rng.gen::<f64>().sqrt(), rng.gen_range(-PI..PI))
}

fn two_targets() -> Vec<ScalarField> {
    vec![
        Preset::Parabolic { a: 0.5 }.field(grid()).unwrap(),
        ScalarField::from_fn(grid(), FieldRole::Target, |s| -0.3 * (FRAC_PI_2 * s).sin()).unwrap(),
    ]
}

fn zero_alpha() -> ScalarField {
    ScalarField::zeros(grid(), FieldRole::Design)
}

fn poincare_threshold() -> Check {
    let err =
        |n: usize| (poincare_constant_check(Grid::new(n).unwrap()) - POINCARE_EIGENVALUE).abs();
    let (e1, e2, e4) = (err(100), err(200), err(400));
    let (r1, r2) = (e1 / e2, e2 / e4);
    let order_ok = |r: f64| (3.6..=4.4).contains(&r);
    check(
        e4 <= 1e-4 && order_ok(r1) && order_ok(r2),
        format!("|error| at 400 cells {e4:.3e}, refinement ratios {r1:.3} and {r2:.3}"),
    )
}

struct StateCase {
    h: Control,
    alpha: ScalarField,
}

fn state_cases() -> Vec<StateCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..100)
        .map(|_| StateCase {
            h: random_control(&mut rng, 0.99 * POINCARE_EIGENVALUE),
            alpha: smooth(&mut rng, FieldRole::Design, 2.0),
        })
        .collect()
}

fn state_bound(cases: &[StateCase]) -> Check {
    let opts = SolveOptions::default();
    let mut worst = f64::NEG_INFINITY;
    for c in cases {
        match solve_state(c.h, &c.alpha, &opts) {
            Ok(theta) => worst = worst.max(sup_norm(&theta) - c.h.norm()),
            Err(e) => return check(false, format!("solve failed: {e}")),
        }
    }
    check(
        worst <= 1e-6,
        format!("{} cases, max(sup|theta| - |h|) = {worst:.3e}", cases.len()),
    )
}

fn uniqueness(cases: &[StateCase]) -> Check {
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for c in cases {
        let g = smooth(&mut rng, FieldRole::Shape, 1.5);
        let guesses = [
            ScalarField::zeros(grid(), FieldRole::Shape),
            g.clone(),
            g.map(|x| -x).with_role(FieldRole::Shape).unwrap(),
            ScalarField::from_fn(grid(), FieldRole::Shape, |s| 2.0 * s).unwrap(),
        ];
        let sols: Result<Vec<_>, _> = guesses
            .iter()
            .map(|init| solve_state_from(c.h, &c.alpha, &opts, init))
            .collect();
        let sols = match sols {
            Ok(s) => s,
            Err(e) => return check(false, format!("solve failed: {e}")),
        };
        for s in &sols[1..] {
            worst = worst.max(sup_norm(&s.sub(&sols[0]).unwrap()));
        }
    }
    check(
        worst <= 1e-8,
        format!(
            "{} cases x 4 initial guesses, max spread {worst:.3e}",
            cases.len()
        ),
    )
}

fn buckling() -> Check {
    let below = [2.0, 2.4].iter().all(|h| bifurcation_tip(*h).is_err());
    let tips: Vec<f64> = [2.5, 3.0, 5.0]
        .iter()
        .map(|h| bifurcation_tip(*h).unwrap_or(f64::NAN))
        .collect();
    let increasing = tips[0] > 0.0 && tips.windows(2).all(|w| w[1] > w[0]);
    let k0 = (complete_elliptic_k(0.0).unwrap() - FRAC_PI_2).abs();
    let (residual, ok_profile) = match bifurcation_profile(3.0, grid()) {
        Ok(bp) => {
            let r = state_residual(&bp.profile, &zero_alpha(), Control::new(-3.0, 0.0)).unwrap();
            (r, r <= 10.0 * ds2())
        }
        Err(_) => (f64::NAN, false),
    };
    check(
        below && increasing && ok_profile && k0 <= 1e-12,
        format!(
            "no branch at 2.0/2.4: {below}; tips {:.6}/{:.6}/{:.6}; profile residual at H=3 {residual:.3e}; |K(0) - pi/2| = {k0:.1e}",
            tips[0], tips[1], tips[2]
        ),
    )
}

fn attainability() -> Check {
    let bound = (10.0 * ds2()).powi(2);
    let opts = SolveOptions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, preset) in [
        ("parabolic(0.3)", Preset::Parabolic { a: 0.3 }),
        ("quarter-turn", Preset::QuarterTurn),
    ] {
        let target = preset.field(grid()).unwrap();
        let h = 1.5 * max_target_curvature(&target).unwrap();
        let result = attainable_design(&target, h).and_then(|(hbar, abar)| {
            let theta = solve_state(hbar, &abar, &opts)?;
            let d = theta.sub(&target)?;
            let direct = 0.5 * inner(&d, &d)?;
            let via = attainment_error(
                &ControlSet::new(vec![hbar])?,
                &abar,
                std::slice::from_ref(&target),
                &opts,
            )?;
            Ok(direct.max(via))
        });
        match result {
            Ok(e) => {
                ok &= e <= bound;
                parts.push(format!("{name}: H = {h:.4}, E = {e:.2e}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    check(ok, format!("{} (bound {bound:.2e})", parts.join("; ")))
}

fn minimizer_bound(scratch: &Path) -> Check {
    let bin = env!("CARGO_BIN_EXE_elastica");
    let configs = [
        r#"{"targets":[{"kind":"parabolic","a":0.5},{"kind":"quarter-turn"}],"epsilon":0.1,"gamma":1}"#,
        r#"{"targets":[{"kind":"parabolic","a":0.3}],"epsilon":0.3,"gamma":0.3}"#,
        r#"{"targets":[{"kind":"quarter-turn"}],"epsilon":0.5,"gamma":2}"#,
        r#"{"targets":[{"kind":"parabolic","a":-0.8},{"kind":"parabolic","a":0.4}],"epsilon":0.05,"gamma":5}"#,
        r#"{"targets":[{"kind":"zero"}],"epsilon":1,"gamma":1}"#,
    ];
    let mut converged = 0;
    let mut worst = f64::NEG_INFINITY;
    for (k, cfg) in configs.iter().enumerate() {
        let dir = scratch.join(format!("program_{k}"));
        let cfg_path = scratch.join(format!("program_{k}.json"));
        std::fs::write(&cfg_path, cfg).unwrap();
        let status = Command::new(bin)
            .args(["program", "--quiet", "--grid", "400", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&dir)
            .status()
            .unwrap();
        if status.code() != Some(0) {
            continue;
        }
        converged += 1;
        let value: serde_json::Value = serde_json::from_str(cfg).unwrap();
        let gamma = value["gamma"].as_f64().unwrap();
        let targets: Vec<ScalarField> = (1..)
            .map(|i| dir.join(format!("target_{i}.csv")))
            .take_while(|p| p.exists())
            .map(|p| {
                ScalarField::read_csv(std::fs::File::open(p).unwrap(), FieldRole::Target).unwrap()
            })
            .collect();
        let theta_bar_sq: f64 = targets.iter().map(|t| integral(&t.map(|v| v * v))).sum();
        let mut rdr = csv::Reader::from_path(dir.join("controls.csv")).unwrap();
        let hmax = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                let hx: f64 = r[1].parse().unwrap();
                let hy: f64 = r[2].parse().unwrap();
                hx.hypot(hy)
            })
            .fold(0.0, f64::max);
        worst = worst.max(hmax * hmax - theta_bar_sq / gamma);
    }
    check(
        converged >= 4 && worst <= 1e-8,
        format!(
            "{converged}/{} runs converged, max(max|h|^2 - Theta^2/gamma) = {worst:.3e}",
            configs.len()
        ),
    )
}

fn stationary_specs() -> Vec<(String, ProblemSpec)> {
    let mut out = vec![
        (
            "two targets, eps 0.1, gamma 1".to_string(),
            ProblemSpec::new(two_targets(), 0.1, 1.0).unwrap(),
        ),
        (
            "two targets, eps 0.1, gamma 10".to_string(),
            ProblemSpec::new(two_targets(), 0.1, 10.0).unwrap(),
        ),
    ];
    let quarter = Preset::QuarterTurn.field(grid()).unwrap();
    out.push((
        "quarter-turn, eps 0.5, gamma 2".into(),
        ProblemSpec::new(vec![quarter], 0.5, 2.0).unwrap(),
    ));
    let para = Preset::Parabolic { a: 0.3 }.field(grid()).unwrap();
    out.push((
        "parabolic(0.3), eps 0.3, gamma 0.3".into(),
        ProblemSpec::new(vec![para], 0.3, 0.3).unwrap(),
    ));
    out
}

fn stationarity(runs: &[(String, DesignState, ProblemSpec, bool)]) -> Check {
    let tol = 1e-6f64.max(10.0 * ds2());
    let mut worst_eq = 0.0f64;
    let mut worst_slope = 0.0f64;
    let mut converged = 0;
    for (_, state, spec, ok) in runs {
        if !ok {
            continue;
        }
        converged += 1;
        let r = equation_residuals(spec, state).unwrap();
        worst_eq = worst_eq.max(r.max());
        worst_slope = worst_slope.max(r.alpha_slope_at_zero.abs());
    }
    check(
        converged == runs.len() && worst_eq <= tol && worst_slope <= 10.0 * ds2(),
        format!(
            "{converged}/{} converged, max residual {worst_eq:.3e} (tol {tol:.2e}), max |alpha'(0)| {worst_slope:.3e}",
            runs.len()
        ),
    )
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let mut spec = ProblemSpec::new(two_targets(), 0.1, 10.0).unwrap();
    spec.solve.tol_residual = 1e-13;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let step = 1e-6;
    let mut worst = 0.0f64;
    let probes = 20;
    for _ in 0..probes {
        let h: ControlSet = (0..2).map(|_| random_control(&mut rng, 1.0)).collect();
        let alpha = smooth(&mut rng, FieldRole::Design, 0.5);
        let dh: Vec<[f64; 2]> = (0..2)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let dalpha = smooth(&mut rng, FieldRole::Design, 0.5);
        let g = reduced_cost_gradient(&spec, &h, &alpha).unwrap();
        let ad = g.directional(&dh, &dalpha).unwrap();
        let eval = |t: f64| {
            let hs: ControlSet = h
                .iter()
                .zip(&dh)
                .map(|(c, d)| Control::new(c.hx + t * d[0], c.hy + t * d[1]))
                .collect();
            let a = alpha.zip_map(&dalpha, |x, y| x + t * y).unwrap();
            reduced_cost(&spec, &hs, &a).unwrap().0
        };
        let fd = (eval(step) - eval(-step)) / (2.0 * step);
        worst = worst.max((ad - fd).abs() / ad.abs().max(1e-12));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-5 && elapsed < 60.0,
        format!("{probes} probes, max relative error {worst:.3e}, {elapsed:.2} s"),
    )
}

fn cross_solver() -> Check {
    let spec = ProblemSpec::new(two_targets(), 0.1, 1.0).unwrap();
    let (fp, fp_rep) = outer_loop(&spec, &zero_alpha()).unwrap();
    let contraction = fp_rep.inner_contraction().unwrap_or(f64::NAN);
    let (direct, d_rep) = direct_minimize(&spec, &DesignState::zero(&spec)).unwrap();
    let dc = (fp_rep.cost - d_rep.cost).abs();
    let dh = fp.controls.max_distance(&direct.controls);
    check(
        fp_rep.status.is_converged() && d_rep.status.is_converged() && contraction < 0.5 && dc <= 1e-6 && dh <= 1e-4,
        format!("gamma 1: inner contraction {contraction:.3}, |cost difference| {dc:.2e}, control difference {dh:.2e}"),
    )
}

fn contraction_scaling() -> Check {
    let g0 = 1.0;
    let ratios: Vec<f64> = (0..4)
        .map(|k| {
            let spec = ProblemSpec::new(two_targets(), 0.1, g0 * 2f64.powi(k)).unwrap();
            let (_, rep) = outer_loop(&spec, &zero_alpha()).unwrap();
            rep.inner_contraction().unwrap_or(f64::NAN)
        })
        .collect();
    let q: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = q.iter().all(|r| (0.5 * 0.7..=0.5 * 1.3).contains(r));
    check(
        ok,
        format!(
            "gamma {g0}..{}: ratios {:?}, successive quotients {:?}",
            8.0 * g0,
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            q.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn regularity(runs: &[(String, DesignState, ProblemSpec, bool)]) -> Check {
    let mut audited = 0;
    let mut all_regular = true;
    for (_, state, _, ok) in runs {
        if !ok || state.controls.max_norm() >= POINCARE_EIGENVALUE {
            continue;
        }
        for (h, theta) in state.controls.iter().zip(&state.thetas) {
            audited += 1;
            let rep = regularity_check(*h, &state.alpha, theta, 3).unwrap();
            all_regular &= rep.verdict == Verdict::Regular;
        }
    }
    // r ≡ c from h = (-c, 0) on the straight beam: mu_1 = (1 + pi^2/4)/(1 + c)
    let zero_theta = ScalarField::zeros(grid(), FieldRole::Shape);
    let verdict = |c: f64| {
        regularity_check(Control::new(-c, 0.0), &zero_alpha(), &zero_theta, 1)
            .unwrap()
            .verdict
    };
    let tol = 10.0 * ds2();
    let flip = |lo: f64, hi: f64| {
        let (mut lo, mut hi) = (lo, hi);
        let start = verdict(lo);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if verdict(mid) == start {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let c_star = POINCARE_EIGENVALUE;
    let enter = flip(2.0, c_star);
    let leave = flip(c_star, 3.0);
    let analytic_enter = (1.0 + c_star) / (1.0 + tol) - 1.0;
    let analytic_leave = (1.0 + c_star) / (1.0 - tol) - 1.0;
    let flips_ok = verdict(c_star) == Verdict::Resonant
        && verdict(0.999 * c_star) == Verdict::Regular
        && verdict(1.001 * c_star) == Verdict::Regular
        && (enter - analytic_enter).abs() <= 1e-5
        && (leave - analytic_leave).abs() <= 1e-5;
    check(
        audited > 0 && all_regular && flips_ok,
        format!(
            "{audited} minimizer states regular: {all_regular}; resonant window [{enter:.6}, {leave:.6}] vs analytic [{analytic_enter:.6}, {analytic_leave:.6}] around pi^2/4"
        ),
    )
}

fn epsilon_trend() -> Check {
    let seed = Preset::Parabolic { a: 0.3 }.field(grid()).unwrap();
    let (hbar, abar) = attainable_design(&seed, 0.45).unwrap();
    let target = solve_state(hbar, &abar, &SolveOptions::default())
        .unwrap()
        .with_role(FieldRole::Target)
        .unwrap();
    let template = ProblemSpec::new(vec![target], 1.0, 1.0).unwrap();
    let rows = epsilon_sweep(&template, &[1.0, 0.3, 0.1, 0.03]).unwrap();
    let held: Vec<_> = rows.iter().filter(|r| !r.contraction_lost).collect();
    let trend = held
        .windows(2)
        .all(|w| w[1].attainment_error <= 1.1 * w[0].attainment_error);
    let flagged_consistent = rows
        .iter()
        .all(|r| r.contraction_lost == (r.label() != "converged"));
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}: {:.3e} {}", r.epsilon, r.attainment_error, r.label()))
        .collect();
    check(
        held.len() >= 2 && trend && flagged_consistent,
        table.join(", "),
    )
}

type Criterion<'a> = Box<dyn Fn() -> Check + 'a>;

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let cases = state_cases();
    let runs: Vec<(String, DesignState, ProblemSpec, bool)> = stationary_specs()
        .into_iter()
        .map(|(name, spec)| {
            let (state, rep) = outer_loop(&spec, &zero_alpha()).unwrap();
            (name, state, spec, rep.status.is_converged())
        })
        .collect();

    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("Poincare threshold", Box::new(poincare_threshold)),
        ("state bound", Box::new(|| state_bound(&cases))),
        ("uniqueness regime", Box::new(|| uniqueness(&cases))),
        ("buckling bifurcation", Box::new(buckling)),
        ("attainability round trip", Box::new(attainability)),
        (
            "minimizer bound",
            Box::new(|| minimizer_bound(scratch.path())),
        ),
        ("stationarity", Box::new(|| stationarity(&runs))),
        ("gradient oracle", Box::new(gradient_oracle)),
        ("cross-solver agreement", Box::new(cross_solver)),
        ("contraction scaling", Box::new(contraction_scaling)),
        ("regularity audit", Box::new(|| regularity(&runs))),
        ("epsilon sweep trend", Box::new(epsilon_trend)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let c = f();
        if !c.passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2} s]",
            if c.passed { "PASS" } else { "FAIL" },
            k + 1,
            c.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
