//! Benchmark fixtures shared by the criterion targets.

use elastica_core::analysis::Preset;
use elastica_core::program::ProblemSpec;
use elastica_core::{FieldRole, Grid, ScalarField};

/// Two-target programming problem on `cells` intervals.
pub fn two_target_spec(cells: usize, epsilon: f64, gamma: f64) -> ProblemSpec {
    let grid = Grid::new(cells).expect("valid grid");
    let targets = vec![
        Preset::Parabolic { a: 0.5 }.field(grid).expect("preset"),
        ScalarField::from_fn(grid, FieldRole::Target, |s| {
            -0.3 * (std::f64::consts::FRAC_PI_2 * s).sin()
        })
        .expect("target"),
    ];
    ProblemSpec::new(targets, epsilon, gamma).expect("valid spec")
}

/// Smooth clamped design field.
pub fn design(grid: Grid) -> ScalarField {
    ScalarField::from_fn(grid, FieldRole::Design, |s| 0.4 * s + 0.2 * (3.0 * s).sin())
        .expect("design")
}
