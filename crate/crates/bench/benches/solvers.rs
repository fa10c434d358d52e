use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use elastica_bench::{design, two_target_spec};
use elastica_core::analysis::bifurcation_profile;
use elastica_core::bvp::sl_eigen;
use elastica_core::magneto::solve_state;
use elastica_core::program::outer_loop;
use elastica_core::program::reduced_cost_gradient;
use elastica_core::{Control, ControlSet, FieldRole, Grid, ScalarField, SolveOptions};

fn state(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_state");
    for cells in [100, 400, 1600] {
        let grid = Grid::new(cells).unwrap();
        let alpha = design(grid);
        let h = Control::new(0.8, 1.5);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &alpha, |b, alpha| {
            b.iter(|| solve_state(black_box(h), alpha, &SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sl_eigen");
    for cells in [100, 400, 1600] {
        let grid = Grid::new(cells).unwrap();
        let q = ScalarField::from_fn(grid, FieldRole::Generic, |s| 1.0 + 0.5 * s).unwrap();
        let w = ScalarField::from_fn(grid, FieldRole::Generic, |s| 1.0 + s * s).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(cells), &(q, w), |b, (q, w)| {
            b.iter(|| sl_eigen(q, w, 3).unwrap())
        });
    }
    group.finish();
}

fn branch(c: &mut Criterion) {
    let grid = Grid::new(400).unwrap();
    c.bench_function("bifurcation_profile/400", |b| {
        b.iter(|| bifurcation_profile(black_box(3.0), grid).unwrap())
    });
}

fn gradient(c: &mut Criterion) {
    let spec = two_target_spec(200, 0.1, 1.0);
    let alpha = design(spec.grid());
    let controls = ControlSet::new(vec![Control::new(0.5, 0.3), Control::new(-0.2, 0.4)]).unwrap();
    c.bench_function("reduced_cost_gradient/200", |b| {
        b.iter(|| reduced_cost_gradient(&spec, &controls, &alpha).unwrap())
    });
}

fn program(c: &mut Criterion) {
    let mut group = c.benchmark_group("outer_loop");
    group.sample_size(10);
    for cells in [100, 200] {
        let spec = two_target_spec(cells, 0.1, 1.0);
        let alpha = ScalarField::zeros(spec.grid(), FieldRole::Design);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &spec, |b, spec| {
            b.iter(|| outer_loop(spec, &alpha).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, state, eigen, branch, gradient, program);
criterion_main!(benches);
