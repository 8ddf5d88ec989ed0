use std::hint::black_box;

use cardiomr_bench::{example1_tree, solver};
use cardiomr_core::elliptic::{solve_zero_mean, uniform_operator, EllipticSystem, SolveOptions};
use cardiomr_core::mrtree::mesh::LeafMesh;
use cardiomr_core::mrtree::predict::{predict_children, StencilWidth};
use cardiomr_core::mrtree::AdaptOptions;
use cardiomr_core::timeint::euler::euler_step;
use cardiomr_core::timeint::lts::{lts_macro_step, LtsOptions};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn prediction(c: &mut Criterion) {
    let mut u = [[0.0; 5]; 5];
    for (j, row) in u.iter_mut().enumerate() {
        for (i, x) in row.iter_mut().enumerate() {
            *x = (i as f64 * 0.7 + j as f64 * 1.3).sin();
        }
    }
    c.bench_function("predict_children_s2", |b| b.iter(|| predict_children(black_box(&u), StencilWidth::Two)));
}

fn tree(c: &mut Criterion) {
    let base = example1_tree(7, 1e-3);
    c.bench_function("adapt_example1_L7", |b| {
        b.iter_batched(|| base.clone(), |mut t| t.adapt(&AdaptOptions::default()), BatchSize::LargeInput)
    });
    c.bench_function("leaf_mesh_example1_L7", |b| b.iter(|| LeafMesh::new(black_box(&base))));
    c.bench_function("flatten_example1_L7", |b| b.iter(|| black_box(&base).flatten()));
}

fn elliptic(c: &mut Criterion) {
    let n = 64;
    let h = 5.0 / n as f64;
    let sys = EllipticSystem::new(uniform_operator(n, [30.0, 12.6]), uniform_operator(n, [6.0, 0.6]), vec![h * h; n * n]);
    let rhs: Vec<f64> = (0..n * n).map(|k| ((k % n) as f64 - (k / n) as f64) * 1e-3).collect();
    c.bench_function("pcg_64x64", |b| b.iter(|| solve_zero_mean(&sys, black_box(&rhs), None, SolveOptions::default())));
}

fn steps(c: &mut Criterion) {
    let mono = solver("example1", 7);
    c.bench_function("euler_step_example1_L7", |b| {
        b.iter_batched(
            || mono.clone(),
            |mut s| {
                let dt = s.cfl_dt().unwrap();
                euler_step(&mut s, dt, None).unwrap();
            },
            BatchSize::LargeInput,
        )
    });
    let bi = solver("example2", 6);
    c.bench_function("lts_macro_step_example2_L6", |b| {
        b.iter_batched(
            || bi.clone(),
            |mut s| {
                let dt = s.cfl_dt().unwrap();
                lts_macro_step(&mut s, dt, None, LtsOptions::default()).unwrap();
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = prediction, tree, elliptic, steps
}
criterion_main!(benches);
