use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hk_bench::{line_measure, plane_measure};
use hk_core::{
    barycenter_fixed_point, hk_solve, solve_multimarginal, FixedPointOptions, MultimarginalOptions, SolverOptions,
};

fn let_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("hk_solve");
    g.sample_size(10);
    let opts = SolverOptions::default();
    for n in [16, 64, 200] {
        let (a, b) = (plane_measure(n, 1), plane_measure(n, 2));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| hk_solve(&a, &b, &opts).unwrap())
        });
    }
    g.finish();
}

fn barycenters(c: &mut Criterion) {
    let mut g = c.benchmark_group("barycenter");
    g.sample_size(10);
    let mus = [line_measure(6, 0.0, 3), line_measure(5, 0.5, 4)];
    let lambdas = [0.5, 0.5];
    let mm = MultimarginalOptions::default();
    g.bench_function("multimarginal_6x5", |bch| bch.iter(|| solve_multimarginal(&mus, &lambdas, &mm).unwrap()));
    let fp = FixedPointOptions { max_outer: 20, ..FixedPointOptions::default() };
    g.bench_function("fixed_point_6x5", |bch| bch.iter(|| barycenter_fixed_point(None, &mus, &lambdas, &fp)));
    g.finish();
}

criterion_group!(benches, let_solve, barycenters);
criterion_main!(benches);
