use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use relief_bench::terrain_session;
use relief_core::compression::compress_normals;
use relief_core::{solve_heights, RatioField, ReliefParams};

const GRID: usize = 430;
const CONTROLS: usize = 8000;

fn params(i: usize) -> ReliefParams {
    ReliefParams {
        alpha: 2.0 + (i % 7) as f64,
        ..Default::default()
    }
}

fn solve(c: &mut Criterion) {
    let s = terrain_session(GRID, CONTROLS, false);
    let prep = s.prepared();
    let base = s.params().base.clone();
    let mut g = c.benchmark_group("solve");
    g.bench_function("compress", |b| {
        b.iter(|| compress_normals(&prep.controls, black_box(&params(3)), prep.rho.get()))
    });
    let cn = compress_normals(&prep.controls, &params(3), prep.rho.get());
    g.bench_function("back_substitute", |b| {
        b.iter(|| solve_heights(&prep.system, black_box(&cn), &base).unwrap())
    });
    g.finish();
}

fn adjust(c: &mut Criterion) {
    let mut g = c.benchmark_group("adjust");
    g.sample_size(30);
    for (name, reference) in [("pipelined", false), ("reference", true)] {
        let mut s = terrain_session(GRID, CONTROLS, reference);
        let mut i = 0;
        g.bench_function(name, |b| {
            b.iter(|| {
                i += 1;
                s.adjust(&params(i)).unwrap()
            })
        });
    }
    let mut s = terrain_session(GRID, CONTROLS, false);
    g.bench_function("drain", |b| b.iter(|| s.drain()));
    g.finish();
}

fn mba(c: &mut Criterion) {
    let s = terrain_session(GRID, CONTROLS, true);
    let controls = &s.prepared().controls;
    let values: Vec<f64> = controls
        .xy
        .iter()
        .map(|p| 0.5 + 0.3 * (7.0 * p[0]).sin() * (5.0 * p[1]).cos())
        .collect();
    let (lo, hi) = s.prepared().domain;
    let mut g = c.benchmark_group("mba");
    g.bench_function("fit", |b| {
        b.iter(|| RatioField::fit(&controls.xy, black_box(&values), lo, hi, 8))
    });
    let field = RatioField::fit(&controls.xy, &values, lo, hi, 8);
    g.bench_function("eval_all", |b| {
        b.iter_batched(
            || s.xy().to_vec(),
            |xy| field.eval_all(&xy),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, solve, adjust, mba);
criterion_main!(benches);
