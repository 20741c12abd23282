use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use normsolve::bubbles::{struwe_table, CutoffSpec};
use normsolve::energy::EnergyParams;
use normsolve::exec::Exec;
use normsolve::grid::RadialGrid;
use normsolve::mountainpass::{
    build_endpoints, initial_path, solve_mountain_pass, MountainPassConfig,
};
use normsolve::thresholds::{frozen_g_constant, ThresholdSet};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bench_struwe(c: &mut Criterion) {
    let g = RadialGrid::new(4, 2.0, 8192).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625];
    let mut group = c.benchmark_group("struwe_table");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                struwe_table(black_box(&g), CutoffSpec::default_plateau(2.0), &eps, exec).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_path_energies(c: &mut Criterion) {
    let g = RadialGrid::new(3, 1.0, 8192).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(3, 0.25 * t.mu_star).unwrap();
    let cutoff = CutoffSpec::default_plateau(1.0);
    let ends = build_endpoints(&g, &p, &t, t.mu_double_star(), cutoff).unwrap();
    let mut group = c.benchmark_group("path_energies");
    for segments in [32, 128] {
        let path = initial_path(&g, &ends, segments, cutoff, Exec::Sequential).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, segments), &path, |b, path| {
                b.iter(|| path.energies(black_box(&g), &p, exec))
            });
        }
    }
    group.finish();
}

fn bench_mountain_pass(c: &mut Criterion) {
    let g = RadialGrid::new(3, 1.0, 2048).unwrap();
    let t = ThresholdSet::for_grid(&g).unwrap();
    let p = EnergyParams::critical(3, 0.25 * t.mu_star).unwrap();
    let k = frozen_g_constant(3);
    let mut group = c.benchmark_group("mountain_pass");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut config = MountainPassConfig::default();
        config.minimax.exec = exec;
        group.bench_function(name, |b| {
            b.iter(|| solve_mountain_pass(black_box(&g), &p, &t, k, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_struwe,
    bench_path_energies,
    bench_mountain_pass
);
criterion_main!(benches);
