use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lsldg_core::basis::select_centers;
use lsldg_core::clustering::{seek_modes, LsldgMap, SeekConfig};
use lsldg_core::data::{generate, Family, SyntheticSpec};
use lsldg_core::estimator::{
    compute_stats, solve_mt_bcd, solve_mt_dense, BcdOptions, Gamma, HyperParams, SpectralStats,
};
use lsldg_core::modelsel::fit;
use lsldg_core::{Estimator, Solver};

fn stats(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_stats");
    for d in [2usize, 10, 20] {
        let data = generate(&SyntheticSpec::new(Family::SingleGaussian, d, 300, 1)).unwrap();
        let basis = select_centers(&data, 50, 1).unwrap().with_bandwidth(2.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |bch, _| {
            bch.iter(|| compute_stats(&data, &basis).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("mt_solve");
    group.sample_size(20);
    for d in [5usize, 10, 20] {
        let data = generate(&SyntheticSpec::new(Family::SingleGaussian, d, 60, 2)).unwrap();
        let basis = select_centers(&data, 50, 2).unwrap().with_bandwidth(3.0).unwrap();
        let st = compute_stats(&data, &basis).unwrap();
        let hp = HyperParams::uniform(3.0, 1e-3, Gamma::Finite(0.1), d).unwrap();
        group.bench_with_input(BenchmarkId::new("dense", d), &d, |bch, _| {
            bch.iter(|| solve_mt_dense(&st, &hp).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral", d), &d, |bch, _| {
            bch.iter(|| SpectralStats::new(&st).solve(&hp).unwrap())
        });
        let opts = BcdOptions {
            tol: 1e-9,
            ..BcdOptions::default()
        };
        group.bench_with_input(BenchmarkId::new("bcd", d), &d, |bch, _| {
            bch.iter(|| solve_mt_bcd(&st, &hp, None, &opts).unwrap())
        });
    }
    group.finish();
}

fn modes(c: &mut Criterion) {
    let data = generate(&SyntheticSpec::new(Family::ThreeGaussianMixture, 2, 300, 3)).unwrap();
    let basis = select_centers(&data, 50, 3).unwrap().with_bandwidth(0.6).unwrap();
    let hp = HyperParams::uniform(0.6, 1e-3, Gamma::Finite(0.0), 2).unwrap();
    let model = fit(&data, &basis, &hp, Estimator::MultiTask, &Solver::Analytic).unwrap();
    let cfg = SeekConfig::for_data(&data);
    let map = LsldgMap {
        model: &model,
        denominator_floor: cfg.denominator_floor,
    };
    let mut group = c.benchmark_group("seek_modes");
    group.sample_size(10);
    group.bench_function("lsldg_d2_n300", |bch| bch.iter(|| seek_modes(&map, &data, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, stats, solvers, modes);
criterion_main!(benches);
