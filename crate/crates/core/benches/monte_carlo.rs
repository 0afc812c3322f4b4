//! Sequential against parallel execution of the main Monte Carlo drivers.
//! Both paths produce identical numbers; only wall-clock time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slowmix::experiments::sample_sums;
use slowmix::tower::{theta_psi_moment, PsiEstimator, TowerSpec};
use slowmix::{Exec, HolderObservable, MapSystem, McConfig};

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sums(c: &mut Criterion) {
    let map = MapSystem::lsv(0.4).unwrap();
    let v = HolderObservable::cosine(1.0).with_offset(0.097);
    let w = HolderObservable::coordinate(0).with_offset(0.42);
    let n_list = [256, 1024, 4096];
    let mut group = c.benchmark_group("sample_sums");
    group.sample_size(10);
    for (name, exec) in EXECS {
        let mc = McConfig::new(256, 1).with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &mc, |b, mc| {
            b.iter(|| sample_sums(&map, &v, &w, &n_list, mc).unwrap())
        });
    }
    group.finish();
}

fn tower(c: &mut Criterion) {
    let spec = TowerSpec::pareto(2.5, 0.5).unwrap();
    let mut group = c.benchmark_group("theta_psi_moment");
    group.sample_size(10);
    for (name, exec) in EXECS {
        let mc = McConfig::new(20_000, 2).with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &mc, |b, mc| {
            b.iter(|| theta_psi_moment(&spec, 0.5, 1024, mc, PsiEstimator::Conditional).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sums, tower);
criterion_main!(benches);
