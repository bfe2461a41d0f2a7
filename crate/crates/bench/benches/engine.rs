use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use tessera_bench::{bundle, constraints, deployed, inventory, store, MOODLE, MOODLE_SCALED};
use tessera_core::provider::Scope;
use tessera_core::{compile_plan, parse_bundle, DEFAULT_BUDGET};

fn parse(c: &mut Criterion) {
    let mut group = c.benchmark_group("parse_bundle");
    for (name, text) in [("moodle", MOODLE), ("moodle-scaled", MOODLE_SCALED)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), text, |b, text| {
            b.iter(|| parse_bundle(black_box(text)).unwrap())
        });
    }
    group.finish();
}

fn acquire(c: &mut Criterion) {
    let mut group = c.benchmark_group("acquire");
    let wanted = constraints();
    for n in [16usize, 256, 2048] {
        let inv = inventory(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inv, |b, inv| {
            b.iter_batched(
                || inv.clone(),
                |mut inv| inv.acquire(black_box(&wanted), &Scope::Any).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn converge(c: &mut Criterion) {
    let model = deployed(8);
    c.bench_function("converge/moodle-scaled", |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| assert!(m.run_to_convergence(DEFAULT_BUDGET, 0).is_converged()),
            BatchSize::SmallInput,
        )
    });
}

fn compile(c: &mut Criterion) {
    let store = store();
    let scaled = bundle(MOODLE_SCALED);
    c.bench_function("compile_plan/moodle-scaled", |b| {
        b.iter(|| compile_plan(black_box(&scaled), &store).unwrap())
    });
}

criterion_group!(benches, parse, acquire, converge, compile);
criterion_main!(benches);
