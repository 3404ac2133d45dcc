use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use howard_bench::bench_config;
use howard_core::network::{coalescence_time, Walker};
use howard_core::renewal::renewal_increments;
use howard_core::{materialize_window, FieldSampler, LatticeSite, WindowSpec};

fn sampler(c: &mut Criterion) {
    let s = FieldSampler::new(bench_config(1)).unwrap();
    let mut g = c.benchmark_group("sampler");
    g.throughput(Throughput::Elements(1024));
    g.bench_function("variates_1024", |b| {
        b.iter(|| {
            let mut acc = 0i64;
            for x in 0..1024 {
                let v = s.variates(LatticeSite::new(x, 7));
                acc += v.dx;
            }
            black_box(acc)
        })
    });
    g.finish();
}

fn walker(c: &mut Criterion) {
    let mut g = c.benchmark_group("walker");
    g.throughput(Throughput::Elements(10_000));
    g.bench_function("10k_steps", |b| {
        b.iter_batched(
            || Walker::new(&bench_config(2), LatticeSite::new(0, 0)).unwrap(),
            |mut w| black_box(w.advance(10_000).unwrap()),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("coalescence_sep1", |b| {
        let cfg = bench_config(3);
        b.iter(|| black_box(coalescence_time(&cfg, LatticeSite::new(0, 0), LatticeSite::new(1, 0), 10_000).unwrap()))
    });
    g.finish();
}

fn window(c: &mut Criterion) {
    let spec = WindowSpec::new(0, 63, 0, 63).unwrap();
    let cfg = bench_config(4);
    c.bench_function("materialize_64x64", |b| {
        b.iter(|| black_box(materialize_window(&cfg, &spec).unwrap().rows.len()))
    });
}

fn renewals(c: &mut Criterion) {
    let mut g = c.benchmark_group("renewal");
    g.sample_size(10);
    g.bench_function("5_increments", |b| {
        let cfg = bench_config(5);
        b.iter(|| {
            black_box(
                renewal_increments(&cfg, LatticeSite::new(0, 0), 5, 64, 1_000_000)
                    .unwrap()
                    .len(),
            )
        })
    });
    g.finish();
}

criterion_group!(benches, sampler, walker, window, renewals);
criterion_main!(benches);
