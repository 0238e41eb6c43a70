use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use regionpager_bench::workload;
use regionpager_core::{
    parse_scenario, region_id_of, region_id_of_shift, run_scenario, LayoutConfig, Scheme,
};

fn region_lookup(c: &mut Criterion) {
    let cfg = LayoutConfig::default();
    let addrs: Vec<u32> = (0..1024u32)
        .map(|i| i.wrapping_mul(0x9e37_79b9) % 0xff00_0000)
        .collect();
    let mut g = c.benchmark_group("region_id");
    g.bench_function("division", |b| {
        b.iter(|| {
            addrs.iter().for_each(|&a| {
                black_box(region_id_of(&cfg, black_box(a)));
            })
        })
    });
    g.bench_function("shift", |b| {
        b.iter(|| {
            addrs.iter().for_each(|&a| {
                black_box(region_id_of_shift(&cfg, black_box(a)));
            })
        })
    });
    g.finish();
}

fn schemes(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_scenario");
    for faults in [1usize, 50, 500] {
        let scenario = workload(faults);
        for scheme in Scheme::ALL {
            g.bench_with_input(
                BenchmarkId::new(scheme.name(), faults),
                &scenario,
                |b, s| b.iter(|| run_scenario(scheme, black_box(s)).unwrap()),
            );
        }
    }
    g.finish();
}

fn parse(c: &mut Criterion) {
    let text = workload(500).to_text();
    c.bench_function("parse_500", |b| {
        b.iter(|| parse_scenario(black_box(&text)).unwrap())
    });
}

criterion_group!(benches, region_lookup, schemes, parse);
criterion_main!(benches);
