use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mxscale::{build_error_lut, mbs_dynamic_exact, mbs_dynamic_lut, quantize_tensor, CandidateSet, MbsMode, SchemeConfig};
use mxscale_bench::activations;
use std::hint::black_box;

fn schemes(c: &mut Criterion) {
    let t = activations(256, 1024);
    let mut g = c.benchmark_group("quantize_256x1024");
    g.throughput(Throughput::Elements(t.len() as u64));
    g.sample_size(20);
    for cfg in [
        SchemeConfig::ocp32(),
        SchemeConfig::mx16(),
        SchemeConfig::mx16_oas(),
        SchemeConfig::mbs_static(128),
        SchemeConfig::mbs_dynamic(128, MbsMode::Exact),
        SchemeConfig::mbs_dynamic(128, MbsMode::Lut),
        SchemeConfig::nvfp4(),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(cfg.label()), &cfg, |b, cfg| {
            b.iter(|| quantize_tensor(black_box(&t), cfg).unwrap())
        });
    }
    g.finish();
}

fn selection(c: &mut Criterion) {
    let t = activations(1, 128);
    let cands = CandidateSet::uniform16();
    let lut = build_error_lut(&cands).unwrap();
    let mut g = c.benchmark_group("mbs_d_selection_128");
    g.bench_function("exact", |b| b.iter(|| mbs_dynamic_exact(black_box(t.data()), &cands).unwrap()));
    g.bench_function("lut", |b| b.iter(|| mbs_dynamic_lut(black_box(t.data()), &lut, &cands).unwrap()));
    g.finish();
}

criterion_group!(benches, schemes, selection);
criterion_main!(benches);
