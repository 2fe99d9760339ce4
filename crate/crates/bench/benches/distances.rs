use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpclust::mpc::embed_all;
use mpclust::{generate_snapshot, mahalanobis, mcd, mcd_matrix, sqrt_transform, GenConfig, McdParams};

fn distances(c: &mut Criterion) {
    let snap = generate_snapshot(&GenConfig::default()).unwrap();
    let params = McdParams::from_xi(1.0).unwrap();

    let mut group = c.benchmark_group("pairwise");
    for with_aod in [false, true] {
        let feats = embed_all(&snap.mpcs, with_aod);
        let a = mcd_matrix(1.0, with_aod).unwrap();
        let dim = feats[0].as_slice().len();
        group.bench_with_input(BenchmarkId::new("mcd", dim), &with_aod, |b, &w| {
            b.iter(|| {
                let mut acc = 0.0;
                for x in &snap.mpcs[..100] {
                    for y in &snap.mpcs[..100] {
                        acc += mcd(x, y, &params, w);
                    }
                }
                black_box(acc)
            })
        });
        group.bench_with_input(BenchmarkId::new("mahalanobis", dim), &feats, |b, f| {
            b.iter(|| {
                let mut acc = 0.0;
                for x in &f[..100] {
                    for y in &f[..100] {
                        acc += mahalanobis(x, y, &a).unwrap();
                    }
                }
                black_box(acc)
            })
        });
        group.bench_with_input(BenchmarkId::new("sqrt_transform", dim), &a, |b, a| {
            b.iter(|| sqrt_transform(black_box(a)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, distances);
criterion_main!(benches);
