//! Compressed matvec against the dense reference across sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};

use hierenc::hmatrix::{compress, RankPolicy};
use hierenc::hsplit::{hierarchical_split, Variant};
use hierenc::kernels::{assemble_dense, EntryOracle, Kernel, PointSet};

fn bench_matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("matvec");
    let rank = 16usize;
    for l in [8usize, 10, 12] {
        let n = 1usize << l;
        let points = PointSet::grid_1d(n);
        let kernel = Kernel::PolyDecay {
            p: 2.0,
            self_interaction: 0.0,
        };
        let oracle = EntryOracle::new(kernel, points.clone());
        let split = hierarchical_split(&points, Variant::Plain1D, None).unwrap();
        let h = compress(&oracle, &split, RankPolicy::Uniform(rank)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);

        group.bench_with_input(BenchmarkId::new("hierarchical", n), &n, |b, _| {
            b.iter(|| h.matvec(&v).unwrap())
        });
        if n <= 1024 {
            let dense = assemble_dense(&oracle).unwrap();
            group.bench_with_input(BenchmarkId::new("dense", n), &n, |b, _| {
                b.iter(|| &dense * &v)
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_matvec);
criterion_main!(benches);
