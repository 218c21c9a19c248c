use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swlab_bench::conformal_torus;
use swlab_core::fields::nabla;
use swlab_core::spectral::{assemble, eigensolve, DofBasis, OperatorKind};
use swlab_core::{Bundle, Field, Gradients, OperatorHandle};

fn pointwise(c: &mut Criterion) {
    let mut group = c.benchmark_group("field_ops");
    for size in [32, 64] {
        let cache = conformal_torus(size).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = Field::random(&cache, Bundle::TraceFree(2), 4, &mut rng);
        let g = Gradients::new(&cache, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("nabla", size), &phi, |b, phi| b.iter(|| nabla(&cache, phi)));
        group.bench_with_input(BenchmarkId::new("decompose", size), &phi, |b, phi| {
            b.iter(|| g.decompose(phi).unwrap())
        });
    }
    group.finish();
}

fn dense(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    let cache = conformal_torus(12).unwrap();
    let op = OperatorHandle::normal(&cache, 2, OperatorKind::ConformalKilling).unwrap();
    group.bench_function("assemble_12", |b| b.iter(|| assemble(&op, &cache, DofBasis::Fourier).unwrap()));
    let a = assemble(&op, &cache, DofBasis::Fourier).unwrap();
    group.bench_function("eigensolve_12", |b| b.iter(|| eigensolve(&a.stiffness, &a.mass, None).unwrap()));
    group.finish();
}

criterion_group!(benches, pointwise, dense);
criterion_main!(benches);
