use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use softmanifold::embedding::{initial_positions, phi_star, Objective};
use softmanifold::{
    build_conductivity, embed, generate_synthetic, graph_distance_matrix, knn_neighborhoods,
    semimetric_distance, DistanceTransform, EmbedConfig, FeatureMatrix, FluidConfig, FluidGraph,
    GradientMode, SyntheticSpec,
};

fn benchmark_data() -> FeatureMatrix {
    generate_synthetic(&SyntheticSpec {
        n_nodes: 50,
        n_features: 10,
        n_classes: 3,
        noise: 0.05,
        seed: 0,
    })
    .unwrap()
}

fn fluid() -> FluidConfig {
    FluidConfig {
        transform: DistanceTransform::NegLog,
        ..FluidConfig::default()
    }
}

fn build_graph(fm: &FeatureMatrix) -> FluidGraph {
    let nb = knn_neighborhoods(fm, 20).unwrap();
    let kt = build_conductivity(fm, &nb, 1.0).unwrap();
    graph_distance_matrix(fm, &kt, &nb, &fluid()).unwrap()
}

fn config(gradient: GradientMode) -> EmbedConfig {
    EmbedConfig {
        dim: 10,
        lr: 3e-5,
        epochs: 1,
        gradient,
        ..EmbedConfig::default()
    }
}

fn bench_semimetric(c: &mut Criterion) {
    let u1 = [0.3, -0.2, 0.1, 0.4];
    let u2 = [-0.5, 0.25, 0.0, 0.1];
    c.bench_function("semimetric_distance", |b| {
        b.iter(|| semimetric_distance(black_box(&u1), black_box(&u2)))
    });
}

fn bench_graph(c: &mut Criterion) {
    let fm = benchmark_data();
    c.bench_function("graph_build_n50_k20", |b| b.iter(|| build_graph(black_box(&fm))));
}

fn bench_epoch(c: &mut Criterion) {
    let fm = benchmark_data();
    let fg = build_graph(&fm);
    for (name, mode) in [
        ("embed_one_epoch_analytic", GradientMode::Analytic),
        ("embed_one_epoch_fd", GradientMode::FiniteDifference),
    ] {
        let cfg = config(mode);
        c.bench_function(name, |b| b.iter(|| embed(&fm, &fg, black_box(&cfg)).unwrap()));
    }

    let cfg = config(GradientMode::Analytic);
    let obj = Objective::new(&fg, &cfg);
    let start = initial_positions(&fm, &fg, &cfg).unwrap();
    let phi = phi_star(&start);
    c.bench_function("gradient_analytic_n50", |b| {
        b.iter_batched(
            || start.clone(),
            |pos| obj.gradient_analytic(&pos, None, phi),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_semimetric, bench_graph, bench_epoch);
criterion_main!(benches);
