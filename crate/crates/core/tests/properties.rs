use proptest::prelude::*;
use softmanifold::embedding::{
    embed_from, geometry_order, graph_neighborhood_area, manifold_neighborhood_area, phi_star,
    project_to_ball, MAX_RADIUS,
};
use softmanifold::evaluation::{average_distortion, mean_average_precision};
use softmanifold::fluid_graph::{transition_probability, z_csch_z, DiffusionParams};
use softmanifold::soft_manifold::{change_of_variables, TransformState};
use softmanifold::*;

fn interior(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0f64..0.999).prop_map(|(v, r)| {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n == 0.0 {
            v
        } else {
            v.iter().map(|c| c / n * r).collect()
        }
    })
}

fn point_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..6).prop_flat_map(|d| (interior(d), interior(d)))
}

fn graph(n: usize, k: usize, seed: u64, transform: DistanceTransform) -> (FeatureMatrix, FluidGraph) {
    let fm = generate_synthetic(&SyntheticSpec {
        n_nodes: n,
        n_features: 3,
        n_classes: 2,
        noise: 0.2,
        seed,
    })
    .unwrap();
    let nb = knn_neighborhoods(&fm, k).unwrap();
    let kt = build_conductivity(&fm, &nb, 1.0).unwrap();
    let cfg = FluidConfig {
        transform,
        ..FluidConfig::default()
    };
    let fg = graph_distance_matrix(&fm, &kt, &nb, &cfg).unwrap();
    (fm, fg)
}

fn points(n: usize, dim: usize) -> impl Strategy<Value = Vec<ManifoldPoint>> {
    prop::collection::vec(interior(dim), n)
        .prop_map(|v| v.into_iter().map(|p| ManifoldPoint::new(p).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn semimetric_axioms((u, v) in point_pair()) {
        let d = semimetric_distance(&u, &v);
        prop_assert_eq!(d, semimetric_distance(&v, &u));
        prop_assert_eq!(semimetric_distance(&u, &u), 0.0);
        if u != v {
            prop_assert!(d > 0.0);
        }
        prop_assert!(d < 2f64.sqrt());
    }

    #[test]
    fn z_csch_z_decreasing(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(z_csch_z(hi) <= z_csch_z(lo));
        prop_assert!(z_csch_z(lo) <= 1.0);
        prop_assert_eq!(z_csch_z(-a), z_csch_z(a));
    }

    #[test]
    fn probability_in_unit_interval_and_monotone(
        v1 in -1.0f64..1.0, v2 in -1.0f64..1.0, vm in -1.0f64..1.0,
        bp in 1e-6f64..2.0, bm in 1e-6f64..2.0,
    ) {
        let p = |v: f64| transition_probability(&DiffusionParams::new(v, vm, bp, bm).unwrap()).unwrap();
        let (lo, hi) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
        prop_assert!(p(lo) > 0.0 && p(lo) < 1.0);
        prop_assert!(p(lo) <= p(hi));
    }

    #[test]
    fn equal_scaled_velocities_are_logistic(t in -5.0f64..5.0) {
        let p = transition_probability(&DiffusionParams::new(t, t, 0.5, 0.5).unwrap()).unwrap();
        prop_assert!((p - 1.0 / (1.0 + (-2.0 * t).exp())).abs() < 1e-12);
    }

    #[test]
    fn change_of_variables_lands_in_ball(
        x in prop::collection::vec(-5.0f64..5.0, 1..6), s in 0.0f64..3.0,
    ) {
        prop_assume!(s > 0.0 || x.iter().any(|c| *c != 0.0));
        let u = change_of_variables(&x, s).unwrap();
        prop_assert!(u.coords().iter().map(|c| c * c).sum::<f64>() < 1.0);
        let st = TransformState::new(x, s);
        prop_assert!(st.identity_residual().abs() < 1e-9 * (1.0 + st.y.abs()).powi(2));
    }

    #[test]
    fn projection_caps_radius(u in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        let p = project_to_ball(&u, MAX_RADIUS).unwrap();
        let r = p.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!(r <= MAX_RADIUS + 1e-15);
    }

    #[test]
    fn knn_is_permutation_equivariant(seed in 0u64..1000, k in 1usize..6, shift in 1usize..11) {
        let fm = generate_synthetic(&SyntheticSpec {
            n_nodes: 12, n_features: 3, n_classes: 3, noise: 0.3, seed,
        }).unwrap();
        let order: Vec<usize> = (0..12).map(|r| (r * 5 + shift) % 12).collect();
        let base = knn_neighborhoods(&fm, k).unwrap();
        let perm = knn_neighborhoods(&fm.permuted(&order), k).unwrap();
        let mut inv = [0; 12];
        for (r, &o) in order.iter().enumerate() {
            inv[o] = r;
        }
        for (r, &o) in order.iter().enumerate() {
            let mut want: Vec<usize> = base.neighbors(o).iter().map(|&j| inv[j]).collect();
            let mut got = perm.neighbors(r).to_vec();
            want.sort_unstable();
            got.sort_unstable();
            prop_assert_eq!(want, got);
        }
    }

    #[test]
    fn missing_mask_keeps_every_row(seed in 0u64..1000, f in 0.0f64..0.6) {
        let fm = generate_synthetic(&SyntheticSpec {
            n_nodes: 10, n_features: 4, n_classes: 2, noise: 0.1, seed: 1,
        }).unwrap();
        let m = apply_missing_mask(&fm, f, seed).unwrap();
        let removed = fm.observed_count() - m.observed_count();
        prop_assert_eq!(removed, (f * 40.0).floor() as usize);
        for i in 0..10 {
            prop_assert!(m.observed_row(i).iter().any(|&o| o));
        }
    }

    #[test]
    fn metric_ranges_and_coordinate_invariance(
        seed in 0u64..200, k in 1usize..7, pos in points(9, 3), swap in 0usize..3,
    ) {
        let (_, fg) = graph(9, k, seed, DistanceTransform::NegLog);
        let map = mean_average_precision(&pos, &fg.nbhd);
        let ad = average_distortion(&pos, &fg).value;
        prop_assert!((0.0..=1.0).contains(&map));
        prop_assert!(ad.is_finite() && ad >= 0.0);

        // Swapping coordinate axes preserves every semimetric value.
        let swapped: Vec<ManifoldPoint> = pos.iter().map(|p| {
            let mut c = p.coords().to_vec();
            c.swap(swap, (swap + 1) % 3);
            ManifoldPoint::new(c).unwrap()
        }).collect();
        prop_assert_eq!(map, mean_average_precision(&swapped, &fg.nbhd));
        prop_assert!((ad - average_distortion(&swapped, &fg).value).abs() < 1e-12);

        let ps = phi_star(&pos);
        for i in 0..9 {
            let a = graph_neighborhood_area(i, &fg);
            prop_assert!((0.0..=1.0).contains(&a));
            let m = manifold_neighborhood_area(i, &geometry_order(i, &fg), &pos, ps);
            prop_assert!(m >= 0.0 && m.is_finite());
        }
    }

    #[test]
    fn graph_distances_symmetric(seed in 0u64..200, k in 1usize..7) {
        let (_, fg) = graph(9, k, seed, DistanceTransform::Identity);
        for i in 0..9 {
            prop_assert_eq!(fg.d_g_sq(i, i), 0.0);
            for j in 0..9 {
                prop_assert_eq!(fg.d_g_sq(i, j), fg.d_g_sq(j, i));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Relabeling nodes permutes the optimization without changing losses.
    #[test]
    fn embedding_is_permutation_equivariant(seed in 0u64..100, pos in points(8, 3), shift in 1usize..8) {
        let (fm, fg) = graph(8, 3, seed, DistanceTransform::NegLog);
        let order: Vec<usize> = (0..8).map(|r| (r * 3 + shift) % 8).collect();
        let (_, fg_p) = {
            let fm_p = fm.permuted(&order);
            let nb = knn_neighborhoods(&fm_p, 3).unwrap();
            let kt = build_conductivity(&fm_p, &nb, 1.0).unwrap();
            let cfg = FluidConfig { transform: DistanceTransform::NegLog, ..FluidConfig::default() };
            (fm_p.clone(), graph_distance_matrix(&fm_p, &kt, &nb, &cfg).unwrap())
        };
        let cfg = EmbedConfig {
            dim: 3, lr: 1e-3, epochs: 15, gradient: GradientMode::Analytic, ..EmbedConfig::default()
        };
        let pos_p: Vec<ManifoldPoint> = order.iter().map(|&o| pos[o].clone()).collect();
        let a = embed_from(pos, &fg, &cfg).unwrap();
        let b = embed_from(pos_p, &fg_p, &cfg).unwrap();
        for (x, y) in a.loss_trace.iter().zip(&b.loss_trace) {
            prop_assert!((x.total - y.total).abs() <= 1e-8 * (1.0 + x.total.abs()), "{:?} vs {:?}", x, y);
        }
    }
}
