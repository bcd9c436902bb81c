use std::io::Write;

use softmanifold::evaluation::{average_distortion, evaluate, mean_average_precision};
use softmanifold::*;

fn write_csv(rows: &[&str]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for r in rows {
        writeln!(f, "{r}").unwrap();
    }
    f
}

#[test]
fn csv_with_gaps_runs_end_to_end() {
    let f = write_csv(&[
        "a,b,c,label",
        "0.10,0.20,,0",
        "0.12,,0.31,0",
        "0.09,0.22,0.29,0",
        "0.90,0.80,0.70,1",
        ",0.82,0.71,1",
        "0.88,0.79,,1",
    ]);
    let fm = load_csv(
        f.path(),
        CsvOptions {
            has_header: true,
            has_labels: true,
        },
    )
    .unwrap();
    assert_eq!(fm.n_rows(), 6);
    assert_eq!(fm.n_features(), 3);
    assert_eq!(fm.observed_count(), 14);

    let nb = knn_neighborhoods(&fm, 2).unwrap();
    let kt = build_conductivity(&fm, &nb, 1.0).unwrap();
    let fg = graph_distance_matrix(&fm, &kt, &nb, &FluidConfig::default()).unwrap();
    let cfg = EmbedConfig {
        dim: 3,
        epochs: 50,
        lr: 1e-3,
        ..EmbedConfig::default()
    };
    let state = embed(&fm, &fg, &cfg).unwrap();
    assert_eq!(state.loss_trace.len(), 51);

    let report = evaluate(&state.positions, &fg);
    assert_eq!(report.map_score, mean_average_precision(&state.positions, &fg.nbhd));
    assert_eq!(report.ad_score, average_distortion(&state.positions, &fg).value);
    assert!((0.0..=1.0).contains(&report.map_score));

    let labels = fm.labels().unwrap();
    let train: Vec<Option<usize>> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (i % 3 != 0).then_some(l))
        .collect();
    let pred = predict_labels(&state.positions, &train, Some(labels), 1).unwrap();
    assert!(pred.accuracy.is_some());
}

#[test]
fn records_round_trip_through_json() {
    let fm = generate_synthetic(&SyntheticSpec {
        n_nodes: 15,
        n_features: 3,
        n_classes: 3,
        noise: 0.05,
        seed: 3,
    })
    .unwrap();
    let nb = knn_neighborhoods(&fm, 6).unwrap();
    let kt = build_conductivity(&fm, &nb, 1.0).unwrap();
    let fg = graph_distance_matrix(&fm, &kt, &nb, &FluidConfig::default()).unwrap();
    let json = serde_json::to_string(&fg.to_record()).unwrap();
    let back = FluidGraph::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
    for i in 0..15 {
        for j in 0..15 {
            assert_eq!(back.d_g_sq(i, j), fg.d_g_sq(i, j));
        }
    }
    assert_eq!(back.d_g_star, fg.d_g_star);

    let state = embed(
        &fm,
        &fg,
        &EmbedConfig {
            dim: 3,
            epochs: 5,
            ..EmbedConfig::default()
        },
    )
    .unwrap();
    let json = serde_json::to_string(&state.to_record()).unwrap();
    let rec: EmbeddingRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(EmbeddingState::from_record(&rec).unwrap(), state);
}

#[test]
fn missing_csv_is_an_io_error() {
    let err = load_csv("/nonexistent/input.csv", CsvOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
