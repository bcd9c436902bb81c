//! Graph embedding on a soft manifold: fluid-diffusion graph distances,
//! a semimetric on the open unit ball, and the loss that ties them together.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod fluid_graph;
pub mod soft_manifold;

pub use dataset::{
    apply_missing_mask, build_conductivity, generate_synthetic, knn_neighborhoods, load_csv,
    ConductivityTensor, CsvOptions, FeatureMatrix, Neighborhoods, SyntheticSpec,
};
pub use embedding::{
    embed, embed_from, EmbedConfig, EmbeddingRecord, EmbeddingState, GradientMode, Init,
    LossRecord, PairScope,
};
pub use error::{Error, Result};
pub use evaluation::{
    average_distortion, mean_average_precision, predict_labels, run_experiment, EvalReport,
    ExperimentBase, ExperimentGrid, ExperimentResults,
};
pub use fluid_graph::{
    graph_distance_matrix, DistanceTransform, FluidConfig, FluidGraph, FluidGraphRecord,
    VelocitySign,
};
pub use soft_manifold::{semimetric_distance, ManifoldPoint};
