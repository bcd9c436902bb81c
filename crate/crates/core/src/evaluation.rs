//! Embedding quality metrics and the missing-data experiment grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_missing_mask, build_conductivity, knn_neighborhoods, FeatureMatrix, Neighborhoods,
};
use crate::embedding::{embed, EmbedConfig};
use crate::error::{Error, Result};
use crate::fluid_graph::{graph_distance_matrix, FluidConfig, FluidGraph};
use crate::soft_manifold::{semimetric_distance, ManifoldPoint};

/// Per-node average precision of neighborhood recovery.
///
/// `AP_i = (1/|N(i)|) Σ_{j∈N(i)} |N(i) ∩ R_ij| / |R_ij|`, where `R_ij` holds
/// every `z ≠ i` with `d_S(u_i, u_z) ≤ d_S(u_i, u_j)`. Nodes without
/// neighbors get `None`.
pub fn per_node_average_precision(
    positions: &[ManifoldPoint],
    nbhd: &Neighborhoods,
) -> Vec<Option<f64>> {
    (0..positions.len())
        .into_par_iter()
        .map(|i| {
            let nb = nbhd.neighbors(i);
            if nb.is_empty() {
                return None;
            }
            let ui = positions[i].coords();
            let d: Vec<f64> = positions
                .iter()
                .map(|p| semimetric_distance(ui, p.coords()))
                .collect();
            let mut ap = 0.0;
            for &j in nb {
                let (mut hits, mut ranked) = (0usize, 0usize);
                for z in 0..positions.len() {
                    if z != i && d[z] <= d[j] {
                        ranked += 1;
                        if nbhd.contains(i, z) {
                            hits += 1;
                        }
                    }
                }
                ap += hits as f64 / ranked as f64;
            }
            Some(ap / nb.len() as f64)
        })
        .collect()
}

/// Mean of [`per_node_average_precision`] over nodes with neighbors.
pub fn mean_average_precision(positions: &[ManifoldPoint], nbhd: &Neighborhoods) -> f64 {
    let ap: Vec<f64> = per_node_average_precision(positions, nbhd)
        .into_iter()
        .flatten()
        .collect();
    if ap.is_empty() {
        return 0.0;
    }
    ap.iter().sum::<f64>() / ap.len() as f64
}

/// Average distortion with the number of pairs it covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub value: f64,
    pub pairs: usize,
    pub excluded: usize,
}

/// `mean_{i<j} |1 − d_S(u_i, u_j) / d_G(i, j)|`.
///
/// Pairs with zero or infinite `d_G` are excluded and the mean is taken
/// over the rest.
pub fn average_distortion(positions: &[ManifoldPoint], fg: &FluidGraph) -> Distortion {
    let n = positions.len();
    let rows: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut sum, mut used, mut skipped) = (0.0, 0, 0);
            for j in (i + 1)..n {
                let dg = fg.d_g(i, j);
                if !(dg > 0.0 && dg.is_finite()) {
                    skipped += 1;
                    continue;
                }
                let ds = semimetric_distance(positions[i].coords(), positions[j].coords());
                sum += (1.0 - ds / dg).abs();
                used += 1;
            }
            (sum, used, skipped)
        })
        .collect();
    let (sum, pairs, excluded) = rows
        .iter()
        .fold((0.0, 0, 0), |(s, u, x), r| (s + r.0, u + r.1, x + r.2));
    if excluded > 0 {
        log::warn!("average distortion: {excluded} pairs with zero or infinite d_G excluded");
    }
    Distortion {
        value: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
        pairs,
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map_score: f64,
    pub ad_score: f64,
    pub per_node_ap: Vec<f64>,
}

pub fn evaluate(positions: &[ManifoldPoint], fg: &FluidGraph) -> EvalReport {
    let per_node_ap: Vec<f64> = per_node_average_precision(positions, &fg.nbhd)
        .into_iter()
        .flatten()
        .collect();
    let map_score = if per_node_ap.is_empty() {
        0.0
    } else {
        per_node_ap.iter().sum::<f64>() / per_node_ap.len() as f64
    };
    EvalReport {
        map_score,
        ad_score: average_distortion(positions, fg).value,
        per_node_ap,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// Share of held-out nodes predicted correctly; `None` when nothing was
    /// held out or no truth was supplied.
    pub accuracy: Option<f64>,
}

/// k-NN majority vote under `d_S` for every node with `train[i] == None`.
///
/// Ties go to the label with the smallest summed distance, then the
/// smallest label id. Labeled nodes keep their label.
pub fn predict_labels(
    positions: &[ManifoldPoint],
    train: &[Option<usize>],
    truth: Option<&[usize]>,
    k_vote: usize,
) -> Result<Prediction> {
    if k_vote == 0 {
        return Err(Error::invalid("k_vote must be >= 1"));
    }
    if train.len() != positions.len() || truth.is_some_and(|t| t.len() != positions.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{} positions, {} training labels",
            positions.len(),
            train.len()
        )));
    }
    let labeled: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledNodes);
    }
    let labels: Vec<usize> = (0..positions.len())
        .into_par_iter()
        .map(|i| {
            if let Some(l) = train[i] {
                return l;
            }
            let mut near: Vec<(f64, usize, usize)> = labeled
                .iter()
                .map(|&(j, l)| (semimetric_distance(positions[i].coords(), positions[j].coords()), j, l))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k_vote);
            // (votes, summed distance) per label.
            let mut tally: Vec<(usize, usize, f64)> = Vec::new();
            for &(d, _, l) in &near {
                match tally.iter_mut().find(|t| t.0 == l) {
                    Some(t) => {
                        t.1 += 1;
                        t.2 += d;
                    }
                    None => tally.push((l, 1, d)),
                }
            }
            tally
                .into_iter()
                .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
                .map(|t| t.0)
                .unwrap_or(labeled[0].1)
        })
        .collect();
    let accuracy = truth.and_then(|t| {
        let held: Vec<usize> = (0..train.len()).filter(|&i| train[i].is_none()).collect();
        if held.is_empty() {
            return None;
        }
        let correct = held.iter().filter(|&&i| labels[i] == t[i]).count();
        Some(correct as f64 / held.len() as f64)
    });
    Ok(Prediction { labels, accuracy })
}

/// Hides `floor(fraction · N)` labels, chosen by a seeded shuffle, always
/// leaving at least one labeled node.
pub fn holdout_labels(labels: &[usize], fraction: f64, seed: u64) -> Result<Vec<Option<usize>>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "holdout fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let n = labels.len();
    let hide = ((fraction * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
    for &i in order.iter().take(hide) {
        out[i] = None;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub missing_fractions: Vec<f64>,
    #[serde(default = "default_holdout")]
    pub holdout_fractions: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_holdout() -> Vec<f64> {
    vec![0.0]
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.missing_fractions.is_empty() || self.holdout_fractions.is_empty() {
            return Err(Error::invalid("experiment grid needs at least one fraction per axis"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("experiment grid needs trials >= 1"));
        }
        for &f in self.missing_fractions.iter().chain(&self.holdout_fractions) {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("fraction {f} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Seed of one grid cell and trial.
    pub fn cell_seed(&self, missing_index: usize, holdout_index: usize, trial: usize) -> u64 {
        let mut h = splitmix64(self.base_seed);
        for x in [missing_index, holdout_index, trial] {
            h = splitmix64(h ^ x as u64);
        }
        h
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything held fixed across grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBase {
    pub k: usize,
    pub base_conductivity: f64,
    pub fluid: FluidConfig,
    pub embed: EmbedConfig,
    pub k_vote: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub missing_fraction: f64,
    pub holdout_fraction: f64,
    pub trial: usize,
    pub map: Option<f64>,
    pub ad: Option<f64>,
    pub accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub epochs: usize,
    pub status: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub missing_index: usize,
    pub holdout_index: usize,
    pub missing_fraction: f64,
    pub holdout_fraction: f64,
    pub trials_ok: usize,
    pub map_mean: Option<f64>,
    pub map_var: Option<f64>,
    pub ad_mean: Option<f64>,
    pub ad_var: Option<f64>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_var: Option<f64>,
    pub final_loss_mean: Option<f64>,
    pub final_loss_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

struct CellOutcome {
    map: f64,
    ad: f64,
    accuracy: Option<f64>,
    final_loss: f64,
    epochs: usize,
}

/// Runs every `(missing fraction, holdout fraction, trial)` cell.
///
/// Each cell masks the clean features, rebuilds the neighborhoods and fluid
/// graph from the masked data, embeds, and scores the embedding against the
/// graph built from the clean data. Failed cells are reported through the
/// `status` column.
pub fn run_experiment(
    clean: &FeatureMatrix,
    grid: &ExperimentGrid,
    base: &ExperimentBase,
) -> Result<ExperimentResults> {
    grid.validate()?;
    let reference = build_graph(clean, base)?;

    let mut cells = Vec::new();
    for (fi, &f) in grid.missing_fractions.iter().enumerate() {
        for (hi, &h) in grid.holdout_fractions.iter().enumerate() {
            for t in 0..grid.trials {
                cells.push((fi, f, hi, h, t, grid.cell_seed(fi, hi, t)));
            }
        }
    }
    let rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(_, f, _, h, t, seed)| {
            let outcome = run_cell(clean, &reference, base, f, h, seed);
            match outcome {
                Ok(o) => ResultRow {
                    missing_fraction: f,
                    holdout_fraction: h,
                    trial: t,
                    map: Some(o.map),
                    ad: Some(o.ad),
                    accuracy: o.accuracy,
                    final_loss: Some(o.final_loss),
                    epochs: o.epochs,
                    status: "ok".into(),
                    seed,
                },
                Err(e) => {
                    log::warn!("cell missing={f} holdout={h} trial={t} failed: {e}");
                    ResultRow {
                        missing_fraction: f,
                        holdout_fraction: h,
                        trial: t,
                        map: None,
                        ad: None,
                        accuracy: None,
                        final_loss: None,
                        epochs: 0,
                        status: format!("error: {e}"),
                        seed,
                    }
                }
            }
        })
        .collect();

    let mut aggregates = Vec::new();
    for (fi, &f) in grid.missing_fractions.iter().enumerate() {
        for (hi, &h) in grid.holdout_fractions.iter().enumerate() {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .zip(&cells)
                .filter(|(_, c)| c.0 == fi && c.2 == hi)
                .map(|(r, _)| r)
                .filter(|r| r.status == "ok")
                .collect();
            let stat = |get: fn(&ResultRow) -> Option<f64>| {
                mean_var(&cell.iter().filter_map(|r| get(r)).collect::<Vec<_>>())
            };
            let (map_mean, map_var) = stat(|r| r.map);
            let (ad_mean, ad_var) = stat(|r| r.ad);
            let (accuracy_mean, accuracy_var) = stat(|r| r.accuracy);
            let (final_loss_mean, final_loss_var) = stat(|r| r.final_loss);
            aggregates.push(AggregateRow {
                missing_index: fi,
                holdout_index: hi,
                missing_fraction: f,
                holdout_fraction: h,
                trials_ok: cell.len(),
                map_mean,
                map_var,
                ad_mean,
                ad_var,
                accuracy_mean,
                accuracy_var,
                final_loss_mean,
                final_loss_var,
            });
        }
    }
    Ok(ExperimentResults { rows, aggregates })
}

/// Mean and sample variance (0 for a single value).
pub fn mean_var(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (Some(mean), Some(var))
}

fn build_graph(fm: &FeatureMatrix, base: &ExperimentBase) -> Result<FluidGraph> {
    let nbhd = knn_neighborhoods(fm, base.k)?;
    let k = build_conductivity(fm, &nbhd, base.base_conductivity)?;
    graph_distance_matrix(fm, &k, &nbhd, &base.fluid)
}

fn run_cell(
    clean: &FeatureMatrix,
    reference: &FluidGraph,
    base: &ExperimentBase,
    missing: f64,
    holdout: f64,
    seed: u64,
) -> Result<CellOutcome> {
    let masked = if missing > 0.0 {
        apply_missing_mask(clean, missing, seed)?
    } else {
        clean.clone()
    };
    let fg = build_graph(&masked, base)?;
    let cfg = EmbedConfig {
        seed,
        ..base.embed
    };
    let state = embed(&masked, &fg, &cfg)?;
    let accuracy = match clean.labels() {
        Some(truth) if holdout > 0.0 => {
            let train = holdout_labels(truth, holdout, seed)?;
            predict_labels(&state.positions, &train, Some(truth), base.k_vote)?.accuracy
        }
        _ => None,
    };
    Ok(CellOutcome {
        map: mean_average_precision(&state.positions, &reference.nbhd),
        ad: average_distortion(&state.positions, reference).value,
        accuracy,
        final_loss: state.final_loss().unwrap_or(f64::NAN),
        epochs: state.epoch,
    })
}
