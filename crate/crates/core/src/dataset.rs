//! Feature ingestion with explicit missingness, synthetic benchmarks, and the
//! graph scaffolding (neighborhoods, conductivities) built on top of them.
//!
//! Missing entries are carried by a boolean mask. Nothing in this module ever
//! fills a missing value in; stored values behind a `false` mask bit are
//! placeholders and are never read by the distance or conductivity code.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense `N × n` feature table with a per-entry observation mask.
///
/// Observed values are min–max scaled per feature to `[0, 1]` at
/// construction, using observed entries only. A constant column maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_features: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
    row_ids: Vec<String>,
    labels: Option<Vec<usize>>,
}

impl FeatureMatrix {
    /// Builds a matrix from raw (unscaled) row-major values and mask.
    pub fn new(
        n_features: usize,
        values: Vec<f64>,
        observed: Vec<bool>,
        row_ids: Vec<String>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("feature matrix needs at least one feature"));
        }
        if values.len() != observed.len() || !values.len().is_multiple_of(n_features) {
            return Err(Error::DimensionMismatch(format!(
                "{} values / {} mask entries do not tile {} features",
                values.len(),
                observed.len(),
                n_features
            )));
        }
        let n_rows = values.len() / n_features;
        if row_ids.len() != n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                n_rows
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n_rows {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    n_rows
                )));
            }
        }
        let mut fm = FeatureMatrix {
            n_rows,
            n_features,
            values,
            observed,
            row_ids,
            labels,
        };
        for i in 0..n_rows {
            for f in 0..n_features {
                let idx = i * n_features + f;
                if fm.observed[idx] {
                    if !fm.values[idx].is_finite() {
                        return Err(Error::NonNumeric {
                            row: i,
                            column: f,
                            value: fm.values[idx].to_string(),
                        });
                    }
                } else {
                    fm.values[idx] = 0.0;
                }
            }
            if !fm.observed_row(i).iter().any(|&o| o) {
                return Err(Error::AllMissingRow { row: i });
            }
        }
        fm.min_max_scale();
        Ok(fm)
    }

    fn min_max_scale(&mut self) {
        for f in 0..self.n_features {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..self.n_rows {
                let idx = i * self.n_features + f;
                if self.observed[idx] {
                    lo = lo.min(self.values[idx]);
                    hi = hi.max(self.values[idx]);
                }
            }
            let range = hi - lo;
            for i in 0..self.n_rows {
                let idx = i * self.n_features + f;
                if self.observed[idx] {
                    self.values[idx] = if range > 0.0 {
                        ((self.values[idx] - lo) / range).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn observed_row(&self, i: usize) -> &[bool] {
        &self.observed[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn is_observed(&self, i: usize, f: usize) -> bool {
        self.observed[i * self.n_features + f]
    }

    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.n_features + f]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    /// Number of features observed at both `i` and `j`.
    pub fn mutual_observed(&self, i: usize, j: usize) -> usize {
        self.observed_row(i)
            .iter()
            .zip(self.observed_row(j))
            .filter(|(a, b)| **a && **b)
            .count()
    }

    /// Overlap-normalized Euclidean distance over mutually observed features,
    /// `+∞` when the rows share none.
    pub fn masked_distance(&self, i: usize, j: usize) -> f64 {
        let (xi, xj) = (self.row(i), self.row(j));
        let (oi, oj) = (self.observed_row(i), self.observed_row(j));
        let mut sum = 0.0;
        let mut m = 0usize;
        for f in 0..self.n_features {
            if oi[f] && oj[f] {
                let d = xi[f] - xj[f];
                sum += d * d;
                m += 1;
            }
        }
        if m == 0 {
            f64::INFINITY
        } else {
            (sum / m as f64).sqrt()
        }
    }

    /// Column means over observed entries. Used only to seed initial
    /// positions; never fed back into distances or losses.
    pub fn observed_column_means(&self) -> Vec<f64> {
        (0..self.n_features)
            .map(|f| {
                let (sum, cnt) = (0..self.n_rows)
                    .filter(|&i| self.is_observed(i, f))
                    .fold((0.0, 0usize), |(s, c), i| (s + self.value(i, f), c + 1));
                if cnt == 0 {
                    0.0
                } else {
                    sum / cnt as f64
                }
            })
            .collect()
    }

    /// Returns a copy with rows reordered so that new row `r` is old row
    /// `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> FeatureMatrix {
        let n = self.n_features;
        let mut values = Vec::with_capacity(self.values.len());
        let mut observed = Vec::with_capacity(self.observed.len());
        for &o in order {
            values.extend_from_slice(&self.values[o * n..(o + 1) * n]);
            observed.extend_from_slice(&self.observed[o * n..(o + 1) * n]);
        }
        FeatureMatrix {
            n_rows: order.len(),
            n_features: n,
            values,
            observed,
            row_ids: order.iter().map(|&o| self.row_ids[o].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|&o| l[o]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Last column carries the class label.
    pub has_labels: bool,
}

/// Loads a comma-separated feature table. Empty cells are missing.
///
/// Label strings are mapped to class ids in order of first appearance,
/// unless every label parses as a non-negative integer, in which case the
/// integer is used directly.
pub fn load_csv(path: impl AsRef<Path>, opts: CsvOptions) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, opts)
}

/// Same as [`load_csv`], from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: CsvOptions) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut n_rows = 0usize;

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::ColumnMismatch {
                row,
                expected,
                found: rec.len(),
            });
        }
        let n_feat = if opts.has_labels {
            expected.saturating_sub(1)
        } else {
            expected
        };
        if n_feat == 0 {
            return Err(Error::invalid("csv has no feature columns"));
        }
        for (column, cell) in rec.iter().take(n_feat).enumerate() {
            if cell.is_empty() {
                values.push(0.0);
                observed.push(false);
            } else {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        row,
                        column,
                        value: cell.to_string(),
                    })?;
                values.push(v);
                observed.push(true);
            }
        }
        if opts.has_labels {
            let lab = rec.get(n_feat).unwrap_or("");
            if lab.is_empty() {
                return Err(Error::MissingLabel { row });
            }
            raw_labels.push(lab.to_string());
        }
        n_rows += 1;
    }
    let n_features = match width {
        Some(w) if opts.has_labels => w - 1,
        Some(w) => w,
        None => return Err(Error::invalid("csv contains no data rows")),
    };

    let labels = opts.has_labels.then(|| encode_labels(&raw_labels));
    let row_ids = (0..n_rows).map(|i| i.to_string()).collect();
    FeatureMatrix::new(n_features, values, observed, row_ids, labels)
}

fn encode_labels(raw: &[String]) -> Vec<usize> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect() {
        return ints;
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut next = 0;
    raw.iter()
        .map(|s| {
            *ids.entry(s.as_str()).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Hides `⌊fraction · observed⌋` additional entries, never emptying a row.
///
/// Observed entries are visited in a seeded random order and dropped while
/// their row keeps at least one other observed feature.
pub fn apply_missing_mask(fm: &FeatureMatrix, fraction: f64, seed: u64) -> Result<FeatureMatrix> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "missing fraction {fraction} outside [0, 1)"
        )));
    }
    let total = fm.observed_count();
    let requested = (fraction * total as f64).floor() as usize;
    let available = total - fm.n_rows;
    if requested > available {
        return Err(Error::MaskUnsatisfiable {
            requested,
            available,
        });
    }
    let mut out = fm.clone();
    if requested == 0 {
        return Ok(out);
    }

    let mut candidates: Vec<usize> = (0..fm.observed.len()).filter(|&k| fm.observed[k]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    let mut per_row: Vec<usize> = (0..fm.n_rows)
        .map(|i| fm.observed_row(i).iter().filter(|&&o| o).count())
        .collect();
    let mut removed = 0;
    for k in candidates {
        if removed == requested {
            break;
        }
        let row = k / fm.n_features;
        if per_row[row] > 1 {
            per_row[row] -= 1;
            out.observed[k] = false;
            out.values[k] = 0.0;
            removed += 1;
        }
    }
    debug_assert_eq!(removed, requested);
    Ok(out)
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Gaussian blobs: class centroids uniform on the unit cube, each row its
/// centroid plus `noise`-scaled standard normal jitter. Row `i` belongs to
/// class `i mod n_classes`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureMatrix> {
    let SyntheticSpec {
        n_nodes,
        n_features,
        n_classes,
        noise,
        seed,
    } = *spec;
    if n_classes == 0 || n_classes > n_nodes {
        return Err(Error::invalid(format!(
            "need 1 <= n_classes <= n_nodes, got {n_classes} classes for {n_nodes} nodes"
        )));
    }
    if n_features == 0 {
        return Err(Error::invalid("n_features must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..n_features).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut values = Vec::with_capacity(n_nodes * n_features);
    let mut labels = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let c = i % n_classes;
        for f in 0..n_features {
            let z: f64 = rng.sample(StandardNormal);
            values.push(centroids[c][f] + noise * z);
        }
        labels.push(c);
    }
    FeatureMatrix::new(
        n_features,
        values,
        vec![true; n_nodes * n_features],
        (0..n_nodes).map(|i| i.to_string()).collect(),
        Some(labels),
    )
}

/// Ordered neighbor lists, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhoods {
    pub adjacency: Vec<Vec<usize>>,
    pub k: usize,
}

impl Neighborhoods {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(&j)
    }

    /// `rev[j]` lists every `i` with `j ∈ N(i)`, ascending.
    pub fn reverse(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.n_nodes()];
        for (i, nb) in self.adjacency.iter().enumerate() {
            for &j in nb {
                rev[j].push(i);
            }
        }
        rev
    }
}

/// `k` nearest rows under [`FeatureMatrix::masked_distance`], ties by index.
/// Rows with fewer than `k` finite-distance peers get a truncated list.
pub fn knn_neighborhoods(fm: &FeatureMatrix, k: usize) -> Result<Neighborhoods> {
    let n = fm.n_rows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("need 1 <= k < N, got k={k}, N={n}")));
    }
    let adjacency: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (fm.masked_distance(i, j), j))
                .filter(|(d, _)| d.is_finite())
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    for (i, nb) in adjacency.iter().enumerate() {
        if nb.len() < k {
            log::warn!(
                "node {i}: only {} finite-distance peers, neighborhood truncated",
                nb.len()
            );
        }
    }
    Ok(Neighborhoods { adjacency, k })
}

/// Per-edge, per-feature conductivities over materialized edges `j ∈ N(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityTensor {
    entries: BTreeMap<(usize, usize), Vec<f64>>,
    pub symmetric: bool,
}

impl ConductivityTensor {
    /// Looks up `K_ij:`, falling back to `K_ji:` for a symmetric tensor.
    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.entries
            .get(&(i, j))
            .or_else(|| {
                if self.symmetric {
                    self.entries.get(&(j, i))
                } else {
                    None
                }
            })
            .map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `K_ij:[f] = base` where `f` is observed at both ends, 0 otherwise.
pub fn build_conductivity(
    fm: &FeatureMatrix,
    nbhd: &Neighborhoods,
    base: f64,
) -> Result<ConductivityTensor> {
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::invalid(format!(
            "base conductivity must be > 0, got {base}"
        )));
    }
    let mut entries = BTreeMap::new();
    for (i, nb) in nbhd.adjacency.iter().enumerate() {
        for &j in nb {
            let k: Vec<f64> = fm
                .observed_row(i)
                .iter()
                .zip(fm.observed_row(j))
                .map(|(&a, &b)| if a && b { base } else { 0.0 })
                .collect();
            entries.insert((i, j), k);
        }
    }
    Ok(ConductivityTensor {
        entries,
        symmetric: true,
    })
}
