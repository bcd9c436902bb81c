//! Fluid-diffusion transition probabilities between neighboring samples and
//! the squared graph distances derived from them.
//!
//! Each materialized edge `j ∈ N(i)` gets a velocity `v_ij` (conductivity
//! weighted feature gap), a diffusion rate `B̃_ij` (observed-overlap fraction)
//! and from the pair `(v₊, B̃₊)` against the neighborhood average
//! `(v₋, B̃₋)` a transition probability `p_ij`. Off-neighborhood distances are
//! filled in by shortest paths over the edge metric.

use std::collections::BTreeMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ConductivityTensor, FeatureMatrix, Neighborhoods};
use crate::error::{Error, Result};

/// Floor added to every diffusion rate.
pub const DIFFUSION_FLOOR: f64 = 1e-6;

/// Below this magnitude `|z|·csch|z|` is replaced by its limit 1.
const CSCH_LIMIT_EPS: f64 = 1e-12;

type DirectedEdge = ((usize, usize), f64);

/// How a transition probability becomes a squared graph distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTransform {
    /// `d² = p`
    #[default]
    Identity,
    /// `d² = −ln p`
    NegLog,
}

impl DistanceTransform {
    pub fn apply(self, p: f64) -> f64 {
        match self {
            DistanceTransform::Identity => p,
            DistanceTransform::NegLog => -p.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceTransform::Identity => "identity",
            DistanceTransform::NegLog => "neg_log",
        }
    }
}

impl std::str::FromStr for DistanceTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(DistanceTransform::Identity),
            "neg_log" => Ok(DistanceTransform::NegLog),
            other => Err(Error::invalid(format!("unknown distance transform {other:?}"))),
        }
    }
}

/// Sign convention for edge velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySign {
    /// Nonnegative magnitude, `v_ij ∈ [0, base]`.
    #[default]
    Magnitude,
    /// Negated magnitude.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidConfig {
    /// Diffusion-rate scale `b0`.
    pub b0: f64,
    pub velocity_sign: VelocitySign,
    pub transform: DistanceTransform,
}

impl Default for FluidConfig {
    fn default() -> Self {
        FluidConfig {
            b0: 1.0,
            velocity_sign: VelocitySign::Magnitude,
            transform: DistanceTransform::Identity,
        }
    }
}

/// `‖K_ij: ⊙ (x_i − x_j)‖₂ / √m_ij` over mutually observed features, 0 when
/// the rows share none.
pub fn velocity(i: usize, j: usize, fm: &FeatureMatrix, k: &ConductivityTensor) -> Result<f64> {
    let kij = k.get(i, j).ok_or(Error::EdgeNotMaterialized { i, j })?;
    let (xi, xj) = (fm.row(i), fm.row(j));
    let (oi, oj) = (fm.observed_row(i), fm.observed_row(j));
    let mut sum = 0.0;
    let mut m = 0usize;
    for f in 0..fm.n_features() {
        if oi[f] && oj[f] {
            let t = kij[f] * (xi[f] - xj[f]);
            sum += t * t;
            m += 1;
        }
    }
    if m == 0 {
        return Ok(0.0);
    }
    Ok((sum / m as f64).sqrt())
}

/// `B̃_ij = b0 · m_ij / n + 10⁻⁶`.
pub fn diffusion_rate(i: usize, j: usize, fm: &FeatureMatrix, b0: f64) -> f64 {
    b0 * fm.mutual_observed(i, j) as f64 / fm.n_features() as f64 + DIFFUSION_FLOOR
}

/// Edge velocity against the neighborhood average, with matching rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    pub v_plus: f64,
    pub v_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
}

impl DiffusionParams {
    pub fn new(v_plus: f64, v_minus: f64, b_plus: f64, b_minus: f64) -> Result<Self> {
        if !(b_plus > 0.0 && b_minus > 0.0) {
            return Err(Error::invalid(format!(
                "diffusion rates must be positive, got {b_plus} and {b_minus}"
            )));
        }
        Ok(DiffusionParams {
            v_plus,
            v_minus,
            b_plus,
            b_minus,
        })
    }

    /// `(v₊†, v₋†) = (v₊ / 2B̃₊, v₋ / 2B̃₋)`.
    pub fn scaled(&self) -> (f64, f64) {
        (
            self.v_plus / (2.0 * self.b_plus),
            self.v_minus / (2.0 * self.b_minus),
        )
    }
}

/// Builds `(v₊, v₋, B̃₊, B̃₋)` for edge `j ∈ N(i)`. A single-neighbor node
/// falls back to `v₋ = v₊`, `B̃₋ = B̃₊`.
pub fn diffusion_params(
    i: usize,
    j: usize,
    fm: &FeatureMatrix,
    k: &ConductivityTensor,
    nbhd: &Neighborhoods,
    cfg: &FluidConfig,
) -> Result<DiffusionParams> {
    let nb = nbhd.neighbors(i);
    if !nb.contains(&j) {
        return Err(Error::EdgeNotMaterialized { i, j });
    }
    let signed = |v: f64| match cfg.velocity_sign {
        VelocitySign::Magnitude => v,
        VelocitySign::Negative => -v,
    };
    let v_plus = signed(velocity(i, j, fm, k)?);
    let b_plus = diffusion_rate(i, j, fm, cfg.b0);
    if nb.len() == 1 {
        return DiffusionParams::new(v_plus, v_plus, b_plus, b_plus);
    }
    let others = (nb.len() - 1) as f64;
    let mut v_sum = 0.0;
    let mut b_sum = 0.0;
    for &m in nb.iter().filter(|&&m| m != j) {
        v_sum += signed(velocity(i, m, fm, k)?);
        b_sum += diffusion_rate(i, m, fm, cfg.b0);
    }
    DiffusionParams::new(v_plus, v_sum / others, b_plus, b_sum / others)
}

/// `|z|·csch|z|`, equal to 1 at the origin and decreasing in `|z|`.
pub fn z_csch_z(z: f64) -> f64 {
    let a = z.abs();
    if a < CSCH_LIMIT_EPS {
        1.0
    } else {
        a / a.sinh()
    }
}

/// `ln(|z|·e^{z}·csch|z|) = ln 2|z| + min(2z, 0) − ln(1 − e^{−2|z|})`, finite
/// for every finite `z`.
fn log_weighted_term(z: f64) -> f64 {
    let a = z.abs();
    if a < CSCH_LIMIT_EPS {
        z
    } else {
        (2.0 * a).ln() + (2.0 * z).min(0.0) - (-(-2.0 * a).exp_m1()).ln()
    }
}

/// Closed-form fluid transition probability for one edge.
///
/// With `v±† = v± / 2B̃±` this is
/// `T(v₊†) / (T(v₊†) + T(−v₋†))`, `T(z) = |z| e^{z} csch|z|`, evaluated as a
/// logistic function of `ln T(v₊†) − ln T(−v₋†)`. The result is clamped
/// into the open unit interval.
pub fn transition_probability(dp: &DiffusionParams) -> Result<f64> {
    if !(dp.b_plus > 0.0 && dp.b_minus > 0.0) {
        return Err(Error::invalid("diffusion rates must be positive"));
    }
    let (vp, vm) = dp.scaled();
    let p = 1.0 / (1.0 + (log_weighted_term(-vm) - log_weighted_term(vp)).exp());
    if !p.is_finite() {
        return Err(Error::NonFinite {
            context: format!("transition probability (v+†={vp}, v-†={vm})"),
        });
    }
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Edge transition probabilities plus the completed squared-distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidGraph {
    pub n_nodes: usize,
    pub nbhd: Neighborhoods,
    /// Directed `p_ij` for `j ∈ N(i)`.
    pub p: BTreeMap<(usize, usize), f64>,
    /// Symmetric edge value `d_G²`, keyed by `(min, max)`.
    pub edge_d2: BTreeMap<(usize, usize), f64>,
    /// Dense row-major `N × N` squared graph distances; `+∞` across components.
    d_g_sq: Vec<f64>,
    pub d_g_star: f64,
    pub transform: DistanceTransform,
    /// Component id per node: smallest node index in its component.
    pub components: Vec<usize>,
}

impl FluidGraph {
    /// Assembles a graph from directed edge probabilities. The undirected
    /// edge value averages `t(p_ij)` and `t(p_ji)` when both exist.
    pub fn assemble(
        nbhd: Neighborhoods,
        p: BTreeMap<(usize, usize), f64>,
        transform: DistanceTransform,
    ) -> Result<Self> {
        let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for (&(i, j), &pij) in &p {
            if !(pij > 0.0 && pij < 1.0) {
                return Err(Error::invalid(format!(
                    "transition probability p[{i},{j}] = {pij} outside (0, 1)"
                )));
            }
            let key = (i.min(j), i.max(j));
            let e = acc.entry(key).or_insert((0.0, 0));
            e.0 += transform.apply(pij);
            e.1 += 1;
        }
        let edge_d2: BTreeMap<(usize, usize), f64> = acc
            .into_iter()
            .map(|(k, (s, c))| (k, s / c as f64))
            .collect();
        Self::from_edge_distances(nbhd, p, edge_d2, transform)
    }

    fn from_edge_distances(
        nbhd: Neighborhoods,
        p: BTreeMap<(usize, usize), f64>,
        edge_d2: BTreeMap<(usize, usize), f64>,
        transform: DistanceTransform,
    ) -> Result<Self> {
        let n = nbhd.n_nodes();
        let d_g_sq = shortest_path_completion(n, &edge_d2)?;
        let mut components = vec![usize::MAX; n];
        for i in 0..n {
            if components[i] == usize::MAX {
                for j in i..n {
                    if d_g_sq[i * n + j].is_finite() {
                        components[j] = i;
                    }
                }
            }
        }
        let n_comp = components
            .iter()
            .enumerate()
            .filter(|(i, &c)| *i == c)
            .count();
        if n_comp > 1 {
            log::warn!(
                "fluid graph has {n_comp} connected components; cross-component pairs carry no distance"
            );
        }
        let d_g_star = d_g_sq
            .iter()
            .filter(|d| d.is_finite())
            .fold(0.0f64, |m, &d| m.max(d.sqrt()));
        Ok(FluidGraph {
            n_nodes: n,
            nbhd,
            p,
            edge_d2,
            d_g_sq,
            d_g_star,
            transform,
            components,
        })
    }

    pub fn d_g_sq(&self, i: usize, j: usize) -> f64 {
        self.d_g_sq[i * self.n_nodes + j]
    }

    pub fn d_g(&self, i: usize, j: usize) -> f64 {
        self.d_g_sq(i, j).sqrt()
    }

    pub fn is_connected_pair(&self, i: usize, j: usize) -> bool {
        self.components[i] == self.components[j]
    }

    pub fn n_components(&self) -> usize {
        self.components
            .iter()
            .enumerate()
            .filter(|(i, &c)| *i == c)
            .count()
    }

    pub fn to_record(&self) -> FluidGraphRecord {
        let mut edges = Vec::with_capacity(self.p.len());
        for (i, nb) in self.nbhd.adjacency.iter().enumerate() {
            for &j in nb {
                edges.push(EdgeRecord {
                    i,
                    j,
                    p: self.p[&(i, j)],
                    d2: self.edge_d2[&(i.min(j), i.max(j))],
                });
            }
        }
        FluidGraphRecord {
            n: self.n_nodes,
            edges,
            d_star: self.d_g_star,
            transform: self.transform.as_str().to_string(),
        }
    }

    /// Rebuilds a graph from its serialized form. Neighbor order follows the
    /// order edges appear in the record.
    pub fn from_record(rec: &FluidGraphRecord) -> Result<Self> {
        let transform: DistanceTransform = rec.transform.parse()?;
        let mut adjacency = vec![Vec::new(); rec.n];
        let mut p = BTreeMap::new();
        let mut edge_d2 = BTreeMap::new();
        for e in &rec.edges {
            if e.i >= rec.n || e.j >= rec.n || e.i == e.j {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({}, {}) invalid for {} nodes",
                    e.i, e.j, rec.n
                )));
            }
            adjacency[e.i].push(e.j);
            p.insert((e.i, e.j), e.p);
            edge_d2.insert((e.i.min(e.j), e.i.max(e.j)), e.d2);
        }
        let k = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Self::from_edge_distances(Neighborhoods { adjacency, k }, p, edge_d2, transform)
    }
}

/// Completes edge-level squared distances into a dense matrix. Edges keep
/// their own value; other pairs get the squared shortest-path length over
/// edge weights `√d²`.
pub fn shortest_path_completion(
    n: usize,
    edge_d2: &BTreeMap<(usize, usize), f64>,
) -> Result<Vec<f64>> {
    let mut g: UnGraph<(), f64> = UnGraph::with_capacity(n, edge_d2.len());
    for _ in 0..n {
        g.add_node(());
    }
    for (&(i, j), &d2) in edge_d2 {
        if !(d2 >= 0.0 && d2.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("edge distance d2[{i},{j}] = {d2}"),
            });
        }
        g.add_edge(NodeIndex::new(i), NodeIndex::new(j), d2.sqrt());
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut row = vec![f64::INFINITY; n];
            for (node, d) in dijkstra(&g, NodeIndex::new(s), None, |e| *e.weight()) {
                row[node.index()] = d * d;
            }
            row[s] = 0.0;
            row
        })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for row in rows {
        out.extend(row);
    }
    // Path sums accumulate in different orders from each end; keep the
    // upper triangle so the matrix is exactly symmetric.
    for i in 0..n {
        for j in (i + 1)..n {
            out[j * n + i] = out[i * n + j];
        }
    }
    for (&(i, j), &d2) in edge_d2 {
        out[i * n + j] = d2;
        out[j * n + i] = d2;
    }
    Ok(out)
}

/// Transition probabilities on every materialized edge, then distance
/// completion.
pub fn graph_distance_matrix(
    fm: &FeatureMatrix,
    k: &ConductivityTensor,
    nbhd: &Neighborhoods,
    cfg: &FluidConfig,
) -> Result<FluidGraph> {
    if !(cfg.b0 > 0.0 && cfg.b0.is_finite()) {
        return Err(Error::invalid(format!("b0 must be > 0, got {}", cfg.b0)));
    }
    let per_node: Vec<Result<Vec<DirectedEdge>>> = (0..nbhd.n_nodes())
        .into_par_iter()
        .map(|i| {
            nbhd.neighbors(i)
                .iter()
                .map(|&j| {
                    let dp = diffusion_params(i, j, fm, k, nbhd, cfg)?;
                    Ok(((i, j), transition_probability(&dp)?))
                })
                .collect()
        })
        .collect();
    let mut p = BTreeMap::new();
    for r in per_node {
        p.extend(r?);
    }
    FluidGraph::assemble(nbhd.clone(), p, cfg.transform)
}

/// Serialized form of a [`FluidGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidGraphRecord {
    pub n: usize,
    pub edges: Vec<EdgeRecord>,
    pub d_star: f64,
    pub transform: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub p: f64,
    pub d2: f64,
}
