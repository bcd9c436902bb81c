//! Graph embedding on the soft manifold.
//!
//! The objective is `L = L_d + κ·L_g`:
//!
//! * `L_d = Σ |d_S²(u_i, u_j) / (d_G²(i, j) + ε_d) − 1|` over node pairs,
//!   with `d_S` the ball semimetric and `d_G` the fluid graph distance;
//! * `L_g = Σ_i |𝒜̄^i / (Ā^i + ε_g) − 1|`, matching normalized spherical
//!   sector areas spanned by each neighborhood on the ball against the
//!   normalized triangle fans the same neighborhood spans in the graph.
//!
//! Each epoch performs one gradient step on a batch of pairs (all pairs
//! when `batch_pairs == 0`) plus every geometry term, then pulls positions
//! back inside radius `1 − 10⁻⁶`.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::fluid_graph::FluidGraph;
use crate::soft_manifold::{
    change_of_variables, norm_sq, semimetric_distance, semimetric_with_grad, ManifoldPoint,
};

/// Largest radius a position may take after each update.
pub const MAX_RADIUS: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Scaled features pushed through the change of variables.
    #[default]
    ChangeOfVariables,
    /// Uniform in the radius-0.5 ball.
    RandomBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Central differences, step [`EmbedConfig::fd_step`].
    #[default]
    FiniteDifference,
    Analytic,
}

/// Which node pairs enter the distortion loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Every pair in the same connected component.
    #[default]
    All,
    /// Only graph edges.
    Neighbors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dim: usize,
    pub kappa: f64,
    pub eps_d: f64,
    pub eps_g: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Pairs per step; 0 uses every pair.
    pub batch_pairs: usize,
    pub seed: u64,
    pub init: Init,
    pub gradient: GradientMode,
    pub pair_scope: PairScope,
    pub fd_step: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 2,
            kappa: 1.0,
            eps_d: 1e-8,
            eps_g: 1e-8,
            lr: 1e-3,
            epochs: 500,
            batch_pairs: 0,
            seed: 0,
            init: Init::ChangeOfVariables,
            gradient: GradientMode::FiniteDifference,
            pair_scope: PairScope::All,
            fd_step: 1e-5,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be > 0, got {v}")))
            }
        };
        if self.dim < 2 {
            return Err(Error::invalid(format!("dim must be >= 2, got {}", self.dim)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        positive("eps_d", self.eps_d)?;
        positive("eps_g", self.eps_g)?;
        positive("lr", self.lr)?;
        positive("fd_step", self.fd_step)?;
        Ok(())
    }
}

/// One loss-trace entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub l_d: f64,
    pub l_g: f64,
    pub total: f64,
}

/// Positions on the ball plus the run that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub positions: Vec<ManifoldPoint>,
    pub epoch: usize,
    pub loss_trace: Vec<LossRecord>,
    pub config: EmbedConfig,
    pub rng_seed: u64,
}

impl EmbeddingState {
    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        self.positions[i].coords()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().map(|r| r.total)
    }

    pub fn to_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            dim: self.config.dim,
            seed: self.rng_seed,
            config: self.config,
            positions: self.positions.iter().map(|p| p.coords().to_vec()).collect(),
            loss_trace: self
                .loss_trace
                .iter()
                .map(|r| (r.epoch, r.l_d, r.l_g, r.total))
                .collect(),
        }
    }

    pub fn from_record(rec: &EmbeddingRecord) -> Result<Self> {
        let positions = rec
            .positions
            .iter()
            .map(|p| {
                if p.len() != rec.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "position of length {} in a {}-dimensional embedding",
                        p.len(),
                        rec.dim
                    )));
                }
                ManifoldPoint::new(p.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let loss_trace: Vec<LossRecord> = rec
            .loss_trace
            .iter()
            .map(|&(epoch, l_d, l_g, total)| LossRecord {
                epoch,
                l_d,
                l_g,
                total,
            })
            .collect();
        Ok(EmbeddingState {
            positions,
            epoch: loss_trace.last().map_or(0, |r| r.epoch),
            loss_trace,
            config: rec.config,
            rng_seed: rec.seed,
        })
    }
}

/// Serialized form of an [`EmbeddingState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub dim: usize,
    pub seed: u64,
    pub config: EmbedConfig,
    pub positions: Vec<Vec<f64>>,
    pub loss_trace: Vec<(usize, f64, f64, f64)>,
}

/// Per-node geometry summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodGeometry {
    pub node: usize,
    pub theta: f64,
    pub graph_area_norm: f64,
    pub manifold_area_norm: f64,
}

/// `½·d1·d2·sin θ`.
pub fn triangle_area(d1: f64, d2: f64, theta: f64) -> f64 {
    0.5 * d1 * d2 * theta.sin()
}

/// Neighbors of `i` sorted ascending by graph distance, ties by index.
pub fn geometry_order(i: usize, fg: &FluidGraph) -> Vec<usize> {
    let mut nb = fg.nbhd.neighbors(i).to_vec();
    nb.sort_by(|&a, &b| fg.d_g_sq(i, a).total_cmp(&fg.d_g_sq(i, b)).then(a.cmp(&b)));
    nb
}

/// Normalized triangle-fan area `Ā^i = A^i / A*` of `i`'s neighborhood.
///
/// Both `A^i` and `A*` carry the factor `sin θ_i`; it is cancelled
/// analytically so that two-neighbor fans (`θ = π`) stay well defined.
/// A single neighbor spans no area.
pub fn graph_neighborhood_area(i: usize, fg: &FluidGraph) -> f64 {
    graph_area_from_order(i, &geometry_order(i, fg), fg)
}

fn graph_area_from_order(i: usize, order: &[usize], fg: &FluidGraph) -> f64 {
    let k = order.len();
    if k < 2 || fg.d_g_star <= 0.0 {
        return 0.0;
    }
    let d: Vec<f64> = order.iter().map(|&j| fg.d_g(i, j)).collect();
    let fan: f64 = (0..k).map(|j| d[j] * d[(j + 1) % k]).sum();
    (fan / (k as f64 * fg.d_g_star * fg.d_g_star)).clamp(0.0, 1.0)
}

/// Reference cap area `𝒜* = 2π(1 − cos φ*)`.
pub fn max_sector_area(phi_star: f64) -> f64 {
    2.0 * PI * (1.0 - phi_star.cos())
}

/// Largest pairwise semimetric, clamped into `(0, π]`.
pub fn phi_star(positions: &[ManifoldPoint]) -> f64 {
    let n = positions.len();
    let maxes: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| semimetric_distance(positions[i].coords(), positions[j].coords()))
                .fold(0.0f64, f64::max)
        })
        .collect();
    maxes
        .into_iter()
        .fold(0.0f64, f64::max)
        .clamp(f64::MIN_POSITIVE, PI)
}

/// Normalized spherical-sector area `𝒜̄^i` of `i`'s neighborhood on the ball.
///
/// Inclinations are `φ_j = d_S(u_i, u_{i_j})` clamped to `[0, π]`, taken
/// in the order given. Sector areas use `|cos φ_j − cos φ_ĵ|` so they stay
/// nonnegative. A single neighbor spans no area.
pub fn manifold_neighborhood_area<P: AsRef<[f64]>>(
    i: usize,
    order: &[usize],
    positions: &[P],
    phi_star: f64,
) -> f64 {
    let k = order.len();
    if k < 2 {
        return 0.0;
    }
    let cap = max_sector_area(phi_star);
    if !(cap > 0.0) {
        return 0.0;
    }
    let ui = positions[i].as_ref();
    let c: Vec<f64> = order
        .iter()
        .map(|&j| semimetric_distance(ui, positions[j].as_ref()).clamp(0.0, PI).cos())
        .collect();
    let theta = 2.0 * PI / k as f64;
    let sectors: f64 = (0..k).map(|j| (c[j] - c[(j + 1) % k]).abs()).sum();
    theta * sectors / cap
}

/// Pairs and per-node geometry targets shared across an optimization run.
pub struct Objective<'a> {
    fg: &'a FluidGraph,
    kappa: f64,
    eps_d: f64,
    eps_g: f64,
    /// `(i, j, d_G²)`, `i < j`.
    pairs: Vec<(usize, usize, f64)>,
    pairs_of: Vec<Vec<usize>>,
    order: Vec<Vec<usize>>,
    graph_area: Vec<f64>,
    /// `holders[i]`: nodes whose ordered neighborhood contains `i`.
    holders: Vec<Vec<usize>>,
}

impl<'a> Objective<'a> {
    pub fn new(fg: &'a FluidGraph, cfg: &EmbedConfig) -> Self {
        let n = fg.n_nodes;
        let mut pairs = Vec::new();
        match cfg.pair_scope {
            PairScope::All => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if fg.is_connected_pair(i, j) {
                            pairs.push((i, j, fg.d_g_sq(i, j)));
                        }
                    }
                }
            }
            PairScope::Neighbors => {
                for (&(i, j), &d2) in &fg.edge_d2 {
                    pairs.push((i, j, d2));
                }
            }
        }
        let mut pairs_of = vec![Vec::new(); n];
        for (p, &(i, j, _)) in pairs.iter().enumerate() {
            pairs_of[i].push(p);
            pairs_of[j].push(p);
        }
        let order: Vec<Vec<usize>> = (0..n).map(|i| geometry_order(i, fg)).collect();
        let graph_area = (0..n)
            .map(|i| graph_area_from_order(i, &order[i], fg))
            .collect();
        let mut holders = vec![Vec::new(); n];
        for (m, o) in order.iter().enumerate() {
            for &j in o {
                holders[j].push(m);
            }
        }
        Objective {
            fg,
            kappa: cfg.kappa,
            eps_d: cfg.eps_d,
            eps_g: cfg.eps_g,
            pairs,
            pairs_of,
            order,
            graph_area,
            holders,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn graph_area(&self, i: usize) -> f64 {
        self.graph_area[i]
    }

    pub fn order(&self, i: usize) -> &[usize] {
        &self.order[i]
    }

    fn pair_term(&self, p: usize, ui: &[f64], uj: &[f64]) -> f64 {
        let d = semimetric_distance(ui, uj);
        (d * d / (self.pairs[p].2 + self.eps_d) - 1.0).abs()
    }

    fn geometry_term<P: AsRef<[f64]>>(&self, m: usize, positions: &[P], phi_star: f64) -> f64 {
        let area = manifold_neighborhood_area(m, &self.order[m], positions, phi_star);
        (area / (self.graph_area[m] + self.eps_g) - 1.0).abs()
    }

    /// `L_d` over the pairs flagged in `active` (all pairs when `None`).
    pub fn loss_distortion<P: AsRef<[f64]> + Sync>(
        &self,
        positions: &[P],
        active: Option<&[bool]>,
    ) -> f64 {
        let terms: Vec<f64> = (0..self.pairs.len())
            .into_par_iter()
            .map(|p| {
                if active.is_some_and(|a| !a[p]) {
                    return 0.0;
                }
                let (i, j, _) = self.pairs[p];
                self.pair_term(p, positions[i].as_ref(), positions[j].as_ref())
            })
            .collect();
        terms.iter().sum()
    }

    pub fn loss_geometry<P: AsRef<[f64]> + Sync>(&self, positions: &[P], phi_star: f64) -> f64 {
        let terms: Vec<f64> = (0..self.fg.n_nodes)
            .into_par_iter()
            .map(|m| self.geometry_term(m, positions, phi_star))
            .collect();
        terms.iter().sum()
    }

    /// Full objective `(L_d, L_g, L)` with `φ*` measured on `positions`.
    pub fn evaluate(&self, positions: &[ManifoldPoint]) -> (f64, f64, f64) {
        let l_d = self.loss_distortion(positions, None);
        let l_g = self.loss_geometry(positions, phi_star(positions));
        (l_d, l_g, l_d + self.kappa * l_g)
    }

    /// Every term that depends on node `i`, with `u_i` replaced by `ui`.
    fn local_loss(
        &self,
        i: usize,
        ui: &[f64],
        positions: &[ManifoldPoint],
        active: Option<&[bool]>,
        phi_star: f64,
    ) -> f64 {
        let mut total = 0.0;
        for &p in &self.pairs_of[i] {
            if active.is_some_and(|a| !a[p]) {
                continue;
            }
            let (a, b, _) = self.pairs[p];
            let other = if a == i { b } else { a };
            total += self.pair_term(p, ui, positions[other].coords());
        }
        if self.kappa > 0.0 {
            let view = Substituted { positions, i, ui };
            let mut geo = self.geometry_term_view(i, &view, phi_star);
            for &m in &self.holders[i] {
                geo += self.geometry_term_view(m, &view, phi_star);
            }
            total += self.kappa * geo;
        }
        total
    }

    fn geometry_term_view(&self, m: usize, view: &Substituted<'_>, phi_star: f64) -> f64 {
        let order = &self.order[m];
        let k = order.len();
        let area = if k < 2 {
            0.0
        } else {
            let cap = max_sector_area(phi_star);
            let um = view.get(m);
            let c: Vec<f64> = order
                .iter()
                .map(|&j| semimetric_distance(um, view.get(j)).clamp(0.0, PI).cos())
                .collect();
            let sectors: f64 = (0..k).map(|j| (c[j] - c[(j + 1) % k]).abs()).sum();
            2.0 * PI / k as f64 * sectors / cap
        };
        (area / (self.graph_area[m] + self.eps_g) - 1.0).abs()
    }

    /// Central-difference gradient of the batch objective, `φ*` held fixed.
    ///
    /// Near the boundary the step shrinks to 1% of the distance to the unit
    /// sphere so that probes stay inside the ball, where `√r` is smooth.
    pub fn gradient_fd(
        &self,
        positions: &[ManifoldPoint],
        active: Option<&[bool]>,
        phi_star: f64,
        h: f64,
    ) -> Vec<Vec<f64>> {
        (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let mut u = positions[i].coords().to_vec();
                let h = h.min(1e-2 * (1.0 - norm_sq(&u).sqrt()));
                let mut g = vec![0.0; u.len()];
                for c in 0..u.len() {
                    let orig = u[c];
                    u[c] = orig + h;
                    let plus = self.local_loss(i, &u, positions, active, phi_star);
                    u[c] = orig - h;
                    let minus = self.local_loss(i, &u, positions, active, phi_star);
                    u[c] = orig;
                    g[c] = (plus - minus) / (2.0 * h);
                }
                g
            })
            .collect()
    }

    /// Analytic (sub)gradient of the batch objective, `φ*` held fixed.
    /// Kinks of `|·|` take slope 0.
    pub fn gradient_analytic(
        &self,
        positions: &[ManifoldPoint],
        active: Option<&[bool]>,
        phi_star: f64,
    ) -> Vec<Vec<f64>> {
        let dim = positions.first().map_or(0, |p| p.dim());
        // ∂term_m/∂φ_j for every node m and slot j of its ordered neighborhood.
        let slope: Vec<Vec<f64>> = (0..self.fg.n_nodes)
            .into_par_iter()
            .map(|m| self.geometry_slopes(m, positions, phi_star))
            .collect();

        (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0; dim];
                let mut g1 = vec![0.0; dim];
                let mut g2 = vec![0.0; dim];
                let ui = positions[i].coords();
                for &p in &self.pairs_of[i] {
                    if active.is_some_and(|a| !a[p]) {
                        continue;
                    }
                    let (a, b, d2) = self.pairs[p];
                    let other = if a == i { b } else { a };
                    let d = semimetric_with_grad(ui, positions[other].coords(), &mut g1, &mut g2);
                    let den = d2 + self.eps_d;
                    let coef = sign(d * d / den - 1.0) * 2.0 * d / den;
                    for k in 0..dim {
                        g[k] += coef * g1[k];
                    }
                }
                if self.kappa > 0.0 {
                    for (slot, &j) in self.order[i].iter().enumerate() {
                        let s = slope[i].get(slot).copied().unwrap_or(0.0);
                        if s != 0.0 {
                            semimetric_with_grad(ui, positions[j].coords(), &mut g1, &mut g2);
                            for k in 0..dim {
                                g[k] += self.kappa * s * g1[k];
                            }
                        }
                    }
                    for &m in &self.holders[i] {
                        let um = positions[m].coords();
                        for (slot, &j) in self.order[m].iter().enumerate() {
                            if j != i {
                                continue;
                            }
                            let s = slope[m].get(slot).copied().unwrap_or(0.0);
                            if s != 0.0 {
                                semimetric_with_grad(um, ui, &mut g1, &mut g2);
                                for k in 0..dim {
                                    g[k] += self.kappa * s * g2[k];
                                }
                            }
                        }
                    }
                }
                g
            })
            .collect()
    }

    fn geometry_slopes(&self, m: usize, positions: &[ManifoldPoint], phi_star: f64) -> Vec<f64> {
        let order = &self.order[m];
        let k = order.len();
        if k < 2 {
            return Vec::new();
        }
        let cap = max_sector_area(phi_star);
        let um = positions[m].coords();
        let phi: Vec<f64> = order
            .iter()
            .map(|&j| semimetric_distance(um, positions[j].coords()))
            .collect();
        let c: Vec<f64> = phi.iter().map(|p| p.clamp(0.0, PI).cos()).collect();
        let theta = 2.0 * PI / k as f64;
        let sectors: f64 = (0..k).map(|j| (c[j] - c[(j + 1) % k]).abs()).sum();
        let area = theta * sectors / cap;
        let den = self.graph_area[m] + self.eps_g;
        let outer = sign(area / den - 1.0) / den * theta / cap;
        (0..k)
            .map(|j| {
                let next = (j + 1) % k;
                let prev = (j + k - 1) % k;
                let dc = sign(c[j] - c[next]) - sign(c[prev] - c[j]);
                let dphi = if phi[j] >= PI { 0.0 } else { -phi[j].sin() };
                outer * dc * dphi
            })
            .collect()
    }

    /// Per-node geometry summary at the given positions.
    pub fn neighborhood_geometry(&self, positions: &[ManifoldPoint]) -> Vec<NeighborhoodGeometry> {
        let ps = phi_star(positions);
        (0..self.fg.n_nodes)
            .map(|i| {
                let k = self.order[i].len().max(1);
                NeighborhoodGeometry {
                    node: i,
                    theta: 2.0 * PI / k as f64,
                    graph_area_norm: self.graph_area[i],
                    manifold_area_norm: manifold_neighborhood_area(
                        i,
                        &self.order[i],
                        positions,
                        ps,
                    ),
                }
            })
            .collect()
    }
}

/// Position lookup with one node overridden.
struct Substituted<'p> {
    positions: &'p [ManifoldPoint],
    i: usize,
    ui: &'p [f64],
}

impl Substituted<'_> {
    fn get(&self, m: usize) -> &[f64] {
        if m == self.i {
            self.ui
        } else {
            self.positions[m].coords()
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `L_d` over all pairs selected by `cfg.pair_scope`.
pub fn loss_distortion(state: &EmbeddingState, fg: &FluidGraph) -> f64 {
    Objective::new(fg, &state.config).loss_distortion(&state.positions, None)
}

/// `L_g` with `φ*` measured on the state's positions.
pub fn loss_geometry(state: &EmbeddingState, fg: &FluidGraph) -> f64 {
    Objective::new(fg, &state.config).loss_geometry(&state.positions, phi_star(&state.positions))
}

/// `L_d + κ·L_g`.
pub fn total_loss(state: &EmbeddingState, fg: &FluidGraph) -> f64 {
    Objective::new(fg, &state.config).evaluate(&state.positions).2
}

/// Radially rescales `u` onto radius `max_radius` when it lies beyond it.
pub fn project_to_ball(u: &[f64], max_radius: f64) -> Result<ManifoldPoint> {
    if !(max_radius > 0.0 && max_radius < 1.0) {
        return Err(Error::invalid(format!(
            "max_radius must lie in (0, 1), got {max_radius}"
        )));
    }
    ManifoldPoint::new(project_coords(u.to_vec(), max_radius))
}

fn project_coords(mut u: Vec<f64>, max_radius: f64) -> Vec<f64> {
    let norm = norm_sq(&u).sqrt();
    if norm > max_radius {
        let s = max_radius / norm;
        u.iter_mut().for_each(|c| *c *= s);
    }
    u
}

/// Initial positions according to `cfg.init`.
pub fn initial_positions(
    fm: &FeatureMatrix,
    fg: &FluidGraph,
    cfg: &EmbedConfig,
) -> Result<Vec<ManifoldPoint>> {
    let n = fg.n_nodes;
    if fm.n_rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for a {}-node graph",
            fm.n_rows(),
            n
        )));
    }
    match cfg.init {
        Init::ChangeOfVariables => {
            if cfg.dim < fm.n_features() {
                return Err(Error::invalid(format!(
                    "change_of_variables init needs dim >= n_features ({} < {})",
                    cfg.dim,
                    fm.n_features()
                )));
            }
            let means = fm.observed_column_means();
            (0..n)
                .map(|i| {
                    let x: Vec<f64> = (0..fm.n_features())
                        .map(|f| {
                            if fm.is_observed(i, f) {
                                fm.value(i, f)
                            } else {
                                means[f]
                            }
                        })
                        .collect();
                    let nb = fg.nbhd.neighbors(i);
                    let s_hat = if nb.is_empty() {
                        0.5
                    } else {
                        nb.iter().map(|&j| fg.p[&(i, j)]).sum::<f64>() / nb.len() as f64
                    };
                    let mut u = change_of_variables(&x, s_hat)?.into_inner();
                    u.resize(cfg.dim, 0.0);
                    ManifoldPoint::new(project_coords(u, MAX_RADIUS))
                })
                .collect()
        }
        Init::RandomBall => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n)
                .map(|_| {
                    let g: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let len = norm_sq(&g).sqrt().max(f64::MIN_POSITIVE);
                    let radius = 0.5 * rng.random::<f64>().powf(1.0 / cfg.dim as f64);
                    ManifoldPoint::new(g.iter().map(|c| c * radius / len).collect())
                })
                .collect()
        }
    }
}

/// Pair mask for one epoch: the `batch` pairs with the smallest keys, each
/// key drawn from a stream addressed by `(seed, epoch, pair id)`.
fn batch_mask(n_pairs: usize, batch: usize, seed: u64, epoch: usize) -> Option<Vec<bool>> {
    if batch == 0 || batch >= n_pairs {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(u64, usize)> = (0..n_pairs)
        .map(|p| {
            rng.set_stream(p as u64);
            rng.set_word_pos(epoch as u128 * 2);
            (rng.next_u64(), p)
        })
        .collect();
    keyed.sort_unstable();
    let mut mask = vec![false; n_pairs];
    for &(_, p) in keyed.iter().take(batch) {
        mask[p] = true;
    }
    Some(mask)
}

/// Runs the optimizer from [`initial_positions`].
pub fn embed(fm: &FeatureMatrix, fg: &FluidGraph, cfg: &EmbedConfig) -> Result<EmbeddingState> {
    cfg.validate()?;
    let positions = initial_positions(fm, fg, cfg)?;
    embed_from(positions, fg, cfg)
}

/// Runs the optimizer from explicit starting positions.
pub fn embed_from(
    positions: Vec<ManifoldPoint>,
    fg: &FluidGraph,
    cfg: &EmbedConfig,
) -> Result<EmbeddingState> {
    cfg.validate()?;
    if positions.len() != fg.n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "{} positions for a {}-node graph",
            positions.len(),
            fg.n_nodes
        )));
    }
    if positions.iter().any(|p| p.dim() != cfg.dim) {
        return Err(Error::DimensionMismatch(format!(
            "positions do not match configured dim {}",
            cfg.dim
        )));
    }
    let objective = Objective::new(fg, cfg);
    let mut state = EmbeddingState {
        positions,
        epoch: 0,
        loss_trace: Vec::with_capacity(cfg.epochs + 1),
        config: *cfg,
        rng_seed: cfg.seed,
    };
    let (l_d, l_g, total) = objective.evaluate(&state.positions);
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "initial loss".into(),
        });
    }
    state.loss_trace.push(LossRecord {
        epoch: 0,
        l_d,
        l_g,
        total,
    });

    for epoch in 1..=cfg.epochs {
        let active = batch_mask(objective.n_pairs(), cfg.batch_pairs, cfg.seed, epoch);
        let ps = phi_star(&state.positions);
        let grad = match cfg.gradient {
            GradientMode::FiniteDifference => {
                objective.gradient_fd(&state.positions, active.as_deref(), ps, cfg.fd_step)
            }
            GradientMode::Analytic => {
                objective.gradient_analytic(&state.positions, active.as_deref(), ps)
            }
        };
        let next: Vec<ManifoldPoint> = state
            .positions
            .iter()
            .zip(&grad)
            .map(|(u, g)| {
                let stepped: Vec<f64> = u
                    .coords()
                    .iter()
                    .zip(g)
                    .map(|(c, gc)| c - cfg.lr * gc)
                    .collect();
                ManifoldPoint::new(project_coords(stepped, MAX_RADIUS))
            })
            .collect::<Result<_>>()
            .map_err(|_| Error::NonFiniteLoss {
                epoch,
                state: Box::new(state.clone()),
            })?;
        let (l_d, l_g, total) = objective.evaluate(&next);
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                state: Box::new(state),
            });
        }
        state.positions = next;
        state.epoch = epoch;
        state.loss_trace.push(LossRecord {
            epoch,
            l_d,
            l_g,
            total,
        });
    }
    Ok(state)
}
