//! Geometry of the open unit ball carrying the degenerate conformal metric
//! `q = r⁻¹ (dx)²`, `r(u) = ½(1 − ‖u‖²)`.
//!
//! The embedding only ever uses [`semimetric_distance`]. The variational
//! [`geodesic_length_oracle`] and the [`hypocycloid`] curves exist to check
//! that surrogate against the intrinsic length functional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point strictly inside the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ManifoldPoint(Vec<f64>);

impl ManifoldPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                context: "manifold point coordinates".into(),
            });
        }
        if norm_sq(&coords) >= 1.0 {
            return Err(Error::invalid(format!(
                "point with norm {} is not inside the unit ball",
                norm_sq(&coords).sqrt()
            )));
        }
        Ok(ManifoldPoint(coords))
    }

    pub fn origin(dim: usize) -> Self {
        ManifoldPoint(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ManifoldPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm_sq(u: &[f64]) -> f64 {
    u.iter().map(|c| c * c).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `r(u) = ½(1 − ‖u‖²)`.
pub fn r(u: &[f64]) -> f64 {
    0.5 * (1.0 - norm_sq(u))
}

/// `‖u1 − u2‖ / (√‖u1 − u2‖ + √r(u1) + √r(u2))`.
///
/// Symmetric, zero exactly on the diagonal, and below `√2` on the ball.
pub fn semimetric_distance(u1: &[f64], u2: &[f64]) -> f64 {
    let a = dist(u1, u2);
    if a == 0.0 {
        return 0.0;
    }
    // The radial terms are added first so that swapping arguments is exact.
    a / (a.sqrt() + (r(u1).max(0.0).sqrt() + r(u2).max(0.0).sqrt()))
}

/// [`semimetric_distance`] together with its gradients in both arguments.
/// The gradient is taken as zero at coincident points.
pub fn semimetric_with_grad(u1: &[f64], u2: &[f64], g1: &mut [f64], g2: &mut [f64]) -> f64 {
    let a = dist(u1, u2);
    g1.iter_mut().for_each(|g| *g = 0.0);
    g2.iter_mut().for_each(|g| *g = 0.0);
    if a == 0.0 {
        return 0.0;
    }
    let s1 = r(u1).max(0.0).sqrt();
    let s2 = r(u2).max(0.0).sqrt();
    let sa = a.sqrt();
    let den = sa + (s1 + s2);
    let d = a / den;
    // d = a / D;  ∂d = (∂a · D − a · ∂D) / D²,  ∂D = ∂a / (2√a) + ∂√r.
    let da_coef = (den - a / (2.0 * sa)) / (den * den);
    let dr_coef = -a / (den * den);
    for k in 0..u1.len() {
        let da = (u1[k] - u2[k]) / a;
        let dsr1 = if s1 > 0.0 { -u1[k] / (2.0 * s1) } else { 0.0 };
        let dsr2 = if s2 > 0.0 { -u2[k] / (2.0 * s2) } else { 0.0 };
        g1[k] = da_coef * da + dr_coef * dsr1;
        g2[k] = -da_coef * da + dr_coef * dsr2;
    }
    d
}

/// `u = x / √(2·s_over_v + ‖x‖²)`.
///
/// The squared norm is what confines the image to the ball.
pub fn change_of_variables(x: &[f64], s_over_v: f64) -> Result<ManifoldPoint> {
    if !(s_over_v >= 0.0) {
        return Err(Error::invalid(format!("s_over_v must be >= 0, got {s_over_v}")));
    }
    let den = 2.0 * s_over_v + norm_sq(x);
    if !(den > 0.0) {
        return Err(Error::invalid(
            "change of variables undefined for a zero vector with s_over_v = 0",
        ));
    }
    let scale = den.sqrt().recip();
    ManifoldPoint::new(x.iter().map(|v| v * scale).collect())
}

/// Radial deviation `y = √(2·s_over_v + ‖x‖²) − 1` from the half-sphere.
pub fn y_coordinate(x: &[f64], s_over_v: f64) -> f64 {
    (2.0 * s_over_v + norm_sq(x)).sqrt() - 1.0
}

/// A feature vector together with its time-scale proxy and radial deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformState {
    pub x: Vec<f64>,
    pub s_over_v: f64,
    pub y: f64,
}

impl TransformState {
    pub fn new(x: Vec<f64>, s_over_v: f64) -> Self {
        let y = y_coordinate(&x, s_over_v);
        TransformState { x, s_over_v, y }
    }

    /// `(s_over_v − r(x)) − (y + y²/2)`, identically zero.
    pub fn identity_residual(&self) -> f64 {
        (self.s_over_v - r(&self.x)) - (self.y + 0.5 * self.y * self.y)
    }
}

/// Trace of a point on a circle of radius `rho` rolling inside the unit
/// circle, parametrized so that `|w'|² = 1 − |w|²`.
pub fn hypocycloid(rho: f64, t: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(Error::invalid(format!("rho must lie in (0, 1/2], got {rho}")));
    }
    let slow = (rho / (1.0 - rho)).sqrt();
    let fast = ((1.0 - rho) / rho).sqrt();
    let w1 = (1.0 - rho) * (t * slow).cos() + rho * (t * fast).cos();
    let w2 = (1.0 - rho) * (t * slow).sin() - rho * (t * fast).sin();
    Ok((w1, w2))
}

/// Sampled hypocycloid arc with its polyline length.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicCurve {
    pub rho: f64,
    pub samples: Vec<[f64; 2]>,
    pub length: f64,
}

impl GeodesicCurve {
    /// Samples `n + 1` points on `t ∈ [t0, t1]`.
    pub fn sample(rho: f64, t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one segment"));
        }
        let samples = (0..=n)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / n as f64;
                hypocycloid(rho, t).map(|(a, b)| [a, b])
            })
            .collect::<Result<Vec<_>>>()?;
        let length = polyline_length(&samples);
        Ok(GeodesicCurve {
            rho,
            samples,
            length,
        })
    }
}

/// Central-difference residual of `(w'/(1−|w|²))' − w/(1−|w|²)` along the
/// hypocycloid at parameter `t` with step `h`.
pub fn euler_lagrange_residual(rho: f64, t: f64, h: f64) -> Result<[f64; 2]> {
    let w = |s: f64| hypocycloid(rho, s).map(|(a, b)| [a, b]);
    let flux = |s: f64| -> Result<[f64; 2]> {
        let (p, m, c) = (w(s + h)?, w(s - h)?, w(s)?);
        let wt = 1.0 - c[0] * c[0] - c[1] * c[1];
        Ok([
            (p[0] - m[0]) / (2.0 * h) / wt,
            (p[1] - m[1]) / (2.0 * h) / wt,
        ])
    };
    let (fp, fm, c) = (flux(t + h)?, flux(t - h)?, w(t)?);
    let wt = 1.0 - c[0] * c[0] - c[1] * c[1];
    Ok([
        (fp[0] - fm[0]) / (2.0 * h) - c[0] / wt,
        (fp[1] - fm[1]) / (2.0 * h) - c[1] / wt,
    ])
}

/// `Σ ‖Γ_{k+1} − Γ_k‖ / √(1 − ‖Γ̄_k‖²)` with `Γ̄_k` the segment midpoint.
pub fn polyline_length(pts: &[[f64; 2]]) -> f64 {
    pts.windows(2)
        .map(|s| {
            let (a, b) = (s[0], s[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let m = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
            len / (1.0 - m[0] * m[0] - m[1] * m[1]).sqrt()
        })
        .sum()
}

/// Discrete energy `Σ ‖Γ_{k+1} − Γ_k‖² / ((1 − ‖Γ̄_k‖²)·Δ)`.
fn polyline_energy(pts: &[[f64; 2]]) -> f64 {
    let h = 1.0 / (pts.len() - 1) as f64;
    pts.windows(2)
        .map(|s| {
            let (a, b) = (s[0], s[1]);
            let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
            let m = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
            len2 / ((1.0 - m[0] * m[0] - m[1] * m[1]) * h)
        })
        .sum()
}

/// Settings for the variational length oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub n_segments: usize,
    /// Stop once the relative energy decrease of a step falls below this.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Consecutive non-decreasing iterations before giving up.
    pub patience: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            n_segments: 64,
            rel_tol: 1e-13,
            max_iter: 200_000,
            patience: 100,
        }
    }
}

/// Result of [`geodesic_length_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicEstimate {
    pub length: f64,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Optimized polyline in the plane of the two endpoints and the origin.
    pub samples: Vec<[f64; 2]>,
}

/// Numerically minimizes the discrete curve energy between two interior
/// points and reports the intrinsic length of the optimized polyline.
///
/// The curve lives in the plane spanned by the origin and both endpoints,
/// starts on the straight chord, and is updated with Jacobi-preconditioned
/// projected gradient steps under backtracking.
pub fn geodesic_length_oracle(
    u1: &[f64],
    u2: &[f64],
    settings: &OracleSettings,
) -> Result<GeodesicEstimate> {
    let n = settings.n_segments;
    if n < 8 {
        return Err(Error::invalid(format!("need at least 8 segments, got {n}")));
    }
    if u1.len() != u2.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            u1.len(),
            u2.len()
        )));
    }
    if norm_sq(u1) >= 1.0 || norm_sq(u2) >= 1.0 {
        return Err(Error::invalid("oracle endpoints must be interior points"));
    }
    let (a, b) = plane_coordinates(u1, u2);
    if u1 == u2 {
        return Ok(GeodesicEstimate {
            length: 0.0,
            energy: 0.0,
            converged: true,
            iterations: 0,
            samples: vec![a; n + 1],
        });
    }

    const MAX_RADIUS: f64 = 1.0 - 1e-9;
    let h = 1.0 / n as f64;
    let mut pts: Vec<[f64; 2]> = (0..=n)
        .map(|k| {
            let t = k as f64 * h;
            [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
        })
        .collect();
    let mut energy = polyline_energy(&pts);
    let mut step: f64 = 1.0;
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut dir = vec![[0.0; 2]; n + 1];
    let mut trial = pts.clone();

    while iterations < settings.max_iter {
        iterations += 1;
        // Segment weights w_k = 1 − ‖midpoint‖².
        let w: Vec<f64> = pts
            .windows(2)
            .map(|s| {
                let m = [(s[0][0] + s[1][0]) * 0.5, (s[0][1] + s[1][1]) * 0.5];
                1.0 - m[0] * m[0] - m[1] * m[1]
            })
            .collect();
        for k in 1..n {
            let mut g = [0.0; 2];
            for (seg, sign) in [(k - 1, 1.0), (k, -1.0)] {
                let (p, q) = (pts[seg], pts[seg + 1]);
                let d = [q[0] - p[0], q[1] - p[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let m = [(p[0] + q[0]) * 0.5, (p[1] + q[1]) * 0.5];
                let ws = w[seg];
                for c in 0..2 {
                    g[c] += (sign * 2.0 * d[c] / ws + len2 * m[c] / (ws * ws)) / h;
                }
            }
            let diag = 2.0 / (w[k - 1] * h) + 2.0 / (w[k] * h);
            dir[k] = [-g[0] / diag, -g[1] / diag];
        }

        let mut accepted = false;
        let mut s = (step * 2.0).min(1.0);
        for _ in 0..40 {
            trial[0] = pts[0];
            trial[n] = pts[n];
            for k in 1..n {
                let mut p = [pts[k][0] + s * dir[k][0], pts[k][1] + s * dir[k][1]];
                let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if rad > MAX_RADIUS {
                    p = [p[0] * MAX_RADIUS / rad, p[1] * MAX_RADIUS / rad];
                }
                trial[k] = p;
            }
            let e = polyline_energy(&trial);
            if e < energy {
                let rel = (energy - e) / energy;
                std::mem::swap(&mut pts, &mut trial);
                energy = e;
                step = s;
                accepted = true;
                if rel < settings.rel_tol {
                    converged = true;
                }
                break;
            }
            s *= 0.5;
        }
        if converged {
            break;
        }
        if accepted {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= settings.patience {
                // No representable decrease left along the preconditioned
                // direction: the polyline sits at a discrete minimum.
                converged = true;
                break;
            }
        }
    }
    Ok(GeodesicEstimate {
        length: polyline_length(&pts),
        energy,
        converged,
        iterations,
        samples: pts,
    })
}

/// Coordinates of `u1`, `u2` in an orthonormal basis of a plane through the
/// origin containing both.
fn plane_coordinates(u1: &[f64], u2: &[f64]) -> ([f64; 2], [f64; 2]) {
    let n1 = norm_sq(u1).sqrt();
    let n2 = norm_sq(u2).sqrt();
    let e1: Vec<f64> = if n1 > 0.0 {
        u1.iter().map(|c| c / n1).collect()
    } else if n2 > 0.0 {
        u2.iter().map(|c| c / n2).collect()
    } else {
        return ([0.0, 0.0], [0.0, 0.0]);
    };
    let p1 = dot(u1, &e1);
    let p2 = dot(u2, &e1);
    let perp: Vec<f64> = u2.iter().zip(&e1).map(|(c, e)| c - p2 * e).collect();
    let q2 = norm_sq(&perp).sqrt();
    ([p1, 0.0], [p2, q2])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome class of one calibration row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    Ok,
    Degenerate,
    NotConverged,
}

/// One row of the oracle-versus-surrogate comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub pair_id: usize,
    pub chord: f64,
    pub semimetric: f64,
    pub oracle_length: f64,
    pub ratio: f64,
    pub status: CalibrationStatus,
}

/// Compares the semimetric against the oracle length on every pair.
pub fn calibrate_pairs(
    pairs: &[(ManifoldPoint, ManifoldPoint)],
    settings: &OracleSettings,
) -> Result<Vec<CalibrationRow>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(pair_id, (u1, u2))| {
            let chord = dist(u1.coords(), u2.coords());
            let semimetric = semimetric_distance(u1.coords(), u2.coords());
            let est = geodesic_length_oracle(u1.coords(), u2.coords(), settings)?;
            let (ratio, status) = if chord == 0.0 {
                (f64::NAN, CalibrationStatus::Degenerate)
            } else if !est.converged {
                (est.length / semimetric, CalibrationStatus::NotConverged)
            } else {
                (est.length / semimetric, CalibrationStatus::Ok)
            };
            Ok(CalibrationRow {
                pair_id,
                chord,
                semimetric,
                oracle_length: est.length,
                ratio,
                status,
            })
        })
        .collect()
}

/// Seeded pairs of points drawn uniformly from the open `dim`-ball.
pub fn sample_interior_pairs(
    n_pairs: usize,
    dim: usize,
    seed: u64,
) -> Result<Vec<(ManifoldPoint, ManifoldPoint)>> {
    if dim < 2 {
        return Err(Error::invalid("calibration needs dimension >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Result<ManifoldPoint> {
        loop {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm_sq(&g).sqrt();
            if len == 0.0 {
                continue;
            }
            let radius = rng.random::<f64>().powf(1.0 / dim as f64);
            if radius >= 1.0 {
                continue;
            }
            return ManifoldPoint::new(g.iter().map(|c| c * radius / len).collect());
        }
    };
    (0..n_pairs).map(|_| Ok((draw()?, draw()?))).collect()
}

/// Summary of calibration ratios over rows with status `Ok`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEnvelope {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

pub fn ratio_envelope(rows: &[CalibrationRow]) -> Option<RatioEnvelope> {
    let mut r: Vec<f64> = rows
        .iter()
        .filter(|row| row.status == CalibrationStatus::Ok)
        .map(|row| row.ratio)
        .collect();
    if r.is_empty() {
        return None;
    }
    r.sort_by(f64::total_cmp);
    let mid = r.len() / 2;
    let median = if r.len().is_multiple_of(2) {
        0.5 * (r[mid - 1] + r[mid])
    } else {
        r[mid]
    };
    Some(RatioEnvelope {
        min: r[0],
        median,
        max: r[r.len() - 1],
        count: r.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn r_examples() {
        assert_eq!(r(&[0.0, 0.0]), 0.5);
        assert_eq!(r(&[1.0, 0.0]), 0.0);
        assert_abs_diff_eq!(r(&[0.3, 0.4]), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn semimetric_examples() {
        assert_eq!(semimetric_distance(&[0.2, 0.1], &[0.2, 0.1]), 0.0);
        assert_abs_diff_eq!(
            semimetric_distance(&[0.0, 0.0], &[1.0, 0.0]),
            1.0 / (1.0 + 0.5f64.sqrt()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            semimetric_distance(&[0.0, 0.0], &[1.0, 0.0]),
            0.58579,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            semimetric_distance(&[0.5, 0.0], &[-0.5, 0.0]),
            1.0 / (1.0 + 2.0 * 0.375f64.sqrt()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            semimetric_distance(&[0.5, 0.0], &[-0.5, 0.0]),
            0.44949,
            epsilon = 1e-5
        );
    }

    #[test]
    fn semimetric_gradient_matches_differences() {
        let u1 = [0.3, -0.2, 0.5];
        let u2 = [-0.4, 0.1, 0.2];
        let (mut g1, mut g2) = ([0.0; 3], [0.0; 3]);
        semimetric_with_grad(&u1, &u2, &mut g1, &mut g2);
        let h = 1e-6;
        for k in 0..3 {
            let (mut p, mut m) = (u1, u1);
            p[k] += h;
            m[k] -= h;
            let fd = (semimetric_distance(&p, &u2) - semimetric_distance(&m, &u2)) / (2.0 * h);
            assert_abs_diff_eq!(g1[k], fd, epsilon = 1e-8);
            let (mut p, mut m) = (u2, u2);
            p[k] += h;
            m[k] -= h;
            let fd = (semimetric_distance(&u1, &p) - semimetric_distance(&u1, &m)) / (2.0 * h);
            assert_abs_diff_eq!(g2[k], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn change_of_variables_examples() {
        let u = change_of_variables(&[0.0, 0.0], 0.3).unwrap();
        assert_eq!(u.coords(), &[0.0, 0.0]);
        let x = [1.0, 1.0, 1.0];
        let u = change_of_variables(&x, 0.5).unwrap();
        assert_abs_diff_eq!(norm_sq(u.coords()).sqrt(), 3f64.sqrt() / 2.0, epsilon = 1e-15);
        let far = change_of_variables(&x, 1e12).unwrap();
        assert!(norm_sq(far.coords()).sqrt() < 1e-5);
        assert!(change_of_variables(&[0.0], 0.0).is_err());
    }

    #[test]
    fn y_coordinate_examples() {
        assert_eq!(y_coordinate(&[0.6, 0.8], 0.0), 0.0);
        assert_abs_diff_eq!(y_coordinate(&[2.0], 0.0), 1.0);
        assert_abs_diff_eq!(y_coordinate(&[1.0, 1.0], 1.0), 1.0);
        let st = TransformState::new(vec![0.4, -1.3, 2.2], 0.7);
        assert!(st.identity_residual().abs() < 1e-10);
    }

    #[test]
    fn hypocycloid_examples() {
        for rho in [0.1, 0.25, 0.5] {
            let (a, b) = hypocycloid(rho, 0.0).unwrap();
            assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(b, 0.0, epsilon = 1e-15);
        }
        assert!(hypocycloid(0.0, 1.0).is_err());
        assert!(hypocycloid(0.6, 1.0).is_err());
    }

    #[test]
    fn oracle_coincident_and_diameter() {
        let s = OracleSettings::default();
        let e = geodesic_length_oracle(&[0.1, 0.2], &[0.1, 0.2], &s).unwrap();
        assert_eq!(e.length, 0.0);
        let a = 0.6f64;
        let e = geodesic_length_oracle(&[-a, 0.0], &[a, 0.0], &s).unwrap();
        assert!(e.converged);
        assert!((e.length / (2.0 * a.asin()) - 1.0).abs() < 1e-3, "{}", e.length);
        assert!(geodesic_length_oracle(&[0.0, 0.0], &[0.5, 0.0], &OracleSettings {
            n_segments: 4,
            ..s
        })
        .is_err());
    }

    #[test]
    fn oracle_is_symmetric() {
        let s = OracleSettings::default();
        let u1 = [0.5, 0.3, -0.1];
        let u2 = [-0.2, 0.6, 0.4];
        let a = geodesic_length_oracle(&u1, &u2, &s).unwrap();
        let b = geodesic_length_oracle(&u2, &u1, &s).unwrap();
        assert!((a.length - b.length).abs() < 1e-6);
    }

    #[test]
    fn envelope_skips_degenerate_rows() {
        let rows = vec![
            CalibrationRow {
                pair_id: 0,
                chord: 0.0,
                semimetric: 0.0,
                oracle_length: 0.0,
                ratio: f64::NAN,
                status: CalibrationStatus::Degenerate,
            },
            CalibrationRow {
                pair_id: 1,
                chord: 1.0,
                semimetric: 1.0,
                oracle_length: 2.0,
                ratio: 2.0,
                status: CalibrationStatus::Ok,
            },
        ];
        let env = ratio_envelope(&rows).unwrap();
        assert_eq!((env.min, env.median, env.max, env.count), (2.0, 2.0, 2.0, 1));
    }
}
