//! Mean curvature from a moving-least-squares implicit surface, and its
//! normalization into `[0, 1]`.
//!
//! For an evaluation point `x` with neighbors `Q`, the averaged normal is
//! `n(x) = normalize(sum theta(x, q) n_q)` with the Gaussian
//! `theta(x, q) = exp(-|x - q|^2 / sigma^2)`. The implicit function is the
//! directional derivative of the weighted energy
//! `e(y, n) = sum ((y - q) . n)^2 theta(y, q)` along `n(x)`, evaluated at
//! `y = x`:
//!
//! `g(x) = sum theta(x, q) (2 d_q - 2 d_q^3 / sigma^2)`, `d_q = (x - q) . n(x)`.
//!
//! Gradient and Hessian of `g` (including the dependence of `n` on `x`) are
//! carried exactly with [`Jet`]s, and the mean curvature of the level set
//! through `x` is
//!
//! `k = (grad g^T H grad g - |grad g|^2 tr H) / (2 |grad g|^3)`.
//!
//! With outward normals a convex region yields negative `k`.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SamplingDensity};
use crate::error::{ReliefError, Result};
use crate::jet::Jet;
use crate::spatial::Grid3;
use crate::viewprep::VisibleSet;

/// Threshold on `|grad g|` below which a point is treated as degenerate.
const MIN_GRADIENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlsConfig {
    pub neighbor_radius: f64,
    pub gauss_sigma: f64,
    pub min_neighbors: usize,
}

impl MlsConfig {
    /// Defaults scaled to the sampling density: sigma `2 rho`, radius `3 sigma`.
    pub fn for_density(rho: SamplingDensity) -> Self {
        Self {
            neighbor_radius: 6.0 * rho.get(),
            gauss_sigma: 2.0 * rho.get(),
            min_neighbors: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.neighbor_radius > 0.0
            && self.gauss_sigma > 0.0
            && self.min_neighbors > 0
            && self.neighbor_radius >= self.gauss_sigma;
        if ok {
            Ok(())
        } else {
            Err(ReliefError::InvalidParams(format!(
                "bad MLS config {self:?}"
            )))
        }
    }
}

/// Signed mean curvature per point plus degenerate-neighborhood flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCurvature {
    pub k_mean: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Normalized curvature used by compression and detail enhancement.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub k_mean: Vec<f64>,
    /// `min(|k|, p99) / p99`.
    pub k_norm: Vec<f64>,
    /// Population standard deviation of `k_norm`.
    pub delta: f64,
    /// 99th percentile of `|k_mean|` (1 when the field is identically zero).
    pub p99: f64,
    pub degenerate: Vec<bool>,
}

/// Curvature over the visible points of an aligned cloud.
pub fn mean_curvature_field(
    vis: &VisibleSet,
    cloud: &PointCloud,
    cfg: &MlsConfig,
) -> Result<RawCurvature> {
    let points: Vec<Point3<f64>> = vis.indices.iter().map(|&i| cloud.points()[i]).collect();
    mean_curvature_points(&points, &vis.normals, cfg)
}

/// Curvature over an arbitrary point set with normals.
pub fn mean_curvature_points(
    points: &[Point3<f64>],
    normals: &[Vector3<f64>],
    cfg: &MlsConfig,
) -> Result<RawCurvature> {
    cfg.validate()?;
    assert_eq!(points.len(), normals.len());
    let grid = Grid3::build(points, cfg.neighbor_radius);
    let results: Vec<Option<f64>> = (0..points.len())
        .into_par_iter()
        .map_init(Vec::new, |nbrs: &mut Vec<usize>, i| {
            nbrs.clear();
            grid.for_each_within(points, &points[i], cfg.neighbor_radius, |j, _| nbrs.push(j));
            if nbrs.len() < cfg.min_neighbors + 1 {
                return None;
            }
            nbrs.sort_unstable();
            curvature_at(
                &points[i],
                nbrs.iter().map(|&j| (&points[j], &normals[j])),
                cfg.gauss_sigma,
            )
        })
        .collect();
    Ok(RawCurvature {
        degenerate: results.iter().map(Option::is_none).collect(),
        k_mean: results.into_iter().map(|k| k.unwrap_or(0.0)).collect(),
    })
}

/// Evaluates the implicit function `g` at `x` as a [`Jet`].
pub fn mls_implicit<'a, I>(x: &Point3<f64>, neighbors: I, sigma: f64) -> Option<Jet>
where
    I: IntoIterator<Item = (&'a Point3<f64>, &'a Vector3<f64>)> + Clone,
{
    let inv_s2 = 1.0 / (sigma * sigma);
    let var = [0, 1, 2].map(|a| Jet::variable(x[a], a));
    let offset = |q: &Point3<f64>| [0, 1, 2].map(|a| var[a] + Jet::constant(-q[a]));
    let weight = |d: &[Jet; 3]| ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).scale(-inv_s2)).exp();

    let mut m = [Jet::ZERO; 3];
    let mut thetas = Vec::new();
    for (q, nq) in neighbors.clone() {
        let theta = weight(&offset(q));
        for a in 0..3 {
            m[a] += theta.scale(nq[a]);
        }
        thetas.push(theta);
    }
    let mm = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
    if !(mm.v > 1e-24) {
        return None;
    }
    let inv_len = mm.sqrt().recip();
    let n = m.map(|c| c * inv_len);

    let mut g = Jet::ZERO;
    for ((q, _), theta) in neighbors.into_iter().zip(thetas) {
        let d = offset(q);
        let dn = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
        g += theta * (dn.scale(2.0) - dn.powi3().scale(2.0 * inv_s2));
    }
    Some(g)
}

/// Mean curvature of the level set of `g` through `x`.
pub fn curvature_from_implicit(g: &Jet) -> Option<f64> {
    let grad = g.g;
    let norm2 = grad.iter().map(|v| v * v).sum::<f64>();
    let norm = norm2.sqrt();
    if !(norm >= MIN_GRADIENT) {
        return None;
    }
    let mut ghg = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            ghg += grad[i] * g.hess(i, j) * grad[j];
        }
    }
    let k = (ghg - norm2 * g.trace()) / (2.0 * norm2 * norm);
    k.is_finite().then_some(k)
}

fn curvature_at<'a, I>(x: &Point3<f64>, neighbors: I, sigma: f64) -> Option<f64>
where
    I: IntoIterator<Item = (&'a Point3<f64>, &'a Vector3<f64>)> + Clone,
{
    curvature_from_implicit(&mls_implicit(x, neighbors, sigma)?)
}

/// Scales `|k|` into `[0, 1]` by its 99th percentile and computes the spread.
pub fn normalize_curvature(raw: RawCurvature) -> CurvatureField {
    let p99 = percentile99(raw.k_mean.iter().map(|k| k.abs()));
    let k_norm: Vec<f64> = raw.k_mean.iter().map(|k| k.abs().min(p99) / p99).collect();
    CurvatureField {
        delta: population_std(&k_norm),
        k_mean: raw.k_mean,
        k_norm,
        p99,
        degenerate: raw.degenerate,
    }
}

/// 99th percentile taken at rank `floor(0.99 n) + 1`, so at most 1% of
/// distinct values lie at or above it; falls back to 1 for an all-zero (or
/// empty) input.
pub fn percentile99(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let rank = (v.len() * 99 / 100 + 1).min(v.len());
    let p = v[rank - 1];
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::estimate_density;
    use crate::synth;

    #[test]
    fn plane_has_zero_curvature() {
        let cloud = synth::grid_plane(30, 30, 0.1, 0.0);
        let rho = estimate_density(cloud.points()).unwrap();
        let raw = mean_curvature_points(
            cloud.points(),
            cloud.normals(),
            &MlsConfig::for_density(rho),
        )
        .unwrap();
        assert!(raw.k_mean.iter().all(|k| k.abs() < 1e-6));
    }

    #[test]
    fn implicit_derivatives_match_finite_differences() {
        let cloud = synth::sphere(2000, 1.0);
        let rho = estimate_density(cloud.points()).unwrap();
        let cfg = MlsConfig::for_density(rho);
        let pts = cloud.points();
        let ns = cloud.normals();
        let x = pts[17];
        let nb: Vec<usize> = (0..pts.len())
            .filter(|&j| (pts[j] - x).norm() <= cfg.neighbor_radius)
            .collect();
        let it = nb.iter().map(|&j| (&pts[j], &ns[j]));
        let g = mls_implicit(&x, it.clone(), cfg.gauss_sigma).unwrap();
        let h = 1e-5;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let gp = mls_implicit(&xp, it.clone(), cfg.gauss_sigma).unwrap();
            let gm = mls_implicit(&xm, it.clone(), cfg.gauss_sigma).unwrap();
            let fd = (gp.v - gm.v) / (2.0 * h);
            assert!(
                (fd - g.g[a]).abs() < 1e-5 * g.g[a].abs().max(1.0),
                "grad {a}"
            );
            for b in 0..3 {
                let fd2 = (gp.g[b] - gm.g[b]) / (2.0 * h);
                assert!(
                    (fd2 - g.hess(a, b)).abs() < 1e-4 * g.hess(a, b).abs().max(1.0),
                    "hess {a}{b}"
                );
            }
        }
    }

    #[test]
    fn isolated_point_is_degenerate() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0)];
        let ns = vec![Vector3::z(); 2];
        let cfg = MlsConfig {
            neighbor_radius: 1.0,
            gauss_sigma: 0.5,
            min_neighbors: 8,
        };
        let raw = mean_curvature_points(&pts, &ns, &cfg).unwrap();
        assert_eq!(raw.degenerate, vec![true, true]);
        assert_eq!(raw.k_mean, vec![0.0, 0.0]);
    }

    #[test]
    fn normalize_all_zero() {
        let f = normalize_curvature(RawCurvature {
            k_mean: vec![0.0; 10],
            degenerate: vec![false; 10],
        });
        assert_eq!(f.p99, 1.0);
        assert!(f.k_norm.iter().all(|&k| k == 0.0));
        assert_eq!(f.delta, 0.0);
    }

    #[test]
    fn normalize_outlier_is_clamped() {
        let mut k: Vec<f64> = (0..1000).map(|i| 0.5 + (i % 7) as f64 * 0.01).collect();
        k[3] = 100.0;
        let f = normalize_curvature(RawCurvature {
            degenerate: vec![false; k.len()],
            k_mean: k.clone(),
        });
        assert_eq!(f.k_norm[3], 1.0);
        // Ratios among the rest are untouched.
        assert!((f.k_norm[0] / f.k_norm[1] - k[0] / k[1]).abs() < 1e-12);
    }

    #[test]
    fn normalize_uniform_matches_direct_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let k: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let f = normalize_curvature(RawCurvature {
            degenerate: vec![false; k.len()],
            k_mean: k.clone(),
        });
        // Direct oracle: sort, pick rank, clamp, std.
        let mut s = k.clone();
        s.sort_by(f64::total_cmp);
        let p = s[99_000];
        let kn: Vec<f64> = k.iter().map(|v| v.min(p) / p).collect();
        let mean = kn.iter().sum::<f64>() / kn.len() as f64;
        let sd = (kn.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / kn.len() as f64).sqrt();
        assert!((f.delta - sd).abs() < 1e-12);
        assert!((f.delta - 0.2887).abs() < 0.01);
        let at_one = f.k_norm.iter().filter(|&&v| v == 1.0).count();
        assert!(at_one <= 1000);
    }
}
