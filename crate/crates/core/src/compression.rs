//! Normal-space compression: blending normals toward the view axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::base::BaseSurface;
use crate::error::{ReliefError, Result};
use crate::sampling::ControlSet;

/// Smallest usable `alpha`; zero maps here.
pub const MIN_ALPHA: f64 = 1e-6;
/// Lower bound on the z component of a compressed normal.
pub const NZ_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliefParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub base: BaseSurface,
}

impl Default for ReliefParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 0.01,
            gamma: 0.02,
            base: BaseSurface::default(),
        }
    }
}

impl ReliefParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ReliefError::InvalidParams(format!(
                "alpha {} must be >= 0",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ReliefError::InvalidParams(format!(
                "beta {} must be >= 0",
                self.beta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ReliefError::InvalidParams(format!(
                "gamma {} must be in [0, 1)",
                self.gamma
            )));
        }
        self.base.validate()
    }

    pub fn effective_alpha(&self) -> f64 {
        effective_alpha(self.alpha)
    }
}

fn effective_alpha(alpha: f64) -> f64 {
    if alpha > 0.0 {
        alpha
    } else {
        MIN_ALPHA
    }
}

/// `1 - exp(-(k / (alpha delta))^beta)` with `0^0 = 1`; `delta = 0` gives 1.
pub fn curvature_weight(k_norm: f64, alpha: f64, beta: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    let x = k_norm / (effective_alpha(alpha) * delta);
    let p = if beta == 0.0 { 1.0 } else { x.powf(beta) };
    1.0 - (-p).exp()
}

/// `1 - exp(-(dist / 2 rho)^2)`.
pub fn boundary_weight(dist: f64, rho: f64) -> f64 {
    let t = dist / (2.0 * rho);
    1.0 - (-(t * t)).exp()
}

/// `w n + (1 - w) z`, flipped toward the viewer, renormalized and floored.
pub fn blend_normal(n: &Vector3<f64>, w: f64) -> Vector3<f64> {
    let n = if n.z < 0.0 { -n } else { *n };
    let raw = n * w + Vector3::z() * (1.0 - w);
    let len = raw.norm();
    let u = if len > 0.0 { raw / len } else { Vector3::z() };
    floor_z(u)
}

fn floor_z(u: Vector3<f64>) -> Vector3<f64> {
    if u.z >= NZ_FLOOR {
        return u;
    }
    let h = u.x.hypot(u.y);
    if h == 0.0 {
        return Vector3::z();
    }
    let s = (1.0 - NZ_FLOOR * NZ_FLOOR).sqrt() / h;
    Vector3::new(u.x * s, u.y * s, NZ_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedNormals {
    pub n_tilde: Vec<Vector3<f64>>,
}

pub fn compress_normals(
    controls: &ControlSet,
    params: &ReliefParams,
    rho: f64,
) -> CompressedNormals {
    let n_tilde = (0..controls.len())
        .map(|p| {
            let wk = curvature_weight(
                controls.k_norm[p],
                params.alpha,
                params.beta,
                controls.delta,
            );
            let wb = boundary_weight(controls.dist[p], rho);
            blend_normal(&controls.normals[p], wk * wb)
        })
        .collect();
    CompressedNormals { n_tilde }
}
