//! Reference relief and the transfer of control heights to every visible point.

use std::sync::Arc;

use rayon::prelude::*;

use crate::base::BaseSurface;
use crate::cloud::SamplingDensity;
use crate::compression::{blend_normal, boundary_weight};
use crate::error::Result;
use crate::mba::RatioField;
use crate::sampling::{sector_graph, ControlSet, NEIGHBORS};
use crate::solver::{height_span, HeightSolution, LinearSystem, BOUNDARY_LAMBDA};
use crate::viewprep::{BoundaryInfo, VisibleSet};
use nalgebra::Vector3;

/// Upper clamp on mapped ratios.
pub const MAX_RATIO: f64 = 1.5;
/// Sites whose reference height above the base is below this fraction of the
/// reference span are left out of the ratio fit.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-6;

/// Full-resolution solve with boundary blending only.
#[derive(Debug, Clone)]
pub struct ReferenceRelief {
    pub z_ref: Vec<f64>,
    pub z_base: Vec<f64>,
    pub h_ref: f64,
    pub base: BaseSurface,
    n_tilde: Arc<Vec<Vector3<f64>>>,
    system: Arc<LinearSystem>,
}

impl ReferenceRelief {
    /// Re-solves against another base; the factorization is reused.
    pub fn rebase(&self, base: &BaseSurface) -> Result<Self> {
        let z_ref = self.system.solve(&self.n_tilde, base)?;
        let z_base = base.eval_all(self.system.xy());
        Ok(Self {
            h_ref: height_span(&z_ref, &z_base),
            z_ref,
            z_base,
            base: base.clone(),
            n_tilde: self.n_tilde.clone(),
            system: self.system.clone(),
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }
}

pub fn build_reference(
    vis: &VisibleSet,
    bnd: &BoundaryInfo,
    base: &BaseSurface,
    rho: SamplingDensity,
) -> Result<ReferenceRelief> {
    let (neighbors, k) = sector_graph(&vis.xy, NEIGHBORS, 2.0 * rho.get());
    let system =
        LinearSystem::from_graph(&vis.xy, &neighbors, k, &bnd.is_boundary, BOUNDARY_LAMBDA)?;
    let n_tilde: Vec<Vector3<f64>> = vis
        .normals
        .iter()
        .zip(&bnd.dist)
        .map(|(n, &d)| blend_normal(n, boundary_weight(d, rho.get())))
        .collect();
    let z_ref = system.solve(&n_tilde, base)?;
    let z_base = base.eval_all(&vis.xy);
    Ok(ReferenceRelief {
        h_ref: height_span(&z_ref, &z_base),
        z_ref,
        z_base,
        base: base.clone(),
        n_tilde: Arc::new(n_tilde),
        system: Arc::new(system),
    })
}

/// XY rectangle of the visible points grown by `2 rho` on every side.
pub fn ratio_domain(vis: &VisibleSet, rho: SamplingDensity) -> ([f64; 2], [f64; 2]) {
    let pad = 2.0 * rho.get();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &vis.xy {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad])
}

/// Control ratios `(z_hat - z_b) / (z_ref - z_b)`, clamped to the mapping
/// range and fitted over the domain with weights `((z_ref - z_b) / h_ref)^2`,
/// so the fit error is measured in height.
pub fn fit_ratio_field(
    controls: &ControlSet,
    sol: &HeightSolution,
    reference: &ReferenceRelief,
    domain: ([f64; 2], [f64; 2]),
    levels: usize,
) -> RatioField {
    let floor = DEGENERATE_DENOMINATOR * reference.h_ref;
    let mut sites = Vec::with_capacity(controls.len());
    let mut ratios = Vec::with_capacity(controls.len());
    let mut weights = Vec::with_capacity(controls.len());
    let scale = reference.h_ref.max(f64::MIN_POSITIVE);
    for (p, &vi) in controls.indices.iter().enumerate() {
        let den = reference.z_ref[vi] - reference.z_base[vi];
        if den.abs() < floor || den == 0.0 {
            continue;
        }
        sites.push(controls.xy[p]);
        ratios.push(((sol.z_hat[p] - sol.z_base[p]) / den).clamp(0.0, MAX_RATIO));
        weights.push((den / scale).powi(2));
    }
    RatioField::fit_weighted(&sites, &ratios, &weights, domain.0, domain.1, levels)
}

/// `z_b + clamp(ratio, 0, 1.5) (z_ref - z_b)` at every visible point.
pub fn map_heights(xy: &[[f64; 2]], reference: &ReferenceRelief, field: &RatioField) -> Vec<f64> {
    xy.par_iter()
        .with_min_len(4096)
        .enumerate()
        .map(|(i, p)| {
            let r = field.eval(p[0], p[1]).clamp(0.0, MAX_RATIO);
            let zb = reference.z_base[i];
            zb + r * (reference.z_ref[i] - zb)
        })
        .collect()
}
