//! Curvature-proportional detail on top of the mapped heights.

use rayon::prelude::*;

use crate::curvature::CurvatureField;

/// `z + gamma * k_norm * h`; degenerate points are left alone.
pub fn enhance_details(z: &[f64], curv: &CurvatureField, gamma: f64, h: f64) -> Vec<f64> {
    assert_eq!(z.len(), curv.k_norm.len());
    if gamma == 0.0 {
        return z.to_vec();
    }
    let scale = gamma * h;
    z.par_iter()
        .with_min_len(4096)
        .enumerate()
        .map(|(i, &zi)| {
            if curv.degenerate[i] {
                zi
            } else {
                zi + scale * curv.k_norm[i]
            }
        })
        .collect()
}
