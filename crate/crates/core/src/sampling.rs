//! Uniform control-point sampling by greedy disk suppression in XY.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cloud::SamplingDensity;
use crate::curvature::{population_std, CurvatureField};
use crate::error::{ReliefError, Result};
use crate::spatial::{DynGrid2, Grid2};
use crate::viewprep::{BoundaryInfo, VisibleSet};

pub const MIN_TARGET: usize = 100;
pub const DEFAULT_TARGET: usize = 8000;
/// Neighbor rows per control in the height system.
pub const NEIGHBORS: usize = 6;
const COUNT_SLACK: f64 = 0.10;
const CORRECTION_PASSES: usize = 4;

#[derive(Debug, Clone)]
pub struct ControlSet {
    /// Indices into the visible set, in selection order (boundary first).
    pub indices: Vec<usize>,
    pub xy: Vec<[f64; 2]>,
    pub z: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
    /// Neighbors per control (`min(6, n - 1)`).
    pub k: usize,
    /// Row-major `n * k` XY-nearest control indices.
    pub neighbors: Vec<u32>,
    pub is_boundary: Vec<bool>,
    pub dist: Vec<f64>,
    pub k_norm: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// Curvature spread over the controls.
    pub delta: f64,
    /// Suppression radius from the area rule `sqrt(n1 / n2) * rho`.
    pub radius_initial: f64,
    /// Radius actually used after count correction.
    pub radius: f64,
}

impl ControlSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors_of(&self, p: usize) -> &[u32] {
        &self.neighbors[p * self.k..(p + 1) * self.k]
    }

    pub fn boundary_count(&self) -> usize {
        self.is_boundary.iter().filter(|&&b| b).count()
    }
}

/// Selects about `target` controls: every boundary point, then interior
/// points in raster cell order, each suppressing unselected points strictly
/// closer than the sampling radius.
pub fn sample_controls(
    vis: &VisibleSet,
    bnd: &BoundaryInfo,
    curv: &CurvatureField,
    rho: SamplingDensity,
    target: usize,
) -> Result<ControlSet> {
    if target < MIN_TARGET {
        return Err(ReliefError::TargetTooSmall(target));
    }
    if target > vis.len() {
        return Err(ReliefError::TargetExceedsInput {
            target,
            available: vis.len(),
        });
    }
    let n = vis.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (vis.cells[i][1], vis.cells[i][0], i));
    let boundary: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| bnd.is_boundary[i])
        .collect();
    let interior: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| !bnd.is_boundary[i])
        .collect();

    let radius_initial = (n as f64 / target as f64).sqrt() * rho.get();
    let mut radius = radius_initial;
    let mut chosen = if target == n {
        interior.clone()
    } else {
        let mut picked = suppress(vis, &boundary, &interior, radius);
        let want = target.saturating_sub(boundary.len()) as f64;
        for _ in 0..CORRECTION_PASSES {
            let count = boundary.len() + picked.len();
            if want <= 0.0 || (count as f64 - target as f64).abs() <= COUNT_SLACK * target as f64 {
                break;
            }
            radius *= (picked.len().max(1) as f64 / want).sqrt();
            picked = suppress(vis, &boundary, &interior, radius);
        }
        picked
    };
    let mut indices = boundary;
    indices.append(&mut chosen);
    Ok(build_controls(
        vis,
        bnd,
        curv,
        indices,
        radius_initial,
        radius,
    ))
}

fn suppress(vis: &VisibleSet, boundary: &[usize], interior: &[usize], radius: f64) -> Vec<usize> {
    let (lo, hi) = xy_bounds(&vis.xy);
    let mut grid = DynGrid2::new(
        lo,
        hi,
        radius.max(1e-12),
        boundary.len() + interior.len() / 4 + 1,
    );
    for &i in boundary {
        grid.insert(vis.xy[i], i as u32);
    }
    let mut out = Vec::new();
    for &i in interior {
        if !grid.any_closer(&vis.xy, vis.xy[i], radius) {
            grid.insert(vis.xy[i], i as u32);
            out.push(i);
        }
    }
    out
}

fn xy_bounds(xy: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in xy {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

fn build_controls(
    vis: &VisibleSet,
    bnd: &BoundaryInfo,
    curv: &CurvatureField,
    indices: Vec<usize>,
    radius_initial: f64,
    radius: f64,
) -> ControlSet {
    let xy: Vec<[f64; 2]> = indices.iter().map(|&i| vis.xy[i]).collect();
    let (neighbors, k) = knn_graph(&xy, NEIGHBORS, radius);
    let k_norm: Vec<f64> = indices.iter().map(|&i| curv.k_norm[i]).collect();
    ControlSet {
        z: indices.iter().map(|&i| vis.z[i]).collect(),
        normals: indices.iter().map(|&i| vis.normals[i]).collect(),
        is_boundary: indices.iter().map(|&i| bnd.is_boundary[i]).collect(),
        dist: indices.iter().map(|&i| bnd.dist[i]).collect(),
        degenerate: indices.iter().map(|&i| curv.degenerate[i]).collect(),
        delta: population_std(&k_norm),
        k_norm,
        xy,
        k,
        neighbors,
        indices,
        radius_initial,
        radius,
    }
}

/// Directed `min(k, n - 1)`-nearest-neighbor lists in XY, row-major.
pub fn knn_graph(xy: &[[f64; 2]], k: usize, cell: f64) -> (Vec<u32>, usize) {
    let k = k.min(xy.len().saturating_sub(1));
    let grid = Grid2::build(xy, cell.max(1e-12));
    let lists: Vec<Vec<u32>> = (0..xy.len())
        .into_par_iter()
        .map(|i| {
            grid.knn(xy, xy[i], k, Some(i))
                .into_iter()
                .map(|(_, j)| j)
                .collect()
        })
        .collect();
    (lists.concat(), k)
}

/// Candidates examined per point by [`sector_graph`].
pub const SECTOR_CANDIDATES: usize = 32;
/// Angular sectors [`sector_graph`] keeps covered.
pub const SECTORS: usize = 4;

/// Directed `min(k, n - 1)`-neighbor lists in XY, row-major: the `k` nearest,
/// except that each of [`SECTORS`] equal angular sectors left empty takes its
/// nearest candidate in place of the farthest neighbor from a sector holding
/// more than one. Candidates are the [`SECTOR_CANDIDATES`] nearest points.
pub fn sector_graph(xy: &[[f64; 2]], k: usize, cell: f64) -> (Vec<u32>, usize) {
    let k = k.min(xy.len().saturating_sub(1));
    let m = SECTOR_CANDIDATES.max(k).min(xy.len().saturating_sub(1));
    let grid = Grid2::build(xy, cell.max(1e-12));
    let sector = |p: [f64; 2], q: [f64; 2]| {
        let t = (q[1] - p[1]).atan2(q[0] - p[0]) + std::f64::consts::PI;
        ((t / std::f64::consts::TAU * SECTORS as f64) as usize).min(SECTORS - 1)
    };
    let lists: Vec<Vec<u32>> = (0..xy.len())
        .into_par_iter()
        .map(|i| {
            let cand = grid.knn(xy, xy[i], m, Some(i));
            let sec: Vec<usize> = cand
                .iter()
                .map(|&(_, j)| sector(xy[i], xy[j as usize]))
                .collect();
            // Positions into `cand`, nearest first.
            let mut chosen: Vec<usize> = (0..k.min(cand.len())).collect();
            let mut count = [0usize; SECTORS];
            chosen.iter().for_each(|&c| count[sec[c]] += 1);
            for s in 0..SECTORS {
                if count[s] > 0 {
                    continue;
                }
                let Some(add) = (k..cand.len()).find(|&c| sec[c] == s) else {
                    continue;
                };
                let Some(slot) = (0..chosen.len()).rev().find(|&t| count[sec[chosen[t]]] > 1)
                else {
                    continue;
                };
                count[sec[chosen[slot]]] -= 1;
                count[s] += 1;
                chosen.remove(slot);
                chosen.push(add);
            }
            chosen.iter().map(|&c| cand[c].1).collect()
        })
        .collect();
    (lists.concat(), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::estimate_density;
    use crate::curvature::{normalize_curvature, RawCurvature};
    use crate::synth;
    use crate::viewprep::{detect_boundary, detect_visible};

    fn flat_curv(n: usize) -> CurvatureField {
        normalize_curvature(RawCurvature {
            k_mean: vec![0.0; n],
            degenerate: vec![false; n],
        })
    }

    fn run(
        cloud: &crate::PointCloud,
        target: usize,
    ) -> Result<(VisibleSet, BoundaryInfo, ControlSet)> {
        let rho = estimate_density(cloud.points()).unwrap();
        let vis = detect_visible(cloud, rho);
        let bnd = detect_boundary(&vis, rho);
        let c = sample_controls(&vis, &bnd, &flat_curv(vis.len()), rho, target)?;
        Ok((vis, bnd, c))
    }

    #[test]
    fn full_grid_is_kept() {
        let (_, _, c) = run(&synth::grid_plane(10, 10, 1.0, 0.0), 100).unwrap();
        assert_eq!(c.len(), 100);
        assert_eq!(c.radius_initial, 1.0);
    }

    #[test]
    fn errors() {
        let cloud = synth::grid_plane(10, 10, 1.0, 0.0);
        assert_eq!(run(&cloud, 99).unwrap_err().code(), "TargetTooSmall");
        assert_eq!(run(&cloud, 101).unwrap_err().code(), "TargetExceedsInput");
    }

    #[test]
    fn quarter_density_doubles_radius() {
        let (_, _, c) = run(&synth::grid_plane(200, 200, 0.01, 0.0), 10_000).unwrap();
        assert!((c.radius_initial - 0.02).abs() < 1e-12);
        assert!((7_500..=12_500).contains(&c.len()), "{}", c.len());
    }

    #[test]
    fn disk_rim_is_kept() {
        let (_, bnd, c) = run(&synth::disk(1.0, 0.01), 2000).unwrap();
        let kept: std::collections::HashSet<usize> = c.indices.iter().copied().collect();
        for (i, &b) in bnd.is_boundary.iter().enumerate() {
            if b {
                assert!(kept.contains(&i));
            }
        }
    }

    #[test]
    fn spacing_and_neighbors() {
        let (vis, _, c) = run(&synth::hemisphere(20_000, 1.0), 2000).unwrap();
        let interior: Vec<usize> = (0..c.len()).filter(|&p| !c.is_boundary[p]).collect();
        for (a, &p) in interior.iter().enumerate() {
            for &q in &interior[a + 1..] {
                let d =
                    ((c.xy[p][0] - c.xy[q][0]).powi(2) + (c.xy[p][1] - c.xy[q][1]).powi(2)).sqrt();
                assert!(d >= c.radius * 0.95);
            }
        }
        assert_eq!(c.k, 6);
        for p in 0..c.len() {
            let mut nb = c.neighbors_of(p).to_vec();
            assert!(!nb.contains(&(p as u32)));
            nb.sort();
            nb.dedup();
            assert_eq!(nb.len(), 6);
        }
        assert!(vis.len() > c.len());
    }

    #[test]
    fn sector_graph_bridges_gap() {
        // Two grid patches with a two-spacing gap between columns 9 and 12.
        let mut xy = Vec::new();
        for j in 0..10 {
            for i in (0..10).chain(12..20) {
                xy.push([i as f64, j as f64]);
            }
        }
        let (plain, k) = knn_graph(&xy, 6, 1.0);
        let (sect, k2) = sector_graph(&xy, 6, 1.0);
        assert_eq!((k, k2), (6, 6));
        let crosses = |g: &[u32], p: usize| {
            g[p * 6..p * 6 + 6]
                .iter()
                .any(|&q| (xy[p][0] < 10.0) != (xy[q as usize][0] < 10.0))
        };
        assert!((0..xy.len()).all(|p| !crosses(&plain, p)));
        for p in 0..xy.len() {
            let [x, y] = xy[p];
            if (x == 9.0 || x == 12.0) && y > 0.0 && y < 9.0 {
                assert!(crosses(&sect, p), "{x} {y}");
            }
        }
        for p in 0..xy.len() {
            let mut nb = sect[p * 6..p * 6 + 6].to_vec();
            assert!(!nb.contains(&(p as u32)));
            nb.sort();
            nb.dedup();
            assert_eq!(nb.len(), 6);
        }
    }

    #[test]
    fn deterministic() {
        let cloud = synth::hemisphere(5000, 1.0);
        let a = run(&cloud, 500).unwrap().2;
        let b = run(&cloud, 500).unwrap().2;
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.neighbors, b.neighbors);
    }
}
