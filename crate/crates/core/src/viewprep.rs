//! View alignment, visible-point detection and boundary extraction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::cloud::{PointCloud, SamplingDensity};
use crate::error::{ReliefError, Result};

/// Rotation taking the view direction onto +Z: `R = R_y(theta_y) * R_x(theta_x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrame {
    pub theta_x: f64,
    pub theta_y: f64,
    pub rotation: Matrix3<f64>,
}

impl ViewFrame {
    pub fn for_direction(view: Vector3<f64>) -> Result<Self> {
        let len = view.norm();
        if !(len.is_finite() && len > 0.0) {
            return Err(ReliefError::ZeroDirection);
        }
        let v = view / len;
        // R_x removes the y component, R_y then removes the x component.
        let theta_x = v.y.atan2(v.z);
        let r = (v.y * v.y + v.z * v.z).sqrt();
        let theta_y = (-v.x).atan2(r);
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), theta_x);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), theta_y);
        Ok(Self {
            theta_x,
            theta_y,
            rotation: (ry * rx).into_inner(),
        })
    }
}

/// Rotates the cloud (points and normals) so `view` maps to +Z.
pub fn align_view(cloud: &PointCloud, view: Vector3<f64>) -> Result<(PointCloud, ViewFrame)> {
    let frame = ViewFrame::for_direction(view)?;
    let r = frame.rotation;
    let points = cloud.points().iter().map(|p| r * p).collect();
    let normals = cloud.normals().iter().map(|n| r * n).collect();
    Ok((PointCloud::new(points, normals)?, frame))
}

/// Regular XY cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub origin: [f64; 2],
    pub cell: f64,
    pub dims: [usize; 2],
}

impl CellGrid {
    fn covering(xy: impl Iterator<Item = [f64; 2]>, cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in xy {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let dims = [0, 1].map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1);
        Self {
            origin: lo,
            cell,
            dims,
        }
    }

    #[inline]
    pub fn cell_of(&self, p: [f64; 2]) -> [u32; 2] {
        [0, 1].map(|a| {
            (((p[a] - self.origin[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1)
                as u32
        })
    }

    #[inline]
    pub fn linear(&self, c: [u32; 2]) -> usize {
        c[1] as usize * self.dims[0] + c[0] as usize
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, c: [u32; 2]) -> [f64; 2] {
        [0, 1].map(|a| self.origin[a] + (c[a] as f64 + 0.5) * self.cell)
    }

    /// In-grid 8-neighborhood of a cell; also reports whether any neighbor fell outside.
    fn neighbors8(&self, c: [u32; 2], mut f: impl FnMut([u32; 2])) -> bool {
        let mut outside = false;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let x = c[0] as i64 + dx;
                let y = c[1] as i64 + dy;
                if x < 0 || y < 0 || x >= self.dims[0] as i64 || y >= self.dims[1] as i64 {
                    outside = true;
                } else {
                    f([x as u32, y as u32]);
                }
            }
        }
        outside
    }
}

/// Points visible from +Z after alignment.
#[derive(Debug, Clone)]
pub struct VisibleSet {
    /// Ascending indices into the aligned cloud.
    pub indices: Vec<usize>,
    /// Occupancy grid with cell side `2 rho`.
    pub grid: CellGrid,
    /// Per-cell maximum z (`-inf` for empty cells).
    pub cell_max_z: Vec<f64>,
    /// Cell of each visible point.
    pub cells: Vec<[u32; 2]>,
    pub xy: Vec<[f64; 2]>,
    pub z: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
}

impl VisibleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A point is visible iff `cell_max_z - z < 2 rho` within its `2 rho` XY cell.
pub fn detect_visible(cloud: &PointCloud, rho: SamplingDensity) -> VisibleSet {
    let tol = 2.0 * rho.get();
    let xy_all: Vec<[f64; 2]> = cloud.points().iter().map(|p| [p.x, p.y]).collect();
    let grid = CellGrid::covering(xy_all.iter().copied(), tol);
    let mut cell_max_z = vec![f64::NEG_INFINITY; grid.len()];
    let cell_of: Vec<[u32; 2]> = xy_all.iter().map(|&p| grid.cell_of(p)).collect();
    for (p, c) in cloud.points().iter().zip(&cell_of) {
        let k = grid.linear(*c);
        cell_max_z[k] = cell_max_z[k].max(p.z);
    }
    let mut vis = VisibleSet {
        indices: Vec::new(),
        grid,
        cell_max_z,
        cells: Vec::new(),
        xy: Vec::new(),
        z: Vec::new(),
        normals: Vec::new(),
    };
    for (i, p) in cloud.points().iter().enumerate() {
        let c = cell_of[i];
        if vis.cell_max_z[vis.grid.linear(c)] - p.z < tol {
            vis.indices.push(i);
            vis.cells.push(c);
            vis.xy.push(xy_all[i]);
            vis.z.push(p.z);
            vis.normals.push(cloud.normals()[i]);
        }
    }
    vis
}

/// Rim membership and XY distance to the rim for each visible point.
#[derive(Debug, Clone)]
pub struct BoundaryInfo {
    pub is_boundary: Vec<bool>,
    pub dist: Vec<f64>,
}

impl BoundaryInfo {
    pub fn boundary_count(&self) -> usize {
        self.is_boundary.iter().filter(|&&b| b).count()
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Flags visible points in occupied cells with an empty 8-neighbor (holes
/// included) and measures XY distance to the nearest flagged point.
///
/// Distances come from a multi-source cell propagation of nearest-seed labels,
/// refined per point by exact distances to the seeds of its 3x3 cell block.
pub fn detect_boundary(vis: &VisibleSet, _rho: SamplingDensity) -> BoundaryInfo {
    let grid = &vis.grid;
    let occupied: Vec<bool> = vis.cell_max_z.iter().map(|z| z.is_finite()).collect();
    let mut cell_is_rim = vec![false; grid.len()];
    for k in 0..grid.len() {
        if !occupied[k] {
            continue;
        }
        let c = [(k % grid.dims[0]) as u32, (k / grid.dims[0]) as u32];
        let mut empty = false;
        let outside = grid.neighbors8(c, |n| empty |= !occupied[grid.linear(n)]);
        cell_is_rim[k] = empty || outside;
    }
    let is_boundary: Vec<bool> = vis
        .cells
        .iter()
        .map(|&c| cell_is_rim[grid.linear(c)])
        .collect();

    // Nearest-seed propagation over cells.
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut seed: Vec<Option<u32>> = vec![None; grid.len()];
    let mut seed_d = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    for (i, (&c, &b)) in vis.cells.iter().zip(&is_boundary).enumerate() {
        if !b {
            continue;
        }
        let k = grid.linear(c);
        let d = d2(grid.center(c), vis.xy[i]);
        if d < seed_d[k] {
            seed_d[k] = d;
            seed[k] = Some(i as u32);
        }
    }
    for k in 0..grid.len() {
        if seed[k].is_some() {
            heap.push(Item(seed_d[k], k));
        }
    }
    while let Some(Item(d, k)) = heap.pop() {
        if d > seed_d[k] {
            continue;
        }
        let s = seed[k].expect("seeded");
        let c = [(k % grid.dims[0]) as u32, (k / grid.dims[0]) as u32];
        grid.neighbors8(c, |n| {
            let nk = grid.linear(n);
            if !occupied[nk] {
                return;
            }
            let nd = d2(grid.center(n), vis.xy[s as usize]);
            if nd < seed_d[nk] {
                seed_d[nk] = nd;
                seed[nk] = Some(s);
                heap.push(Item(nd, nk));
            }
        });
    }

    let dist = (0..vis.len())
        .map(|i| {
            if is_boundary[i] {
                return 0.0;
            }
            let c = vis.cells[i];
            let mut best = seed[grid.linear(c)]
                .map(|s| d2(vis.xy[i], vis.xy[s as usize]))
                .unwrap_or(f64::INFINITY);
            grid.neighbors8(c, |n| {
                if let Some(s) = seed[grid.linear(n)] {
                    best = best.min(d2(vis.xy[i], vis.xy[s as usize]));
                }
            });
            best.sqrt()
        })
        .collect();
    BoundaryInfo { is_boundary, dist }
}
