//! Uniform-grid spatial indices for radius and nearest-neighbor queries.

use nalgebra::Point3;

/// Keep dense grids from exploding on sparse, wide clouds.
const MAX_CELLS_PER_ITEM: usize = 8;

/// Static 3D bucket grid over a point set (counting-sorted cells).
#[derive(Debug, Clone)]
pub struct Grid3 {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid3 {
    pub fn build(points: &[Point3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let mut cell = cell;
        let budget = (points.len() * MAX_CELLS_PER_ITEM).max(64);
        let dims = loop {
            let d = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1));
            if d[0].saturating_mul(d[1]).saturating_mul(d[2]) <= budget {
                break d;
            }
            cell *= 1.5;
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let key = |p: &Point3<f64>| -> usize {
            let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
            (c[2] * dims[1] + c[1]) * dims[0] + c[0]
        };
        let mut starts = vec![0u32; ncell + 1];
        let keys: Vec<usize> = points.iter().map(key).collect();
        for &k in &keys {
            starts[k + 1] += 1;
        }
        for i in 0..ncell {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Self {
            origin: lo,
            cell,
            dims,
            starts,
            items,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn coord(&self, p: &Point3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn bucket(&self, c: [i64; 3]) -> &[u32] {
        if (0..3).any(|a| c[a] < 0 || c[a] >= self.dims[a] as i64) {
            return &[];
        }
        let k = (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize;
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Calls `f(index, squared_distance)` for every point with distance `<= radius`.
    pub fn for_each_within(
        &self,
        points: &[Point3<f64>],
        p: &Point3<f64>,
        radius: f64,
        mut f: impl FnMut(usize, f64),
    ) {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let c = self.coord(p);
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    for &i in self.bucket([c[0] + dx, c[1] + dy, c[2] + dz]) {
                        let d2 = (points[i as usize] - p).norm_squared();
                        if d2 <= r2 {
                            f(i as usize, d2);
                        }
                    }
                }
            }
        }
    }

    /// Nearest point to `p` (excluding `exclude`), as `(squared_distance, index)`.
    pub fn nearest(
        &self,
        points: &[Point3<f64>],
        p: &Point3<f64>,
        exclude: Option<usize>,
    ) -> Option<(f64, usize)> {
        let c = self.coord(p);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1) as i64
            + c.iter().map(|v| v.abs()).max().unwrap_or(0);
        let mut best: Option<(f64, usize)> = None;
        for r in 0..=max_ring {
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        for &i in self.bucket([c[0] + dx, c[1] + dy, c[2] + dz]) {
                            let i = i as usize;
                            if Some(i) == exclude {
                                continue;
                            }
                            let d2 = (points[i] - p).norm_squared();
                            if best.is_none_or(|(b, bi)| d2 < b || (d2 == b && i < bi)) {
                                best = Some((d2, i));
                            }
                        }
                    }
                }
            }
            if let Some((b, _)) = best {
                let reach = r as f64 * self.cell;
                if b <= reach * reach {
                    break;
                }
            }
        }
        best
    }
}

/// Static 2D bucket grid over XY positions.
#[derive(Debug, Clone)]
pub struct Grid2 {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid2 {
    pub fn build(xy: &[[f64; 2]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in xy {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if xy.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let mut cell = cell;
        let budget = (xy.len() * MAX_CELLS_PER_ITEM).max(64);
        let dims = loop {
            let d = [0, 1].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1));
            if d[0].saturating_mul(d[1]) <= budget {
                break d;
            }
            cell *= 1.5;
        };
        let ncell = dims[0] * dims[1];
        let keys: Vec<usize> = xy
            .iter()
            .map(|p| {
                let c = [0, 1].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
                c[1] * dims[0] + c[0]
            })
            .collect();
        let mut starts = vec![0u32; ncell + 1];
        for &k in &keys {
            starts[k + 1] += 1;
        }
        for i in 0..ncell {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; xy.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Self {
            origin: lo,
            cell,
            dims,
            starts,
            items,
        }
    }

    fn coord(&self, p: [f64; 2]) -> [i64; 2] {
        [0, 1].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn bucket(&self, c: [i64; 2]) -> &[u32] {
        if c[0] < 0 || c[1] < 0 || c[0] >= self.dims[0] as i64 || c[1] >= self.dims[1] as i64 {
            return &[];
        }
        let k = c[1] as usize * self.dims[0] + c[0] as usize;
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// The `k` nearest points to `p` in XY, excluding `exclude`, sorted by
    /// `(squared distance, index)`.
    pub fn knn(
        &self,
        xy: &[[f64; 2]],
        p: [f64; 2],
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(f64, u32)> {
        let mut found: Vec<(f64, u32)> = Vec::with_capacity(k + 8);
        if k == 0 {
            return found;
        }
        let c = self.coord(p);
        let max_ring = self.dims[0].max(self.dims[1]) as i64 + c[0].abs().max(c[1].abs());
        let better = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        for r in 0..=max_ring {
            for dy in -r..=r {
                let step = if dy.abs() == r { 1 } else { 2 * r.max(1) };
                let mut dx = -r;
                while dx <= r {
                    for &i in self.bucket([c[0] + dx, c[1] + dy]) {
                        if Some(i as usize) == exclude {
                            continue;
                        }
                        let q = xy[i as usize];
                        let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                        let cand = (d2, i);
                        if found.len() < k {
                            found.push(cand);
                            found.sort_by(better);
                        } else if better(&cand, &found[k - 1]).is_lt() {
                            found[k - 1] = cand;
                            found.sort_by(better);
                        }
                    }
                    dx += step;
                }
            }
            if found.len() == k {
                let reach = r as f64 * self.cell;
                if found[k - 1].0 <= reach * reach {
                    break;
                }
            }
        }
        found
    }
}

/// 2D grid that accepts incremental insertions; used for Poisson-style
/// suppression during sampling.
#[derive(Debug, Clone)]
pub struct DynGrid2 {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    cells: Vec<Vec<u32>>,
}

impl DynGrid2 {
    pub fn new(lo: [f64; 2], hi: [f64; 2], cell: f64, expected: usize) -> Self {
        let mut cell = cell;
        let budget = (expected * MAX_CELLS_PER_ITEM).max(64);
        let dims = loop {
            let d = [0, 1].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1));
            if d[0].saturating_mul(d[1]) <= budget {
                break d;
            }
            cell *= 1.5;
        };
        Self {
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1]],
        }
    }

    fn coord(&self, p: [f64; 2]) -> [i64; 2] {
        [0, 1].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn slot(&self, c: [i64; 2]) -> Option<usize> {
        if c[0] < 0 || c[1] < 0 || c[0] >= self.dims[0] as i64 || c[1] >= self.dims[1] as i64 {
            None
        } else {
            Some(c[1] as usize * self.dims[0] + c[0] as usize)
        }
    }

    pub fn insert(&mut self, p: [f64; 2], id: u32) {
        let c = self.coord(p);
        let c = [
            c[0].clamp(0, self.dims[0] as i64 - 1),
            c[1].clamp(0, self.dims[1] as i64 - 1),
        ];
        let s = self.slot(c).expect("clamped");
        self.cells[s].push(id);
    }

    /// True if any inserted point lies strictly closer than `radius` to `p`.
    pub fn any_closer(&self, xy: &[[f64; 2]], p: [f64; 2], radius: f64) -> bool {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let c = self.coord(p);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let Some(s) = self.slot([c[0] + dx, c[1] + dy]) else {
                    continue;
                };
                for &i in &self.cells[s] {
                    let q = xy[i as usize];
                    if (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) < r2 {
                        return true;
                    }
                }
            }
        }
        false
    }
}
