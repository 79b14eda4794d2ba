//! XY Delaunay topology and per-frame vertex normals.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{ReliefError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReliefMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
}

impl ReliefMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        normals: Vec<Vector3<f64>>,
    ) -> Self {
        assert_eq!(vertices.len(), normals.len());
        Self {
            vertices,
            triangles,
            normals,
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }
}

struct Site {
    p: Point2<f64>,
    idx: u32,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.p
    }
}

/// Delaunay triangles of the XY points, counter-clockwise, dropping any
/// triangle with an edge longer than `max_edge`.
pub fn triangulate_xy(xy: &[[f64; 2]], max_edge: f64) -> Result<Vec<[u32; 3]>> {
    if xy.len() < 3 {
        return Err(ReliefError::DegenerateInput);
    }
    let sites: Vec<Site> = xy
        .iter()
        .enumerate()
        .map(|(i, p)| Site {
            p: Point2::new(p[0], p[1]),
            idx: i as u32,
        })
        .collect();
    let dt: DelaunayTriangulation<Site> =
        DelaunayTriangulation::bulk_load_stable(sites).map_err(|_| ReliefError::DegenerateInput)?;
    if dt.num_inner_faces() == 0 {
        return Err(ReliefError::DegenerateInput);
    }
    let max2 = max_edge * max_edge;
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut tris: Vec<[u32; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.data().idx))
        .filter(|t| {
            let [a, b, c] = t.map(|i| xy[i as usize]);
            d2(a, b) <= max2 && d2(b, c) <= max2 && d2(c, a) <= max2
        })
        .map(|t| {
            // Canonical rotation: smallest index first, orientation kept.
            let r = (0..3).min_by_key(|&k| t[k]).unwrap_or(0);
            [t[r], t[(r + 1) % 3], t[(r + 2) % 3]]
        })
        .collect();
    tris.sort_unstable();
    Ok(tris)
}

/// Triangles plus a vertex-to-face incidence table.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTopology {
    pub triangles: Vec<[u32; 3]>,
    starts: Vec<u32>,
    faces: Vec<u32>,
}

impl MeshTopology {
    pub fn new(n_vertices: usize, triangles: Vec<[u32; 3]>) -> Self {
        let mut starts = vec![0u32; n_vertices + 1];
        for t in &triangles {
            for &v in t {
                starts[v as usize + 1] += 1;
            }
        }
        for i in 0..n_vertices {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut faces = vec![0u32; starts[n_vertices] as usize];
        for (f, t) in triangles.iter().enumerate() {
            for &v in t {
                faces[fill[v as usize] as usize] = f as u32;
                fill[v as usize] += 1;
            }
        }
        Self {
            triangles,
            starts,
            faces,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn faces_of(&self, v: usize) -> &[u32] {
        &self.faces[self.starts[v] as usize..self.starts[v + 1] as usize]
    }

    pub fn isolated_count(&self) -> usize {
        (0..self.vertex_count())
            .filter(|&v| self.faces_of(v).is_empty())
            .count()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::solver::Fnv::default();
        for t in &self.triangles {
            t.iter().for_each(|&v| h.word(v as u64));
        }
        h.0
    }
}

/// Unit face normals facing `+z`, averaged per vertex; isolated vertices get `+z`.
pub fn update_normals(topo: &MeshTopology, xy: &[[f64; 2]], z: &[f64]) -> Vec<Vector3<f64>> {
    let pos = |i: u32| Vector3::new(xy[i as usize][0], xy[i as usize][1], z[i as usize]);
    let face_n: Vec<Vector3<f64>> = topo
        .triangles
        .par_iter()
        .with_min_len(4096)
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (pos(a), pos(b), pos(c));
            let n = (pb - pa).cross(&(pc - pa));
            let n = if n.z < 0.0 { -n } else { n };
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect();
    (0..topo.vertex_count())
        .into_par_iter()
        .with_min_len(4096)
        .map(|v| {
            let sum: Vector3<f64> = topo.faces_of(v).iter().map(|&f| face_n[f as usize]).sum();
            let len = sum.norm();
            if len > 0.0 {
                sum / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Vec<[f64; 2]> {
        let mut xy = Vec::new();
        for j in 0..n {
            for i in 0..n {
                xy.push([i as f64, j as f64]);
            }
        }
        xy
    }

    #[test]
    fn square_two_triangles() {
        let xy = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = triangulate_xy(&xy, 10.0).unwrap();
        assert_eq!(t.len(), 2);
        let area: f64 = t.iter().map(|t| signed_area(&xy, t)).sum();
        assert!((area - 1.0).abs() < 1e-15);
    }

    fn signed_area(xy: &[[f64; 2]], t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|i| xy[i as usize]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    #[test]
    fn ccw_and_area_conserved() {
        let xy = grid(12);
        let t = triangulate_xy(&xy, 2.0).unwrap();
        assert!(t.iter().all(|t| signed_area(&xy, t) > 0.0));
        let area: f64 = t.iter().map(|t| signed_area(&xy, t)).sum();
        assert!((area - 121.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_rejected() {
        let xy: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert_eq!(
            triangulate_xy(&xy, 100.0).unwrap_err().code(),
            "DegenerateInput"
        );
        assert!(triangulate_xy(&xy[..2], 100.0).is_err());
    }

    #[test]
    fn clusters_not_bridged() {
        let mut xy = grid(5);
        xy.extend(grid(5).iter().map(|p| [p[0] + 24.0, p[1]]));
        let t = triangulate_xy(&xy, 4.0).unwrap();
        for tri in &t {
            let side: Vec<bool> = tri.iter().map(|&i| i < 25).collect();
            assert!(side.iter().all(|&s| s) || side.iter().all(|&s| !s));
        }
        assert_eq!(t.len(), 2 * 32);
    }

    #[test]
    fn flat_and_tilted_normals() {
        let xy = grid(6);
        let topo = MeshTopology::new(xy.len(), triangulate_xy(&xy, 2.0).unwrap());
        let flat = update_normals(&topo, &xy, &vec![0.0; xy.len()]);
        assert!(flat.iter().all(|n| (n - Vector3::z()).norm() < 1e-15));
        let z: Vec<f64> = xy.iter().map(|p| p[0]).collect();
        let tilt = update_normals(&topo, &xy, &z);
        let want = Vector3::new(-1.0, 0.0, 1.0).normalize();
        assert!(tilt.iter().all(|n| (n - want).norm() < 1e-12));
    }

    #[test]
    fn isolated_vertex_points_up() {
        let xy = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [50.0, 50.0]];
        let topo = MeshTopology::new(4, triangulate_xy(&xy, 2.0).unwrap());
        assert_eq!(topo.isolated_count(), 1);
        let n = update_normals(&topo, &xy, &[0.0, 1.0, 0.0, 7.0]);
        assert_eq!(n[3], Vector3::z());
    }

    #[test]
    fn random_points_are_delaunay() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xy: Vec<[f64; 2]> = (0..300).map(|_| [rng.random(), rng.random()]).collect();
        let t = triangulate_xy(&xy, f64::INFINITY).unwrap();
        for tri in &t {
            let [a, b, c] = tri.map(|i| xy[i as usize]);
            for (k, p) in xy.iter().enumerate() {
                if tri.contains(&(k as u32)) {
                    continue;
                }
                assert!(in_circle(a, b, c, *p) <= 1e-12);
            }
        }
    }

    fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
        let (ax, ay) = (a[0] - d[0], a[1] - d[1]);
        let (bx, by) = (b[0] - d[0], b[1] - d[1]);
        let (cx, cy) = (c[0] - d[0], c[1] - d[1]);
        (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay)
            + (cx * cx + cy * cy) * (ax * by - bx * ay)
    }
}
