//! Analytic test geometry with exact normals.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

fn build(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> PointCloud {
    PointCloud::new(points, normals).expect("synthetic cloud is valid")
}

/// `nx * ny` grid at spacing `s` on the plane `z = z0`, origin at the corner.
pub fn grid_plane(nx: usize, ny: usize, s: f64, z0: f64) -> PointCloud {
    let mut p = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            p.push(Point3::new(i as f64 * s, j as f64 * s, z0));
        }
    }
    let n = vec![Vector3::z(); p.len()];
    build(p, n)
}

/// Fibonacci sampling of a full sphere of radius `r` at the origin.
pub fn sphere(n: usize, r: f64) -> PointCloud {
    let (mut p, mut nn) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let d = fib_dir(i, z);
        p.push(Point3::from(d * r));
        nn.push(d);
    }
    build(p, nn)
}

/// Fibonacci sampling of the upper half (`z >= 0`) of a sphere.
pub fn hemisphere(n: usize, r: f64) -> PointCloud {
    let (mut p, mut nn) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let z = 1.0 - (i as f64 + 0.5) / n as f64;
        let d = fib_dir(i, z);
        p.push(Point3::from(d * r));
        nn.push(d);
    }
    build(p, nn)
}

fn fib_dir(i: usize, z: f64) -> Vector3<f64> {
    let rad = (1.0 - z * z).max(0.0).sqrt();
    let phi = i as f64 * GOLDEN_ANGLE;
    Vector3::new(rad * phi.cos(), rad * phi.sin(), z)
}

/// Open cylinder of radius `r` around the z axis, `z` in `[0, len]`,
/// with roughly square sampling of `n_around` points per ring.
pub fn cylinder(n_around: usize, r: f64, len: f64) -> PointCloud {
    let step = 2.0 * PI * r / n_around as f64;
    let rings = (len / step).round() as usize + 1;
    let (mut p, mut nn) = (Vec::new(), Vec::new());
    for k in 0..rings {
        let z = k as f64 * step;
        let shift = if k % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..n_around {
            let t = 2.0 * PI * (i as f64 + shift) / n_around as f64;
            let d = Vector3::new(t.cos(), t.sin(), 0.0);
            p.push(Point3::new(r * d.x, r * d.y, z));
            nn.push(d);
        }
    }
    build(p, nn)
}

/// Grid points at spacing `s` inside the disk of radius `r` on `z = 0`.
pub fn disk(r: f64, s: f64) -> PointCloud {
    let m = (r / s).ceil() as i64;
    let mut p = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let (x, y) = (i as f64 * s, j as f64 * s);
            if x * x + y * y <= r * r {
                p.push(Point3::new(x, y, 0.0));
            }
        }
    }
    let n = vec![Vector3::z(); p.len()];
    build(p, n)
}

/// Heightfield `z = f(x, y)` sampled on an `n * n` grid over `[0, size]^2`.
pub fn heightfield(n: usize, size: f64, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> PointCloud {
    let s = size / (n - 1) as f64;
    let (mut p, mut nn) = (Vec::with_capacity(n * n), Vec::with_capacity(n * n));
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * s, j as f64 * s);
            let (z, fx, fy) = f(x, y);
            p.push(Point3::new(x, y, z));
            nn.push(Vector3::new(-fx, -fy, 1.0).normalize());
        }
    }
    build(p, nn)
}

/// Smooth bumpy terrain over `[0, size]^2`, peak height about `0.15 * size`.
pub fn bumpy(n: usize, size: f64) -> PointCloud {
    let w = 2.0 * PI / size;
    let a = 0.05 * size;
    heightfield(n, size, move |x, y| {
        let (u, v) = (x - 0.5 * size, y - 0.5 * size);
        let g = (-(u * u + v * v) / (0.08 * size * size)).exp();
        let gz = 2.0 * a * g;
        let (gx, gy) = (
            -2.0 * u / (0.08 * size * size) * gz,
            -2.0 * v / (0.08 * size * size) * gz,
        );
        let s = a * (3.0 * w * x).sin() * (2.0 * w * y).cos();
        let sx = a * 3.0 * w * (3.0 * w * x).cos() * (2.0 * w * y).cos();
        let sy = -a * 2.0 * w * (3.0 * w * x).sin() * (2.0 * w * y).sin();
        (gz + s, gx + sx, gy + sy)
    })
}

/// Two overlapping planar sheets with a depth step of `0.3 L_d` (of the
/// combined cloud) along the seam where the upper one starts. The lower sheet
/// is `n * n` at spacing `s` and rises with `slope` in x. The upper sheet
/// covers the right half in x and the middle 80% in y, falls with `slope`,
/// and sits above the lower one so the pair forms a ridge once the step is
/// removed.
pub fn offset_planes(n: usize, s: f64, slope: f64) -> PointCloud {
    let side = (n - 1) as f64 * s;
    let (i0, j0) = ((n - 1) / 2, (n - 1) / 10);
    let seam = i0 as f64 * s;
    // Solve L_d for an offset equal to 0.3 L_d, including the tilt rise.
    let rise = slope * seam;
    let mut ld = 2f64.sqrt() * side;
    for _ in 0..100 {
        let dz = (0.3 * ld + rise).max(slope * side);
        ld = (2.0 * side * side + dz * dz).sqrt();
    }
    let offset = 0.3 * ld;
    let (mut p, mut nn) = (Vec::new(), Vec::new());
    for j in 0..n {
        for i in 0..n {
            let x = i as f64 * s;
            p.push(Point3::new(x, j as f64 * s, slope * x));
            nn.push(Vector3::new(-slope, 0.0, 1.0).normalize());
        }
    }
    for j in j0..n - j0 {
        for i in i0..n {
            let x = i as f64 * s;
            p.push(Point3::new(
                x,
                j as f64 * s,
                rise + offset - slope * (x - seam),
            ));
            nn.push(Vector3::new(slope, 0.0, 1.0).normalize());
        }
    }
    build(p, nn)
}

/// Hemisphere of radius `r` resting on an `m * m` plane grid of side `4r`
/// centered under it at `z = 0`.
pub fn hemisphere_on_plane(n_hemi: usize, r: f64, m: usize) -> PointCloud {
    let hemi = hemisphere(n_hemi, r);
    let s = 4.0 * r / (m - 1) as f64;
    let mut plane = grid_plane(m, m, s, 0.0);
    let shift = Vector3::new(-2.0 * r, -2.0 * r, -1e-3 * r);
    let pts: Vec<_> = plane.points().iter().map(|p| p + shift).collect();
    plane = build(pts, plane.normals().to_vec());
    hemi.merged(&plane)
}

/// Uniform random points in `[0,1]^3` with random unit normals.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(n);
    let mut nn = Vec::with_capacity(n);
    for _ in 0..n {
        p.push(Point3::new(rng.random(), rng.random(), rng.random()));
        let z: f64 = rng.random_range(-1.0..1.0);
        let t: f64 = rng.random_range(0.0..2.0 * PI);
        let rad = (1.0 - z * z).sqrt();
        nn.push(Vector3::new(rad * t.cos(), rad * t.sin(), z));
    }
    build(p, nn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_normals_are_radial() {
        let c = sphere(500, 2.0);
        for (p, n) in c.points().iter().zip(c.normals()) {
            assert!((p.coords / 2.0 - n).norm() < 1e-12);
        }
    }

    #[test]
    fn offset_planes_ratio() {
        let c = offset_planes(20, 0.1, 0.1);
        let ld = c.diagonal();
        let upper = c.points()[400];
        let off = upper.z - 0.1 * upper.x;
        assert!((off - 0.3 * ld).abs() < 1e-9 * ld);
    }

    #[test]
    fn heightfield_normals_match_slope() {
        let c = heightfield(5, 1.0, |x, _| (2.0 * x, 2.0, 0.0));
        let n = c.normals()[0];
        assert!((n - Vector3::new(-2.0, 0.0, 1.0).normalize()).norm() < 1e-12);
    }
}
