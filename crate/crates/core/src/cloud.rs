//! Point-cloud data model and sampling-density estimation.

use nalgebra::{Point3, Vector3};

use crate::error::{ReliefError, Result};
use crate::spatial::Grid3;

/// Minimum number of points a cloud must carry.
pub const MIN_POINTS: usize = 4;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in iter {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Positions with unit normals.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Vec<Vector3<f64>>,
    bbox: Aabb,
}

impl PointCloud {
    /// Builds a cloud, renormalizing every normal and rejecting non-finite data.
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(ReliefError::MalformedFile(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if points.len() < MIN_POINTS {
            return Err(ReliefError::TooFewPoints {
                found: points.len(),
                needed: MIN_POINTS,
            });
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(ReliefError::MalformedFile(format!(
                "non-finite coordinate at point {i}"
            )));
        }
        let mut normals = normals;
        for (i, n) in normals.iter_mut().enumerate() {
            let len = n.norm();
            if !len.is_finite() || len <= f64::EPSILON {
                return Err(ReliefError::MalformedFile(format!(
                    "zero or non-finite normal at point {i}"
                )));
            }
            *n /= len;
        }
        let bbox = Aabb::from_points(&points).expect("non-empty");
        if bbox.diagonal() <= 0.0 {
            return Err(ReliefError::MalformedFile(
                "all points coincide (zero bounding box)".into(),
            ));
        }
        Ok(Self {
            points,
            normals,
            bbox,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Bounding-box diagonal length `L_d`.
    pub fn diagonal(&self) -> f64 {
        self.bbox.diagonal()
    }

    /// Concatenates two clouds (multi-model scenes).
    pub fn merged(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut normals = self.normals.clone();
        normals.extend_from_slice(&other.normals);
        let bbox = Aabb::from_points(&points).expect("non-empty");
        PointCloud {
            points,
            normals,
            bbox,
        }
    }
}

/// Average sampling density: the mean nearest-neighbor distance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SamplingDensity(f64);

impl SamplingDensity {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho > 0.0 {
            Ok(Self(rho))
        } else {
            Err(ReliefError::InvalidParams(format!(
                "sampling density must be positive, got {rho}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Mean nearest-neighbor Euclidean distance over all points.
///
/// The grid cell starts from a bounding-box guess; the nearest-neighbor search
/// itself is exact, so the cell size only affects speed.
pub fn estimate_density(points: &[Point3<f64>]) -> Result<SamplingDensity> {
    if points.len() < 2 {
        return Err(ReliefError::TooFewPoints {
            found: points.len(),
            needed: 2,
        });
    }
    let bbox = Aabb::from_points(points).expect("non-empty");
    let ext = bbox.extent();
    // Treat the cloud as a surface: area of the two largest extents.
    let mut dims = [ext.x, ext.y, ext.z];
    dims.sort_by(|a, b| b.total_cmp(a));
    let area = (dims[0] * dims[1].max(dims[0] * 1e-3)).max(f64::MIN_POSITIVE);
    let coarse = (area / points.len() as f64)
        .sqrt()
        .max(bbox.diagonal() * 1e-9);
    let grid = Grid3::build(points, coarse * 2.0);
    let sum: f64 = (0..points.len())
        .map(|i| {
            grid.nearest(points, &points[i], Some(i))
                .map_or(0.0, |(d2, _)| d2.sqrt())
        })
        .sum();
    let rho = sum / points.len() as f64;
    if rho > 0.0 {
        SamplingDensity::new(rho)
    } else {
        Err(ReliefError::MalformedFile(
            "all points are duplicates; density is zero".into(),
        ))
    }
}
