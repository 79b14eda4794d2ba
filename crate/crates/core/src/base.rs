//! Carrier surfaces the relief is built on.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ReliefError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSurface {
    Plane {
        #[serde(default)]
        z0: f64,
    },
    /// Two planes meeting along `x = x0` at height 0 with slopes `s1` (left) and `s2` (right).
    FoldedPlane { x0: f64, s1: f64, s2: f64 },
    /// `amp * sin(2 pi freq t)` along one axis.
    Wave { amp: f64, freq: f64, axis: Axis },
    /// Bilinear samples on a regular grid, row-major in y, clamped outside.
    Heightfield {
        origin: [f64; 2],
        cell: f64,
        dims: [usize; 2],
        values: Vec<f64>,
    },
}

impl Default for BaseSurface {
    fn default() -> Self {
        BaseSurface::Plane { z0: 0.0 }
    }
}

impl BaseSurface {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            BaseSurface::Plane { z0 } => *z0,
            BaseSurface::FoldedPlane { x0, s1, s2 } => {
                let d = x - x0;
                if d < 0.0 {
                    s1 * d
                } else {
                    s2 * d
                }
            }
            BaseSurface::Wave { amp, freq, axis } => {
                let t = match axis {
                    Axis::X => x,
                    Axis::Y => y,
                };
                amp * (2.0 * PI * freq * t).sin()
            }
            BaseSurface::Heightfield {
                origin,
                cell,
                dims,
                values,
            } => {
                let u = ((x - origin[0]) / cell).clamp(0.0, (dims[0] - 1) as f64);
                let v = ((y - origin[1]) / cell).clamp(0.0, (dims[1] - 1) as f64);
                let (i, j) = (
                    (u as usize).min(dims[0].saturating_sub(2)),
                    (v as usize).min(dims[1].saturating_sub(2)),
                );
                let (fu, fv) = (u - i as f64, v - j as f64);
                let at = |a: usize, b: usize| {
                    values[(b.min(dims[1] - 1)) * dims[0] + a.min(dims[0] - 1)]
                };
                let bottom = at(i, j) * (1.0 - fu) + at(i + 1, j) * fu;
                let top = at(i, j + 1) * (1.0 - fu) + at(i + 1, j + 1) * fu;
                bottom * (1.0 - fv) + top * fv
            }
        }
    }

    pub fn eval_all(&self, xy: &[[f64; 2]]) -> Vec<f64> {
        xy.iter().map(|p| self.eval(p[0], p[1])).collect()
    }

    pub fn validate(&self) -> Result<(), ReliefError> {
        let ok = match self {
            BaseSurface::Plane { z0 } => z0.is_finite(),
            BaseSurface::FoldedPlane { x0, s1, s2 } => [x0, s1, s2].iter().all(|v| v.is_finite()),
            BaseSurface::Wave { amp, freq, .. } => amp.is_finite() && freq.is_finite(),
            BaseSurface::Heightfield {
                origin,
                cell,
                dims,
                values,
            } => {
                *cell > 0.0
                    && origin.iter().all(|v| v.is_finite())
                    && dims[0] >= 1
                    && dims[1] >= 1
                    && values.len() == dims[0] * dims[1]
                    && values.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ReliefError::InvalidParams(format!(
                "bad base surface {self:?}"
            )))
        }
    }
}

/// `plane`, `plane:z0`, `fold:x0,s1,s2` or `wave:amp,freq,axis`.
impl FromStr for BaseSurface {
    type Err = ReliefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReliefError::InvalidParams(format!("unrecognized base `{s}`"));
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let args: Vec<&str> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',').map(str::trim).collect()
        };
        let num = |t: &str| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        let base = match (kind.trim(), args.as_slice()) {
            ("plane", []) => BaseSurface::Plane { z0: 0.0 },
            ("plane", [z0]) => BaseSurface::Plane { z0: num(z0)? },
            ("fold", [x0, s1, s2]) => BaseSurface::FoldedPlane {
                x0: num(x0)?,
                s1: num(s1)?,
                s2: num(s2)?,
            },
            ("wave", [amp, freq, axis]) => BaseSurface::Wave {
                amp: num(amp)?,
                freq: num(freq)?,
                axis: match *axis {
                    "x" | "X" => Axis::X,
                    "y" | "Y" => Axis::Y,
                    _ => return Err(bad()),
                },
            },
            _ => return Err(bad()),
        };
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(
            "plane".parse::<BaseSurface>().unwrap(),
            BaseSurface::Plane { z0: 0.0 }
        );
        assert_eq!(
            "plane:1.5".parse::<BaseSurface>().unwrap(),
            BaseSurface::Plane { z0: 1.5 }
        );
        assert_eq!(
            "fold:0.5,0.1,-0.2".parse::<BaseSurface>().unwrap(),
            BaseSurface::FoldedPlane {
                x0: 0.5,
                s1: 0.1,
                s2: -0.2
            }
        );
        assert_eq!(
            "wave:0.1,2,y".parse::<BaseSurface>().unwrap(),
            BaseSurface::Wave {
                amp: 0.1,
                freq: 2.0,
                axis: Axis::Y
            }
        );
        assert!("wave:1,2".parse::<BaseSurface>().is_err());
        assert!("cone".parse::<BaseSurface>().is_err());
        assert!("plane:nan".parse::<BaseSurface>().is_err());
    }

    #[test]
    fn fold_is_continuous_with_kink() {
        let b = BaseSurface::FoldedPlane {
            x0: 1.0,
            s1: 1.0,
            s2: -2.0,
        };
        assert_eq!(b.eval(1.0, 0.0), 0.0);
        assert!((b.eval(1.0 - 1e-9, 0.0)).abs() < 1e-8);
        assert!((b.eval(0.0, 3.0) + 1.0).abs() < 1e-15);
        assert!((b.eval(2.0, 3.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn heightfield_bilinear() {
        let b = BaseSurface::Heightfield {
            origin: [0.0, 0.0],
            cell: 1.0,
            dims: [2, 2],
            values: vec![0.0, 1.0, 2.0, 3.0],
        };
        assert_eq!(b.eval(0.5, 0.5), 1.5);
        assert_eq!(b.eval(-5.0, 9.0), 2.0);
        assert_eq!(b.eval(1.0, 1.0), 3.0);
    }

    #[test]
    fn json_shape() {
        let b: BaseSurface =
            serde_json::from_str(r#"{"kind":"wave","amp":1,"freq":0.5,"axis":"x"}"#).unwrap();
        assert!((b.eval(0.5, 0.0) - 1.0).abs() < 1e-12);
        let p: BaseSurface = serde_json::from_str(r#"{"kind":"plane"}"#).unwrap();
        assert_eq!(p, BaseSurface::default());
    }
}
