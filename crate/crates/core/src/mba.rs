//! Multilevel B-spline approximation of scattered values in the plane.
//!
//! Level `l` is a uniform cubic B-spline lattice with `2^l` cells per axis
//! over the domain rectangle, fitted to the residual of the levels below it
//! with the local least-squares BA rule. The sample mean is removed first so
//! constants are reproduced exactly. Each level's contribution is scaled by
//! the non-negative least-squares factor against the residual, which keeps
//! the residual norm at the sites non-increasing. Sites may carry weights;
//! the unweighted fit uses unit weights. All levels are refined into one
//! lattice at the finest resolution for evaluation.

use rayon::prelude::*;

pub const DEFAULT_LEVELS: usize = 8;

#[inline]
fn basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

#[derive(Debug, Clone, PartialEq)]
struct Lattice {
    /// Cells per axis; the lattice has `(m + 3)^2` coefficients.
    m: usize,
    phi: Vec<f64>,
}

impl Lattice {
    fn zeros(m: usize) -> Self {
        Self {
            m,
            phi: vec![0.0; (m + 3) * (m + 3)],
        }
    }

    fn side(&self) -> usize {
        self.m + 3
    }

    #[inline]
    fn locate(&self, u: f64) -> (usize, f64) {
        let x = u * self.m as f64;
        let i = (x.floor().max(0.0) as usize).min(self.m - 1);
        (i, x - i as f64)
    }

    /// Evaluates at unit-square coordinates.
    #[inline]
    fn eval(&self, u: f64, v: f64) -> f64 {
        let (i, s) = self.locate(u);
        let (j, t) = self.locate(v);
        let (bs, bt) = (basis(s), basis(t));
        let w = self.side();
        let mut acc = 0.0;
        for l in 0..4 {
            let row = &self.phi[(j + l) * w + i..(j + l) * w + i + 4];
            acc += bt[l] * (bs[0] * row[0] + bs[1] * row[1] + bs[2] * row[2] + bs[3] * row[3]);
        }
        acc
    }

    /// BA fit of one level to `values` at unit-square sites, each site's
    /// contribution to a coefficient scaled by its weight.
    fn fit(m: usize, uv: &[[f64; 2]], values: &[f64], weights: &[f64]) -> Self {
        let mut lat = Lattice::zeros(m);
        let w = lat.side();
        let mut num = vec![0.0; w * w];
        let mut den = vec![0.0; w * w];
        for ((p, &z), &wt) in uv.iter().zip(values).zip(weights) {
            let (i, s) = lat.locate(p[0]);
            let (j, t) = lat.locate(p[1]);
            let (bs, bt) = (basis(s), basis(t));
            let mut wk = [0.0; 16];
            let mut sum2 = 0.0;
            for l in 0..4 {
                for k in 0..4 {
                    let v = bs[k] * bt[l];
                    wk[l * 4 + k] = v;
                    sum2 += v * v;
                }
            }
            for l in 0..4 {
                for k in 0..4 {
                    let v = wk[l * 4 + k];
                    let idx = (j + l) * w + i + k;
                    let phi = v * z / sum2;
                    num[idx] += wt * v * v * phi;
                    den[idx] += wt * v * v;
                }
            }
        }
        for idx in 0..w * w {
            if den[idx] > 0.0 {
                lat.phi[idx] = num[idx] / den[idx];
            }
        }
        lat
    }

    /// Exact representation on the lattice with twice as many cells.
    fn refine(&self) -> Self {
        let (m, w) = (self.m, self.side());
        let m2 = 2 * m;
        let w2 = m2 + 3;
        // Lattice position a holds knot index a - 1.
        let refine_1d = |src: &dyn Fn(usize) -> f64, dst: &mut dyn FnMut(usize, f64)| {
            for b in 0..w2 {
                let ip = b as i64 - 1;
                let v = if ip % 2 == 0 {
                    let a = (ip / 2 + 1) as usize;
                    (src(a - 1) + 6.0 * src(a) + src(a + 1)) / 8.0
                } else {
                    let a = ((ip - 1) / 2 + 1) as usize;
                    (src(a) + src(a + 1)) / 2.0
                };
                dst(b, v);
            }
        };
        // x direction: w rows of w -> w rows of w2.
        let mut tmp = vec![0.0; w * w2];
        for r in 0..w {
            let row = &self.phi[r * w..(r + 1) * w];
            refine_1d(&|a| row[a], &mut |b, v| tmp[r * w2 + b] = v);
        }
        let mut out = Lattice::zeros(m2);
        for c in 0..w2 {
            refine_1d(&|a| tmp[a * w2 + c], &mut |b, v| out.phi[b * w2 + c] = v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioField {
    lo: [f64; 2],
    size: [f64; 2],
    offset: f64,
    lattice: Lattice,
    residual_rms: Vec<f64>,
}

impl RatioField {
    pub fn constant(c: f64, lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self::fit(&[], &[], lo, hi, 1).with_offset(c)
    }

    fn with_offset(mut self, c: f64) -> Self {
        self.offset = c;
        self
    }

    /// Fits `levels` lattices over the rectangle `[lo, hi]`.
    pub fn fit(xy: &[[f64; 2]], values: &[f64], lo: [f64; 2], hi: [f64; 2], levels: usize) -> Self {
        Self::fit_weighted(xy, values, &vec![1.0; values.len()], lo, hi, levels)
    }

    /// Weighted fit: the mean, each BA coefficient and each level scale are
    /// weighted averages, and the residual history is the weighted RMS.
    pub fn fit_weighted(
        xy: &[[f64; 2]],
        values: &[f64],
        weights: &[f64],
        lo: [f64; 2],
        hi: [f64; 2],
        levels: usize,
    ) -> Self {
        assert_eq!(xy.len(), values.len());
        assert_eq!(weights.len(), values.len());
        assert!(weights.iter().all(|w| *w >= 0.0 && w.is_finite()));
        let levels = levels.max(1);
        let size = [0, 1].map(|a| (hi[a] - lo[a]).max(f64::MIN_POSITIVE));
        let uv: Vec<[f64; 2]> = xy
            .iter()
            .map(|p| [0, 1].map(|a| ((p[a] - lo[a]) / size[a]).clamp(0.0, 1.0)))
            .collect();
        let total_w: f64 = weights.iter().sum();
        let offset = if total_w > 0.0 {
            values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total_w
        } else {
            0.0
        };
        let mut r: Vec<f64> = values.iter().map(|v| v - offset).collect();
        let rms = |r: &[f64]| {
            if total_w > 0.0 {
                (r.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>() / total_w).sqrt()
            } else {
                0.0
            }
        };
        let mut history = vec![rms(&r)];
        let mut total = Lattice::zeros(1);
        for l in 0..levels {
            let m = 1usize << l;
            if l > 0 {
                total = total.refine();
            }
            let mut lat = Lattice::fit(m, &uv, &r, weights);
            let f: Vec<f64> = uv.iter().map(|p| lat.eval(p[0], p[1])).collect();
            let ff: f64 = f.iter().zip(weights).map(|(v, w)| w * v * v).sum();
            let rf: f64 = f
                .iter()
                .zip(&r)
                .zip(weights)
                .map(|((a, b), w)| w * a * b)
                .sum();
            let s = if ff > 0.0 { (rf / ff).max(0.0) } else { 0.0 };
            if s > 0.0 {
                lat.phi.iter_mut().for_each(|v| *v *= s);
                for (ri, fi) in r.iter_mut().zip(&f) {
                    *ri -= s * fi;
                }
                for (t, v) in total.phi.iter_mut().zip(&lat.phi) {
                    *t += v;
                }
            }
            history.push(rms(&r));
        }
        Self {
            lo,
            size,
            offset,
            lattice: total,
            residual_rms: history,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.lo[0]) / self.size[0]).clamp(0.0, 1.0);
        let v = ((y - self.lo[1]) / self.size[1]).clamp(0.0, 1.0);
        self.offset + self.lattice.eval(u, v)
    }

    pub fn eval_all(&self, xy: &[[f64; 2]]) -> Vec<f64> {
        xy.par_iter()
            .with_min_len(4096)
            .map(|p| self.eval(p[0], p[1]))
            .collect()
    }

    /// RMS residual at the sites: before any level, then after each level.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_rms
    }

    pub fn finest_cells(&self) -> usize {
        self.lattice.m
    }
}
