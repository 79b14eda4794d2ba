//! Sparse least-squares height system with a one-time Cholesky factorization.
//!
//! Each control `p` contributes one row per neighbor `q` asking for
//! `z_p - z_q = -(n_x (x_p - x_q) + n_y (y_p - y_q)) / n_z`, which is the
//! orthogonality `n . (p - q) = 0` divided through by `n_z`. Boundary
//! controls add `lambda z_p = lambda z_b(x_p, y_p)`. The matrix therefore
//! depends only on the neighbor graph and the rim; parameters only move the
//! right-hand side, so `A^T A` is factored once and every frame is a pair of
//! triangular solves.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Par, Side};
use nalgebra::Vector3;

use crate::base::BaseSurface;
use crate::compression::{CompressedNormals, NZ_FLOOR};
use crate::error::{ReliefError, Result};
use crate::sampling::ControlSet;

/// Weight of boundary position rows.
pub const BOUNDARY_LAMBDA: f64 = 10.0;

/// Compressed sparse column storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    fn from_entries(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry") += v;
                continue;
            }
            last = Some((r, c));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                d[self.row_idx[k]][j] += self.values[k];
            }
        }
        d
    }

    /// Order-sensitive hash of structure and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.word(self.nrows as u64);
        h.word(self.ncols as u64);
        self.col_ptr.iter().for_each(|&v| h.word(v as u64));
        self.row_idx.iter().for_each(|&v| h.word(v as u64));
        self.values.iter().for_each(|v| h.word(v.to_bits()));
        h.0
    }
}

pub(crate) struct Fnv(pub u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Assembled and factored height system.
pub struct LinearSystem {
    xy: Vec<[f64; 2]>,
    pairs: Vec<[u32; 2]>,
    anchors: Vec<u32>,
    lambda: f64,
    a: CscMatrix,
    ata: CscMatrix,
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
}

impl std::fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSystem")
            .field("rows", &self.nrows())
            .field("cols", &self.ncols())
            .field("anchors", &self.anchors.len())
            .finish()
    }
}

impl LinearSystem {
    /// Builds and factors the system for points `xy` with row-major `k`-neighbor
    /// lists; boundary points become position rows.
    pub fn from_graph(
        xy: &[[f64; 2]],
        neighbors: &[u32],
        k: usize,
        is_boundary: &[bool],
        lambda: f64,
    ) -> Result<Self> {
        let n = xy.len();
        assert_eq!(neighbors.len(), n * k);
        assert_eq!(is_boundary.len(), n);
        check_anchored(n, neighbors, k, is_boundary)?;

        let pairs: Vec<[u32; 2]> = (0..n)
            .flat_map(|p| {
                neighbors[p * k..(p + 1) * k]
                    .iter()
                    .map(move |&q| [p as u32, q])
            })
            .collect();
        let anchors: Vec<u32> = (0..n as u32).filter(|&p| is_boundary[p as usize]).collect();

        let mut a_entries = Vec::with_capacity(2 * pairs.len() + anchors.len());
        for (r, &[p, q]) in pairs.iter().enumerate() {
            a_entries.push((r, p as usize, 1.0));
            a_entries.push((r, q as usize, -1.0));
        }
        for (i, &p) in anchors.iter().enumerate() {
            a_entries.push((pairs.len() + i, p as usize, lambda));
        }
        let a = CscMatrix::from_entries(pairs.len() + anchors.len(), n, a_entries);

        let mut ata_entries = Vec::with_capacity(3 * pairs.len() + anchors.len());
        for &[p, q] in &pairs {
            let (p, q) = (p as usize, q as usize);
            if p == q {
                continue;
            }
            ata_entries.push((p, p, 1.0));
            ata_entries.push((q, q, 1.0));
            ata_entries.push((p.max(q), p.min(q), -1.0));
        }
        for &p in &anchors {
            ata_entries.push((p as usize, p as usize, lambda * lambda));
        }
        let ata = CscMatrix::from_entries(n, n, ata_entries);

        let ata_faer = SparseColMat::<usize, f64>::new(
            SymbolicSparseColMat::new_checked(n, n, ata.col_ptr.clone(), None, ata.row_idx.clone()),
            ata.values.clone(),
        );
        let symbolic = factorize_symbolic_cholesky(
            ata_faer.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| ReliefError::FactorizationFailure(format!("{e:?}")))?;
        let mut l_values = vec![0.0; symbolic.len_val()];
        {
            let mut mem = MemBuffer::new(
                symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
            );
            symbolic
                .factorize_numeric_llt(
                    &mut l_values,
                    ata_faer.as_ref(),
                    Side::Lower,
                    LltRegularization::default(),
                    Par::Seq,
                    MemStack::new(&mut mem),
                    Default::default(),
                )
                .map_err(|e| ReliefError::FactorizationFailure(format!("{e:?}")))?;
        }
        Ok(Self {
            xy: xy.to_vec(),
            pairs,
            anchors,
            lambda,
            a,
            ata,
            symbolic,
            l_values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.pairs.len() + self.anchors.len()
    }

    pub fn ncols(&self) -> usize {
        self.xy.len()
    }

    pub fn a(&self) -> &CscMatrix {
        &self.a
    }

    /// Lower triangle of `A^T A`.
    pub fn normal_matrix(&self) -> &CscMatrix {
        &self.ata
    }

    /// Fill-reducing ordering chosen at factorization.
    pub fn ordering(&self) -> Vec<usize> {
        match self.symbolic.perm() {
            Some(p) => p.arrays().0.to_vec(),
            None => (0..self.ncols()).collect(),
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv(self.a.fingerprint());
        h.word(self.ata.fingerprint());
        self.ordering().iter().for_each(|&v| h.word(v as u64));
        self.l_values.iter().for_each(|v| h.word(v.to_bits()));
        h.0
    }

    pub fn anchors(&self) -> &[u32] {
        &self.anchors
    }

    pub fn xy(&self) -> &[[f64; 2]] {
        &self.xy
    }

    /// Right-hand side `B` for compressed normals and base heights at the anchors.
    pub fn rhs(&self, n_tilde: &[Vector3<f64>], base: &BaseSurface) -> Vec<f64> {
        assert_eq!(n_tilde.len(), self.ncols());
        let mut b = Vec::with_capacity(self.nrows());
        for &[p, q] in &self.pairs {
            b.push(normal_row_rhs(
                &n_tilde[p as usize],
                self.xy[p as usize],
                self.xy[q as usize],
            ));
        }
        for &p in &self.anchors {
            let [x, y] = self.xy[p as usize];
            b.push(self.lambda * base.eval(x, y));
        }
        b
    }

    /// `A^T b` for an arbitrary right-hand side.
    pub fn at_mul(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (r, &[p, q]) in self.pairs.iter().enumerate() {
            out[p as usize] += b[r];
            out[q as usize] -= b[r];
        }
        for (i, &p) in self.anchors.iter().enumerate() {
            out[p as usize] += self.lambda * b[self.pairs.len() + i];
        }
        out
    }

    /// Least-squares solution for a given `B`.
    pub fn solve_rhs(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_normal(self.at_mul(b))
    }

    /// Solves `A^T A x = rhs` with the retained factor.
    pub fn solve_normal(&self, atb: Vec<f64>) -> Result<Vec<f64>> {
        let n = self.ncols();
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| atb[i]);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        LltRef::new(&self.symbolic, &self.l_values).solve_in_place_with_conj(
            Conj::No,
            x.as_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(ReliefError::NonFiniteSolution)
        }
    }

    /// Heights for compressed normals, accumulating `A^T B` without forming `B`.
    pub fn solve(&self, n_tilde: &[Vector3<f64>], base: &BaseSurface) -> Result<Vec<f64>> {
        assert_eq!(n_tilde.len(), self.ncols());
        let mut atb = vec![0.0; self.ncols()];
        for &[p, q] in &self.pairs {
            let v = normal_row_rhs(
                &n_tilde[p as usize],
                self.xy[p as usize],
                self.xy[q as usize],
            );
            atb[p as usize] += v;
            atb[q as usize] -= v;
        }
        let l2 = self.lambda * self.lambda;
        for &p in &self.anchors {
            let [x, y] = self.xy[p as usize];
            atb[p as usize] += l2 * base.eval(x, y);
        }
        self.solve_normal(atb)
    }
}

#[inline]
fn normal_row_rhs(n: &Vector3<f64>, p: [f64; 2], q: [f64; 2]) -> f64 {
    -(n.x * (p[0] - q[0]) + n.y * (p[1] - q[1])) / n.z.max(NZ_FLOOR)
}

fn check_anchored(n: usize, neighbors: &[u32], k: usize, is_boundary: &[bool]) -> Result<()> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in 0..n {
        for &q in &neighbors[p * k..(p + 1) * k] {
            let (a, b) = (find(&mut parent, p), find(&mut parent, q as usize));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut anchored = vec![false; n];
    let mut size = vec![0usize; n];
    for p in 0..n {
        let r = find(&mut parent, p);
        size[r] += 1;
        anchored[r] |= is_boundary[p];
    }
    for r in 0..n {
        if size[r] > 0 && !anchored[r] {
            return Err(ReliefError::FloatingComponent { size: size[r] });
        }
    }
    Ok(())
}

/// Solved control heights.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightSolution {
    pub z_hat: Vec<f64>,
    /// Base height under each control.
    pub z_base: Vec<f64>,
    pub span: f64,
}

pub fn assemble_system(controls: &ControlSet) -> Result<LinearSystem> {
    LinearSystem::from_graph(
        &controls.xy,
        &controls.neighbors,
        controls.k,
        &controls.is_boundary,
        BOUNDARY_LAMBDA,
    )
}

pub fn solve_heights(
    sys: &LinearSystem,
    cn: &CompressedNormals,
    base: &BaseSurface,
) -> Result<HeightSolution> {
    let z_hat = sys.solve(&cn.n_tilde, base)?;
    let z_base = base.eval_all(sys.xy());
    let span = height_span(&z_hat, &z_base);
    Ok(HeightSolution {
        z_hat,
        z_base,
        span,
    })
}

/// `max(z - z_b)`, never below zero.
pub fn height_span(z: &[f64], z_base: &[f64]) -> f64 {
    z.iter().zip(z_base).map(|(a, b)| a - b).fold(0.0, f64::max)
}
