//! Compressed sparse row storage for the P1 connectivity graph, native
//! complex matrices for the linear forms, real 2×2-block matrices for the
//! Newton systems, and the linear solvers behind them.

use std::sync::{Arc, OnceLock};

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Symmetric sparsity pattern in CSR layout with sorted column indices.
#[derive(Debug)]
pub struct SparsityPattern {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    /// `transpose[k]` is the slot of entry `(j, i)` when slot `k` holds `(i, j)`.
    transpose: Vec<usize>,
    expanded: OnceLock<ExpandedPattern>,
}

/// CSC layout of the real `2n × 2n` system with interleaved `(re, im)`
/// unknowns, together with the map from CSC slot to block entry.
#[derive(Debug)]
struct ExpandedPattern {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    source: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists; rows are sorted and
    /// deduplicated. The resulting pattern must be structurally symmetric.
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if row.last().is_some_and(|&c| c >= n) {
                return Err(Error::InvalidMesh("pattern column out of range".into()));
            }
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        let mut pattern = Self {
            n,
            row_offsets,
            col_indices,
            transpose: Vec::new(),
            expanded: OnceLock::new(),
        };
        let mut transpose = Vec::with_capacity(pattern.nnz());
        for i in 0..n {
            for k in pattern.row_range(i) {
                let j = pattern.col_indices[k];
                let t = pattern
                    .find(j, i)
                    .ok_or_else(|| Error::InvalidMesh(format!("pattern not symmetric at ({i}, {j})")))?;
                transpose.push(t);
            }
        }
        pattern.transpose = transpose;
        Ok(pattern)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    /// Slot index of entry `(i, j)`, if structurally present.
    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_indices[r.clone()].binary_search(&j).ok().map(|p| r.start + p)
    }

    fn expanded(&self) -> &ExpandedPattern {
        self.expanded.get_or_init(|| {
            let mut col_ptr = Vec::with_capacity(2 * self.n + 1);
            let mut row_idx = Vec::with_capacity(4 * self.nnz());
            let mut source = Vec::with_capacity(4 * self.nnz());
            col_ptr.push(0);
            // Column (j, s): rows (i, r) for i in the (symmetric) row j.
            for j in 0..self.n {
                for s in 0..2 {
                    for k in self.row_range(j) {
                        let i = self.col_indices[k];
                        let slot = self.transpose[k];
                        for r in 0..2 {
                            row_idx.push(2 * i + r);
                            source.push(4 * slot + 2 * r + s);
                        }
                    }
                    col_ptr.push(row_idx.len());
                }
            }
            ExpandedPattern {
                col_ptr,
                row_idx,
                source,
            }
        })
    }
}

/// Square complex matrix sharing a [`SparsityPattern`].
#[derive(Debug, Clone)]
pub struct SparseComplexMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<Complex64>,
}

impl SparseComplexMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Entry `(i, j)`; zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.pattern
            .find(i, j)
            .map_or(Complex64::new(0.0, 0.0), |k| self.values[k])
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let k = self.pattern.find(i, j).expect("entry outside sparsity pattern");
        self.values[k] += v;
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n());
        (0..self.n())
            .map(|i| {
                self.pattern
                    .row_range(i)
                    .map(|k| self.values[k] * x[self.pattern.col_indices[k]])
                    .sum()
            })
            .collect()
    }

    /// `xᴴ A x`.
    pub fn quadratic_form(&self, x: &[Complex64]) -> Complex64 {
        let ax = self.mul_vec(x);
        x.iter().zip(&ax).map(|(xi, yi)| xi.conj() * yi).sum()
    }

    /// `a·self + b·other`; both must share the same pattern.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern), "pattern mismatch");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern), "pattern mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// `max |A_ij − conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.pattern.transpose)
            .map(|(v, &t)| (v - self.values[t].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Anti-Hermitian part `(A − Aᴴ)/2`.
    pub fn anti_hermitian_part(&self) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.pattern.transpose)
            .map(|(v, &t)| 0.5 * (v - self.values[t].conj()))
            .collect();
        Self {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.n();
        let mut d = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.pattern.row_range(i) {
                row[self.pattern.col_indices[k]] = self.values[k];
            }
        }
        d
    }

    /// Real-split form: entry `z` becomes `[[Re z, −Im z], [Im z, Re z]]`.
    pub fn to_block_real(&self) -> BlockSparse {
        let blocks = self.values.iter().map(|z| [z.re, -z.im, z.im, z.re]).collect();
        BlockSparse {
            pattern: self.pattern.clone(),
            blocks,
        }
    }

    fn csc_values(&self) -> Vec<Complex64> {
        self.pattern.transpose.iter().map(|&t| self.values[t]).collect()
    }
}

/// Real matrix of `2×2` blocks on a complex pattern; block layout
/// `[a00, a01, a10, a11]` with unknowns interleaved `(re_0, im_0, re_1, …)`.
#[derive(Debug, Clone)]
pub struct BlockSparse {
    pattern: Arc<SparsityPattern>,
    blocks: Vec<[f64; 4]>,
}

impl BlockSparse {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let blocks = vec![[0.0; 4]; pattern.nnz()];
        Self { pattern, blocks }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Number of scalar rows (twice the block count).
    pub fn dim(&self) -> usize {
        2 * self.pattern.n
    }

    pub fn blocks(&self) -> &[[f64; 4]] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [[f64; 4]] {
        &mut self.blocks
    }

    /// Scalar entry at `(row, col)` of the expanded matrix.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .find(row / 2, col / 2)
            .map_or(0.0, |k| self.blocks[k][2 * (row % 2) + col % 2])
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern), "pattern mismatch");
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for r in 0..4 {
                a[r] += b[r];
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.pattern.n {
            let (mut y0, mut y1) = (0.0, 0.0);
            for k in self.pattern.row_range(i) {
                let j = self.pattern.col_indices[k];
                let b = &self.blocks[k];
                y0 += b[0] * x[2 * j] + b[1] * x[2 * j + 1];
                y1 += b[2] * x[2 * j] + b[3] * x[2 * j + 1];
            }
            y[2 * i] = y0;
            y[2 * i + 1] = y1;
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// `max |B − Bᵀ|` over all scalar entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, b) in self.blocks.iter().enumerate() {
            let t = &self.blocks[self.pattern.transpose[k]];
            worst = worst
                .max((b[0] - t[0]).abs())
                .max((b[1] - t[2]).abs())
                .max((b[2] - t[1]).abs())
                .max((b[3] - t[3]).abs());
        }
        worst
    }

    fn csc_values(&self) -> Vec<f64> {
        let flat: &[f64] = self.blocks.as_flattened();
        self.pattern.expanded().source.iter().map(|&s| flat[s]).collect()
    }
}

/// Linear solver used inside Newton iterations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    /// Sparse LU with partial pivoting; the symbolic factorization is reused.
    #[default]
    Direct,
    /// BiCGStab with 2×2 block-Jacobi preconditioning.
    BiCgStab { rel_tol: f64, max_iter: usize },
}

/// Factorization of a complex system, for repeated solves.
pub struct ComplexLu {
    lu: Lu<usize, Complex64>,
    n: usize,
}

impl ComplexLu {
    pub fn new(a: &SparseComplexMatrix) -> Result<Self> {
        let p = &a.pattern;
        let vals = a.csc_values();
        let sym = SymbolicSparseColMatRef::new_checked(p.n, p.n, &p.row_offsets, None, &p.col_indices);
        let mat = SparseColMatRef::new(sym, &vals);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        Ok(Self { lu, n: p.n })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        assert_eq!(rhs.len(), self.n);
        let mut b = Mat::<Complex64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<Complex64> = (0..self.n).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::LinearSolve("singular complex system".into()));
        }
        Ok(x)
    }
}

/// Solves `A x = b` once.
pub fn solve_complex(a: &SparseComplexMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    ComplexLu::new(a)?.solve(rhs)
}

/// Solver for real block systems that share one pattern.
pub struct BlockSolver {
    kind: SolverKind,
    symbolic: Option<(Arc<SparsityPattern>, SymbolicLu<usize>)>,
}

impl BlockSolver {
    pub fn new(kind: SolverKind) -> Self {
        Self { kind, symbolic: None }
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn solve(&mut self, a: &BlockSparse, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), a.dim());
        let x = match self.kind {
            SolverKind::Direct => self.solve_direct(a, rhs)?,
            SolverKind::BiCgStab { rel_tol, max_iter } => bicgstab(a, rhs, rel_tol, max_iter)?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution (singular system)".into()));
        }
        Ok(x)
    }

    fn solve_direct(&mut self, a: &BlockSparse, rhs: &[f64]) -> Result<Vec<f64>> {
        let ex = a.pattern.expanded();
        let n = a.dim();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &ex.col_ptr, None, &ex.row_idx);
        let reuse = matches!(&self.symbolic, Some((p, _)) if Arc::ptr_eq(p, &a.pattern));
        if !reuse {
            let s = SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
            self.symbolic = Some((a.pattern.clone(), s));
        }
        let symbolic = self.symbolic.as_ref().map(|(_, s)| s.clone()).expect("symbolic set");
        let vals = a.csc_values();
        let mat = SparseColMatRef::new(sym, &vals);
        let lu = Lu::try_new_with_symbolic(symbolic, mat).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        Ok((0..n).map(|i| b[(i, 0)]).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn bicgstab(a: &BlockSparse, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    // block-Jacobi preconditioner: inverse of each diagonal 2×2 block
    let mut diag_inv = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let k = a
            .pattern
            .find(i, i)
            .ok_or_else(|| Error::LinearSolve("missing diagonal block".into()))?;
        let [p, q, r, s] = a.blocks[k];
        let det = p * s - q * r;
        if det == 0.0 {
            return Err(Error::LinearSolve(format!("singular diagonal block {i}")));
        }
        diag_inv.push([s / det, -q / det, -r / det, p / det]);
    }
    let precond = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, m) in diag_inv.iter().enumerate() {
            out[2 * i] = m[0] * v[2 * i] + m[1] * v[2 * i + 1];
            out[2 * i + 1] = m[2] * v[2 * i] + m[3] * v[2 * i + 1];
        }
        out
    };

    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.mul_vec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) <= rel_tol * b_norm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
    }
    Err(Error::LinearSolve(format!(
        "BiCGStab did not reach relative tolerance {rel_tol:e} in {max_iter} iterations"
    )))
}
