//! Compressed-row operators and a sparse LU wrapper.
//!
//! Difference operators are stored as [`CsrMatrix`] so they can be applied,
//! composed and scaled cheaply; systems are factored through faer's sparse LU.

use std::sync::Once;

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::SolverError;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            let p = cursor[r];
            cols[p] = c;
            vals[p] = v;
            cursor[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.iter().copied();
            if let Some((mut c0, mut acc)) = iter.next() {
                for (c, v) in iter {
                    if c == c0 {
                        acc += v;
                    } else {
                        indices.push(c0);
                        values.push(acc);
                        c0 = c;
                        acc = v;
                    }
                }
                indices.push(c0);
                values.push(acc);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let entries: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &entries)
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let entries: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &entries)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(c, v)| v * x[c]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "operator/vector dimension mismatch");
        (0..self.nrows).map(|i| self.row_dot(i, x)).collect()
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut entries = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    entries.push((i, j, a * b));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &entries)
    }

    /// `diag(d) * self`
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in out.indptr[i]..out.indptr[i + 1] {
                out.values[p] *= d[i];
            }
        }
        out
    }

    /// `self * diag(d)`
    pub fn scale_cols(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for p in 0..out.values.len() {
            out.values[p] *= d[out.indices[p]];
        }
        out
    }

    /// Linear combination `sum_i c_i * A_i` of equally shaped operators.
    pub fn combine(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut entries = Vec::new();
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            if c == 0.0 {
                continue;
            }
            for i in 0..m.nrows {
                entries.extend(m.row(i).map(|(j, v)| (i, j, c * v)));
            }
        }
        CsrMatrix::from_triplets(nrows, ncols, &entries)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }
}

/// Triplet accumulator for block-structured systems.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    /// Adds `scale * m[row, :]` into block position `(row_off + row, col_off + col)`
    /// for the selected rows of `m`.
    pub fn add_rows(
        &mut self,
        m: &CsrMatrix,
        rows: impl IntoIterator<Item = usize>,
        row_off: usize,
        col_off: usize,
        scale: f64,
    ) {
        for i in rows {
            for (j, v) in m.row(i) {
                self.entries.push((row_off + i, col_off + j, scale * v));
            }
        }
    }

    pub fn build(&self, nrows: usize, ncols: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(nrows, ncols, &self.entries)
    }
}

static SEQUENTIAL: Once = Once::new();

/// faer defaults to a thread pool; a fixed sequential schedule keeps every
/// factorization bit-reproducible.
pub(crate) fn force_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Sparse LU factorization of a square system.
pub struct SparseLu {
    n: usize,
    matrix: CsrMatrix,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu")
            .field("n", &self.n)
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

fn to_faer(m: &CsrMatrix) -> Result<SparseColMat<usize, f64>, SolverError> {
    let mut trip = Vec::with_capacity(m.nnz());
    for i in 0..m.nrows() {
        for (j, v) in m.row(i) {
            trip.push(Triplet::new(i, j, v));
        }
    }
    SparseColMat::try_new_from_triplets(m.nrows(), m.ncols(), &trip)
        .map_err(|e| SolverError::LinearSolver(format!("matrix creation failed: {e:?}")))
}

impl SparseLu {
    pub fn new(matrix: CsrMatrix) -> Result<Self, SolverError> {
        force_sequential();
        assert_eq!(matrix.nrows(), matrix.ncols(), "LU requires a square matrix");
        let a = to_faer(&matrix)?;
        let symbolic = SymbolicLu::try_new(a.symbolic())
            .map_err(|e| SolverError::LinearSolver(format!("symbolic LU failed: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), a.as_ref())
            .map_err(|e| SolverError::LinearSolver(format!("numeric LU failed: {e:?}")))?;
        Ok(Self {
            n: matrix.nrows(),
            matrix,
            symbolic,
            lu,
        })
    }

    /// Refactors a matrix with the same sparsity pattern, reusing the symbolic analysis.
    pub fn refactor(&mut self, matrix: CsrMatrix) -> Result<(), SolverError> {
        if matrix.indptr != self.matrix.indptr || matrix.indices != self.matrix.indices {
            *self = Self::new(matrix)?;
            return Ok(());
        }
        let a = to_faer(&matrix)?;
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_ref())
            .map_err(|e| SolverError::LinearSolver(format!("numeric LU failed: {e:?}")))?;
        self.matrix = matrix;
        Ok(())
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` with one step of iterative refinement and returns
    /// `x` together with the relative residual `|b - A x| / |b|`.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
        use faer::linalg::solvers::Solve;
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let mut x: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        let r: Vec<f64> = {
            let ax = self.matrix.mul_vec(&x);
            b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
        };
        let rr = Mat::<f64>::from_fn(self.n, 1, |i, _| r[i]);
        let dx = self.lu.solve(&rr);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += dx[(i, 0)];
        }
        let ax = self.matrix.mul_vec(&x);
        let res = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (bi - ai).powi(2))
            .sum::<f64>()
            .sqrt();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if bn > 0.0 { res / bn } else { res };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::LinearSolver(
                "factorization produced non-finite values (singular system)".into(),
            ));
        }
        Ok((x, rel))
    }
}

/// Sparse core `A` bordered by a few dense columns `C`, rows `D` and a
/// small corner block `E`:
///
/// ```text
/// [ A  C ] [x]   [b]
/// [ D  E ] [λ] = [g]
/// ```
///
/// Dense rows would make the column elimination tree of a direct LU dense,
/// so only `A` is factored and the border is eliminated through the Schur
/// complement `E − D A⁻¹ C`, followed by iterative refinement on the full
/// system. `A` must be nonsingular, though it may be poorly conditioned.
#[derive(Debug)]
pub struct BorderedLu {
    core: SparseLu,
    cols: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    corner: Vec<f64>,
    ainv_cols: Vec<Vec<f64>>,
    schur: Option<faer::linalg::solvers::PartialPivLu<f64>>,
}

/// Refinement sweeps after the first bordered solve.
const BORDER_REFINEMENT: usize = 3;

impl BorderedLu {
    /// `corner` is row-major `k × k` with `k = cols.len() = rows.len()`.
    pub fn new(
        core: CsrMatrix,
        cols: Vec<Vec<f64>>,
        rows: Vec<Vec<f64>>,
        corner: Vec<f64>,
    ) -> Result<Self, SolverError> {
        let n = core.nrows();
        let k = cols.len();
        assert_eq!(rows.len(), k, "border row and column counts differ");
        assert_eq!(corner.len(), k * k, "corner block must be k x k");
        assert!(cols.iter().chain(&rows).all(|v| v.len() == n));
        let core = SparseLu::new(core)?;
        let ainv_cols = cols
            .iter()
            .map(|c| core.solve(c).map(|(x, _)| x))
            .collect::<Result<Vec<_>, _>>()?;
        let schur = Mat::<f64>::from_fn(k, k, |i, j| corner[i * k + j] - dot(&rows[i], &ainv_cols[j]));
        if !schur.norm_max().is_finite() {
            return Err(SolverError::LinearSolver("non-finite Schur complement".into()));
        }
        let schur = (k > 0).then(|| schur.partial_piv_lu());
        Ok(Self {
            core,
            cols,
            rows,
            corner,
            ainv_cols,
            schur,
        })
    }

    pub fn dim(&self) -> usize {
        self.core.dim() + self.cols.len()
    }

    pub fn core(&self) -> &SparseLu {
        &self.core
    }

    /// Full bordered product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.core.dim();
        let k = self.cols.len();
        let mut y = self.core.matrix().mul_vec(&x[..n]);
        for (j, c) in self.cols.iter().enumerate() {
            let l = x[n + j];
            if l != 0.0 {
                y.iter_mut().zip(c).for_each(|(yi, ci)| *yi += ci * l);
            }
        }
        for i in 0..k {
            let mut v = dot(&self.rows[i], &x[..n]);
            for j in 0..k {
                v += self.corner[i * k + j] * x[n + j];
            }
            y.push(v);
        }
        y
    }

    fn sweep(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        use faer::linalg::solvers::Solve;
        let n = self.core.dim();
        let k = self.cols.len();
        let (mut x, _) = self.core.solve(&b[..n])?;
        let Some(schur) = &self.schur else {
            return Ok(x);
        };
        let g = Mat::<f64>::from_fn(k, 1, |i, _| b[n + i] - dot(&self.rows[i], &x));
        let lam = schur.solve(&g);
        for j in 0..k {
            let l = lam[(j, 0)];
            x.iter_mut().zip(&self.ainv_cols[j]).for_each(|(xi, ai)| *xi -= ai * l);
        }
        x.extend((0..k).map(|j| lam[(j, 0)]));
        Ok(x)
    }

    /// Returns the solution and its relative residual on the full system.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64), SolverError> {
        assert_eq!(b.len(), self.dim());
        let bn = norm2(b);
        let scale = if bn > 0.0 { bn } else { 1.0 };
        let mut x = self.sweep(b)?;
        let mut rel = f64::INFINITY;
        for _ in 0..=BORDER_REFINEMENT {
            let r: Vec<f64> = b.iter().zip(self.mul_vec(&x)).map(|(bi, ai)| bi - ai).collect();
            rel = norm2(&r) / scale;
            if rel < 1e-14 {
                break;
            }
            let dx = self.sweep(&r)?;
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        }
        let r: Vec<f64> = b.iter().zip(self.mul_vec(&x)).map(|(bi, ai)| bi - ai).collect();
        rel = rel.min(norm2(&r) / scale);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::LinearSolver("bordered solve produced non-finite values".into()));
        }
        Ok((x, rel))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
