//! Compressed sparse row storage: a general CSR matrix and a symmetric matrix
//! kept as its upper triangle.

use std::io::{BufRead, Write};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// General sparse matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays; column indices must be sorted within rows.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(cols.len(), vals.len());
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        debug_assert!(cols.iter().all(|&c| c < ncols));
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Sums duplicate triplets.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix::from_parts(nrows, ncols, row_ptr, cols, vals)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64], exec: Execution) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        par::fill_indexed(exec, y, |r| self.row(r).map(|(c, v)| v * x[c]).sum());
    }

    /// `y = Aᵀ x`.
    pub fn transpose_matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
    }

    /// Matrix formed by the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            let range = self.row_ptr[r]..self.row_ptr[r + 1];
            cols.extend_from_slice(&self.cols[range.clone()]);
            vals.extend_from_slice(&self.vals[range]);
            row_ptr.push(cols.len());
        }
        CsrMatrix::from_parts(rows.len(), self.ncols, row_ptr, cols, vals)
    }
}

/// Symmetric sparse matrix stored as the upper triangle (diagonal included) in
/// row-major compressed form.
#[derive(Debug)]
pub struct SparseSym {
    upper: CsrMatrix,
    full: OnceLock<CsrMatrix>,
}

impl Clone for SparseSym {
    fn clone(&self) -> Self {
        SparseSym {
            upper: self.upper.clone(),
            full: OnceLock::new(),
        }
    }
}

impl PartialEq for SparseSym {
    fn eq(&self, other: &Self) -> bool {
        self.upper == other.upper
    }
}

impl SparseSym {
    /// Wraps an upper-triangular CSR matrix.
    pub fn from_upper(upper: CsrMatrix) -> Result<Self> {
        if upper.nrows != upper.ncols {
            return Err(Error::param("symmetric matrix must be square"));
        }
        for r in 0..upper.nrows {
            if upper.row(r).any(|(c, _)| c < r) {
                return Err(Error::param(format!("row {r} has entries below the diagonal")));
            }
        }
        Ok(SparseSym {
            upper,
            full: OnceLock::new(),
        })
    }

    /// Builds from triplets of either triangle; each `(i, j)` is folded onto
    /// the upper triangle and duplicates are summed. Use only one triangle per
    /// off-diagonal pair.
    pub fn from_triplets(n: usize, t: Vec<(usize, usize, f64)>) -> Result<Self> {
        let t = t
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        Self::from_upper(CsrMatrix::from_triplets(n, n, t))
    }

    /// Builds from a dense row-major symmetric matrix, dropping exact zeros.
    pub fn from_dense(n: usize, a: &[f64]) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                if a[i * n + j] != 0.0 {
                    t.push((i, j, a[i * n + j]));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect()).unwrap()
    }

    pub fn n(&self) -> usize {
        self.upper.nrows
    }

    /// Stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.upper.nnz()
    }

    pub fn upper(&self) -> &CsrMatrix {
        &self.upper
    }

    /// Both triangles, built on first use.
    pub fn full(&self) -> &CsrMatrix {
        self.full.get_or_init(|| {
            let n = self.n();
            let mut counts = vec![0usize; n + 1];
            for r in 0..n {
                for (c, _) in self.upper.row(r) {
                    counts[r + 1] += 1;
                    if c != r {
                        counts[c + 1] += 1;
                    }
                }
            }
            for r in 0..n {
                counts[r + 1] += counts[r];
            }
            let nnz = counts[n];
            let mut next = counts.clone();
            let mut cols = vec![0usize; nnz];
            let mut vals = vec![0.0; nnz];
            // rows are visited in order, so lower-triangle entries of row c
            // arrive sorted by column and precede its upper entries
            for r in 0..n {
                for (c, v) in self.upper.row(r) {
                    if c != r {
                        cols[next[c]] = r;
                        vals[next[c]] = v;
                        next[c] += 1;
                    }
                }
                for (c, v) in self.upper.row(r) {
                    cols[next[r]] = c;
                    vals[next[r]] = v;
                    next[r] += 1;
                }
            }
            CsrMatrix::from_parts(n, n, counts, cols, vals)
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.upper.get(i, j)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.upper.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64], exec: Execution) {
        self.full().matvec(x, y, exec);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y, Execution::default());
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let full = self.full();
        (0..self.n())
            .map(|r| full.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Principal submatrix on `keep`; row/column `k` of the result is `keep[k]`.
    pub fn submatrix(&self, keep: &[usize]) -> Result<SparseSym> {
        let n = self.n();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in keep.iter().enumerate() {
            if i >= n {
                return Err(Error::param(format!("index {i} out of range for dimension {n}")));
            }
            if pos[i] != usize::MAX {
                return Err(Error::param(format!("duplicate index {i}")));
            }
            pos[i] = k;
        }
        let sorted = keep.windows(2).all(|w| w[0] < w[1]);
        if sorted {
            // relabelling preserves the upper triangle and column order
            let mut row_ptr = Vec::with_capacity(keep.len() + 1);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            row_ptr.push(0);
            for &i in keep {
                for (c, v) in self.upper.row(i) {
                    if pos[c] != usize::MAX {
                        cols.push(pos[c]);
                        vals.push(v);
                    }
                }
                row_ptr.push(cols.len());
            }
            return SparseSym::from_upper(CsrMatrix::from_parts(
                keep.len(),
                keep.len(),
                row_ptr,
                cols,
                vals,
            ));
        }
        let mut t = Vec::new();
        for &i in keep {
            for (c, v) in self.upper.row(i) {
                if pos[c] != usize::MAX {
                    t.push((pos[i], pos[c], v));
                }
            }
        }
        SparseSym::from_triplets(keep.len(), t)
    }

    /// Dense row-major copy; intended for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut d = vec![0.0; n * n];
        for r in 0..n {
            for (c, v) in self.upper.row(r) {
                d[r * n + c] = v;
                d[c * n + r] = v;
            }
        }
        d
    }

    /// Writes Matrix Market `coordinate real symmetric` (lower triangle, 1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n(), self.n(), self.nnz())?;
        for r in 0..self.n() {
            for (c, v) in self.upper.row(r) {
                writeln!(w, "{} {} {:.17e}", c + 1, r + 1, v)?;
            }
        }
        Ok(())
    }

    /// Reads Matrix Market coordinate data. `symmetric` files may store either
    /// triangle; for `general` files only the upper triangle is read.
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseSym> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let h = header.to_ascii_lowercase();
        let fields: Vec<&str> = h.split_whitespace().collect();
        if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
            return Err(Error::Parse(format!("bad header: {header}")));
        }
        if fields[2] != "coordinate" {
            return Err(Error::Parse("only coordinate format is supported".into()));
        }
        if fields[3] != "real" && fields[3] != "integer" {
            return Err(Error::Parse(format!("unsupported field type {}", fields[3])));
        }
        let symmetric = match fields[4] {
            "symmetric" => true,
            "general" => false,
            s => return Err(Error::Parse(format!("unsupported symmetry {s}"))),
        };
        let mut size: Option<(usize, usize, usize)> = None;
        let mut t = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = |what: &str| {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("missing {what} in line '{line}'")))
            };
            if size.is_none() {
                let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
                let m = parse(next("rows")?)?;
                let n = parse(next("cols")?)?;
                let nnz = parse(next("nnz")?)?;
                if m != n {
                    return Err(Error::Parse(format!("matrix is {m}x{n}, expected square")));
                }
                size = Some((m, n, nnz));
                continue;
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Parse(format!("bad index '{s}'")))
            };
            let i = parse_idx(next("row")?)? - 1;
            let j = parse_idx(next("col")?)? - 1;
            let v: f64 = next("value")?
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
            let n = size.unwrap().0;
            if i >= n || j >= n {
                return Err(Error::Parse(format!("entry ({}, {}) out of range", i + 1, j + 1)));
            }
            if symmetric || i <= j {
                t.push((i.min(j), i.max(j), v));
            }
        }
        let (n, _, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
        if symmetric && t.len() != nnz {
            return Err(Error::Parse(format!("expected {nnz} entries, found {}", t.len())));
        }
        SparseSym::from_triplets(n, t)
    }
}

/// Writes one value per line.
pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

pub fn read_vector<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        out.push(
            s.parse()
                .map_err(|e: std::num::ParseFloatError| Error::Parse(format!("'{s}': {e}")))?,
        );
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
