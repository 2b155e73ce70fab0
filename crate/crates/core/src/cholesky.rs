//! Cholesky factorizations: a sparse factor with a fill-reducing ordering and a
//! dense diagonally pivoted factor used to detect rank deficiency.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::SparseSym;

/// Sparse Cholesky factor `P A Pᵀ = L Lᵀ`.
///
/// The ordering is approximate minimum degree and the numeric factorization is
/// supernodal (both from `faer`). Both are deterministic.
#[derive(Clone, Debug)]
pub struct CholFactor {
    n: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

/// Name of the fill-reducing ordering used by [`CholFactor`].
pub const ORDERING: &str = "approximate minimum degree";

impl CholFactor {
    pub fn new(a: &SparseSym) -> Result<Self> {
        let n = a.n();
        if n == 0 {
            return Ok(CholFactor { n, llt: None });
        }
        let upper = a.upper();
        // upper CSR == lower CSC
        let row_ptr: Vec<usize> = (0..=n)
            .scan(0usize, |acc, r| {
                let v = *acc;
                if r < n {
                    *acc += upper.row(r).count();
                }
                Some(v)
            })
            .collect();
        let mut idx = Vec::with_capacity(upper.nnz());
        let mut vals = Vec::with_capacity(upper.nnz());
        for r in 0..n {
            for (c, v) in upper.row(r) {
                idx.push(c);
                vals.push(v);
            }
        }
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &row_ptr, None, &idx);
        let mat = SparseColMatRef::new(symbolic, &vals);
        let llt = mat.sp_cholesky(Side::Lower).map_err(|e| match e {
            LltError::Numeric(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot {
                index,
            }) => Error::NotPositiveDefinite { pivot: index },
            LltError::Generic(g) => Error::Numeric(format!("{g:?}")),
        })?;
        Ok(CholFactor { n, llt: Some(llt) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        if let Some(llt) = &self.llt {
            let m = MatMut::from_column_major_slice_mut(b, self.n, 1);
            llt.solve_in_place(m);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense Cholesky with symmetric diagonal pivoting, stopped once the largest
/// remaining pivot falls below `threshold · (largest initial pivot)`.
///
/// The retained pivots index a principal submatrix that is numerically
/// positive definite; `factor` holds its Cholesky factor in pivot order.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    /// Original indices of the retained columns, in pivot order.
    pub retained: Vec<usize>,
    /// Row-major lower-triangular factor of size `retained.len()²`.
    factor: Vec<f64>,
}

impl PivotedCholesky {
    /// `a` is dense row-major `n × n` symmetric.
    pub fn new(n: usize, a: &[f64], threshold: f64) -> Self {
        assert_eq!(a.len(), n * n);
        let mut w = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_initial = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
        let cutoff = threshold * max_initial;
        let mut rank = 0;
        if max_initial > 0.0 {
            for k in 0..n {
                let (p, &piv) = (k..n)
                    .map(|i| (i, &w[i * n + i]))
                    .max_by(|x, y| x.1.total_cmp(y.1))
                    .unwrap();
                if !(piv > cutoff) {
                    break;
                }
                if p != k {
                    // symmetric swap of rows/columns k and p
                    for j in 0..n {
                        w.swap(k * n + j, p * n + j);
                    }
                    for i in 0..n {
                        w.swap(i * n + k, i * n + p);
                    }
                    perm.swap(k, p);
                }
                let d = w[k * n + k].sqrt();
                w[k * n + k] = d;
                for i in k + 1..n {
                    w[i * n + k] /= d;
                }
                for j in k + 1..n {
                    let ljk = w[j * n + k];
                    for i in j..n {
                        w[i * n + j] -= w[i * n + k] * ljk;
                    }
                    // keep the trailing block symmetric for the pivot search
                    for i in j + 1..n {
                        w[j * n + i] = w[i * n + j];
                    }
                }
                rank += 1;
            }
        }
        let mut factor = vec![0.0; rank * rank];
        for i in 0..rank {
            for j in 0..=i {
                factor[i * rank + j] = w[i * n + j];
            }
        }
        PivotedCholesky {
            retained: perm[..rank].to_vec(),
            factor,
        }
    }

    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    /// Solves with the retained principal submatrix; `b` is indexed like `retained`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let r = self.rank();
        assert_eq!(b.len(), r);
        let l = &self.factor;
        for i in 0..r {
            let mut s = b[i];
            for j in 0..i {
                s -= l[i * r + j] * b[j];
            }
            b[i] = s / l[i * r + i];
        }
        for i in (0..r).rev() {
            let mut s = b[i];
            for j in i + 1..r {
                s -= l[j * r + i] * b[j];
            }
            b[i] = s / l[i * r + i];
        }
    }

    /// Lower factor entry `(i, j)` in pivot order.
    pub fn l(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.factor[i * self.rank() + j]
        }
    }
}
