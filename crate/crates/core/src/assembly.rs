//! Stiffness, mass and load assembly, and the discrete obstacle problem.
//!
//! Every global basis function factors as `X(x) Y(y)` and every integration
//! cell is a tensor product of 1D cells, so the tensor Gauss rule factorizes
//! and the Hessian form splits into Kronecker products of 1D matrices:
//!
//! `A = K2 ⊗ M + 2 K1 ⊗ K1 + M ⊗ K2`
//!
//! with `M = ∫ X_a X_b`, `K1 = ∫ X_a' X_b'`, `K2 = ∫ X_a'' X_b''` integrated
//! cell by cell between the cover breakpoints.

use crate::par::{self, Execution};
use crate::pum::{Cover1D, Cover2D};
use crate::quadrature::GaussLegendre;
use crate::sparse::{CsrMatrix, SparseSym};

/// Gauss points per direction per integration cell. The integrand of the
/// Hessian form has degree at most 10 per direction on each cell.
pub const GAUSS_POINTS: usize = 6;

/// Relative drop tolerance (times the largest diagonal entry).
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Default constant of the active-set rule.
pub const DEFAULT_PDAS_C: f64 = 100.0;

/// 1D Gram matrices of a cover: values, first and second derivatives.
#[derive(Clone, Debug)]
pub struct Gram1D {
    n: usize,
    pattern: Vec<Vec<usize>>,
    mass: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Gram1D {
    pub fn new(cover: &Cover1D, gauss_points: usize) -> Self {
        let n = cover.n_nodes();
        let rule = GaussLegendre::new(gauss_points);
        let mut mass = vec![0.0; n * n];
        let mut first = vec![0.0; n * n];
        let mut second = vec![0.0; n * n];
        let mut connected = vec![false; n * n];
        for (lo, hi, active) in cover.cells() {
            for (x, w) in rule.on_interval(lo, hi) {
                let vals: Vec<[f64; 3]> = active
                    .iter()
                    .map(|&a| {
                        [
                            cover.basis_eval(a, x, 0),
                            cover.basis_eval(a, x, 1),
                            cover.basis_eval(a, x, 2),
                        ]
                    })
                    .collect();
                for (ia, &a) in active.iter().enumerate() {
                    for (ib, &b) in active.iter().enumerate() {
                        let k = a * n + b;
                        connected[k] = true;
                        mass[k] += w * vals[ia][0] * vals[ib][0];
                        first[k] += w * vals[ia][1] * vals[ib][1];
                        second[k] += w * vals[ia][2] * vals[ib][2];
                    }
                }
            }
        }
        let pattern = (0..n)
            .map(|a| (0..n).filter(|&b| connected[a * n + b]).collect())
            .collect();
        Gram1D {
            n,
            pattern,
            mass,
            first,
            second,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Nodes whose basis functions overlap node `a`, ascending.
    pub fn pattern(&self, a: usize) -> &[usize] {
        &self.pattern[a]
    }

    pub fn mass(&self, a: usize, b: usize) -> f64 {
        self.mass[a * self.n + b]
    }

    pub fn first(&self, a: usize, b: usize) -> f64 {
        self.first[a * self.n + b]
    }

    pub fn second(&self, a: usize, b: usize) -> f64 {
        self.second[a * self.n + b]
    }
}

/// Assembles the upper triangle of `Σ_t Xt ⊗ Yt`, where `entry(gx, gy, ix, iy, jx, jy)`
/// evaluates the sum for 1D index pairs `(ix, jx)` and `(iy, jy)`.
fn kronecker_assemble<F>(cover: &Cover2D, gauss_points: usize, exec: Execution, entry: F) -> SparseSym
where
    F: Fn(&Gram1D, &Gram1D, usize, usize, usize, usize) -> f64 + Sync + Send,
{
    let nx = cover.x_cover().n_nodes();
    let n = cover.dof_count();
    let (gx, gy) = par::join(
        exec,
        || Gram1D::new(cover.x_cover(), gauss_points),
        || Gram1D::new(cover.y_cover(), gauss_points),
    );
    let rows: Vec<Vec<(usize, f64)>> = par::map_range(exec, n, |row| {
        let (ix, iy) = (row % nx, row / nx);
        let mut out = Vec::with_capacity(gx.pattern(ix).len() * gy.pattern(iy).len());
        for &jy in gy.pattern(iy) {
            for &jx in gx.pattern(ix) {
                let col = jy * nx + jx;
                if col >= row {
                    out.push((col, entry(&gx, &gy, ix, iy, jx, jy)));
                }
            }
        }
        out
    });
    finish_rows(n, rows)
}

fn finish_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> SparseSym {
    let max_diag = rows
        .iter()
        .filter_map(|r| r.first().map(|e| e.1.abs()))
        .fold(0.0, f64::max);
    let cutoff = DROP_TOLERANCE * max_diag;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row {
            if c == r || v.abs() > cutoff {
                cols.push(c);
                vals.push(v);
            }
        }
        row_ptr.push(cols.len());
    }
    SparseSym::from_upper(CsrMatrix::from_parts(n, n, row_ptr, cols, vals))
        .expect("assembled rows are upper triangular")
}

/// Stiffness matrix of `a(v, w) = ∫ D²v : D²w`.
pub fn assemble_stiffness(cover: &Cover2D, exec: Execution) -> SparseSym {
    assemble_stiffness_with(cover, GAUSS_POINTS, exec)
}

/// Stiffness matrix with a chosen number of Gauss points per direction.
pub fn assemble_stiffness_with(cover: &Cover2D, gauss_points: usize, exec: Execution) -> SparseSym {
    kronecker_assemble(cover, gauss_points, exec, |gx, gy, ix, iy, jx, jy| {
        gx.second(ix, jx) * gy.mass(iy, jy)
            + 2.0 * gx.first(ix, jx) * gy.first(iy, jy)
            + gx.mass(ix, jx) * gy.second(iy, jy)
    })
}

/// L₂ mass matrix `∫ v w`.
pub fn assemble_mass(cover: &Cover2D, exec: Execution) -> SparseSym {
    kronecker_assemble(cover, GAUSS_POINTS, exec, |gx, gy, ix, iy, jx, jy| {
        gx.mass(ix, jx) * gy.mass(iy, jy)
    })
}

/// Load vector `(f, φ_g)` by tensor Gauss quadrature on the integration cells.
pub fn assemble_load<F>(cover: &Cover2D, f: F, exec: Execution) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let rule = GaussLegendre::new(GAUSS_POINTS);
    let xcells = cover.x_cover().cells();
    let ycells = cover.y_cover().cells();
    let nx = cover.x_cover().n_nodes();
    // per 1D cell: quadrature points with weights and basis values
    let tabulate = |c: &Cover1D, cells: &[(f64, f64, Vec<usize>)]| -> Vec<Vec<(f64, f64, Vec<f64>)>> {
        cells
            .iter()
            .map(|(lo, hi, active)| {
                rule.on_interval(*lo, *hi)
                    .map(|(x, w)| (x, w, active.iter().map(|&a| c.basis_eval(a, x, 0)).collect()))
                    .collect()
            })
            .collect()
    };
    let tx = tabulate(cover.x_cover(), &xcells);
    let ty = tabulate(cover.y_cover(), &ycells);
    let strips: Vec<Vec<(usize, f64)>> = par::map_range(exec, ycells.len(), |cy| {
        let mut out = Vec::new();
        let yact = &ycells[cy].2;
        for (cx, (_, _, xact)) in xcells.iter().enumerate() {
            let mut local = vec![0.0; xact.len() * yact.len()];
            for (y, wy, vy) in &ty[cy] {
                for (x, wx, vx) in &tx[cx] {
                    let fw = f(*x, *y) * wx * wy;
                    if fw == 0.0 {
                        continue;
                    }
                    for (b, &yb) in vy.iter().enumerate() {
                        for (a, &xa) in vx.iter().enumerate() {
                            local[b * xact.len() + a] += fw * xa * yb;
                        }
                    }
                }
            }
            for (b, &iy) in yact.iter().enumerate() {
                for (a, &ix) in xact.iter().enumerate() {
                    out.push((iy * nx + ix, local[b * xact.len() + a]));
                }
            }
        }
        out
    });
    let mut load = vec![0.0; cover.dof_count()];
    for strip in strips {
        for (g, v) in strip {
            load[g] += v;
        }
    }
    load
}

/// Obstacle values `ψ(p)` at every node.
pub fn obstacle_vector<F: Fn(f64, f64) -> f64>(cover: &Cover2D, psi: F) -> Vec<f64> {
    cover.interpolate_fn(psi)
}

/// The obstacle `ψ(x) = 1 - 5|x|² + |x|⁴` of the reference experiment.
pub fn reference_obstacle(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    1.0 - 5.0 * r2 + r2 * r2
}

/// Discrete obstacle problem: minimize `½ uᵀAu - fᵀu` subject to `u(p) ≥ ψ(p)`.
#[derive(Clone, Debug)]
pub struct ObstacleProblem {
    pub stiffness: SparseSym,
    pub load: Vec<f64>,
    pub obstacle: Vec<f64>,
    /// Constant `c > 0` of the active-set rule.
    pub pdas_c: f64,
}

impl ObstacleProblem {
    pub fn new<F, P>(cover: &Cover2D, f: F, psi: P, pdas_c: f64, exec: Execution) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
        P: Fn(f64, f64) -> f64,
    {
        ObstacleProblem {
            stiffness: assemble_stiffness(cover, exec),
            load: assemble_load(cover, f, exec),
            obstacle: obstacle_vector(cover, psi),
            pdas_c,
        }
    }

    /// `f = 0` with the reference obstacle.
    pub fn reference(cover: &Cover2D, pdas_c: f64, exec: Execution) -> Self {
        let stiffness = assemble_stiffness(cover, exec);
        let n = stiffness.n();
        ObstacleProblem {
            stiffness,
            load: vec![0.0; n],
            obstacle: obstacle_vector(cover, reference_obstacle),
            pdas_c,
        }
    }

    pub fn n(&self) -> usize {
        self.stiffness.n()
    }
}
