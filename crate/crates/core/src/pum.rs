//! Flat-top partition-of-unity covers of a rectangle, their nodes and the
//! nodal generalized finite element basis built on top of them.
//!
//! A 1D cover of `[a, b]` at level `l` splits the interval into `2^l` cells of
//! width `h`. Patch `i` owns cell `i`; its partition function equals one on the
//! flat-top `[x_i + βh, x_{i+1} - βh]` and blends into its neighbours across
//! bands of width `2βh` centred at the interior grid points. The blend is the
//! cubic `s(t) = 3t² - 2t³`, so every partition function is C¹ with piecewise
//! constant-bounded second derivatives. Boundary patches stay equal to one up
//! to the boundary.
//!
//! Local spaces are quadratic: interior patches carry the Lagrange quadratics
//! through the two flat-top endpoints and the midpoint, boundary patches carry
//! the single function `(x - x_b)² / (q - x_b)²`, which enforces the clamped
//! conditions. The 2D space is the tensor product, so every global basis
//! function factors as `X(x) Y(y)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default half-width of the transition bands, as a fraction of the cell width.
pub const DEFAULT_TRANSITION_RATIO: f64 = 0.25;

/// Which domain boundary a 1D patch touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySide {
    Left,
    Right,
    Interior,
}

#[derive(Clone, Debug)]
pub struct Patch1D {
    /// Support interval, clipped to the domain.
    pub support: (f64, f64),
    /// Flat-top interval, on which the partition function equals one.
    pub flat_top: (f64, f64),
    pub boundary: BoundarySide,
    /// Global 1D node indices carried by this patch (1 or 3).
    pub nodes: std::ops::Range<usize>,
}

/// A 1D flat-top cover of an interval together with its nodes.
#[derive(Clone, Debug)]
pub struct Cover1D {
    level: u32,
    interval: (f64, f64),
    cell_width: f64,
    transition_ratio: f64,
    patches: Vec<Patch1D>,
    nodes: Vec<f64>,
    node_patch: Vec<usize>,
}

/// Cubic blend and its first two derivatives on `[0, 1]`.
#[inline]
fn blend(t: f64, order: u8) -> f64 {
    match order {
        0 => t * t * (3.0 - 2.0 * t),
        1 => 6.0 * t * (1.0 - t),
        _ => 6.0 - 12.0 * t,
    }
}

impl Cover1D {
    pub fn new(level: u32, interval: (f64, f64), transition_ratio: f64) -> Result<Self> {
        if level == 0 || level > 24 {
            return Err(Error::param(format!("cover level must be in 1..=24, got {level}")));
        }
        if !(transition_ratio > 0.0 && transition_ratio < 0.5) {
            return Err(Error::param(format!(
                "transition ratio must lie in (0, 1/2), got {transition_ratio}"
            )));
        }
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::param(format!("invalid interval ({a}, {b})")));
        }
        let n = 1usize << level;
        let h = (b - a) / n as f64;
        let bh = transition_ratio * h;
        let grid = |k: usize| if k == n { b } else { a + k as f64 * h };

        let mut patches = Vec::with_capacity(n);
        let mut nodes = Vec::with_capacity(3 * n);
        let mut node_patch = Vec::with_capacity(3 * n);
        for i in 0..n {
            let (lo, hi) = (grid(i), grid(i + 1));
            let support = ((lo - bh).max(a), (hi + bh).min(b));
            let flat_top = (lo + bh, hi - bh);
            let boundary = if i == 0 {
                BoundarySide::Left
            } else if i == n - 1 {
                BoundarySide::Right
            } else {
                BoundarySide::Interior
            };
            let first = nodes.len();
            match boundary {
                BoundarySide::Left => nodes.push(flat_top.1),
                BoundarySide::Right => nodes.push(flat_top.0),
                BoundarySide::Interior => {
                    nodes.push(flat_top.0);
                    nodes.push(0.5 * (lo + hi));
                    nodes.push(flat_top.1);
                }
            }
            node_patch.resize(nodes.len(), i);
            patches.push(Patch1D {
                support,
                flat_top,
                boundary,
                nodes: first..nodes.len(),
            });
        }
        Ok(Cover1D {
            level,
            interval,
            cell_width: h,
            transition_ratio,
            patches,
            nodes,
            node_patch,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn transition_ratio(&self) -> f64 {
        self.transition_ratio
    }

    pub fn patches(&self) -> &[Patch1D] {
        &self.patches
    }

    /// Node coordinates, strictly increasing.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_patch(&self, node: usize) -> usize {
        self.node_patch[node]
    }

    /// Grid point `x_k`, `k = 0..=n_patches`.
    pub fn grid_point(&self, k: usize) -> f64 {
        if k == self.n_patches() {
            self.interval.1
        } else {
            self.interval.0 + k as f64 * self.cell_width
        }
    }

    fn half_band(&self) -> f64 {
        self.transition_ratio * self.cell_width
    }

    /// `order`-th derivative of the partition function of `patch` at `x`.
    pub fn pu_eval(&self, patch: usize, x: f64, order: u8) -> Result<f64> {
        if patch >= self.n_patches() {
            return Err(Error::param(format!(
                "patch {patch} out of range (cover has {})",
                self.n_patches()
            )));
        }
        if order > 2 {
            return Err(Error::param(format!("derivative order {order} > 2")));
        }
        Ok(self.pu(patch, x, order))
    }

    pub(crate) fn pu(&self, patch: usize, x: f64, order: u8) -> f64 {
        let n = self.n_patches();
        let bh = self.half_band();
        let w = 2.0 * bh;
        let scale = match order {
            0 => 1.0,
            1 => 1.0 / w,
            _ => 1.0 / (w * w),
        };
        if patch > 0 {
            let g = self.grid_point(patch);
            if x >= g - bh && x < g + bh {
                return blend((x - (g - bh)) / w, order) * scale;
            }
        }
        if patch + 1 < n {
            let g = self.grid_point(patch + 1);
            if x > g - bh && x <= g + bh {
                let v = blend((x - (g - bh)) / w, order) * scale;
                return if order == 0 { 1.0 - v } else { -v };
            }
        }
        let lo = if patch == 0 {
            self.interval.0
        } else {
            self.grid_point(patch) + bh
        };
        let hi = if patch + 1 == n {
            self.interval.1
        } else {
            self.grid_point(patch + 1) - bh
        };
        if x >= lo && x <= hi && order == 0 {
            1.0
        } else {
            0.0
        }
    }

    /// `order`-th derivative of the local quadratic factor attached to `node`.
    pub(crate) fn local(&self, node: usize, x: f64, order: u8) -> f64 {
        let patch = &self.patches[self.node_patch[node]];
        match patch.boundary {
            BoundarySide::Left | BoundarySide::Right => {
                let xb = if patch.boundary == BoundarySide::Left {
                    self.interval.0
                } else {
                    self.interval.1
                };
                let d = self.nodes[node] - xb;
                let d2 = d * d;
                match order {
                    0 => (x - xb) * (x - xb) / d2,
                    1 => 2.0 * (x - xb) / d2,
                    _ => 2.0 / d2,
                }
            }
            BoundarySide::Interior => {
                let r = patch.nodes.clone();
                let k = node - r.start;
                let q = &self.nodes[r];
                let (p, o1, o2) = match k {
                    0 => (q[0], q[1], q[2]),
                    1 => (q[1], q[0], q[2]),
                    _ => (q[2], q[0], q[1]),
                };
                let den = (p - o1) * (p - o2);
                match order {
                    0 => (x - o1) * (x - o2) / den,
                    1 => ((x - o1) + (x - o2)) / den,
                    _ => 2.0 / den,
                }
            }
        }
    }

    /// `order`-th derivative of the 1D basis function `φ_patch · L_node` at `x`.
    pub fn basis_eval(&self, node: usize, x: f64, order: u8) -> f64 {
        let patch = self.node_patch[node];
        let phi = |o| self.pu(patch, x, o);
        let loc = |o| self.local(node, x, o);
        match order {
            0 => phi(0) * loc(0),
            1 => phi(1) * loc(0) + phi(0) * loc(1),
            _ => phi(2) * loc(0) + 2.0 * phi(1) * loc(1) + phi(0) * loc(2),
        }
    }

    /// Patches whose closed support contains `x`.
    pub fn patches_at(&self, x: f64) -> impl Iterator<Item = usize> + '_ {
        let n = self.n_patches();
        let k = ((x - self.interval.0) / self.cell_width).floor();
        let k = (k.max(0.0) as usize).min(n - 1);
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(n - 1);
        (lo..=hi).filter(move |&i| {
            let (s0, s1) = self.patches[i].support;
            x >= s0 && x <= s1
        })
    }

    /// 1D nodes whose basis function may be nonzero at `x`.
    pub fn nodes_at(&self, x: f64) -> impl Iterator<Item = usize> + '_ {
        self.patches_at(x).flat_map(|i| self.patches[i].nodes.clone())
    }

    /// Sorted breakpoints of the piecewise-polynomial structure: the domain ends
    /// and both edges of every transition band.
    pub fn breakpoints(&self) -> Vec<f64> {
        let bh = self.half_band();
        let mut bp = vec![self.interval.0];
        for k in 1..self.n_patches() {
            let g = self.grid_point(k);
            bp.push(g - bh);
            bp.push(g + bh);
        }
        bp.push(self.interval.1);
        bp
    }

    /// Integration cells `[lo, hi]` with the 1D nodes whose basis is supported there.
    pub fn cells(&self) -> Vec<(f64, f64, Vec<usize>)> {
        let bp = self.breakpoints();
        bp.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (w[0], w[1], self.nodes_at(mid).collect())
            })
            .collect()
    }
}

/// A node of the 2D cover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// 1D patch indices `(i, j)` whose flat-top rectangle contains the node.
    pub patch: (usize, usize),
}

/// Tensor-product flat-top cover of a rectangle.
///
/// Degree of freedom `id = iy * nx + ix`, where `ix`, `iy` index the 1D nodes.
#[derive(Clone, Debug)]
pub struct Cover2D {
    x_cover: Cover1D,
    y_cover: Cover1D,
    nodes: Vec<Node>,
}

impl Cover2D {
    /// Both directions share `level` and the transition ratio.
    pub fn new(level: u32, domain: ((f64, f64), (f64, f64)), transition_ratio: f64) -> Result<Self> {
        let x_cover = Cover1D::new(level, domain.0, transition_ratio)?;
        let y_cover = Cover1D::new(level, domain.1, transition_ratio)?;
        let nx = x_cover.n_nodes();
        let mut nodes = Vec::with_capacity(nx * y_cover.n_nodes());
        for (iy, &y) in y_cover.nodes().iter().enumerate() {
            for (ix, &x) in x_cover.nodes().iter().enumerate() {
                nodes.push(Node {
                    id: iy * nx + ix,
                    x,
                    y,
                    patch: (x_cover.node_patch(ix), y_cover.node_patch(iy)),
                });
            }
        }
        Ok(Cover2D {
            x_cover,
            y_cover,
            nodes,
        })
    }

    /// Cover of the square `(-0.5, 0.5)²` with the default transition ratio.
    pub fn unit_square(level: u32) -> Result<Self> {
        Self::new(level, ((-0.5, 0.5), (-0.5, 0.5)), DEFAULT_TRANSITION_RATIO)
    }

    pub fn level(&self) -> u32 {
        self.x_cover.level()
    }

    pub fn x_cover(&self) -> &Cover1D {
        &self.x_cover
    }

    pub fn y_cover(&self) -> &Cover1D {
        &self.y_cover
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, dof: usize) -> &Node {
        &self.nodes[dof]
    }

    pub fn dof_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.x_cover.cell_width()
    }

    pub fn domain(&self) -> ((f64, f64), (f64, f64)) {
        (self.x_cover.interval(), self.y_cover.interval())
    }

    /// 1D node indices `(ix, iy)` of a degree of freedom.
    pub fn split(&self, dof: usize) -> (usize, usize) {
        let nx = self.x_cover.n_nodes();
        (dof % nx, dof / nx)
    }

    pub fn dof_of(&self, ix: usize, iy: usize) -> usize {
        iy * self.x_cover.n_nodes() + ix
    }

    /// Derivative `∂^(ax, ay)` of the global basis function of `dof` at `point`.
    pub fn shape_eval(&self, dof: usize, point: (f64, f64), deriv: (u8, u8)) -> Result<f64> {
        if dof >= self.dof_count() {
            return Err(Error::param(format!("dof {dof} out of range")));
        }
        if deriv.0 + deriv.1 > 2 {
            return Err(Error::param(format!("derivative {deriv:?} has order > 2")));
        }
        let (ix, iy) = self.split(dof);
        Ok(self.x_cover.basis_eval(ix, point.0, deriv.0) * self.y_cover.basis_eval(iy, point.1, deriv.1))
    }

    /// Dofs whose basis function may be nonzero at `point`.
    pub fn dofs_at(&self, point: (f64, f64)) -> Vec<usize> {
        let xs: Vec<usize> = self.x_cover.nodes_at(point.0).collect();
        let mut out = Vec::with_capacity(xs.len() * 9);
        for iy in self.y_cover.nodes_at(point.1) {
            for &ix in &xs {
                out.push(self.dof_of(ix, iy));
            }
        }
        out
    }

    /// Evaluates `∂^deriv` of the finite element function with coefficients `coeffs`.
    pub fn evaluate(&self, coeffs: &[f64], point: (f64, f64), deriv: (u8, u8)) -> f64 {
        let xs: Vec<(usize, f64)> = self
            .x_cover
            .nodes_at(point.0)
            .map(|ix| (ix, self.x_cover.basis_eval(ix, point.0, deriv.0)))
            .collect();
        let mut acc = 0.0;
        for iy in self.y_cover.nodes_at(point.1) {
            let vy = self.y_cover.basis_eval(iy, point.1, deriv.1);
            if vy == 0.0 {
                continue;
            }
            for &(ix, vx) in &xs {
                acc += coeffs[self.dof_of(ix, iy)] * vx * vy;
            }
        }
        acc
    }

    /// Coefficients of the nodal interpolant from values given at every node.
    ///
    /// The basis is nodal, so the coefficient at a dof is the value at its node.
    pub fn interpolate(&self, values_at_nodes: &[Option<f64>]) -> Result<Vec<f64>> {
        if values_at_nodes.len() != self.dof_count() {
            return Err(Error::param(format!(
                "expected {} node values, got {}",
                self.dof_count(),
                values_at_nodes.len()
            )));
        }
        values_at_nodes
            .iter()
            .enumerate()
            .map(|(p, v)| v.ok_or_else(|| Error::param(format!("missing value at node {p}"))))
            .collect()
    }

    /// Nodal interpolant of a point-evaluable function.
    pub fn interpolate_fn<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|n| f(n.x, n.y)).collect()
    }

    /// Writes patches and nodes as CSV for plotting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,axis,index,lo,hi,flat_lo,flat_hi,boundary,x,y,patch_i,patch_j")?;
        for (axis, cover) in [("x", &self.x_cover), ("y", &self.y_cover)] {
            for (i, p) in cover.patches().iter().enumerate() {
                writeln!(
                    w,
                    "patch,{axis},{i},{},{},{},{},{:?},,,,",
                    p.support.0, p.support.1, p.flat_top.0, p.flat_top.1, p.boundary
                )?;
            }
        }
        for n in &self.nodes {
            writeln!(w, "node,,{},,,,,,{},{},{},{}", n.id, n.x, n.y, n.patch.0, n.patch.1)?;
        }
        Ok(())
    }
}

/// Nodal interpolation of the coarse space onto the fine nodes, truncated to `keep`.
///
/// Entry `(p, c)` is the coarse basis function `c` evaluated at fine node `p`;
/// rows of fine nodes outside `keep` are zero.
pub fn coarse_to_fine(coarse: &Cover2D, fine: &Cover2D, keep: &[bool]) -> Result<CsrMatrix> {
    if coarse.level() > fine.level() {
        return Err(Error::param(format!(
            "coarse level {} exceeds fine level {}",
            coarse.level(),
            fine.level()
        )));
    }
    if keep.len() != fine.dof_count() {
        return Err(Error::param("keep mask does not match the fine dof count"));
    }
    let mut row_ptr = Vec::with_capacity(fine.dof_count() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for node in fine.nodes() {
        if keep[node.id] {
            let mut entries: Vec<(usize, f64)> = coarse
                .dofs_at((node.x, node.y))
                .into_iter()
                .filter_map(|c| {
                    let (ix, iy) = coarse.split(c);
                    let v = coarse.x_cover().basis_eval(ix, node.x, 0)
                        * coarse.y_cover().basis_eval(iy, node.y, 0);
                    (v != 0.0).then_some((c, v))
                })
                .collect();
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                cols.push(c);
                vals.push(v);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(CsrMatrix::from_parts(
        fine.dof_count(),
        coarse.dof_count(),
        row_ptr,
        cols,
        vals,
    ))
}
