//! Overlapping decompositions aligned with the patch grid and one-level /
//! two-level additive Schwarz preconditioners for the reduced systems.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cholesky::{CholFactor, PivotedCholesky};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pcg::{pcg, PcgOptions};
use crate::pdas::{ReducedSolve, ReducedSolver};
use crate::pum::{coarse_to_fine, Cover2D};
use crate::sparse::{CsrMatrix, SparseSym};

/// Relative pivot threshold for retaining coarse basis functions.
pub const COARSE_PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    /// One patch layer (`δ ≈ h`).
    Small,
    /// A quarter of the block width (`δ ≈ H`).
    Generous,
}

impl Overlap {
    pub fn name(self) -> &'static str {
        match self {
            Overlap::Small => "small",
            Overlap::Generous => "generous",
        }
    }
}

impl std::str::FromStr for Overlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Overlap::Small),
            "generous" => Ok(Overlap::Generous),
            _ => Err(Error::Parse(format!("unknown overlap `{s}` (expected small or generous)"))),
        }
    }
}

/// Rectangle of patches `[i0, i1) × [j0, j1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRect {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl PatchRect {
    pub fn contains(&self, (i, j): (usize, usize)) -> bool {
        i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1
    }
}

/// Overlapping subdomains `D_j` made of whole patches.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub j: usize,
    /// Subdomains per direction (`√J`).
    pub grid: usize,
    pub overlap: Overlap,
    pub overlap_patches: usize,
    pub rects: Vec<PatchRect>,
    /// Subdomain size `H` (domain width over `√J`).
    pub h_coarse: f64,
    /// Overlap width `2 · layers · h`.
    pub delta: f64,
    /// Largest number of subdomains sharing a patch.
    pub nc: usize,
    n_patches: usize,
    patch_width: f64,
    origin: (f64, f64),
}

/// Valid subdomain counts `4^m` for a cover with `2^level` patches per direction.
pub fn valid_subdomain_counts(level: u32) -> Vec<usize> {
    (0..=level).map(|m| 1usize << (2 * m)).collect()
}

/// `√J` when `J` is a power of four whose square root divides `2^level`.
pub fn subdomain_grid(level: u32, j: usize) -> Option<usize> {
    if j == 0 || !j.is_power_of_two() || !j.trailing_zeros().is_multiple_of(2) {
        return None;
    }
    let m = j.trailing_zeros() / 2;
    (m <= level).then_some(1usize << m)
}

/// Splits the patch grid into `√J × √J` blocks and widens each block by the
/// overlap layers, clipped at the boundary.
pub fn build_decomposition(cover: &Cover2D, j: usize, overlap: Overlap) -> Result<Decomposition> {
    let level = cover.level();
    let grid = subdomain_grid(level, j).ok_or_else(|| {
        Error::param(format!(
            "J = {j} is invalid at level {level}; valid values are {:?}",
            valid_subdomain_counts(level)
        ))
    })?;
    let n = cover.x_cover().n_patches();
    let block = n / grid;
    let layers = match overlap {
        Overlap::Small => 1,
        Overlap::Generous => block.div_ceil(4),
    };
    let mut rects = Vec::with_capacity(j);
    for bj in 0..grid {
        for bi in 0..grid {
            rects.push(PatchRect {
                i0: (bi * block).saturating_sub(layers),
                i1: ((bi + 1) * block + layers).min(n),
                j0: (bj * block).saturating_sub(layers),
                j1: ((bj + 1) * block + layers).min(n),
            });
        }
    }
    let mut nc = 0;
    for pj in 0..n {
        for pi in 0..n {
            nc = nc.max(rects.iter().filter(|r| r.contains((pi, pj))).count());
        }
    }
    let (xi, _) = cover.domain();
    let h = cover.cell_width();
    Ok(Decomposition {
        j,
        grid,
        overlap,
        overlap_patches: layers,
        rects,
        h_coarse: (xi.1 - xi.0) / grid as f64,
        delta: 2.0 * layers as f64 * h,
        nc,
        n_patches: n,
        patch_width: h,
        origin: (cover.domain().0 .0, cover.domain().1 .0),
    })
}

impl Decomposition {
    /// Subdomains containing the patch `(i, j)`.
    pub fn subdomains_of_patch(&self, patch: (usize, usize)) -> impl Iterator<Item = usize> + '_ {
        self.rects
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.contains(patch))
            .map(|(s, _)| s)
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    /// Geometric rectangle `((x_lo, x_hi), (y_lo, y_hi))` of a subdomain.
    pub fn geometry(&self, s: usize) -> ((f64, f64), (f64, f64)) {
        let r = self.rects[s];
        let x = |k: usize| self.origin.0 + k as f64 * self.patch_width;
        let y = |k: usize| self.origin.1 + k as f64 * self.patch_width;
        ((x(r.i0), x(r.i1)), (y(r.j0), y(r.j1)))
    }

    /// Subdomain rectangles and summary data as CSV.
    pub fn write_csv<W: Write>(&self, cover: &Cover2D, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "subdomain,patch_i0,patch_i1,patch_j0,patch_j1,x_lo,x_hi,y_lo,y_hi,node_count,J,overlap,layers,Nc,delta,H"
        )?;
        for (s, r) in self.rects.iter().enumerate() {
            let ((x0, x1), (y0, y1)) = self.geometry(s);
            let count = cover.nodes().iter().filter(|n| r.contains(n.patch)).count();
            writeln!(
                w,
                "{s},{},{},{},{},{x0},{x1},{y0},{y1},{count},{},{},{},{},{},{}",
                r.i0,
                r.i1,
                r.j0,
                r.j1,
                self.j,
                self.overlap.name(),
                self.overlap_patches,
                self.nc,
                self.delta,
                self.h_coarse
            )?;
        }
        Ok(())
    }
}

/// One- or two-level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchwarzLevel {
    OneLevel,
    TwoLevel,
}

#[derive(Clone, Debug)]
struct LocalSolve {
    indices: Vec<usize>,
    factor: CholFactor,
}

#[derive(Clone, Debug)]
struct CoarseSolve {
    /// Truncated prolongation restricted to the reduced indices.
    prolongation: CsrMatrix,
    chol: PivotedCholesky,
}

/// Additive Schwarz preconditioner `B = Σ_j I_j A_j⁻¹ I_jᵀ` (plus the coarse
/// term for the two-level variant). Immutable after setup.
#[derive(Clone, Debug)]
pub struct SchwarzPreconditioner {
    n: usize,
    level: SchwarzLevel,
    locals: Vec<LocalSolve>,
    /// Reduced-index sets per subdomain, empty ones included.
    index_sets: Vec<Vec<usize>>,
    coarse: Option<CoarseSolve>,
    exec: Execution,
}

fn subdomain_index_sets(cover: &Cover2D, inactive: &[usize], decomposition: &Decomposition) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); decomposition.rects.len()];
    for (k, &node) in inactive.iter().enumerate() {
        for s in decomposition.subdomains_of_patch(cover.node(node).patch) {
            sets[s].push(k);
        }
    }
    sets
}

/// Sets up `B_OL` for the reduced matrix `Ã` on the inactive nodes.
///
/// `inactive[k]` is the node id of reduced index `k`.
pub fn one_level_setup(
    reduced: &SparseSym,
    inactive: &[usize],
    cover: &Cover2D,
    decomposition: &Decomposition,
    exec: Execution,
) -> Result<SchwarzPreconditioner> {
    if reduced.n() != inactive.len() {
        return Err(Error::param("reduced matrix and inactive list differ in size"));
    }
    let index_sets = subdomain_index_sets(cover, inactive, decomposition);
    let factored = par::map_range(exec, index_sets.len(), |s| -> Result<Option<LocalSolve>> {
        let indices = &index_sets[s];
        if indices.is_empty() {
            return Ok(None);
        }
        let sub = reduced.submatrix(indices)?;
        let factor = CholFactor::new(&sub).map_err(|e| Error::Subdomain {
            subdomain: s,
            source: Box::new(e),
        })?;
        Ok(Some(LocalSolve {
            indices: indices.clone(),
            factor,
        }))
    });
    let mut locals = Vec::new();
    for f in factored {
        if let Some(l) = f? {
            locals.push(l);
        }
    }
    Ok(SchwarzPreconditioner {
        n: reduced.n(),
        level: SchwarzLevel::OneLevel,
        locals,
        index_sets,
        coarse: None,
        exec,
    })
}

/// Coarse-to-fine interpolation for all fine nodes, reused across PDAS steps.
pub fn full_prolongation(coarse: &Cover2D, fine: &Cover2D) -> Result<CsrMatrix> {
    coarse_to_fine(coarse, fine, &vec![true; fine.dof_count()])
}

/// Dense `Pᵀ Ã P` for a sparse `P` with few columns.
fn galerkin_coarse(reduced: &SparseSym, p: &CsrMatrix) -> Vec<f64> {
    let nc = p.ncols();
    let full = reduced.full();
    let mut a0 = vec![0.0; nc * nc];
    let mut w = vec![0.0; nc];
    let mut touched: Vec<usize> = Vec::new();
    let mut mark = vec![false; nc];
    for row in 0..reduced.n() {
        if p.row(row).next().is_none() {
            continue;
        }
        for (q, aq) in full.row(row) {
            for (c, v) in p.row(q) {
                if !mark[c] {
                    mark[c] = true;
                    touched.push(c);
                }
                w[c] += aq * v;
            }
        }
        for (a, pa) in p.row(row) {
            for &b in &touched {
                a0[a * nc + b] += pa * w[b];
            }
        }
        for &b in &touched {
            w[b] = 0.0;
            mark[b] = false;
        }
        touched.clear();
    }
    // symmetrize away rounding differences
    for a in 0..nc {
        for b in a + 1..nc {
            let v = 0.5 * (a0[a * nc + b] + a0[b * nc + a]);
            a0[a * nc + b] = v;
            a0[b * nc + a] = v;
        }
    }
    a0
}

/// Sets up `B_TL`: the one-level terms plus the truncated coarse space
/// `T̃_h Π_h V_H`, spanned by the rows of `prolongation` at inactive nodes.
pub fn two_level_setup(
    reduced: &SparseSym,
    inactive: &[usize],
    cover: &Cover2D,
    decomposition: &Decomposition,
    prolongation: &CsrMatrix,
    exec: Execution,
) -> Result<SchwarzPreconditioner> {
    if prolongation.nrows() != cover.dof_count() {
        return Err(Error::param("prolongation rows must match the fine dof count"));
    }
    let (one, coarse) = par::join(
        exec,
        || one_level_setup(reduced, inactive, cover, decomposition, exec),
        || {
            let p = prolongation.select_rows(inactive);
            let a0 = galerkin_coarse(reduced, &p);
            let chol = PivotedCholesky::new(p.ncols(), &a0, COARSE_PIVOT_THRESHOLD);
            (p, chol)
        },
    );
    let mut pre = one?;
    pre.level = SchwarzLevel::TwoLevel;
    let (p, chol) = coarse;
    if chol.rank() == 0 {
        if !inactive.is_empty() {
            log::warn!("coarse space fully truncated; falling back to one-level behaviour");
        }
    } else {
        pre.coarse = Some(CoarseSolve { prolongation: p, chol });
    }
    Ok(pre)
}

/// Same as [`two_level_setup`] but builds the prolongation from the covers.
pub fn two_level_setup_from_covers(
    reduced: &SparseSym,
    inactive: &[usize],
    decomposition: &Decomposition,
    fine: &Cover2D,
    coarse: &Cover2D,
    exec: Execution,
) -> Result<SchwarzPreconditioner> {
    let p = full_prolongation(coarse, fine)?;
    two_level_setup(reduced, inactive, fine, decomposition, &p, exec)
}

impl SchwarzPreconditioner {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> SchwarzLevel {
        self.level
    }

    /// Reduced indices belonging to each subdomain.
    pub fn index_sets(&self) -> &[Vec<usize>] {
        &self.index_sets
    }

    /// Number of retained coarse basis functions (0 for one-level).
    pub fn coarse_rank(&self) -> usize {
        self.coarse.as_ref().map_or(0, |c| c.chol.rank())
    }

    /// `z = B r`.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n {
            return Err(Error::param(format!(
                "residual has length {}, preconditioner expects {}",
                r.len(),
                self.n
            )));
        }
        let mut z = vec![0.0; self.n];
        self.apply_into(r, &mut z);
        Ok(z)
    }

    /// `z = B r` for correctly sized buffers.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        assert_eq!(r.len(), self.n);
        assert_eq!(z.len(), self.n);
        let (local, coarse) = par::join(
            self.exec,
            || {
                par::map_slice(self.exec, &self.locals, |l| {
                    let mut v: Vec<f64> = l.indices.iter().map(|&k| r[k]).collect();
                    l.factor.solve_in_place(&mut v);
                    v
                })
            },
            || self.coarse.as_ref().map(|c| c.correction(r)),
        );
        z.iter_mut().for_each(|v| *v = 0.0);
        for (l, v) in self.locals.iter().zip(&local) {
            for (&k, x) in l.indices.iter().zip(v) {
                z[k] += x;
            }
        }
        if let Some(c) = coarse {
            for (zi, ci) in z.iter_mut().zip(&c) {
                *zi += ci;
            }
        }
    }
}

impl CoarseSolve {
    /// `P A_0⁻¹ Pᵀ r` on the retained columns.
    fn correction(&self, r: &[f64]) -> Vec<f64> {
        let nc = self.prolongation.ncols();
        let mut y = vec![0.0; nc];
        self.prolongation.transpose_matvec(r, &mut y);
        let mut yr: Vec<f64> = self.chol.retained.iter().map(|&c| y[c]).collect();
        self.chol.solve_in_place(&mut yr);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&c, v) in self.chol.retained.iter().zip(yr) {
            y[c] = v;
        }
        let mut out = vec![0.0; r.len()];
        self.prolongation.matvec(&y, &mut out, Execution::Serial);
        out
    }
}

/// Preconditioner used by [`PcgSolver`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    /// Plain conjugate gradients.
    None,
    /// `B_OL`.
    One,
    /// `B_TL`.
    Two,
}

impl PreconditionerKind {
    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::None => "none",
            PreconditionerKind::One => "one",
            PreconditionerKind::Two => "two",
        }
    }
}

impl std::str::FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PreconditionerKind::None),
            "one" | "one-level" => Ok(PreconditionerKind::One),
            "two" | "two-level" => Ok(PreconditionerKind::Two),
            _ => Err(Error::Parse(format!("unknown preconditioner `{s}` (expected none, one or two)"))),
        }
    }
}

/// Reduced-system solver: PCG with an optional Schwarz preconditioner rebuilt
/// for every active set.
pub struct PcgSolver<'a> {
    pub kind: PreconditionerKind,
    pub cover: &'a Cover2D,
    pub decomposition: Option<&'a Decomposition>,
    /// Full coarse-to-fine prolongation (two-level only).
    pub prolongation: Option<&'a CsrMatrix>,
    pub options: PcgOptions,
    pub exec: Execution,
}

impl<'a> PcgSolver<'a> {
    pub fn unpreconditioned(cover: &'a Cover2D, options: PcgOptions, exec: Execution) -> Self {
        PcgSolver {
            kind: PreconditionerKind::None,
            cover,
            decomposition: None,
            prolongation: None,
            options,
            exec,
        }
    }

    pub fn preconditioner(&self, reduced: &SparseSym, inactive: &[usize]) -> Result<Option<SchwarzPreconditioner>> {
        let need_dd = || {
            self.decomposition
                .ok_or_else(|| Error::param("Schwarz preconditioner needs a decomposition"))
        };
        Ok(match self.kind {
            PreconditionerKind::None => None,
            PreconditionerKind::One => Some(one_level_setup(reduced, inactive, self.cover, need_dd()?, self.exec)?),
            PreconditionerKind::Two => {
                let p = self
                    .prolongation
                    .ok_or_else(|| Error::param("two-level preconditioner needs a prolongation"))?;
                Some(two_level_setup(reduced, inactive, self.cover, need_dd()?, p, self.exec)?)
            }
        })
    }
}

impl ReducedSolver for PcgSolver<'_> {
    fn solve(
        &mut self,
        reduced: &SparseSym,
        inactive: &[usize],
        rhs: &[f64],
        deadline: Option<Instant>,
    ) -> Result<ReducedSolve> {
        let pre = self.preconditioner(reduced, inactive)?;
        let mut opts = self.options;
        opts.deadline = match (opts.deadline, deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let exec = self.exec;
        let apply_a = |x: &[f64], y: &mut [f64]| reduced.matvec(x, y, exec);
        let res = match &pre {
            Some(b) => pcg(apply_a, |r: &[f64], z: &mut [f64]| b.apply_into(r, z), rhs, &opts)?,
            None => pcg(apply_a, |r: &[f64], z: &mut [f64]| z.copy_from_slice(r), rhs, &opts)?,
        };
        let stalled = !res.converged && !res.timed_out;
        if stalled {
            log::warn!(
                "PCG stopped after {} iterations with ‖Br‖ = {:e} above tolerance",
                res.iterations,
                res.residual_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Ok(ReducedSolve {
            x: res.solution,
            iterations: res.iterations,
            kappa: res.kappa_estimate,
            timed_out: res.timed_out,
            stalled,
        })
    }
}
