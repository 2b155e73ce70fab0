//! Primal-dual active set (semi-smooth Newton) iteration for the discrete
//! obstacle problem.

use std::time::{Duration, Instant};

use crate::assembly::ObstacleProblem;
use crate::cholesky::CholFactor;
use crate::error::{Error, Result};
use crate::sparse::SparseSym;

/// Sorted, duplicate-free set of node ids predicted to be in contact.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn from_indices(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        ActiveSet(ids)
    }

    pub fn all(n: usize) -> Self {
        ActiveSet((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.0 {
            m[i] = true;
        }
        m
    }

    /// Sorted complement in `0..n`.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let m = self.mask(n);
        (0..n).filter(|&i| !m[i]).collect()
    }
}

/// `{p : λ(p) + c(ψ(p) - u(p)) > 0}`; ties are inactive.
pub fn active_set(u: &[f64], lambda: &[f64], psi: &[f64], c: f64) -> ActiveSet {
    assert!(u.len() == lambda.len() && u.len() == psi.len());
    ActiveSet(
        (0..u.len())
            .filter(|&p| lambda[p] + c * (psi[p] - u[p]) > 0.0)
            .collect(),
    )
}

/// Outcome of one reduced solve.
#[derive(Clone, Debug)]
pub struct ReducedSolve {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub kappa: f64,
    pub timed_out: bool,
    /// Iteration cap reached without meeting the tolerance.
    pub stalled: bool,
}

/// Solver for the reduced system `Ã x = rhs`, where `Ã` is the principal
/// submatrix of the stiffness matrix on the inactive nodes.
pub trait ReducedSolver {
    fn solve(
        &mut self,
        reduced: &SparseSym,
        inactive: &[usize],
        rhs: &[f64],
        deadline: Option<Instant>,
    ) -> Result<ReducedSolve>;
}

/// Sparse Cholesky on the reduced system.
#[derive(Clone, Copy, Debug, Default)]
pub struct DirectSolver;

impl ReducedSolver for DirectSolver {
    fn solve(
        &mut self,
        reduced: &SparseSym,
        _inactive: &[usize],
        rhs: &[f64],
        _deadline: Option<Instant>,
    ) -> Result<ReducedSolve> {
        let f = CholFactor::new(reduced)?;
        Ok(ReducedSolve {
            x: f.solve(rhs),
            iterations: 0,
            kappa: 0.0,
            timed_out: false,
            stalled: false,
        })
    }
}

/// Result of [`pdas_step`].
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub solve: Option<ReducedSolve>,
}

/// One semi-smooth Newton step for a given active set.
///
/// `u = ψ` on the active set; on the inactive set `u` solves
/// `A_II u_I = f_I - A_IA ψ_A`; `λ = A u - f` on the active set and zero elsewhere.
pub fn pdas_step(
    problem: &ObstacleProblem,
    active: &ActiveSet,
    solver: &mut dyn ReducedSolver,
    deadline: Option<Instant>,
) -> Result<StepOutcome> {
    let n = problem.n();
    let mask = active.mask(n);
    let inactive = active.complement(n);
    let a = &problem.stiffness;
    let mut u: Vec<f64> = (0..n)
        .map(|p| if mask[p] { problem.obstacle[p] } else { 0.0 })
        .collect();
    let mut solve = None;
    if !inactive.is_empty() {
        let aw = a.apply(&u);
        let rhs: Vec<f64> = inactive.iter().map(|&p| problem.load[p] - aw[p]).collect();
        let reduced = a.submatrix(&inactive)?;
        let res = solver
            .solve(&reduced, &inactive, &rhs, deadline)
            .map_err(|e| Error::ReducedSolve {
                active: active.len(),
                source: Box::new(e),
            })?;
        for (k, &p) in inactive.iter().enumerate() {
            u[p] = res.x[k];
        }
        solve = Some(res);
    }
    let au = a.apply(&u);
    let lambda = (0..n)
        .map(|p| if mask[p] { au[p] - problem.load[p] } else { 0.0 })
        .collect();
    Ok(StepOutcome { u, lambda, solve })
}

#[derive(Clone, Copy, Debug)]
pub struct PdasOptions {
    pub max_pdas: usize,
    pub deadline: Option<Instant>,
}

impl Default for PdasOptions {
    fn default() -> Self {
        PdasOptions {
            max_pdas: 100,
            deadline: None,
        }
    }
}

/// Statistics of one PDAS iteration.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub active_size: usize,
    pub pcg_iterations: usize,
    pub kappa: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PdasReport {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub timed_out: bool,
    /// An inner solve hit its iteration cap.
    pub stalled: bool,
    pub final_active: ActiveSet,
}

impl PdasReport {
    pub fn mean_kappa(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.records.iter().map(|r| r.kappa).sum::<f64>() / self.records.len() as f64
        }
    }
}

/// Runs PDAS from `(u0, λ0)` until the active set repeats.
///
/// Exhausting `max_pdas` or the deadline is reported through
/// `converged = false`, not as an error.
pub fn pdas_solve(
    problem: &ObstacleProblem,
    u0: &[f64],
    lambda0: &[f64],
    solver: &mut dyn ReducedSolver,
    opts: &PdasOptions,
) -> Result<PdasReport> {
    let n = problem.n();
    if u0.len() != n || lambda0.len() != n {
        return Err(Error::param("initial iterate has the wrong length"));
    }
    if opts.max_pdas == 0 {
        return Err(Error::param("max_pdas must be at least 1"));
    }
    let c = problem.pdas_c;
    let mut u = u0.to_vec();
    let mut lambda = lambda0.to_vec();
    let mut active = active_set(&u, &lambda, &problem.obstacle, c);
    let mut records = Vec::new();
    let mut converged = false;
    let mut timed_out = false;
    let mut stalled = false;
    for k in 0..opts.max_pdas {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            timed_out = true;
            break;
        }
        let t0 = Instant::now();
        let step = pdas_step(problem, &active, solver, opts.deadline)?;
        let elapsed = t0.elapsed();
        let (pcg_iterations, kappa, inner_timeout, inner_stalled) = step
            .solve
            .as_ref()
            .map_or((0, 0.0, false, false), |s| (s.iterations, s.kappa, s.timed_out, s.stalled));
        records.push(IterationRecord {
            k,
            active_size: active.len(),
            pcg_iterations,
            kappa,
            seconds: elapsed.as_secs_f64(),
        });
        u = step.u;
        lambda = step.lambda;
        if inner_timeout {
            timed_out = true;
            break;
        }
        if inner_stalled {
            stalled = true;
            break;
        }
        log::debug!(
            "pdas k={k} active={} pcg={pcg_iterations} kappa={kappa:.4e} t={:.3}s",
            active.len(),
            elapsed.as_secs_f64()
        );
        let next = active_set(&u, &lambda, &problem.obstacle, c);
        if next == active {
            converged = true;
            break;
        }
        active = next;
    }
    Ok(PdasReport {
        u,
        lambda,
        iterations: records.len(),
        records,
        converged,
        timed_out,
        stalled,
        final_active: active,
    })
}

/// Residuals of the discrete optimality system.
#[derive(Clone, Debug)]
pub struct KktReport {
    /// `‖A u - f - λ‖∞`.
    pub stationarity: f64,
    /// `min(u - ψ)`.
    pub min_gap: f64,
    /// `min λ`.
    pub min_multiplier: f64,
    /// `max |(u - ψ) λ|`.
    pub complementarity: f64,
    /// `max |λ - max(0, λ + c(ψ - u))|`.
    pub nonsmooth: f64,
    pub tol: f64,
    pub failures: Vec<&'static str>,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `1 + ‖f‖∞ + ‖A‖∞ ‖u‖∞`, the natural scale of the stationarity residual.
pub fn kkt_scale(problem: &ObstacleProblem, u: &[f64]) -> f64 {
    let f_inf = problem.load.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u_inf = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1.0 + f_inf + problem.stiffness.norm_inf() * u_inf
}

/// Checks stationarity, primal and dual feasibility, complementarity and the
/// max-reformulation, each against `tol`.
pub fn check_kkt(u: &[f64], lambda: &[f64], problem: &ObstacleProblem, tol: f64) -> KktReport {
    let au = problem.stiffness.apply(u);
    let psi = &problem.obstacle;
    let c = problem.pdas_c;
    let n = u.len();
    let mut r = KktReport {
        stationarity: 0.0,
        min_gap: f64::INFINITY,
        min_multiplier: f64::INFINITY,
        complementarity: 0.0,
        nonsmooth: 0.0,
        tol,
        failures: Vec::new(),
    };
    for p in 0..n {
        r.stationarity = r.stationarity.max((au[p] - problem.load[p] - lambda[p]).abs());
        r.min_gap = r.min_gap.min(u[p] - psi[p]);
        r.min_multiplier = r.min_multiplier.min(lambda[p]);
        r.complementarity = r.complementarity.max(((u[p] - psi[p]) * lambda[p]).abs());
        let ns = lambda[p] - (lambda[p] + c * (psi[p] - u[p])).max(0.0);
        r.nonsmooth = r.nonsmooth.max(ns.abs());
    }
    if n == 0 {
        r.min_gap = 0.0;
        r.min_multiplier = 0.0;
    }
    if !(r.stationarity <= tol) {
        r.failures.push("stationarity");
    }
    if !(r.min_gap >= -tol) {
        r.failures.push("feasibility");
    }
    if !(r.min_multiplier >= -tol) {
        r.failures.push("dual feasibility");
    }
    if !(r.complementarity <= tol) {
        r.failures.push("complementarity");
    }
    if !(r.nonsmooth <= tol) {
        r.failures.push("nonsmooth reformulation");
    }
    r
}

/// Direct solve helper for tests and diagnostics: `A x = b`.
pub fn direct_solve(a: &SparseSym, b: &[f64]) -> Result<Vec<f64>> {
    Ok(CholFactor::new(a)?.solve(b))
}

/// Elapsed-time budget converted to a deadline.
pub fn deadline_after(budget: Option<Duration>) -> Option<Instant> {
    budget.map(|b| Instant::now() + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ObstacleProblem {
        ObstacleProblem {
            stiffness: SparseSym::from_dense(2, &[2.0, -1.0, -1.0, 2.0]).unwrap(),
            load: vec![0.0, 0.0],
            obstacle: vec![1.0, -10.0],
            pdas_c: 100.0,
        }
    }

    #[test]
    fn active_set_rule() {
        let psi = vec![0.5, -1.0, 2.0];
        let lam = vec![0.0; 3];
        let above: Vec<f64> = psi.iter().map(|p| p + 1.0).collect();
        let below: Vec<f64> = psi.iter().map(|p| p - 1.0).collect();
        assert!(active_set(&above, &lam, &psi, 10.0).is_empty());
        assert_eq!(active_set(&below, &lam, &psi, 10.0).len(), 3);
        let lam = vec![0.0, 1.0, 0.0];
        assert_eq!(active_set(&psi, &lam, &psi, 10.0).indices(), &[1]);
    }

    #[test]
    fn toy_step() {
        let p = toy();
        let s = pdas_step(&p, &ActiveSet::from_indices(vec![0]), &mut DirectSolver, None).unwrap();
        assert!((s.u[0] - 1.0).abs() < 1e-15);
        assert!((s.u[1] - 0.5).abs() < 1e-14);
        assert!((s.lambda[0] - 1.5).abs() < 1e-14);
        assert_eq!(s.lambda[1], 0.0);
    }

    #[test]
    fn all_active_step() {
        let p = toy();
        let s = pdas_step(&p, &ActiveSet::all(2), &mut DirectSolver, None).unwrap();
        assert_eq!(s.u, p.obstacle);
        assert!(s.solve.is_none());
        assert_eq!(s.lambda, p.stiffness.apply(&p.obstacle));
    }

    #[test]
    fn toy_solve_and_kkt() {
        let p = toy();
        let rep = pdas_solve(&p, &[0.0; 2], &[0.0; 2], &mut DirectSolver, &PdasOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.final_active.indices(), &[0]);
        assert!(check_kkt(&rep.u, &rep.lambda, &p, 1e-12).passed());
    }

    #[test]
    fn kkt_detects_negative_multiplier() {
        let mut p = toy();
        p.obstacle = vec![1.0, 1.0];
        // u = ψ, λ = Aψ - f = (1, 1) ≥ 0 passes; flip the load to force λ < 0
        p.load = vec![3.0, 0.0];
        let u = p.obstacle.clone();
        let au = p.stiffness.apply(&u);
        let lam: Vec<f64> = au.iter().zip(&p.load).map(|(a, f)| a - f).collect();
        assert!(lam[0] < 0.0);
        let r = check_kkt(&u, &lam, &p, 1e-10);
        assert!(r.failures.contains(&"dual feasibility"));
    }

    #[test]
    fn invalid_options() {
        let p = toy();
        let opts = PdasOptions {
            max_pdas: 0,
            deadline: None,
        };
        assert!(pdas_solve(&p, &[0.0; 2], &[0.0; 2], &mut DirectSolver, &opts).is_err());
        assert!(pdas_solve(&p, &[0.0; 3], &[0.0; 2], &mut DirectSolver, &PdasOptions::default()).is_err());
    }
}
