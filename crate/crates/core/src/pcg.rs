//! Preconditioned conjugate gradients with a Lanczos condition number estimate.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2};

/// Norm the stopping test compares `‖B r_k‖₂` against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReference {
    /// `‖b‖₂`.
    #[default]
    Rhs,
    /// `‖B b‖₂`, invariant under scaling of the system.
    PreconditionedRhs,
}

/// Stopping and reporting options for [`pcg`].
#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    /// Stop once `‖B r‖₂ ≤ rel_tol · ‖reference‖₂`.
    pub rel_tol: f64,
    pub reference: StopReference,
    /// `None` means `10 · n`.
    pub max_iter: Option<usize>,
    /// Abort (unconverged) once this instant has passed.
    pub deadline: Option<Instant>,
    /// Report κ = 0 for runs of at most one iteration instead of 1.
    pub zero_kappa_for_single_step: bool,
    /// Stop early once the κ estimate settles.
    pub kappa_stop: Option<KappaStop>,
}

/// Checks the Lanczos κ estimate every `every` iterations and stops once two
/// consecutive estimates differ by at most `rel_change`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaStop {
    pub every: usize,
    pub rel_change: f64,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions {
            rel_tol: 1e-15,
            reference: StopReference::default(),
            max_iter: None,
            deadline: None,
            zero_kappa_for_single_step: true,
            kappa_stop: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Lanczos estimate of κ(BA); 0 when at most one iteration was run.
    pub kappa_estimate: f64,
    pub converged: bool,
    pub timed_out: bool,
    /// Stopped by [`KappaStop`].
    pub kappa_settled: bool,
    /// `‖B r_k‖₂` for k = 0..=iterations.
    pub residual_history: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl PcgResult {
    /// Residual history as CSV (`iteration,preconditioned_residual`).
    pub fn residual_csv(&self) -> String {
        let mut s = String::from("iteration,preconditioned_residual\n");
        for (k, r) in self.residual_history.iter().enumerate() {
            s.push_str(&format!("{k},{r:.17e}\n"));
        }
        s
    }
}

/// Solves `A x = b` from the zero initial guess, preconditioned by `B`.
///
/// Both operators write their result into the second argument. Reaching
/// `max_iter` or the deadline is not an error; the result reports
/// `converged = false`.
pub fn pcg<A, B>(mut apply_a: A, mut apply_b: B, b: &[f64], opts: &PcgOptions) -> Result<PcgResult>
where
    A: FnMut(&[f64], &mut [f64]),
    B: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    let mut out = PcgResult {
        solution: Vec::new(),
        iterations: 0,
        kappa_estimate: 0.0,
        converged: false,
        timed_out: false,
        kappa_settled: false,
        residual_history: Vec::new(),
        alphas: Vec::new(),
        betas: Vec::new(),
    };
    if b_norm == 0.0 {
        out.solution = x;
        out.converged = true;
        out.residual_history.push(0.0);
        return Ok(out);
    }
    if !b_norm.is_finite() {
        return Err(Error::Numeric("right-hand side is not finite".into()));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_b(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut z_norm = norm2(&z);
    let target = opts.rel_tol
        * match opts.reference {
            StopReference::Rhs => b_norm,
            StopReference::PreconditionedRhs => z_norm,
        };
    out.residual_history.push(z_norm);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut last_kappa: Option<f64> = None;
    out.converged = z_norm <= target;
    while !out.converged && out.iterations < max_iter {
        if let Some(d) = opts.deadline {
            if Instant::now() >= d {
                out.timed_out = true;
                break;
            }
        }
        apply_a(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !rz.is_finite() {
            if !pq.is_finite() {
                return Err(Error::Numeric(format!("breakdown: pᵀAp = {pq}")));
            }
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        apply_b(&r, &mut z);
        let rz_new = dot(&r, &z);
        z_norm = norm2(&z);
        out.alphas.push(alpha);
        out.residual_history.push(z_norm);
        out.iterations += 1;
        if z_norm <= target {
            out.converged = true;
            break;
        }
        let beta = rz_new / rz;
        out.betas.push(beta);
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
        if let Some(ks) = opts.kappa_stop {
            if ks.every > 0 && out.iterations.is_multiple_of(ks.every) {
                let k = lanczos_kappa(&out.alphas, &out.betas)?;
                if last_kappa.is_some_and(|prev| (k - prev).abs() <= ks.rel_change * k) {
                    out.kappa_settled = true;
                    break;
                }
                last_kappa = Some(k);
            }
        }
    }
    out.kappa_estimate = if out.iterations <= 1 {
        if opts.zero_kappa_for_single_step || out.iterations == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        lanczos_kappa(&out.alphas, &out.betas)?
    };
    out.solution = x;
    Ok(out)
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the Lanczos tridiagonal matrix
/// assembled from CG coefficients.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> Result<(f64, f64)> {
    let k = alphas.len();
    if k == 0 {
        return Err(Error::param("no CG coefficients"));
    }
    if betas.len() + 1 < k {
        return Err(Error::param(format!("{k} alphas need at least {} betas", k - 1)));
    }
    if alphas.iter().chain(&betas[..k - 1]).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite CG coefficient".into()));
    }
    let mut diag = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut d = 1.0 / alphas[j];
        if j > 0 {
            d += betas[j - 1] / alphas[j - 1];
        }
        diag.push(d);
        if j + 1 < k {
            off.push(betas[j].max(0.0).sqrt() / alphas[j]);
        }
    }
    Ok(tridiagonal_extremes(&diag, &off))
}

/// `λ_max / λ_min` of the Lanczos matrix; 0 for at most one step.
pub fn lanczos_kappa(alphas: &[f64], betas: &[f64]) -> Result<f64> {
    if alphas.len() <= 1 {
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("non-finite CG coefficient".into()));
        }
        return Ok(0.0);
    }
    let (lo, hi) = lanczos_extremes(alphas, betas)?;
    if !(lo > 0.0) {
        return Err(Error::Numeric(format!(
            "Lanczos matrix is not positive definite (λ_min = {lo:e})"
        )));
    }
    Ok(hi / lo)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest and largest eigenvalue of a symmetric tridiagonal matrix by bisection.
pub fn tridiagonal_extremes(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let k = diag.len();
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < k { off[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &d) in diag.iter().enumerate() {
        lo = lo.min(d - radius(i));
        hi = hi.max(d + radius(i));
    }
    let span = (hi - lo).abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= 1e-12 * span;
    hi += 1e-12 * span;
    let bisect = |target: usize| {
        // smallest x with at least `target` eigenvalues below it
        let (mut a, mut b) = (lo, hi);
        for _ in 0..400 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(diag, off, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(k))
}
