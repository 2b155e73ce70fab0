#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plate_obstacle::pdas::{pdas_solve, DirectSolver, PdasOptions, PdasReport};
use plate_obstacle::{Cover2D, Execution, ObstacleProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reference problem solved by PDAS with direct inner solves from `u0 = 0`.
pub fn solve_reference(level: u32) -> (Cover2D, ObstacleProblem, PdasReport) {
    let cover = Cover2D::unit_square(level).unwrap();
    let problem = ObstacleProblem::reference(&cover, 100.0, Execution::default());
    let n = problem.n();
    let report = pdas_solve(&problem, &vec![0.0; n], &vec![0.0; n], &mut DirectSolver, &PdasOptions::default()).unwrap();
    assert!(report.converged);
    (cover, problem, report)
}

/// Dense symmetric matrix from an operator applied to unit vectors.
pub fn dense_operator(n: usize, mut apply: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        for i in 0..n {
            m[i * n + j] = col[i];
        }
        e[j] = 0.0;
    }
    m
}
