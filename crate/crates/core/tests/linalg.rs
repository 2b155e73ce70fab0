mod common;

use proptest::prelude::*;

use plate_obstacle::assembly::assemble_stiffness;
use plate_obstacle::cholesky::CholFactor;
use plate_obstacle::pcg::{lanczos_kappa, pcg, PcgOptions, StopReference};
use plate_obstacle::schwarz::{build_decomposition, one_level_setup, Overlap};
use plate_obstacle::sparse::SparseSym;
use plate_obstacle::{Cover2D, Execution};

use common::{dot, norm, random_vec, rng};

#[test]
fn cholesky_residuals() {
    let mut r = rng(2);
    for level in [2, 3, 4] {
        let c = Cover2D::unit_square(level).unwrap();
        let a = assemble_stiffness(&c, Execution::default());
        let f = CholFactor::new(&a).unwrap();
        for _ in 0..20 {
            let b = random_vec(&mut r, a.n());
            let x = f.solve(&b);
            let ax = a.apply(&x);
            let res: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(norm(&res) <= 1e-10 * norm(&b), "level {level}");
        }
    }
}

#[test]
fn exact_preconditioner_converges_immediately() {
    let c = Cover2D::unit_square(3).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let f = CholFactor::new(&a).unwrap();
    let b = random_vec(&mut rng(8), a.n());
    let res = pcg(
        |x: &[f64], y: &mut [f64]| a.matvec(x, y, Execution::Serial),
        |r: &[f64], z: &mut [f64]| {
            z.copy_from_slice(r);
            f.solve_in_place(z);
        },
        &b,
        &PcgOptions { reference: StopReference::PreconditionedRhs, rel_tol: 1e-12, ..Default::default() },
    )
    .unwrap();
    assert!(res.converged && res.iterations <= 2, "{}", res.iterations);
}

#[test]
fn pcg_energy_error_decreases() {
    let c = Cover2D::unit_square(2).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let b = random_vec(&mut rng(6), a.n());
    let exact = CholFactor::new(&a).unwrap().solve(&b);
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let res = pcg(
            |x: &[f64], y: &mut [f64]| a.matvec(x, y, Execution::Serial),
            |r: &[f64], z: &mut [f64]| z.copy_from_slice(r),
            &b,
            &PcgOptions { max_iter: Some(k), rel_tol: 0.0, ..Default::default() },
        )
        .unwrap();
        let e: Vec<f64> = res.solution.iter().zip(&exact).map(|(x, y)| x - y).collect();
        let err = a.bilinear(&e, &e).sqrt();
        assert!(err <= prev * (1.0 + 1e-10), "step {k}: {err} > {prev}");
        prev = err;
    }
}

proptest! {
    #[test]
    fn lanczos_on_diagonal_spectra(eigs in prop::collection::vec(0.1f64..1000.0, 2..=50), seed in 0u64..1000) {
        let n = eigs.len();
        let b = random_vec(&mut rng(seed), n);
        let d = eigs.clone();
        let res = pcg(
            move |x: &[f64], y: &mut [f64]| y.iter_mut().zip(x).zip(&d).for_each(|((y, x), d)| *y = d * x),
            |r: &[f64], z: &mut [f64]| z.copy_from_slice(r),
            &b,
            &PcgOptions { rel_tol: 0.0, max_iter: Some(n), ..Default::default() },
        )
        .unwrap();
        let max = eigs.iter().cloned().fold(f64::MIN, f64::max);
        let min = eigs.iter().cloned().fold(f64::MAX, f64::min);
        let kappa = max / min;
        if res.iterations > 1 {
            let est = lanczos_kappa(&res.alphas, &res.betas).unwrap();
            prop_assert!(est >= 0.8 * kappa && est <= 1.001 * kappa, "est {} true {}", est, kappa);
        }
    }

    #[test]
    fn nested_submatrices(seed in 0u64..500, frac in 0.1f64..0.9) {
        let n = 30;
        let mut r = rng(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 10.0 + i as f64));
            for j in i + 1..n {
                let v: f64 = rand::Rng::random_range(&mut r, -1.0..1.0);
                if v.abs() < 0.3 {
                    t.push((i, j, v));
                }
            }
        }
        let a = SparseSym::from_triplets(n, t).unwrap();
        let s: Vec<usize> = (0..n).filter(|_| rand::Rng::random_bool(&mut r, frac)).collect();
        let sub = a.submatrix(&s).unwrap();
        let t_local: Vec<usize> = (0..s.len()).filter(|k| k % 2 == 0).collect();
        let t_global: Vec<usize> = t_local.iter().map(|&k| s[k]).collect();
        prop_assert_eq!(sub.submatrix(&t_local).unwrap(), a.submatrix(&t_global).unwrap());
        let all: Vec<usize> = (0..n).collect();
        prop_assert_eq!(a.submatrix(&all).unwrap(), a.clone());
    }
}

#[test]
fn lanczos_on_reduced_one_level_system() {
    let c = Cover2D::unit_square(3).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let inactive: Vec<usize> = (0..a.n()).filter(|i| i % 5 != 0).collect();
    let reduced = a.submatrix(&inactive).unwrap();
    let dd = build_decomposition(&c, 4, Overlap::Small).unwrap();
    let b = one_level_setup(&reduced, &inactive, &c, &dd, Execution::default()).unwrap();
    let rhs = random_vec(&mut rng(12), reduced.n());
    let res = pcg(
        |x: &[f64], y: &mut [f64]| reduced.matvec(x, y, Execution::Serial),
        |r: &[f64], z: &mut [f64]| b.apply_into(r, z),
        &rhs,
        &PcgOptions::default(),
    )
    .unwrap();
    assert!(res.kappa_estimate.is_finite() && res.kappa_estimate >= 1.0);
    assert!(dot(&rhs, &rhs) > 0.0);
}

#[test]
fn residual_history_csv() {
    let res = pcg(
        |x: &[f64], y: &mut [f64]| y.iter_mut().zip(x).enumerate().for_each(|(i, (y, x))| *y = (i + 1) as f64 * x),
        |r: &[f64], z: &mut [f64]| z.copy_from_slice(r),
        &[1.0, 1.0, 1.0],
        &PcgOptions::default(),
    )
    .unwrap();
    let csv = res.residual_csv();
    assert!(csv.starts_with("iteration,preconditioned_residual\n"));
    assert_eq!(csv.lines().count(), res.iterations + 2);
}
