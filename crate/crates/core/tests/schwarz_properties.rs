mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use plate_obstacle::assembly::assemble_stiffness;
use plate_obstacle::pcg::{pcg, PcgOptions};
use plate_obstacle::pum::coarse_to_fine;
use plate_obstacle::schwarz::{
    build_decomposition, full_prolongation, one_level_setup, two_level_setup, valid_subdomain_counts, Overlap,
    SchwarzPreconditioner,
};
use plate_obstacle::sparse::SparseSym;
use plate_obstacle::{CholFactor, Cover2D, Execution};

use common::{dense_operator, dot, norm, random_vec, rng, solve_reference};

fn inactive_of(level: u32) -> (Cover2D, SparseSym, Vec<usize>) {
    let (cover, problem, report) = solve_reference(level);
    let inactive = report.final_active.complement(problem.n());
    let reduced = problem.stiffness.submatrix(&inactive).unwrap();
    (cover, reduced, inactive)
}

fn symmetry_and_positivity(b: &SchwarzPreconditioner, seed: u64) {
    let mut r = rng(seed);
    for _ in 0..20 {
        let r1 = random_vec(&mut r, b.n());
        let r2 = random_vec(&mut r, b.n());
        let (b1, b2) = (b.apply(&r1).unwrap(), b.apply(&r2).unwrap());
        assert!((dot(&b1, &r2) - dot(&r1, &b2)).abs() <= 1e-10 * norm(&r1) * norm(&r2));
        assert!(dot(&b1, &r1) > 0.0);
    }
}

proptest! {
    #[test]
    fn decomposition_invariants(level in 1u32..=6, m in 0u32..=3, generous in any::<bool>()) {
        prop_assume!(m <= level);
        let c = Cover2D::unit_square(level).unwrap();
        let ov = if generous { Overlap::Generous } else { Overlap::Small };
        let d = build_decomposition(&c, 1 << (2 * m), ov).unwrap();
        let n = d.n_patches();
        let mut max = 0;
        for i in 0..n {
            for j in 0..n {
                let k = d.subdomains_of_patch((i, j)).count();
                prop_assert!(k >= 1);
                max = max.max(k);
            }
        }
        prop_assert_eq!(max, d.nc);
        prop_assert!((d.h_coarse - 1.0 / (1u32 << m) as f64).abs() < 1e-15);
    }
}

#[test]
fn invalid_j_lists_valid_values() {
    let c = Cover2D::unit_square(2).unwrap();
    let e = build_decomposition(&c, 64, Overlap::Small).unwrap_err().to_string();
    assert!(e.contains(&format!("{:?}", valid_subdomain_counts(2))), "{e}");
}

#[test]
fn every_inactive_node_is_covered() {
    let c = Cover2D::unit_square(3).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let d = build_decomposition(&c, 4, Overlap::Small).unwrap();
    let mut r = rng(30);
    for _ in 0..10 {
        let inactive: Vec<usize> = (0..a.n()).filter(|_| rand::Rng::random_bool(&mut r, 0.7)).collect();
        let reduced = a.submatrix(&inactive).unwrap();
        let b = one_level_setup(&reduced, &inactive, &c, &d, Execution::default()).unwrap();
        let mut seen = vec![false; inactive.len()];
        for set in b.index_sets() {
            for &k in set {
                seen[k] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}

#[test]
fn single_subdomain_is_exact() {
    let (c, reduced, inactive) = inactive_of(3);
    let d = build_decomposition(&c, 1, Overlap::Small).unwrap();
    let b = one_level_setup(&reduced, &inactive, &c, &d, Execution::default()).unwrap();
    let r = random_vec(&mut rng(4), reduced.n());
    let z = b.apply(&r).unwrap();
    let exact = CholFactor::new(&reduced).unwrap().solve(&r);
    for (x, y) in z.iter().zip(&exact) {
        assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
    }
    let res = pcg(
        |x: &[f64], y: &mut [f64]| reduced.matvec(x, y, Execution::Serial),
        |r: &[f64], z: &mut [f64]| b.apply_into(r, z),
        &r,
        &PcgOptions::default(),
    )
    .unwrap();
    assert!(res.converged && res.iterations <= 2);
}

#[test]
fn empty_reduced_space() {
    let c = Cover2D::unit_square(2).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let empty = a.submatrix(&[]).unwrap();
    let d = build_decomposition(&c, 4, Overlap::Small).unwrap();
    let p = full_prolongation(&Cover2D::unit_square(1).unwrap(), &c).unwrap();
    let b = two_level_setup(&empty, &[], &c, &d, &p, Execution::default()).unwrap();
    assert_eq!(b.apply(&[]).unwrap(), Vec::<f64>::new());
    assert_eq!(b.coarse_rank(), 0);
}

#[test]
fn coarse_equal_to_fine_is_identity() {
    let c = Cover2D::unit_square(2).unwrap();
    let p = full_prolongation(&c, &c).unwrap();
    for i in 0..c.dof_count() {
        let row: Vec<(usize, f64)> = p.row(i).collect();
        assert_eq!(row.len(), 1);
        assert_eq!(row[0].0, i);
        assert!((row[0].1 - 1.0).abs() < 1e-14);
    }
    let a = assemble_stiffness(&c, Execution::default());
    let all: Vec<usize> = (0..a.n()).collect();
    let d = build_decomposition(&c, 4, Overlap::Small).unwrap();
    let b = two_level_setup(&a, &all, &c, &d, &p, Execution::default()).unwrap();
    assert_eq!(b.coarse_rank(), a.n());
}

#[test]
fn truncation_is_idempotent() {
    let coarse = Cover2D::unit_square(1).unwrap();
    let fine = Cover2D::unit_square(3).unwrap();
    let keep: Vec<bool> = (0..fine.dof_count()).map(|i| i % 3 != 1).collect();
    let once = coarse_to_fine(&coarse, &fine, &keep).unwrap();
    let kept: Vec<usize> = (0..fine.dof_count()).filter(|&i| keep[i]).collect();
    let full = full_prolongation(&coarse, &fine).unwrap();
    for i in 0..fine.dof_count() {
        let a: Vec<(usize, f64)> = once.row(i).collect();
        if keep[i] {
            let b: Vec<(usize, f64)> = full.row(i).collect();
            assert_eq!(a, b);
        } else {
            assert!(a.is_empty());
        }
    }
    let twice = once.select_rows(&kept);
    assert_eq!(twice, full.select_rows(&kept));
}

#[test]
fn preconditioners_symmetric_and_positive() {
    for level in 2..=4 {
        let (c, reduced, inactive) = inactive_of(level);
        for j in [4, 16] {
            if j > 1 << (2 * level) {
                continue;
            }
            let m = (j as f64).sqrt().log2() as u32;
            let p = full_prolongation(&Cover2D::unit_square(m).unwrap(), &c).unwrap();
            for ov in [Overlap::Small, Overlap::Generous] {
                let d = build_decomposition(&c, j, ov).unwrap();
                let one = one_level_setup(&reduced, &inactive, &c, &d, Execution::default()).unwrap();
                symmetry_and_positivity(&one, level as u64);
                let two = two_level_setup(&reduced, &inactive, &c, &d, &p, Execution::default()).unwrap();
                assert!(two.coarse_rank() > 0);
                symmetry_and_positivity(&two, 100 + level as u64);
            }
        }
    }
}

#[test]
fn spectral_upper_bound() {
    for level in 2..=3 {
        let (c, reduced, inactive) = inactive_of(level);
        let n = reduced.n();
        let a = DMatrix::from_row_slice(n, n, &reduced.to_dense());
        let l = a.clone().cholesky().unwrap().l();
        for (j, ov) in [(4, Overlap::Small), (4, Overlap::Generous), (16, Overlap::Small)] {
            let d = build_decomposition(&c, j, ov).unwrap();
            let b = one_level_setup(&reduced, &inactive, &c, &d, Execution::default()).unwrap();
            let bm = DMatrix::from_row_slice(n, n, &dense_operator(n, |x| b.apply(x).unwrap()));
            let s = l.transpose() * bm * &l;
            let eig = SymmetricEigen::new((&s + s.transpose()) * 0.5).eigenvalues;
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            assert!(max <= 2.0 * (d.nc as f64 + 1.0), "level {level} J {j}: λmax {max}, Nc {}", d.nc);
            assert!(eig.iter().all(|&e| e > 0.0));
        }
    }
}

#[test]
fn one_level_does_not_see_an_inactive_obstacle() {
    let c = Cover2D::unit_square(3).unwrap();
    let a = assemble_stiffness(&c, Execution::default());
    let all: Vec<usize> = (0..a.n()).collect();
    let with_obstacle = a.submatrix(&all).unwrap();
    let d = build_decomposition(&c, 4, Overlap::Small).unwrap();
    let b1 = one_level_setup(&with_obstacle, &all, &c, &d, Execution::default()).unwrap();
    let b2 = one_level_setup(&a, &all, &c, &d, Execution::default()).unwrap();
    assert_eq!(b1.index_sets(), b2.index_sets());
    let r = random_vec(&mut rng(1), a.n());
    assert_eq!(b1.apply(&r).unwrap(), b2.apply(&r).unwrap());
}

#[test]
fn serial_and_parallel_apply_agree() {
    let (c, reduced, inactive) = inactive_of(3);
    let d = build_decomposition(&c, 16, Overlap::Generous).unwrap();
    let p = full_prolongation(&Cover2D::unit_square(2).unwrap(), &c).unwrap();
    let bs = two_level_setup(&reduced, &inactive, &c, &d, &p, Execution::Serial).unwrap();
    let bp = two_level_setup(&reduced, &inactive, &c, &d, &p, Execution::Parallel).unwrap();
    let r = random_vec(&mut rng(2), reduced.n());
    assert_eq!(bs.apply(&r).unwrap(), bp.apply(&r).unwrap());
}

#[test]
fn decomposition_csv() {
    let c = Cover2D::unit_square(3).unwrap();
    let d = build_decomposition(&c, 4, Overlap::Generous).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&c, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].contains("Nc") && lines[0].contains("delta") && lines[0].contains(",H"));
}
