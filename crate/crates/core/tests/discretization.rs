mod common;

use proptest::prelude::*;

use plate_obstacle::assembly::assemble_mass;
use plate_obstacle::pum::{coarse_to_fine, Cover1D, Cover2D};
use plate_obstacle::Execution;

use common::{random_vec, rng};

#[test]
fn dof_counts() {
    for level in 1..=8u32 {
        let c = Cover1D::new(level, (-0.5, 0.5), 0.25).unwrap();
        let n1 = 3 * (1usize << level) - 4;
        assert_eq!(c.n_nodes(), n1);
        assert_eq!(n1 * n1, (3 * (1usize << level) - 4).pow(2));
    }
    assert_eq!(Cover2D::unit_square(1).unwrap().dof_count(), 4);
    assert_eq!(Cover2D::unit_square(2).unwrap().dof_count(), 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn partition_of_unity(level in 1u32..=7, t in 0.0f64..1.0) {
        let c = Cover1D::new(level, (-0.5, 0.5), 0.25).unwrap();
        let x = -0.5 + t;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for i in 0..c.n_patches() {
            let v = c.pu_eval(i, x, 0).unwrap();
            prop_assert!(v >= 0.0);
            s0 += v;
            s1 += c.pu_eval(i, x, 1).unwrap();
        }
        prop_assert!((s0 - 1.0).abs() <= 1e-12);
        prop_assert!(s1.abs() <= 1e-10);
    }
}

proptest! {
    #[test]
    fn basis_derivatives_match_differences(level in 1u32..=4, t in 0.01f64..0.99, node_frac in 0.0f64..1.0) {
        let c = Cover1D::new(level, (-0.5, 0.5), 0.25).unwrap();
        let node = ((c.n_nodes() as f64 - 1.0) * node_frac).round() as usize;
        let x = -0.5 + t;
        let eps = 1e-6;
        let d1 = (c.basis_eval(node, x + eps, 0) - c.basis_eval(node, x - eps, 0)) / (2.0 * eps);
        let d2 = (c.basis_eval(node, x + eps, 1) - c.basis_eval(node, x - eps, 1)) / (2.0 * eps);
        let scale = (1u64 << (2 * level)) as f64 * 100.0;
        prop_assert!((d1 - c.basis_eval(node, x, 1)).abs() <= 1e-5 * scale, "first derivative");
        // the second derivative jumps at breakpoints; compare only away from them
        if c.breakpoints().iter().all(|b| (b - x).abs() > 10.0 * eps) {
            prop_assert!((d2 - c.basis_eval(node, x, 2)).abs() <= 1e-4 * scale, "second derivative");
        }
    }
}

#[test]
fn disjoint_flat_tops() {
    for level in 1..=4 {
        let c = Cover2D::unit_square(level).unwrap();
        let (cx, cy) = (c.x_cover(), c.y_cover());
        for node in c.nodes() {
            let mut ones = 0;
            for i in 0..cx.n_patches() {
                for j in 0..cy.n_patches() {
                    let v = cx.pu_eval(i, node.x, 0).unwrap() * cy.pu_eval(j, node.y, 0).unwrap();
                    if v == 1.0 {
                        ones += 1;
                        assert_eq!((i, j), node.patch);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
            assert_eq!(ones, 1);
        }
    }
}

#[test]
fn nodal_basis_exhaustive() {
    for level in 1..=3 {
        let c = Cover2D::unit_square(level).unwrap();
        for g in 0..c.dof_count() {
            for p in c.nodes() {
                let v = c.shape_eval(g, (p.x, p.y), (0, 0)).unwrap();
                let expect = if p.id == g { 1.0 } else { 0.0 };
                assert!((v - expect).abs() <= 1e-14, "dof {g} node {}", p.id);
            }
        }
    }
}

#[test]
fn interpolation_reproduces_space() {
    let mut r = rng(11);
    for level in 1..=4 {
        let c = Cover2D::unit_square(level).unwrap();
        for _ in 0..20 {
            let v = random_vec(&mut r, c.dof_count());
            let values: Vec<Option<f64>> = c.nodes().iter().map(|p| Some(c.evaluate(&v, (p.x, p.y), (0, 0)))).collect();
            let w = c.interpolate(&values).unwrap();
            for (a, b) in v.iter().zip(&w) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
    let c = Cover2D::unit_square(2).unwrap();
    assert_eq!(c.interpolate(&vec![Some(0.0); c.dof_count()]).unwrap(), vec![0.0; c.dof_count()]);
}

#[test]
fn reproduces_biquadratics_away_from_boundary_patches() {
    let c = Cover2D::unit_square(3).unwrap();
    let p = |x: f64, y: f64| 1.0 + 2.0 * x - y + 3.0 * x * y - x * x + 0.5 * y * y * x;
    let coeffs = c.interpolate_fn(p);
    let h = c.cell_width();
    let mut r = rng(5);
    for _ in 0..500 {
        let x = rand::Rng::random_range(&mut r, -0.5 + 1.5 * h..0.5 - 1.5 * h);
        let y = rand::Rng::random_range(&mut r, -0.5 + 1.5 * h..0.5 - 1.5 * h);
        assert!((c.evaluate(&coeffs, (x, y), (0, 0)) - p(x, y)).abs() < 1e-12);
    }
}

#[test]
fn l2_norm_equivalence_bracket() {
    let mut r = rng(3);
    for level in 2..=4 {
        let c = Cover2D::unit_square(level).unwrap();
        let m = assemble_mass(&c, Execution::default());
        let h2 = c.cell_width().powi(2);
        for _ in 0..20 {
            let v = random_vec(&mut r, c.dof_count());
            let ratio = m.bilinear(&v, &v) / (h2 * v.iter().map(|x| x * x).sum::<f64>());
            assert!((0.01..=100.0).contains(&ratio), "level {level}: {ratio}");
        }
    }
}

#[test]
fn clamped_on_boundary() {
    let c = Cover2D::unit_square(2).unwrap();
    let pts: Vec<(f64, f64)> = (0..25)
        .flat_map(|k| {
            let t = -0.5 + k as f64 / 24.0;
            [(t, -0.5), (t, 0.5), (-0.5, t), (0.5, t)]
        })
        .collect();
    assert_eq!(pts.len(), 100);
    for g in 0..c.dof_count() {
        for &pt in &pts {
            for d in [(0, 0), (1, 0), (0, 1)] {
                assert!(c.shape_eval(g, pt, d).unwrap().abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn prolongation_matches_coarse_evaluation() {
    let mut r = rng(9);
    for (lc, lf) in [(1, 2), (1, 3), (2, 4)] {
        let coarse = Cover2D::unit_square(lc).unwrap();
        let fine = Cover2D::unit_square(lf).unwrap();
        let p = coarse_to_fine(&coarse, &fine, &vec![true; fine.dof_count()]).unwrap();
        let v = random_vec(&mut r, coarse.dof_count());
        let mut pv = vec![0.0; fine.dof_count()];
        p.matvec(&v, &mut pv, Execution::Serial);
        for node in fine.nodes() {
            let direct = coarse.evaluate(&v, (node.x, node.y), (0, 0));
            assert!((pv[node.id] - direct).abs() <= 1e-12);
        }
    }
}

#[test]
fn cover_csv_lists_nodes() {
    let c = Cover2D::unit_square(2).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().count() > c.dof_count());
}
