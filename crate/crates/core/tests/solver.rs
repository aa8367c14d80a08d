mod common;

use common::{dense, proximal_gradient, random_instance, reference_objective, rng};
use ndarray::Array2;
use psrrr::pathmap::ExpandedDesign;
use psrrr::solver::{
    active_set_solve, group_lasso_bcd, group_lasso_bcd_in_order, kkt_check, lambda_max, lasso_cd, SolverOptions,
};
use rand::Rng;

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-10,
        max_outer: 100_000,
        ..Default::default()
    }
}

#[test]
fn bcd_matches_proximal_gradient_on_overlapping_designs() {
    let mut r = rng(101);
    for _ in 0..15 {
        let inst = random_instance(&mut r, 25, 4, 24, 3, true);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let lambda = r.gen_range(0.05..0.95) * lm;
        let res = group_lasso_bcd(&inst.z, &inst.design, lambda, &inst.weights, &tight()).unwrap();
        let x = dense(&inst.design);
        let b_ref = proximal_gradient(&x, &inst.blocks, &inst.z, lambda, &inst.weights);
        let f_ref = reference_objective(&x, &inst.blocks, &inst.z, &b_ref, lambda, &inst.weights);
        let f = reference_objective(&x, &inst.blocks, &inst.z, &res.coef, lambda, &inst.weights);
        assert!((f - f_ref).abs() < 1e-8, "objective {f} vs reference {f_ref}");
        assert!(f <= f_ref + 1e-9);
    }
}

#[test]
fn objective_decreases_every_sweep() {
    let mut r = rng(7);
    for _ in 0..20 {
        let inst = random_instance(&mut r, 30, 5, 40, 4, true);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let opts = SolverOptions {
            trace: true,
            ..tight()
        };
        let res = group_lasso_bcd(&inst.z, &inst.design, 0.2 * lm, &inst.weights, &opts).unwrap();
        let start = 0.5 * inst.z.iter().map(|v| v * v).sum::<f64>();
        let mut prev = start;
        for &f in &res.trace {
            assert!(f <= prev + 1e-12, "objective rose from {prev} to {f}");
            prev = f;
        }
    }
}

#[test]
fn zero_blocks_satisfy_the_exact_threshold() {
    let mut r = rng(8);
    for _ in 0..30 {
        let inst = random_instance(&mut r, 30, 5, 40, 3, false);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let lambda = r.gen_range(0.3..0.99) * lm;
        let res = group_lasso_bcd(&inst.z, &inst.design, lambda, &inst.weights, &tight()).unwrap();
        let xb = inst.design.mul(&res.coef);
        let resid: Vec<f64> = inst.z.iter().zip(&xb).map(|(a, b)| a - b).collect();
        for l in 0..inst.design.n_groups() {
            if res.selected.contains(&l) {
                continue;
            }
            assert!(res.coef[inst.design.block(l)].iter().all(|&v| v == 0.0));
            let g: f64 = inst
                .design
                .block(l)
                .map(|k| inst.design.col(k).iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(g <= lambda * inst.weights[l] * (1.0 + 1e-8));
        }
    }
}

#[test]
fn group_order_does_not_change_the_solution() {
    let mut r = rng(9);
    for _ in 0..20 {
        let inst = random_instance(&mut r, 30, 5, 40, 3, true);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let lambda = 0.4 * lm;
        let l = inst.design.n_groups();
        let fwd: Vec<usize> = (0..l).collect();
        let rev: Vec<usize> = (0..l).rev().collect();
        let a = group_lasso_bcd_in_order(&inst.z, &inst.design, lambda, &inst.weights, &fwd, &tight()).unwrap();
        let b = group_lasso_bcd_in_order(&inst.z, &inst.design, lambda, &inst.weights, &rev, &tight()).unwrap();
        assert_eq!(a.selected, b.selected);
        let diff = a.coef.iter().zip(&b.coef).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "coefficient gap {diff}");
    }
}

#[test]
fn response_scaling_scales_coefficients() {
    let mut r = rng(10);
    for _ in 0..20 {
        let inst = random_instance(&mut r, 30, 4, 30, 3, true);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let c = r.gen_range(0.1..10.0);
        let zc: Vec<f64> = inst.z.iter().map(|v| c * v).collect();
        let a = group_lasso_bcd(&inst.z, &inst.design, 0.3 * lm, &inst.weights, &tight()).unwrap();
        let b = group_lasso_bcd(&zc, &inst.design, 0.3 * c * lm, &inst.weights, &tight()).unwrap();
        assert_eq!(a.selected, b.selected);
        for (x, y) in a.coef.iter().zip(&b.coef) {
            assert!((c * x - y).abs() < 1e-7 * c.max(1.0));
        }
    }
}

#[test]
fn active_set_agrees_with_direct_solve() {
    let mut r = rng(11);
    for _ in 0..30 {
        let inst = random_instance(&mut r, 30, 5, 40, 3, true);
        let lm = lambda_max(&inst.design, &inst.z, &inst.weights).unwrap();
        let lambda = r.gen_range(0.1..0.95) * lm;
        let direct = group_lasso_bcd(&inst.z, &inst.design, lambda, &inst.weights, &tight()).unwrap();
        for screen in [0.0, 1.0, 1.5] {
            let act = active_set_solve(&inst.z, &inst.design, lambda, &inst.weights, screen, &tight()).unwrap();
            assert_eq!(act.selected, direct.selected, "screen {screen}");
            let diff = act.coef.iter().zip(&direct.coef).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "screen {screen}: gap {diff}");
        }
    }
}

/// Group 1 falls below the screening multiple but still violates the
/// zero-block condition, so the rescan has to bring it back.
#[test]
fn screened_out_group_is_readmitted() {
    let n = 4;
    let s = 0.5f64;
    // orthonormal directions e1 = (1,1,-1,-1)/2 and e2 = (1,-1,1,-1)/2
    let e1 = [s, s, -s, -s];
    let e2 = [s, -s, s, -s];
    let (c, d) = (0.8f64, 0.6f64);
    let x0: Vec<f64> = (0..n).map(|i| c * e1[i] + d * e2[i]).collect();
    let x1: Vec<f64> = (0..n).map(|i| -d * e1[i] + c * e2[i]).collect();
    let mut x = Array2::zeros((n, 2));
    for i in 0..n {
        x[[i, 0]] = x0[i];
        x[[i, 1]] = x1[i];
    }
    let design = ExpandedDesign::from_groups(x, &[vec![0], vec![1]]).unwrap();
    // z·x0 = 1, z·x1 = 0.1
    let z: Vec<f64> = (0..n).map(|i| 1.0 * x0[i] + 0.1 * x1[i]).collect();
    let w = [1.0, 1.0];
    let lambda = 0.05;
    let act = active_set_solve(&z, &design, lambda, &w, 3.0, &tight()).unwrap();
    let direct = group_lasso_bcd(&z, &design, lambda, &w, &tight()).unwrap();
    assert_eq!(act.selected, vec![0, 1]);
    assert_eq!(direct.selected, vec![0, 1]);
    assert!(kkt_check(&act.coef, &z, &design, lambda, &w) < 1e-8);
}

#[test]
fn singleton_groups_reduce_to_lasso() {
    let mut r = rng(12);
    for _ in 0..10 {
        let (n, p) = (30, 12);
        let x = common::unit_columns(&mut r, n, p);
        let z = common::gaussian(&mut r, n);
        let groups: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
        let design = ExpandedDesign::from_groups(x.clone(), &groups).unwrap();
        let w = vec![1.0; p];
        let lm = lambda_max(&design, &z, &w).unwrap();
        let lambda = 0.25 * lm;
        let g = group_lasso_bcd(&z, &design, lambda, &w, &tight()).unwrap();
        let l = lasso_cd(&z, x.view(), lambda, &tight()).unwrap();
        for (a, b) in g.coef.iter().zip(&l.coef) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}, group {} it, lasso {} it", g.iterations, l.iterations);
        }
    }
}
