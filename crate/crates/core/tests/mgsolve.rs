use mgnets::mgsolve::{
    apply_operator, level_trace, prolong, residual, restrict, smooth, solve, solve_with, CycleKind,
    CycleRecorder, Grid, GridHierarchy, Multigrid, PoissonProblem, SmootherConfig,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Dense Laplacian written out from the stencil, independent of the library.
fn dense_laplacian(dim: usize, n: usize) -> DMatrix<f64> {
    let h2 = ((n + 1) as f64).powi(2);
    if dim == 1 {
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 * h2,
            1 => -h2,
            _ => 0.0,
        })
    } else {
        let len = n * n;
        DMatrix::from_fn(len, len, |a, b| {
            let (ai, aj) = (a / n, a % n);
            let (bi, bj) = (b / n, b % n);
            match (ai.abs_diff(bi), aj.abs_diff(bj)) {
                (0, 0) => 4.0 * h2,
                (1, 0) | (0, 1) => -h2,
                _ => 0.0,
            }
        })
    }
}

/// Full-weighting matrix (coarse × fine) in 1D or as a tensor product in 2D.
fn dense_restriction(dim: usize, fine_n: usize) -> DMatrix<f64> {
    let m = (fine_n - 1) / 2;
    let r1 = DMatrix::from_fn(m, fine_n, |i, j| match j as isize - (2 * i + 1) as isize {
        0 => 0.5,
        -1 | 1 => 0.25,
        _ => 0.0,
    });
    if dim == 1 {
        r1
    } else {
        r1.kronecker(&r1)
    }
}

fn discrete_solution(p: &PoissonProblem) -> Vec<f64> {
    let g = p.grid();
    let a = dense_laplacian(g.dim(), g.n());
    let f = DVector::from_column_slice(p.rhs());
    a.cholesky().unwrap().solve(&f).as_slice().to_vec()
}

#[test]
fn operator_matches_dense_matrix() {
    for (dim, n) in [(1, 7), (2, 7)] {
        let g = Grid::new(dim, n).unwrap();
        let u = random_vec(g.len(), 3);
        let ours = apply_operator(&g, &u).unwrap();
        let theirs = dense_laplacian(dim, n) * DVector::from_column_slice(&u);
        for (a, b) in ours.iter().zip(theirs.iter()) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }
}

#[test]
fn operator_examples() {
    let g = Grid::new(1, 3).unwrap();
    assert_eq!(apply_operator(&g, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    assert_eq!(apply_operator(&g, &[1.0; 3]).unwrap(), vec![16.0, 0.0, 16.0]);
    assert!(apply_operator(&g, &[1.0; 4]).is_err());

    let g2 = Grid::new(2, 3).unwrap();
    let p = PoissonProblem::from_fn(g2, |x| x[0] * (1.0 - x[1]) + 1.0);
    let u = discrete_solution(&p);
    let au = apply_operator(&g2, &u).unwrap();
    let err: Vec<f64> = au.iter().zip(p.rhs()).map(|(a, b)| a - b).collect();
    assert!(norm(&err) <= 1e-10 * norm(p.rhs()));
}

#[test]
fn residual_examples() {
    let g = Grid::new(1, 3).unwrap();
    assert_eq!(residual(&g, &[1.0; 3], &[0.0; 3]).unwrap(), vec![-16.0, 0.0, -16.0]);
    let f = vec![1.0, 2.0, 3.0];
    assert_eq!(residual(&g, &[0.0; 3], &f).unwrap(), f);
    assert!(residual(&g, &[0.0; 3], &[0.0; 2]).is_err());

    let p = PoissonProblem::sine(Grid::new(2, 15).unwrap());
    let u = discrete_solution(&p);
    let r = residual(&p.grid(), &u, p.rhs()).unwrap();
    assert!(norm(&r) <= 1e-10 * norm(p.rhs()));
}

#[test]
fn restriction_matches_dense_full_weighting() {
    for (dim, n) in [(1, 15), (2, 7)] {
        let g = Grid::new(dim, n).unwrap();
        let v = random_vec(g.len(), 11);
        let ours = restrict(&g, &v).unwrap();
        let theirs = dense_restriction(dim, n) * DVector::from_column_slice(&v);
        for (a, b) in ours.iter().zip(theirs.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let g = Grid::new(1, 7).unwrap();
    assert_eq!(restrict(&g, &[0.0; 7]).unwrap(), vec![0.0; 3]);
    assert!(restrict(&Grid::new(1, 1).unwrap(), &[1.0]).is_err());
}

#[test]
fn prolongation_examples() {
    let c = Grid::new(1, 1).unwrap();
    assert_eq!(prolong(&c, &[1.0]).unwrap(), vec![0.5, 1.0, 0.5]);
    let c = Grid::new(2, 3).unwrap();
    assert_eq!(prolong(&c, &[0.0; 9]).unwrap(), vec![0.0; 49]);
}

#[test]
fn smoothing_keeps_the_exact_solution() {
    let p = PoissonProblem::sine(Grid::new(2, 15).unwrap());
    let u = discrete_solution(&p);
    for cfg in [SmootherConfig::gauss_seidel(1, 1), SmootherConfig::jacobi(2.0 / 3.0, 1, 1)] {
        let v = smooth(&p.grid(), &u, p.rhs(), &cfg, 3).unwrap();
        let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-12 * norm(&u).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_symmetric(seed in any::<u64>(), dim in 1usize..=2, k in 2u32..=5) {
        let g = Grid::new(dim, (1 << k) - 1).unwrap();
        let x = random_vec(g.len(), seed);
        let y = random_vec(g.len(), seed ^ 0x5eed);
        let axy = dot(&apply_operator(&g, &x).unwrap(), &y);
        let xay = dot(&x, &apply_operator(&g, &y).unwrap());
        prop_assert!((axy - xay).abs() <= 1e-10 * axy.abs().max(xay.abs()).max(1.0));
    }

    #[test]
    fn prolongation_is_scaled_transpose_of_restriction(
        seed in any::<u64>(), dim in 1usize..=2, k in 2u32..=5,
    ) {
        let fine = Grid::new(dim, (1 << k) - 1).unwrap();
        let coarse = fine.coarsen().unwrap();
        let c = random_vec(coarse.len(), seed);
        let f = random_vec(fine.len(), seed.wrapping_add(1));
        let lhs = dot(&prolong(&coarse, &c).unwrap(), &f);
        let rhs = (1 << dim) as f64 * dot(&c, &restrict(&fine, &f).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn cycles_fix_the_discrete_solution(seed in any::<u64>(), dim in 1usize..=2) {
        let g = Grid::new(dim, 15).unwrap();
        let f = random_vec(g.len(), seed);
        let p = PoissonProblem::new(g, f).unwrap();
        let u_star = discrete_solution(&p);
        let mg = Multigrid::new(GridHierarchy::full(g).unwrap(), SmootherConfig::default()).unwrap();
        for kind in [CycleKind::V, CycleKind::W] {
            let mut u = u_star.clone();
            let mut rec = CycleRecorder::new();
            match kind {
                CycleKind::V => mg.v_cycle(&mut u, p.rhs(), 0, &mut rec),
                _ => mg.w_cycle(&mut u, p.rhs(), 0, &mut rec),
            }
            let diff: Vec<f64> = u.iter().zip(&u_star).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&diff) < 1e-10 * norm(&u_star));
        }
    }
}

/// Two-grid method from dense matrices: GS as a triangular solve, coarse
/// correction with an LU solve of the rediscretised coarse operator.
fn dense_two_grid(dim: usize, n: usize, u0: &[f64], f: &[f64], nu1: usize, nu2: usize) -> Vec<f64> {
    let a = dense_laplacian(dim, n);
    let lower = a.lower_triangle();
    let r = dense_restriction(dim, n);
    let p = r.transpose() * (1 << dim) as f64;
    let m = (n - 1) / 2;
    let ac = dense_laplacian(dim, m);
    let f = DVector::from_column_slice(f);
    let mut u = DVector::from_column_slice(u0);
    let gs = |u: &mut DVector<f64>| {
        let res = &f - &a * &*u;
        *u += lower.solve_lower_triangular(&res).unwrap();
    };
    for _ in 0..nu1 {
        gs(&mut u);
    }
    let rc = &r * (&f - &a * &u);
    let ec = ac.lu().solve(&rc).unwrap();
    u += p * ec;
    for _ in 0..nu2 {
        gs(&mut u);
    }
    u.as_slice().to_vec()
}

#[test]
fn depth_two_v_cycle_is_the_two_grid_method() {
    for (dim, n) in [(1, 15), (2, 7)] {
        let g = Grid::new(dim, n).unwrap();
        let f = random_vec(g.len(), 21);
        let u0 = random_vec(g.len(), 22);
        let mg = Multigrid::new(
            GridHierarchy::with_depth(g, 2).unwrap(),
            SmootherConfig::gauss_seidel(2, 1),
        )
        .unwrap();
        let mut u = u0.clone();
        mg.v_cycle(&mut u, &f, 0, &mut CycleRecorder::new());
        let oracle = dense_two_grid(dim, n, &u0, &f, 2, 1);
        let diff: Vec<f64> = u.iter().zip(&oracle).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-12 * norm(&oracle), "dim {dim}");

        let mut w = u0.clone();
        mg.w_cycle(&mut w, &f, 0, &mut CycleRecorder::new());
        let diff: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-12 * norm(&u), "W differs from V at depth 2");
    }
}

#[test]
fn v_cycle_contracts_by_a_factor_four() {
    let p = PoissonProblem::sine(Grid::new(1, 127).unwrap());
    let out = solve(&p, CycleKind::V, &SmootherConfig::default(), 1e-14, 6).unwrap();
    let w = solve(&p, CycleKind::W, &SmootherConfig::default(), 1e-14, 6).unwrap();
    let (hv, hw) = (out.history.entries(), w.history.entries());
    for k in 1..hv.len().min(hw.len()) {
        let rho_v = hv[k].residual_l2 / hv[k - 1].residual_l2;
        let rho_w = hw[k].residual_l2 / hw[k - 1].residual_l2;
        assert!(rho_v <= 0.25, "cycle {k}: V factor {rho_v}");
        assert!(rho_w <= rho_v * (1.0 + 1e-9), "cycle {k}: W {rho_w} > V {rho_v}");
    }
}

#[test]
fn one_fmg_pass_reaches_discretisation_accuracy() {
    let g = Grid::new(1, 127).unwrap();
    let p = PoissonProblem::sine(g);
    let u_disc = discrete_solution(&p);
    let exact = g.sample(|x| (PI * x[0]).sin());
    let mg = Multigrid::new(GridHierarchy::full(g).unwrap(), SmootherConfig::default()).unwrap();
    let u = mg.fmg_cycle(p.rhs(), &mut CycleRecorder::new());
    let alg: Vec<f64> = u.iter().zip(&u_disc).map(|(a, b)| a - b).collect();
    let disc: Vec<f64> = u_disc.iter().zip(&exact).map(|(a, b)| a - b).collect();
    assert!(norm(&alg) <= 2.0 * norm(&disc), "{} > 2·{}", norm(&alg), norm(&disc));
}

#[test]
fn fmg_of_zero_is_zero() {
    let g = Grid::new(2, 15).unwrap();
    let mg = Multigrid::new(GridHierarchy::full(g).unwrap(), SmootherConfig::default()).unwrap();
    assert!(mg.fmg_cycle(&vec![0.0; g.len()], &mut CycleRecorder::new()).iter().all(|&x| x == 0.0));
}

#[test]
fn residual_ordering_and_cycle_counts_in_2d() {
    let p = PoissonProblem::sine(Grid::new(2, 63).unwrap());
    let cfg = SmootherConfig::default();
    let run = |kind| solve(&p, kind, &cfg, 1e-10, 60).unwrap();
    let (v, w, f) = (run(CycleKind::V), run(CycleKind::W), run(CycleKind::Fmg));
    assert!(v.converged && w.converged && f.converged);
    let cycles = |o: &mgnets::mgsolve::SolveOutcome| o.history.last().unwrap().cycle;
    assert!(cycles(&f) <= cycles(&w) && cycles(&w) <= cycles(&v));
    for k in 1..=5 {
        let (rv, rw, rf) = (
            v.history.residual_at(k).unwrap(),
            w.history.residual_at(k).unwrap(),
            f.history.residual_at(k).unwrap(),
        );
        assert!(rf <= rw && rw <= rv, "cycle {k}: {rf} {rw} {rv}");
    }
    for o in [&v, &w, &f] {
        let h = o.history.entries();
        assert!(h.windows(2).all(|p| p[1].residual_l2 <= p[0].residual_l2));
        assert!(h.windows(2).all(|p| p[1].cycle > p[0].cycle && p[1].work_units > p[0].work_units));
    }
}

#[test]
fn hierarchy_depth_is_respected() {
    let g = Grid::new(2, 31).unwrap();
    let p = PoissonProblem::sine(g);
    let h = GridHierarchy::with_depth(g, 3).unwrap();
    let out = solve_with(&p, &h, CycleKind::V, &SmootherConfig::default(), 1e-8, 30).unwrap();
    assert!(out.converged);
    assert!(GridHierarchy::with_depth(g, 6).is_err());
}

#[test]
fn traces_for_every_depth_start_and_end_on_the_right_grid() {
    for depth in 2..=6 {
        for kind in [CycleKind::V, CycleKind::W] {
            let t = level_trace(kind, depth).unwrap();
            assert_eq!((t[0], *t.last().unwrap()), (0, 0));
            assert_eq!(*t.iter().max().unwrap(), depth - 1);
        }
        let t = level_trace(CycleKind::Fmg, depth).unwrap();
        assert_eq!(t[0], depth - 1);
    }
}
