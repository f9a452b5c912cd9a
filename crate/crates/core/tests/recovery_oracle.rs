use cloak::emd::Grid;
use cloak::recovery::{bpd_solve, least_residual, RecoveryProblem, SolverTolerances};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest `Σf` over the lattice `{0, 0.01, …, 1}⁴` with `‖Mf − y‖ ≤ r`.
fn grid_search(m: &DMatrix<f64>, y: &[f64], r: f64) -> f64 {
    const STEPS: usize = 100;
    let h = 1.0 / STEPS as f64;
    let r2 = r * r;
    let col = |j: usize| [m[(0, j)], m[(1, j)], m[(2, j)]];
    let (c0, c1, c2, c3) = (col(0), col(1), col(2), col(3));
    let mut best = f64::INFINITY;
    for a in 0..=STEPS {
        let fa = a as f64 * h;
        for b in 0..=STEPS {
            let fb = b as f64 * h;
            for c in 0..=STEPS {
                let fc = c as f64 * h;
                let base = fa + fb + fc;
                if base >= best {
                    break;
                }
                let partial: [f64; 3] =
                    std::array::from_fn(|i| c0[i] * fa + c1[i] * fb + c2[i] * fc - y[i]);
                for d in 0..=STEPS {
                    let fd = d as f64 * h;
                    if base + fd >= best {
                        break;
                    }
                    let res: f64 = (0..3).map(|i| (partial[i] + c3[i] * fd).powi(2)).sum();
                    if res <= r2 {
                        best = base + fd;
                        break;
                    }
                }
            }
        }
    }
    best
}

fn instance(rng: &mut impl Rng) -> (DMatrix<f64>, Vec<f64>, f64) {
    let m = DMatrix::from_fn(3, 4, |_, _| rng.random_range(0.0..1.0));
    let f0: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..3)
        .map(|i| (0..4).map(|j| m[(i, j)] * f0[j]).sum::<f64>() + rng.random_range(-0.05..0.05))
        .collect();
    let r = rng.random_range(0.1..0.6);
    (m, y, r)
}

#[test]
fn solver_matches_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = SolverTolerances::default();
    for _ in 0..8 {
        let (m, y, r) = instance(&mut rng);
        let p = RecoveryProblem::from_matrix(m.clone(), &y, r, Grid::Nodes(4)).unwrap();
        let res = bpd_solve(&p, &tol).unwrap();
        let oracle = grid_search(&m, &y, r);
        assert!(res.converged);
        assert!(res.constraint_violation <= tol.feasibility_tol(r));
        // any feasible lattice point bounds the optimum from above
        assert!(res.objective <= oracle + 1e-6, "{} > grid {}", res.objective, oracle);
        assert!(oracle - res.objective <= 0.02, "{} vs grid {}", res.objective, oracle);
    }
}

#[test]
fn l1_norm_shrinks_as_radius_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tol = SolverTolerances::default();
    let m = DMatrix::from_fn(8, 12, |_, _| rng.random_range(0.0..1.0));
    let y: Vec<f64> = (0..8).map(|_| rng.random_range(0.5..2.0)).collect();
    let floor = least_residual(
        &RecoveryProblem::from_matrix(m.clone(), &y, 0.0, Grid::Nodes(12)).unwrap(),
        &tol,
    )
    .unwrap()
    .0;
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let r = floor + 0.05 + 0.25 * k as f64;
        let p = RecoveryProblem::from_matrix(m.clone(), &y, r, Grid::Nodes(12)).unwrap();
        let obj = bpd_solve(&p, &tol).unwrap().objective;
        let slack = 1e-5 * (1.0 + last.min(obj));
        assert!(obj <= last + slack, "radius {r}: {obj} after {last}");
        last = obj;
    }
}
