use cloak::emd::{emd_flow, emd_line, GroundMetric, SourceVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum transport cost by enumerating basic feasible solutions of the
/// transportation polytope restricted to the supports of `p` and `q`.
fn vertex_enumeration(p: &[f64], q: &[f64], d: &DMatrix<f64>) -> f64 {
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    let cells: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .collect();
    let basis = rows.len() + cols.len() - 1;
    // one marginal equation is redundant; drop the last column constraint
    let eqs = basis;
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..basis).collect();
    loop {
        let mut a = DMatrix::zeros(eqs, basis);
        let mut b = DVector::zeros(eqs);
        for (r, &i) in rows.iter().enumerate() {
            b[r] = p[i];
        }
        for (c, &j) in cols.iter().take(cols.len() - 1).enumerate() {
            b[rows.len() + c] = q[j];
        }
        for (k, &cell) in subset.iter().enumerate() {
            let (i, j) = cells[cell];
            let r = rows.iter().position(|&x| x == i).unwrap();
            a[(r, k)] = 1.0;
            if let Some(c) = cols.iter().position(|&x| x == j) {
                if c < cols.len() - 1 {
                    a[(rows.len() + c, k)] = 1.0;
                }
            }
        }
        if let Some(x) = a.clone().lu().solve(&b) {
            let resid = (&a * &x - &b).amax();
            if resid < 1e-9 && x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = subset
                    .iter()
                    .zip(x.iter())
                    .map(|(&cell, &v)| d[cells[cell]] * v)
                    .sum();
                best = best.min(cost);
            }
        }
        // next combination
        let mut k = basis;
        while k > 0 && subset[k - 1] == cells.len() - basis + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        subset[k - 1] += 1;
        for l in k..basis {
            subset[l] = subset[l - 1] + 1;
        }
    }
    best
}

fn random_metric(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    })
}

fn random_support(rng: &mut impl Rng, n: usize, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let mut idx: Vec<usize> = (0..n).collect();
    for s in 0..k {
        let j = rng.random_range(s..n);
        idx.swap(s, j);
        w[idx[s]] = rng.random_range(0.1..1.0);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

#[test]
fn flow_matches_vertex_enumeration_on_six_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..40 {
        let d = random_metric(&mut rng, 6);
        let (kp, kq) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let p = random_support(&mut rng, 6, kp);
        let q = random_support(&mut rng, 6, kq);
        let oracle = vertex_enumeration(&p, &q, &d);
        let metric = GroundMetric::new(d).unwrap();
        let (flow, cost) = emd_flow(
            &SourceVector::on_nodes(p.clone()).unwrap(),
            &SourceVector::on_nodes(q.clone()).unwrap(),
            &metric,
        )
        .unwrap();
        assert!((cost - oracle).abs() < 1e-9, "flow {cost} vs enumeration {oracle}");
        assert!(flow.duality_gap.abs() < 1e-9);
    }
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-3).then(|| w.iter().map(|v| v / s).collect())
    })
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=20).prop_flat_map(|n| (weights(n), weights(n), weights(n)))
}

fn line_metric(n: usize) -> GroundMetric {
    let pos: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    GroundMetric::line(&pos).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn line_closed_form_agrees_with_flow((p, q, _) in triple()) {
        let n = p.len();
        let (fp, fq) = (SourceVector::on_unit_interval(p.clone()).unwrap(), SourceVector::on_unit_interval(q.clone()).unwrap());
        let line = emd_line(&fp, &fq).unwrap();
        let (_, flow) = emd_flow(&SourceVector::on_nodes(p).unwrap(), &SourceVector::on_nodes(q).unwrap(), &line_metric(n)).unwrap();
        prop_assert!((line - flow).abs() < 1e-7);
    }

    #[test]
    fn emd_is_a_metric((p, q, r) in triple()) {
        let d = line_metric(p.len());
        let node = |w: &Vec<f64>| SourceVector::on_nodes(w.clone()).unwrap();
        let e = |a: &Vec<f64>, b: &Vec<f64>| emd_flow(&node(a), &node(b), &d).unwrap().1;
        prop_assert!(e(&p, &p).abs() < 1e-12);
        prop_assert!((e(&p, &q) - e(&q, &p)).abs() < 1e-9);
        prop_assert!(e(&p, &r) <= e(&p, &q) + e(&q, &r) + 1e-9);
        prop_assert!(e(&p, &q) >= 0.0);
    }
}
