use nalgebra::{DMatrix, DVector};
use rand::Rng;

use osc_core::assignment::hungarian;
use osc_core::kmeans::{kmeans, within_cluster_ss, KMeansConfig};
use osc_core::seed::rng_from_seed;
use osc_core::spectral::eigendecompose_symmetric;

/// Cyclic Jacobi rotations; returns eigenvalues sorted descending.
fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn eigenvalues_match_jacobi_oracle() {
    let mut rng = rng_from_seed(11);
    for n in [1, 2, 3, 5, 8, 13, 21, 40] {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        let ours = eigendecompose_symmetric(&s).unwrap();
        let oracle = jacobi_eigenvalues(&s);
        for (x, y) in ours.raw_lambda.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
        }
        for j in 0..n {
            let v = ours.u.column(j);
            let residual = &s * v - v * ours.raw_lambda[j];
            assert!(residual.amax() < 1e-9);
        }
    }
}

#[test]
fn repeated_eigenvalues_give_orthonormal_vectors() {
    let q = {
        let mut rng = rng_from_seed(5);
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        g.qr().q()
    };
    let d = DVector::from_vec(vec![3.0, 3.0, 3.0, 1.0, 1.0, 0.0]);
    let a = &q * DMatrix::from_diagonal(&d) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let dec = eigendecompose_symmetric(&a).unwrap();
    assert!((dec.u.tr_mul(&dec.u) - DMatrix::identity(6, 6)).amax() < 1e-10);
    for (x, y) in dec.raw_lambda.iter().zip(d.iter()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn decomposition_is_deterministic() {
    let mut rng = rng_from_seed(3);
    let a = DMatrix::from_fn(15, 15, |_, _| rng.random_range(-1.0..1.0));
    let s = (&a + a.transpose()) * 0.5;
    let d1 = eigendecompose_symmetric(&s).unwrap();
    let d2 = eigendecompose_symmetric(&s).unwrap();
    assert_eq!(d1.u, d2.u);
    assert_eq!(d1.raw_lambda, d2.raw_lambda);
    for j in 0..15 {
        let col = d1.u.column(j);
        let lead = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(lead > 0.0);
    }
}

fn brute_force_partition(points: &DMatrix<f64>, k: usize) -> f64 {
    let n = points.nrows();
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let labels: Vec<usize> = (0..n)
                .map(|_| {
                    let l = code % k;
                    code /= k;
                    l
                })
                .collect();
            within_cluster_ss(points, &labels, k)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn kmeans_reaches_brute_force_optimum_on_small_instances() {
    let mut rng = rng_from_seed(2024);
    for inst in 0..40u64 {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(k..=7);
        let dim = rng.random_range(1..=2);
        let points = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-3.0..3.0));
        let res = kmeans(&points, &KMeansConfig::new(k, inst).with_restarts(20)).unwrap();
        let best = brute_force_partition(&points, k);
        assert!((res.objective - best).abs() < 1e-9, "instance {inst}: {} vs {best}", res.objective);
        assert!((within_cluster_ss(&points, &res.assignments, k) - res.objective).abs() < 1e-9);
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let mut used = res.assignments.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), k);
    }
}

#[test]
fn kmeans_result_is_independent_of_thread_count() {
    let mut rng = rng_from_seed(77);
    let points = DMatrix::from_fn(60, 3, |_, _| rng.random_range(-1.0..1.0));
    let cfg = KMeansConfig::new(4, 8).with_restarts(6);
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| kmeans(&points, &cfg).unwrap());
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| kmeans(&points, &cfg).unwrap());
    assert_eq!(serial.assignments, parallel.assignments);
    assert_eq!(serial.objective.to_bits(), parallel.objective.to_bits());
    assert_eq!(serial.restart_index, parallel.restart_index);
}

#[test]
fn hungarian_matches_permutation_search() {
    fn best(cost: &DMatrix<f64>, row: usize, used: &mut [bool]) -> f64 {
        if row == cost.nrows() {
            return 0.0;
        }
        let mut b = f64::INFINITY;
        for c in 0..cost.ncols() {
            if !used[c] {
                used[c] = true;
                b = b.min(cost[(row, c)] + best(cost, row + 1, used));
                used[c] = false;
            }
        }
        b
    }
    let mut rng = rng_from_seed(9);
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(0..20) as f64);
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.cost, best(&cost, 0, &mut vec![false; n]));
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        cols.sort_unstable();
        assert_eq!(cols, (0..n).collect::<Vec<_>>());
    }
}
