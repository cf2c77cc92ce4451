use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robandit::design::support_bound;
use robandit::{build_coreset, compute_design, weighted_norm_sq, ActionSet, ClientModel, Error};

fn unit_vectors(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<DVector<f64>> {
    (0..k)
        .map(|_| {
            let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            v / n
        })
        .collect()
}

/// Points of norm at most one inside a random `r`-dimensional subspace of `R^d`.
fn subspace_vectors(rng: &mut ChaCha8Rng, k: usize, d: usize, r: usize) -> Vec<DVector<f64>> {
    let basis = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = basis.qr().q();
    (0..k)
        .map(|_| {
            let c = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = &q * c;
            let scale: f64 = rng.random_range(0.2..1.0);
            let n = v.norm();
            v * (scale / n)
        })
        .collect()
}

/// `log det` of `M(pi)` restricted to the span, via an explicit orthonormal basis.
fn reduced_logdet(actions: &[DVector<f64>], weights: &[f64], basis: &DMatrix<f64>) -> f64 {
    let r = basis.ncols();
    let mut m = DMatrix::zeros(r, r);
    for (a, &w) in actions.iter().zip(weights) {
        let c = basis.tr_mul(a);
        m.ger(w, &c, &c, 1.0);
    }
    m.determinant().ln()
}

fn orthonormal_span(actions: &[DVector<f64>]) -> DMatrix<f64> {
    let d = actions[0].len();
    let a = DMatrix::from_columns(actions);
    let svd = a.svd(true, false);
    let u = svd.u.unwrap();
    let top = svd.singular_values.max();
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-9 * top.max(1.0))
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Reference D-optimal design by Titterington's multiplicative algorithm, which
/// converges monotonically from the uniform start.
fn multiplicative_design(actions: &[DVector<f64>], basis: &DMatrix<f64>, iters: usize) -> Vec<f64> {
    let k = actions.len();
    let r = basis.ncols() as f64;
    let coords: Vec<DVector<f64>> = actions.iter().map(|a| basis.tr_mul(a)).collect();
    let mut w = vec![1.0 / k as f64; k];
    for _ in 0..iters {
        let mut m = DMatrix::zeros(basis.ncols(), basis.ncols());
        for (c, &wi) in coords.iter().zip(&w) {
            m.ger(wi, c, c, 1.0);
        }
        let inv = m.try_inverse().unwrap();
        for (wi, c) in w.iter_mut().zip(&coords) {
            *wi *= c.dot(&(&inv * c)) / r;
        }
    }
    w
}

fn gvalue_of(actions: &[DVector<f64>], weights: &[f64], basis: &DMatrix<f64>) -> f64 {
    let r = basis.ncols();
    let mut m = DMatrix::zeros(r, r);
    let coords: Vec<DVector<f64>> = actions.iter().map(|a| basis.tr_mul(a)).collect();
    for (c, &w) in coords.iter().zip(weights) {
        m.ger(w, c, c, 1.0);
    }
    let inv = m.try_inverse().unwrap();
    coords.iter().map(|c| c.dot(&(&inv * c))).fold(0.0, f64::max)
}

#[test]
fn golden_design_on_100_unit_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let actions = unit_vectors(&mut rng, 100, 5);
    let set = ActionSet::new(5, actions.clone()).unwrap();
    let design = compute_design(&set, 0.05, 20_000).unwrap();

    assert_eq!(design.effective_dim, 5);
    assert!(design.gvalue <= 5.25, "gvalue {}", design.gvalue);
    assert!(design.support_len() <= 20, "support {}", design.support_len());

    // the reference optimum sits at g = d by Kiefer-Wolfowitz
    let basis = orthonormal_span(&actions);
    let reference = multiplicative_design(&actions, &basis, 20_000);
    let g_ref = gvalue_of(&actions, &reference, &basis);
    assert!((g_ref - 5.0).abs() < 5e-3, "reference g {g_ref}");
    let dense: Vec<f64> = (0..100).map(|i| design.weight(i)).collect();
    let ld = reduced_logdet(&actions, &dense, &basis);
    let ld_ref = reduced_logdet(&actions, &reference, &basis);
    // a (1 + tol) certificate bounds the log-det gap by r * ln(1 + tol)
    assert!(ld >= ld_ref - 5.0 * 1.05f64.ln(), "logdet {ld} vs reference {ld_ref}");
    assert!((gvalue_of(&actions, &dense, &basis) - design.gvalue).abs() < 1e-8);

    // frozen outputs of this implementation on this input
    let support: Vec<usize> = design.support().collect();
    assert_eq!(support, GOLDEN_SUPPORT, "support changed");
    assert!((design.gvalue - GOLDEN_GVALUE).abs() < 1e-9, "gvalue {:?}", design.gvalue);
}

const GOLDEN_SUPPORT: &[usize] = &[2, 6, 8, 16, 32, 43, 46, 52, 56, 62, 68, 80, 84, 86, 90];
const GOLDEN_GVALUE: f64 = 5.213283587606952;

#[test]
fn spec_examples() {
    let basis = ActionSet::from_rows(vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let d = compute_design(&basis, 0.01, 1000).unwrap();
    assert!((d.gvalue - 4.0).abs() < 1e-12);
    for i in 0..4 {
        assert!((d.weight(i) - 0.25).abs() < 1e-12);
    }
    let c = build_coreset(&d, 100, ClientModel::M1, 0.0).unwrap();
    assert_eq!(c.entries, vec![(0, 25), (1, 25), (2, 25), (3, 25)]);
    assert_eq!(c.total, 100);
    let c = build_coreset(&d, 10, ClientModel::M1, 0.0).unwrap();
    assert!(c.entries.iter().all(|&(_, n)| n == 3));
    assert_eq!(c.total, 12);

    let single = ActionSet::from_rows(vec![vec![0.6, 0.8, 0.0]]).unwrap();
    let d = compute_design(&single, 0.01, 1000).unwrap();
    assert_eq!(d.effective_dim, 1);
    assert!((d.gvalue - 1.0).abs() < 1e-12);
    assert_eq!(d.weight(0), 1.0);

    assert!(matches!(build_coreset(&d, 10, ClientModel::M2, 1.0), Err(Error::InvalidNu(_))));
    assert!(matches!(build_coreset(&d, 10, ClientModel::M2, 0.0), Err(Error::InvalidNu(_))));
}

#[test]
fn weighted_norm_matches_reduced_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let b = DMatrix::from_fn(5, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram = &b * b.transpose();
        let a = &b * DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        // oracle: orthonormal basis of the span, then a 3 x 3 LU solve
        let q = b.clone().qr().q();
        let g3 = q.transpose() * &gram * &q;
        let a3 = q.transpose() * &a;
        let x = g3.lu().solve(&a3).unwrap();
        let expected = a3.dot(&x);
        let got = weighted_norm_sq(&a, &gram).unwrap();
        assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
    }
    let outside = DVector::from_vec(vec![0.0, 1.0]);
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
    assert!(matches!(weighted_norm_sq(&outside, &g), Err(Error::OutOfSpan { .. })));
}

#[test]
fn rank_deficient_sets_are_bounded_by_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (d, r) in [(5, 2), (8, 3), (10, 6), (4, 1)] {
        let actions = subspace_vectors(&mut rng, 40, d, r);
        let set = ActionSet::new(d, actions).unwrap();
        let design = compute_design(&set, 0.01, 20_000).unwrap();
        assert_eq!(design.effective_dim, r);
        assert!(design.gvalue <= 2.0 * r as f64);
        assert!(design.gvalue <= 1.01 * r as f64 + 1e-9, "gvalue {} rank {r}", design.gvalue);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn design_invariants(seed in any::<u64>(), d in 2usize..=10, extra in 0usize..=190) {
        let k = (d + extra).min(200);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions: Vec<DVector<f64>> = unit_vectors(&mut rng, k, d)
            .into_iter()
            .map(|v| { let s: f64 = rng.random_range(0.3..=1.0); v * s })
            .collect();
        let set = ActionSet::new(d, actions).unwrap();
        let tol = 0.01;
        let design = compute_design(&set, tol, 20_000).unwrap();
        let total: f64 = design.weights.values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(design.weights.values().all(|&w| w > 0.0));
        let r = design.effective_dim;
        prop_assert!(design.gvalue <= 2.0 * r as f64);
        prop_assert!(design.support_len() <= support_bound(4.0, r));
        if design.converged {
            prop_assert!(design.gvalue <= (1.0 + tol) * r as f64 + 1e-9);
        }
        let recomputed = set.actions().iter()
            .map(|a| weighted_norm_sq(a, &design.gram).unwrap())
            .fold(0.0, f64::max);
        prop_assert!((recomputed - design.gvalue).abs() <= 1e-6 * design.gvalue);
    }

    #[test]
    fn coreset_totals(seed in any::<u64>(), d in 2usize..=6, m in 1u64..5000, nu in 0.001f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = ActionSet::new(d, unit_vectors(&mut rng, 3 * d, d)).unwrap();
        let design = compute_design(&set, 0.01, 20_000).unwrap();
        let k = design.support_len() as u64;

        let c1 = build_coreset(&design, m, ClientModel::M1, 0.0).unwrap();
        prop_assert!(m <= c1.total && c1.total <= m + k);
        prop_assert_eq!(c1.total, c1.entries.iter().map(|e| e.1).sum::<u64>());
        for &(a, n) in &c1.entries {
            prop_assert!(n as f64 >= m as f64 * design.weight(a) - 1e-9);
            prop_assert!((n as f64) < m as f64 * design.weight(a) + 1.0);
        }

        let c2 = build_coreset(&design, m, ClientModel::M2, nu).unwrap();
        let bound = k as f64 + m as f64 * (1.0 + k as f64 * nu);
        prop_assert!(c2.total as f64 <= bound);
        for &(a, n) in &c2.entries {
            let target = m as f64 * design.weight(a).max(nu);
            prop_assert!(n as f64 >= target - 1e-9 && (n as f64) < target + 1.0);
        }
    }
}
