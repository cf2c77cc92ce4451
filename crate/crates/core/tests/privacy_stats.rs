use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robandit::env::{observe_batch_m1, observe_batch_m2};
use robandit::privacy::laplace_quantile;
use robandit::rng::SeedTree;
use robandit::{
    privatize_m1, privatize_m2, sample_laplace, ActionSet, AdversaryConfig, BanditInstance, ClientModel, Coreset,
    NoiseKind, PrivacyParams,
};
use robandit::nalgebra::DVector;

fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// One-sample Kolmogorov-Smirnov statistic against `Laplace(0, scale)`.
fn ks_statistic(mut xs: Vec<f64>, scale: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = laplace_cdf(x, scale);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn quantile(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[((xs.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn m1_noise_is_laplace_with_scale_two_over_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for eps in [0.5, 1.0, 4.0] {
        let p = PrivacyParams::new(eps).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| privatize_m1(0.3, &p, &mut rng) - 0.3).collect();
        let d = ks_statistic(xs, 2.0 / eps);
        assert!(d < ks_critical(20_000), "eps {eps}: D = {d}");
    }
}

#[test]
fn m2_noise_is_laplace_with_scale_shrinking_in_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let p = PrivacyParams::new(1.0).unwrap();
    for n_a in [1u64, 10, 400] {
        let xs: Vec<f64> = (0..20_000).map(|_| privatize_m2(-0.2, n_a, &p, &mut rng) + 0.2).collect();
        let d = ks_statistic(xs, 2.0 / n_a as f64);
        assert!(d < ks_critical(20_000), "n_a {n_a}: D = {d}");
    }
}

#[test]
fn wrong_scale_is_rejected_by_the_same_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let xs: Vec<f64> = (0..20_000).map(|_| sample_laplace(2.0, &mut rng)).collect();
    assert!(ks_statistic(xs, 2.4) > ks_critical(20_000));
}

#[test]
fn variance_and_iqr_follow_the_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let draw = |eps: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let p = PrivacyParams::new(eps).unwrap();
        (0..100_000).map(|_| privatize_m1(0.0, &p, rng)).collect()
    };
    let a = draw(1.0, &mut rng);
    let b = draw(2.0, &mut rng);
    let var = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
    // Var Lap(b) = 2 b^2 = 8
    assert!((var - 8.0).abs() / 8.0 < 0.05, "{var}");
    let iqr = |v: Vec<f64>| quantile(v.clone(), 0.75) - quantile(v, 0.25);
    let (ia, ib) = (iqr(a), iqr(b));
    // IQR of Lap(b) is 2 b ln 2
    assert!((ia - 4.0 * 2f64.ln()).abs() / ia < 0.03, "{ia}");
    assert!((ia / ib - 2.0).abs() < 0.1, "{}", ia / ib);
}

#[test]
fn quantile_function_matches_closed_form() {
    assert_eq!(laplace_quantile(0.5, 3.0), 0.0);
    assert!((laplace_quantile(0.75, 1.0) - 2f64.ln()).abs() < 1e-15);
    assert!((laplace_quantile(0.25, 2.0) + 2.0 * 2f64.ln()).abs() < 1e-15);
    for u in [0.01, 0.2, 0.6, 0.99] {
        assert!((laplace_cdf(laplace_quantile(u, 1.7), 1.7) - u).abs() < 1e-12);
    }
}

#[test]
fn disabled_mechanisms_are_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = PrivacyParams::disabled();
    assert_eq!(privatize_m1(123.5, &p, &mut rng), 123.5);
    assert_eq!(privatize_m2(-7.0, 3, &p, &mut rng), -7.0);
}

#[test]
fn clipping_bounds_the_input_and_widens_the_scale() {
    let p = PrivacyParams::new(1.0).unwrap().with_clip(2.0).unwrap();
    assert_eq!(p.sensitivity(), 4.0);
    assert_eq!(p.scale_m1(), 4.0);
    assert_eq!(p.scale_m2(8), 0.5);
    assert_eq!(p.clip_reward(50.0), 2.0);
    assert_eq!(p.clip_reward(-50.0), -2.0);
    assert_eq!(p.clip_reward(1.5), 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let xs: Vec<f64> = (0..20_000).map(|_| privatize_m1(50.0, &p, &mut rng) - 2.0).collect();
    assert!(ks_statistic(xs, 4.0) < ks_critical(20_000));
    assert!(PrivacyParams::new(1.0).unwrap().with_clip(0.0).is_err());
    assert!(PrivacyParams::new(0.0).is_err());
    assert!(PrivacyParams::new(f64::NAN).is_err());
}

fn zero_noise_instance() -> BanditInstance {
    let actions = ActionSet::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    BanditInstance::new(DVector::from_vec(vec![0.25, -0.5]), actions, NoiseKind::Zero).unwrap()
}

#[test]
fn environment_m1_reports_carry_the_per_reward_noise() {
    let inst = zero_noise_instance();
    let coreset = Coreset {
        entries: vec![(0, 10_000)],
        total: 10_000,
        model: ClientModel::M1,
        nu: None,
    };
    let p = PrivacyParams::new(2.0).unwrap();
    let obs = observe_batch_m1(&inst, &coreset, &AdversaryConfig::none(), &p, &SeedTree::new(5)).unwrap();
    let xs: Vec<f64> = obs.iter().map(|o| o.reported_reward - 0.25).collect();
    assert!(ks_statistic(xs, 1.0) < ks_critical(10_000));
}

#[test]
fn environment_m2_reports_carry_the_aggregate_noise() {
    let inst = zero_noise_instance();
    let coreset = Coreset {
        entries: vec![(1, 50)],
        total: 50,
        model: ClientModel::M2,
        nu: Some(0.01),
    };
    let p = PrivacyParams::new(1.0).unwrap();
    let root = SeedTree::new(6);
    let xs: Vec<f64> = (0..5_000)
        .map(|r| {
            let obs = observe_batch_m2(&inst, &coreset, &AdversaryConfig::none(), &p, &root.child("r", r)).unwrap();
            assert_eq!(obs.len(), 1);
            assert_eq!(obs[0].count, 50);
            obs[0].reported_reward + 0.5
        })
        .collect();
    assert!(ks_statistic(xs, 2.0 / 50.0) < ks_critical(5_000));
}

/// Two-sample KS statistic.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn noise_does_not_depend_on_the_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let p = PrivacyParams::new(1.0).unwrap();
    let n = 10_000;
    let samples: Vec<Vec<f64>> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&r| (0..n).map(|_| privatize_m1(r, &p, &mut rng) - r).collect())
        .collect();
    // two-sample critical value at 0.01 with equal sizes
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    for i in 0..3 {
        for j in i + 1..3 {
            let d = ks_two_sample(samples[i].clone(), samples[j].clone());
            assert!(d < critical, "{i} vs {j}: {d}");
        }
    }
}
