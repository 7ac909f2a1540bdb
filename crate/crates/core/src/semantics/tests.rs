use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lang::{fixtures, parse};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn gauss_term_examples() {
    assert!(close(gauss_density_term(0.0, 0.0, 1.0), 0.398_942_280_401_432_7, 1e-14));
    assert_eq!(gauss_density_term(7.0, -2.0, -3.0), 1.0);
    assert_eq!(gauss_density_term(7.0, -2.0, 0.0), 1.0);
    // N(2; 0, 4) = exp(-1/2) / sqrt(8 pi)
    let want = (-0.5f64).exp() / (8.0 * PI).sqrt();
    assert!(close(gauss_density_term(2.0, 0.0, 4.0), want, 1e-14));
    assert!(close(gauss_density_term(2.0, 0.0, 4.0), 0.12099, 1e-4));
    assert!(close(log_gauss_density_term(2.0, 0.0, 4.0), want.ln(), 1e-14));
}

#[test]
fn single_prior_factor() {
    let p = parse("v0 := 0; v1 := 1; z1 ~ normal(v0, v1)").unwrap();
    assert!(close(log_density(&p, &[0.0]).unwrap(), -0.918_938_533_204_672_7, 1e-14));
    assert_eq!(grad_log_density(&p, &[1.0]).unwrap(), vec![-1.0]);
}

#[test]
fn milky_way_hand_sum() {
    let p = parse(fixtures::MILKY_WAY).unwrap();
    let l = |a, b, c| log_gauss_density_term(a, b, c);
    let want = l(5.0, 5.0, 10.0) + l(10.0, 10.0, 5.0) + l(10.0, 10.0, 2.0) + l(10.0, 10.0, 1.0) + l(3.0, 10.0, 1.0);
    assert!(close(log_density(&p, &[5.0, 10.0, 10.0]).unwrap(), want, 1e-13));
    let m = Model::new(&p).unwrap();
    let lp = m.log_prior(&[5.0, 10.0, 10.0]).unwrap();
    let ll = m.log_likelihood(&[5.0, 10.0, 10.0]).unwrap();
    assert!(close(lp + ll, want, 1e-13));
    assert!(close(ll, l(10.0, 10.0, 1.0) + l(3.0, 10.0, 1.0), 1e-13));
}

#[test]
fn dimension_mismatch() {
    let p = parse(fixtures::MILKY_WAY).unwrap();
    assert_eq!(
        log_density(&p, &[1.0]),
        Err(DensityError::Dimension { expected: 3, found: 1 })
    );
}

#[test]
fn non_finite_reports_command() {
    // z*z is finite, its square overflows at command 4
    let p = parse("a := 0; b := 1; z ~ normal(a, b); y := z * z; w := y * y; obs(normal(w, b), 1)").unwrap();
    assert_eq!(log_density(&p, &[1e100]), Err(DensityError::NonFinite { command: 4 }));
}

#[test]
fn non_positive_variance_factor_is_one() {
    let p = parse("a := 0; b := -2; z ~ normal(a, b); obs(normal(z, b), 4)").unwrap();
    assert_eq!(log_density(&p, &[123.0]).unwrap(), 0.0);
    assert_eq!(grad_log_density(&p, &[123.0]).unwrap(), vec![0.0]);
    let lints = lint(&p);
    assert_eq!(lints.len(), 2);
    assert_eq!(lints[0].command, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        simulate(&p, &mut rng),
        Err(SimulationError::NonPositiveVariance { command: 2, .. })
    ));
}

fn fd_grad(m: &Model, z: &[f64], h: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut a = z.to_vec();
            let mut b = z.to_vec();
            a[i] += h;
            b[i] -= h;
            (m.log_density(&a).unwrap() - m.log_density(&b).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradient_matches_finite_differences_on_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for src in [fixtures::MILKY_WAY, fixtures::MULMOD_EXAMPLE] {
        let m = Model::new(&parse(src).unwrap()).unwrap();
        for _ in 0..10 {
            let (z, _) = m.simulate(&mut rng).unwrap();
            let g = m.grad_log_density(&z).unwrap();
            let n = fd_grad(&m, &z, 1e-5);
            for (a, b) in g.iter().zip(&n) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn cluster_gradient_is_one_sided_across_branch() {
    let m = Model::new(&parse(fixtures::CLUSTERING).unwrap()).unwrap();
    for side in [1e-3, -1e-3] {
        // z3 just above / below the threshold u = 0
        let z = [-2.0, 2.3, side, 0.5, -0.7, 1.1];
        let g = m.grad_log_density(&z).unwrap();
        let n = fd_grad(&m, &z, 1e-5);
        for (a, b) in g.iter().zip(&n) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn simulate_is_seeded() {
    let p = parse("v0 := 0; v1 := 1; z1 ~ normal(v0, v1)").unwrap();
    let a = simulate(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = simulate(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_then_splice_is_consistent() {
    let p = parse(fixtures::MILKY_WAY).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (z, obs) = simulate(&p, &mut rng).unwrap();
    assert_eq!(obs.len(), 2);
    let q = p.with_obs_values(&obs);
    assert_eq!(q.obs_values(), &obs[..]);
    assert!(log_density(&q, &z).unwrap().is_finite());
}

#[test]
fn simulated_prior_mean() {
    let p = parse("m := 5; v := 10; z1 ~ normal(m, v)").unwrap();
    let model = Model::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let mut z = [0.0];
    let mut sum = 0.0;
    for _ in 0..n {
        model.sample_prior(&mut rng, &mut z).unwrap();
        sum += z[0];
    }
    // standard error is sqrt(10 / 1e5) = 0.01
    assert!((sum / n as f64 - 5.0).abs() < 0.05);
}
